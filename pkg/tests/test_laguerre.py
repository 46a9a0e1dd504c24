import math
import warnings

import numpy as np
import pytest
from scipy import integrate
from scipy.special import eval_laguerre

from voltbridge import kernels as kn
from voltbridge import laguerre as lg
from voltbridge.errors import DomainError, TruncationWarning
from voltbridge.simulate import PathEnsemble, cumulative_paths, sample_increments
from voltbridge.specfun import laguerre_tail


def two_sided(T_max=64.0, per_doubling=32, depth=16, n_paths=2000, seed=21):
    g = lg.make_two_sided_grid(1.0, T_max, per_doubling * depth, int(per_doubling * math.log2(T_max)), depth=depth)
    M = PathEnsemble(g, "bm", cumulative_paths(sample_increments(g, n_paths, seed)))
    return g, kn.brownian_qv(g), M


@pytest.fixture(scope="module")
def small():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        return two_sided()


# grid --------------------------------------------------------------------------------

def test_two_sided_grid_nodes():
    g = lg.make_two_sided_grid(1.0, 64.0, 96, 60, depth=12)
    assert g.horizon == 64.0 and g.index_of(1.0) == 97 and g.index_of(0.5) > 0
    u = lg.make_two_sided_grid(2.0, 8.0, 10, 5, inner="uniform")
    assert np.allclose(u.nodes[:11], np.linspace(0, 2, 11))


def test_two_sided_grid_validation():
    with pytest.raises(DomainError):
        lg.make_two_sided_grid(2.0, 1.0, 4, 4)
    with pytest.raises(DomainError):
        lg.make_two_sided_grid(1.0, 2.0, 4, 4, inner="chebyshev")


# coefficients --------------------------------------------------------------------------

def test_seven_coefficients_and_eps0(small):
    g, qv, M = small
    iT = g.index_of(1.0)
    co = lg.epsilon_coefficients(M, qv, iT, 3, 3)
    assert co.values.shape == (M.n_paths, 7) and co.orders == tuple(range(-3, 4))
    assert np.array_equal(co[0], M.paths[:, iT] / math.sqrt(qv.cumulative[iT]))
    assert co.truncation_ratio == pytest.approx(1 / 64)


def test_zero_path_zero_coefficients():
    g = lg.make_two_sided_grid(1.0, 64.0, 64, 32)
    Z = PathEnsemble(g, "zero", np.zeros((3, g.n + 1)))
    co = lg.epsilon_coefficients(Z, kn.brownian_qv(g), g.index_of(1.0), 3, 3)
    assert not co.values.any()
    assert not lg.reconstruct_value(co, 10, 3).any()


def test_tail_mass_oracle():
    x_max = math.log(64.0)
    for m in (1, 2, 3, 5):
        oracle, _ = integrate.quad(lambda x: eval_laguerre(m - 1, x) ** 2 * math.exp(-x), x_max, np.inf)
        assert lg.negative_tail_mass(m, x_max) == pytest.approx(oracle, rel=1e-10)
    assert lg.negative_tail_mass(1, x_max) == pytest.approx(1 / 64)


def test_truncation_warning():
    g = lg.make_two_sided_grid(1.0, 4.0, 32, 8)
    Z = PathEnsemble(g, "zero", np.zeros((1, g.n + 1)))
    with pytest.warns(TruncationWarning):
        lg.epsilon_coefficients(Z, kn.brownian_qv(g), g.index_of(1.0), 1, 1)


def test_split_must_be_interior():
    g = lg.make_two_sided_grid(1.0, 4.0, 8, 8)
    Z = PathEnsemble(g, "zero", np.zeros((1, g.n + 1)))
    with pytest.raises(DomainError):
        lg.epsilon_coefficients(Z, kn.brownian_qv(g), 0, 1, 1)


# reconstruction ---------------------------------------------------------------------------

def test_reconstruction_at_T(small):
    g, qv, M = small
    iT = g.index_of(1.0)
    co = lg.epsilon_coefficients(M, qv, iT, 3, 0)
    for N in (0, 1, 3):
        assert np.array_equal(lg.reconstruct_value(co, iT, N), M.paths[:, iT])


def test_parseval_tail_oracle():
    g = lg.make_two_sided_grid(1.0, 64.0, 64, 32, depth=8)
    qv = kn.brownian_qv(g)
    iT, it = g.index_of(1.0), g.index_of(0.5)
    y = math.log(2.0)
    zeta = []
    for n in range(17):
        val, _ = integrate.quad(lambda x: eval_laguerre(n, x) * math.exp(-x), y, np.inf, limit=400)
        zeta.append(val)
    for N in (0, 2, 4, 8, 16):
        # sum over all n of zeta_n(y)^2 is |1_[y, inf)|^2 = e^{-y}
        oracle = math.exp(-y) - sum(z * z for z in zeta[: N + 1])
        assert lg.parseval_target(qv, iT, it, N) == pytest.approx(oracle, abs=1e-6)


def test_reconstruction_mse_decreases(small):
    g, qv, M = small
    iT, it = g.index_of(1.0), g.index_of(0.5)
    co = lg.epsilon_coefficients(M, qv, iT, 16, 0)
    mse = [np.mean((M.paths[:, it] - lg.reconstruct_value(co, it, N)) ** 2) for N in (0, 2, 4, 8, 16)]
    assert np.all(np.diff(mse) <= 0)


# functional expansion ----------------------------------------------------------------------

def test_indicator_coefficients_are_zeta(small):
    g, qv, M = small
    iT, it = g.index_of(1.0), g.index_of(0.5)
    co = lg.epsilon_coefficients(M, qv, iT, 8, 2)
    fe = lg.expand_functional((np.arange(g.n) < it).astype(float), co)
    for n in range(9):
        assert fe.coefficient(n) == pytest.approx(laguerre_tail(n, math.log(2.0)), abs=1e-12)


def test_future_support_has_no_past_coefficients(small):
    g, qv, M = small
    iT = g.index_of(1.0)
    co = lg.epsilon_coefficients(M, qv, iT, 4, 4)
    f = (np.arange(g.n) >= iT) * np.cos(np.arange(g.n))
    for rule in lg.RULES:
        fe = lg.expand_functional(f, co, rule=rule)
        assert all(fe.coefficient(n) == 0.0 for n in range(5))


def test_parseval_indicator(small):
    g, qv, M = small
    iT = g.index_of(1.0)
    co = lg.epsilon_coefficients(M, qv, iT, 16, 0)
    fe = lg.expand_functional((np.arange(g.n) < iT).astype(float), co, rule="point")
    assert abs(np.sum(fe.c ** 2) - 1.0) < 0.02


def test_partial_sums_converge_to_z(small):
    g, qv, M = small
    iT = g.index_of(1.0)
    co = lg.epsilon_coefficients(M, qv, iT, 12, 0)
    fe = lg.expand_functional((np.arange(g.n) < iT).astype(float), co, paths=M)
    assert np.allclose(fe.exact, M.paths[:, iT])
    err = np.mean((fe.partial - fe.exact[:, None]) ** 2, axis=0)
    assert err[-1] < 1e-20


# iterates --------------------------------------------------------------------------------

def test_iterates_consistent_exact(small):
    g, qv, M = small
    iT = g.index_of(1.0)
    assert lg.iterate_transform_check(M, qv, iT, 0) == 0.0
    for n in (1, -1, -2):
        assert lg.iterate_transform_check(M, qv, iT, n, "consistent") < 1e-9


def test_iterate_depth_limit(small):
    g, qv, M = small
    with pytest.raises(DomainError):
        lg.iterate_transform_check(M, qv, g.index_of(1.0), 5)


# orthonormality and reports -------------------------------------------------------------------

def test_orthonormality():
    rows = lg.orthonormality_rows(10)
    assert len(rows) == 21 * 21
    assert max(abs(r.value - r.target) for r in rows) < 1e-10


def test_csv_outputs(tmp_path, small):
    g, qv, M = small
    co = lg.epsilon_coefficients(PathEnsemble(g, "bm", M.paths[:2]), qv, g.index_of(1.0), 1, 1)
    lg.write_coefficients_csv(tmp_path / "c.csv", co)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "path_id,n,value" and len(lines) == 1 + 2 * 3
    lg.write_report_csv(tmp_path / "r.csv", lg.orthonormality_rows(1))
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "n,m,value,target"
