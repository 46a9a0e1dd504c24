import mpmath as mp
import numpy as np
import pytest

from voltbridge import kernels as kn
from voltbridge.errors import DegenerateKernelError, DimensionError, DomainError, SchemaError

# k*(0.5, 0.25) for H = 0.75, T = 1, frozen from an mpmath tanh-sinh evaluation
KSTAR_GOLDEN = 1.2870507705219252


def kstar_oracle(H, T, t, s):
    with mp.workdps(30):
        f = lambda u: u ** (H - 0.5) * (u - t) ** (H - 0.5) / (u - s)
        integral = mp.quad(f, [t, t + (T - t) * 1e-3, T])
        fac = mp.sin(mp.pi * (H - 0.5)) / mp.pi
        return float(1 + fac * s ** (0.5 - H) * (t - s) ** (0.5 - H) * integral)


# grids ------------------------------------------------------------------------

def test_uniform_grid():
    g = kn.make_grid(1.0, 4)
    assert np.array_equal(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert np.array_equal(kn.make_grid(2.0, 2).cell_weights, [1.0, 1.0])
    assert abs(g.cell_weights.sum() - 1.0) < 1e-12


def test_refine_keeps_nodes():
    g = kn.make_grid(1.0, 4)
    r = g.refine()
    assert r.n == 8 and np.all(np.isin(g.nodes, r.nodes))


def test_grid_validation():
    with pytest.raises(DomainError):
        kn.TimeGrid(np.array([0.0, 0.5, 0.5]))
    with pytest.raises(DomainError):
        kn.make_grid(-1.0, 4)
    with pytest.raises(DomainError):
        kn.make_grid(1.0, 8).index_of(0.3)


def test_subgrid_eight_interior_nodes():
    sub = kn.make_grid(1.0, 256).subgrid()
    assert sub.size == 8 and sub.min() > 0 and sub.max() < 256


# closed forms -------------------------------------------------------------------

def test_fbm_kernel_half_is_indicator():
    t = np.array([0.7, 0.7, 0.7])
    s = np.array([0.1, 0.5, 0.9])
    assert np.array_equal(kn.fbm_kernel(0.5, t, s), [1.0, 1.0, 0.0])


def test_fbm_kernel_unit_variance():
    H = 0.75
    val = mp.quad(lambda u: kn.fbm_kernel(H, 1.0, float(u)) ** 2, [0, 0.5, 1])
    assert float(val) == pytest.approx(1.0, rel=1e-6)


@pytest.mark.parametrize("H, s, t, expected", [(0.5, 0.3, 0.7, 0.3), (0.75, 0.5, 1.0, 0.5),
                                               (0.25, 0.0, 0.6, 0.0)])
def test_fbm_covariance_examples(H, s, t, expected):
    assert kn.fbm_covariance(H, s, t) == pytest.approx(expected, abs=1e-15)


def test_hurst_range():
    with pytest.raises(DomainError):
        kn.fbm_discrete_kernel(1.2, kn.make_grid(1.0, 8))


# discretization -----------------------------------------------------------------

def test_half_kernel_lower_triangular_ones():
    dk = kn.fbm_discrete_kernel(0.5, kn.make_grid(1.0, 4))
    assert np.array_equal(dk.values, np.tril(np.ones((5, 4)), k=-1))


def test_zero_kernel():
    g = kn.make_grid(1.0, 4)
    dk = kn.discretize_kernel(lambda t, s: np.zeros(np.broadcast(t, s).shape), g)
    assert not dk.values.any()
    assert not kn.covariance_from_kernel(dk).any()


def test_h025_rows_peak_at_diagonal():
    dk = kn.fbm_discrete_kernel(0.25, kn.make_grid(1.0, 32))
    for i in range(2, 33):
        assert np.argmax(np.abs(dk.values[i, :i])) == i - 1


def test_volterra_zero_pattern():
    for ep in ("midpoint", "rms"):
        dk = kn.fbm_discrete_kernel(0.3, kn.make_grid(1.0, 16), ep)
        assert not np.triu(dk.values[:16], k=0).any()
    # left nodes hit the s = 0 singularity unless H = 1/2
    with pytest.raises(DomainError):
        kn.fbm_discrete_kernel(0.3, kn.make_grid(1.0, 16), "left")


def test_left_evaluation_exact_for_brownian():
    g = kn.make_grid(1.0, 64)
    R = kn.covariance_from_kernel(kn.fbm_discrete_kernel(0.5, g, "left"))
    assert np.max(np.abs(R - np.minimum.outer(g.nodes, g.nodes))) < 1e-12


def test_covariance_h075_n512():
    g = kn.make_grid(1.0, 512)
    R = kn.covariance_from_kernel(kn.fbm_discrete_kernel(0.75, g))
    sub = g.subgrid()
    target = kn.fbm_covariance_matrix(0.75, g.nodes[sub])
    off = ~np.eye(sub.size, dtype=bool)
    assert np.max(np.abs(R[np.ix_(sub, sub)] - target)[off] / target[off]) < 0.02


def test_covariance_is_psd():
    g = kn.make_grid(1.0, 128)
    R = kn.covariance_from_kernel(kn.fbm_discrete_kernel(0.25, g))
    assert np.allclose(R, R.T)
    np.linalg.cholesky(R[1:, 1:] + 1e-10 * np.trace(R) / 128 * np.eye(128))


# quadratic variation ----------------------------------------------------------------

def test_qv_brownian_is_time():
    g = kn.make_grid(1.0, 64)
    qv = kn.quadratic_variation(kn.fbm_discrete_kernel(0.5, g))
    assert np.allclose(qv.cumulative, g.nodes, atol=1e-15)


def test_qv_h075_total():
    qv = kn.quadratic_variation(kn.fbm_discrete_kernel(0.75, kn.make_grid(1.0, 512)))
    assert abs(qv.total - 1.0) < 0.02
    assert np.all(np.diff(qv.cumulative) > 0)


def test_qv_head_tail_conventions():
    qv = kn.brownian_qv(kn.make_grid(1.0, 4))
    assert np.allclose(qv.head, [0.25, 0.5, 0.75, 1.0])
    assert np.allclose(qv.tail, [1.0, 0.75, 0.5, 0.25])


def test_qv_rejects_flat_cells():
    g = kn.make_grid(1.0, 4)
    with pytest.raises(DegenerateKernelError):
        kn.QuadraticVariation(g, np.array([0.25, 0.0, 0.25, 0.25]))


# prediction kernel ------------------------------------------------------------------

def test_prediction_kernel_properties():
    g = kn.make_grid(1.0, 32)
    pk = kn.prediction_kernel(kn.fbm_discrete_kernel(0.75, g))
    assert np.allclose(pk.values[-1], 1.0)
    assert not pk.values[0].any()
    again = kn.prediction_kernel(pk)
    assert np.allclose(again.values, pk.values, rtol=1e-15)


def test_prediction_kernel_brownian():
    pk = kn.prediction_kernel(kn.fbm_discrete_kernel(0.5, kn.make_grid(1.0, 8)))
    assert np.array_equal(pk.values, np.tril(np.ones((9, 8)), k=-1))


# k* -----------------------------------------------------------------------------

def test_kstar_terminal_row_is_one():
    assert kn.fbm_kstar(0.75, 1.0, 1.0, np.array([0.1, 0.5, 0.99])) == pytest.approx([1, 1, 1])


def test_kstar_brownian_indicator():
    assert kn.fbm_kstar(0.5, 1.0, 0.5, np.array([0.2, 0.7])) == pytest.approx([1.0, 0.0])


def test_kstar_golden():
    assert kn.fbm_kstar(0.75, 1.0, 0.5, 0.25) == pytest.approx(KSTAR_GOLDEN, abs=1e-8)
    assert kstar_oracle(0.75, 1.0, 0.5, 0.25) == pytest.approx(KSTAR_GOLDEN, abs=1e-8)


@pytest.mark.parametrize("H, t, s", [(0.25, 0.5, 0.25), (0.75, 0.9, 0.05), (0.6, 0.3, 0.29), (0.35, 0.1, 0.01)])
def test_kstar_against_oracle(H, t, s):
    assert kn.fbm_kstar(H, 1.0, t, s) == pytest.approx(kstar_oracle(H, 1.0, t, s), abs=1e-8)


# CSV ---------------------------------------------------------------------------------

def test_kernel_csv_roundtrip(tmp_path):
    g = kn.make_grid(1.0, 8)
    dk = kn.fbm_discrete_kernel(0.3, g)
    kn.write_kernel_csv(tmp_path / "k.csv", dk)
    back = kn.read_kernel_csv(tmp_path / "k.csv", g)
    assert np.array_equal(back.values, dk.values)


def test_kernel_csv_schema(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n0,0,1\n")
    with pytest.raises(SchemaError):
        kn.read_kernel_csv(p, kn.make_grid(1.0, 4))
    p.write_text("i,j,value\n9,0,1\n")
    with pytest.raises(SchemaError):
        kn.read_kernel_csv(p, kn.make_grid(1.0, 4))


def test_kernel_shape_checked():
    with pytest.raises(DimensionError):
        kn.DiscreteKernel(kn.make_grid(1.0, 4), np.zeros((4, 4)))
