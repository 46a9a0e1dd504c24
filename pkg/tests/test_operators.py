import numpy as np
import pytest

from voltbridge import kernels as kn
from voltbridge import operators as op
from voltbridge.errors import DimensionError, DomainError
from voltbridge.suites import adjoint_balance_defect, asymptotic_defects, kstar_agreement


def setup(H, n):
    g = kn.make_grid(1.0, n)
    dk = kn.fbm_discrete_kernel(H, g)
    return g, dk, kn.quadratic_variation(dk), kn.prediction_kernel(dk)


@pytest.fixture(scope="module")
def bm64():
    return setup(0.5, 64)


@pytest.fixture(scope="module")
def fbm64():
    return setup(0.75, 64)


# eta ---------------------------------------------------------------------------------

def test_eta_kills_constants(fbm64):
    qv = fbm64[2]
    assert np.max(np.abs(op.eta_matrix(qv).apply(np.full(64, 2.5)))) < 1e-14


def test_eta_indicator_brownian():
    g = kn.make_grid(1.0, 64)
    qv = kn.brownian_qv(g)
    f = (np.arange(64) < 16).astype(float)
    assert np.allclose(op.eta_matrix(qv).apply(f), f - 0.25, atol=1e-14)


def test_eta_idempotent(fbm64):
    E = op.eta_matrix(fbm64[2]).matrix
    assert np.linalg.norm(E @ E - E, 2) < 1e-12


# Hardy operators ------------------------------------------------------------------------

@pytest.mark.parametrize("i", [1, 2])
def test_hardy_constant(fbm64, i):
    assert np.allclose(op.hardy_matrix(fbm64[2], i).apply(np.ones(64)), 1.0, atol=1e-14)


def test_hardy1_indicator_brownian():
    g = kn.make_grid(1.0, 256)
    qv = kn.brownian_qv(g)
    t = 0.25
    f = (g.midpoints < t).astype(float)
    out = op.hardy_matrix(qv, 1).apply(f)
    s = g.nodes[1:]  # H^1 averages up to the right node of each cell
    assert np.allclose(out, np.where(s <= t, 1.0, t / s), atol=1e-14)


@pytest.mark.parametrize("H", [0.5, 0.75, 0.3])
@pytest.mark.parametrize("i", [1, 2])
def test_adjoint_balance_exact(H, i):
    for n in (8, 64, 512):
        assert adjoint_balance_defect(setup(H, n)[2], i) < 1e-12


@pytest.mark.parametrize("i", [1, 2])
def test_hardy_norm_bound(i):
    for H in (0.5, 0.75, 0.25):
        assert op.hardy_matrix(setup(H, 256)[2], i).weighted_norm() <= 2.1


def test_hardy_index():
    with pytest.raises(DomainError):
        op.hardy_matrix(kn.brownian_qv(kn.make_grid(1.0, 4)), 3)


# alpha / beta ---------------------------------------------------------------------------

@pytest.mark.parametrize("mode", op.MODES)
@pytest.mark.parametrize("i", [1, 2])
def test_alpha_kills_constants_and_beta_zero_mean(fbm64, mode, i):
    a, b = op.alpha_beta_m(fbm64[2], i, mode)
    assert np.max(np.abs(a.apply(np.full(64, -1.7)))) < 1e-12
    assert b.zero_mean_defect() < 1e-12


def test_beta1_indicator_brownian():
    g = kn.make_grid(1.0, 1024)
    qv = kn.brownian_qv(g)
    _, b = op.alpha_beta_m(qv, 1)
    t_idx = 512
    out = b.apply((np.arange(1024) < t_idx).astype(float))
    s = g.nodes[1:]
    exact = np.where(np.arange(1024) < t_idx, 1.0 - np.log(0.5 / s), 0.0)
    # node resolution: the discrete log differs from ln(t/s) by at most one cell ratio
    below = np.arange(1024) < t_idx
    assert np.all(np.abs(out - exact)[below] <= 2 * g.cell_weights[below] / g.midpoints[below])
    assert np.all(out[t_idx:] == 0.0)


def test_alpha2_indicator_vanishes_beyond_t(fbm64):
    a, _ = op.alpha_beta_m(fbm64[2], 2, "analytic")
    for t in range(1, 65):
        assert not np.any(op.conjugated_image(a, t)[t:])


def test_consistent_mode_inverse(fbm64):
    qv = fbm64[2]
    for i in (1, 2):
        a, b = op.alpha_beta_m(qv, i, "consistent")
        assert np.max(np.abs(b.matrix @ a.matrix - op.eta_matrix(qv).matrix)) < 1e-10


def test_unknown_mode(bm64):
    with pytest.raises(DomainError):
        op.alpha_beta_m(bm64[2], 1, "exact")


# kappa ----------------------------------------------------------------------------------

@pytest.mark.parametrize("H", [0.25, 0.5, 0.75])
def test_kappa_examples(H):
    g, _, qv, pk = setup(H, 64)
    kap = op.kappa_matrix(pk, qv)
    assert np.allclose(kap.to_m(np.ones(64)), 1.0, atol=1e-12)
    assert np.allclose(kap.to_x(np.full(64, 3.0)), 3.0, atol=1e-9)
    if H == 0.5:
        assert np.array_equal(kap.forward, np.eye(64))


def test_kappa_terminal_indicator(fbm64):
    _, _, qv, pk = fbm64
    G = op.indicator_matrix(64)
    assert np.allclose(op.kappa_matrix(pk, qv).to_m(G[:, -1]), 1.0, atol=1e-12)


def test_kappa_grid_mismatch(fbm64):
    _, _, qv, _ = fbm64
    _, _, _, pk = setup(0.75, 32)
    with pytest.raises(DimensionError):
        op.kappa_matrix(pk, qv)


def test_alpha_beta_x_brownian(bm64):
    _, _, qv, pk = bm64
    for i in (1, 2):
        am, bm = op.alpha_beta_m(qv, i)
        ax, bx = op.alpha_beta_x(pk, qv, i)
        assert np.allclose(am.matrix, ax.matrix, atol=1e-14)
        assert np.allclose(bm.matrix, bx.matrix, atol=1e-14)


@pytest.mark.parametrize("H", [0.25, 0.75])
def test_alpha_x_kills_constants_and_beta_x2_constancy(H):
    g, _, qv, pk = setup(H, 64)
    ax, _ = op.alpha_beta_x(pk, qv, 1)
    assert np.max(np.abs(ax.apply(np.ones(64)))) < 1e-9
    _, bx2 = op.alpha_beta_x(pk, qv, 2)
    for t in (8, 32, 57):
        assert np.ptp(op.conjugated_image(bx2, t)[t:]) < 1e-9


def test_alpha_x2_indicator_vanishes_beyond_t(fbm64):
    _, _, qv, pk = fbm64
    ax2, _ = op.alpha_beta_x(pk, qv, 2)
    for t in (5, 30, 63):
        assert np.max(np.abs(op.conjugated_image(ax2, t)[t:])) < 1e-9


# explicit formulas --------------------------------------------------------------------

def test_explicit_brownian_matches_m_operators(bm64):
    g, _, qv, pk = bm64
    ks = kn.fbm_kstar_matrix(0.5, g)
    for i in (1, 2):
        am, bm = op.alpha_beta_m(qv, i)
        for t in range(1, 65):
            assert np.max(np.abs(op.explicit_alpha_beta_x(pk, qv, ks, i, t, "beta")
                                 - op.conjugated_image(bm, t))) < 1e-10
            assert np.max(np.abs(op.explicit_alpha_beta_x(pk, qv, ks, i, t, "alpha")
                                 - op.conjugated_image(am, t))) < 1e-10


def test_explicit_with_lu_columns_is_exact(fbm64):
    g, _, qv, pk = fbm64
    kap = op.kappa_matrix(pk, qv)
    ks_lu = np.vstack([np.zeros(64), np.cumsum(kap.inverse.T, axis=0)])
    for i in (1, 2):
        a, b = op.alpha_beta_x(pk, qv, i, kap=kap)
        for t in (7, 40, 64):
            assert np.allclose(op.explicit_alpha_beta_x(pk, qv, ks_lu, i, t, "beta"),
                               op.conjugated_image(b, t), atol=1e-9)
            assert np.allclose(op.explicit_alpha_beta_x(pk, qv, ks_lu, i, t, "alpha"),
                               op.conjugated_image(a, t), atol=1e-9)


def test_explicit_beta2_zero_mean_at_T(fbm64):
    g, _, qv, pk = fbm64
    kap = op.kappa_matrix(pk, qv)
    ks = kn.fbm_kstar_matrix(0.75, g)
    f = op.explicit_alpha_beta_x(pk, qv, ks, 2, 64, "beta")
    # zero mean on the M side: sum_j (kappa f)_j delta_j
    assert abs(kap.to_m(f) @ qv.increments) < 0.05


def test_kstar_and_explicit_gaps_shrink():
    gaps = np.array([kstar_agreement(0.75, n) for n in (64, 128, 256)])
    assert np.all(np.diff(gaps[:, 0]) < 0) and np.all(np.diff(gaps[:, 1]) < 0)


# refinement -----------------------------------------------------------------------------

def test_inverse_residual_shrinks():
    for H in (0.5, 0.75):
        inv, _ = asymptotic_defects(H, 1, levels=(64, 128, 256))
        assert np.all(inv[:-1] / inv[1:] >= 1.5)


def test_eta_transport_shrinks():
    gaps = []
    for n in (64, 128, 256):
        g, _, qv, pk = setup(0.75, n)
        gaps.append(np.linalg.norm(op.eta_x(kn.fbm_covariance_matrix(0.75, g.nodes), qv).matrix
                                   - op.eta_m_conjugated(pk, qv).matrix, 2))
    assert gaps[0] > gaps[1] > gaps[2]
