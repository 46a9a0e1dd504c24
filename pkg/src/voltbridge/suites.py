"""Named verification suites with shipped seeds.

Each suite returns a :class:`~voltbridge.stats.ComparisonReport`.  Exact
identities are recorded with explicit tolerances, Monte Carlo comparisons
with the max(3 SE, floor) rule, and refinement studies as monotone or ratio
checks.  Every random input comes from a fixed seed below, so the pass/fail
set is bit-stable and does not depend on the thread count.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable

import numpy as np

from . import kernels as kn
from . import laguerre as lg
from . import operators as op
from . import transforms as tr
from .errors import TruncationWarning
from .simulate import (PathEnsemble, cumulative_paths, sample_increments, synthesize_cholesky,
                       synthesize_from_kernel)
from .stats import (ComparisonReport, compare_covariance, correlation_with, empirical_covariance,
                    halving_ratios, ks_normality)

SEEDS = {
    "cov_mc": 101,
    "cholesky": 102,
    "transforms_bm": 11,
    "transforms_fbm25": 12,
    "transforms_fbm75": 13,
    "prediction": 5,
    "roundtrip": 5,
    "laguerre": 21,
    "iterate": 3,
}
MC_PATHS = 10_000
HURSTS = (0.25, 0.5, 0.75)
LEVELS = (64, 128, 256, 512)

# Laguerre verification grid: 64 cells per doubling of <M> on both sides
LAG_T = 1.0
LAG_TMAX = 2.0 ** 16
LAG_DEPTH = 24
LAG_PER_DOUBLING = 64


def _rel_offdiag(est: np.ndarray, target: np.ndarray) -> float:
    mask = ~np.eye(est.shape[0], dtype=bool)
    return float(np.max(np.abs(est[mask] - target[mask]) / np.abs(target[mask])))


def _fbm_setup(H: float, n: int, T: float = 1.0):
    g = kn.make_grid(T, n)
    dk = kn.fbm_discrete_kernel(H, g)
    qv = kn.quadratic_variation(dk)
    return g, dk, qv, kn.prediction_kernel(dk)


def _nested_increments(n: int, n_paths: int, seed: int, n_fine: int = 512, threads: int = 1) -> np.ndarray:
    """Brownian increments of one fixed fine path ensemble, summed down to n cells."""
    fine = sample_increments(kn.make_grid(1.0, n_fine), n_paths, seed, threads)
    return fine.reshape(n_paths, n, n_fine // n).sum(axis=2)


def _decreasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < 0))


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------

def covariance_quadrature_error(H: float, n: int, eval_point: str = "rms") -> float:
    """Max relative off-diagonal error of the quadrature covariance on the subgrid."""
    g = kn.make_grid(1.0, n)
    R = kn.covariance_from_kernel(kn.fbm_discrete_kernel(H, g, eval_point))
    sub = g.subgrid()
    return _rel_offdiag(R[np.ix_(sub, sub)], kn.fbm_covariance_matrix(H, g.nodes[sub]))


def suite_covariance(threads: int = 1) -> ComparisonReport:
    rep = ComparisonReport(k=3.0, floor=0.05)
    for H, tol in ((0.25, 0.05), (0.5, 0.02), (0.75, 0.02)):
        err = covariance_quadrature_error(H, 512)
        rep.add(f"quadrature covariance H={H} n=512", err, 0.0, tol=tol)
    g = kn.make_grid(1.0, 512)
    R_left = kn.covariance_from_kernel(kn.fbm_discrete_kernel(0.5, g, "left"))
    rep.add("H=0.5 left evaluation exact", np.max(np.abs(R_left - np.minimum.outer(g.nodes, g.nodes))),
            0.0, tol=1e-12)
    qv = kn.quadratic_variation(kn.fbm_discrete_kernel(0.75, g))
    rep.add("<M>_T for H=0.75 n=512", qv.total, 1.0, tol=0.02)

    for H in (0.6, 0.75, 0.9):
        errs = [covariance_quadrature_error(H, n) for n in LEVELS]
        rep.add_check(f"covariance refinement monotone H={H}", _decreasing(errs), errs[-1], 0.0)
    for H in (0.25, 0.4):
        errs = [covariance_quadrature_error(H, n) for n in (128, 512)]
        rep.add_check(f"covariance refinement 128->512 H={H}", errs[1] < errs[0], errs[1], 0.0)

    # Monte Carlo cross-validation of the kernel synthesizer, 3% floor
    for H in HURSTS:
        g, dk, _, _ = _fbm_setup(H, 256)
        X = synthesize_from_kernel(dk, sample_increments(g, MC_PATHS, SEEDS["cov_mc"], threads))
        sub = g.subgrid()
        c, se = empirical_covariance(X, sub)
        rep.extend(compare_covariance(c, se, kn.fbm_covariance_matrix(H, g.nodes[sub]),
                                      f"kernel synthesis H={H}", floor=0.03))
        if H == 0.5:
            j = g.index_of(0.5)
            cc, ss = empirical_covariance(X, [j])
            rep.add("Brownian variance at 0.5", cc[0, 0], 0.5, ss[0, 0], tol=3 * ss[0, 0])
    g = kn.make_grid(1.0, 256)
    cov = kn.fbm_covariance_matrix(0.75, g.nodes[1:])
    Xc = synthesize_cholesky(cov, MC_PATHS, SEEDS["cholesky"], g, "fbm(0.75)", threads)
    sub = g.subgrid()
    c, se = empirical_covariance(Xc, sub)
    rep.extend(compare_covariance(c, se, kn.fbm_covariance_matrix(0.75, g.nodes[sub]),
                                  "cholesky synthesis H=0.75", floor=0.03))
    return rep


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def adjoint_balance_defect(qv: kn.QuadraticVariation, i: int) -> float:
    """max |<H e_a, e_b> - <e_a, H* e_b>| relative to the largest term, over all basis pairs."""
    H = op.hardy_matrix(qv, i).matrix
    Hs = op.hardy_matrix(qv, i, adjoint=True).matrix
    d = qv.increments
    lhs = H.T * d[None, :]           # <H e_a, e_b> = H[b, a] d_b
    rhs = d[:, None] * Hs            # <e_a, H* e_b> = d_a H*[a, b]
    scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)))
    return float(np.max(np.abs(lhs - rhs)) / scale)


def _test_functions(qv: kn.QuadraticVariation) -> list[np.ndarray]:
    m = qv.grid.midpoints / qv.grid.horizon
    return [np.cos(np.pi * m), np.exp(m)]


def _norm(qv: kn.QuadraticVariation, f: np.ndarray) -> float:
    return math.sqrt(float(np.sum(f * f * qv.increments)))


def asymptotic_defects(H: float, i: int, levels=LEVELS) -> tuple[np.ndarray, np.ndarray]:
    """(inverse residual, isometry defect) per level for fixed smooth f.

    Inverse residual: max_f |(beta alpha - eta) eta f| / |eta f|.
    Isometry defect: max_f ||beta f|^2 - |f|^2| / |f|^2.
    """
    inv, iso = [], []
    for n in levels:
        _, _, qv, _ = _fbm_setup(H, n)
        a, b = op.alpha_beta_m(qv, i, "analytic")
        E = op.eta_matrix(qv).matrix
        D = b.matrix @ a.matrix - E
        fs = _test_functions(qv)
        inv.append(max(_norm(qv, D @ (E @ f)) / _norm(qv, E @ f) for f in fs))
        iso.append(max(abs(_norm(qv, b.matrix @ f) ** 2 - _norm(qv, f) ** 2) / _norm(qv, f) ** 2 for f in fs))
    return np.array(inv), np.array(iso)


def kstar_agreement(H: float, n: int) -> tuple[float, float]:
    """X-norm gaps on the subgrid: k* vs LU-based kappa^{-1} rows, explicit vs conjugated beta^{X,1}."""
    g, dk, qv, pk = _fbm_setup(H, n)
    kap = op.kappa_matrix(pk, qv)
    ks = kn.fbm_kstar_matrix(H, g)
    ks_lu = np.vstack([np.zeros(n), np.cumsum(kap.inverse.T, axis=0)])
    C = op.increment_covariance(kn.covariance_from_kernel(dk))
    sub = g.subgrid()
    D = ks[sub] - ks_lu[sub]
    gap_k = float(np.max(np.sqrt(np.einsum("ij,jk,ik->i", D, C, D))))
    _, B = op.alpha_beta_x(pk, qv, 1, kap=kap)
    gap_e = 0.0
    for t in sub:
        e = op.explicit_alpha_beta_x(pk, qv, ks, 1, t, "beta") - op.conjugated_image(B, t)
        gap_e = max(gap_e, math.sqrt(float(e @ C @ e)))
    return gap_k, gap_e


def suite_operators(threads: int = 1) -> ComparisonReport:
    rep = ComparisonReport()
    for H in (0.5, 0.75):
        for n in (64, 512):
            _, _, qv, _ = _fbm_setup(H, n)
            for i in (1, 2):
                rep.add(f"adjoint balance H={H} n={n} i={i}", adjoint_balance_defect(qv, i), 0.0, tol=1e-12)
                a, b = op.alpha_beta_m(qv, i)
                rep.add(f"beta zero-mean range H={H} n={n} i={i}", b.zero_mean_defect(), 0.0, tol=1e-12)
                ones = np.ones(n)
                rep.add(f"H^{i} 1 = 1 H={H} n={n}",
                        np.max(np.abs(op.hardy_matrix(qv, i).apply(ones) - 1)), 0.0, tol=1e-12)
                rep.add(f"alpha^{i} c = 0 H={H} n={n}", np.max(np.abs(a.apply(3.0 * ones))), 0.0, tol=1e-12)
                norm = op.hardy_matrix(qv, i).weighted_norm()
                rep.add_check(f"Hardy norm <= 2.1 H={H} n={n} i={i}", norm <= 2.1, norm, 2.1)
            E = op.eta_matrix(qv).matrix
            rep.add(f"eta idempotent H={H} n={n}", np.linalg.norm(E @ E - E, 2), 0.0, tol=1e-12)
            a2, _ = op.alpha_beta_m(qv, 2)
            worst = 0.0
            for t in range(1, n + 1):
                worst = max(worst, float(np.max(np.abs(op.conjugated_image(a2, t)[t:]), initial=0.0)))
            rep.add(f"alpha^2 1_[0,t) vanishes beyond t H={H} n={n}", worst, 0.0, tol=0.0)

    # Brownian closed forms
    g = kn.make_grid(1.0, 256)
    qv = kn.brownian_qv(g)
    t_idx = g.index_of(0.5)
    ind = (np.arange(g.n) < t_idx).astype(float)
    rep.add("eta 1_[0,t) = 1_[0,t) - t/T", np.max(np.abs(op.eta_matrix(qv).apply(ind) - (ind - 0.5))),
            0.0, tol=1e-12)
    _, b1 = op.alpha_beta_m(qv, 1)
    s = g.midpoints
    exact = np.where(s < 0.5, 1.0 - np.log(0.5 / s), 0.0)
    rel = np.abs(b1.apply(ind) - exact)[(s > 0.05)]
    rep.add("Brownian beta^1 1_[0,t) = 1 - ln(t/s) away from 0", np.max(rel), 0.0, tol=0.05)

    # kappa
    for H in (0.5, 0.25, 0.75):
        gH, _, qvH, pkH = _fbm_setup(H, 128)
        kap = op.kappa_matrix(pkH, qvH)
        G = op.indicator_matrix(gH.n)
        rep.add(f"kappa 1_[0,T) = 1 H={H}", np.max(np.abs(kap.to_m(G[:, -1]) - 1)), 0.0, tol=1e-12)
        rep.add(f"kappa c = c H={H}", np.max(np.abs(kap.to_x(2.5 * np.ones(gH.n)) - 2.5)), 0.0, tol=1e-9)
        a, b = op.alpha_beta_x(pkH, qvH, 2, kap=kap)
        rep.add(f"alpha^X annihilates constants H={H}", np.max(np.abs(a.apply(np.ones(gH.n)))), 0.0, tol=1e-9)
        spread = 0.0
        for t in gH.subgrid():
            v = op.conjugated_image(b, t)[t:]
            spread = max(spread, float(np.ptp(v)))
        rep.add(f"beta^X,2 1_[0,t) constant beyond t H={H}", spread, 0.0, tol=1e-9)
        if H == 0.5:
            rep.add("kappa = I for H=0.5", np.max(np.abs(kap.forward - np.eye(gH.n))), 0.0, tol=1e-12)
            am, bm = op.alpha_beta_m(qvH, 1)
            ax, bx = op.alpha_beta_x(pkH, qvH, 1, kap=kap)
            rep.add("alpha_beta_x = alpha_beta_m for H=0.5",
                    max(np.max(np.abs(am.matrix - ax.matrix)), np.max(np.abs(bm.matrix - bx.matrix))), 0.0,
                    tol=1e-12)
            ks = kn.fbm_kstar_matrix(0.5, gH)
            worst = max(np.max(np.abs(op.explicit_alpha_beta_x(pkH, qvH, ks, 1, t, "beta")
                                      - op.conjugated_image(bm, t))) for t in range(1, gH.n + 1))
            rep.add("explicit beta^X,1 matches beta^M,1 for H=0.5", worst, 0.0, tol=1e-10)

    # refinement studies
    for H in (0.5, 0.75):
        for i in (1, 2):
            inv, iso = asymptotic_defects(H, i)
            rep.add_check(f"beta alpha - eta decreasing H={H} i={i}", _decreasing(inv), inv[-1], 0.0)
            rep.add_check(f"isometry defect decreasing H={H} i={i}", _decreasing(iso), iso[-1], 0.0)
    gaps = [kstar_agreement(0.75, n) for n in LEVELS]
    rep.add_check("k* vs LU kappa^{-1} gap decreasing H=0.75", _decreasing([g_[0] for g_ in gaps]),
                  gaps[-1][0], 0.0)
    rep.add_check("explicit vs conjugated beta^X,1 gap decreasing H=0.75", _decreasing([g_[1] for g_ in gaps]),
                  gaps[-1][1], 0.0)
    eta_gap = []
    for n in LEVELS:
        gH, _, qvH, pkH = _fbm_setup(0.75, n)
        etx = op.eta_x(kn.fbm_covariance_matrix(0.75, gH.nodes), qvH)
        etc = op.eta_m_conjugated(pkH, qvH)
        eta_gap.append(np.linalg.norm(etx.matrix - etc.matrix, 2))
    rep.add_check("eta transport gap decreasing H=0.75", _decreasing(eta_gap), eta_gap[-1], 0.0)
    return rep


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def bridge_covariance(H: float, times: np.ndarray, T: float = 1.0) -> np.ndarray:
    R = kn.fbm_covariance_matrix(H, times)
    rT = kn.fbm_covariance(H, times, T)
    return R - np.outer(rT, rT) / kn.fbm_covariance(H, T, T)


def transform_ensemble(H: float, threads: int = 1, n: int = 256, n_paths: int = MC_PATHS):
    seed = {0.5: SEEDS["transforms_bm"], 0.25: SEEDS["transforms_fbm25"], 0.75: SEEDS["transforms_fbm75"]}[H]
    g, dk, qv, pk = _fbm_setup(H, n)
    X = synthesize_from_kernel(dk, sample_increments(g, n_paths, seed, threads))
    return g, dk, qv, pk, X


def suite_transforms(threads: int = 1) -> ComparisonReport:
    rep = ComparisonReport(k=3.0, floor=0.05)
    for H in HURSTS:
        g, dk, qv, pk, X = transform_ensemble(H, threads)
        sub = g.subgrid()
        target = kn.fbm_covariance_matrix(H, g.nodes[sub])
        btarget = bridge_covariance(H, g.nodes[sub])
        kap = op.kappa_matrix(pk, qv)
        for kind in ("T1", "T2"):
            Y = tr.transform_volterra(X, pk, qv, kind, "pathwise", kap=kap)
            c, se = empirical_covariance(Y, sub)
            rep.extend(compare_covariance(c, se, target, f"{kind}(X) H={H}"))
        cov = kn.fbm_covariance_matrix(H, g.nodes)
        for kind in ("B1", "B2", "anticipative"):
            for method in ("operator", "pathwise"):
                Y = tr.transform_volterra(X, pk, qv, kind, method, kap=kap, cov=cov)
                pinned = np.all(Y.paths[:, 0] == 0.0) and np.all(Y.paths[:, -1] == 0.0)
                rep.add_check(f"{kind} {method} pinned H={H}", bool(pinned))
                c, se = empirical_covariance(Y, sub)
                rep.extend(compare_covariance(c, se, btarget, f"{kind}(X) {method} H={H}"))
        M = tr.prediction_martingale_path(X, pk, qv, "via_kstar", kap=kap)
        T2 = tr.transform_T_martingale(M, qv, 2)
        corr, se = correlation_with(T2.paths[:, sub], M.terminal)
        for node, r in zip(sub, corr):
            rep.add(f"corr(T2(M)_t, M_T) t={g.nodes[node]:.4g} H={H}", r, 0.0, se, tol=3 * se)
        rep.add(f"M_T = X_T H={H}", np.max(np.abs(M.terminal - X.terminal)), 0.0, tol=0.0)
        if H == 0.5:
            for kind in ("T1", "T2", "B1", "B2"):
                i = int(kind[1])
                fx = tr.transform_volterra(X, pk, qv, kind, "operator", kap=kap).paths
                fm = (tr.transform_T_martingale if kind[0] == "T" else tr.bridge_B_martingale)(
                    X, qv, i, "operator").paths
                rep.add(f"{kind}: X and M versions agree for H=0.5", np.max(np.abs(fx - fm)), 0.0, tol=1e-10)
            rep.add("M = X for H=0.5", np.max(np.abs(M.paths - X.paths)), 0.0, tol=1e-10)
        S = tr.time_reverse(X)
        rep.add(f"S(S(X)) = X H={H}", np.max(np.abs(tr.time_reverse(S).paths - X.paths)), 0.0, tol=1e-12)
        rep.add_check(f"S_T(X) = X_T H={H}", bool(np.array_equal(S.terminal, X.terminal)))

    # prediction routes under refinement, single path
    gaps = []
    for n in (128, 256, 512):
        g, dk, qv, pk = _fbm_setup(0.75, n)
        dW = _nested_increments(n, 1, SEEDS["prediction"])
        X = synthesize_from_kernel(dk, dW)
        a = tr.prediction_martingale_path(X, pk, qv, "from_increments").paths
        b = tr.prediction_martingale_path(X, pk, qv, "via_kstar", kstar=kn.fbm_kstar_matrix(0.75, g)).paths
        gaps.append(float(np.max(np.abs(a - b))))
    rep.add_check("prediction routes converge H=0.75", _decreasing(gaps), gaps[-1], 0.0)
    return rep


# ---------------------------------------------------------------------------
# roundtrip
# ---------------------------------------------------------------------------

def roundtrip_levels(H: float, i: int, identity: str, mode: str = "analytic", levels=LEVELS,
                     n_paths: int = 20) -> np.ndarray:
    """Residual of one roundtrip identity on the subgrid for nested refinements of fixed paths."""
    out = []
    for n in levels:
        g, dk, qv, pk = _fbm_setup(H, n)
        X = synthesize_from_kernel(dk, _nested_increments(n, n_paths, SEEDS["roundtrip"]))
        res = tr.roundtrip_residuals(X, qv, i, (mode,), pk=None if H == 0.5 else pk,
                                     nodes=g.subgrid(), reversal=False)
        out.append(next(r.max_residual for r in res if r.identity.startswith(identity)))
    return np.array(out)


def suite_roundtrip(threads: int = 1) -> ComparisonReport:
    rep = ComparisonReport()
    for H in HURSTS:
        g, dk, qv, pk = _fbm_setup(H, 256)
        X = synthesize_from_kernel(dk, sample_increments(g, 50, SEEDS["roundtrip"], threads))
        for i in (1, 2):
            res = tr.roundtrip_residuals(X, qv, i, ("consistent",), pk=None if H == 0.5 else pk)
            for r in res:
                if r.identity.startswith("B") or (i == 1 and "S" in r.identity):
                    rep.add(f"{r.identity} consistent H={H}", r.max_residual, 0.0, tol=1e-9)
    for i in (1, 2):
        r = roundtrip_levels(0.5, i, f"B{i}(T{i})")
        ratios = halving_ratios(r)
        rep.add_check(f"B{i}(T{i}) analytic ratio >= 1.5 (W)", bool(np.all(ratios >= 1.5)), float(ratios.min()), 1.5)
    # reversal identities for W in both modes
    g = kn.make_grid(1.0, 256)
    qv = kn.brownian_qv(g)
    M = PathEnsemble(g, "bm", cumulative_paths(sample_increments(g, 50, SEEDS["roundtrip"], threads)))
    for mode in ("analytic", "consistent"):
        for r in tr.roundtrip_residuals(M, qv, 1, (mode,)):
            if r.identity.startswith("S"):
                rep.add(f"{r.identity} {mode} (W)", r.max_residual, 0.0, tol=1e-9)
    return rep


# ---------------------------------------------------------------------------
# laguerre
# ---------------------------------------------------------------------------

def laguerre_grid(T: float = LAG_T, T_max: float = LAG_TMAX, per_doubling: int = LAG_PER_DOUBLING,
                  depth: int = LAG_DEPTH):
    n_outer = max(1, int(round(per_doubling * math.log2(T_max / T))))
    return lg.make_two_sided_grid(T, T_max, per_doubling * depth, n_outer, depth=depth)


def brownian_expansion(grid, n_paths: int, seed: int, n_plus: int, n_minus: int, mode: str = "analytic",
                       threads: int = 1, chunk: int = 2000, keep_nodes=()):
    """eps coefficients of Brownian paths on ``grid`` generated in chunks.

    Returns (ExpansionCoefficients, node values at ``keep_nodes``).
    """
    qv = kn.brownian_qv(grid)
    iT = grid.index_of(LAG_T) if LAG_T in grid.nodes else None
    values, kept = [], []
    co = None
    for first in range(0, n_paths, chunk):
        count = min(chunk, n_paths - first)
        dW = sample_increments(grid, count, seed, threads, first)
        M = PathEnsemble(grid, "bm", cumulative_paths(dW), seed)
        co = lg.epsilon_coefficients(M, qv, iT, n_plus, n_minus, mode)
        values.append(co.values)
        kept.append(M.paths[:, list(keep_nodes)])
    allv = np.concatenate(values, axis=0)
    full = lg.ExpansionCoefficients(co.T, co.T_max, co.T_index, co.orders, allv, qv, mode,
                                    co.truncation_ratio, co.tail_mass)
    return full, np.concatenate(kept, axis=0)


def suite_laguerre(threads: int = 1) -> ComparisonReport:
    rep = ComparisonReport(k=3.0, floor=0.0)
    rows = lg.orthonormality_rows(10)
    rep.add("orthonormality |n|,|m| <= 10", max(abs(r.value - r.target) for r in rows), 0.0, tol=1e-10)

    grid = laguerre_grid()
    qv = kn.brownian_qv(grid)
    iT = grid.index_of(LAG_T)
    it = grid.index_of(0.5 * LAG_T)
    co, kept = brownian_expansion(grid, MC_PATHS, SEEDS["laguerre"], 16, 3, threads=threads,
                                  keep_nodes=(it, iT))
    Mt, MT = kept[:, 0], kept[:, 1]
    sel = [co.orders.index(n) for n in range(-3, 4)]
    c, se = empirical_covariance(co.values[:, sel])
    names = [str(n) for n in range(-3, 4)]
    rep.extend(compare_covariance(c, se, np.eye(7), "Cov(eps)", k=3.0, floor=0.0, names=names))
    rep.add("eps_0 = M_T/sqrt(C_T)", np.max(np.abs(co[0] - MT / math.sqrt(co.CT))), 0.0, tol=1e-12)
    ks = ks_normality(co[0])
    rep.add("KS eps_0", ks.statistic, 0.0, tol=ks.critical)

    mse = []
    for N in (0, 2, 4, 8, 16):
        terms = lg.reconstruct_terms(co, it, N)
        mse.append(float(np.mean((Mt - terms.sum(axis=1)) ** 2)))
    rep.add_check("reconstruction MSE nonincreasing in N", bool(np.all(np.diff(mse) <= 0)), mse[-1],
                  lg.parseval_target(qv, iT, it, 16))
    rep.add("reconstruction at t=T is M_T", np.max(np.abs(lg.reconstruct_value(co, iT, 8) - MT)), 0.0, tol=1e-12)

    f = (np.arange(grid.n) < iT).astype(float)
    fe = lg.expand_functional(f, co, rule="point")
    rep.add("Parseval f = 1_[0,T)", float(np.sum(fe.c ** 2)), co.CT, tol=0.02 * co.CT)
    ft = (np.arange(grid.n) < it).astype(float)
    fe_t = lg.expand_functional(ft, co, rule="cell")
    terms = lg.reconstruct_terms(co, it, 16)
    direct = np.stack([fe_t.coefficient(n) * co[n] for n in range(17)], axis=1)
    rep.add("zeta consistency", np.max(np.abs(direct - terms)), 0.0, tol=1e-12)
    fut = (np.arange(grid.n) >= iT).astype(float)
    fe_f = lg.expand_functional(fut, co, rule="cell")
    rep.add("future f has no past coefficients",
            max(abs(fe_f.coefficient(n)) for n in range(0, 17)), 0.0, tol=0.0)

    # iterated transforms on a few paths
    dW = sample_increments(grid, 4, SEEDS["iterate"], threads)
    M = PathEnsemble(grid, "bm", cumulative_paths(dW))
    rep.add("iterate n=0", lg.iterate_transform_check(M, qv, iT, 0), 0.0, tol=0.0)
    rep.add("iterate n=1 consistent", lg.iterate_transform_check(M, qv, iT, 1, "consistent"), 0.0, tol=1e-9)
    res = []
    for m in (16, 32, 64, 128):
        gm = lg.make_two_sided_grid(1.0, 16.0, m * 12, m * 4, depth=12)
        fine = lg.make_two_sided_grid(1.0, 16.0, 128 * 12, 128 * 4, depth=12)
        dWf = sample_increments(fine, 4, SEEDS["iterate"], threads)
        f_ = 128 // m
        dWm = np.concatenate([dWf[:, :1], dWf[:, 1:].reshape(4, -1, f_).sum(axis=2)], axis=1)
        Mm = PathEnsemble(gm, "bm", cumulative_paths(dWm))
        res.append(lg.iterate_transform_check(Mm, kn.brownian_qv(gm), gm.index_of(1.0), -2, "analytic"))
    ratios = halving_ratios(res)
    rep.add_check("iterate n=-2 analytic ratio >= 1.5", bool(np.all(ratios >= 1.5)), float(ratios.min()), 1.5)

    short = lg.make_two_sided_grid(1.0, 4.0, 64, 16)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lg.epsilon_coefficients(PathEnsemble(short, "zero", np.zeros((1, short.n + 1))),
                                kn.brownian_qv(short), short.index_of(1.0), 1, 1)
    rep.add_check("truncation warning for <M>_T/<M>_Tmax > 0.1",
                  any(issubclass(w.category, TruncationWarning) for w in caught))
    return rep


SUITES: dict[str, Callable[[int], ComparisonReport]] = {
    "covariance": suite_covariance,
    "operators": suite_operators,
    "transforms": suite_transforms,
    "laguerre": suite_laguerre,
    "roundtrip": suite_roundtrip,
}


def run_suite(name: str, threads: int = 1) -> ComparisonReport:
    if name == "all":
        rep = ComparisonReport()
        for key in SUITES:
            part = SUITES[key](threads)
            for e in part.entries:
                e.label = f"{key}: {e.label}"
            rep.extend(part)
        return rep
    return SUITES[name](threads)
