"""Path-level transformations, bridges, prediction martingales and time reversal.

Martingale-level maps take paths of M with quadratic variation ``qv``.
Volterra-level maps take paths of X together with the prediction kernel
``pk`` (k = z/z(T, .)) and act through the conjugated operators.

Two methods are available for the martingale transforms:

* ``pathwise``: the closed-form pathwise expressions.  Bridges use
  left-point (Ito) Riemann sums.  T1 and T2 default to the ``rms`` rule:
  the log-type integrand s -> (beta 1_[0,t))(s) is integrated exactly inside
  each cell and replaced by its signed root-mean-square against d<M>, which
  keeps Var T_t exact even next to the logarithmic singularity at s = 0.
  ``rule="left"`` gives the plain left-point sums;
* ``operator``: the discrete Wiener integral sum_j (A 1_[0,t))_j dY_j with
  the matrices of :mod:`voltbridge.operators` in ``analytic`` or
  ``consistent`` mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DegenerateKernelError, DimensionError, DomainError, MissingIncrementsError
from .kernels import DiscreteKernel, QuadraticVariation, covariance_from_kernel
from .operators import Kappa, alpha_beta_m, conjugate, indicator_matrix, kappa_matrix
from .simulate import PathEnsemble, cumulative_paths

KINDS = ("T1", "T2", "B1", "B2", "anticipative", "reverse", "prediction")
METHODS = ("pathwise", "operator")
RULES = ("rms", "left")

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    method: str = "operator"
    mode: str = "analytic"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown transform {self.kind!r}")
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if self.method == "pathwise" and self.kind == "prediction":
            raise DomainError("the prediction martingale has no pathwise variant")

    @property
    def index(self) -> int:
        return int(self.kind[1]) if self.kind[0] in "TB" else 0


def _check_grid(ens: PathEnsemble, qv: QuadraticVariation) -> None:
    if not ens.grid.same_as(qv.grid):
        raise DimensionError("paths and quadratic variation live on different grids")


def _pin(paths: np.ndarray, first: bool = True, last: bool = True) -> np.ndarray:
    # bridge endpoints are zero by definition; drop the rounding residue
    if first:
        paths[:, 0] = 0.0
    if last:
        paths[:, -1] = 0.0
    return paths


# ---------------------------------------------------------------------------
# martingale level
# ---------------------------------------------------------------------------

def anticipative_bridge(ens: PathEnsemble, cov_row: np.ndarray, r_TT: float) -> PathEnsemble:
    """X_t - R(t, T)/R(T, T) X_T for every path."""
    if not (r_TT > 0):
        raise DegenerateKernelError("R(T, T) must be positive")
    cov_row = np.asarray(cov_row, dtype=float)
    if cov_row.shape != (ens.grid.n + 1,):
        raise DimensionError("one covariance value per node expected")
    coef = cov_row / r_TT
    coef[-1] = 1.0
    out = ens.paths - ens.paths[:, -1:] * coef[None, :]
    return ens.derived(_pin(out, first=False), f"anticipative[{ens.process_name}]")


def operator_paths(dY: np.ndarray, A: np.ndarray, columns: Optional[np.ndarray] = None) -> np.ndarray:
    """out[p, i] = sum_j (A g_i)_j dY[p, j] with g_i = 1_[0, t_i) (or given columns)."""
    n = A.shape[0]
    G = indicator_matrix(n) if columns is None else columns
    return dY @ (A @ G)


def _t_pathwise(M: np.ndarray, qv: QuadraticVariation, i: int) -> np.ndarray:
    C = qv.cumulative
    d = qv.increments
    out = np.empty_like(M)
    if i == 1:
        # M_t - int_0^t M_s/<M>_s d<M>_s, first cell uses M_0/<M>_0 := 0
        rate = np.zeros_like(d)
        rate[1:] = d[1:] / C[1:-1]
        drift = M[:, :-1] * rate[None, :]
    else:
        tail = qv.tail
        drift = (M[:, -1:] - M[:, :-1]) * (d / tail)[None, :]
    out[:, 0] = 0.0
    out[:, 1:] = M[:, 1:] - np.cumsum(drift, axis=1)
    return out


def _log_moments(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of ln y for y uniform on [r, 1], 0 <= r < 1."""
    r = np.asarray(r, dtype=float)
    mean = np.empty_like(r)
    var = np.empty_like(r)
    near = r >= 0.5
    # smooth cells: 8-point Gauss-Legendre, centred to avoid cancellation
    y = r[near, None] + (1.0 - r[near, None]) * _GL_X[None, :]
    ly = np.log(y)
    m = ly @ _GL_W
    mean[near] = m
    var[near] = ((ly - m[:, None]) ** 2) @ _GL_W
    # cells reaching down to (or near) the log singularity: closed form
    rf = r[~near]
    h = 1.0 - rf
    lr = np.where(rf > 0, np.log(np.where(rf > 0, rf, 1.0)), 0.0)
    m1 = (-h - rf * lr) / h
    m2 = (2.0 - rf * (lr * lr - 2.0 * lr + 2.0)) / h
    mean[~near] = m1
    var[~near] = np.maximum(m2 - m1 * m1, 0.0)
    return mean, var


def beta_cell_values(qv: QuadraticVariation, i: int, g: np.ndarray, rule: str = "rms") -> np.ndarray:
    """Cell values of beta^{M,i} g for the columns of ``g`` (cells x k).

    ``rule="left"`` is the left-point Riemann version of the pathwise
    formulas.  ``rule="rms"`` integrates the logarithm inside each cell
    exactly and returns sign(mean) * sqrt(mean square) per cell.
    """
    if rule not in RULES:
        raise DomainError(f"unknown quadrature rule {rule!r}")
    g = np.asarray(g, dtype=float)
    d = qv.increments
    n = d.size
    C = qv.cumulative
    tail = qv.tail
    if rule == "left":
        if i == 1:
            w = np.zeros(n)
            w[1:] = d[1:] / C[1:-1]
            gw = g * w[:, None]
            # sum over u > k
            later = np.cumsum(gw[::-1], axis=0)[::-1] - gw
            return g - later
        gw = g * (d / tail)[:, None]
        return g - np.cumsum(gw, axis=0)
    if i == 1:
        r = C[:-1] / C[1:]
        step = np.zeros(n)
        step[1:] = np.log1p(d[1:] / C[1:-1])      # ln(C_{u+1}/C_u)
        gs = g * step[:, None]
        rest = np.cumsum(gs[::-1], axis=0)[::-1] - gs
    else:
        nxt = np.append(tail[1:], 0.0)
        r = nxt / tail
        step = np.zeros(n)
        step[:-1] = -np.log1p(-d[:-1] / tail[:-1])  # ln(tail_u/tail_{u+1})
        gs = g * step[:, None]
        rest = np.cumsum(gs, axis=0) - gs
    lm, lv = _log_moments(r)
    a = g - rest
    mean = a + g * lm[:, None]
    ms = mean * mean + g * g * lv[:, None]
    return np.where(mean < 0, -1.0, 1.0) * np.sqrt(ms)


def _b_pathwise(M: np.ndarray, qv: QuadraticVariation, i: int) -> np.ndarray:
    dM = np.diff(M, axis=1)
    C = qv.cumulative
    n = qv.grid.n
    out = np.zeros_like(M)
    if i == 1:
        # -<M>_t sum_{j >= i} dM_j/<M>_{t_j}, left point; t_0 excluded
        w = dM[:, 1:] / C[None, 1:-1]
        rev = np.cumsum(w[:, ::-1], axis=1)[:, ::-1]
        out[:, 1:n] = -C[None, 1:n] * rev
    else:
        # <M>_{T,t} sum_{j < i} dM_j/<M>_{T,t_j}
        tail = qv.tail
        acc = np.cumsum(dM / tail[None, :], axis=1)
        out[:, 1:n] = tail[None, 1:] * acc[:, :-1]
    return _pin(out)


def transform_T_martingale(ens: PathEnsemble, qv: QuadraticVariation, i: int, method: str = "pathwise",
                           mode: str = "analytic", rule: str = "rms") -> PathEnsemble:
    """T^{(i)}(M) on every path.

    ``mode`` selects the operator matrices (operator method), ``rule`` the
    cell quadrature (pathwise method).
    """
    _check_grid(ens, qv)
    if i not in (1, 2):
        raise DomainError("index must be 1 or 2")
    if method == "pathwise":
        if rule == "left":
            out = _t_pathwise(ens.paths, qv, i)
        else:
            W = beta_cell_values(qv, i, indicator_matrix(qv.grid.n), rule)
            out = ens.differences @ W
            out[:, 0] = 0.0
    elif method == "operator":
        _, beta = alpha_beta_m(qv, i, mode)
        out = operator_paths(ens.differences, beta.matrix)
    else:
        raise DomainError(f"unknown method {method!r}")
    return ens.derived(out, f"T{i}[{ens.process_name}]")


def bridge_B_martingale(ens: PathEnsemble, qv: QuadraticVariation, i: int, method: str = "pathwise",
                        mode: str = "analytic") -> PathEnsemble:
    """B^{(i)}(M) on every path; zero at t = 0 and t = T."""
    _check_grid(ens, qv)
    if i not in (1, 2):
        raise DomainError("index must be 1 or 2")
    if method == "pathwise":
        out = _b_pathwise(ens.paths, qv, i)
    elif method == "operator":
        alpha, _ = alpha_beta_m(qv, i, mode)
        out = _pin(operator_paths(ens.differences, alpha.matrix))
    else:
        raise DomainError(f"unknown method {method!r}")
    return ens.derived(out, f"B{i}[{ens.process_name}]")


def time_reverse(ens: PathEnsemble) -> PathEnsemble:
    """S(P)_j = P_n - P_{n-j} (uniform grids only)."""
    if not ens.grid.is_uniform:
        raise DomainError("time reversal needs a uniform grid")
    P = ens.paths
    out = P[:, -1:] - P[:, ::-1]
    out[:, 0] = 0.0
    return ens.derived(out, f"S[{ens.process_name}]")


# ---------------------------------------------------------------------------
# Volterra level
# ---------------------------------------------------------------------------

def _m_from_x(ens: PathEnsemble, kap: Kappa, kstar: Optional[np.ndarray]) -> np.ndarray:
    """Prediction martingale paths recovered from X."""
    dX = ens.differences
    if kstar is not None:
        return dX @ np.asarray(kstar, dtype=float).T
    return cumulative_paths(dX @ kap.inverse)


def transform_volterra(ens: PathEnsemble, pk: DiscreteKernel, qv: QuadraticVariation, kind: str,
                       method: str = "operator", mode: str = "analytic",
                       kstar: Optional[np.ndarray] = None, kap: Optional[Kappa] = None,
                       cov: Optional[np.ndarray] = None, rule: str = "rms") -> PathEnsemble:
    """Apply T1, T2, B1, B2, anticipative, reverse or prediction to X paths.

    ``operator``: sum_j (A^{X,i} 1_[0,t))_j dX_j with A^{X,i} = kappa^{-1} A kappa.
    ``pathwise``: T is sum_j (beta^{M,i} k(t, .))_j dM_j with the cell rule
    ``rule``; for ``rule="left"`` this is the nested left-point quadrature in
    k* of the explicit formula.  B is assembled as
    sum_j k(t, m_j) dB_j(M) from the pathwise martingale bridge with M
    recovered through k*.  Without ``kstar`` the columns of kappa^{-1} stand
    in for it.  ``cov`` (node covariance) is needed for the anticipative
    bridge and defaults to the discrete covariance of the kernel.
    """
    spec = TransformSpec(kind, method, mode)
    _check_grid(ens, qv)
    if not pk.grid.same_as(qv.grid):
        raise DimensionError("kernel and quadratic variation live on different grids")
    name = f"{kind}[{ens.process_name}]"
    if kind == "reverse":
        return time_reverse(ens)
    kap = kap or kappa_matrix(pk, qv)
    if kind == "prediction":
        return prediction_martingale_path(ens, pk, qv, "via_kstar", kstar=kstar, kap=kap)
    if kind == "anticipative":
        if cov is None:
            cov = covariance_from_kernel(pk_to_z(pk, qv))
        return anticipative_bridge(ens, cov[:, -1], float(cov[-1, -1]))
    i = spec.index
    if method == "operator":
        alpha, beta = alpha_beta_m(qv, i, mode)
        op = conjugate(beta if kind[0] == "T" else alpha, kap)
        out = operator_paths(ens.differences, op.matrix)
        if kind[0] == "B":
            _pin(out)
        return ens.derived(out, name)
    M = _m_from_x(ens, kap, kstar)
    K = pk.values
    if kind[0] == "B":
        bm = _b_pathwise(M, qv, i)
        out = _pin(np.diff(bm, axis=1) @ K.T)
        return ens.derived(out, name)
    if rule != "left":
        out = np.diff(M, axis=1) @ beta_cell_values(qv, i, K.T, rule)
        out[:, 0] = 0.0
        return ens.derived(out, name)
    X = ens.paths
    C = qv.cumulative
    d = qv.increments
    if i == 1:
        w = np.zeros_like(d)
        w[1:] = d[1:] / C[1:-1]
        inner = M[:, :-1] * w[None, :]
    else:
        inner = (X[:, -1:] - M[:, :-1]) * (d / qv.tail)[None, :]
    # sum over cells u < t of inner_u k(t, m_u)
    out = X - inner @ K.T
    out[:, 0] = 0.0
    return ens.derived(out, name)


def pk_to_z(pk: DiscreteKernel, qv: QuadraticVariation) -> DiscreteKernel:
    """Kernel z(t, s) = k(t, s) z(T, s) with z(T, .) recovered from the cell masses."""
    zT = np.sqrt(qv.increments / qv.grid.cell_weights)
    return DiscreteKernel(pk.grid, pk.values * zT[None, :], pk.eval_point, f"z[{pk.name}]")


def prediction_martingale_path(ens: PathEnsemble, pk: DiscreteKernel, qv: QuadraticVariation,
                               route: str = "via_kstar", kstar: Optional[np.ndarray] = None,
                               kap: Optional[Kappa] = None, terminal_row: Optional[np.ndarray] = None) -> PathEnsemble:
    """Prediction martingale M of X along one of two routes.

    ``from_increments``: M_t = sum_{j < i} z(T, m_j) dW_j, using the driving
    increments stored on the ensemble.  ``via_kstar``: M_t = sum_j
    k*(t, m_j) dX_j, with k* given or replaced by the columns of
    kappa^{-1}.
    """
    _check_grid(ens, qv)
    if route == "from_increments":
        if ens.increments is None:
            raise MissingIncrementsError("ensemble was not generated from stored Brownian increments")
        zT = np.sqrt(qv.increments / qv.grid.cell_weights) if terminal_row is None else terminal_row
        out = cumulative_paths(ens.increments * zT[None, :])
    elif route == "via_kstar":
        if kstar is None:
            kap = kap or kappa_matrix(pk, qv)
        out = _m_from_x(ens, kap, kstar)
        out[:, -1] = ens.paths[:, -1]  # k*(T, .) = 1 identically
    else:
        raise DomainError(f"unknown route {route!r}")
    return ens.derived(out, f"M[{ens.process_name}]")


def x_from_martingale(pk: DiscreteKernel, M: PathEnsemble, name: str = "X") -> PathEnsemble:
    """X_t = sum_j k(t, m_j) dM_j."""
    out = M.differences @ pk.values.T
    return M.derived(out, name, method="kernel")


def x_reversed(pk: DiscreteKernel, M: PathEnsemble) -> PathEnsemble:
    """X^S_t = sum_j k(t, m_j) dS_j(M): the kernel driven by the reversed martingale."""
    return x_from_martingale(pk, time_reverse(M), f"XS[{M.process_name}]")


# ---------------------------------------------------------------------------
# roundtrip residuals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Residual:
    identity: str
    mode: str
    max_residual: float


def _max_abs(a: np.ndarray, columns: Optional[np.ndarray]) -> float:
    if columns is not None:
        a = a[:, columns]
    return float(np.max(np.abs(a))) if a.size else 0.0


def roundtrip_residuals(ens: PathEnsemble, qv: QuadraticVariation, i: int,
                        modes: tuple[str, ...] = ("analytic", "consistent"),
                        pk: Optional[DiscreteKernel] = None, nodes: Optional[np.ndarray] = None,
                        reversal: bool = True) -> list[Residual]:
    """Max-norm residuals of the bridge/transform lemmas and reversal identities.

    Without ``pk`` the ensemble holds martingale paths M; with ``pk`` it holds
    X paths and all maps act through kappa.  ``nodes`` restricts the maximum
    to a set of node indices.  Reversal identities need a uniform grid and are
    evaluated for the martingale (``pk`` absent) or through X^S.
    """
    _check_grid(ens, qv)
    out: list[Residual] = []
    if pk is None:
        kap = None
        cov_row = qv.cumulative
        r_TT = qv.total
    else:
        kap = kappa_matrix(pk, qv)
        R = covariance_from_kernel(pk_to_z(pk, qv))
        cov_row, r_TT = R[:, -1], float(R[-1, -1])
    ant = anticipative_bridge(ens, cov_row, r_TT).paths
    for mode in modes:
        alpha, beta = alpha_beta_m(qv, i, mode)
        if kap is not None:
            alpha, beta = conjugate(alpha, kap), conjugate(beta, kap)
        dY = ens.differences
        t_y = operator_paths(dY, beta.matrix)
        b_y = _pin(operator_paths(dY, alpha.matrix))
        bt = _pin(operator_paths(np.diff(t_y, axis=1), alpha.matrix))
        tb = operator_paths(np.diff(b_y, axis=1), beta.matrix)
        out.append(Residual(f"B{i}(T{i}) = anticipative", mode, _max_abs(bt - ant, nodes)))
        out.append(Residual(f"T{i}(B{i}) = identity", mode, _max_abs(tb - ens.paths, nodes)))
        if reversal and ens.grid.is_uniform:
            out.extend(_reversal_residuals(ens, qv, mode, pk, nodes))
    return out


def _reversal_residuals(ens: PathEnsemble, qv: QuadraticVariation, mode: str,
                        pk: Optional[DiscreteKernel], nodes) -> list[Residual]:
    if pk is not None:
        return xs_residuals(ens, pk, qv, mode, nodes)
    qv_r = qv.reversed()
    SM = time_reverse(ens)
    res = []
    for letter, fn in (("T", transform_T_martingale), ("B", bridge_B_martingale)):
        lhs = time_reverse(fn(ens, qv, 1, "operator", mode)).paths
        rhs = fn(SM, qv_r, 2, "operator", mode).paths
        res.append(Residual(f"S({letter}1(M)) = {letter}2(S(M))", mode, _max_abs(lhs - rhs, nodes)))
    return res


def xs_residuals(ens: PathEnsemble, pk: DiscreteKernel, qv: QuadraticVariation, mode: str,
                 nodes=None) -> list[Residual]:
    """Reversal identities through X^S computed with the X^S operators.

    X^S has prediction kernel k and reversed quadratic variation; the right
    side applies T2/B2 to X^S paths through kappa on the reversed measure,
    the left side builds (T1(X))^S from the reversed T1(M).
    """
    qv_r = qv.reversed()
    kap_r = kappa_matrix(pk, qv_r)
    M = prediction_martingale_path(ens, pk, qv, "via_kstar")
    xs = x_reversed(pk, M)
    res = []
    for letter in ("T", "B"):
        fn = transform_T_martingale if letter == "T" else bridge_B_martingale
        lhs = x_from_martingale(pk, time_reverse(fn(M, qv, 1, "operator", mode))).paths
        rhs = transform_volterra(xs, pk, qv_r, f"{letter}2", "operator", mode, kap=kap_r).paths
        res.append(Residual(f"({letter}1(X))^S = {letter}2(X^S)", mode, _max_abs(lhs - rhs, nodes)))
    return res


def write_residuals_csv(path, residuals: list[Residual]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["identity", "mode", "max_residual"])
        for r in residuals:
            w.writerow([r.identity, r.mode, repr(r.max_residual)])
