"""Two-sided Fourier-Laguerre expansion of a Gaussian martingale.

The split time T divides [0, T_max] into a past part, carrying the
coefficients eps_n for n >= 0, and a future part, carrying those for n < 0.
With C = <M> the integrands are

    l_n(s)  = L_n(ln(C_T/C_s)) / sqrt(C_T)                   s < T, n >= 0
    l_-n(s) = -sqrt(C_T)/C_s * L_{n-1}(ln(C_s/C_T))          s > T, n >= 1

and eps_n = sum_j l_n(j) dM_j.  The infinite future is cut at T_max; the
share of each negative-order integrand lost to the cut is computed exactly
and stored with the coefficients.

Two discretizations of the logarithm are offered.  In ``analytic`` mode it
is evaluated at the left node of each cell, and the first cell uses the
cell midpoint of C.  ``consistent`` mode replaces ln by the discrete Hardy
sums sum_u delta_u / C_{u+1}.  With that choice eps_1 and eps_{-1}, eps_{-2}
reproduce the iterated Hardy-operator transforms to rounding.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, TruncationWarning
from .kernels import QuadraticVariation, TimeGrid
from .simulate import PathEnsemble
from .specfun import gauss_laguerre_rule, laguerre_all, laguerre_eval, laguerre_tail

MODES = ("analytic", "consistent")
RULES = ("cell", "point")
WARN_RATIO = 0.1
ERROR_RATIO = 0.5
ORTHO_NODES = 32


def make_two_sided_grid(T: float, T_max: float, n_inner: int, n_outer: int,
                        inner: str = "geometric", depth: int = 24) -> TimeGrid:
    """Grid on [0, T_max] with the split time T as a node.

    Cells beyond T grow geometrically.  Before T the default is also
    geometric, ``n_inner`` cells between T 2^-depth and T plus one cell
    [0, T 2^-depth]: the Laguerre integrands oscillate in ln(1/s), so a
    uniform grid cannot resolve them near s = 0.  ``inner="uniform"`` gives
    ``n_inner`` equal cells instead.
    """
    if not (0 < T < T_max) or not math.isfinite(T_max):
        raise DomainError("need 0 < T < T_max < inf")
    if n_inner < 1 or n_outer < 1:
        raise DomainError("need at least one cell on each side of T")
    if inner == "uniform":
        past = T * np.arange(n_inner + 1) / n_inner
    elif inner == "geometric":
        if depth < 1:
            raise DomainError("depth must be positive")
        past = np.concatenate(([0.0], T * 2.0 ** (-depth * np.arange(n_inner, -1, -1) / n_inner)))
    else:
        raise DomainError(f"unknown inner scheme {inner!r}")
    past[-1] = T
    outer = T * (T_max / T) ** (np.arange(1, n_outer + 1) / n_outer)
    outer[-1] = T_max
    return TimeGrid(np.concatenate((past, outer)))


def truncation_ratio(qv: QuadraticVariation, T_index: int) -> float:
    return float(qv.cumulative[T_index] / qv.total)


def negative_tail_mass(order: int, x_max: float, nodes: int = ORTHO_NODES) -> float:
    """Share of |l_-order|^2 lying beyond the cut: int_{x_max}^inf L_{order-1}^2 e^{-x} dx.

    Gauss-Laguerre after the shift x = x_max + y is exact here.
    """
    if order < 1:
        raise DomainError("negative orders start at 1")
    rule = gauss_laguerre_rule(nodes)
    vals = laguerre_eval(order - 1, x_max + rule.nodes) ** 2
    return math.exp(-x_max) * rule.integrate(vals)


def _check_split(qv: QuadraticVariation, T_index: int) -> None:
    if not (1 <= T_index <= qv.grid.n):
        raise DomainError("the split time must be a node in (0, T_max]")


def _past_log(qv: QuadraticVariation, T_index: int, mode: str) -> np.ndarray:
    """x_j for the cells j < T_index."""
    C = qv.cumulative
    d = qv.increments[:T_index]
    if mode == "analytic":
        left = C[:T_index].copy()
        left[0] = 0.5 * d[0]       # midpoint of the first cell avoids ln(inf)
        return np.log(C[T_index] / left)
    w = d / qv.head[:T_index]
    return np.cumsum(w[::-1])[::-1]


def _future_log(qv: QuadraticVariation, T_index: int, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """(y_j, C-weight_j) for the cells j >= T_index."""
    C = qv.cumulative
    if mode == "analytic":
        left = C[T_index:-1]
        return np.log(left / C[T_index]), left
    head = qv.head[T_index:]
    return np.cumsum(qv.increments[T_index:] / head), head


def integrand_matrix(qv: QuadraticVariation, T_index: int, orders: Sequence[int],
                     mode: str = "analytic") -> np.ndarray:
    """Rows l_n on the cells for each n in ``orders`` (pointwise rule)."""
    if mode not in MODES:
        raise DomainError(f"unknown mode {mode!r}")
    _check_split(qv, T_index)
    orders = [int(n) for n in orders]
    n_cells = qv.grid.n
    CT = qv.cumulative[T_index]
    out = np.zeros((len(orders), n_cells))
    pos = [n for n in orders if n >= 0]
    neg = [-n for n in orders if n < 0]
    if pos:
        L = laguerre_all(max(pos), _past_log(qv, T_index, mode))
        for r, n in enumerate(orders):
            if n >= 0:
                out[r, :T_index] = L[n] / math.sqrt(CT)
    if neg and T_index < n_cells:
        y, weight = _future_log(qv, T_index, mode)
        L = laguerre_all(max(neg) - 1, y)
        for r, n in enumerate(orders):
            if n < 0:
                out[r, T_index:] = -math.sqrt(CT) / weight * L[-n - 1]
    return out


def _antiderivative_future(m: int, y: np.ndarray) -> np.ndarray:
    # d/dy (L_m - L_{m+1}) = L_m
    L = laguerre_all(m + 1, y)
    return L[m] - L[m + 1]


def cell_integrals(qv: QuadraticVariation, T_index: int, orders: Sequence[int]) -> np.ndarray:
    """Exact integrals of l_n over each cell against d<M> (rows per order)."""
    _check_split(qv, T_index)
    C = qv.cumulative
    CT = C[T_index]
    sq = math.sqrt(CT)
    out = np.zeros((len(orders), qv.grid.n))
    with np.errstate(divide="ignore"):
        x = np.log(CT / C[: T_index + 1])    # x_0 = inf
    y = np.log(C[T_index:] / CT)
    for r, n in enumerate(orders):
        n = int(n)
        if n >= 0:
            z = np.zeros_like(x)
            finite = np.isfinite(x)
            z[finite] = laguerre_tail(n, x[finite])
            out[r, :T_index] = sq * (z[1:] - z[:-1])
        elif T_index < qv.grid.n:
            F = _antiderivative_future(-n - 1, y)
            out[r, T_index:] = -sq * (F[1:] - F[:-1])
    return out


@dataclass(frozen=True, eq=False)
class ExpansionCoefficients:
    """eps_n per path for n in ``orders``; ``values[p, r]`` belongs to ``orders[r]``."""

    T: float
    T_max: float
    T_index: int
    orders: tuple[int, ...]
    values: np.ndarray
    qv: QuadraticVariation
    mode: str
    truncation_ratio: float
    tail_mass: dict

    def __getitem__(self, n: int) -> np.ndarray:
        try:
            return self.values[:, self.orders.index(int(n))]
        except ValueError:
            raise KeyError(n) from None

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def CT(self) -> float:
        return float(self.qv.cumulative[self.T_index])


def epsilon_coefficients(ens: PathEnsemble, qv: QuadraticVariation, T_index: int,
                         n_plus: int, n_minus: int, mode: str = "analytic") -> ExpansionCoefficients:
    """Discrete Wiener integrals eps_n, -n_minus <= n <= n_plus."""
    if not ens.grid.same_as(qv.grid):
        raise DimensionError("paths and quadratic variation live on different grids")
    _check_split(qv, T_index)
    if n_plus < 0 or n_minus < 0:
        raise DomainError("expansion orders must be nonnegative")
    ratio = truncation_ratio(qv, T_index)
    if ratio > WARN_RATIO:
        warnings.warn(f"<M>_T/<M>_Tmax = {ratio:.3g} exceeds {WARN_RATIO}; the future side is "
                      "heavily truncated", TruncationWarning, stacklevel=2)
    orders = tuple(range(-n_minus, n_plus + 1))
    L = integrand_matrix(qv, T_index, orders, mode)
    values = ens.differences @ L.T
    # l_0 = 1/sqrt(C_T) on the past: eps_0 is the scaled terminal value
    values[:, orders.index(0)] = ens.paths[:, T_index] / math.sqrt(qv.cumulative[T_index])
    x_max = -math.log(ratio)
    tails = {-m: negative_tail_mass(m, x_max) for m in range(1, n_minus + 1)}
    grid = qv.grid
    return ExpansionCoefficients(float(grid.nodes[T_index]), grid.horizon, T_index, orders,
                                 values, qv, mode, ratio, tails)


# ---------------------------------------------------------------------------
# reconstruction and functional expansion
# ---------------------------------------------------------------------------

def reconstruct_terms(coeffs: ExpansionCoefficients, t_index: int, N: int) -> np.ndarray:
    """Terms sqrt(C_T) zeta_n(ln(C_T/C_t)) eps_n for n = 0..N, shape (paths, N+1)."""
    if not (1 <= t_index <= coeffs.T_index):
        raise DomainError("reconstruction needs 0 < t <= T")
    if N < 0 or N > max(coeffs.orders):
        raise DomainError(f"N must lie in [0, {max(coeffs.orders)}]")
    C = coeffs.qv.cumulative
    y = math.log(coeffs.CT / C[t_index])
    zeta = np.array([laguerre_tail(n, y) for n in range(N + 1)])
    eps = np.stack([coeffs[n] for n in range(N + 1)], axis=1)
    return math.sqrt(coeffs.CT) * zeta[None, :] * eps


def reconstruct_value(coeffs: ExpansionCoefficients, t_index: int, N: int) -> np.ndarray:
    """Partial sum of the expansion of M_t over n = 0..N, one value per path."""
    if t_index == coeffs.T_index:
        # zeta_n(0) = delta_{n0}
        return math.sqrt(coeffs.CT) * coeffs[0]
    return reconstruct_terms(coeffs, t_index, N).sum(axis=1)


def parseval_target(qv: QuadraticVariation, T_index: int, t_index: int, N: int) -> float:
    """Expected squared error of the order-N reconstruction of M_t: the Parseval tail."""
    C = qv.cumulative
    CT = C[T_index]
    y = math.log(CT / C[t_index])
    head = sum(laguerre_tail(n, y) ** 2 for n in range(N + 1))
    return float(max(C[t_index] - CT * head, 0.0))


@dataclass(frozen=True, eq=False)
class FunctionalExpansion:
    """c_n for each order, the partial sums over |n| <= N and the exact Z per path."""

    orders: tuple[int, ...]
    c: np.ndarray
    levels: tuple[int, ...]
    partial: np.ndarray       # (paths, levels)
    exact: np.ndarray

    def coefficient(self, n: int) -> float:
        return float(self.c[self.orders.index(int(n))])


def expand_functional(f: np.ndarray, coeffs: ExpansionCoefficients, paths: Optional[PathEnsemble] = None,
                      rule: str = "cell") -> FunctionalExpansion:
    """Coefficients c_n = sum_j f_j l_n(j) delta_j of Z = sum_j f_j dM_j.

    ``rule="cell"`` integrates l_n exactly over each cell, ``"point"`` uses
    the same pointwise values as the coefficients.  ``paths`` supplies the
    martingale increments for the exact Z.
    """
    if rule not in RULES:
        raise DomainError(f"unknown rule {rule!r}")
    qv = coeffs.qv
    f = np.asarray(f, dtype=float)
    if f.shape != (qv.grid.n,):
        raise DimensionError("one value of f per cell expected")
    orders = coeffs.orders
    if rule == "cell":
        W = cell_integrals(qv, coeffs.T_index, orders)
    else:
        W = integrand_matrix(qv, coeffs.T_index, orders, coeffs.mode) * qv.increments[None, :]
    c = W @ f
    levels = tuple(range(0, max(abs(n) for n in orders) + 1))
    partial = np.empty((coeffs.n_paths, len(levels)))
    absn = np.abs(np.asarray(orders))
    for k, N in enumerate(levels):
        sel = absn <= N
        partial[:, k] = coeffs.values[:, sel] @ c[sel]
    exact = paths.differences @ f if paths is not None else np.full(coeffs.n_paths, np.nan)
    return FunctionalExpansion(orders, c, levels, partial, exact)


# ---------------------------------------------------------------------------
# iterated transforms
# ---------------------------------------------------------------------------

def _beta1(qv: QuadraticVariation, g: np.ndarray) -> np.ndarray:
    # (I - H^{1,*}) g with (H^{1,*}g)_j = sum_{u >= j} g_u delta_u / C_{u+1}
    w = g * qv.increments / qv.head
    return g - np.cumsum(w[::-1])[::-1]


def _alpha1(qv: QuadraticVariation, g: np.ndarray) -> np.ndarray:
    # (I - H^1) g with (H^1 g)_j = sum_{u <= j} g_u delta_u / C_{j+1}
    return g - np.cumsum(g * qv.increments) / qv.head


def iterated_integrand(qv: QuadraticVariation, T_index: int, n: int) -> np.ndarray:
    """Cell function of T^n at time T: beta^n or alpha^|n| applied to 1_[0,T)."""
    g = (np.arange(qv.grid.n) < T_index).astype(float)
    step = _beta1 if n > 0 else _alpha1
    for _ in range(abs(n)):
        g = step(qv, g)
    return g


def iterate_transform_check(ens: PathEnsemble, qv: QuadraticVariation, T_index: int, n: int,
                            mode: str = "analytic") -> float:
    """max over paths of |T^n_T(M) - sqrt(C_T) eps_n|.

    T^n_T(M) is computed by iterating the Hardy-operator transform on the
    integrand, which is the same as applying the operator transform to the
    path |n| times and reading it at T.
    """
    if not (-4 <= n <= 4):
        raise DomainError("iteration depth limited to |n| <= 4")
    _check_split(qv, T_index)
    if n == 0:
        return 0.0
    dM = ens.differences
    lhs = dM @ iterated_integrand(qv, T_index, n)
    L = integrand_matrix(qv, T_index, (n,), mode)[0]
    rhs = math.sqrt(qv.cumulative[T_index]) * (dM @ L)
    return float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0


# ---------------------------------------------------------------------------
# orthonormality and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    n: int
    m: int
    value: float
    target: float


def orthonormality_rows(n_max: int = 10, nodes: int = ORTHO_NODES) -> list[ReportRow]:
    """Gram matrix of l_n, |n|, |m| <= n_max, after the substitution x = |ln(C_s/C_T)|.

    Past and future integrands have disjoint supports, so mixed-sign entries
    vanish identically; the rest reduce to int L_a L_b e^{-x} dx.
    """
    rule = gauss_laguerre_rule(nodes)
    L = laguerre_all(n_max, rule.nodes)
    rows = []
    for n in range(-n_max, n_max + 1):
        for m in range(-n_max, n_max + 1):
            if (n >= 0) != (m >= 0):
                value = 0.0
            else:
                a = n if n >= 0 else -n - 1
                b = m if m >= 0 else -m - 1
                value = rule.integrate(L[a] * L[b])
            rows.append(ReportRow(n, m, value, float(n == m)))
    return rows


def write_coefficients_csv(path, coeffs: ExpansionCoefficients) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "n", "value"])
        for p in range(coeffs.n_paths):
            for r, n in enumerate(coeffs.orders):
                w.writerow([p, n, repr(float(coeffs.values[p, r]))])


def write_report_csv(path, rows: Sequence[ReportRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "m", "value", "target"])
        for r in rows:
            w.writerow([r.n, r.m, repr(float(r.value)), repr(float(r.target))])
