"""Time grids, Volterra kernels, covariances and the prediction martingale.

Conventions
-----------
A grid with ``n`` cells has nodes ``t_0 = 0 < t_1 < ... < t_n = T``; cell
``j`` is ``[t_j, t_{j+1})`` for ``j = 0..n-1``.  Kernel matrices have one
row per node and one column per cell, so ``Z[i, j] = z(t_i, m_j)`` where
``m_j`` is the evaluation point of cell ``j``.  Entries with ``j >= i`` are
zero (the evaluation point is never before ``t_i``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import DegenerateKernelError, DimensionError, DomainError, ConvergenceError, SchemaError
from .specfun import gamma_fn, gauss_2f1

KernelFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise DomainError("a grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise DomainError("grids start at t = 0")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self) -> int:
        """Number of cells."""
        return self.nodes.size - 1

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def cell_weights(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @property
    def is_uniform(self) -> bool:
        d = self.cell_weights
        return bool(np.allclose(d, d[0], rtol=1e-12, atol=0.0))

    def refine(self) -> "TimeGrid":
        """Split every cell in two."""
        fine = np.empty(2 * self.n + 1)
        fine[0::2] = self.nodes
        fine[1::2] = self.midpoints
        return TimeGrid(fine)

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t`` (within 1e-12 relative)."""
        i = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise DomainError(f"{t} is not a grid node")
        return i

    def subgrid(self, count: int = 8) -> np.ndarray:
        """Indices of ``count`` roughly equispaced interior nodes."""
        idx = np.rint(np.arange(1, count + 1) * self.n / (count + 1)).astype(int)
        idx = np.unique(np.clip(idx, 1, self.n - 1))
        return idx

    def same_as(self, other: "TimeGrid") -> bool:
        return self.nodes.shape == other.nodes.shape and bool(np.all(self.nodes == other.nodes))


def make_grid(T: float, n: int, scheme: str = "uniform") -> TimeGrid:
    """Uniform partition of [0, T] into ``n`` cells."""
    if scheme != "uniform":
        raise DomainError(f"unknown grid scheme {scheme!r}")
    if not (T > 0) or not math.isfinite(T):
        raise DomainError("horizon must be positive")
    if int(n) != n or n < 2:
        raise DomainError("need at least two cells")
    return TimeGrid(T * np.arange(n + 1) / n)


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    grid: TimeGrid
    values: np.ndarray
    eval_point: str = "midpoint"
    name: str = "custom"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        n = self.grid.n
        if vals.shape != (n + 1, n):
            raise DimensionError(f"kernel matrix must be {(n + 1, n)}, got {vals.shape}")
        vals[np.triu_indices(n + 1, k=0, m=n)] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def terminal_row(self) -> np.ndarray:
        return self.values[-1]


EVAL_POINTS = ("midpoint", "left", "rms")
RMS_NODES = 8


def _eval_points(grid: TimeGrid, eval_point: str) -> np.ndarray:
    if eval_point in ("midpoint", "rms"):
        return grid.midpoints
    if eval_point == "left":
        return grid.nodes[:-1]
    raise DomainError(f"unknown evaluation point {eval_point!r}")


def _cell_rms(kernel: KernelFn, grid: TimeGrid, ii: np.ndarray, jj: np.ndarray,
              exponents: tuple[float, float]) -> np.ndarray:
    """Signed root-mean-square of kernel(t_i, .) over cell j.

    ``exponents`` are the powers of the squared kernel at s = 0 and at s = t;
    cells touching those points use the matching Gauss-Jacobi weight.
    """
    zero_exp, diag_exp = exponents
    nodes = grid.nodes
    out = np.empty(ii.size)
    for at_zero in (False, True):
        for at_diag in (False, True):
            sel = ((jj == 0) == at_zero) & ((jj == ii - 1) == at_diag)
            if not np.any(sel):
                continue
            alpha = diag_exp if at_diag else 0.0
            beta = zero_exp if at_zero else 0.0
            x, w = roots_jacobi(RMS_NODES, alpha, beta)
            i, j = ii[sel], jj[sel]
            lo, half = nodes[j][:, None], 0.5 * (nodes[j + 1] - nodes[j])[:, None]
            u = lo + half * (1.0 + x[None, :])
            t = np.broadcast_to(nodes[i][:, None], u.shape)
            z2 = np.asarray(kernel(t, u), dtype=float) ** 2
            weight = (1.0 - x) ** alpha * (1.0 + x) ** beta
            mean_sq = 0.5 * ((z2 / weight) @ w)
            sign = np.sign(np.asarray(kernel(nodes[i], nodes[j] + half[:, 0]), dtype=float))
            out[sel] = np.where(sign == 0, 1.0, sign) * np.sqrt(mean_sq)
    return out


def discretize_kernel(kernel: KernelFn, grid: TimeGrid, eval_point: str = "midpoint",
                      name: str = "custom",
                      exponents: tuple[float, float] = (0.0, 0.0)) -> DiscreteKernel:
    """Kernel matrix on nodes x cells, zero for cells at or after the node.

    ``midpoint`` and ``left`` sample ``kernel(t_i, s)`` at one point per cell.
    ``rms`` stores the signed root-mean-square of ``kernel(t_i, .)`` over the
    cell, so that ``sum_j Z[i, j]**2 dt_j`` reproduces the variance at
    ``t_i``; ``exponents`` describe endpoint singularities of the squared
    kernel (see ``_cell_rms``).
    """
    n = grid.n
    ii, jj = np.tril_indices(n + 1, k=-1, m=n)
    vals = np.zeros((n + 1, n))
    if eval_point == "rms":
        vals[ii, jj] = _cell_rms(kernel, grid, ii, jj, exponents)
    else:
        m = _eval_points(grid, eval_point)
        vals[ii, jj] = kernel(grid.nodes[ii], m[jj])
    if not np.all(np.isfinite(vals)):
        raise DomainError("kernel is not finite at the chosen evaluation points")
    return DiscreteKernel(grid, vals, eval_point, name)


def fbm_constant(H: float) -> float:
    """C(H) of the Molchan-Golosov kernel."""
    return math.sqrt(2.0 * H * gamma_fn(H + 0.5) * gamma_fn(1.5 - H) / gamma_fn(2.0 - 2.0 * H))


def _check_hurst(H: float) -> None:
    if not (0.0 < H < 1.0):
        raise DomainError("Hurst index must lie in (0, 1)")


def fbm_kernel(H: float, t, s):
    """Volterra kernel of fractional Brownian motion, vectorized over t and s.

    Zero for s >= t.  Raises DomainError for s <= 0 where the kernel is
    singular.
    """
    _check_hurst(H)
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    out = np.zeros(t.shape)
    live = s < t
    if np.any(s[live] <= 0.0):
        raise DomainError("fbm_kernel is singular at s = 0")
    if np.any(live):
        tl, sl = t[live], s[live]
        if H == 0.5:
            out[live] = 1.0
        else:
            pre = fbm_constant(H) / gamma_fn(H + 0.5)
            hyp = gauss_2f1(0.5 - H, H - 0.5, H + 0.5, (sl - tl) / sl)
            out[live] = pre * (tl - sl) ** (H - 0.5) * np.atleast_1d(hyp)
    return float(out) if out.ndim == 0 else out


def fbm_covariance(H: float, s, t):
    """Closed-form covariance of fractional Brownian motion."""
    _check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    out = 0.5 * (np.abs(s) ** (2 * H) + np.abs(t) ** (2 * H) - np.abs(t - s) ** (2 * H))
    return float(out) if np.ndim(out) == 0 else out


def fbm_covariance_matrix(H: float, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return fbm_covariance(H, times[:, None], times[None, :])


def brownian_kernel(t, s):
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    return np.where(s < t, 1.0, 0.0)


def fbm_discrete_kernel(H: float, grid: TimeGrid, eval_point: str = "rms") -> DiscreteKernel:
    """Discretized fBm kernel; ``rms`` cells are cached for uniform grids."""
    _check_hurst(H)
    if eval_point not in EVAL_POINTS:
        raise DomainError(f"unknown evaluation point {eval_point!r}")
    if grid.is_uniform:
        vals = _fbm_values_uniform(float(H), grid.horizon, grid.n, eval_point)
        name = "bm" if H == 0.5 else f"fbm({H:g})"
        return DiscreteKernel(grid, vals, eval_point, name)
    return _fbm_discrete(H, grid, eval_point)


def _fbm_discrete(H: float, grid: TimeGrid, eval_point: str) -> DiscreteKernel:
    if H == 0.5:
        return discretize_kernel(brownian_kernel, grid, eval_point, name="bm")
    # squared kernel behaves like s^{-|2H-1|} at 0 and (t-s)^{2H-1} on the diagonal
    exponents = (-abs(2.0 * H - 1.0), min(2.0 * H - 1.0, 0.0))
    return discretize_kernel(partial(fbm_kernel, H), grid, eval_point,
                             name=f"fbm({H:g})", exponents=exponents)


@lru_cache(maxsize=16)
def _fbm_values_uniform(H: float, T: float, n: int, eval_point: str) -> np.ndarray:
    return _fbm_discrete(H, make_grid(T, n), eval_point).values


def covariance_from_kernel(dk: DiscreteKernel) -> np.ndarray:
    """Node covariance R[i, k] = sum_j Z[i, j] Z[k, j] dt_j."""
    z = dk.values
    return (z * dk.grid.cell_weights) @ z.T


@dataclass(frozen=True, eq=False)
class QuadraticVariation:
    """Variance function of the prediction martingale on a grid.

    ``increments[j]`` is the mass of cell ``j``; ``cumulative`` holds the
    node values with ``cumulative[0] = 0``.
    """

    grid: TimeGrid
    increments: np.ndarray
    cumulative: np.ndarray = field(init=False)

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        if inc.shape != (self.grid.n,):
            raise DimensionError("one increment per cell expected")
        if np.any(~(inc > 0)):
            raise DegenerateKernelError("quadratic variation must increase strictly on every cell")
        inc.setflags(write=False)
        cum = np.concatenate(([0.0], np.cumsum(inc)))
        cum.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "cumulative", cum)

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])

    @property
    def head(self) -> np.ndarray:
        """Inclusive head sums: mass of cells 0..j (the right-node value)."""
        return self.cumulative[1:]

    @property
    def tail(self) -> np.ndarray:
        """Inclusive tail sums: mass of cells j..n-1."""
        return np.cumsum(self.increments[::-1])[::-1]

    def restrict(self, n_cells: int) -> "QuadraticVariation":
        """The same measure on the first ``n_cells`` cells."""
        return QuadraticVariation(TimeGrid(self.grid.nodes[: n_cells + 1]), self.increments[:n_cells])

    def reversed(self) -> "QuadraticVariation":
        """Variance function of the time-reversed martingale (uniform grids)."""
        if not self.grid.is_uniform:
            raise DomainError("time reversal needs a uniform grid")
        return QuadraticVariation(self.grid, self.increments[::-1].copy())


def quadratic_variation(dk: DiscreteKernel) -> QuadraticVariation:
    """d<M>_j = Z[n, j]^2 dt_j from the terminal kernel row."""
    row = dk.terminal_row
    if np.any(row == 0.0):
        raise DegenerateKernelError("terminal kernel row vanishes on some cell")
    return QuadraticVariation(dk.grid, row ** 2 * dk.grid.cell_weights)


def brownian_qv(grid: TimeGrid) -> QuadraticVariation:
    return QuadraticVariation(grid, grid.cell_weights.copy())


def prediction_kernel(dk: DiscreteKernel) -> DiscreteKernel:
    """k(t_i, m_j) = Z[i, j] / Z[n, j]."""
    row = dk.terminal_row
    if np.any(row == 0.0):
        raise DegenerateKernelError("terminal kernel row vanishes on some cell")
    return DiscreteKernel(dk.grid, dk.values / row, dk.eval_point, name=f"k[{dk.name}]")


# ---------------------------------------------------------------------------
# reciprocal prediction kernel k* of fBm
# ---------------------------------------------------------------------------

_KSTAR_NODES = 24


def _kstar_integral(H: float, T: float, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    """int_t^T u^{H-1/2} (u-t)^{H-1/2} / (u-s) du for arrays with 0 < s < t < T."""
    beta = H - 0.5
    L = T - t
    d = (t - s) / L
    v1 = np.minimum(1.0, d)
    xj, wj = roots_jacobi(_KSTAR_NODES, 0.0, beta)
    xl, wl = roots_legendre(_KSTAR_NODES)

    def g(v):
        u = t[:, None] + L[:, None] * v
        return u ** beta / (u - s[:, None])

    # [0, v1]: endpoint weight v^beta absorbed into the Jacobi rule
    v = 0.5 * v1[:, None] * (1.0 + xj[None, :])
    total = (0.5 * v1) ** (beta + 1.0) * (g(v) @ wj)
    # [v1, 1]: geometric doubling keeps every piece at least its own length from the pole
    n_pieces = np.where(v1 < 1.0, np.ceil(np.log2(1.0 / v1) - 1e-12), 0).astype(int)
    for k in range(int(n_pieces.max(initial=0))):
        live = k < n_pieces
        a = v1 * 2.0 ** k
        b = np.minimum(2.0 * a, 1.0)
        half = 0.5 * (b - a)
        vv = (a + b)[:, None] * 0.5 + half[:, None] * xl[None, :]
        piece = half * ((vv ** beta * g(vv)) @ wl)
        total = total + np.where(live, piece, 0.0)
    return L ** (H + 0.5) * total


def fbm_kstar(H: float, T: float, t, s):
    """Kernel k*(t, s) with M_t = int_0^T k*(t, s) dX_s for fBm.

    Zero for s >= t; identically one on s < t = T.  Vectorized over t and s.
    """
    _check_hurst(H)
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    if np.any(t > T * (1 + 1e-12)):
        raise DomainError("k* needs t <= T")
    out = np.zeros(t.shape)
    live = s < t
    if np.any(s[live] <= 0.0):
        raise DomainError("k* is singular at s = 0")
    out[live] = 1.0
    inner = live & (t < T)
    if H != 0.5 and np.any(inner):
        ti, si = t[inner], s[inner]
        integral = _kstar_integral(H, T, ti, si)
        if not np.all(np.isfinite(integral)):
            raise ConvergenceError("k* quadrature produced non-finite values", residual=float("inf"))
        fac = math.sin(math.pi * (H - 0.5)) / math.pi
        out[inner] += fac * si ** (0.5 - H) * (ti - si) ** (0.5 - H) * integral
    return float(out) if out.ndim == 0 else out


def fbm_kstar_matrix(H: float, grid: TimeGrid, eval_point: str = "midpoint") -> np.ndarray:
    """k*(t_i, m_j) on nodes x cells."""
    m = _eval_points(grid, eval_point)
    n = grid.n
    ii, jj = np.tril_indices(n + 1, k=-1, m=n)
    out = np.zeros((n + 1, n))
    out[ii, jj] = fbm_kstar(H, grid.horizon, grid.nodes[ii], m[jj])
    return out


# ---------------------------------------------------------------------------
# CSV import/export: header i,j,value
# ---------------------------------------------------------------------------

def write_matrix_csv(path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "value"])
        for i in range(matrix.shape[0]):
            for j in range(matrix.shape[1]):
                if matrix[i, j] != 0.0:
                    w.writerow([i, j, repr(float(matrix[i, j]))])


def read_matrix_csv(path, shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["i", "j", "value"]:
            raise SchemaError(f"expected header i,j,value, got {header}")
        for lineno, row in enumerate(r, start=2):
            if len(row) != 3:
                raise SchemaError(f"line {lineno}: expected 3 fields")
            try:
                i, j, v = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
            if not (0 <= i < shape[0] and 0 <= j < shape[1]):
                raise SchemaError(f"line {lineno}: index ({i}, {j}) outside {shape}")
            out[i, j] = v
    return out


def write_kernel_csv(path, dk: DiscreteKernel) -> None:
    write_matrix_csv(path, dk.values)


def read_kernel_csv(path, grid: TimeGrid, name: str = "custom") -> DiscreteKernel:
    return DiscreteKernel(grid, read_matrix_csv(path, (grid.n + 1, grid.n)), "custom", name)
