"""Dense matrix versions of the Hardy-type operators and their relatives.

Operators act on cell functions ``f[j]`` (value of an integrand on cell
``j``) and are weighted by the cell masses ``delta[j]`` of the quadratic
variation.  Adjoints are taken with respect to that weight, i.e. ``A* =
D^-1 A^T D`` with ``D = diag(delta)``.

Two operator modes are provided.  ``analytic`` uses the direct
discretizations ``alpha = I - H`` and ``beta = I - H*``; they satisfy the
continuum identities up to O(dt).  ``consistent`` keeps ``beta`` and
replaces ``alpha`` by the delta-weighted pseudo-inverse of ``beta`` composed
with the projection ``eta``, which makes ``beta @ alpha == eta`` hold to
rounding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError, SingularMatrixError
from .kernels import DiscreteKernel, QuadraticVariation

log = logging.getLogger(__name__)

TAGS = ("full", "zero-mean")
MODES = ("analytic", "consistent")
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Matrix acting on cell functions, with the weight defining "zero mean".

    ``weight`` defaults to the cell masses of ``measure``; for operators on
    X-integrands it is ``kappa^T delta`` so that the zero-mean condition reads
    ``sum_j (kappa f)_j delta_j = 0``.
    """

    matrix: np.ndarray
    measure: QuadraticVariation
    domain_tag: str = "full"
    range_tag: str = "full"
    weight: Optional[np.ndarray] = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        n = self.measure.grid.n
        if m.shape != (n, n):
            raise DimensionError(f"operator must be {n}x{n}, got {m.shape}")
        if self.domain_tag not in TAGS or self.range_tag not in TAGS:
            raise DomainError("tags must be 'full' or 'zero-mean'")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        w = self.measure.increments if self.weight is None else np.array(self.weight, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Image of one cell function (shape (n,)) or of columns (n, k)."""
        return self.matrix @ np.asarray(f, dtype=float)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.matrix @ other.matrix, self.measure, other.domain_tag,
                              self.range_tag, self.weight)

    def zero_mean_defect(self) -> float:
        """max_j |sum_u w_u A[u, j]| relative to the column scale."""
        sums = self.weight @ self.matrix
        scale = np.abs(self.weight) @ np.abs(self.matrix)
        return float(np.max(np.abs(sums) / np.maximum(scale, 1e-300)))

    def weighted_norm(self) -> float:
        """Operator 2-norm in L2(delta)."""
        s = np.sqrt(self.measure.increments)
        return float(np.linalg.norm(s[:, None] * self.matrix / s[None, :], 2))


def inner(qv: QuadraticVariation, f: np.ndarray, g: np.ndarray) -> float:
    return float(np.sum(np.asarray(f) * np.asarray(g) * qv.increments))


def eta_matrix(qv: QuadraticVariation) -> OperatorMatrix:
    """Projection f -> f - <f, 1>/<M>_T onto zero-mean cell functions."""
    n = qv.grid.n
    m = np.eye(n) - np.outer(np.ones(n), qv.increments) / qv.total
    return OperatorMatrix(m, qv, "full", "zero-mean")


def hardy_matrix(qv: QuadraticVariation, i: int, adjoint: bool = False) -> OperatorMatrix:
    """H^1 averages over cells 0..j, H^2 over cells j..n-1 (inclusive)."""
    d = qv.increments
    n = d.size
    lower = np.tril(np.ones((n, n)))
    if i == 1:
        m = lower * d[None, :] / qv.head[:, None]
    elif i == 2:
        m = lower.T * d[None, :] / qv.tail[:, None]
    else:
        raise DomainError("Hardy operator index must be 1 or 2")
    if adjoint:
        m = m.T * d[None, :] / d[:, None]
    return OperatorMatrix(m, qv)


def weighted_pinv(qv: QuadraticVariation, a: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse of ``a`` for the inner product weighted by delta."""
    s = np.sqrt(qv.increments)
    p = np.linalg.pinv(s[:, None] * a / s[None, :], rcond=1e-13)
    return p * s[None, :] / s[:, None]


def alpha_beta_m(qv: QuadraticVariation, i: int, mode: str = "analytic") -> tuple[OperatorMatrix, OperatorMatrix]:
    """(alpha^{M,i}, beta^{M,i}) as matrices."""
    if mode not in MODES:
        raise DomainError(f"unknown operator mode {mode!r}")
    n = qv.grid.n
    beta = np.eye(n) - hardy_matrix(qv, i, adjoint=True).matrix
    if mode == "analytic":
        alpha = np.eye(n) - hardy_matrix(qv, i).matrix
    else:
        alpha = weighted_pinv(qv, beta) @ eta_matrix(qv).matrix
    return (OperatorMatrix(alpha, qv, "zero-mean", "full"),
            OperatorMatrix(beta, qv, "full", "zero-mean"))


# ---------------------------------------------------------------------------
# the isometry kappa between X-integrands and M-integrands
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Kappa:
    """kappa and its inverse; ``condition`` is the 2-norm condition number."""

    forward: np.ndarray
    inverse: np.ndarray
    condition: float

    def to_m(self, f: np.ndarray) -> np.ndarray:
        return self.forward @ f

    def to_x(self, g: np.ndarray) -> np.ndarray:
        return self.inverse @ g


def kappa_forward(pk: DiscreteKernel) -> np.ndarray:
    """kappa[j, i] = K[i+1, j] - K[i, j]: image of the cell-i indicator.

    The step function 1_[0, t_i) maps to the kernel row K[i]; so that
    dX = kappa^T dM for the cell increments.
    """
    K = pk.values
    return (K[1:] - K[:-1]).T


def kappa_matrix(pk: DiscreteKernel, qv: QuadraticVariation) -> Kappa:
    """kappa with its inverse from an LU solve with partial pivoting."""
    if not pk.grid.same_as(qv.grid):
        raise DimensionError("kernel and quadratic variation live on different grids")
    kap = kappa_forward(pk)
    cond = float(np.linalg.cond(kap))
    log.info("kappa condition number %.3e (n=%d)", cond, kap.shape[0])
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(f"kappa is near-degenerate (condition number {cond:.3e})")
    lu = scipy.linalg.lu_factor(kap)
    inv = scipy.linalg.lu_solve(lu, np.eye(kap.shape[0]))
    return Kappa(kap, inv, cond)


def kappa_inverse_from_kstar(kstar: np.ndarray) -> np.ndarray:
    """kappa^{-1} assembled from k*(t_i, m_j): 1_[0, t_i) maps to k*(t_i, .)."""
    kstar = np.asarray(kstar, dtype=float)
    return (kstar[1:] - kstar[:-1]).T


def conjugate(op: OperatorMatrix, kap: Kappa) -> OperatorMatrix:
    """kappa^{-1} A kappa with tags carried over and X-side zero-mean weight."""
    weight = kap.forward.T @ op.measure.increments
    return OperatorMatrix(kap.inverse @ op.matrix @ kap.forward, op.measure,
                          op.domain_tag, op.range_tag, weight)


def alpha_beta_x(pk: DiscreteKernel, qv: QuadraticVariation, i: int, mode: str = "analytic",
                 kap: Optional[Kappa] = None) -> tuple[OperatorMatrix, OperatorMatrix]:
    """(alpha^{X,i}, beta^{X,i}) = kappa^{-1} (alpha^{M,i}, beta^{M,i}) kappa."""
    kap = kap or kappa_matrix(pk, qv)
    a, b = alpha_beta_m(qv, i, mode)
    return conjugate(a, kap), conjugate(b, kap)


def eta_m_conjugated(pk: DiscreteKernel, qv: QuadraticVariation, kap: Optional[Kappa] = None) -> OperatorMatrix:
    kap = kap or kappa_matrix(pk, qv)
    return conjugate(eta_matrix(qv), kap)


def increment_covariance(node_cov: np.ndarray) -> np.ndarray:
    """Cov(dX_i, dX_k) from node covariances R (nodes t_0..t_n)."""
    R = np.asarray(node_cov, dtype=float)
    return R[1:, 1:] - R[:-1, 1:] - R[1:, :-1] + R[:-1, :-1]


def eta_x(node_cov: np.ndarray, qv: QuadraticVariation) -> OperatorMatrix:
    """Projection along constants in the X inner product <f, g> = f^T C g.

    ``C`` is the covariance of the cell increments of X, built from the node
    covariance ``node_cov``.
    """
    C = increment_covariance(node_cov)
    n = C.shape[0]
    if C.shape != (n, n) or n != qv.grid.n:
        raise DimensionError("covariance does not match the grid")
    ones = np.ones(n)
    c1 = C @ ones
    m = np.eye(n) - np.outer(ones, c1) / float(ones @ c1)
    return OperatorMatrix(m, qv, "full", "zero-mean", weight=c1)


# ---------------------------------------------------------------------------
# explicit quadrature formulas for alpha^{X,i} 1_[0,t) and beta^{X,i} 1_[0,t)
# ---------------------------------------------------------------------------

def explicit_alpha_beta_x(pk: DiscreteKernel, qv: QuadraticVariation, kstar: np.ndarray,
                          i: int, t_index: int, which: str) -> np.ndarray:
    """Direct quadrature of alpha^{X,i} 1_[0,t) or beta^{X,i} 1_[0,t).

    ``kstar[u]`` holds k*(t_u, .) on the cells (nodes x cells) and ``pk`` the
    prediction kernel.  The d<M>_u integrals are summed cell by cell with the
    weights that correspond to the inclusive head and tail sums of the Hardy
    matrices, so that feeding the columns of a computed kappa^{-1} in place of
    k* reproduces the conjugated operators to rounding.  The result is a cell
    function of ``s``.
    """
    if which not in ("alpha", "beta"):
        raise DomainError("which must be 'alpha' or 'beta'")
    if i not in (1, 2):
        raise DomainError("index must be 1 or 2")
    n = qv.grid.n
    if not (1 <= t_index <= n):
        raise DomainError("t must be a node in (0, T]")
    kstar = np.asarray(kstar, dtype=float)
    if kstar.shape != (n + 1, n):
        raise DimensionError("k* matrix must be nodes x cells")
    d, head, tail = qv.increments, qv.head, qv.tail
    kt = pk.values[t_index]                 # k(t, .) on the cells, zero from t on
    ind = (np.arange(n) < t_index).astype(float)
    kd = kt * d
    if which == "beta" and i == 1:
        # 1_[0,t) - sum_u k*(t_{u+1}, .) k(t, u) d<M>_u / <M>_u
        return ind - (kd / head) @ kstar[1:]
    if which == "beta" and i == 2:
        # 1_[0,t) - sum_u (1 - k*(t_u, .)) k(t, u) d<M>_u / <M>_{T,u}
        return ind - (kd / tail) @ (1.0 - kstar[:-1])
    if i == 1:
        inner = np.cumsum(kd)              # int_0^u k(t, v) d<M>_v, right cell ends
        # cells c >= 1 paired with k* at their left node t_c
        w = kd[1:] / head[1:] - inner[:-1] * d[1:] / (head[:-1] * head[1:])
        return ind - inner[-1] / qv.total + w @ kstar[1:-1]
    inner = np.cumsum(kd[::-1])[::-1]     # int_u^t k(t, v) d<M>_v, inclusive
    w = kd[:-1] / tail[:-1] - inner[1:] * d[:-1] / (tail[:-1] * tail[1:])
    out = ind - w @ kstar[1:-1]
    # the last cell carries H^2 k(t, .) at its own value (nonzero only for t = T)
    return out - inner[-1] / tail[-1]


def conjugated_image(op: OperatorMatrix, t_index: int) -> np.ndarray:
    """A 1_[0, t) for an operator on cell functions."""
    g = (np.arange(op.n) < t_index).astype(float)
    return op.apply(g)


def indicator_matrix(n: int) -> np.ndarray:
    """G[j, i] = 1 for cells j < i: columns are 1_[0, t_i), i = 0..n."""
    return (np.arange(n)[:, None] < np.arange(n + 1)[None, :]).astype(float)
