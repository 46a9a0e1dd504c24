"""Special functions used by the fBm kernels and the Laguerre expansion.

Everything here works on real arguments only.  Functions accept scalars or
numpy arrays in their continuous argument and return the matching shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError

__all__ = [
    "QuadratureRule",
    "gamma_fn",
    "gauss_2f1",
    "hyp2f1_series",
    "laguerre_eval",
    "laguerre_direct",
    "laguerre_tail",
    "gauss_laguerre_rule",
]

# Lanczos approximation, g = 7, 9 terms.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

MAX_LAGUERRE_ORDER = 64
SERIES_RTOL = 1e-16
SERIES_MAX_TERMS = 1_000_000


def _lanczos(x):
    # valid for x >= 0.5
    x = np.asarray(x, dtype=float) - 1.0
    acc = np.full_like(x, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc = acc + c / (x + i)
    t = x + _LANCZOS_G + 0.5
    # split the power to keep t**(x+0.5) finite for large x
    half = t ** ((x + 0.5) / 2.0)
    return _SQRT_2PI * half * (half * np.exp(-t)) * acc


def gamma_fn(x):
    """Gamma function for positive real arguments.

    Raises DomainError for x <= 0.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0) or np.any(~np.isfinite(arr)):
        raise DomainError("gamma_fn requires finite x > 0")
    out = np.empty_like(arr)
    small = arr < 0.5
    if np.any(small):
        xs = arr[small]
        # reflection keeps the Lanczos sum in its accurate range
        out[small] = np.pi / (np.sin(np.pi * xs) * _lanczos(1.0 - xs))
    if np.any(~small):
        out[~small] = _lanczos(arr[~small])
    return float(out) if out.ndim == 0 else out


def _gamma_real(x: float) -> float:
    """Gamma for any real x that is not a nonpositive integer."""
    if x > 0:
        return float(gamma_fn(x))
    if x == math.floor(x):
        raise DomainError(f"gamma pole at {x}")
    return math.pi / (math.sin(math.pi * x) * float(gamma_fn(1.0 - x)))


def _is_nonpos_int(v: float) -> bool:
    return v <= 0 and v == math.floor(v)


def hyp2f1_series(a: float, b: float, c: float, x, *, rtol: float = SERIES_RTOL,
                  max_terms: int = SERIES_MAX_TERMS):
    """Plain hypergeometric series for |x| < 1, vectorized over ``x``.

    Each entry stops once its current term drops below ``rtol`` times the
    partial sum.  Raises ConvergenceError when ``max_terms`` is reached.
    """
    if _is_nonpos_int(c):
        raise DomainError("c must not be a nonpositive integer")
    xs = np.asarray(x, dtype=float).ravel()
    if np.any(np.abs(xs) >= 1.0):
        raise DomainError("hyp2f1_series needs |x| < 1")
    total = np.ones_like(xs)
    term = np.ones_like(xs)
    active = np.arange(xs.size)
    k = 0
    while active.size:
        if k >= max_terms:
            resid = float(np.max(np.abs(term[active]) / np.maximum(np.abs(total[active]), 1e-300)))
            raise ConvergenceError("2F1 series did not converge", residual=resid)
        ratio = (a + k) * (b + k) / ((c + k) * (k + 1.0))
        term[active] *= ratio * xs[active]
        total[active] += term[active]
        k += 1
        if ratio == 0.0:
            break
        done = np.abs(term[active]) <= rtol * np.abs(total[active])
        active = active[~done]
    out = total.reshape(np.shape(x))
    return float(out) if out.ndim == 0 else out


def _connection(a: float, b: float, c: float, w: np.ndarray) -> np.ndarray:
    # 2F1(a,b;c;w) through 1-w; requires c-a-b non-integer, a, b not nonpositive ints
    e = c - a - b
    gc = _gamma_real(c)
    c1 = gc * _gamma_real(e) / (_gamma_real(c - a) * _gamma_real(c - b))
    c2 = gc * _gamma_real(-e) / (_gamma_real(a) * _gamma_real(b))
    v = 1.0 - w
    f1 = np.atleast_1d(hyp2f1_series(a, b, a + b - c + 1.0, v))
    f2 = np.atleast_1d(hyp2f1_series(c - a, c - b, e + 1.0, v))
    return c1 * f1 + c2 * v ** e * f2


def _hyp2f1_unit(a: float, b: float, c: float, w: np.ndarray) -> np.ndarray:
    # 0 <= w < 1
    out = np.empty_like(w)
    e = c - a - b
    terminating = _is_nonpos_int(a) or _is_nonpos_int(b)
    near_int = abs(e - round(e)) < 1e-4
    far = w > 0.75
    if terminating or near_int or not np.any(far):
        return np.atleast_1d(hyp2f1_series(a, b, c, w))
    if np.any(~far):
        out[~far] = hyp2f1_series(a, b, c, w[~far])
    out[far] = _connection(a, b, c, w[far])
    return out


def gauss_2f1(a: float, b: float, c: float, z):
    """Gauss hypergeometric function on the negative real half-line.

    Uses the Pfaff transformation to move ``z <= 0`` into ``[0, 1)``, then
    the power series (or the ``1 - w`` connection formula close to 1).
    """
    if _is_nonpos_int(c):
        raise DomainError("c must not be a nonpositive integer")
    zs = np.asarray(z, dtype=float).ravel()
    if np.any(zs > 0.0) or np.any(~np.isfinite(zs)):
        raise DomainError("gauss_2f1 is implemented for finite z <= 0")
    if a == 0.0 or b == 0.0:
        out = np.ones_like(zs)
    else:
        w = zs / (zs - 1.0)
        if _is_nonpos_int(b) and not _is_nonpos_int(a):
            # keep the terminating parameter in the transformed series
            out = (1.0 - zs) ** (-b) * _hyp2f1_unit(c - a, b, c, w)
        else:
            out = (1.0 - zs) ** (-a) * _hyp2f1_unit(a, c - b, c, w)
    out = out.reshape(np.shape(z))
    return float(out) if out.ndim == 0 else out


def _check_order(n: int) -> None:
    if not (0 <= n <= MAX_LAGUERRE_ORDER) or int(n) != n:
        raise DomainError(f"Laguerre order must be an integer in [0, {MAX_LAGUERRE_ORDER}]")


def laguerre_eval(n: int, x):
    """L_n(x) by the three-term recurrence."""
    _check_order(n)
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return float(prev) if prev.ndim == 0 else prev
    cur = 1.0 - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
    return float(cur) if np.ndim(cur) == 0 else cur


def laguerre_all(n_max: int, x) -> np.ndarray:
    """Stack of L_0..L_{n_max} evaluated at ``x``; shape ``(n_max + 1,) + x.shape``."""
    _check_order(n_max)
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = 1.0 - x
    for k in range(1, n_max):
        out[k + 1] = ((2 * k + 1 - x) * out[k] - k * out[k - 1]) / (k + 1)
    return out


def laguerre_direct(n: int, x):
    """L_n(x) from the explicit binomial sum; reference for the recurrence."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for k in range(n + 1):
        total = total + math.comb(n, k) * (-x) ** k / math.factorial(k)
    return float(total) if total.ndim == 0 else total


def laguerre_tail(n: int, y):
    """Tail integral of L_n(x) e^{-x} over [y, inf)."""
    _check_order(n)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("laguerre_tail requires y >= 0")
    if n == 0:
        out = np.exp(-y)
    else:
        out = np.exp(-y) * (laguerre_eval(n, y) - laguerre_eval(n - 1, y))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Laguerre rule for the weight e^{-x} on [0, inf)."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return int(self.nodes.size)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def gauss_laguerre_rule(m: int, tol: float = 1e-14, max_iter: int = 100) -> QuadratureRule:
    """Nodes and weights of the m-point Gauss-Laguerre rule.

    Newton iteration on L_m with the usual asymptotic starting guesses; each
    found root seeds the guess for the next one.
    """
    if not (1 <= m <= MAX_LAGUERRE_ORDER) or int(m) != m:
        raise DomainError("gauss_laguerre_rule needs 1 <= m <= 64")
    nodes = np.empty(m)
    weights = np.empty(m)
    z = 0.0
    for i in range(m):
        if i == 0:
            z = 3.0 / (1.0 + 2.4 * m)
        elif i == 1:
            z += 15.0 / (1.0 + 2.5 * m)
        else:
            ai = i - 1
            z += (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
        for _ in range(max_iter):
            # L_m and L_{m-1} by recurrence, derivative from x L_m' = m (L_m - L_{m-1})
            p1, p2 = 1.0, 0.0
            for k in range(m):
                p3 = p2
                p2 = p1
                p1 = ((2 * k + 1 - z) * p2 - k * p3) / (k + 1)
            deriv = m * (p1 - p2) / z
            step = p1 / deriv
            z -= step
            if abs(step) <= tol * max(1.0, abs(z)):
                break
        else:
            raise ConvergenceError(f"Gauss-Laguerre root {i} did not converge", residual=abs(step))
        # weight via L_{m+1}(x_i) = -m/(m+1) L_{m-1}(x_i) at a root of L_m
        p1, p2 = 1.0, 0.0
        for k in range(m):
            p3 = p2
            p2 = p1
            p1 = ((2 * k + 1 - z) * p2 - k * p3) / (k + 1)
        lm1 = p2
        nodes[i] = z
        weights[i] = z / ((m * lm1) ** 2)
    order = np.argsort(nodes)
    nodes, weights = nodes[order], weights[order]
    if np.any(np.diff(nodes) <= 0):
        raise ConvergenceError("Gauss-Laguerre nodes collided", residual=float(np.min(np.diff(nodes))))
    return QuadratureRule(nodes=nodes, weights=weights)
