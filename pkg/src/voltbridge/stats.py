"""Monte Carlo and refinement statistics used by the verification suites."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import InsufficientSampleError

KS_CRIT_1PCT = 1.628
KS_MIN_SAMPLE = 100


def _as_matrix(paths) -> np.ndarray:
    return np.asarray(getattr(paths, "paths", paths), dtype=float)


def empirical_covariance(paths, subgrid: Optional[Sequence[int]] = None) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased covariance of node values and its Gaussian standard error.

    ``paths`` is a PathEnsemble or a (paths, nodes) array.  The standard
    error uses SE^2 = (R_ss R_tt + R_st^2) / (P - 1).
    """
    P = _as_matrix(paths)
    if subgrid is not None:
        P = P[:, np.asarray(subgrid, dtype=int)]
    n_paths = P.shape[0]
    if n_paths < 2:
        raise InsufficientSampleError("need at least two paths")
    cov = np.cov(P, rowvar=False, ddof=1).reshape(P.shape[1], P.shape[1])
    var = np.diag(cov)
    se = np.sqrt((np.outer(var, var) + cov ** 2) / (n_paths - 1))
    if not np.any(se > 0):
        raise InsufficientSampleError("all paths are identical; standard errors vanish")
    return cov, se


def correlation_with(values: np.ndarray, reference: np.ndarray) -> tuple[np.ndarray, float]:
    """Sample correlation of each column with ``reference``; SE is 1/sqrt(P)."""
    values = np.asarray(values, dtype=float)
    reference = np.asarray(reference, dtype=float)
    n = reference.size
    if n < 3:
        raise InsufficientSampleError("need at least three samples")
    v = values - values.mean(axis=0)
    r = reference - reference.mean()
    denom = np.sqrt((v ** 2).sum(axis=0) * (r ** 2).sum())
    return (v.T @ r) / denom, 1.0 / math.sqrt(n)


@dataclass
class ComparisonEntry:
    label: str
    estimate: float
    target: float
    se: float
    passed: bool


@dataclass
class ComparisonReport:
    """Entries pass when |estimate - target| <= max(k*SE, floor*|target|)."""

    k: float = 3.0
    floor: float = 0.0
    entries: list[ComparisonEntry] = field(default_factory=list)

    def add(self, label: str, estimate: float, target: float, se: float = 0.0,
            tol: Optional[float] = None) -> bool:
        """Record one comparison; ``tol`` overrides the SE rule with an absolute tolerance."""
        estimate, target, se = float(estimate), float(target), float(se)
        if tol is None:
            tol = max(self.k * se, self.floor * abs(target))
        ok = bool(abs(estimate - target) <= tol)
        self.entries.append(ComparisonEntry(label, estimate, target, se, ok))
        return ok

    def add_check(self, label: str, ok: bool, estimate: float = float("nan"), target: float = float("nan")) -> bool:
        """Record a boolean check (exact identities, monotonicity, ratios)."""
        self.entries.append(ComparisonEntry(label, float(estimate), float(target), 0.0, bool(ok)))
        return bool(ok)

    def add_matrix(self, label: str, est: np.ndarray, target: np.ndarray, se: np.ndarray,
                   names: Optional[Sequence[str]] = None) -> bool:
        est, target, se = map(np.asarray, (est, target, se))
        ok = True
        for a in range(est.shape[0]):
            for b in range(a, est.shape[1]):
                tag = f"{names[a]},{names[b]}" if names is not None else f"{a},{b}"
                ok &= self.add(f"{label}[{tag}]", est[a, b], target[a, b], se[a, b])
        return ok

    def extend(self, other: "ComparisonReport") -> None:
        self.entries.extend(other.entries)

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def failures(self) -> list[ComparisonEntry]:
        return [e for e in self.entries if not e.passed]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "estimate", "target", "se", "pass"])
            for e in self.entries:
                w.writerow([e.label, repr(e.estimate), repr(e.target), repr(e.se), int(e.passed)])


def compare_covariance(est: np.ndarray, se: np.ndarray, target: np.ndarray, label: str,
                       k: float = 3.0, floor: float = 0.05, names=None) -> ComparisonReport:
    rep = ComparisonReport(k=k, floor=floor)
    rep.add_matrix(label, est, target, se, names)
    return rep


@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical: float
    passed: bool
    n: int


def ks_normality(sample: Iterable[float], mean: float = 0.0, variance: float = 1.0) -> KSResult:
    """One-sample Kolmogorov-Smirnov test against N(mean, variance) at the 1% level."""
    x = np.sort(np.asarray(list(sample) if not isinstance(sample, np.ndarray) else sample, dtype=float).ravel())
    n = x.size
    if n < KS_MIN_SAMPLE:
        raise InsufficientSampleError(f"KS test needs at least {KS_MIN_SAMPLE} samples")
    if not variance > 0:
        raise InsufficientSampleError("variance must be positive")
    cdf = ndtr((x - mean) / math.sqrt(variance))
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    crit = KS_CRIT_1PCT / math.sqrt(n)
    return KSResult(d, crit, d <= crit, n)


def convergence_order(residuals: Sequence[float], spacings: Optional[Sequence[float]] = None) -> float:
    """Least-squares slope of log(residual) against log(spacing).

    Without ``spacings`` the levels are taken as successive halvings.
    """
    r = np.asarray(residuals, dtype=float)
    if r.size < 3:
        raise InsufficientSampleError("need at least three refinement levels")
    if np.any(~(r > 0)):
        raise InsufficientSampleError("residuals must be positive")
    h = 0.5 ** np.arange(r.size) if spacings is None else np.asarray(spacings, dtype=float)
    slope = np.polyfit(np.log(h), np.log(r), 1)[0]
    return float(slope)


def halving_ratios(residuals: Sequence[float]) -> np.ndarray:
    """r_k / r_{k+1} for successive refinement levels."""
    r = np.asarray(residuals, dtype=float)
    return r[:-1] / r[1:]
