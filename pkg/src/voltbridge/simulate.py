"""Seeded Gaussian sampling on a time grid.

Every path ``p`` draws from its own Philox stream keyed by ``(seed, p)``
with the counter starting at zero.  Raw 64-bit words are mapped to uniforms
in (0, 1) as ``((w >> 11) + 0.5) / 2**53`` and then to standard normals by
the inverse normal CDF.  A path's numbers therefore depend only on the seed
and its index, never on how paths are split between threads.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .errors import DimensionError, FactorizationError, SchemaError
from .kernels import DiscreteKernel, TimeGrid

U64 = (1 << 64) - 1
METHODS = ("kernel", "cholesky", "transform", "input")


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Paths ``P[p, j]`` at the grid nodes; column 0 is the start value 0."""

    grid: TimeGrid
    process_name: str
    paths: np.ndarray
    seed: Optional[int] = None
    method: str = "kernel"
    increments: Optional[np.ndarray] = None

    def __post_init__(self):
        paths = np.array(self.paths, dtype=float)
        if paths.ndim != 2 or paths.shape[1] != self.grid.n + 1:
            raise DimensionError(f"paths must have {self.grid.n + 1} columns")
        paths.setflags(write=False)
        object.__setattr__(self, "paths", paths)
        if self.increments is not None:
            inc = np.array(self.increments, dtype=float)
            if inc.shape != (paths.shape[0], self.grid.n):
                raise DimensionError("increments must be (paths, cells)")
            inc.setflags(write=False)
            object.__setattr__(self, "increments", inc)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def differences(self) -> np.ndarray:
        """Path increments across each cell."""
        return np.diff(self.paths, axis=1)

    @property
    def terminal(self) -> np.ndarray:
        return self.paths[:, -1]

    def derived(self, paths: np.ndarray, process_name: str, method: str = "transform") -> "PathEnsemble":
        """New ensemble on the same grid, keeping the seed for provenance."""
        return PathEnsemble(self.grid, process_name, paths, self.seed, method)


def _normals_for_path(seed: int, p: int, count: int) -> np.ndarray:
    bitgen = np.random.Philox(key=np.array([seed & U64, p], dtype=np.uint64))
    words = bitgen.random_raw(count)
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


def standard_normals(n_paths: int, count: int, seed: int, threads: int = 1, first: int = 0) -> np.ndarray:
    """Matrix of independent N(0, 1) draws, one counter-based stream per row.

    Row ``r`` belongs to path ``first + r``, so an ensemble can be produced in
    chunks without changing any path.
    """
    if n_paths < 0 or count < 0 or first < 0:
        raise DimensionError("path and sample counts must be nonnegative")
    out = np.empty((n_paths, count))
    if n_paths == 0 or count == 0:
        return out

    def fill(rows):
        for p in rows:
            out[p] = _normals_for_path(seed, first + p, count)

    if threads <= 1:
        fill(range(n_paths))
    else:
        chunks = np.array_split(np.arange(n_paths), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, chunks))
    return out


def sample_increments(grid: TimeGrid, n_paths: int, seed: int, threads: int = 1, first: int = 0) -> np.ndarray:
    """Brownian increments dW[p, j] ~ N(0, dt_j)."""
    z = standard_normals(n_paths, grid.n, seed, threads, first)
    return z * np.sqrt(grid.cell_weights)


def synthesize_from_kernel(dk: DiscreteKernel, dW: np.ndarray, seed: Optional[int] = None,
                           process_name: Optional[str] = None) -> PathEnsemble:
    """P[p, i] = sum_j Z[i, j] dW[p, j]; the increments stay attached."""
    dW = np.asarray(dW, dtype=float)
    if dW.ndim != 2 or dW.shape[1] != dk.grid.n:
        raise DimensionError(f"increments need {dk.grid.n} columns, got shape {dW.shape}")
    paths = dW @ dk.values.T
    return PathEnsemble(dk.grid, process_name or dk.name, paths, seed, "kernel", dW)


def jittered_cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``cov + eps*I``.

    ``eps`` starts at 1e-12 * trace/n and grows tenfold up to 1e-10 * trace/n;
    a zero matrix gets a zero factor.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError("covariance must be square")
    if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-14):
        raise FactorizationError("covariance is not symmetric")
    n = cov.shape[0]
    if n == 0 or not np.any(cov):
        return np.zeros_like(cov)
    scale = np.trace(cov) / n
    for rel in (1e-12, 1e-11, 1e-10):
        try:
            return np.linalg.cholesky(cov + rel * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError("covariance is not positive semidefinite within jitter 1e-10")


def synthesize_cholesky(cov: np.ndarray, n_paths: int, seed: int, grid: Optional[TimeGrid] = None,
                        process_name: str = "gaussian", threads: int = 1) -> PathEnsemble:
    """Exact samples of N(0, cov) at nodes t_1..t_n, with t_0 = 0 prepended."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if grid is None:
        grid = TimeGrid(np.arange(n + 1, dtype=float))
    if grid.n != n:
        raise DimensionError("covariance size must equal the number of nonzero nodes")
    L = jittered_cholesky(cov)
    z = standard_normals(n_paths, n, seed, threads)
    paths = np.zeros((n_paths, n + 1))
    paths[:, 1:] = z @ L.T
    return PathEnsemble(grid, process_name, paths, seed, "cholesky")


def cumulative_paths(dM: np.ndarray) -> np.ndarray:
    """Node values from cell increments, starting at 0."""
    dM = np.asarray(dM, dtype=float)
    out = np.zeros((dM.shape[0], dM.shape[1] + 1))
    np.cumsum(dM, axis=1, out=out[:, 1:])
    return out


def write_paths_csv(path, ens: PathEnsemble) -> None:
    """Rows ``path_id,t,value`` in path-major order."""
    t = ens.grid.nodes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t", "value"])
        for p in range(ens.n_paths):
            row = ens.paths[p]
            for j in range(t.size):
                w.writerow([p, repr(float(t[j])), repr(float(row[j]))])


def read_paths_csv(path, process_name: str = "input", grid: Optional[TimeGrid] = None,
                   empty_grid: Optional[TimeGrid] = None) -> PathEnsemble:
    """Read a path CSV; all paths must share the same node times.

    ``grid``, when given, must match the file's node times.  An empty file
    (header only) takes its grid from ``grid`` or else ``empty_grid``.
    """
    ids, times, values = [], [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["path_id", "t", "value"]:
            raise SchemaError(f"expected header path_id,t,value, got {header}")
        for lineno, row in enumerate(r, start=2):
            if len(row) != 3:
                raise SchemaError(f"line {lineno}: expected 3 fields")
            try:
                ids.append(int(row[0]))
                times.append(float(row[1]))
                values.append(float(row[2]))
            except ValueError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
    if not ids:
        grid = grid or empty_grid
        if grid is None:
            raise SchemaError("empty path file and no grid given")
        return PathEnsemble(grid, process_name, np.zeros((0, grid.n + 1)), None, "input")
    ids_a = np.asarray(ids)
    n_paths = int(ids_a.max()) + 1
    if ids_a.size % n_paths:
        raise SchemaError("paths have different lengths")
    n_nodes = ids_a.size // n_paths
    if not np.array_equal(ids_a, np.repeat(np.arange(n_paths), n_nodes)):
        raise SchemaError("rows must be path-major with ids 0..P-1")
    t = np.asarray(times).reshape(n_paths, n_nodes)
    if np.any(t != t[0]):
        raise SchemaError("paths use different node times")
    file_grid = TimeGrid(t[0])
    if grid is not None and not grid.same_as(file_grid):
        raise SchemaError("node times differ from the expected grid")
    paths = np.asarray(values).reshape(n_paths, n_nodes)
    return PathEnsemble(file_grid, process_name, paths, None, "input")
