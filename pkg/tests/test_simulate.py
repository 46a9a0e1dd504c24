import numpy as np
import pytest

from voltbridge import kernels as kn
from voltbridge.errors import DimensionError, FactorizationError, SchemaError
from voltbridge.simulate import (PathEnsemble, jittered_cholesky, read_paths_csv, sample_increments,
                                 standard_normals, synthesize_cholesky, synthesize_from_kernel, write_paths_csv)
from voltbridge.stats import empirical_covariance


def test_zero_paths():
    g = kn.make_grid(1.0, 16)
    assert sample_increments(g, 0, 1).shape == (0, 16)
    ens = synthesize_from_kernel(kn.fbm_discrete_kernel(0.75, g), sample_increments(g, 0, 1))
    assert ens.paths.shape == (0, 17)


def test_seeded_determinism():
    g = kn.make_grid(1.0, 64)
    assert np.array_equal(sample_increments(g, 50, 9), sample_increments(g, 50, 9))
    assert not np.array_equal(sample_increments(g, 50, 9), sample_increments(g, 50, 10))


def test_threads_do_not_change_output():
    a = standard_normals(257, 33, 4, threads=1)
    b = standard_normals(257, 33, 4, threads=5)
    assert np.array_equal(a, b)


def test_chunks_match_whole():
    whole = standard_normals(30, 12, 77)
    parts = np.vstack([standard_normals(10, 12, 77, first=k) for k in (0, 10, 20)])
    assert np.array_equal(whole, parts)


def test_increment_means_clt():
    g = kn.make_grid(1.0, 256)
    dW = sample_increments(g, 10_000, 2024)
    bound = 4 * np.sqrt(g.cell_weights / 10_000)
    assert np.all(np.abs(dW.mean(axis=0)) <= bound)


def test_negative_count_rejected():
    with pytest.raises(DimensionError):
        standard_normals(-1, 4, 0)


def test_zero_increments_zero_paths():
    g = kn.make_grid(1.0, 8)
    ens = synthesize_from_kernel(kn.fbm_discrete_kernel(0.3, g), np.zeros((3, 8)))
    assert not ens.paths.any()


def test_brownian_kernel_cumsum():
    g = kn.make_grid(1.0, 32)
    dW = sample_increments(g, 5, 3)
    ens = synthesize_from_kernel(kn.fbm_discrete_kernel(0.5, g), dW)
    assert np.allclose(ens.paths[:, 1:], np.cumsum(dW, axis=1), rtol=0, atol=1e-14)
    assert np.all(ens.paths[:, 0] == 0.0)


def test_h075_terminal_variance():
    g = kn.make_grid(1.0, 256)
    ens = synthesize_from_kernel(kn.fbm_discrete_kernel(0.75, g), sample_increments(g, 10_000, 13))
    c, se = empirical_covariance(ens, [256])
    assert abs(c[0, 0] - 1.0) <= 3 * se[0, 0]


def test_cholesky_zero_cov():
    ens = synthesize_cholesky(np.zeros((4, 4)), 10, 1)
    assert not ens.paths.any()


def test_cholesky_scalar_variance():
    ens = synthesize_cholesky(np.array([[4.0]]), 10_000, 8)
    var = ens.paths[:, 1].var(ddof=1)
    assert abs(var - 4.0) <= 3 * 4.0 * np.sqrt(2 / 10_000)


def test_cholesky_brownian_increments_uncorrelated():
    g = kn.make_grid(1.0, 16)
    cov = np.minimum.outer(g.nodes[1:], g.nodes[1:])
    ens = synthesize_cholesky(cov, 10_000, 21, g)
    c, se = empirical_covariance(np.diff(ens.paths, axis=1))
    off = ~np.eye(16, dtype=bool)
    assert np.all(np.abs(c[off]) <= 3 * se[off])


def test_cholesky_rejects_indefinite():
    with pytest.raises(FactorizationError):
        jittered_cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_cholesky_threads_bit_stable():
    g = kn.make_grid(1.0, 32)
    cov = kn.fbm_covariance_matrix(0.3, g.nodes[1:])
    a = synthesize_cholesky(cov, 100, 5, g, threads=1).paths
    b = synthesize_cholesky(cov, 100, 5, g, threads=3).paths
    assert np.array_equal(a, b)


def test_paths_csv_roundtrip(tmp_path):
    g = kn.make_grid(2.0, 8)
    ens = synthesize_from_kernel(kn.fbm_discrete_kernel(0.6, g), sample_increments(g, 4, 0))
    write_paths_csv(tmp_path / "p.csv", ens)
    back = read_paths_csv(tmp_path / "p.csv")
    assert back.grid.same_as(g)
    assert np.array_equal(back.paths, ens.paths)


def test_paths_csv_empty(tmp_path):
    g = kn.make_grid(1.0, 4)
    write_paths_csv(tmp_path / "e.csv", PathEnsemble(g, "x", np.zeros((0, 5))))
    assert (tmp_path / "e.csv").read_text() == "path_id,t,value\n"
    with pytest.raises(SchemaError):
        read_paths_csv(tmp_path / "e.csv")
    assert read_paths_csv(tmp_path / "e.csv", empty_grid=g).n_paths == 0


def test_paths_csv_schema(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("path_id,t,value\n0,0.0,0.0\n0,1.0,x\n")
    with pytest.raises(SchemaError):
        read_paths_csv(p)
    p.write_text("path_id,t,value\n0,0.0,0.0\n0,1.0,1.0\n1,0.0,0.0\n1,0.5,1.0\n")
    with pytest.raises(SchemaError):
        read_paths_csv(p)
