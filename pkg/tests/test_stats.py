import numpy as np
import pytest
from scipy.special import ndtr

from voltbridge import kernels as kn
from voltbridge.errors import InsufficientSampleError
from voltbridge.simulate import sample_increments, standard_normals, synthesize_from_kernel
from voltbridge.stats import (ComparisonReport, compare_covariance, convergence_order, empirical_covariance,
                              halving_ratios, ks_normality)


def test_identical_paths_rejected():
    with pytest.raises(InsufficientSampleError):
        empirical_covariance(np.ones((5, 3)))


def test_two_point_variance():
    a = 1.5
    c, _ = empirical_covariance(np.array([[a], [-a]]))
    assert c[0, 0] == pytest.approx(2 * a * a)


def test_brownian_variance_at_half():
    g = kn.make_grid(1.0, 256)
    ens = synthesize_from_kernel(kn.fbm_discrete_kernel(0.5, g), sample_increments(g, 10_000, 31))
    c, se = empirical_covariance(ens, [128])
    assert abs(c[0, 0] - 0.5) <= 3 * se[0, 0]


def test_ks_own_normals_pass():
    z = standard_normals(1, 10_000, 2718)[0]
    assert ks_normality(z).passed


def test_ks_constant_fails():
    assert not ks_normality(np.zeros(1000)).passed


def test_ks_shift_fails():
    z = standard_normals(1, 10_000, 2718)[0] + 1.0
    res = ks_normality(z)
    # population distance sup|Phi(x) - Phi(x - 1)| = 2 Phi(1/2) - 1
    assert not res.passed
    assert res.statistic == pytest.approx(2 * ndtr(0.5) - 1, abs=2 / np.sqrt(10_000))


def test_ks_small_sample():
    with pytest.raises(InsufficientSampleError):
        ks_normality(np.zeros(10))


def test_convergence_order_examples():
    assert convergence_order([0.4, 0.2, 0.1]) == pytest.approx(1.0)
    assert convergence_order([0.09, 0.0225, 0.005625]) == pytest.approx(2.0)
    assert convergence_order([0.3, 0.3, 0.3]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InsufficientSampleError):
        convergence_order([0.2, 0.1])


def test_halving_ratios():
    assert np.allclose(halving_ratios([8, 4, 1]), [2, 4])


def test_tolerance_rule():
    rep = ComparisonReport(k=3.0, floor=0.05)
    assert rep.add("se", 1.02, 1.0, se=0.01)
    assert rep.add("floor", 1.04, 1.0, se=0.001)
    assert not rep.add("both", 1.06, 1.0, se=0.01)
    assert [e.passed for e in rep.failures] == [False]


def test_report_csv(tmp_path):
    rep = compare_covariance(np.eye(2), np.full((2, 2), 0.01), np.eye(2), "c")
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "label,estimate,target,se,pass"
    assert len(lines) == 4 and all(line.endswith(",1") for line in lines[1:])
