import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochns.noise import (
    NotTraceClassError,
    make_covariance,
    path_regularity_report,
    read_path,
    sample_path,
    write_path,
)
from stochns.spectral import BasisSpec, expand_half

seeds = st.integers(0, 2**63 - 1)


@pytest.fixture(scope="module")
def small():
    return BasisSpec(2, 8, 1.0)


def test_covariance_values(run_basis):
    cov = make_covariance(0.1, 4.0, 0.25, run_basis)
    K = run_basis.K_max
    assert cov.sigma[K + 1, K, K] == pytest.approx(0.1)
    assert cov.sigma[K + 1, K + 1, K] == pytest.approx(0.1 * 2.0**-4)
    assert cov.sigma[K, K, K] == 0.0
    assert np.array_equal(cov.sigma, cov.sigma[::-1, ::-1, ::-1])


def test_covariance_zero_amplitude(run_basis):
    cov = make_covariance(0.0, 4.0, 0.25, run_basis)
    assert cov.total == 0.0
    assert cov.diagnostic["truncated_trace"] == 0.0


def test_covariance_verdicts(run_basis):
    good = make_covariance(0.1, 4.0, 0.25, run_basis)
    assert good.trace_class
    # radial shell sums decay like |k|^(2 + 4 delta - 2r) = |k|^-5
    assert good.diagnostic["radial_ratio_beyond_4"] < 1
    bad = make_covariance(0.1, 1.0, 0.25, run_basis)
    assert bad.diagnostic["verdict"] == "not trace class"
    assert bad.diagnostic["radial_ratio_beyond_4"] > 1


def test_covariance_rejects_bad_parameters(run_basis):
    with pytest.raises(ValueError):
        make_covariance(-1.0, 4.0, 0.25, run_basis)
    with pytest.raises(ValueError):
        make_covariance(1.0, 4.0, 0.0, run_basis)


def test_sample_refuses_non_trace_class(run_basis):
    cov = make_covariance(0.1, 1.0, 0.25, run_basis)
    with pytest.raises(NotTraceClassError):
        sample_path(cov, np.linspace(0, 1, 3), 0)


def test_increment_variance(small):
    cov = make_covariance(0.1, 4.0, 0.25, small)
    dt = 1e-3
    path = sample_path(cov, np.linspace(0, 100, 100001), 11)
    emp = 2 * np.mean(np.sum(np.abs(path.amps) ** 2, axis=2), axis=0)
    exact = 2 * cov.sigma_half * dt
    # |dW_k|^2 summed over the conjugate pair equals 2 |amp|^2
    np.testing.assert_allclose(emp, exact, rtol=0.05)
    re = path.amps.real[:, 0, 0]
    assert np.var(re) == pytest.approx(cov.sigma_half[0] * dt / 4, rel=0.05)


def test_sampling_deterministic(small):
    cov = make_covariance(0.1, 4.0, 0.25, small)
    g = np.linspace(0, 1, 51)
    a, b = sample_path(cov, g, 99), sample_path(cov, g, 99)
    assert np.array_equal(a.amps, b.amps)
    assert not np.array_equal(a.amps, sample_path(cov, g, 100).amps)


def test_sampling_prefix_stable(small):
    cov = make_covariance(0.1, 4.0, 0.25, small)
    long = sample_path(cov, np.linspace(0, 2, 201), 5)
    short = sample_path(cov, np.linspace(0, 1, 101), 5)
    assert np.array_equal(long.amps[:100], short.amps)


def test_zero_amplitude_path(small):
    cov = make_covariance(0.0, 4.0, 0.25, small)
    p = sample_path(cov, np.linspace(0, 1, 13), 1)
    assert not np.any(p.amps)
    rep = path_regularity_report(p, 0.25, 2.0, 0.25)
    assert rep["wsp_norm_value"] == 0.0


def test_increments_real_and_solenoidal(small):
    cov = make_covariance(0.1, 4.0, 0.25, small)
    p = sample_path(cov, np.linspace(0, 1, 11), 3)
    c = p.increment(4).coeff
    assert np.array_equal(c, np.conj(c[:, ::-1, ::-1, ::-1]))
    assert np.max(np.abs(np.sum(small.kvec * c, axis=0))) < 1e-15


@given(seeds)
def test_telescoping(seed):
    b = BasisSpec(2, 8, 1.0)
    cov = make_covariance(0.1, 4.0, 0.25, b)
    p = sample_path(cov, np.linspace(0, 1, 21), seed)
    vals = p.value_amps()
    assert not np.any(vals[0])
    assert np.array_equal(vals[7], np.cumsum(p.amps, axis=0)[6])
    np.testing.assert_allclose(p.value(7).coeff, expand_half(b, vals[7]), atol=1e-15)


@given(seeds)
def test_amplitude_scaling(seed):
    b = BasisSpec(2, 8, 1.0)
    g = np.linspace(0, 1, 11)
    a = sample_path(make_covariance(0.1, 4.0, 0.25, b), g, seed)
    c = sample_path(make_covariance(0.4, 4.0, 0.25, b), g, seed)
    assert np.array_equal(c.amps, 2 * a.amps)


def test_mean_square_growth(small):
    cov = make_covariance(0.1, 4.0, 0.25, small)
    g = np.linspace(0, 1, 11)
    M = 400
    w = np.array([2 * np.sum(np.abs(sample_path(cov, g, s).value_amps()[-1]) ** 2) for s in range(M)])
    assert abs(w.mean() - cov.total) <= 5 * cov.total / np.sqrt(M)


def test_coarsen_exact(small):
    cov = make_covariance(0.1, 4.0, 0.25, small)
    p = sample_path(cov, np.linspace(0, 1, 65), 2)
    c = p.coarsen(4)
    assert np.array_equal(c.amps, p.amps.reshape(16, 4, *p.amps.shape[1:]).sum(axis=1))
    assert np.array_equal(c.grid, p.grid[::4])
    with pytest.raises(ValueError):
        p.coarsen(5)


def test_slice_is_subslice(small):
    cov = make_covariance(0.1, 4.0, 0.25, small)
    p = sample_path(cov, np.linspace(0, 1, 65), 2)
    s = p.slice(10, 30)
    assert np.shares_memory(s.amps, p.amps)
    assert np.array_equal(s.amps, p.amps[10:30])
    assert s.grid[0] == 0.0


def test_regularity_trend_direction(run_basis):
    cov = make_covariance(0.1, 4.0, 0.25, run_basis)
    p = sample_path(cov, np.linspace(0, 1, 401), 8)
    lo = path_regularity_report(p, 0.25, 2.0, 0.25)["refinement_trend"]
    hi = path_regularity_report(p, 0.75, 2.0, 0.25)["refinement_trend"]
    assert hi["power_ratio"] > lo["power_ratio"]
    assert len(lo["norms"]) == 3


def test_regularity_rejects_beta(run_basis):
    cov = make_covariance(0.1, 4.0, 0.25, run_basis)
    p = sample_path(cov, np.linspace(0, 1, 5), 8)
    with pytest.raises(ValueError):
        path_regularity_report(p, 0.25, 2.0, 0.5)


def test_path_dump_roundtrip(small, tmp_path):
    cov = make_covariance(0.1, 4.0, 0.25, small)
    p = sample_path(cov, np.linspace(0, 1, 11), 2**62 + 3)
    write_path(tmp_path / "w.bmpt", p)
    assert (tmp_path / "w.bmpt").read_bytes()[:4] == b"BMPT"
    q = read_path(tmp_path / "w.bmpt", 8)
    assert np.array_equal(q.amps, p.amps) and q.seed == p.seed and q.cov.r == 4.0
