import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochns.analysis import (
    SampledPath,
    gronwall_verify,
    poincare_verify,
    sobolev_calibrate,
    sobolev_local_verify,
    sobolev_ratio,
    wsp_norm,
)
from stochns.spectral import BasisSpec, GridField, SpectralField, random_solenoidal, to_grid

from helpers import gronwall_path, sobolev_fields

seeds = st.integers(0, 2**32 - 1)


def test_sampled_path_rejects_bad_grid():
    with pytest.raises(ValueError):
        SampledPath(np.array([0.0, 0.0, 1.0]), np.zeros(3))


def test_wsp_constant_path():
    t = np.linspace(0, 2, 101)
    assert wsp_norm(SampledPath(t, np.full(101, -1.5)), 0.3, 3.0) == pytest.approx((1.5**3 * 2) ** (1 / 3), rel=1e-13)


def test_wsp_linear_closed_form():
    # int t^2 + int int |t-r|^(1/2) = 1/3 + 8/15
    t = np.linspace(0, 1, 1000)
    assert wsp_norm(SampledPath(t, t), 0.25, 2.0) == pytest.approx(np.sqrt(13 / 15), abs=1e-3)


def test_wsp_vector_matches_scalar():
    t = np.linspace(0, 1, 50)
    f = np.sin(3 * t)
    vec = np.stack([f * 0.6, f * 0.8], axis=1)
    assert wsp_norm(SampledPath(t, vec), 0.4, 2.0) == pytest.approx(wsp_norm(SampledPath(t, f), 0.4, 2.0), rel=1e-12)


def test_wsp_rejects_bad_exponents():
    p = SampledPath(np.linspace(0, 1, 5), np.zeros(5))
    with pytest.raises(ValueError):
        wsp_norm(p, 1.2, 2)
    with pytest.raises(ValueError):
        wsp_norm(p, 0.5, 0.5)


@given(seeds, st.floats(0.05, 0.95), st.floats(1.0, 4.0), st.floats(-3, 3))
def test_wsp_is_a_norm(seed, s, p, c):
    rng = np.random.default_rng(seed)
    t = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 30)]))
    t = np.unique(t)
    f, g = rng.standard_normal((2, len(t), 3))
    nf = wsp_norm(SampledPath(t, f), s, p)
    ng = wsp_norm(SampledPath(t, g), s, p)
    assert wsp_norm(SampledPath(t, f + g), s, p) <= (nf + ng) * (1 + 1e-9)
    assert wsp_norm(SampledPath(t, c * f), s, p) == pytest.approx(abs(c) * nf, rel=1e-9, abs=1e-12)


def test_gronwall_constant_saturation():
    t = np.linspace(0, 3, 61)
    r = gronwall_verify(SampledPath(t, np.full(61, 0.5)), 2.0, 1.0)
    assert r["hypothesis_holds"] and r["conclusion_holds"]


def test_gronwall_ode_solution():
    t = np.linspace(0, 4, 801)
    lam, C, v0 = 2.0, 1.0, 3.0
    v = v0 * np.exp(-lam * t) + C / lam * (1 - np.exp(-lam * t))
    r = gronwall_verify(SampledPath(t, v), lam, C)
    assert r["hypothesis_holds"] and r["conclusion_holds"]
    assert np.max(v[t >= 1]) < r["bound"] - 0.1


def test_gronwall_hypothesis_fails_for_growth():
    t = np.linspace(0, 2, 41)
    r = gronwall_verify(SampledPath(t, t**2), 1.0, 0.0)
    assert r["hypothesis_holds"] is False


def test_gronwall_signed_counterexample():
    # negative data rising toward C / lam: hypothesis with equality, bound broken
    t = np.linspace(0, 3, 601)
    lam, C, v0 = 0.25, 0.01, -1.5
    v = v0 * np.exp(-lam * t) + C / lam * (1 - np.exp(-lam * t))
    r = gronwall_verify(SampledPath(t, v), lam, C)
    assert r["hypothesis_holds"] and not r["nonnegative"]
    assert r["conclusion_holds"] is False


def test_gronwall_needs_unit_interval():
    with pytest.raises(ValueError):
        gronwall_verify(SampledPath(np.linspace(0, 0.5, 5), np.zeros(5)), 1.0, 1.0)


@given(seeds)
def test_gronwall_hypothesis_implies_conclusion(seed):
    path, lam, C = gronwall_path(np.random.default_rng(seed))
    r = gronwall_verify(path, lam, C)
    assert r["hypothesis_holds"] and r["nonnegative"]
    assert r["conclusion_holds"]


def test_sobolev_q2_equality():
    u = to_grid(random_solenoidal(BasisSpec(4, 16, 1.0), np.random.default_rng(4)))
    r = sobolev_local_verify(u, (1.0, 2.0, 3.0), 1.3, 2.0, 0.5)
    assert r["a"] == 0.0
    assert r["rhs"] == pytest.approx(r["lhs"], rel=1e-13)
    assert r["holds"]


def test_sobolev_exponent_q6():
    u = to_grid(random_solenoidal(BasisSpec(4, 16, 1.0), np.random.default_rng(5)))
    assert sobolev_local_verify(u, (3.0, 3.0, 3.0), 1.5, 6.0, 1.0)["a"] == 3.0


def test_sobolev_rejects_bad_q():
    u = GridField(BasisSpec(4, 16), np.zeros((3, 16, 16, 16)))
    with pytest.raises(ValueError):
        sobolev_local_verify(u, (3, 3, 3), 1.0, 7.0, 1.0)


@given(seeds, st.sampled_from([2.0, 3.0, 4.0, 6.0]), st.floats(0.1, 10.0))
def test_sobolev_homogeneity(seed, q, scale):
    b = BasisSpec(4, 16, 1.0)
    u = to_grid(random_solenoidal(b, np.random.default_rng(seed)))
    C = sobolev_ratio(u, (3.0, 3.0, 3.0), 1.5, q)
    a = sobolev_local_verify(u, (3.0, 3.0, 3.0), 1.5, q, C)
    us = GridField(b, scale * u.values)
    s = sobolev_local_verify(us, (3.0, 3.0, 3.0), 1.5, q, C)
    assert s["lhs"] == pytest.approx(scale**q * a["lhs"], rel=1e-10)
    assert s["rhs"] == pytest.approx(scale**q * a["rhs"], rel=1e-10)
    assert s["holds"] == a["holds"]


def test_sobolev_calibrate_margin():
    fields = sobolev_fields(0, 20)
    C = sobolev_calibrate(fields, (3.0, 3.0, 3.0), 1.5, 4.0)
    ratios = [sobolev_ratio(u, (3.0, 3.0, 3.0), 1.5, 4.0) for u in fields]
    assert C == pytest.approx(1.1 * max(ratios))


def test_poincare_examples():
    b = BasisSpec(4, 16)
    e1 = SpectralField.from_modes(b, {(1, 0, 0): [0, 1, 0]})
    assert poincare_verify(e1)["ratio"] == pytest.approx(1.0, rel=1e-14)
    e5 = SpectralField.from_modes(b, {(2, 1, 0): [0, 0, 1]})
    assert poincare_verify(e5)["ratio"] == pytest.approx(5.0, rel=1e-14)
    with pytest.raises(ValueError):
        poincare_verify(SpectralField.zeros(b))


@given(seeds)
def test_poincare_random(seed):
    u = random_solenoidal(BasisSpec(3, 12), np.random.default_rng(seed), 1.0, 0.2)
    assert poincare_verify(u)["holds"]
