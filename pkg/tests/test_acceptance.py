"""The twelve acceptance criteria at their stated tolerances.

Each test ends with one PASS/FAIL line; the lines are repeated in the
pytest terminal summary.
"""

import numpy as np
import pytest

from stochns.analysis import gronwall_verify, poincare_verify, sobolev_calibrate, sobolev_local_verify
from stochns.certificates import (
    TestBump,
    classical_energy_check,
    ito_energy_check,
    lei_residual,
    make_alternate,
    z_shift_check,
)
from stochns.cli import main
from stochns.noise import make_covariance, path_regularity_report, sample_path
from stochns.solver import SolverConfig, bilinear_B, integrate, integrate_ensemble
from stochns.spectral import BasisSpec, SpectralField, inner, norm, random_solenoidal
from stochns.stationary import dissipation_theta, linear_ensemble, stokes_invariant_check
from stochns.stokes import ForcingSpec

from helpers import gronwall_path, kolmogorov, record, sobolev_fields

B = BasisSpec(4, 16, 1.0)
COV = make_covariance(0.1, 4.0, 0.25, B)
F = ForcingSpec.from_modes(B, [((1, 0, 0), 0.3)])
U0 = random_solenoidal(B, np.random.default_rng(0))
RUN = SolverConfig(dt=1e-3, dealias_fraction=1.0)
PAIRS = [
    (0.0, 0.5), (0.0, 0.1), (0.1, 0.2), (0.05, 0.45), (0.2, 0.3),
    (0.25, 0.5), (0.3, 0.4), (0.1, 0.35), (0.4, 0.5), (0.15, 0.25),
]


@pytest.fixture(scope="module")
def stochastic_ensemble():
    grid = np.linspace(0.0, 0.5, 501)
    paths = [sample_path(COV, grid, seed) for seed in range(1000, 1100)]
    return integrate_ensemble(U0, F, paths, RUN)


def test_c01_skew_symmetry():
    b = BasisSpec(4, 16, 2.0 / 3.0)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        w, u = (SpectralField(b, random_solenoidal(b, rng, 1.0, 0.05).coeff * b.dealias_mask) for _ in range(2))
        worst = max(worst, abs(inner(bilinear_B(w, u), u)) / (norm(w, "V") * norm(u, "V") ** 2))
    record(1, "skew-symmetry", worst <= 1e-11, f"max |<B(w,u),u>|/(|w|_V |u|_V^2) = {worst:.2e} over 100 pairs (bound 1e-11)")


def test_c02_kolmogorov_decay():
    b = BasisSpec(4, 16, 2.0 / 3.0)
    u0 = kolmogorov(b)
    tr = integrate(u0, ForcingSpec.zero(b), None, SolverConfig(dt=1e-3), T=1.0)
    exact = np.exp(-1.0) * u0.coeff
    err = np.sqrt(np.sum(np.abs(tr.u(tr.n_nodes - 1).coeff - exact) ** 2) / np.sum(np.abs(exact) ** 2))
    record(2, "single-mode decay", err <= 1e-6, f"relative H error at T = 1 is {err:.2e} (bound 1e-6)")


def test_c03_linear_ito_balance():
    ens = list(linear_ensemble(ForcingSpec.zero(B), COV, 1.0, 1e-2, range(200)))
    rep = ito_energy_check(ens, times=[0.5, 1.0])
    rows = rep.meta["balance"]
    ok = all(abs(e["mean_residual"]) <= 3 * e["mean_se"] for e in rows)
    detail = ", ".join(f"t={e['t']:g}: {e['mean_residual']:+.4f} vs 3SE {3 * e['mean_se']:.4f}" for e in rows)
    record(3, "linear Ito balance", ok, f"M = 200; {detail}")


def test_c04_local_energy_ladder():
    T = 0.5
    fine = sample_path(COV, np.linspace(0.0, T, 1001), 0)
    bumps = [
        TestBump(0.25, (3.0, 3.0, 3.0), 0.2, 1.5),
        TestBump(0.3, (2.0, 4.0, 3.5), 0.15, 1.2),
        TestBump(0.2, (4.0, 2.5, 2.0), 0.12, 1.0),
    ]
    res, within = [], True
    for factor in (4, 2, 1):
        tr = integrate(U0, F, fine.coarsen(factor), SolverConfig(dt=factor * T / 1000, dealias_fraction=1.0))
        reps = lei_residual(tr, bumps)
        within &= all(r.verdict for r in reps)
        res.append([r.residual for r in reps])
    res = np.abs(np.array(res))
    ratios = res[:-1] / res[1:]
    ok = within and bool(np.all((ratios >= 1.7) & (ratios <= 2.5)))
    record(4, "local energy equality", ok, f"all |residual| <= C dt: {within}; halving ratios {np.round(ratios, 3).tolist()} (band [1.7, 2.5])")


def test_c05_classical_energy(stochastic_ensemble):
    viol, worst = 0, np.inf
    for tr in stochastic_ensemble:
        for s, t in PAIRS:
            r = classical_energy_check(tr, s, t)
            viol += not r.verdict
            worst = min(worst, r.residual + r.tolerance)
    record(5, "classical energy inequality", viol == 0, f"{viol} violations over 100 members x 10 pairs; min residual + tol = {worst:.3e}")


def test_c06_decomposition_invariance():
    bumps = [
        TestBump(0.15, (3.0, 3.0, 3.0), 0.1, 1.5),
        TestBump(0.18, (2.0, 4.0, 3.5), 0.08, 1.2),
        TestBump(0.12, (4.0, 2.5, 2.0), 0.08, 1.0),
    ]
    grid = np.linspace(0.0, 0.3, 301)
    agree = lei1_ok = identity_ok = True
    worst = 0.0
    for seed in range(4):
        tr = integrate(U0, F, sample_path(COV, grid, seed), RUN)
        alt = make_alternate(tr, ForcingSpec.zero(B))
        for out in z_shift_check(tr, alt, bumps):
            agree &= out["verdicts_agree"]
            lei1_ok &= out["lei1"].verdict
            identity_ok &= out["identity"].verdict
            worst = max(worst, abs(out["lei1"].residual) / out["lei1"].tolerance)
    ok = agree and lei1_ok and identity_ok
    record(6, "decomposition invariance", ok, f"verdicts agree: {agree}; lei1 within tolerance: {lei1_ok} (max |res|/tol = {worst:.3f}); identity: {identity_ok}")


def test_c07_stokes_invariant_measure():
    rep = stokes_invariant_check(COV, ForcingSpec.zero(B))
    rows = [r for r in rep.meta["modes"] if "ks_pvalue" in r]
    pmin = min(r["ks_pvalue"] for r in rows)
    record(
        7,
        "Stokes invariant measure",
        rep.verdict,
        f"{len(rows)} modes; max rel var err {rep.residual:.4f} vs {rep.tolerance:.4f}; min KS p = {pmin:.3f} (level {rep.meta['ks_level']:.2e})",
    )


def test_c08_dissipation_linearity():
    ens = linear_ensemble(ForcingSpec.zero(B), COV, 7.0, 1e-2, range(1000, 1200))
    th = dissipation_theta(ens, np.linspace(0.0, 1.0, 11), 4.0, 5, seed=3, t_min=2.0)
    rel = th["C_mu"] / (COV.total / 2) - 1
    ok = abs(rel) <= 0.05 and th["R2"] >= 0.99 and th["theta"][0] == 0.0
    record(8, "dissipation linearity", ok, f"C_mu = {th['C_mu']:.5f} vs sigma/2 = {COV.total / 2:.5f} ({rel:+.2%}); R^2 = {th['R2']:.6f}; Theta(0) = {th['theta'][0]}")


def test_c09_tightness_norms():
    grid = np.linspace(0.0, 1.0, 401)
    lo, hi = [], []
    for seed in range(100):
        p = sample_path(COV, grid, seed)
        lo.append(path_regularity_report(p, 0.25, 2.0, 0.25)["refinement_trend"]["power_ratio"])
        hi.append(path_regularity_report(p, 0.75, 2.0, 0.25)["refinement_trend"]["power_ratio"])
    mlo, mhi = float(np.median(lo)), float(np.median(hi))
    record(9, "tightness norms", mlo <= 1.2 and mhi >= 1.5, f"median power ratio s=0.25: {mlo:.3f} (<= 1.2), s=0.75: {mhi:.3f} (>= 1.5)")


def test_c10_analysis_suites():
    rng = np.random.default_rng(10)
    g_fail = g_hyp = 0
    for _ in range(1000):
        path, lam, C = gronwall_path(rng)
        r = gronwall_verify(path, lam, C)
        g_hyp += r["hypothesis_holds"]
        g_fail += r["hypothesis_holds"] and not r["conclusion_holds"]
    cal, val = sobolev_fields(100, 1000), sobolev_fields(200, 1000)
    s_viol = {}
    for q in (2.0, 3.0, 4.0, 6.0):
        C = sobolev_calibrate(cal, (3.0, 3.0, 3.0), 1.5, q)
        s_viol[q] = sum(not sobolev_local_verify(u, (3.0, 3.0, 3.0), 1.5, q, C)["holds"] for u in val)
    prng = np.random.default_rng(11)
    p_min = min(poincare_verify(random_solenoidal(B, prng, 1.0, prng.uniform(0, 1)))["ratio"] for _ in range(1000))
    ok = g_fail == 0 and g_hyp == 1000 and not any(s_viol.values()) and p_min >= 1.0
    record(10, "analysis suites", ok, f"Gronwall {g_fail} failures / {g_hyp} paths; Sobolev violations {s_viol}; min Poincare ratio {p_min:.4f}")


def test_c11_mean_energy_inequality(stochastic_ensemble):
    rep = ito_energy_check(stochastic_ensemble, times=[0.25, 0.5], pairs=PAIRS)
    rows = rep.meta["energy_inequality"]
    printed = all(e["printed_pass"] for e in rows)
    squared = all(e["squared_pass"] for e in rows)
    margin_p = min(e["residual_printed"] + e["tolerance"] for e in rows)
    margin_s = min(e["residual_squared"] + e["tolerance"] for e in rows)
    record(11, "mean energy inequality", printed and squared, f"printed |f|: {printed} (min slack {margin_p:.4f}); squared |f|^2: {squared} (min slack {margin_s:.4f})")


def test_c12_reproducibility(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"solver": {"dt": 0.001, "T": 0.05}, "outputs": {"snapshot_every": 0}}\n')
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--seed", "17", "--out", str(tmp_path / d)]) == 0
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same = bool(names) and all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    fine = sample_path(COV, np.linspace(0.0, 0.5, 1001), 5)
    exact = True
    for factor in (2, 4, 8):
        acc = fine.amps[0::factor].copy()
        for i in range(1, factor):
            acc += fine.amps[i::factor]
        exact &= np.array_equal(fine.coarsen(factor).amps, acc)
    record(12, "reproducibility", same and exact, f"byte-identical CSVs {names}: {same}; coarse increments exact sums: {exact}")
