"""Fast built-in checks behind ``stochns selftest``."""

from __future__ import annotations

import numpy as np

from .analysis import SampledPath, gronwall_verify, poincare_verify, sobolev_local_verify, wsp_norm
from .noise import make_covariance, sample_path
from .solver import SolverConfig, bilinear_B, integrate
from .spectral import BasisSpec, SpectralField, inner, norm, random_solenoidal, to_grid
from .stokes import ForcingSpec, solve_stokes_path, stationary_law


def _basis(cfg):
    b = cfg["basis"]
    return BasisSpec(b["K_max"], b["M_grid"], b["dealias"])


def spectral_suite(cfg):
    basis = BasisSpec(cfg["basis"]["K_max"], cfg["basis"]["M_grid"], 2.0 / 3.0)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        w = random_solenoidal(basis, rng, 1.0, 0.1)
        u = random_solenoidal(basis, rng, 1.0, 0.1)
        w = SpectralField(basis, w.coeff * basis.dealias_mask)
        u = SpectralField(basis, u.coeff * basis.dealias_mask)
        worst = max(worst, abs(inner(bilinear_B(w, u), u)) / (norm(w, "V") * norm(u, "V") ** 2))
    return worst <= 1e-11, f"max |<B(w,u),u>| / (|w|_V |u|_V^2) = {worst:.2e}"


def solver_suite(cfg):
    basis = _basis(cfg)
    u0 = SpectralField.from_modes(basis, {(0, 1, 0): [0.5j, 0, 0]})
    tr = integrate(u0, ForcingSpec.zero(basis), None, SolverConfig(dt=1e-2, dealias_fraction=basis.dealias_fraction), T=0.5)
    exact = SpectralField(basis, u0.coeff * np.exp(-basis.k2 * 0.5))
    err = norm(SpectralField(basis, tr.u(tr.n_nodes - 1).coeff - exact.coeff)) / norm(exact)
    return err <= 1e-6, f"Kolmogorov decay relative error {err:.2e}"


def noise_suite(cfg):
    basis = _basis(cfg)
    nz = cfg["noise"]
    cov = make_covariance(nz["c"], nz["r"], nz["delta"], basis)
    if not cov.trace_class:
        return False, "configured covariance is not trace class"
    grid = np.linspace(0.0, 0.4, 401)
    path = sample_path(cov, grid, 3)
    exact_sum = np.array_equal(path.coarsen(4).amps, path.amps.reshape(100, 4, *path.amps.shape[1:]).sum(axis=1))
    f = ForcingSpec.zero(basis)
    members = [solve_stokes_path(f, sample_path(cov, np.linspace(0, 3, 31), s)).z_half[-1] for s in range(200)]
    z = np.array(members)
    var = np.mean(np.sum(np.abs(z) ** 2, axis=2), axis=0)
    _, law = stationary_law(cov, f)
    exact = law[basis.half_index]
    lowest = basis.k2[basis.half_index] == 1
    rel = abs(var[lowest].mean() - exact[lowest].mean()) / exact[lowest].mean()
    ok = exact_sum and rel < 0.25
    return ok, f"coarse sums exact: {exact_sum}; |k|=1 OU variance rel. error {rel:.3f}"


def analysis_suite(cfg):
    t = np.linspace(0, 3, 601)
    lam, C, v0 = 2.0, 1.0, 3.0
    v = v0 * np.exp(-lam * t) + C / lam * (1 - np.exp(-lam * t))
    g = gronwall_verify(SampledPath(t, v), lam, C)
    c = wsp_norm(SampledPath(np.linspace(0, 2, 201), np.full(201, 1.5)), 0.25, 2.0)
    basis = _basis(cfg)
    u = random_solenoidal(basis, np.random.default_rng(2))
    sob = sobolev_local_verify(to_grid(u), (np.pi,) * 3, 1.0, 2.0, 0.5)
    pc = poincare_verify(u)
    ok = g["hypothesis_holds"] and g["conclusion_holds"] and abs(c - np.sqrt(1.5**2 * 2)) < 1e-12 and sob["holds"] and pc["holds"]
    return ok, f"gronwall {g['hypothesis_holds']}/{g['conclusion_holds']}, wsp const {c:.6f}, sobolev q=2 {sob['holds']}, poincare {pc['ratio']:.3f}"


SUITES = {"spectral": spectral_suite, "solver": solver_suite, "noise": noise_suite, "analysis": analysis_suite}


def run_suites(names, cfg):
    return [(n, *SUITES[n](cfg)) for n in names]
