# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Calibrating the certificate tolerances
#
# Every equality certificate accepts a residual of size C * dt * scale, where
# scale is the sum of the absolute values of the terms entering the balance.
# The residuals are first order in dt, so C is the size of the leading error
# coefficient relative to the terms.  It is measured once here, on seeds that
# the acceptance suite never uses, and the shipped constants in
# `stochns.certificates` carry a margin of at least two over the largest
# value seen.
#
# The bump family spans the time and space radii used anywhere in the repo.
# An earlier calibration with three wide bumps gave C near 0.09 for the local
# energy terms; narrow bumps push it several times higher, which is why the
# family matters.

# %%
import itertools

import numpy as np

from stochns.certificates import (
    TestBump,
    classical_energy_check,
    ito_energy_check,
    make_alternate,
    z_shift_check,
)
from stochns.noise import make_covariance, sample_path
from stochns.solver import SolverConfig, integrate, integrate_ensemble
from stochns.spectral import BasisSpec, random_solenoidal
from stochns.stokes import ForcingSpec

basis = BasisSpec(4, 16, 1.0)
cov = make_covariance(0.1, 4, 0.25, basis)
f = ForcingSpec.from_modes(basis, [((1, 0, 0), 0.3)])
u0 = random_solenoidal(basis, np.random.default_rng(0))
T = 0.5
SEEDS = range(100, 106)


def bump_family(rng):
    out = []
    for rt, rx in itertools.product((0.06, 0.08, 0.12, 0.2), (0.8, 1.0, 1.5)):
        for _ in range(2):
            tc = rng.uniform(rt + 0.01, T - rt - 0.01)
            xc = tuple(rng.uniform(rx + 0.45, 2 * np.pi - rx - 0.45, 3))
            out.append(TestBump(tc, xc, rt, rx))
    return out


def ratio(rep):
    scale = sum(abs(v) for v in rep.terms.values())
    return abs(rep.residual) / (rep.meta["dt"] * scale) if scale > 0 else 0.0


bumps = bump_family(np.random.default_rng(77))

# %% [markdown]
# ## Local energy family at dt = 1e-3
#
# For each seed the forcing is also moved out of the Stokes part, so the same
# pass covers the alternate decomposition and the cross-term lemma.

# %%
KEYS = ("lei", "lei1", "lemma", "w_energy")
C_lei = {k: [] for k in KEYS}
C_energy = []
for seed in SEEDS:
    tr = integrate(u0, f, sample_path(cov, np.linspace(0, T, 501), seed), SolverConfig(dt=1e-3, dealias_fraction=1.0))
    alt = make_alternate(tr, ForcingSpec.zero(basis))
    for out in z_shift_check(tr, alt, bumps, C=0.0):
        for k in KEYS:
            C_lei[k].append(ratio(out[k]))
    for s, t in [(0.0, 0.5), (0.1, 0.3), (0.2, 0.4), (0.05, 0.45)]:
        C_energy.append(ratio(classical_energy_check(tr, s, t, C=0.0)))
    print(seed, {k: round(max(v), 3) for k, v in C_lei.items()}, round(max(C_energy), 4))

# %%
for k, v in C_lei.items():
    v = np.array(v)
    print(f"{k:9s} median {np.median(v):.3f}  99% {np.percentile(v, 99):.3f}  max {v.max():.3f}")
print(f"classical energy max {max(C_energy):.4f}")

# %% [markdown]
# ## First order under halving
#
# One fine path, dt = 1e-3, 5e-4, 2.5e-4 on a subset of the family.  The
# ratios sit at 2 except where a residual happens to cross zero.

# %%
fine = sample_path(cov, np.linspace(0, T, 2001), SEEDS[0])
subset = bumps[::4]
res = []
for factor in (4, 2, 1):
    cfg = SolverConfig(dt=factor * T / 2000, dealias_fraction=1.0)
    tr = integrate(u0, f, fine.coarsen(factor), cfg)
    alt = make_alternate(tr, ForcingSpec.zero(basis))
    outs = z_shift_check(tr, alt, subset, C=0.0)
    res.append([[o[k].residual for k in KEYS] for o in outs])
res = np.abs(np.array(res))
print("halving ratios (level, bump, certificate):")
print(np.round(res[:-1] / res[1:], 2))

# %% [markdown]
# ## Ito path-wise balance
#
# Path-wise residuals are diagnostics only (the verdict rests on the mean
# balance), but their C is still recorded.

# %%
paths = [sample_path(cov, np.linspace(0, T, 501), seed) for seed in SEEDS]
ens = integrate_ensemble(u0, f, paths, SolverConfig(dt=1e-3, dealias_fraction=1.0), T=T)
rep = ito_energy_check(ens, times=[0.25, 0.5], C=0.0, min_members=1)
print("Ito path-wise C max:", max(e["pathwise_C_max"] for e in rep.meta["balance"]))

# %% [markdown]
# Across the local energy family the largest C is 0.83 (the cross-term
# lemma on one bump of the family), with lei at 0.67 and the alternate decomposition
# at 0.52, so the shipped constant is 2.0.  The w-energy balance is exact to
# round-off, which is why its halving ratios are noise.  The classical energy
# ratio stays below 0.035 (shipped 0.1) and the Ito path-wise ratio below
# 0.12 (shipped 0.25).
