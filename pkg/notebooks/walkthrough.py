# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # A short tour
#
# One stochastic run on the K = 4 lattice, its energy certificates, and the
# long-time dissipation rate of the linear part.  Everything here runs
# in seconds on one core.

# %%
import numpy as np

from stochns.certificates import TestBump, classical_energy_check, lei_residual
from stochns.noise import make_covariance, sample_path
from stochns.solver import SolverConfig, energy_ledger, integrate
from stochns.spectral import BasisSpec, random_solenoidal
from stochns.stationary import dissipation_theta, linear_ensemble
from stochns.stokes import ForcingSpec

basis = BasisSpec(4, 16, 1.0)
cov = make_covariance(0.1, 4, 0.25, basis)
f = ForcingSpec.from_modes(basis, [((1, 0, 0), 0.3)])
u0 = random_solenoidal(basis, np.random.default_rng(0))

# %% [markdown]
# ## One path
#
# u = v + z, with z the Stokes part driven by the noise and v the random PDE
# solved by the Galerkin stepper.  The per-step energy ledger of v should be
# small and shrink with dt.

# %%
T = 0.3
tr = integrate(u0, f, sample_path(cov, np.linspace(0, T, 301), 11), SolverConfig(dt=1e-3, dealias_fraction=1.0))
led = energy_ledger(tr)
print("|v|^2 at 0 and T:", led["vH2"][0], led["vH2"][-1])
print("max per-step ledger residual:", led["max_abs_residual"])

# %% [markdown]
# ## Certificates
#
# The local energy relation tested against a smooth bump, and the classical
# energy balance of v between two times.

# %%
bump = TestBump(0.15, (3.0, 3.0, 3.0), 0.1, 1.5)
rep = lei_residual(tr, bump)
print({k: round(float(v), 6) for k, v in rep.terms.items()})
print("residual", rep.residual, "tolerance", rep.tolerance, "pass", rep.verdict)

rep = classical_energy_check(tr, 0.05, 0.25)
print("classical energy residual", rep.residual, "pass", rep.verdict)

# %% [markdown]
# ## Dissipation rate of the Stokes part
#
# Without forcing, the stationary mean of ||z||_V^2 is sigma / 2, so
# Theta(t) grows linearly with that slope.

# %%
f0 = ForcingSpec.zero(basis)
ens = linear_ensemble(f0, cov, 6.0, 1e-2, range(60))
th = dissipation_theta(ens, np.linspace(0, 1, 11), 3.0, 4, seed=0, t_min=2.0)
print("C_mu", th["C_mu"], "sigma/2", cov.total / 2, "R^2", th["R2"])
