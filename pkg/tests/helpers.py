"""Generators shared by the module tests and the acceptance suite."""

import numpy as np

from stochns.analysis import SampledPath
from stochns.spectral import BasisSpec, SpectralField, random_solenoidal, to_grid


def gronwall_path(rng, n=301, T=3.0, signed=False):
    """ODE solution minus a nondecreasing nonnegative perturbation.

    For v = y - p with y' = -lam y + C and p >= 0 nondecreasing,
    v(t) - v(s) + lam int_s^t v = C (t - s) - [p(t) - p(s) + lam int_s^t p]
    <= C (t - s), so the hypothesis holds by construction.  y is monotone
    between v0 and C / lam, so capping p below min(v0, C / lam) keeps v >= 0
    unless ``signed`` asks for a negative start.
    """
    lam = rng.uniform(0.2, 5.0)
    C = rng.uniform(0.0, 3.0)
    v0 = rng.uniform(-2.0, 0.0) if signed else rng.uniform(0.0, 5.0)
    t = np.linspace(0.0, T, n)
    y = v0 * np.exp(-lam * t) + C / lam * (1 - np.exp(-lam * t))
    jumps = rng.exponential(1.0, n - 1) * (rng.random(n - 1) < 0.2) * rng.uniform(0, 0.05)
    p = np.concatenate([[0.0], np.cumsum(jumps)])
    if not signed and p[-1] > 0:
        p *= min(1.0, 0.9 * min(v0, C / lam) / p[-1])
    return SampledPath(t, y - p), lam, C


def sobolev_fields(seed, count, basis=None):
    """Random band-limited fields with varied spectra and amplitudes."""
    basis = basis or BasisSpec(4, 16, 1.0)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        u = random_solenoidal(basis, rng, rng.uniform(0.1, 3.0), rng.uniform(0.0, 1.0))
        out.append(to_grid(u))
    return out


def kolmogorov(basis, a=1.0, axis=2):
    """u = a (sin x_axis) e_1 style shear, single mode k = e_axis."""
    k = [0, 0, 0]
    k[axis] = 1
    comp = [0, 0, 0]
    comp[0 if axis != 0 else 1] = -0.5j * a
    return SpectralField.from_modes(basis, {tuple(k): comp})


ACCEPTANCE = {}


def record(n, title, ok, detail):
    """Log one acceptance verdict line and fail the calling test if it is red."""
    line = f"criterion {n:2d}  {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line
