"""Stochastic Stokes system dz + (A z + grad Q) dt = f dt + dW, z(0) = z0.

Every solenoidal mode is an independent complex Ornstein-Uhlenbeck process,
integrated exactly.  The noise injected on step i is the stored path
increment dW_i rescaled to the exact OU variance, so the same path can also
drive the nonlinear solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .noise import BrownianPath, CovarianceSpec
from .spectral import (
    BasisSpec,
    ScalarField,
    SpectralField,
    expand_half,
    grid_values,
    half_amplitudes,
    leray_array,
)

__all__ = [
    "ForcingSpec",
    "StokesTrajectory",
    "ou_step",
    "ou_factors",
    "solve_stokes_path",
    "stationary_law",
    "zreg_report",
]


@dataclass(frozen=True, eq=False)
class ForcingSpec:
    """Time-independent body force split into f (solenoidal) and grad Q_f."""

    f: SpectralField
    Q: ScalarField
    solenoidal_flag: bool

    @classmethod
    def from_raw(cls, basis: BasisSpec, raw) -> "ForcingSpec":
        raw = np.asarray(raw.coeff if isinstance(raw, SpectralField) else raw, dtype=complex)
        sol = leray_array(basis, raw)
        kdotf = np.sum(basis.kvec * raw, axis=0)
        Q = -1j * kdotf * basis.inv_k2
        flag = bool(np.max(np.abs(Q), initial=0.0) == 0.0)
        return cls(SpectralField(basis, sol), ScalarField(basis.K_max, Q), flag)

    @classmethod
    def from_modes(cls, basis: BasisSpec, modes) -> "ForcingSpec":
        """modes: iterable of (k, amplitude) where amplitude is a complex
        3-vector or a complex scalar along the first polarization of k."""
        raw = np.zeros((3,) + basis.shape, dtype=complex)
        K = basis.K_max
        for k, amp in modes:
            k = tuple(int(x) for x in k)
            if max(abs(x) for x in k) > K or k == (0, 0, 0):
                raise ValueError(f"forcing mode {k} outside the active lattice")
            amp = np.asarray(amp, dtype=complex)
            idx = tuple(x + K for x in k)
            cidx = tuple(-x + K for x in k)
            if amp.ndim == 0:
                amp = amp * basis.polarizations[(0, slice(None)) + idx]
            raw[(slice(None),) + idx] += amp
            raw[(slice(None),) + cidx] += np.conj(amp)
        return cls.from_raw(basis, raw)

    @classmethod
    def zero(cls, basis: BasisSpec) -> "ForcingSpec":
        return cls.from_raw(basis, np.zeros((3,) + basis.shape, dtype=complex))

    @cached_property
    def half(self) -> np.ndarray:
        return half_amplitudes(self.f.basis, self.f.coeff)

    def dual_norm(self) -> float:
        """|A^(-1/2) f|_H, the V' norm of f."""
        b = self.f.basis
        return float(np.sqrt(np.sum(np.abs(self.f.coeff) ** 2 * b.inv_k2)))


def ou_factors(lam, dt: float):
    """(E, drift gain, noise gain) for one exact OU step of length dt.

    z' = E z + gain * f + noise_gain * dW with E = exp(-lam dt),
    gain = (1 - E) / lam and noise_gain^2 = (1 - E^2) / (2 lam dt).
    """
    lam = np.asarray(lam, dtype=float)
    x = lam * dt
    E = np.exp(-x)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(x > 0, -np.expm1(-x) / np.where(lam > 0, lam, 1.0), dt)
        ng = np.where(x > 0, np.sqrt(-np.expm1(-2 * x) / np.where(x > 0, 2 * x, 1.0)), 1.0)
    return E, gain, ng


def ou_step(z_k, f_k, lam_k: float, sigma_k: float, dt: float, xi):
    """Exact OU step for one mode.

    xi is a complex draw normalized to E|xi|^2 = 1 (summed over components,
    real and imaginary parts carrying equal variance); the injected noise
    then has E|eta|^2 = sigma_k (1 - exp(-2 lam_k dt)) / (2 lam_k).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    E, gain, _ = ou_factors(lam_k, dt)
    var = sigma_k * -np.expm1(-2 * lam_k * dt) / (2 * lam_k)
    return E * np.asarray(z_k) + gain * np.asarray(f_k) + np.sqrt(var) * np.asarray(xi)


@dataclass(frozen=True, eq=False)
class StokesTrajectory:
    """z at every grid node, as polarization amplitudes (n_nodes, count, 2)."""

    grid: np.ndarray
    z_half: np.ndarray
    forcing: ForcingSpec
    path: BrownianPath | None

    @property
    def basis(self) -> BasisSpec:
        return self.forcing.f.basis

    @property
    def Q(self) -> ScalarField:
        """Pressure of the linear system; constant in time."""
        return self.forcing.Q

    def z(self, j: int) -> SpectralField:
        return SpectralField(self.basis, expand_half(self.basis, self.z_half[j]))

    def z_coeffs(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        return expand_half(self.basis, self.z_half[start:stop])


def solve_stokes_path(
    f: ForcingSpec,
    path: BrownianPath | None,
    grid=None,
    z0: SpectralField | None = None,
) -> StokesTrajectory:
    """Exact per-mode integration on the path's grid (or ``grid`` when the
    path is None, i.e. zero noise)."""
    basis = f.f.basis
    if path is not None:
        if path.basis.K_max != basis.K_max:
            raise ValueError("path and forcing live on different lattices")
        if grid is not None and not np.array_equal(np.asarray(grid, float), path.grid):
            raise ValueError("grid does not match the path grid")
        grid = path.grid
    if grid is None:
        raise ValueError("need a path or a time grid")
    grid = np.asarray(grid, dtype=float)
    lam = basis.k2[basis.half_index][:, None]
    out = np.zeros((len(grid),) + f.half.shape, dtype=complex)
    if z0 is not None:
        out[0] = half_amplitudes(basis, z0.coeff)
    dts = np.diff(grid)
    cache = {}
    for i, dt in enumerate(dts):
        fac = cache.get(dt)
        if fac is None:
            fac = cache[dt] = ou_factors(lam, dt)
        E, gain, ng = fac
        nxt = E * out[i] + gain * f.half
        if path is not None:
            nxt += ng * path.amps[i]
        out[i + 1] = nxt
    return StokesTrajectory(grid, out, f, path)


def stationary_law(cov: CovarianceSpec, f: ForcingSpec) -> tuple[SpectralField, np.ndarray]:
    """Gaussian invariant law: mean A^{-1} f and E|z_k - mean_k|^2 = sigma_k / (2 lambda_k)."""
    b = cov.basis
    mean = SpectralField(b, f.f.coeff * b.inv_k2)
    var = cov.sigma * b.inv_k2 / 2.0
    return mean, var


def zreg_report(traj: StokesTrajectory) -> dict:
    """sup_t |z|_H, trapezoid int ||z||_V^2 dt and sup_t ||z||_L4 on the grid."""
    b = traj.basis
    lam = b.k2[b.half_index][:, None]
    mag2 = np.abs(traj.z_half) ** 2
    h2 = 2.0 * mag2.sum(axis=(1, 2))
    v2 = 2.0 * (lam * mag2).sum(axis=(1, 2))
    t = traj.grid
    int_v2 = float(np.sum(np.diff(t) * (v2[1:] + v2[:-1]) / 2))
    sup_l4 = 0.0
    for start in range(0, len(t), 64):
        vals = grid_values(traj.z_coeffs(start, start + 64), b.K_max, b.M_grid)
        l4 = np.mean(np.sum(vals**2, axis=1) ** 2, axis=(1, 2, 3)) ** 0.25
        sup_l4 = max(sup_l4, float(np.max(l4)))
    return {"sup_H": float(np.sqrt(h2.max())), "int_V2": int_v2, "sup_L4": sup_l4}
