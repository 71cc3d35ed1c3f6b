"""Divergence-free Fourier fields on the periodic box [0, 2*pi)^3.

A vector field is stored as complex coefficients u_k on the centered lattice
k in [-K, K]^3 with

    u(x) = sum_k u_k exp(i k.x).

The H inner product uses the volume-normalized measure dx / (2 pi)^3, so
|u|_H^2 = sum_k |u_k|^2 and the Stokes eigenvalues are lambda_k = |k|^2.
The k = 0 coefficient is always zero.

Every array helper accepts arbitrary leading batch axes; the component axis
(for vector fields) sits directly in front of the three lattice axes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "BasisSpec",
    "SpectralField",
    "ScalarField",
    "GridField",
    "random_solenoidal",
    "MalformedFieldError",
    "leray_project",
    "apply_A_alpha",
    "norm",
    "inner",
    "galerkin_project",
    "to_grid",
    "to_spectral",
    "grid_values",
    "half_amplitudes",
    "expand_half",
    "spectral_values",
    "write_snapshot",
    "read_snapshot",
]

LATTICE_AXES = (-3, -2, -1)


class MalformedFieldError(ValueError):
    """Raised when coefficients violate reality, shape or basis contracts."""


@dataclass(frozen=True)
class BasisSpec:
    """Truncated Fourier lattice on the 2*pi periodic box.

    K_max is the lattice cutoff (|k_j| <= K_max), M_grid the number of
    collocation points per axis and dealias_fraction the fraction of K_max
    kept by :func:`to_spectral`.
    """

    K_max: int = 4
    M_grid: int = 16
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.K_max < 1:
            raise ValueError(f"K_max must be >= 1, got {self.K_max}")
        if self.M_grid < 2 * self.K_max + 2:
            raise ValueError(
                f"M_grid={self.M_grid} too small for K_max={self.K_max} "
                f"(need >= {2 * self.K_max + 2})"
            )
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError("dealias_fraction must lie in (0, 1]")
        if self.dealias_fraction * self.K_max < 1.0 - 1e-12:
            raise ValueError("dealias_fraction * K_max must be >= 1")

    @property
    def box(self) -> float:
        return 2.0 * np.pi

    @property
    def n(self) -> int:
        return 2 * self.K_max + 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def exact_products(self) -> bool:
        """True when quadratic products are alias-free on the collocation grid."""
        return self.M_grid >= 3 * self.K_max + 1

    @cached_property
    def k1d(self) -> np.ndarray:
        return np.arange(-self.K_max, self.K_max + 1)

    @cached_property
    def kvec(self) -> np.ndarray:
        """Wavevectors, shape (3, n, n, n), float."""
        k = self.k1d.astype(float)
        return np.stack(np.meshgrid(k, k, k, indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.kvec**2, axis=0)

    @cached_property
    def active(self) -> np.ndarray:
        return self.k2 > 0

    @cached_property
    def inv_k2(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.active] = 1.0 / self.k2[self.active]
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.dealias_fraction * self.K_max + 1e-9
        kabs = np.abs(self.kvec)
        return np.all(kabs <= cut, axis=0) & self.active

    @cached_property
    def half_modes(self) -> np.ndarray:
        """Representatives of the conjugate pairs {k, -k} in canonical order.

        The representative is the member whose first nonzero component is
        positive; pairs are sorted by |k|^2 then lexicographically.
        Returns an int array of shape (n_pairs, 3).
        """
        reps = []
        for k1 in self.k1d:
            for k2 in self.k1d:
                for k3 in self.k1d:
                    k = (int(k1), int(k2), int(k3))
                    if k == (0, 0, 0):
                        continue
                    first = next(c for c in k if c != 0)
                    if first > 0:
                        reps.append(k)
        reps.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2 + k[2] ** 2, k))
        return np.array(reps, dtype=int)

    @cached_property
    def half_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Lattice indices of the canonical representatives."""
        h = self.half_modes + self.K_max
        return h[:, 0], h[:, 1], h[:, 2]

    @cached_property
    def conj_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h = -self.half_modes + self.K_max
        return h[:, 0], h[:, 1], h[:, 2]

    @property
    def mode_count(self) -> int:
        return len(self.half_modes)

    @cached_property
    def polarizations(self) -> np.ndarray:
        """Orthonormal real vectors spanning the plane normal to each k.

        Shape (2, 3, n, n, n); the vectors for k and -k coincide.
        """
        e = np.zeros((2, 3) + self.shape)
        K = self.K_max
        for k in self.half_modes:
            kh = k / np.linalg.norm(k)
            trial = np.array([1.0, 0.0, 0.0]) if abs(kh[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
            e1 = trial - kh * (trial @ kh)
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(kh, e1)
            for kk in (k, -k):
                idx = tuple(kk + K)
                e[(0, slice(None)) + idx] = e1
                e[(1, slice(None)) + idx] = e2
        return e

    @cached_property
    def grid_index(self) -> np.ndarray:
        """Position of each lattice wavenumber on an M_grid FFT axis."""
        return np.mod(self.k1d, self.M_grid)

    @cached_property
    def grid_points(self) -> np.ndarray:
        """Collocation points, shape (3, M, M, M)."""
        x = self.box * np.arange(self.M_grid) / self.M_grid
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    def with_grid(self, M: int) -> "BasisSpec":
        return BasisSpec(self.K_max, M, self.dealias_fraction)


def check_coefficients(basis: BasisSpec, coeff: np.ndarray, vector: bool = True, atol: float = 1e-12):
    """Raise MalformedFieldError unless coeff is a real-field coefficient array."""
    expected = ((3,) if vector else ()) + basis.shape
    if coeff.shape[-len(expected):] != expected:
        raise MalformedFieldError(f"coefficient shape {coeff.shape} does not end with {expected}")
    flipped = np.conj(coeff[..., ::-1, ::-1, ::-1])
    scale = max(1.0, float(np.max(np.abs(coeff), initial=0.0)))
    if np.max(np.abs(coeff - flipped), initial=0.0) > atol * scale:
        raise MalformedFieldError("coefficients violate the reality condition u(-k) = conj(u(k))")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Divergence-free, zero-mean, real vector field in Fourier form."""

    basis: BasisSpec
    coeff: np.ndarray

    def __post_init__(self):
        if self.coeff.shape != (3,) + self.basis.shape:
            raise MalformedFieldError(
                f"expected coefficients of shape {(3,) + self.basis.shape}, got {self.coeff.shape}"
            )

    @classmethod
    def zeros(cls, basis: BasisSpec) -> "SpectralField":
        return cls(basis, np.zeros((3,) + basis.shape, dtype=complex))

    @classmethod
    def from_modes(cls, basis: BasisSpec, modes: dict) -> "SpectralField":
        """Build a field from {k: complex 3-vector}; conjugates are filled in
        and the result is Leray-projected."""
        c = np.zeros((3,) + basis.shape, dtype=complex)
        K = basis.K_max
        for k, amp in modes.items():
            k = tuple(int(x) for x in k)
            if max(abs(x) for x in k) > K:
                raise MalformedFieldError(f"mode {k} outside cutoff K_max={K}")
            amp = np.asarray(amp, dtype=complex)
            c[(slice(None),) + tuple(x + K for x in k)] += amp
            c[(slice(None),) + tuple(-x + K for x in k)] += np.conj(amp)
        return leray_project(basis, c)

    def __add__(self, other):
        return SpectralField(self.basis, self.coeff + other.coeff)

    def __sub__(self, other):
        return SpectralField(self.basis, self.coeff - other.coeff)

    def __mul__(self, scalar):
        return SpectralField(self.basis, self.coeff * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.basis, -self.coeff)

    def divergence_defect(self) -> float:
        """max_k |k . u_k| / max(|u_k|, tiny)."""
        div = np.abs(np.einsum("i...,i...->...", self.basis.kvec, self.coeff))
        mag = np.sqrt(np.sum(np.abs(self.coeff) ** 2, axis=0))
        return float(np.max(div / np.maximum(mag, 1e-300) * (mag > 0), initial=0.0))

    def check(self):
        check_coefficients(self.basis, self.coeff)
        if np.any(self.coeff[(slice(None),) + (self.basis.K_max,) * 3] != 0):
            raise MalformedFieldError("mean mode must vanish")
        if self.divergence_defect() > 1e-13:
            raise MalformedFieldError("field is not divergence free")
        return self


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Zero-mean real scalar field (pressure) on a lattice of cutoff ``K``."""

    K: int
    coeff: np.ndarray

    def mean(self) -> float:
        return float(np.real(self.coeff[(self.K,) * 3]))


@dataclass(frozen=True, eq=False)
class GridField:
    basis: BasisSpec
    values: np.ndarray  # (3, M, M, M) real

    def __post_init__(self):
        M = self.basis.M_grid
        if self.values.shape != (3, M, M, M):
            raise MalformedFieldError(f"grid values must have shape {(3, M, M, M)}, got {self.values.shape}")


# ---------------------------------------------------------------------------
# array kernels


def leray_array(basis: BasisSpec, coeff: np.ndarray) -> np.ndarray:
    """(I - k k^T / |k|^2) u_k, mean mode removed."""
    kv = basis.kvec
    kdotu = np.sum(kv * coeff, axis=-4)
    out = coeff - kv * (kdotu * basis.inv_k2)[..., None, :, :, :]
    return out * basis.active


def grid_values(coeff: np.ndarray, K: int, M: int) -> np.ndarray:
    """Physical values of real fields given centered coefficients of cutoff K.

    coeff has shape (..., 2K+1, 2K+1, 2K+1); returns (..., M, M, M).
    """
    if M < 2 * K + 1:
        raise MalformedFieldError(f"grid {M} cannot carry cutoff {K}")
    idx = np.mod(np.arange(-K, K + 1), M)
    lead = coeff.shape[:-3]
    half = np.zeros(lead + (M, M, M // 2 + 1), dtype=complex)
    half[..., idx[:, None, None], idx[None, :, None], np.arange(K + 1)[None, None, :]] = coeff[..., K:]
    return sfft.irfftn(half, s=(M, M, M), axes=LATTICE_AXES) * M**3


def spectral_values(values: np.ndarray, K: int) -> np.ndarray:
    """Centered coefficients of cutoff K of real grid values (..., M, M, M)."""
    M = values.shape[-1]
    if M < 2 * K + 1:
        raise MalformedFieldError(f"grid {M} cannot resolve cutoff {K}")
    half = sfft.rfftn(values, axes=LATTICE_AXES) / M**3
    idx = np.mod(np.arange(-K, K + 1), M)
    n = 2 * K + 1
    out = np.empty(values.shape[:-3] + (n, n, n), dtype=complex)
    out[..., K:] = half[..., idx[:, None, None], idx[None, :, None], np.arange(K + 1)[None, None, :]]
    lower = np.conj(out[..., ::-1, ::-1, ::-1])
    out[..., :K] = lower[..., :K]
    if M % 2 == 0 and K == M // 2:
        raise MalformedFieldError("cutoff reaches the Nyquist wavenumber")
    return out


def half_amplitudes(basis: BasisSpec, coeff: np.ndarray) -> np.ndarray:
    """Polarization amplitudes (..., count, 2) of divergence-free coefficients.

    |u|_H^2 = 2 * sum |amps|^2 since k and -k carry conjugate amplitudes.
    """
    i, j, k = basis.half_index
    pol = basis.polarizations[:, :, i, j, k]  # (2, 3, count)
    return np.einsum("...cr,pcr->...rp", coeff[..., :, i, j, k], pol)


def expand_half(basis: BasisSpec, amps: np.ndarray) -> np.ndarray:
    """Inverse of :func:`half_amplitudes`: (..., count, 2) to (..., 3, n, n, n)."""
    i, j, k = basis.half_index
    pol = basis.polarizations[:, :, i, j, k]
    half = np.einsum("...rp,pcr->...cr", amps, pol)
    out = np.zeros(amps.shape[:-2] + (3,) + basis.shape, dtype=complex)
    out[..., i, j, k] = half
    ci, cj, ck = basis.conj_index
    out[..., ci, cj, ck] = np.conj(half)
    return out


def random_solenoidal(basis: BasisSpec, rng, amplitude: float = 0.5, decay: float = 1.0) -> SpectralField:
    """Random real divergence-free field with amplitudes ~ amplitude * exp(-decay |k|^2)."""
    lam = basis.k2[basis.half_index]
    amps = rng.standard_normal((basis.mode_count, 2)) + 1j * rng.standard_normal((basis.mode_count, 2))
    amps *= (amplitude * np.exp(-decay * lam))[:, None]
    return SpectralField(basis, expand_half(basis, amps))


def gradient_array(basis: BasisSpec, coeff: np.ndarray) -> np.ndarray:
    """Coefficients of d_j u_i, shape (..., 3 [i], 3 [j], n, n, n)."""
    return 1j * coeff[..., :, None, :, :, :] * basis.kvec[None]


# ---------------------------------------------------------------------------
# public operations


def leray_project(basis: BasisSpec, raw) -> SpectralField:
    """Orthogonal projection onto divergence-free, zero-mean fields."""
    raw = np.asarray(raw.coeff if isinstance(raw, SpectralField) else raw, dtype=complex)
    check_coefficients(basis, raw)
    out = leray_array(basis, raw)
    # modes already divergence-free to round-off are passed through untouched,
    # which makes the projection exactly idempotent
    kdotu = np.abs(np.sum(basis.kvec * raw, axis=0))
    keep = (kdotu <= 1e-13 * np.sqrt(np.sum(np.abs(raw) ** 2, axis=0))) & basis.active
    out[:, keep] = raw[:, keep]
    return SpectralField(basis, out)


def apply_A_alpha(u: SpectralField, alpha: float) -> SpectralField:
    """Fractional Stokes power: multiply each coefficient by |k|^(2 alpha)."""
    b = u.basis
    factor = np.zeros(b.shape)
    factor[b.active] = b.k2[b.active] ** alpha
    return SpectralField(b, u.coeff * factor)


def inner(u: SpectralField, w: SpectralField) -> float:
    """H inner product."""
    return float(np.real(np.vdot(u.coeff, w.coeff)))


def norm(u: SpectralField, kind: str = "H", alpha: float | None = None, q: float | None = None) -> float:
    """Norm of a spectral field.

    kind: "H", "V", "DA" (needs alpha) or "Lq" (needs q, evaluated by
    collocation quadrature on the basis grid).
    """
    b = u.basis
    sq = np.sum(np.abs(u.coeff) ** 2, axis=0)
    if kind == "H":
        return float(np.sqrt(np.sum(sq)))
    if kind == "V":
        return float(np.sqrt(np.sum(b.k2 * sq)))
    if kind == "DA":
        if alpha is None:
            raise ValueError("DA norm needs alpha")
        w = np.zeros(b.shape)
        w[b.active] = b.k2[b.active] ** (2 * alpha)
        return float(np.sqrt(np.sum(w * sq)))
    if kind == "Lq":
        if q is None or q < 1:
            raise ValueError("Lq norm needs q >= 1")
        vals = to_grid(u).values
        mag = np.sqrt(np.sum(vals**2, axis=0))
        return float(np.mean(mag**q) ** (1.0 / q))
    raise ValueError(f"unknown norm kind {kind!r}")


def galerkin_mask(basis: BasisSpec, N: int | None) -> np.ndarray:
    """Boolean lattice mask of the first N conjugate pairs in canonical order."""
    if N is None:
        return basis.active.copy()
    if N < 1:
        raise ValueError("Galerkin rank N must be >= 1")
    mask = np.zeros(basis.shape, dtype=bool)
    N = min(N, basis.mode_count)
    i, j, k = (a[:N] for a in basis.half_index)
    mask[i, j, k] = True
    i, j, k = (a[:N] for a in basis.conj_index)
    mask[i, j, k] = True
    return mask


def galerkin_project(u: SpectralField, N: int) -> SpectralField:
    """Keep the first N conjugate mode pairs (ordered by |k|^2, then k)."""
    return SpectralField(u.basis, u.coeff * galerkin_mask(u.basis, N))


def to_grid(u: SpectralField) -> GridField:
    b = u.basis
    return GridField(b, grid_values(u.coeff, b.K_max, b.M_grid))


def to_spectral(g: GridField, basis: BasisSpec | None = None) -> SpectralField:
    """Grid values to coefficients with the dealias mask applied.

    No Leray projection is performed.
    """
    b = g.basis
    if basis is not None and basis != b:
        raise MalformedFieldError("basis mismatch")
    if g.values.shape[-1] != b.M_grid:
        raise MalformedFieldError("grid size mismatch")
    c = spectral_values(g.values, b.K_max) * b.dealias_mask
    return SpectralField(b, c)


# ---------------------------------------------------------------------------
# snapshot format


SNAPSHOT_VERSION = 1


def _pack_header(magic: bytes, basis: BasisSpec) -> bytes:
    return magic + struct.pack("<IIQ", SNAPSHOT_VERSION, basis.K_max, basis.mode_count)


def _unpack_header(buf: bytes, magic: bytes) -> tuple[int, int, int, int]:
    if buf[:4] != magic:
        raise MalformedFieldError(f"bad magic {buf[:4]!r}, expected {magic!r}")
    version, K, count = struct.unpack_from("<IIQ", buf, 4)
    return version, K, count, 4 + 16


def pack_modes(basis: BasisSpec, coeff: np.ndarray) -> bytes:
    """Canonical-order (re, im) float64 pairs per component, little endian."""
    i, j, k = basis.half_index
    vals = coeff[..., i, j, k]  # (..., 3, count)
    vals = np.moveaxis(vals, -1, -2)  # (..., count, 3)
    pairs = np.stack([vals.real, vals.imag], axis=-1)
    return pairs.astype("<f8").tobytes()


def unpack_modes(basis: BasisSpec, buf: bytes, offset: int, lead: tuple = ()) -> tuple[np.ndarray, int]:
    count = basis.mode_count
    size = int(np.prod(lead, dtype=int)) * count * 3 * 2
    arr = np.frombuffer(buf, dtype="<f8", count=size, offset=offset).reshape(lead + (count, 3, 2))
    vals = arr[..., 0] + 1j * arr[..., 1]
    coeff = np.zeros(lead + (3,) + basis.shape, dtype=complex)
    i, j, k = basis.half_index
    coeff[..., i, j, k] = np.moveaxis(vals, -1, -2)
    ci, cj, ck = basis.conj_index
    coeff[..., ci, cj, ck] = np.conj(np.moveaxis(vals, -1, -2))
    return coeff, offset + size * 8


def write_snapshot(path, u: SpectralField):
    with open(path, "wb") as fh:
        fh.write(_pack_header(b"SNSF", u.basis))
        fh.write(pack_modes(u.basis, u.coeff))


def read_snapshot(path, M_grid: int | None = None, dealias_fraction: float = 2.0 / 3.0) -> SpectralField:
    with open(path, "rb") as fh:
        buf = fh.read()
    _, K, count, off = _unpack_header(buf, b"SNSF")
    basis = BasisSpec(K, M_grid or max(16, 4 * K), dealias_fraction)
    if count != basis.mode_count:
        raise MalformedFieldError("mode count does not match K_max")
    coeff, _ = unpack_modes(basis, buf, off)
    return SpectralField(basis, coeff)
