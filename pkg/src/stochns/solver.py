"""Galerkin-regularized Navier-Stokes for v = u - z.

    dv/dt - Lap v + [(P^N v + P^N z) . grad](v + z) + grad pi = 0,  v(0) = P^N u0

Each step solves v' = exp(-A dt) v - dt * B_N(v') by fixed-point iteration,
the advecting field being frozen inside one linear solve and updated
between iterations.  The nonlinearity is evaluated pseudo-spectrally on a
grid fine enough (M >= 3K + 1) for quadratic products to be exact before
truncation.

Ensemble members are marched in lockstep: every array carries a leading
member axis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .noise import BrownianPath
from .spectral import (
    BasisSpec,
    ScalarField,
    SpectralField,
    expand_half,
    galerkin_mask,
    gradient_array,
    grid_values,
    half_amplitudes,
    leray_array,
    spectral_values,
)
from .stokes import ForcingSpec, StokesTrajectory, ou_factors

__all__ = [
    "SolverConfig",
    "StepRejected",
    "Trajectory",
    "bilinear_B",
    "linear_substep",
    "fixed_point_step",
    "recover_pressure",
    "integrate",
    "integrate_ensemble",
    "energy_ledger",
    "save_trajectory",
    "load_trajectory",
]

log = logging.getLogger(__name__)

MAX_HALVINGS = 6


class StepRejected(RuntimeError):
    def __init__(self, msg: str, contraction_est: float, t: float | None = None):
        super().__init__(msg)
        self.contraction_est = contraction_est
        self.t = t


@dataclass(frozen=True)
class SolverConfig:
    N: int | None = None
    dt: float = 1e-3
    tol_fp: float = 1e-10
    max_iter: int = 50
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.dt <= 0 or self.tol_fp <= 0:
            raise ValueError("dt and tol_fp must be positive")
        if self.max_iter < 2:
            raise ValueError("max_iter must be at least 2")

    def basis_for(self, basis: BasisSpec) -> BasisSpec:
        return BasisSpec(basis.K_max, basis.M_grid, self.dealias_fraction)


# ---------------------------------------------------------------------------
# kernels on coefficient arrays


def advect_array(basis: BasisSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficients |k_j| <= K of (a . grad) b, no masking or projection."""
    K, M = basis.K_max, basis.M_grid
    ag = grid_values(a, K, M)
    gb = grid_values(gradient_array(basis, b), K, M)
    prod = np.sum(ag[..., None, :, :, :, :] * gb, axis=-4)
    return spectral_values(prod, K)


class Nonlinearity:
    """w -> Leray D[(P^N (w + z) . grad)(w + z)] with D the dealias mask."""

    def __init__(self, basis: BasisSpec, N: int | None):
        self.basis = basis
        self.gmask = galerkin_mask(basis, N)
        self.dmask = basis.dealias_mask

    def advection(self, w: np.ndarray, z: np.ndarray) -> np.ndarray:
        b = w + z
        return advect_array(self.basis, b * self.gmask, b) * self.dmask

    def __call__(self, w: np.ndarray, z: np.ndarray) -> np.ndarray:
        return leray_array(self.basis, self.advection(w, z))


def _combined_norm(basis: BasisSpec, d: np.ndarray, dt: float) -> np.ndarray:
    """(|d|_H^2 + dt ||d||_V^2)^(1/2) per leading index."""
    sq = np.abs(d) ** 2
    w = 1.0 + dt * basis.k2
    return np.sqrt(np.sum(sq * w, axis=(-4, -3, -2, -1)))


def pressure_array(basis: BasisSpec, adv: np.ndarray) -> np.ndarray:
    """pi_k = i k . adv_k / |k|^2, so that adv + grad pi is divergence-free."""
    return 1j * np.sum(basis.kvec * adv, axis=-4) * basis.inv_k2


# ---------------------------------------------------------------------------
# public single-field operations


def bilinear_B(a: SpectralField, b: SpectralField) -> SpectralField:
    """Leray-projected, dealiased (a . grad) b."""
    basis = a.basis
    if b.basis != basis:
        raise ValueError("fields live on different bases")
    adv = advect_array(basis, a.coeff, b.coeff) * basis.dealias_mask
    return SpectralField(basis, leray_array(basis, adv))


def linear_substep(w_frozen: SpectralField, z_seg, v_in: SpectralField, dt: float, N: int | None = None) -> SpectralField:
    """One integrating-factor step with the advection frozen at w_frozen.

    v_out = exp(-A dt) v_in - dt * B(P^N w + P^N z, w + z), z taken at the
    step's right end.  This is the map whose fixed point defines the step.
    """
    basis = v_in.basis
    z_end = z_seg[-1].coeff
    nl = Nonlinearity(basis, N)
    E = np.exp(-basis.k2 * dt)
    return SpectralField(basis, E * v_in.coeff - dt * nl(w_frozen.coeff, z_end))


class _Stepper:
    def __init__(self, basis: BasisSpec, cfg: SolverConfig):
        self.basis = basis
        self.cfg = cfg
        self.nl = Nonlinearity(basis, cfg.N)
        self._E = {}

    def E(self, dt: float) -> np.ndarray:
        e = self._E.get(dt)
        if e is None:
            e = self._E[dt] = np.exp(-self.basis.k2 * dt)
        return e

    def solve(self, v: np.ndarray, z_next: np.ndarray, dt: float, guess: np.ndarray | None = None):
        """Batched fixed-point solve; returns (v', N(v'), iters, contraction, ok).

        Iteration starts from ``guess`` (default v).
        """
        cfg = self.cfg
        B = v.shape[0]
        base = self.E(dt) * v
        w = (v if guess is None else guess).copy()
        nl_w = np.zeros_like(v)
        iters = np.zeros(B, dtype=int)
        last = np.full(B, np.nan)
        contraction = np.full(B, np.nan)
        ok = np.zeros(B, dtype=bool)
        active = np.arange(B)
        for it in range(1, cfg.max_iter + 1):
            n_a = self.nl(w[active], z_next[active])
            new = base[active] - dt * n_a
            d = _combined_norm(self.basis, new - w[active], dt)
            with np.errstate(divide="ignore", invalid="ignore"):
                contraction[active] = np.where(np.isfinite(last[active]), d / last[active], np.nan)
            last[active] = d
            w[active] = new
            nl_w[active] = n_a
            iters[active] = it
            done = d <= cfg.tol_fp
            ok[active[done]] = True
            active = active[~done]
            if active.size == 0:
                break
        return w, nl_w, iters, contraction, ok


def fixed_point_step(v: SpectralField, z_seg, cfg: SolverConfig) -> tuple[SpectralField, int, float]:
    """Solve one step by iterating w -> linear_substep(w, ...) from w = v.

    Raises StepRejected when max_iter is exhausted.
    """
    basis = v.basis
    st = _Stepper(basis, cfg)
    w, _, iters, contraction, ok = st.solve(v.coeff[None], z_seg[-1].coeff[None], cfg.dt)
    if not ok[0]:
        raise StepRejected("fixed point did not converge", float(contraction[0]))
    return SpectralField(basis, w[0]), int(iters[0]), float(contraction[0])


def recover_pressure(v: SpectralField, z: SpectralField, N: int | None = None) -> ScalarField:
    """Zero-mean pressure making the (dealiased) advection divergence-free."""
    basis = v.basis
    adv = Nonlinearity(basis, N).advection(v.coeff, z.coeff)
    return ScalarField(basis.K_max, pressure_array(basis, adv))


# ---------------------------------------------------------------------------
# trajectories


@dataclass(eq=False)
class Trajectory:
    """Output of :func:`integrate`.

    Fields are kept as polarization amplitudes per node (``v_half`` and
    ``stokes.z_half``) when stored; ``scalars`` always holds the per-node
    energy bookkeeping used by the certificates.
    """

    grid: np.ndarray
    basis: BasisSpec
    cfg: SolverConfig
    forcing: ForcingSpec
    path: BrownianPath | None
    scalars: dict
    v_half: np.ndarray | None = None
    stokes: StokesTrajectory | None = None
    linear_only: bool = False
    warnings: list = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.grid)

    def _need_fields(self):
        if self.v_half is None:
            raise ValueError("trajectory was integrated without stored fields")

    def v(self, j: int) -> SpectralField:
        self._need_fields()
        return SpectralField(self.basis, expand_half(self.basis, self.v_half[j]))

    def z(self, j: int) -> SpectralField:
        self._need_fields()
        return self.stokes.z(j)

    def u(self, j: int) -> SpectralField:
        return self.v(j) + self.z(j)

    def pi(self, j: int) -> ScalarField:
        if self.linear_only:
            return ScalarField(self.basis.K_max, np.zeros(self.basis.shape, dtype=complex))
        return recover_pressure(self.v(j), self.z(j), self.cfg.N)

    def P(self, j: int) -> ScalarField:
        pi = self.pi(j)
        return ScalarField(pi.K, pi.coeff + self.forcing.Q.coeff)

    def v_coeffs(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        self._need_fields()
        return expand_half(self.basis, self.v_half[start:stop])

    def z_coeffs(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        self._need_fields()
        return self.stokes.z_coeffs(start, stop)


def _inner_half(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * np.real(np.sum(np.conj(a) * b, axis=(-2, -1)))


def _prepare_u0(basis: BasisSpec, u0: SpectralField | None, N: int | None, warnings: list) -> np.ndarray:
    if u0 is None:
        return np.zeros((3,) + basis.shape, dtype=complex)
    c = np.asarray(u0.coeff, dtype=complex)
    proj = leray_array(basis, c)
    if np.max(np.abs(proj - c), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(c))):
        warnings.append("u0 had a mean or gradient part; projected on ingestion")
    keep = galerkin_mask(basis, N) & basis.dealias_mask
    out = proj * keep
    dropped = np.max(np.abs(proj * galerkin_mask(basis, N) - out), initial=0.0)
    if dropped > 0:
        warnings.append("u0 modes outside the dealiased band were removed")
    return out


def integrate_ensemble(
    u0: SpectralField | None,
    f: ForcingSpec,
    paths: list,
    cfg: SolverConfig,
    T: float | None = None,
    store: bool = False,
    linear_only: bool = False,
) -> list[Trajectory]:
    """March all members in lockstep on a shared grid.

    ``paths`` is a list of BrownianPath (or a single None for zero noise, in
    which case T fixes the grid).  With ``linear_only`` the nonlinearity is
    switched off: u0 becomes the initial value of z and v stays 0, so u
    solves the stochastic Stokes system.
    """
    basis = cfg.basis_for(f.f.basis)
    if paths and paths[0] is not None:
        grid = paths[0].grid
        for p in paths:
            if not np.array_equal(p.grid, grid):
                raise ValueError("ensemble members must share one time grid")
    else:
        if T is None:
            raise ValueError("zero-noise runs need T")
        n = int(round(T / cfg.dt))
        if abs(n * cfg.dt - T) > 1e-9:
            raise ValueError("T must be a multiple of dt")
        grid = np.linspace(0.0, n * cfg.dt, n + 1)
        paths = [None] * max(1, len(paths))
    B = len(paths)
    n_nodes = len(grid)
    warnings: list = []
    v0 = _prepare_u0(basis, u0, cfg.N, warnings)
    for w in warnings:
        log.warning(w)

    lam = basis.k2[basis.half_index][:, None]
    f_half = f.half
    noisy = paths[0] is not None
    inc = np.stack([p.amps for p in paths]) if noisy else None  # (B, n_steps, count, 2)

    v = np.broadcast_to(v0, (B,) + v0.shape).copy()
    vh = half_amplitudes(basis, v)
    zh = np.zeros((B,) + f_half.shape, dtype=complex)
    z = np.zeros_like(v)
    if linear_only:
        z, v = v, np.zeros_like(v)
        zh, vh = vh, np.zeros_like(vh)
    st = _Stepper(basis, cfg)

    keys = ("vH2", "gradV2", "rhs", "uH2", "uV2", "fu", "udW", "iters")
    sc = {k: np.zeros((B, n_nodes)) for k in keys}
    if store:
        v_store = np.zeros((B, n_nodes) + vh.shape[1:], dtype=complex)
        z_store = np.zeros_like(v_store)
        v_store[:, 0] = vh
        z_store[:, 0] = zh

    def record(j, vh, zh, rhs):
        uh = vh + zh
        sc["vH2"][:, j] = _inner_half(vh, vh)
        sc["gradV2"][:, j] = _inner_half(vh, lam * vh)
        sc["rhs"][:, j] = rhs
        sc["uH2"][:, j] = _inner_half(uh, uh)
        sc["uV2"][:, j] = _inner_half(uh, lam * uh)
        sc["fu"][:, j] = _inner_half(f_half[None], uh)

    def rhs_direct(v, z):
        a = (v + z) * st.nl.gmask
        adv = advect_array(basis, a, v)
        return np.real(np.sum(np.conj(z) * adv, axis=(-4, -3, -2, -1)))

    record(0, vh, zh, np.zeros(B) if linear_only else rhs_direct(v, z))
    nl_prev = None
    for i in range(n_nodes - 1):
        dt = grid[i + 1] - grid[i]
        E, gain, ng = ou_factors(lam, dt)
        zh_next = E * zh + gain * f_half
        if noisy:
            sc["udW"][:, i] = _inner_half(vh + zh, inc[:, i])
            zh_next = zh_next + ng * inc[:, i]
        z_next = expand_half(basis, zh_next)
        if linear_only:
            rhs = np.zeros(B)
            sc["iters"][:, i + 1] = 0
        else:
            # predictor: previous step's nonlinearity, frozen
            guess = st.E(dt) * v - dt * nl_prev if nl_prev is not None else None
            w, nl_w, iters, contraction, ok = st.solve(v, z_next, dt, guess)
            for m in np.flatnonzero(~ok):
                w[m], nl_w[m], iters[m] = _retry(st, v[m], z, z_next, m, dt, grid[i])
            v = w
            nl_prev = nl_w
            # <v, N(v)> = -int z.(a.grad)v by skew-symmetry (v lies in the dealiased band)
            rhs = -np.real(np.sum(np.conj(v) * nl_w, axis=(-4, -3, -2, -1)))
            sc["iters"][:, i + 1] = iters
        z = z_next
        zh = zh_next
        vh = half_amplitudes(basis, v)
        record(i + 1, vh, zh, rhs)
        if store:
            v_store[:, i + 1] = vh
            z_store[:, i + 1] = zh

    out = []
    for m in range(B):
        scal = {k: a[m].copy() for k, a in sc.items()}
        tr = Trajectory(grid, basis, cfg, f, paths[m], scal, linear_only=linear_only, warnings=list(warnings))
        if store:
            tr.v_half = v_store[m]
            tr.stokes = StokesTrajectory(grid, z_store[m], f, paths[m])
        out.append(tr)
    return out


def _retry(st: _Stepper, v, z_prev_all, z_next_all, m: int, dt: float, t: float):
    """Re-solve a rejected step with 2, 4, ... substeps; z is linearly
    interpolated inside the step."""
    z0, z1 = z_prev_all[m], z_next_all[m]
    contraction = np.nan
    for level in range(1, MAX_HALVINGS + 1):
        n_sub = 2**level
        h = dt / n_sub
        w = v[None].copy()
        total_iters = 0
        failed = False
        for s in range(1, n_sub + 1):
            zs = (z0 + (z1 - z0) * (s / n_sub))[None]
            w, nl_w, iters, contr, ok = st.solve(w, zs, h)
            total_iters += int(iters[0])
            contraction = float(contr[0])
            if not ok[0]:
                failed = True
                break
        if not failed:
            log.info("step at t=%.6g accepted after %d halvings", t, level)
            return w[0], nl_w[0], total_iters
    raise StepRejected(
        f"fixed point failed at t={t:.6g} after {MAX_HALVINGS} halvings (contraction {contraction:.3g})",
        contraction,
        t,
    )


def integrate(
    u0: SpectralField | None,
    f: ForcingSpec,
    path: BrownianPath | None,
    cfg: SolverConfig,
    T: float | None = None,
    store: bool = True,
    linear_only: bool = False,
) -> Trajectory:
    """Single trajectory; see :func:`integrate_ensemble`."""
    return integrate_ensemble(u0, f, [path], cfg, T=T, store=store, linear_only=linear_only)[0]


def energy_ledger(traj: Trajectory) -> dict:
    """Per-step residual of 1/2 d|v|^2 + ||v||^2 = int z.[(P^N u).grad] v.

    residual_n = (|v_{n+1}|^2 - |v_n|^2)/2 + dt * mean(||v||^2)
                 - dt * mean(rhs), means taken over the step's end points.
    Row 0 carries residual 0.
    """
    s = traj.scalars
    t = traj.grid
    dt = np.diff(t)
    res = np.zeros(len(t))
    res[1:] = (
        0.5 * np.diff(s["vH2"])
        + dt * 0.5 * (s["gradV2"][1:] + s["gradV2"][:-1])
        - dt * 0.5 * (s["rhs"][1:] + s["rhs"][:-1])
    )
    return {
        "t": t,
        "vH2": s["vH2"],
        "gradV2": s["gradV2"],
        "rhs": s["rhs"],
        "residual": res,
        "max_abs_residual": float(np.max(np.abs(res))),
    }


def save_trajectory(fname, traj: Trajectory):
    """npz dump holding everything needed to rebuild the trajectory."""
    b = traj.basis
    arrays = {
        "grid": traj.grid,
        "basis": np.array([b.K_max, b.M_grid], dtype=np.int64),
        "dealias": np.array(b.dealias_fraction),
        "cfg": np.array([-1 if traj.cfg.N is None else traj.cfg.N, traj.cfg.dt, traj.cfg.tol_fp, traj.cfg.max_iter]),
        "f": traj.forcing.f.coeff,
        "Q": traj.forcing.Q.coeff,
        "linear_only": np.array(traj.linear_only),
    }
    for k, a in traj.scalars.items():
        arrays["scalar_" + k] = a
    if traj.v_half is not None:
        arrays["v_half"] = traj.v_half
        arrays["z_half"] = traj.stokes.z_half
    if traj.path is not None:
        arrays["path_amps"] = traj.path.amps
        arrays["path_meta"] = np.array([traj.path.seed, traj.path.cov.c, traj.path.cov.r, traj.path.cov.delta])
    np.savez(fname, **arrays)


def load_trajectory(fname) -> Trajectory:
    from .noise import make_covariance

    with np.load(fname) as z:
        K, M = (int(x) for x in z["basis"])
        basis = BasisSpec(K, M, float(z["dealias"]))
        N, dt, tol, it = z["cfg"]
        cfg = SolverConfig(N=None if N < 0 else int(N), dt=float(dt), tol_fp=float(tol), max_iter=int(it), dealias_fraction=basis.dealias_fraction)
        forcing = ForcingSpec(SpectralField(basis, z["f"]), ScalarField(K, z["Q"]), bool(np.max(np.abs(z["Q"]), initial=0.0) == 0.0))
        grid = z["grid"]
        path = None
        if "path_amps" in z:
            seed, c, r, delta = z["path_meta"]
            path = BrownianPath(grid, z["path_amps"], int(seed), make_covariance(c, r, delta, basis))
        scalars = {k[7:]: z[k] for k in z.files if k.startswith("scalar_")}
        v_half = stokes = None
        if "v_half" in z:
            v_half = z["v_half"]
            stokes = StokesTrajectory(grid, z["z_half"], forcing, path)
        return Trajectory(grid, basis, cfg, forcing, path, scalars, v_half, stokes, bool(z["linear_only"]))
