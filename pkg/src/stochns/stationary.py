"""Path-space tools: time shift, the metric on (u, W) pairs, Krylov-Bogoliubov
averages, stationarity tests and the mean dissipation rate."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator

import numpy as np
from scipy import stats

from .analysis import SampledPath, wsp_norm
from .certificates import CertificateReport
from .noise import BrownianPath, CovarianceSpec, sample_path, weighted_values
from .solver import SolverConfig, Trajectory
from .spectral import BasisSpec, half_amplitudes
from .stokes import ForcingSpec, solve_stokes_path, stationary_law

__all__ = [
    "Observable",
    "EmpiricalMeasure",
    "shift",
    "metric",
    "metric_details",
    "linear_ensemble",
    "kb_average",
    "stationarity_test",
    "dissipation_theta",
    "stokes_invariant_check",
    "tightness_report",
    "energy_observable",
    "dissipation_observable",
    "mode_re_observable",
    "mode_sq_observable",
]


# ---------------------------------------------------------------------------
# shift and metric


def _node(grid, t):
    j = int(np.argmin(np.abs(grid - t)))
    if abs(grid[j] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"shift time {t} is not a grid node")
    return j


def shift(traj: Trajectory, t: float, resolve_z: bool = False) -> Trajectory:
    """tau_t: re-index u from t on and re-base W to 0 at the new origin.

    z is carried (z(t) is kept), so u = v + z is unchanged pointwise.  With
    ``resolve_z`` the linear problem is re-solved from 0 on the re-based
    path and v absorbs the difference.
    """
    g = traj.grid
    j = _node(g, t)
    if j >= len(g) - 1:
        raise ValueError("shifted window would be empty")
    new_grid = g[j:] - g[j]
    path = traj.path.slice(j) if traj.path is not None else None
    scal = {k: np.asarray(a)[j:].copy() for k, a in traj.scalars.items()}
    out = replace(traj, grid=new_grid, path=path, scalars=scal, warnings=list(traj.warnings))
    if traj.v_half is not None:
        zs = traj.stokes.z_half[j:]
        vs = traj.v_half[j:]
        stokes = replace(traj.stokes, grid=new_grid, z_half=zs, path=path)
        if resolve_z:
            fresh = solve_stokes_path(traj.forcing, path, grid=new_grid if path is None else None)
            vs = vs + zs - fresh.z_half
            stokes = fresh
        out.v_half = vs
        out.stokes = stokes
    return out


def _u_half(traj: Trajectory) -> np.ndarray:
    if traj.v_half is None:
        raise ValueError("metric needs stored fields")
    return traj.v_half + traj.stokes.z_half


def _w_half(traj: Trajectory) -> np.ndarray:
    if traj.path is None:
        return np.zeros((len(traj.grid),) + traj.v_half.shape[1:], dtype=complex)
    return traj.path.value_amps()


def metric_details(a: Trajectory, b: Trajectory) -> dict:
    """d = d1(u) + d2(W) with both series truncated at the window length.

    d1 = sum_n 2^-n (1 ^ int_0^n |u_a - u_b|_H^2)^(1/2),
    d2 = sum_n 2^-n (1 ^ sup_(0,n) |W_a - W_b|_H).
    Each truncated tail is bounded by 2^-n_max.
    """
    if a.grid.shape != b.grid.shape or not np.allclose(a.grid, b.grid, rtol=0, atol=1e-9):
        raise ValueError("trajectories must share a time grid")
    g = a.grid
    n_max = int(np.floor(g[-1] + 1e-9))
    du = _u_half(a) - _u_half(b)
    e = 2.0 * np.sum(np.abs(du) ** 2, axis=(1, 2))
    cum = np.concatenate([[0.0], np.cumsum(np.diff(g) * (e[1:] + e[:-1]) / 2)])
    dw = _w_half(a) - _w_half(b)
    wn = np.sqrt(2.0 * np.sum(np.abs(dw) ** 2, axis=(1, 2)))
    runmax = np.maximum.accumulate(wn)
    d1 = d2 = 0.0
    for n in range(1, n_max + 1):
        j = _node(g, float(n))
        d1 += 2.0**-n * np.sqrt(min(1.0, cum[j]))
        d2 += 2.0**-n * min(1.0, runmax[j])
    return {"d1": float(d1), "d2": float(d2), "d": float(d1 + d2), "n_max": n_max, "remainder_bound": 2.0**-n_max}


def metric(a: Trajectory, b: Trajectory) -> float:
    return metric_details(a, b)["d"]


# ---------------------------------------------------------------------------
# observables and empirical measures


@dataclass(frozen=True)
class Observable:
    """A deterministic functional of a trajectory window starting at 0.

    ``window`` is the time span the evaluator reads beyond the origin.
    """

    name: str
    evaluator: Callable[[Trajectory], float]
    window: float = 0.0

    def __call__(self, traj: Trajectory) -> float:
        return float(self.evaluator(traj))


def energy_observable() -> Observable:
    return Observable("energy0", lambda tr: tr.scalars["uH2"][0])


def dissipation_observable(t: float = 1.0) -> Observable:
    def ev(tr):
        j = _node(tr.grid, t)
        y = tr.scalars["uV2"][: j + 1]
        return float(np.sum(np.diff(tr.grid[: j + 1]) * (y[1:] + y[:-1]) / 2))

    return Observable(f"dissipation[0,{t:g}]", ev, t)


def _mode_index(basis: BasisSpec, k) -> int:
    k = np.asarray(k, dtype=int)
    hits = np.flatnonzero(np.all(basis.half_modes == k, axis=1))
    if hits.size == 0:
        hits = np.flatnonzero(np.all(basis.half_modes == -k, axis=1))
        if hits.size == 0:
            raise ValueError(f"mode {tuple(k)} not on the lattice")
    return int(hits[0])


def _u0_amps(tr: Trajectory, r: int) -> np.ndarray:
    if tr.v_half is None:
        raise ValueError("mode observables need stored fields")
    return tr.v_half[0, r] + tr.stokes.z_half[0, r]


def mode_re_observable(basis: BasisSpec, k, pol: int = 0) -> Observable:
    r = _mode_index(basis, k)
    return Observable(f"Re u{tuple(basis.half_modes[r])}[{pol}]", lambda tr: np.real(_u0_amps(tr, r)[pol]))


def mode_sq_observable(basis: BasisSpec, k) -> Observable:
    r = _mode_index(basis, k)
    return Observable(f"|u{tuple(basis.half_modes[r])}|^2", lambda tr: np.sum(np.abs(_u0_amps(tr, r)) ** 2))


@dataclass
class EmpiricalMeasure:
    samples: dict
    meta: dict = field(default_factory=dict)

    def mean(self, name: str) -> float:
        return float(np.mean(self.samples[name]))

    def stderr(self, name: str) -> float:
        x = np.asarray(self.samples[name])
        return float(np.std(x, ddof=1) / np.sqrt(len(x)))


# ---------------------------------------------------------------------------
# ensembles


def linear_ensemble(
    f: ForcingSpec, cov: CovarianceSpec, T: float, dt: float, seeds: Iterable[int]
) -> Iterator[Trajectory]:
    """Lazily yield linear-only trajectories (v = 0, u = z) one seed at a time.

    The exact OU integrator makes any dt exact in law, so coarse steps are
    admissible here.
    """
    n = int(round(T / dt))
    grid = np.linspace(0.0, n * dt, n + 1)
    basis = f.f.basis
    lam = basis.k2[basis.half_index][:, None]
    for seed in seeds:
        path = sample_path(cov, grid, seed)
        st = solve_stokes_path(f, path)
        z = st.z_half
        mag = np.abs(z) ** 2
        udW = np.zeros(len(grid))
        udW[:-1] = 2.0 * np.real(np.sum(np.conj(z[:-1]) * path.amps, axis=(1, 2)))
        sc = {
            "vH2": np.zeros(len(grid)),
            "gradV2": np.zeros(len(grid)),
            "rhs": np.zeros(len(grid)),
            "uH2": 2.0 * mag.sum(axis=(1, 2)),
            "uV2": 2.0 * (lam * mag).sum(axis=(1, 2)),
            "fu": 2.0 * np.real(np.sum(np.conj(f.half)[None] * z, axis=(1, 2))),
            "udW": udW,
            "iters": np.zeros(len(grid)),
        }
        cfg = SolverConfig(dt=dt, dealias_fraction=basis.dealias_fraction)
        yield Trajectory(
            grid, basis, cfg, f, path, sc, v_half=np.zeros_like(z), stokes=st, linear_only=True
        )


def _shift_nodes(grid: np.ndarray, t_min: float, t_horizon: float, window: float, n: int, rng) -> np.ndarray:
    lo = _node(grid, t_min) if t_min > 0 else 0
    hi = int(np.searchsorted(grid, t_min + t_horizon + 1e-9 * max(1.0, t_horizon), side="right")) - 1
    if grid[hi] + window > grid[-1] + 1e-9:
        raise ValueError("window too short for horizon plus observable window")
    return rng.integers(lo, hi + 1, size=n)


def kb_average(
    ensemble: Iterable[Trajectory],
    t_horizon: float,
    obs: list,
    n_shifts: int,
    seed: int,
    t_min: float = 0.0,
) -> EmpiricalMeasure:
    """Monte Carlo realization of mu_t = (1/t) int_0^t nu_s ds.

    For each member, ``n_shifts`` shift nodes are drawn uniformly from the
    grid nodes in [t_min, t_min + t_horizon] and every observable is
    evaluated on the shifted trajectory.  ``t_min`` > 0 adds a burn-in.
    """
    root = np.random.SeedSequence(seed)
    samples = {o.name: [] for o in obs}
    window = max((o.window for o in obs), default=0.0)
    members = 0
    for tr, child in zip(ensemble, _children(root)):
        rng = np.random.default_rng(child)
        nodes = _shift_nodes(tr.grid, t_min, t_horizon, window, n_shifts, rng)
        for j in nodes:
            sh = shift(tr, tr.grid[j]) if j else tr
            for o in obs:
                samples[o.name].append(o(sh))
        members += 1
    return EmpiricalMeasure(
        {k: np.asarray(v) for k, v in samples.items()},
        {"members": members, "n_shifts": n_shifts, "t_horizon": t_horizon, "t_min": t_min, "shift_law": "uniform grid nodes"},
    )


def _children(root: np.random.SeedSequence):
    while True:
        yield root.spawn(1)[0]


def stationarity_test(m1: EmpiricalMeasure, m2: EmpiricalMeasure, alpha: float = 0.01) -> dict:
    """Two-sample KS per observable at level alpha with Bonferroni."""
    if set(m1.samples) != set(m2.samples):
        raise ValueError("measures carry different observables")
    names = sorted(m1.samples)
    level = alpha / len(names)
    out = {}
    ok = True
    for n in names:
        res = stats.ks_2samp(m1.samples[n], m2.samples[n])
        passed = bool(res.pvalue >= level)
        ok &= passed
        out[n] = {"statistic": float(res.statistic), "pvalue": float(res.pvalue), "pass": passed}
    return {"observables": out, "level": level, "verdict": bool(ok)}


def dissipation_theta(
    ensemble: Iterable[Trajectory],
    times,
    t_horizon: float,
    n_shifts: int,
    seed: int,
    t_min: float = 0.0,
) -> dict:
    """Theta(t) = mean of int_0^t ||u||_V^2 over KB-shifted samples.

    Fits Theta = C_mu t through the origin and reports R^2.
    """
    times = np.asarray(times, dtype=float)
    root = np.random.SeedSequence(seed)
    acc = np.zeros(len(times))
    count = 0
    for tr, child in zip(ensemble, _children(root)):
        rng = np.random.default_rng(child)
        g = tr.grid
        nodes = _shift_nodes(g, t_min, t_horizon, float(times.max()), n_shifts, rng)
        y = tr.scalars["uV2"]
        cum = np.concatenate([[0.0], np.cumsum(np.diff(g) * (y[1:] + y[:-1]) / 2)])
        for j in nodes:
            ends = np.array([_node(g, g[j] + t) for t in times])
            acc += cum[ends] - cum[j]
            count += 1
    theta = acc / count
    denom = float(np.sum(times**2))
    C = float(np.sum(times * theta) / denom) if denom > 0 else 0.0
    fit = C * times
    ss_res = float(np.sum((theta - fit) ** 2))
    ss_tot = float(np.sum((theta - theta.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"times": times, "theta": theta, "fit": fit, "C_mu": C, "R2": r2, "samples": count}


def stokes_invariant_check(
    cov: CovarianceSpec,
    f: ForcingSpec,
    members: int = 200,
    n_shifts: int = 5,
    t_min: float = 0.0,
    t_horizon: float = 20.0,
    dt: float = 1e-2,
    base_seed: int = 0,
    k2_max: int = 4,
    alpha: float = 0.01,
) -> CertificateReport:
    """KB-averaged one-time marginals of z against the exact Gaussian law."""
    basis = cov.basis
    modes = [r for r, k in enumerate(basis.half_modes) if int(np.sum(k**2)) <= k2_max]
    mean_law, var_law = stationary_law(cov, f)
    mean_half = half_amplitudes(basis, mean_law.coeff)
    var_half = var_law[basis.half_index]

    ens = linear_ensemble(f, cov, t_min + t_horizon, dt, range(base_seed, base_seed + members))
    root = np.random.SeedSequence(base_seed)
    vals = []
    for tr, child in zip(ens, _children(root)):
        rng = np.random.default_rng(child)
        nodes = _shift_nodes(tr.grid, t_min, t_horizon, 0.0, n_shifts, rng)
        vals.append(tr.stokes.z_half[nodes][:, modes])  # (n_shifts, n_modes, 2)
    z = np.concatenate(vals)  # (samples, n_modes, 2)
    n = len(z)
    dev = z - mean_half[modes][None]
    emp_var = np.mean(np.sum(np.abs(dev) ** 2, axis=2), axis=0)
    exact_var = var_half[modes]
    emp_mean = np.mean(z, axis=0)
    rows = []
    ok = True
    rel_tol = 5.0 / np.sqrt(n)
    level = alpha / max(1, len(modes))
    for i, r in enumerate(modes):
        ev = exact_var[i]
        if ev == 0:
            good = bool(np.max(np.abs(dev[:, i])) <= 1e-10)
            rows.append({"mode": basis.half_modes[r].tolist(), "exact_var": 0.0, "emp_var": float(emp_var[i]), "pass": good})
            ok &= good
            continue
        rel = abs(emp_var[i] - ev) / ev
        mean_err = float(np.max(np.abs(emp_mean[i] - mean_half[r])))
        mean_tol = 5.0 * np.sqrt(ev / 4 / n)
        std = np.sqrt(ev / 4)
        x = np.concatenate([dev[:, i].real.ravel(), dev[:, i].imag.ravel()]) / std
        ks = stats.kstest(x, "norm")
        good = bool(rel <= rel_tol and mean_err <= mean_tol and ks.pvalue >= level)
        ok &= good
        rows.append(
            {
                "mode": basis.half_modes[r].tolist(),
                "exact_var": float(ev),
                "emp_var": float(emp_var[i]),
                "rel_err": float(rel),
                "mean_err": mean_err,
                "mean_tol": float(mean_tol),
                "ks_stat": float(ks.statistic),
                "ks_pvalue": float(ks.pvalue),
                "z_score": float((emp_var[i] - ev) / (ev / np.sqrt(2 * n))),
                "pass": good,
            }
        )
    worst = max((row.get("rel_err", 0.0) for row in rows), default=0.0)
    meta = {
        "samples": n,
        "members": members,
        "n_shifts": n_shifts,
        "t_min": t_min,
        "t_horizon": t_horizon,
        "rel_tol": rel_tol,
        "ks_level": level,
        "modes": rows,
    }
    return CertificateReport("stokes_invariant", {"max_rel_var_err": worst}, worst, rel_tol, bool(ok), "equality", meta)


def tightness_report(ensemble: Iterable[Trajectory], shift_times, T: float, s: float = 0.25, p: float = 2.0, beta: float = 0.25) -> dict:
    """99th percentile over members of sup|u|^2 + int ||u||_V^2 + ||W||^p_{W^{s,p}}
    on [t, t + T] for each shift time t."""
    shift_times = list(shift_times)
    vals = {t: [] for t in shift_times}
    for tr in ensemble:
        for t in shift_times:
            sh = shift(tr, t) if t > 0 else tr
            j = _node(sh.grid, T)
            g = sh.grid[: j + 1]
            uh = sh.scalars["uH2"][: j + 1]
            uv = sh.scalars["uV2"][: j + 1]
            diss = float(np.sum(np.diff(g) * (uv[1:] + uv[:-1]) / 2))
            wp = 0.0
            if sh.path is not None:
                part = sh.path.slice(0, j)
                wp = wsp_norm(SampledPath(part.grid, weighted_values(part, beta)), s, p) ** p
            vals[t].append(float(uh.max()) + diss + wp)
    return {t: float(np.percentile(v, 99)) for t, v in vals.items()}
