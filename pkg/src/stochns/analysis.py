"""Numerical verifiers for the analytic lemmas used by the existence theory:
fractional time-Sobolev norms, an integral-form Gronwall lemma, the local
Sobolev inequality and Poincare's inequality."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import GridField, SpectralField, norm

__all__ = [
    "SampledPath",
    "wsp_norm",
    "gronwall_verify",
    "sobolev_local_verify",
    "sobolev_ratio",
    "sobolev_calibrate",
    "poincare_verify",
]


@dataclass(frozen=True, eq=False)
class SampledPath:
    """Values f(t_i) on a strictly increasing grid.

    ``values`` is (n,) for real paths or (n, d) for vector-valued paths, in
    which case |f| is the Euclidean norm over the last axis.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing with >= 2 nodes")
        if len(self.values) != len(t):
            raise ValueError("values and times differ in length")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    h = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def _pairwise_distance(values: np.ndarray) -> np.ndarray:
    if values.ndim == 1:
        return np.abs(values[:, None] - values[None, :])
    sq = np.sum(values**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * values @ values.T
    return np.sqrt(np.clip(d2, 0.0, None))


def wsp_norm(path: SampledPath, s: float, p: float) -> float:
    """Discrete W^{s,p}(0,T) norm.

    ||f||^p = int |f|^p dt + int int |f(t)-f(r)|^p / |t-r|^(1+sp) dr dt,
    both by composite trapezoid weights; the diagonal of the double sum is
    excluded.
    """
    if p < 1 or not 0 < s < 1:
        raise ValueError("need p >= 1 and 0 < s < 1")
    t = path.times
    w = trapezoid_weights(t)
    v = path.values
    mag = np.abs(v) if v.ndim == 1 else np.linalg.norm(v, axis=1)
    first = float(np.sum(w * mag**p))
    dist = _pairwise_distance(v)
    dt = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(dt, np.inf)
    kernel = dist**p / dt ** (1.0 + s * p)
    second = float(w @ kernel @ w)
    return (first + second) ** (1.0 / p)


def gronwall_verify(path: SampledPath, lam: float, C: float, rtol: float = 1e-9) -> dict:
    """Check v(t) <= v(s) - lam int_s^t v + C (t - s) on all grid pairs and
    the bound v(t) <= sup_{(0,1)} v + C / lam at every node t >= 1.

    The integral uses the trapezoid rule; the hypothesis tolerance includes
    an estimate of its quadrature error from second differences.  The
    implication hypothesis => conclusion needs v >= 0, reported as
    ``nonnegative``.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    t, v = path.times, path.values
    if v.ndim != 1:
        raise ValueError("gronwall_verify needs a real-valued path")
    if t[-1] < 1.0 or t[0] > 0.0:
        raise ValueError("path must cover [0, 1]")
    h = np.diff(t)
    cum = np.concatenate([[0.0], np.cumsum(h * (v[1:] + v[:-1]) / 2)])
    scale = float(np.max(np.abs(v)) + abs(C) / lam + abs(C) * (t[-1] - t[0]))
    if len(v) >= 3:
        curv = np.max(np.abs(np.diff(v, 2)) / (h[:-1] * h[1:]))
    else:
        curv = 0.0
    # second differences lag the curvature at the ends of the window, hence 2x
    quad = 2.0 * lam * np.max(h) ** 2 * curv / 12.0

    # excess[i, j] = v_j - v_i + lam * int_i^j v - C (t_j - t_i), for i < j
    excess = v[None, :] - v[:, None] + lam * (cum[None, :] - cum[:, None]) - C * (t[None, :] - t[:, None])
    span = np.abs(t[None, :] - t[:, None])
    tol = rtol * scale + quad * span
    upper = np.triu(np.ones_like(excess, dtype=bool), k=1)
    hyp = bool(np.all(excess[upper] <= tol[upper]))

    inside = (t > 0.0) & (t < 1.0)
    if not np.any(inside):
        raise ValueError("no grid nodes inside (0, 1)")
    bound = np.max(v[inside]) + C / lam
    late = t >= 1.0
    concl = bool(np.all(v[late] <= bound + rtol * scale))
    # the conclusion is only guaranteed for v >= 0: a negative v rising toward
    # C / lam satisfies the hypothesis with equality and can exceed the bound
    nonneg = bool(np.all(v >= 0.0))
    return {"hypothesis_holds": hyp, "conclusion_holds": concl, "bound": float(bound), "nonnegative": nonneg}


def _ball_integrals(u: GridField, center, r: float, q: float):
    b = u.basis
    M = b.M_grid
    vals = u.values
    kk = np.fft.fftfreq(M, d=1.0 / M)
    kk[M // 2] = 0.0 if M % 2 == 0 else kk[M // 2]
    spec = np.fft.fftn(vals, axes=(-3, -2, -1))
    grads = []
    for axis, shape in ((0, (M, 1, 1)), (1, (1, M, 1)), (2, (1, 1, M))):
        ik = 1j * kk.reshape(shape)
        grads.append(np.real(np.fft.ifftn(ik * spec, axes=(-3, -2, -1))))
    grad_sq = sum(np.sum(g**2, axis=0) for g in grads)

    x = b.grid_points
    c = np.asarray(center, dtype=float).reshape(3, 1, 1, 1)
    d = x - c
    d = (d + np.pi) % (2 * np.pi) - np.pi
    inside = np.sum(d**2, axis=0) < r**2
    dV = (b.box / M) ** 3
    mag2 = np.sum(vals**2, axis=0)
    lhs = float(np.sum(mag2[inside] ** (q / 2)) * dV)
    l2 = float(np.sum(mag2[inside]) * dV)
    h1 = float(np.sum(grad_sq[inside]) * dV)
    return lhs, l2, h1


def _sobolev_terms(l2: float, h1: float, r: float, q: float):
    a = 0.75 * (q - 2.0)
    t1 = h1**a * l2 ** (q / 2 - a)
    t2 = l2 ** (q / 2) / r ** (2 * a)
    return a, t1, t2


def sobolev_local_verify(u: GridField, center, r: float, q: float, C: float) -> dict:
    """Local Sobolev inequality on the ball B_r(center).

    lhs = int |u|^q, rhs = C (int |grad u|^2)^a (int |u|^2)^(q/2 - a)
    + C r^(-2a) (int |u|^2)^(q/2) with a = 3(q - 2)/4; integrals are lattice
    sums over collocation points inside the ball (physical volume element).
    """
    if not 2.0 <= q <= 6.0:
        raise ValueError("q must lie in [2, 6]")
    if r <= 0 or r >= np.pi:
        raise ValueError("ball must fit inside the box")
    lhs, l2, h1 = _ball_integrals(u, center, r, q)
    a, t1, t2 = _sobolev_terms(l2, h1, r, q)
    rhs = C * (t1 + t2)
    holds = lhs <= rhs * (1.0 + 1e-12)
    return {"lhs": lhs, "rhs": rhs, "holds": bool(holds), "a": a}


def sobolev_ratio(u: GridField, center, r: float, q: float) -> float:
    """Smallest C for which the local Sobolev inequality holds for u."""
    lhs, l2, h1 = _ball_integrals(u, center, r, q)
    _, t1, t2 = _sobolev_terms(l2, h1, r, q)
    return lhs / (t1 + t2)


def poincare_verify(u: SpectralField) -> dict:
    """Ratio ||u||_V^2 / |u|_H^2 against lambda_1 = 1."""
    h = norm(u, "H")
    if h == 0.0:
        raise ValueError("Poincare ratio undefined for the zero field")
    ratio = norm(u, "V") ** 2 / h**2
    return {"ratio": ratio, "holds": bool(ratio >= 1.0 - 1e-12)}


def sobolev_calibrate(fields, center, r: float, q: float, margin: float = 1.1) -> float:
    """C* = margin * max ratio over a calibration set of grid fields."""
    return margin * max(sobolev_ratio(u, center, r, q) for u in fields)
