"""Command line runner: simulate, certify, stationary, selftest, ladder."""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from json.decoder import scanstring
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .certificates import TestBump, classical_energy_check, ito_energy_check, lei_residual
from .noise import make_covariance, sample_path, write_path
from .solver import SolverConfig, StepRejected, energy_ledger, integrate_ensemble, load_trajectory, save_trajectory
from .spectral import BasisSpec, random_solenoidal, write_snapshot
from .stationary import dissipation_theta, stokes_invariant_check
from .stokes import ForcingSpec

log = logging.getLogger("stochns")

DEFAULT_CONFIG = {
    "basis": {"K_max": 4, "M_grid": 16, "dealias": 1.0},
    "noise": {"c": 0.1, "r": 4.0, "delta": 0.25},
    "forcing": {"modes": [{"k": [1, 0, 0], "amp": [0.3, 0.0]}]},
    "initial": {"amplitude": 0.5, "decay": 1.0, "seed": 0},
    "solver": {"N": None, "dt": 1e-3, "tol_fp": 1e-10, "max_iter": 50, "T": 0.5},
    "ensemble": {"size": 1, "base_seed": 0},
    "outputs": {"dir": "out", "snapshot_every": 100},
    "stationary": {"members": 200, "n_shifts": 5, "t_horizon": 20.0, "t_min": 0.0, "dt": 1e-2, "theta_t_max": 1.0, "theta_burn_in": 2.0},
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "basis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "K_max": {"type": "integer", "minimum": 1},
                "M_grid": {"type": "integer", "minimum": 3},
                "dealias": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"c": {"type": "number", "minimum": 0}, "r": _num, "delta": _pos},
        },
        "forcing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "modes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["k", "amp"],
                        "properties": {
                            "k": {"type": "array", "items": _int, "minItems": 3, "maxItems": 3},
                            "amp": {
                                "oneOf": [
                                    {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                                    {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}, "minItems": 3, "maxItems": 3},
                                ]
                            },
                        },
                    },
                }
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"amplitude": {"type": "number", "minimum": 0}, "decay": _num, "seed": _int},
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": ["integer", "null"], "minimum": 1},
                "dt": _pos,
                "tol_fp": _pos,
                "max_iter": {"type": "integer", "minimum": 1},
                "T": _pos,
            },
        },
        "ensemble": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"size": {"type": "integer", "minimum": 1}, "base_seed": {"type": "integer", "minimum": 0}},
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "snapshot_every": {"type": "integer", "minimum": 0}},
        },
        "stationary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "members": {"type": "integer", "minimum": 2},
                "n_shifts": {"type": "integer", "minimum": 1},
                "t_horizon": {"type": "number", "minimum": 0},
                "t_min": {"type": "number", "minimum": 0},
                "dt": _pos,
                "theta_t_max": _pos,
                "theta_burn_in": {"type": "number", "minimum": 0},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config loading


def _positions(text: str) -> dict:
    """Map every JSON path (tuple of keys/indices) to its offset in text."""
    dec = json.JSONDecoder()
    pos = {}

    def ws(i):
        while i < len(text) and text[i] in " \t\r\n":
            i += 1
        return i

    def parse(i, path):
        i = ws(i)
        pos[path] = i
        ch = text[i]
        if ch == "{":
            i = ws(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                i = ws(i)
                key, i = scanstring(text, i + 1)
                i = ws(i) + 1  # ':'
                i = ws(parse(i, path + (key,)))
                if text[i] == ",":
                    i += 1
                    continue
                return i + 1
        if ch == "[":
            i = ws(i + 1)
            if text[i] == "]":
                return i + 1
            n = 0
            while True:
                i = ws(parse(i, path + (n,)))
                n += 1
                if text[i] == ",":
                    i += 1
                    continue
                return i + 1
        _, end = dec.raw_decode(text, i)
        return end

    parse(0, ())
    return pos


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None) -> dict:
    """Read, validate and merge a JSON config over the defaults.

    Errors carry the line of the offending value.
    """
    if path is None:
        cfg = copy.deepcopy(DEFAULT_CONFIG)
    else:
        text = Path(path).read_text()
        try:
            user = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None
        errors = list(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(user))
        if errors:
            pos = _positions(text)
            msgs = []
            for e in errors:
                p = tuple(e.absolute_path)
                while p not in pos and p:
                    p = p[:-1]
                line = text.count("\n", 0, pos.get(p, 0)) + 1
                where = "/".join(str(x) for x in e.absolute_path) or "<root>"
                msgs.append((line, f"{path}:{line}: {where}: {e.message}"))
            raise ConfigError("\n".join(m for _, m in sorted(msgs)))
        cfg = _merge(DEFAULT_CONFIG, user)
    _check_semantics(cfg)
    return cfg


def _check_semantics(cfg: dict):
    K = cfg["basis"]["K_max"]
    for m in cfg["forcing"]["modes"]:
        k = m["k"]
        if max(abs(x) for x in k) > K or not any(k):
            raise ConfigError(f"forcing mode {k} outside the active lattice 0 < |k_i| <= {K}")
    s = cfg["solver"]
    n = s["T"] / s["dt"]
    if abs(n - round(n)) > 1e-9:
        raise ConfigError(f"T = {s['T']} is not an integer multiple of dt = {s['dt']}")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# building blocks


def build(cfg: dict):
    b = cfg["basis"]
    basis = BasisSpec(b["K_max"], b["M_grid"], b["dealias"])
    nz = cfg["noise"]
    cov = make_covariance(nz["c"], nz["r"], nz["delta"], basis)
    modes = []
    for m in cfg["forcing"]["modes"]:
        a = np.asarray(m["amp"], dtype=float)
        amp = complex(a[0], a[1]) if a.ndim == 1 else a[:, 0] + 1j * a[:, 1]
        modes.append((m["k"], amp))
    f = ForcingSpec.from_modes(basis, modes)
    ini = cfg["initial"]
    u0 = random_solenoidal(basis, np.random.default_rng(ini["seed"]), ini["amplitude"], ini["decay"])
    s = cfg["solver"]
    solver = SolverConfig(N=s["N"], dt=s["dt"], tol_fp=s["tol_fp"], max_iter=s["max_iter"], dealias_fraction=b["dealias"])
    return basis, cov, f, u0, solver


def time_grid(T: float, dt: float) -> np.ndarray:
    n = int(round(T / dt))
    return np.linspace(0.0, n * dt, n + 1)


def _seeds(cfg: dict, seed: int | None) -> list:
    if seed is not None:
        return [seed]
    e = cfg["ensemble"]
    return list(range(e["base_seed"], e["base_seed"] + e["size"]))


def run_ensemble(u0, f, paths, solver, T, threads: int, store: bool, linear_only: bool):
    """Members are independent, so chunks across threads give identical results."""
    threads = max(1, min(threads, len(paths)))
    if threads == 1:
        return integrate_ensemble(u0, f, paths, solver, T=T, store=store, linear_only=linear_only)
    chunks = [paths[i::threads] for i in range(threads)]
    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(lambda ps: integrate_ensemble(u0, f, ps, solver, T=T, store=store, linear_only=linear_only), chunks))
    out = [None] * len(paths)
    for i, part in enumerate(parts):
        out[i::threads] = part
    return out


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(fname, header, rows):
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in r])


def write_ledger_csv(fname, traj):
    led = energy_ledger(traj)
    keys = ("t", "vH2", "gradV2", "rhs", "residual")
    write_csv(fname, keys, zip(*(led[k] for k in keys)))


def write_manifest(out: Path, cfg: dict, command: str, seeds: list, files: list, extra: dict | None = None):
    man = {
        "command": command,
        "config_sha256": config_hash(cfg),
        "config": cfg,
        "seeds": seeds,
        "versions": {
            "stochns": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "platform": platform.platform(),
        "files": sorted(files),
    }
    if extra:
        man.update(extra)
    (out / "manifest.json").write_text(json.dumps(man, indent=2, default=float) + "\n")


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg["outputs"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, cfg) -> int:
    basis, cov, f, u0, solver = build(cfg)
    out = _out_dir(args, cfg)
    T = cfg["solver"]["T"]
    grid = time_grid(T, solver.dt)
    seeds = _seeds(cfg, args.seed)
    paths = [sample_path(cov, grid, s) for s in seeds] if cov.c > 0 else [None] * len(seeds)
    ens = run_ensemble(u0, f, paths, solver, T, args.threads, True, args.linear_only)
    files = []
    every = cfg["outputs"]["snapshot_every"]
    for i, (seed, tr) in enumerate(zip(seeds, ens)):
        tag = "" if i == 0 else f"_seed{seed}"
        name = f"energy_ledger{tag}.csv"
        write_ledger_csv(out / name, tr)
        files.append(name)
        name = f"trajectory{tag}.npz"
        save_trajectory(out / name, tr)
        files.append(name)
        if tr.path is not None:
            name = f"path{tag}.bmpt"
            write_path(out / name, tr.path)
            files.append(name)
        if every:
            for j in range(0, tr.n_nodes, every):
                name = f"u{tag}_{j:06d}.snsf"
                write_snapshot(out / name, tr.u(j))
                files.append(name)
    write_manifest(out, cfg, "simulate", seeds, files, {"linear_only": args.linear_only})
    for w in ens[0].warnings:
        log.warning(w)
    print(f"simulate: {len(ens)} member(s), {len(grid) - 1} steps, wrote {out}")
    return 0


def _parse_bump(s: str) -> TestBump:
    vals = [float(x) for x in s.split(",")]
    if len(vals) != 6:
        raise argparse.ArgumentTypeError("--bump expects t_c,x,y,z,rho_t,rho_x")
    return TestBump(vals[0], tuple(vals[1:4]), vals[4], vals[5])


def cmd_certify(args, cfg) -> int:
    tr = load_trajectory(args.traj)
    T = float(tr.grid[-1])
    bumps = args.bump or [TestBump(T / 2, (np.pi, np.pi, np.pi), 0.4 * T, 1.5)]
    reports = [r.to_dict() for r in lei_residual(tr, bumps)]
    pairs = [(0.0, T), (0.2 * T, 0.6 * T), (0.5 * T, T)]
    for s, t in pairs:
        s = float(tr.grid[int(round(s / T * (tr.n_nodes - 1)))])
        t = float(tr.grid[int(round(t / T * (tr.n_nodes - 1)))])
        reports.append(classical_energy_check(tr, s, t).to_dict())
    out = _out_dir(args, cfg)
    text = json.dumps(reports, indent=2, default=_jsonable) + "\n"
    (out / "certificates.json").write_text(text)
    write_manifest(out, cfg, "certify", [tr.path.seed] if tr.path is not None else [], ["certificates.json"], {"trajectory": str(args.traj)})
    sys.stdout.write(text)
    return 0 if all(r["verdict"] for r in reports) else 1


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(type(x))


def cmd_stationary(args, cfg) -> int:
    from .stationary import linear_ensemble

    basis, cov, f, u0, solver = build(cfg)
    st = cfg["stationary"]
    out = _out_dir(args, cfg)
    seed0 = cfg["ensemble"]["base_seed"] if args.seed is None else args.seed
    seeds = range(seed0, seed0 + st["members"])
    times = np.linspace(0.0, st["theta_t_max"], 11)
    if args.linear_only:
        window = st["theta_burn_in"] + st["t_horizon"] + st["theta_t_max"]
        ens = linear_ensemble(f, cov, window, st["dt"], seeds)
        th = dissipation_theta(ens, times, st["t_horizon"], st["n_shifts"], seed0, t_min=st["theta_burn_in"])
        rep = stokes_invariant_check(
            cov, f, st["members"], st["n_shifts"], st["t_min"], st["t_horizon"], st["dt"], seed0
        )
        rows = []
        for m in rep.meta["modes"]:
            label = "(" + " ".join(str(x) for x in m["mode"]) + ")"
            rows.append([label, "second", m["emp_var"], m["exact_var"], m.get("z_score", 0.0)])
        write_csv(out / "marginals.csv", ("mode", "moment", "empirical", "exact", "z-score"), rows)
        verdict = rep.verdict
        extra = {"stokes_invariant": rep.to_dict()}
    else:
        window = st["theta_burn_in"] + st["t_horizon"] + st["theta_t_max"]
        grid = time_grid(window, solver.dt)
        paths = [sample_path(cov, grid, s) for s in seeds]
        ens = run_ensemble(u0, f, paths, solver, window, args.threads, False, False)
        th = dissipation_theta(ens, times, st["t_horizon"], st["n_shifts"], seed0, t_min=st["theta_burn_in"])
        verdict = True
        extra = {}
    write_csv(out / "theta.csv", ("t", "Theta", "fit", "residual"), zip(th["times"], th["theta"], th["fit"], th["theta"] - th["fit"]))
    # at equilibrium E||z||_V^2 = sigma/2 + ||f||_{V'}^2
    expected = cov.total / 2 + f.dual_norm() ** 2
    extra["theta"] = {"C_mu": th["C_mu"], "R2": th["R2"], "linear_equilibrium_rate": expected}
    files = ["theta.csv"] + (["marginals.csv"] if args.linear_only else [])
    write_manifest(out, cfg, "stationary", list(seeds), files, json.loads(json.dumps(extra, default=_jsonable)))
    print(f"stationary: C_mu = {th['C_mu']:.6g} (linear equilibrium {expected:.6g}), R2 = {th['R2']:.6f}")
    return 0 if verdict else 1


def cmd_selftest(args, cfg) -> int:
    from .selftest import SUITES, run_suites

    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = run_suites(names, cfg)
    ok = True
    for name, passed, detail in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return 0 if ok else 1


def refinement_ladder(cfg: dict, levels: int, seed: int | None = None, bumps=None, linear_only: bool = False) -> dict:
    """Rerun the pipeline with dt halved per level on one fine noise path.

    Reports residuals per certificate and the ratio between successive
    levels (coarse over fine).
    """
    if levels < 3:
        raise ValueError("a ladder needs at least 3 levels")
    basis, cov, f, u0, solver = build(cfg)
    T = cfg["solver"]["T"]
    finest = solver.dt / 2 ** (levels - 1)
    fine = time_grid(T, finest)
    seed = cfg["ensemble"]["base_seed"] if seed is None else seed
    path = sample_path(cov, fine, seed) if cov.c > 0 else None
    bumps = bumps or [TestBump(T / 2, (np.pi, np.pi, np.pi), 0.4 * T, 1.5)]
    rows = []
    for lev in range(levels):
        factor = 2 ** (levels - 1 - lev)
        dt = finest * factor
        p = path.coarsen(factor) if path is not None else None
        scfg = SolverConfig(N=solver.N, dt=dt, tol_fp=solver.tol_fp, max_iter=solver.max_iter, dealias_fraction=solver.dealias_fraction)
        tr = integrate_ensemble(u0, f, [p], scfg, T=T, store=True, linear_only=linear_only)[0]
        row = {"dt": dt, "lei": [r.residual for r in lei_residual(tr, bumps)], "energy": classical_energy_check(tr, 0.0, T).residual}
        if p is not None:
            ito = ito_energy_check([tr], times=[T], min_members=1).meta["balance"][0]
            row["ito_pathwise"] = ito["pathwise_max_abs"]
        rows.append(row)

    def ratios(key):
        # exact zeros (v = 0 in linear-only runs) have no ratio: null
        vals = [np.abs(np.atleast_1d(r[key])) for r in rows]
        return [[x / y if y > 0 else None for x, y in zip(a, b)] for a, b in zip(vals[:-1], vals[1:])]

    keys = ["lei", "energy"] + (["ito_pathwise"] if path is not None else [])
    return {"levels": rows, "ratios": {k: ratios(k) for k in keys}, "seed": seed}


def cmd_ladder(args, cfg) -> int:
    rep = refinement_ladder(cfg, args.levels, args.seed, linear_only=args.linear_only)
    out = _out_dir(args, cfg)
    text = json.dumps(rep, indent=2, default=_jsonable) + "\n"
    (out / "ladder.json").write_text(text)
    write_manifest(out, cfg, "ladder", [rep["seed"]], ["ladder.json"])
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (defaults are used for missing keys)")
    common.add_argument("--seed", type=int, help="single seed, overrides ensemble.base_seed/size")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--linear-only", action="store_true", help="switch off the nonlinearity")
    common.add_argument("--out", help="output directory, overrides outputs.dir")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="stochns", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the configured ensemble")
    c = sub.add_parser("certify", parents=[common], help="certificates for a stored trajectory")
    c.add_argument("--traj", required=True)
    c.add_argument("--bump", type=_parse_bump, action="append", help="t_c,x,y,z,rho_t,rho_x (repeatable)")
    sub.add_parser("stationary", parents=[common], help="KB averages and dissipation rate")
    s = sub.add_parser("selftest", parents=[common], help="quick built-in checks")
    s.add_argument("--suite", default="all", choices=["all", "spectral", "solver", "noise", "analysis"])
    lad = sub.add_parser("ladder", parents=[common], help="dt-halving convergence report")
    lad.add_argument("--levels", type=int, default=3)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error:\n{e}", file=sys.stderr)
        return 2
    handlers = {
        "simulate": cmd_simulate,
        "certify": cmd_certify,
        "stationary": cmd_stationary,
        "selftest": cmd_selftest,
        "ladder": cmd_ladder,
    }
    try:
        return handlers[args.command](args, cfg)
    except StepRejected as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
