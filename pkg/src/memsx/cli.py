"""Command line front end: ``memsx <subcommand> <config.json> [--out DIR]``.

The config is one JSON document with the sections model, geometry,
permittivity, dynamics and output.  Every section is optional; unknown keys
anywhere are rejected with the line they appear on.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 classical
touchdown (the model ceases to exist).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    DegenerateDomain,
    InvalidArgument,
    InvalidProfile,
    MemsxError,
    ModelParams,
    PermittivityProfile,
    SingularForce,
    SolverFailure,
    build_grid,
)
from .dynamics import BlowUp, PlateState, PotentialForce, ReducedForce, extract_reaction, simulate
from .forces import potential_force, seeded_test_fields, validate_shape_derivative
from .limits import aspect_ratio_study, thin_plate_study
from .potential import solve
from .steady import InvalidBracket, bifurcation_diagram, pull_in_dynamic, pull_in_steady, steady_solve

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_TOUCHDOWN = 0, 2, 3, 4

SUBCOMMANDS = ("potential", "force", "simulate", "steady", "pullin", "bifurcate", "limits")

FORCES = ("classical", "reduced-transmission", "reduced-robin", "transmission", "membrane", "robin")

# section -> key -> default
SCHEMA = {
    "model": {
        "force": "classical",
        "lam": 0.0,
        "gamma2": 0.0,
        "beta": 0.0,
        "tau": 1.0,
        "delta": 0.1,
        "eps": 0.2,
        "seed": 0,
        "tol_linear": 1e-10,
        "tol_newton": 1e-10,
        "linear_solver": "direct",
        "quad_points": 33,
        "gap": None,  # constant reduced gap N, overrides the profile-derived one
    },
    "geometry": {
        "n_x": 63,
        "n_z1": 17,
        "n_z2": 9,
        "deflection": "sine",  # sine | flat | zero
        "amplitude": -0.3,
    },
    "permittivity": {"kind": "constant", "base": 2.0, "slope": 0.0, "x_amp": 0.0},
    "dynamics": {
        "dt": None,
        "t_end": 50.0,
        "sample_every": 100,
        "obstacle_mode": "projection",
        "penalty_s": 1e6,
        "steady_tol": 1e-8,
        "contact_tol": 1e-9,
        "lam_bracket": [1e-3, 50.0],
        "tol_lambda": 1e-4,
        "pullin_dt": 1e-2,
        "pullin_t_max": 1e4,
        "lam_grid": [0.5, 1.0, 1.5, 2.0, 2.5],
    },
    "output": {
        "prefix": "",
        "study": "aspect_ratio",  # aspect_ratio | thin_plate
        "scaling": "O1",
        "limit_model": "transmission",
        "sequence": [0.2, 0.1, 0.05],
        "test_fields": 3,
        "fd_step": 1e-5,
    },
}


class ConfigError(MemsxError):
    pass


def _line_of(text: str, key: str) -> int:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else 0


def load_config(path, seed=None) -> dict:
    """Parse and validate a config file; returns the fully defaulted config."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: malformed JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}:1: top level must be an object")
    cfg = {}
    for section, value in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"{path}:{_line_of(text, section)}: unknown section {section!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"{path}:{_line_of(text, section)}: section {section!r} must be an object")
        for key in value:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}:{_line_of(text, key)}: unknown key {section}.{key}")
    for section, defaults in SCHEMA.items():
        cfg[section] = {**defaults, **raw.get(section, {})}
    if seed is not None:
        cfg["model"]["seed"] = int(seed)
    if cfg["model"]["force"] not in FORCES:
        line = _line_of(text, "force")
        raise ConfigError(f"{path}:{line}: model.force must be one of {', '.join(FORCES)}")
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


class Setup:
    """Objects built from a validated config."""

    def __init__(self, cfg: dict):
        m, g, pm, d = cfg["model"], cfg["geometry"], cfg["permittivity"], cfg["dynamics"]
        try:
            self.params = ModelParams(
                gamma2=float(m["gamma2"]),
                beta=float(m["beta"]),
                tau=float(m["tau"]),
                lam=float(m["lam"]),
                delta=float(m["delta"]),
                eps=float(m["eps"]),
                penalty_s=float(d["penalty_s"]),
                obstacle_mode=d["obstacle_mode"],
                tol_linear=float(m["tol_linear"]),
                tol_newton=float(m["tol_newton"]),
                seed=int(m["seed"]),
                contact_tol=float(d["contact_tol"]),
                steady_tol=float(d["steady_tol"]),
                quad_points=int(m["quad_points"]),
                linear_solver=m["linear_solver"],
            )
            self.grid = build_grid(g["n_x"], g["n_z1"], g["n_z2"])
            self.profile = PermittivityProfile(
                kind=pm["kind"],
                base=float(pm["base"]),
                slope=float(pm["slope"]),
                x_amp=float(pm["x_amp"]),
                s_max=max(self.params.delta, 1e-12),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from None
        self.force = m["force"]
        self.gap = m["gap"]
        self.cfg = cfg
        kind, amp = g["deflection"], float(g["amplitude"])
        x = self.grid.x
        if kind == "sine":
            self.u = amp * np.sin(np.pi * x)
        elif kind == "flat":
            self.u = np.full_like(x, amp)
        elif kind == "zero":
            self.u = np.zeros_like(x)
        else:
            raise ConfigError("geometry.deflection must be sine, flat or zero")
        self.u_fn = {
            "sine": lambda t: amp * np.sin(np.pi * t),
            "flat": lambda t: amp + 0.0 * t,
            "zero": lambda t: 0.0 * t,
        }[kind]

    @property
    def potential_model(self) -> str | None:
        return self.force if self.force in ("transmission", "membrane", "robin") else None

    def force_model(self):
        x = self.grid.x
        if self.potential_model:
            return PotentialForce(self.force, self.grid, self.params, self.profile)
        if self.gap is not None:
            return ReducedForce.constant_gap(x, self.params, float(self.gap))
        variant = {"classical": "classical", "reduced-transmission": "transmission", "reduced-robin": "robin"}
        return ReducedForce(variant[self.force], x, self.params, self.profile)


# --- output -----------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path: Path, header, rows, chash: str, extra: str = ""):
    lines = [f"# memsx {__version__} config={chash}{extra}", ",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict, chash: str):
    doc = {"memsx_version": __version__, "config_hash": chash, **payload}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n")


# --- subcommands ------------------------------------------------------------


def cmd_potential(s: Setup, out: Path, pre: str, chash: str, jobs: int) -> int:
    model = s.potential_model or "transmission"
    sol = solve(model, s.u, s.profile, s.params, s.grid)
    write_csv(out / f"{pre}potential.csv", ("x", "z", "layer", "psi"), sol.rows(), chash, f" model={model}")
    write_json(out / f"{pre}potential.json", {"model": model, "energy": float(sol.energy)}, chash)
    return EXIT_OK


def cmd_force(s: Setup, out: Path, pre: str, chash: str, jobs: int) -> int:
    o = s.cfg["output"]
    report = {}
    if s.potential_model:
        model = s.potential_model
        sol = solve(model, s.u, s.profile, s.params, s.grid)
        g = potential_force(model, sol, s.u, s.profile, s.params).g
        checks = []
        for v in seeded_test_fields(s.grid, s.params.seed, count=int(o["test_fields"])):
            res = validate_shape_derivative(s.u, v, model, s.params, s.grid, s.profile, float(o["fd_step"]))
            checks.append({k: float(val) for k, val in res.items()})
        report = {"model": model, "shape_derivative": checks}
    else:
        g, _ = s.force_model().evaluate(s.u)
        report = {"model": s.force}
    write_csv(out / f"{pre}force.csv", ("x", "g"), zip(s.grid.x, g), chash)
    write_json(out / f"{pre}force.json", report, chash)
    return EXIT_OK


def cmd_simulate(s: Setup, out: Path, pre: str, chash: str, jobs: int) -> int:
    d = s.cfg["dynamics"]
    fm = s.force_model()
    n = s.grid.n_x
    traj = simulate(
        PlateState.at_rest(n, s.params.gamma2),
        fm,
        s.params,
        t_end=float(d["t_end"]),
        sample_every=int(d["sample_every"]),
        dt=None if d["dt"] is None else float(d["dt"]),
    )
    write_csv(
        out / f"{pre}trajectory.csv",
        ("t", "min_u", "E_m", "E_e_scaled", "total", "zipped_count"),
        traj.rows(),
        chash,
    )
    x = s.grid.x
    rows = [(t, xi, ui) for t, snap in zip(traj.times, traj.snapshots) for xi, ui in zip(x, snap)]
    write_csv(out / f"{pre}snapshots.csv", ("t", "x", "u"), rows, chash)
    summary = {
        "steps": traj.steps,
        "steady": traj.steady,
        "terminated": traj.terminated,
        "touchdown_time": traj.touchdown_time,
        "final_min_u": float(np.min(traj.final)),
    }
    write_json(out / f"{pre}simulate.json", summary, chash)
    return EXIT_TOUCHDOWN if traj.terminated else EXIT_OK


def cmd_steady(s: Setup, out: Path, pre: str, chash: str, jobs: int) -> int:
    fm = s.force_model()
    res = steady_solve(s.params.lam, fm, s.params, np.zeros(s.grid.n_x + 2))
    report = {
        "lambda": s.params.lam,
        "converged": res.converged,
        "iterations": res.iterations,
        "residual": res.residual,
        "zipped_count": res.zipped_count,
        "min_u": res.min_u,
    }
    rows = [(xi, ui) for xi, ui in zip(s.grid.x, res.u)]
    if res.converged and not fm.potential_based:
        zeta = extract_reaction(res.u, fm, s.params).zeta
        write_csv(out / f"{pre}steady.csv", ("x", "u", "zeta"), [(a, b, z) for (a, b), z in zip(rows, zeta)], chash)
    else:
        write_csv(out / f"{pre}steady.csv", ("x", "u"), rows, chash)
    write_json(out / f"{pre}steady.json", report, chash)
    return EXIT_OK if res.converged else EXIT_SOLVER


def _pullin_part(args):
    which, cfg, bracket, tol, dt, t_max = args
    s = Setup(cfg)
    fm = s.force_model()
    if which == "steady":
        return pull_in_steady(fm, s.params, bracket, tol)[0]
    return pull_in_dynamic(fm, s.params, bracket, tol, dt, t_max)


def cmd_pullin(s: Setup, out: Path, pre: str, chash: str, jobs: int) -> int:
    d = s.cfg["dynamics"]
    bracket = tuple(float(v) for v in d["lam_bracket"])
    if len(bracket) != 2:
        raise ConfigError("dynamics.lam_bracket needs two values")
    tol = float(d["tol_lambda"])
    tasks = [(w, s.cfg, bracket, tol, float(d["pullin_dt"]), float(d["pullin_t_max"])) for w in ("steady", "dynamic")]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=2) as pool:
            lam_a, lam_b = pool.map(_pullin_part, tasks)
    else:
        lam_a, lam_b = map(_pullin_part, tasks)
    gap = abs(lam_a - lam_b) / max(lam_a, lam_b)
    payload = {
        "lambda_star_steady": lam_a,
        "lambda_star_dynamic": lam_b,
        "gap": gap,
        "tol_lambda": tol,
        "force": s.force,
    }
    write_json(out / f"{pre}pullin.json", payload, chash)
    return EXIT_OK


def cmd_bifurcate(s: Setup, out: Path, pre: str, chash: str, jobs: int) -> int:
    table = bifurcation_diagram(s.force_model(), s.params, s.cfg["dynamics"]["lam_grid"])
    write_csv(out / f"{pre}bifurcation.csv", table.columns, table.rows, chash)
    return EXIT_OK


def cmd_limits(s: Setup, out: Path, pre: str, chash: str, jobs: int) -> int:
    o = s.cfg["output"]
    seq = o["sequence"]
    if o["study"] == "thin_plate":
        table = thin_plate_study(s.u_fn, s.profile, o["scaling"], seq, s.params, s.grid, jobs=jobs)
    elif o["study"] == "aspect_ratio":
        table = aspect_ratio_study(s.u_fn, s.profile, o["limit_model"], seq, s.params, s.grid, jobs=jobs)
    else:
        raise ConfigError("output.study must be thin_plate or aspect_ratio")
    meta = " " + " ".join(f"{k}={v}" for k, v in sorted(table.meta.items()))
    write_csv(out / f"{pre}limits.csv", (table.parameter, *table.columns), table.rows, chash, meta)
    return EXIT_OK


COMMANDS = {
    "potential": cmd_potential,
    "force": cmd_force,
    "simulate": cmd_simulate,
    "steady": cmd_steady,
    "pullin": cmd_pullin,
    "bifurcate": cmd_bifurcate,
    "limits": cmd_limits,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="memsx", description="Numerical laboratory for electrostatic MEMS models.")
    ap.add_argument("command", help=", ".join(SUBCOMMANDS))
    ap.add_argument("config_path", nargs="?", help="JSON config file")
    ap.add_argument("--config", dest="config_flag", help="JSON config file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None, help="overrides model.seed")
    ap.add_argument("--version", action="version", version=f"memsx {__version__}")
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    err = sys.stderr
    if args.command not in COMMANDS:
        print(f"memsx: unknown subcommand {args.command!r} (choose from {', '.join(SUBCOMMANDS)})", file=err)
        return EXIT_CONFIG
    path = args.config_flag or args.config_path
    if path is None:
        print("memsx: a config file is required", file=err)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("memsx: --jobs must be >= 1", file=err)
        return EXIT_CONFIG
    try:
        cfg = load_config(path, args.seed)
        setup = Setup(cfg)
    except (ConfigError, InvalidArgument, InvalidProfile) as exc:
        print(f"memsx: config error: {exc}", file=err)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](setup, out, cfg["output"]["prefix"], config_hash(cfg), args.jobs)
    except (ConfigError, InvalidArgument, InvalidProfile, InvalidBracket) as exc:
        print(f"memsx: config error: {exc}", file=err)
        return EXIT_CONFIG
    except (SolverFailure, DegenerateDomain, BlowUp, SingularForce) as exc:
        print(f"memsx: solver failure: {exc}", file=err)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
