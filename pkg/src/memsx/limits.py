"""Convergence tables for the thin-plate and vanishing-aspect-ratio limits.

Both studies compare electrostatic energies, not fields: the limit statements
are energy-level and the fields live on different domains.  The vertical node
counts stay fixed while the plate layer thins, so its resolution scales with
delta and discretization error does not swamp the gap.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .core import InvalidArgument, ModelParams, PermittivityProfile, n_delta
from .potential import solve, solve_membrane, solve_robin

SCALINGS = ("O1", "Od")


@dataclass
class ConvergenceTable:
    """Rows of (parameter, energy, limit energy, |gap|, order, grid).

    ``order`` of row k is the empirical order between rows k-1 and k; it is
    None for the first row and whenever either gap is at or below the noise
    floor (10 x the linear-solver tolerance).
    """

    parameter: str
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    columns = ("energy", "limit", "gap", "order", "n_x", "n_z1", "n_z2")

    @property
    def gaps(self):
        return [r[3] for r in self.rows]

    @property
    def orders(self):
        return [r[4] for r in self.rows[1:]]


def _orders(values, gaps, floor):
    out = [None]
    for k in range(1, len(gaps)):
        if gaps[k - 1] > floor and gaps[k] > floor:
            out.append(float(np.log(gaps[k - 1] / gaps[k]) / np.log(values[k - 1] / values[k])))
        else:
            out.append(None)
    return out


def _check_decreasing(seq, name):
    seq = [float(v) for v in seq]
    if len(seq) < 1 or any(v <= 0 for v in seq):
        raise InvalidArgument(f"{name} sequence must be positive and nonempty")
    if any(b >= a for a, b in zip(seq, seq[1:])):
        raise InvalidArgument(f"{name} sequence must be strictly decreasing")
    return seq


def _energy(args):
    model, un, prof, p, grid = args
    return float(solve(model, un, prof, p, grid).energy)


def _energies(tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_energy, tasks))
    return [_energy(t) for t in tasks]


def _nodal(u, grid):
    return np.asarray(u(grid.x) if callable(u) else u, dtype=float)


def _table(name, values, energies, limits, grid, floor):
    gaps = [float(abs(e - l)) for e, l in zip(energies, limits)]
    orders = _orders(values, gaps, floor)
    table = ConvergenceTable(name)
    for v, e, l, g, o in zip(values, energies, limits, gaps, orders):
        table.rows.append((v, float(e), float(l), g, o, grid.n_x, grid.n_z1, grid.n_z2))
    return table


def thin_plate_study(
    u, profile: PermittivityProfile, scaling: str, deltas, params: ModelParams, grid, jobs: int = 1
) -> ConvergenceTable:
    """Transmission energies as the plate thickness delta -> 0.

    ``O1``: plate permittivity sigma*, compared with the membrane energy.
    ``Od``: plate permittivity delta * sigma*, compared with the Robin energy.
    """
    if scaling not in SCALINGS:
        raise InvalidArgument(f"scaling must be one of {SCALINGS}")
    deltas = _check_decreasing(deltas, "delta")
    un = _nodal(u, grid)
    if scaling == "O1":
        e_lim = solve_membrane(un, params, grid).energy
    else:
        e_lim = solve_robin(un, profile, params, grid).energy
    tasks = [
        ("transmission", un, profile if scaling == "O1" else profile.scaled(d), params.with_(delta=d), grid)
        for d in deltas
    ]
    energies = _energies(tasks, jobs)
    table = _table("delta", deltas, energies, [e_lim] * len(deltas), grid, 10 * params.tol_linear)
    table.meta = {"study": "thin_plate", "scaling": scaling}
    return table


def reduced_energy_exact(u, profile, model: str, params: ModelParams, grid=None) -> float:
    """-1/2 int_0^1 dx / (1 + u + N): adaptive quadrature for callable u,
    trapezoid rule on the grid nodes otherwise."""
    if model == "transmission":
        gap = lambda x: n_delta(profile, params.delta, params.quad_points, x=np.atleast_1d(x))
    elif model == "robin":
        gap = lambda x: 1.0 / profile(np.atleast_1d(x), 0.0)
    else:
        raise InvalidArgument("reduced energy is defined for transmission or robin")
    if callable(u):
        val, _ = quad(lambda x: 1.0 / (1.0 + u(x) + gap(x)[0]), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
        return -0.5 * val
    if grid is None:
        raise InvalidArgument("nodal u needs a grid")
    un = np.asarray(u, dtype=float)
    f = 1.0 / (1.0 + un + gap(grid.x))
    return -0.5 * float(np.trapezoid(f, grid.x))


def aspect_ratio_study(
    u, profile: PermittivityProfile, model: str, epsilons, params: ModelParams, grid, jobs: int = 1
) -> ConvergenceTable:
    """Full-model energies as the aspect ratio eps -> 0 against the reduced energy."""
    if model not in ("transmission", "robin"):
        raise InvalidArgument("model must be 'transmission' or 'robin'")
    epsilons = _check_decreasing(epsilons, "eps")
    un = _nodal(u, grid)
    e_red = reduced_energy_exact(u, profile, model, params, grid)
    energies = _energies([(model, un, profile, params.with_(eps=e), grid) for e in epsilons], jobs)
    table = _table("eps", epsilons, energies, [e_red] * len(epsilons), grid, 10 * params.tol_linear)
    table.meta = {"study": "aspect_ratio", "model": model}
    return table
