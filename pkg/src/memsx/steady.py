"""Steady states, pull-in thresholds and bifurcation sweeps.

Steady states solve  K u + lam g(u) + zeta = 0  with the obstacle u >= -1.
For the local (reduced) forces we run a semismooth Newton method on the
complementarity residual  phi = min(u + 1, K u + lam g(u));  without an
obstacle (classical force) phi is just the residual.  Potential-based forces
use a frozen-force fixed point: the force is refreshed once per outer
iteration and the obstacle problem for the frozen force is solved exactly.

"No steady state" is only ever a numerical statement: Newton failed from a
warm start.  pull_in combines it with an independent dynamic criterion
(touchdown of the gradient flow released from rest) and reports both.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import InvalidArgument, MemsxError, ModelParams, SolverFailure, as_array
from .dynamics import PlateState, StepMatrix, simulate, stiffness_matrix

MAX_ITER = 100
MAX_HALVINGS = 30


class InvalidBracket(MemsxError, ValueError):
    pass


@dataclass
class SteadyResult:
    u: np.ndarray
    converged: bool
    iterations: int
    residual: float
    lam: float
    zipped_count: int = 0

    @property
    def min_u(self) -> float:
        return float(np.min(self.u))


def _residual(k, u, lam, force_model, obstacle: bool):
    ui = u[1:-1]
    g, _ = force_model.evaluate(u)
    r = k @ ui + lam * g[1:-1]
    if obstacle:
        return np.minimum(ui + 1.0, r), r
    return r, r


def _newton(lam, force_model, params: ModelParams, u_init, obstacle: bool, max_iter=MAX_ITER):
    n = u_init.size - 2
    h = 1.0 / (n + 1)
    k = stiffness_matrix(n, h, params.beta, params.tau)
    u = np.array(u_init, dtype=float)
    if obstacle:
        u[1:-1] = np.maximum(u[1:-1], -1.0)

    def admissible(v):
        return np.all(1.0 + v + force_model.n_gap > 0) and np.all(np.isfinite(v))

    if not admissible(u):
        u = np.zeros_like(u)
    phi, r = _residual(k, u, lam, force_model, obstacle)
    norm = np.max(np.abs(phi))
    it = 0
    while norm > params.tol_newton and it < max_iter:
        it += 1
        ui = u[1:-1]
        jac = k + lam * np.diag(force_model.dg(u)[1:-1])
        rhs = -phi
        if obstacle:
            act = (ui + 1.0) <= r
            jac[act, :] = 0.0
            jac[act, act] = 1.0
        try:
            du = sla.solve(jac, rhs, assume_a="gen")
        except (sla.LinAlgError, ValueError):
            break
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            trial = u.copy()
            trial[1:-1] = ui + t * du
            if admissible(trial):
                phi_t, r_t = _residual(k, trial, lam, force_model, obstacle)
                nt = np.max(np.abs(phi_t))
                if nt < norm or nt <= params.tol_newton:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        u, phi, r, norm = trial, phi_t, r_t, nt
    converged = bool(norm <= params.tol_newton)
    if obstacle and converged:
        u[1:-1] = np.maximum(u[1:-1], -1.0)
    return u, converged, it, float(norm)


def _fixed_point(lam, force_model, params: ModelParams, u_init, max_iter=MAX_ITER, relax=1.0):
    n = u_init.size - 2
    h = 1.0 / (n + 1)
    k = stiffness_matrix(n, h, params.beta, params.tau)
    mat = StepMatrix(k, 0.0)
    u = np.array(u_init, dtype=float)
    norm = np.inf
    tol = max(params.tol_newton, 1e-9)
    for it in range(1, max_iter + 1):
        g, _ = force_model.evaluate(u)
        new, _ = mat.solve_obstacle(-lam * g[1:-1])
        if not np.all(np.isfinite(new)):
            return u, False, it, np.inf
        step = np.max(np.abs(new - u[1:-1]))
        u = u.copy()
        u[1:-1] = (1 - relax) * u[1:-1] + relax * new
        if np.min(u) < -1.0 + params.gap_tol and force_model.potential_based:
            return u, False, it, np.inf
        g, _ = force_model.evaluate(u)
        r = k @ u[1:-1] + lam * g[1:-1]
        phi = np.minimum(u[1:-1] + 1.0, r)
        norm = float(np.max(np.abs(phi)))
        if norm <= tol or step <= 0.1 * tol:
            return u, norm <= 100 * tol, it, norm
    return u, False, max_iter, norm


def steady_solve(lam: float, force_model, params: ModelParams, u_init=None, obstacle: bool | None = None) -> SteadyResult:
    """Steady state for voltage parameter ``lam`` starting from ``u_init``."""
    if lam < 0:
        raise InvalidArgument("lam must be >= 0")
    n = len(force_model.x) - 2
    u0 = np.zeros(n + 2) if u_init is None else np.array(as_array(u_init), dtype=float)
    if u0.size != n + 2:
        raise InvalidArgument("initial guess does not match the force model grid")
    if np.min(u0) < -1:
        raise InvalidArgument("initial guess penetrates the ground plate")
    if lam == 0:
        return SteadyResult(np.zeros(n + 2), True, 1, 0.0, lam, 0)
    if obstacle is None:
        obstacle = not force_model.singular
    if force_model.potential_based:
        u, ok, it, res = _fixed_point(lam, force_model, params, u0)
    else:
        u, ok, it, res = _newton(lam, force_model, params, u0, obstacle)
    zipped = int(np.count_nonzero(u <= -1.0 + params.contact_tol)) if ok else 0
    return SteadyResult(u, ok, it, res, lam, zipped)


def _unzipped(res: SteadyResult, params) -> bool:
    return res.converged and res.zipped_count == 0 and res.min_u > -1.0 + params.contact_tol


def continue_to(lam_target, lam_from, u_from, force_model, params, depth: int = 4):
    """Warm-started continuation from (lam_from, u_from) to lam_target.

    Subdivides the lam step (up to ``depth`` halvings) when Newton fails.
    Only unzipped steady states count as success.
    """
    res = steady_solve(lam_target, force_model, params, u_from)
    if _unzipped(res, params) or depth == 0:
        return res
    mid = 0.5 * (lam_from + lam_target)
    half = continue_to(mid, lam_from, u_from, force_model, params, depth - 1)
    if not _unzipped(half, params):
        return half
    return continue_to(lam_target, mid, half.u, force_model, params, depth - 1)


def pull_in_steady(force_model, params, bracket=(1e-3, 50.0), tol_lam=1e-4):
    lo, hi = bracket
    n = len(force_model.x) - 2
    start = continue_to(lo, 0.0, np.zeros(n + 2), force_model, params)
    top = continue_to(hi, lo, start.u, force_model, params)
    if _unzipped(start, params) == _unzipped(top, params):
        raise InvalidBracket(f"bracket endpoints {bracket} classify identically (steady)")
    if not _unzipped(start, params):
        raise InvalidBracket("lower bracket end has no unzipped steady state")
    u_lo = start.u
    while hi - lo > tol_lam:
        mid = 0.5 * (lo + hi)
        res = continue_to(mid, lo, u_lo, force_model, params)
        if _unzipped(res, params):
            lo, u_lo = mid, res.u
        else:
            hi = mid
    return 0.5 * (lo + hi), u_lo


def touches_down(lam, force_model, params: ModelParams, dt: float, t_max: float) -> bool:
    """Dynamic classifier: does the flow released from rest reach u = -1?"""
    n = len(force_model.x) - 2
    p = params.with_(lam=lam)
    traj = simulate(
        PlateState.at_rest(n, p.gamma2),
        force_model,
        p,
        t_end=t_max,
        sample_every=10**9,
        dt=dt,
        stop_on_touchdown=True,
    )
    if traj.touchdown_time is not None:
        return True
    if not traj.steady:
        raise SolverFailure(f"dynamic classification undecided at lam={lam:g} by t={t_max:g}")
    return False


def pull_in_dynamic(force_model, params, bracket=(1e-3, 50.0), tol_lam=1e-4, dt=None, t_max=1e4):
    lo, hi = bracket
    n = len(force_model.x) - 2
    h = 1.0 / (n + 1)
    if dt is None:
        dt = h**2 / 4
    if touches_down(lo, force_model, params, dt, t_max) == touches_down(hi, force_model, params, dt, t_max):
        raise InvalidBracket(f"bracket endpoints {bracket} classify identically (dynamic)")
    if touches_down(lo, force_model, params, dt, t_max):
        raise InvalidBracket("lower bracket end touches down")
    while hi - lo > tol_lam:
        mid = 0.5 * (lo + hi)
        if touches_down(mid, force_model, params, dt, t_max):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class PullInReport:
    lambda_star_steady: float
    lambda_star_dynamic: float
    tol_lam: float
    u_critical: np.ndarray = field(repr=False, default=None)

    @property
    def gap(self) -> float:
        """Relative disagreement of the two estimates."""
        ref = max(abs(self.lambda_star_steady), abs(self.lambda_star_dynamic))
        return abs(self.lambda_star_steady - self.lambda_star_dynamic) / ref

    def as_dict(self):
        return {
            "lambda_star_steady": self.lambda_star_steady,
            "lambda_star_dynamic": self.lambda_star_dynamic,
            "gap": self.gap,
            "tol_lambda": self.tol_lam,
        }


def pull_in(force_model, params, bracket=(1e-3, 50.0), tol_lam=1e-4, dt=None, t_max=1e4) -> PullInReport:
    """Pull-in threshold by steady continuation and by dynamic bisection."""
    if not bracket[0] < bracket[1]:
        raise InvalidBracket("bracket must be increasing")
    lam_a, u_crit = pull_in_steady(force_model, params, bracket, tol_lam)
    lam_b = pull_in_dynamic(force_model, params, bracket, tol_lam, dt, t_max)
    return PullInReport(lam_a, lam_b, tol_lam, u_crit)


@dataclass
class BifurcationTable:
    rows: list = field(default_factory=list)

    columns = ("lambda", "norm_inf", "min_u", "energy", "converged", "zipped_count", "iterations")

    def converged_rows(self):
        return [r for r in self.rows if r[4]]


def bifurcation_diagram(force_model, params: ModelParams, lam_grid) -> BifurcationTable:
    """Warm-started sweep of steady states over an increasing lam grid."""
    lam_grid = [float(v) for v in lam_grid]
    if any(b <= a for a, b in zip(lam_grid, lam_grid[1:])):
        raise InvalidArgument("lam grid must be strictly increasing")
    n = len(force_model.x) - 2
    h = 1.0 / (n + 1)
    k = stiffness_matrix(n, h, params.beta, params.tau)
    table = BifurcationTable()
    u = np.zeros(n + 2)
    for lam in lam_grid:
        res = steady_solve(lam, force_model, params, u)
        if not res.converged and not force_model.singular:
            # zipped branch: relax the flow to near-steadiness, then polish
            res = _relax_then_solve(lam, force_model, params, u)
        if res.converged:
            u = res.u
            ui = u[1:-1]
            try:
                _, ee = force_model.evaluate(u)
            except MemsxError:
                ee = np.nan
            energy = 0.5 * h * float(ui @ (k @ ui)) + lam * ee
            table.rows.append((lam, float(np.max(np.abs(u))), res.min_u, energy, True, res.zipped_count, res.iterations))
        else:
            table.rows.append((lam, np.nan, np.nan, np.nan, False, 0, res.iterations))
    return table


def _relax_then_solve(lam, force_model, params, u_init):
    p = params.with_(lam=lam, obstacle_mode="projection", steady_tol=1e-4)
    traj = simulate(PlateState(np.array(u_init)), force_model, p, t_end=50.0, sample_every=10**9, dt=1e-3)
    return steady_solve(lam, force_model, params, traj.final)
