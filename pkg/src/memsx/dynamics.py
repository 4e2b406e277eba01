"""Obstacle-constrained plate dynamics.

Discrete setting: interior plate nodes carry the unknowns, the mass matrix is
h * I and the mechanical energy is E_m(u) = h/2 u^T K u with K the
finite-difference operator beta * Lap^2 - tau * Lap.  The time step treats K
implicitly and the electrostatic force explicitly.  In ``projection`` mode
every step is an obstacle problem in the step matrix, solved exactly by a
primal-dual active-set iteration, so fixed points satisfy discrete
complementarity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .core import (
    DeflectionField,
    Grid,
    InvalidArgument,
    MemsxError,
    ModelParams,
    SingularForce,
    SolverFailure,
    as_array,
    trapezoid_weights,
)
from .forces import force_reduced_values, potential_force, reduced_gap
from .potential import solve

log = logging.getLogger(__name__)


class BlowUp(MemsxError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


# --- mechanics -------------------------------------------------------------


def stiffness_matrix(n: int, h: float, beta: float, tau: float, clamped: bool | None = None) -> np.ndarray:
    """Dense K acting on the n interior nodes.

    Clamped closure reflects a ghost node (u_{-1} = u_1) and keeps the
    boundary-node curvature in the bending energy; the hinged closure drops
    it (natural condition u'' = 0).
    """
    if clamped is None:
        clamped = beta > 0
    lap = (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / h**2
    k = -tau * lap
    if beta > 0:
        if clamped:
            rows = np.zeros((n + 2, n))
            rows[1:-1] = lap
            rows[0, 0] = 2.0 / h**2
            rows[-1, -1] = 2.0 / h**2
            w = trapezoid_weights(n + 2, h)
        else:
            rows = lap
            w = np.full(n, h)
        k = k + beta * rows.T @ (w[:, None] * rows) / h
    return k


def mechanical_energy(u, params: ModelParams, clamped: bool | None = None) -> float:
    """beta/2 int |u''|^2 + tau/2 int |u'|^2 on the plate nodes."""
    u = as_array(u)
    if np.min(u) < -1:
        return float("inf")
    n = u.size - 2
    h = 1.0 / (n + 1)
    k = stiffness_matrix(n, h, params.beta, params.tau, clamped)
    ui = u[1:-1]
    return 0.5 * h * float(ui @ (k @ ui))


def _to_banded(a: np.ndarray, bw: int) -> np.ndarray:
    n = a.shape[0]
    ab = np.zeros((2 * bw + 1, n))
    for k in range(-bw, bw + 1):
        d = np.diagonal(a, k)
        if k >= 0:
            ab[bw - k, k:] = d
        else:
            ab[bw - k, : n + k] = d
    return ab


class StepMatrix:
    """Banded c0 * I + K with an exact obstacle solve u >= -1."""

    def __init__(self, k: np.ndarray, c0: float):
        self.a = c0 * np.eye(k.shape[0]) + k
        self.bw = 2 if np.any(np.diagonal(k, 2)) else 1
        self.ab = _to_banded(self.a, self.bw)

    def solve(self, rhs):
        return solve_banded((self.bw, self.bw), self.ab, rhs)

    def solve_obstacle(self, rhs, active=None, max_iter: int = 200):
        """min 1/2 u^T A u - rhs^T u  s.t. u >= -1.  Returns (u, multiplier)."""
        n = rhs.size
        u = self.solve(rhs)
        if active is None:
            active = u < -1.0
        if not np.any(active) and np.all(u >= -1.0):
            return u, np.zeros(n)
        for _ in range(max_iter):
            ab = self.ab.copy()
            r = rhs.copy()
            idx = np.flatnonzero(active)
            for k in range(-self.bw, self.bw + 1):
                # zero the rows of active nodes, then put 1 on the diagonal
                cols = idx + k
                ok = (cols >= 0) & (cols < n)
                ab[self.bw - k, cols[ok]] = 0.0
            ab[self.bw, idx] = 1.0
            r[idx] = -1.0
            u = solve_banded((self.bw, self.bw), ab, r)
            mult = self.a @ u - rhs
            mult[~active] = 0.0
            new_active = (mult - (u + 1.0)) > 0
            if np.array_equal(new_active, active):
                # active rows solve to -1 up to LU round-off; pin them
                u = np.maximum(u, -1.0)
                u[active] = -1.0
                return u, np.maximum(mult, 0.0)
            active = new_active
        raise SolverFailure("active-set obstacle solve did not converge")


# --- force models ----------------------------------------------------------


class ReducedForce:
    """Local force 1/2 (1 + u + N)^-2 of the vanishing-aspect-ratio models."""

    potential_based = False

    def __init__(self, variant: str, grid_x, params: ModelParams, profile=None, n_gap=None):
        self.variant = variant
        self.x = np.asarray(grid_x, dtype=float)
        if n_gap is None:
            n_gap = reduced_gap(variant, profile, params, self.x)
        self.n_gap = np.broadcast_to(np.asarray(n_gap, dtype=float), self.x.shape).copy()
        self.h = self.x[1] - self.x[0]
        self.singular = bool(np.any(self.n_gap <= 0))

    @classmethod
    def constant_gap(cls, grid_x, params, c: float):
        variant = "classical" if c == 0 else "transmission"
        return cls(variant, grid_x, params, n_gap=np.full(len(grid_x), float(c)))

    def evaluate(self, u):
        denom = 1.0 + u + self.n_gap
        if np.any(denom <= 0):
            raise SingularForce("reduced force is singular at touchdown")
        g = force_reduced_values(u, self.n_gap)
        energy = -0.5 * float(trapezoid_weights(u.size, self.h) @ (1.0 / denom))
        return g, energy

    def dg(self, u):
        return -1.0 / (1.0 + u + self.n_gap) ** 3


class PotentialForce:
    """Force from a fresh electrostatic solve on every call."""

    potential_based = True
    singular = False

    def __init__(self, model: str, grid: Grid, params: ModelParams, profile=None):
        self.model = model
        self.grid = grid
        self.params = params
        self.profile = profile
        self.variant = model
        self.x = grid.x
        self.h = grid.h_x

    def evaluate(self, u):
        sol = solve(self.model, u, self.profile, self.params, self.grid)
        g = potential_force(self.model, sol, u, self.profile, self.params).g
        return g, sol.energy


# --- time stepping ---------------------------------------------------------


@dataclass
class PlateState:
    u: np.ndarray
    w: np.ndarray | None = None
    t: float = 0.0
    a: np.ndarray | None = None  # acceleration, Newmark only

    def __post_init__(self):
        self.u = np.array(as_array(self.u), dtype=float)
        if self.w is not None:
            self.w = np.array(self.w, dtype=float)
            if self.w[0] != 0 or self.w[-1] != 0:
                raise InvalidArgument("velocity must vanish at the boundary")

    @classmethod
    def at_rest(cls, n_x: int, gamma2: float = 0.0):
        u = np.zeros(n_x + 2)
        return cls(u, np.zeros_like(u) if gamma2 > 0 else None)


@dataclass
class ReactionField:
    """Obstacle reaction zeta (<= 0 where the plate is held at u = -1)."""

    zeta: np.ndarray
    contact: np.ndarray

    def complementarity(self, u) -> float:
        return float(np.max(np.abs(self.zeta * (as_array(u) + 1.0))))

    def check(self, u, tol: float = 1e-6) -> bool:
        return self.complementarity(u) <= tol and bool(np.all(self.zeta[self.contact] <= tol))


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    e_mech: list = field(default_factory=list)
    e_elec: list = field(default_factory=list)  # lam * E_e
    e_kin: list = field(default_factory=list)
    zipped_counts: list = field(default_factory=list)
    min_u: list = field(default_factory=list)
    touchdown_time: float | None = None
    zipped_mask: np.ndarray | None = None
    steady: bool = False
    terminated: bool = False  # model breakdown (classical touchdown)
    steps: int = 0
    step_energies: list = field(default_factory=list)  # total energy after every step

    @property
    def total(self):
        return [a + b + c for a, b, c in zip(self.e_mech, self.e_elec, self.e_kin)]

    @property
    def final(self):
        return self.snapshots[-1]

    def rows(self):
        return [
            (t, mu, em, ee, em + ee + ek, zc)
            for t, mu, em, ee, ek, zc in zip(
                self.times, self.min_u, self.e_mech, self.e_elec, self.e_kin, self.zipped_counts
            )
        ]


class Integrator:
    """Holds the factorised step matrix for a fixed (dt, params, grid)."""

    def __init__(self, n_x: int, dt: float, force_model, params: ModelParams, clamped: bool | None = None):
        if not dt > 0:
            raise InvalidArgument("time step must be positive")
        self.n = n_x
        self.h = 1.0 / (n_x + 1)
        self.dt = dt
        self.params = params
        self.force_model = force_model
        self.k = stiffness_matrix(n_x, self.h, params.beta, params.tau, clamped)
        if params.gamma2 > 0:
            self.c0 = 4 * params.gamma2 / dt**2 + 2 / dt
        else:
            self.c0 = 1.0 / dt
        self.mat = StepMatrix(self.k, self.c0)

    def energies(self, u, w=None, e_elec=None):
        ui = u[1:-1]
        em = 0.5 * self.h * float(ui @ (self.k @ ui))
        if e_elec is None:
            _, e_elec = self.force_model.evaluate(u)
        ek = 0.0
        if w is not None and self.params.gamma2 > 0:
            ek = 0.5 * self.params.gamma2 * self.h * float(w[1:-1] @ w[1:-1])
        return em, self.params.lam * e_elec, ek

    def step(self, state: PlateState, g=None):
        """Advance one step; returns (new state, reaction zeta on interior nodes)."""
        p = self.params
        dt = self.dt
        u = state.u
        if g is None:
            g, _ = self.force_model.evaluate(u)
        f = -p.lam * g[1:-1]
        ui = u[1:-1]
        if p.obstacle_mode == "penalty":
            f = f + p.penalty_s * (ui < -1.0)
        if p.gamma2 > 0:
            w = state.w[1:-1] if state.w is not None else np.zeros_like(ui)
            a = state.a[1:-1] if state.a is not None else (f - w - self.k @ ui) / p.gamma2
            rhs = f + p.gamma2 * (4 / dt**2 * ui + 4 / dt * w + a) + (2 / dt * ui + w)
        else:
            rhs = ui / dt + f
        if p.obstacle_mode == "projection":
            new, mult = self.mat.solve_obstacle(rhs)
        else:
            new = self.mat.solve(rhs)
            mult = np.zeros_like(new)
        if not np.all(np.isfinite(new)):
            raise BlowUp(f"non-finite deflection at t={state.t + dt:g}", state)
        u_new = np.zeros_like(u)
        u_new[1:-1] = new
        zeta = np.zeros_like(u)
        zeta[1:-1] = -mult  # nonpositive obstacle reaction
        if p.gamma2 > 0:
            a_new = 4 / dt**2 * (new - ui) - 4 / dt * w - a
            w_new = w + dt / 2 * (a + a_new)
            contact = mult > 0
            w_new[contact] = 0.0
            a_new[contact] = 0.0
            wf = np.zeros_like(u)
            wf[1:-1] = w_new
            af = np.zeros_like(u)
            af[1:-1] = a_new
            return PlateState(u_new, wf, state.t + dt, af), zeta
        return PlateState(u_new, None, state.t + dt), zeta


def step(state: PlateState, dt: float, force_model, params: ModelParams) -> PlateState:
    """Single time step (convenience wrapper; builds the step matrix)."""
    n_x = state.u.size - 2
    return Integrator(n_x, dt, force_model, params).step(state)[0]


def simulate(
    init: PlateState,
    force_model,
    params: ModelParams,
    t_end: float,
    sample_every: int = 100,
    dt: float | None = None,
    stop_on_steady: bool = True,
    stop_on_touchdown: bool = False,
    record_steps: bool = False,
) -> Trajectory:
    """Integrate until t_end, a steady state, or (classical) touchdown."""
    u0 = init.u
    n_x = u0.size - 2
    h = 1.0 / (n_x + 1)
    if dt is None:
        dt = h**2 / 4
    if np.min(u0) < -1:
        raise InvalidArgument("initial deflection penetrates the ground plate")
    if init.w is None and params.gamma2 > 0:
        init = PlateState(u0, np.zeros_like(u0), init.t)
    integ = Integrator(n_x, dt, force_model, params)
    traj = Trajectory()
    tol = params.contact_tol
    state = init

    def record(st, g_energy):
        em, ee, ek = integ.energies(st.u, st.w, g_energy)
        mask = st.u <= -1.0 + tol
        traj.times.append(st.t)
        traj.snapshots.append(st.u.copy())
        traj.e_mech.append(em)
        traj.e_elec.append(ee)
        traj.e_kin.append(ek)
        traj.zipped_counts.append(int(np.count_nonzero(mask)))
        traj.min_u.append(float(np.min(st.u)))

    def touched(st):
        return np.min(st.u) <= -1.0 + tol

    g, e_elec = _safe_eval(force_model, state.u)
    record(state, e_elec)
    if touched(state):
        traj.touchdown_time = state.t
        if force_model.singular:
            traj.terminated = True
            return traj
    n_steps = int(np.ceil((t_end - init.t) / dt - 1e-12))
    for n in range(1, n_steps + 1):
        new, _ = integ.step(state, g)
        if not np.all(np.isfinite(new.u)):
            raise BlowUp("non-finite deflection", state)
        if force_model.singular and np.min(new.u) < -1.0 + tol:
            new.u = np.maximum(new.u, -1.0)
        change = np.max(np.abs(new.u - state.u)) / dt
        state = new
        traj.steps = n
        hit = touched(state)
        if hit and traj.touchdown_time is None:
            traj.touchdown_time = state.t
        if hit and (force_model.singular or stop_on_touchdown):
            traj.terminated = force_model.singular
            if force_model.singular:
                record(state, np.nan)
            else:
                g, e_elec = _safe_eval(force_model, state.u)
                record(state, e_elec)
            break
        g, e_elec = _safe_eval(force_model, state.u)
        if record_steps:
            traj.step_energies.append(sum(integ.energies(state.u, state.w, e_elec)))
        vel_ok = state.w is None or np.max(np.abs(state.w)) <= params.steady_tol
        is_steady = change <= params.steady_tol and vel_ok
        if n % sample_every == 0 or n == n_steps or (is_steady and stop_on_steady):
            record(state, e_elec)
        if is_steady and stop_on_steady:
            traj.steady = True
            break
    mask = state.u <= -1.0 + tol
    traj.zipped_mask = mask if np.any(mask) else np.zeros_like(mask)
    return traj


def _safe_eval(force_model, u):
    try:
        return force_model.evaluate(u)
    except SingularForce:
        return np.full_like(u, np.inf), -np.inf


def extract_reaction(u_steady, force_model, params: ModelParams, tol: float | None = None) -> ReactionField:
    """Obstacle reaction from the steady residual: zeta = -lam g - K u."""
    u = as_array(u_steady)
    n_x = u.size - 2
    h = 1.0 / (n_x + 1)
    tol = params.contact_tol if tol is None else tol
    k = stiffness_matrix(n_x, h, params.beta, params.tau)
    contact = u <= -1.0 + tol
    if params.lam == 0:
        g = np.zeros_like(u)
    else:
        try:
            g, _ = force_model.evaluate(u)
        except SingularForce:
            raise
    zeta = np.zeros_like(u)
    zeta[1:-1] = -params.lam * g[1:-1] - k @ u[1:-1]
    return ReactionField(zeta, contact)


def admissible(u, params: ModelParams) -> DeflectionField:
    return DeflectionField(as_array(u), u_max=params.u_max)
