"""Electrostatic force densities g (the plate equation carries -lam * g).

Every potential-based force is the first variation of the matching discrete
energy's continuum counterpart, evaluated from traces of the computed
potential.  Trace derivatives use second-order one-sided differences in the
mapped coordinate normal to the boundary and centred differences along it;
physical derivatives follow from the chain rule of the layer maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    DegenerateDomain,
    InvalidArgument,
    InvalidProfile,
    ModelParams,
    PermittivityProfile,
    SingularForce,
    as_array,
    n_delta,
    robin_gap,
    trapezoid_weights,
)
from .potential import PotentialSolution, solve

REDUCED_VARIANTS = ("transmission", "robin", "classical")


@dataclass
class ForceField:
    g: np.ndarray
    model: str
    parts: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.g)):
            raise InvalidArgument(f"{self.model} force is not finite")


def _d_one_sided(f, h, at_end: bool):
    """Second-order one-sided derivative along the last axis at the first/last node."""
    if at_end:
        return (3 * f[..., -1] - 4 * f[..., -2] + f[..., -3]) / (2 * h)
    return (-3 * f[..., 0] + 4 * f[..., 1] - f[..., 2]) / (2 * h)


def _slope(u, h):
    return np.gradient(u, h, edge_order=2)


def _require(sol: PotentialSolution, model: str, u):
    if sol.model != model:
        raise InvalidArgument(f"expected a {model} solution, got {sol.model}")
    u = as_array(u)
    if u.shape != sol.u.shape or not np.array_equal(u, sol.u):
        raise InvalidArgument("solution was computed for a different deflection")
    return u


def _plate_layer_gradients(sol: PotentialSolution):
    """Physical (psi_x, psi_z) of the plate layer at every (x, zeta) node."""
    grid = sol.grid
    h = grid.h_x
    dzeta = grid.zeta[1] - grid.zeta[0]
    psi = sol.psi2
    u_x = _slope(sol.u, h)
    psi_zeta = np.gradient(psi, dzeta, axis=1, edge_order=2)
    psi_z = psi_zeta / sol.delta
    psi_x_along = np.gradient(psi, h, axis=0, edge_order=2)
    psi_x = psi_x_along - u_x[:, None] * psi_z
    return psi_x, psi_z, u_x


def transmission_parts(sol: PotentialSolution, u, profile: PermittivityProfile, params: ModelParams):
    """The four groups of the transmission force, nodewise.

    ``vertical``: heterogeneity integral over the plate thickness,
    ``top``: trace term on the top surface (the a-priori force),
    ``jump_tangential`` and ``jump_normal``: interface terms carrying
    sigma*(x, 0) - 1.
    """
    u = _require(sol, "transmission", u)
    grid = sol.grid
    x = grid.x
    eps2 = sol.eps**2
    delta = sol.delta
    h = grid.h_x
    dzeta = grid.zeta[1] - grid.zeta[0]
    psi = sol.psi2
    u_x = _slope(u, h)

    # top surface zeta = 1, where psi = 1 so the tangential derivative vanishes
    pz_top = _d_one_sided(psi, dzeta, at_end=True) / delta
    px_top = np.gradient(psi[:, -1], h, edge_order=2) - u_x * pz_top
    sig_top = profile(x, delta)
    top = 0.5 * sig_top * (eps2 * px_top**2 + pz_top**2)

    # interface zeta = 0, plate side
    pz_0 = _d_one_sided(psi, dzeta, at_end=False) / delta
    tangential = np.gradient(psi[:, 0], h, edge_order=2)  # psi_z u_x + psi_x
    px_0 = tangential - u_x * pz_0
    sig_0 = profile(x, 0.0)
    stretch = 1.0 + eps2 * u_x**2
    jump_t = 0.5 * (sig_0 - 1.0) / stretch * eps2 * (pz_0 * u_x + px_0) ** 2
    jump_n = 0.5 * (sig_0 - 1.0) * sig_0 / stretch * (pz_0 - eps2 * u_x * px_0) ** 2

    if profile.constant_in_s:
        vertical = np.zeros_like(top)
    else:
        psi_x, psi_z, _ = _plate_layer_gradients(sol)
        s = delta * grid.zeta
        dsig = profile.ds(x[:, None], s[None, :])
        integrand = dsig * (eps2 * psi_x**2 + psi_z**2)
        vertical = 0.5 * delta * (integrand @ trapezoid_weights(grid.n_z2, dzeta))
    return {"vertical": vertical, "top": top, "jump_tangential": jump_t, "jump_normal": jump_n}


def force_transmission(sol, u, profile, params) -> ForceField:
    parts = transmission_parts(sol, u, profile, params)
    g = parts["vertical"] + parts["top"] + parts["jump_tangential"] + parts["jump_normal"]
    return ForceField(g, "transmission", parts)


def force_pelesko(sol, u, profile, params) -> ForceField:
    """Only the top-surface trace term (force postulated a priori)."""
    parts = transmission_parts(sol, u, profile, params)
    return ForceField(parts["top"].copy(), "pelesko", parts)


def _gap_top_traces(sol: PotentialSolution):
    grid = sol.grid
    h = grid.h_x
    deta = grid.eta[1] - grid.eta[0]
    u = sol.u
    u_x = _slope(u, h)
    psi_top = sol.psi1[:, -1]
    pz = _d_one_sided(sol.psi1, deta, at_end=True) / (1.0 + u)
    px = np.gradient(psi_top, h, edge_order=2) - u_x * pz
    return psi_top, px, pz, u_x


def force_membrane(sol, u, params) -> ForceField:
    _require(sol, "membrane", u)
    _, px, pz, _ = _gap_top_traces(sol)
    g = 0.5 * (sol.eps**2 * px**2 + pz**2)
    return ForceField(g, "membrane")


def force_robin(sol, u, profile, params) -> ForceField:
    u = _require(sol, "robin", u)
    eps2 = sol.eps**2
    h = sol.grid.h_x
    psi_top, px, pz, u_x = _gap_top_traces(sol)
    sig = profile(sol.grid.x, 0.0)
    if np.any(sig <= 0):
        raise InvalidProfile("sigma*(x, 0) must be positive")
    flux = sig * (psi_top - 1.0) ** 2 * u_x
    div = np.gradient(flux, h, edge_order=2)
    trace = -0.5 * (eps2 * px**2 + pz**2)
    robin = -sig * (1.0 + eps2 * u_x**2) * (psi_top - 1.0) * pz
    g = trace + robin + eps2 * div
    return ForceField(g, "robin", {"trace": trace, "robin": robin, "divergence": eps2 * div})


def reduced_gap(variant: str, profile: PermittivityProfile | None, params: ModelParams, x):
    """Gap correction N(x) of the reduced force."""
    if variant == "transmission":
        return n_delta(profile, params.delta, params.quad_points, x=x)
    if variant == "robin":
        return robin_gap(profile, x)
    if variant == "classical":
        return np.zeros_like(np.asarray(x, dtype=float))
    raise InvalidArgument(f"unknown reduced variant {variant!r}")


def force_reduced_values(u, n_gap):
    """1/2 (1 + u + N)^-2; plain array version used in the time loops."""
    return 0.5 / (1.0 + u + n_gap) ** 2


def force_reduced(u, variant: str, params: ModelParams, profile=None, n_gap=None, x=None) -> ForceField:
    u = as_array(u)
    if x is None:
        x = np.linspace(0.0, 1.0, u.size)
    if n_gap is None:
        n_gap = reduced_gap(variant, profile, params, x)
    n_gap = np.broadcast_to(np.asarray(n_gap, dtype=float), u.shape)
    if np.any(u < -1):
        raise InvalidArgument("deflection below the ground plate")
    denom = 1.0 + u + n_gap
    if np.any(denom <= 0):
        raise SingularForce("reduced force is singular (u = -1 with zero gap correction)")
    return ForceField(force_reduced_values(u, n_gap), f"reduced-{variant}")


def reduced_energy(u, n_gap, h):
    """-1/2 int dx / (1 + u + N), trapezoid rule on the plate nodes."""
    u = as_array(u)
    return -0.5 * float(trapezoid_weights(u.size, h) @ (1.0 / (1.0 + u + n_gap)))


def potential_force(model: str, sol, u, profile, params) -> ForceField:
    if model == "transmission":
        return force_transmission(sol, u, profile, params)
    if model == "membrane":
        return force_membrane(sol, u, params)
    if model == "robin":
        return force_robin(sol, u, profile, params)
    raise InvalidArgument(f"unknown potential model {model!r}")


def sine_field(grid, k: int, amplitude: float = 1.0):
    """Smooth perturbation amplitude * sin(k pi x), vanishing at both ends."""
    return amplitude * np.sin(k * np.pi * grid.x)


def seeded_test_fields(grid, seed: int, count: int = 3, kmax: int = 4, clamped: bool = False):
    """Reproducible perturbations from the low-dimensional sin(k pi x) family."""
    rng = np.random.default_rng(seed)
    x = grid.x
    out = []
    for _ in range(count):
        coeffs = rng.normal(size=kmax)
        v = sum(c * np.sin((j + 1) * np.pi * x) for j, c in enumerate(coeffs))
        if clamped:
            v = v * np.sin(np.pi * x)
        v[0] = v[-1] = 0.0
        out.append(v / np.max(np.abs(v)))
    return out


def validate_shape_derivative(u, v, model: str, params: ModelParams, grid, profile=None, step: float = 1e-5):
    """Compare int g v dx with the centred difference of the discrete energy.

    Returns a dict with the analytic value, the centred quotient, both
    one-sided quotients and the relative error.
    """
    if step <= 0:
        raise InvalidArgument("finite-difference step must be positive")
    u = as_array(u)
    v = np.asarray(v, dtype=float)
    if v[0] != 0 or v[-1] != 0:
        raise InvalidArgument("test field must vanish at the endpoints")
    weights = trapezoid_weights(u.size, grid.h_x)
    sol0 = solve(model, u, profile, params, grid)
    g = potential_force(model, sol0, u, profile, params).g
    analytic = float(weights @ (g * v))
    try:
        e_plus = solve(model, u + step * v, profile, params, grid).energy
        e_minus = solve(model, u - step * v, profile, params, grid).energy
    except DegenerateDomain:
        raise
    fd = (e_plus - e_minus) / (2 * step)
    rel = abs(analytic - fd) / max(abs(fd), np.finfo(float).eps)
    return {
        "analytic": analytic,
        "fd": fd,
        "fd_forward": (e_plus - sol0.energy) / step,
        "fd_backward": (sol0.energy - e_minus) / step,
        "rel_err": rel,
    }
