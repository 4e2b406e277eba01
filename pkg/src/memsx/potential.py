"""Electrostatic potential on the deflection-dependent device domain.

The gap layer {-1 < z < u(x)} is mapped to the unit square by
eta = (1 + z) / (1 + u(x)) and the plate layer {u < z < u + delta} by
zeta = (z - u(x)) / delta.  On the resulting tensor grids the quadrilaterals
are exactly the images of bilinear elements, so we assemble the Dirichlet
energy with isoparametric Q1 elements (2x2 Gauss) and minimise it.  The
interface row is shared by both layers, which makes the transmission
conditions (and the Robin condition of the thin conducting plate) natural
conditions of the discrete energy.

Three models are supported:

* ``transmission``: both layers, permittivity 1 / sigma*, psi = 1 on top.
* ``membrane``:     gap layer only, psi = 1 on the plate.
* ``robin``:        gap layer only, with the surface energy
                    1/2 int sigma*(x,0) (psi - 1)^2 (1 + eps^2 u_x^2) dx.

Lateral (x = 0, 1) Dirichlet data is the one-dimensional capacitor profile
of the respective model evaluated with the local deflection, which is the
exact solution for x-independent configurations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    DegenerateDomain,
    Grid,
    InvalidArgument,
    InvalidProfile,
    ModelParams,
    PermittivityProfile,
    SolverFailure,
    as_array,
)

MODELS = ("transmission", "membrane", "robin")

_GP = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass
class PotentialSolution:
    model: str
    psi1: np.ndarray  # (n_x + 2, n_z1), gap layer on the (x, eta) grid
    psi2: np.ndarray | None  # (n_x + 2, n_z2), plate layer on the (x, zeta) grid
    energy: float
    u: np.ndarray
    grid: Grid
    eps: float
    delta: float
    profile: PermittivityProfile | None = None
    iterations: int = 0

    @property
    def z1(self) -> np.ndarray:
        """Physical z of the gap-layer nodes."""
        return -1.0 + self.grid.eta[None, :] * (1.0 + self.u[:, None])

    @property
    def z2(self) -> np.ndarray | None:
        if self.psi2 is None:
            return None
        return self.u[:, None] + self.delta * self.grid.zeta[None, :]

    def check_max_principle(self, tol: float = 0.05) -> bool:
        vals = [self.psi1] if self.psi2 is None else [self.psi1, self.psi2]
        return all(np.min(v) >= -tol and np.max(v) <= 1 + tol for v in vals)

    def rows(self):
        """(x, z_physical, layer, psi) rows for CSV export."""
        x = self.grid.x
        out = []
        for layer, z, psi in ((1, self.z1, self.psi1), (2, self.z2, self.psi2)):
            if psi is None:
                continue
            for i in range(psi.shape[0]):
                for j in range(psi.shape[1]):
                    if layer == 2 and j == 0:
                        continue  # interface row already listed with layer 1
                    out.append((x[i], z[i, j], layer, psi[i, j]))
        return out


def _check_u(u, grid: Grid, params: ModelParams):
    u = as_array(u)
    if u.shape != (grid.n_x + 2,):
        raise InvalidArgument(f"deflection has {u.size} nodes, grid expects {grid.n_x + 2}")
    if not np.all(np.isfinite(u)):
        raise InvalidArgument("deflection must be finite")
    if np.min(u) < -1.0 + params.gap_tol:
        raise DegenerateDomain(
            f"min(u) = {np.min(u):.3e} is within gap_tol={params.gap_tol:g} of the ground plate"
        )
    return u


def _node_heights(u, grid: Grid, delta: float, two_layers: bool):
    """Physical z of every node, shape (n_x + 2, n_rows)."""
    z1 = -1.0 + grid.eta[None, :] * (1.0 + u[:, None])
    if not two_layers:
        return z1
    z2 = u[:, None] + delta * grid.zeta[None, 1:]
    return np.hstack([z1, z2])


def _assemble(z, grid: Grid, eps: float, sigma_elem):
    """Stiffness matrix of 1/2 int sigma (eps^2 psi_x^2 + psi_z^2).

    ``z`` holds nodal heights (m, nr); ``sigma_elem(xg, jrow, eta_g)`` returns
    the permittivity at Gauss points of the element rows ``jrow``.
    """
    m, nr = z.shape
    h = grid.h_x
    x = grid.x
    ii, jj = np.meshgrid(np.arange(m - 1), np.arange(nr - 1), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    za = z[ii, jj]
    zb = z[ii + 1, jj]
    zc = z[ii + 1, jj + 1]
    zd = z[ii, jj + 1]
    ke = np.zeros((ii.size, 4, 4))
    for xi in _GP:
        for et in _GP:
            dn_xi = np.array([-(1 - et), 1 - et, et, -et])
            dn_et = np.array([-(1 - xi), -xi, xi, 1 - xi])
            z_xi = (1 - et) * (zb - za) + et * (zc - zd)
            z_et = (1 - xi) * (zd - za) + xi * (zc - zb)
            if np.any(z_et <= 0):
                raise DegenerateDomain("inverted element in the mapped grid")
            phi_z = dn_et[None, :] / z_et[:, None]
            phi_x = (dn_xi[None, :] - z_xi[:, None] * phi_z) / h
            sig = sigma_elem(x[ii] + h * xi, jj, et)
            wdet = 0.25 * h * z_et * sig
            ke += wdet[:, None, None] * (
                eps**2 * phi_x[:, :, None] * phi_x[:, None, :]
                + phi_z[:, :, None] * phi_z[:, None, :]
            )
    nodes = np.stack(
        [ii * nr + jj, (ii + 1) * nr + jj, (ii + 1) * nr + jj + 1, ii * nr + jj + 1], axis=1
    )
    rows = np.repeat(nodes, 4, axis=1).ravel()
    cols = np.tile(nodes, (1, 4)).ravel()
    return sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(m * nr, m * nr))


def _robin_surface(u, grid: Grid, eps: float, sigma_top):
    """Mass matrix, load and constant of 1/2 int sigma (psi - 1)^2 (1 + eps^2 u_x^2)."""
    h = grid.h_x
    x = grid.x
    m = x.size
    ux = np.diff(u) / h
    stretch = 1.0 + eps**2 * ux**2
    mass = np.zeros((m - 1, 2, 2))
    load = np.zeros((m - 1, 2))
    const = 0.0
    for xi in _GP:
        n = np.array([1 - xi, xi])
        w = 0.5 * h * stretch * sigma_top(x[:-1] + h * xi)
        mass += w[:, None, None] * np.outer(n, n)[None]
        load += w[:, None] * n[None, :]
        const += np.sum(w)
    return mass, load, const


def _solve_spd(a, rhs, params: ModelParams):
    if params.linear_solver == "direct":
        sol = spla.spsolve(a.tocsc(), rhs)
        iters = 1
    else:
        diag = a.diagonal()
        prec = spla.LinearOperator(a.shape, matvec=lambda v: v / diag)
        maxiter = int(50 * np.sqrt(a.shape[0])) + 1
        count = [0]

        def _cb(_):
            count[0] += 1

        sol, info = spla.cg(a, rhs, rtol=params.tol_linear, atol=0.0, maxiter=maxiter, M=prec, callback=_cb)
        iters = count[0]
        if info != 0:
            res = np.linalg.norm(a @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
            raise SolverFailure(f"CG did not converge in {maxiter} iterations", residual=res)
    if not np.all(np.isfinite(sol)):
        raise SolverFailure("linear solve produced non-finite values")
    return sol, iters


def _dirichlet_solve(k, psi, fixed, params, extra_mass=None, extra_load=None):
    """Minimise 1/2 psi^T (K + M) psi - b^T psi over the free nodes."""
    a = k if extra_mass is None else k + extra_mass
    free = ~fixed
    rhs = -(a[free][:, fixed] @ psi[fixed])
    if extra_load is not None:
        rhs = rhs + extra_load[free]
    sol, iters = _solve_spd(a[free][:, free], rhs, params)
    psi = psi.copy()
    psi[free] = sol
    return psi, iters


def _lateral_transmission(u_b, x_b, profile, delta, grid: Grid):
    n_b = profile.inv_integral(x_b, 0.0, delta)
    amp = 1.0 / (1.0 + u_b + n_b)
    col1 = amp * grid.eta * (1.0 + u_b)
    col2 = 1.0 - amp * profile.inv_integral(x_b, delta * grid.zeta[1:], delta)
    return np.concatenate([col1, col2])


def solve_transmission(u, profile: PermittivityProfile, params: ModelParams, grid: Grid) -> PotentialSolution:
    """Potential of the full two-layer device for the deflection ``u``."""
    if not params.delta > 0:
        raise InvalidArgument("transmission model needs delta > 0; use solve_membrane for delta = 0")
    u = _check_u(u, grid, params)
    profile.check(params.delta)
    delta, eps = params.delta, params.eps
    n1 = grid.n_z1
    z = _node_heights(u, grid, delta, two_layers=True)
    m, nr = z.shape
    zeta = grid.zeta

    def sigma_elem(xg, jrow, et):
        sig = np.ones(xg.shape)
        upper = jrow >= n1 - 1
        k = jrow[upper] - (n1 - 1)
        s = delta * ((1 - et) * zeta[k] + et * zeta[k + 1])
        sig[upper] = profile(xg[upper], s)
        return sig

    k = _assemble(z, grid, eps, sigma_elem)
    psi = np.zeros((m, nr))
    fixed = np.zeros((m, nr), dtype=bool)
    fixed[:, 0] = True
    fixed[:, -1] = True
    psi[:, -1] = 1.0
    fixed[0, :] = fixed[-1, :] = True
    psi[0, :] = _lateral_transmission(u[0], 0.0, profile, delta, grid)
    psi[-1, :] = _lateral_transmission(u[-1], 1.0, profile, delta, grid)
    flat, iters = _dirichlet_solve(k, psi.ravel(), fixed.ravel(), params)
    energy = -0.5 * float(flat @ (k @ flat))
    psi = flat.reshape(m, nr)
    return PotentialSolution(
        model="transmission",
        psi1=psi[:, :n1].copy(),
        psi2=psi[:, n1 - 1:].copy(),
        energy=energy,
        u=u.copy(),
        grid=grid,
        eps=eps,
        delta=delta,
        profile=profile,
        iterations=iters,
    )


def solve_membrane(u, params: ModelParams, grid: Grid) -> PotentialSolution:
    """Potential below a zero-thickness plate held at psi = 1."""
    u = _check_u(u, grid, params)
    eps = params.eps
    z = _node_heights(u, grid, 0.0, two_layers=False)
    m, nr = z.shape
    k = _assemble(z, grid, eps, lambda xg, jrow, et: np.ones(xg.shape))
    psi = np.zeros((m, nr))
    fixed = np.zeros((m, nr), dtype=bool)
    fixed[:, 0] = fixed[:, -1] = True
    psi[:, -1] = 1.0
    fixed[0, :] = fixed[-1, :] = True
    psi[0, :] = grid.eta
    psi[-1, :] = grid.eta
    flat, iters = _dirichlet_solve(k, psi.ravel(), fixed.ravel(), params)
    energy = -0.5 * float(flat @ (k @ flat))
    return PotentialSolution(
        model="membrane",
        psi1=flat.reshape(m, nr),
        psi2=None,
        energy=energy,
        u=u.copy(),
        grid=grid,
        eps=eps,
        delta=0.0,
        iterations=iters,
    )


def solve_robin(u, profile: PermittivityProfile, params: ModelParams, grid: Grid) -> PotentialSolution:
    """Potential of the thin, highly conducting plate limit (Robin condition)."""
    u = _check_u(u, grid, params)
    x = grid.x
    sig_nodes = profile(x, 0.0)
    if np.any(sig_nodes <= 0) or profile.sigma0 <= 0:
        raise InvalidProfile("sigma*(x, 0) must be positive")
    eps = params.eps
    z = _node_heights(u, grid, 0.0, two_layers=False)
    m, nr = z.shape
    k = _assemble(z, grid, eps, lambda xg, jrow, et: np.ones(xg.shape))

    mass_e, load_e, const = _robin_surface(u, grid, eps, lambda xs: profile(xs, 0.0))
    top = np.arange(m) * nr + (nr - 1)
    pair = np.stack([top[:-1], top[1:]], axis=1)
    rows = np.repeat(pair, 2, axis=1).ravel()
    cols = np.tile(pair, (1, 2)).ravel()
    mass = sp.csr_matrix((mass_e.ravel(), (rows, cols)), shape=k.shape)
    load = np.zeros(m * nr)
    np.add.at(load, pair.ravel(), load_e.ravel())

    psi = np.zeros((m, nr))
    fixed = np.zeros((m, nr), dtype=bool)
    fixed[:, 0] = True
    fixed[0, :] = fixed[-1, :] = True
    for col, ub, sb in ((0, u[0], sig_nodes[0]), (-1, u[-1], sig_nodes[-1])):
        psi[col, :] = grid.eta * (1.0 + ub) / (1.0 + ub + 1.0 / sb)
    flat, iters = _dirichlet_solve(k, psi.ravel(), fixed.ravel(), params, mass, load)
    quad = 0.5 * float(flat @ (k @ flat)) + 0.5 * float(flat @ (mass @ flat)) - float(load @ flat) + 0.5 * const
    return PotentialSolution(
        model="robin",
        psi1=flat.reshape(m, nr),
        psi2=None,
        energy=-quad,
        u=u.copy(),
        grid=grid,
        eps=eps,
        delta=0.0,
        profile=profile,
        iterations=iters,
    )


def solve(model: str, u, profile, params: ModelParams, grid: Grid) -> PotentialSolution:
    if model == "transmission":
        return solve_transmission(u, profile, params, grid)
    if model == "membrane":
        return solve_membrane(u, params, grid)
    if model == "robin":
        return solve_robin(u, profile, params, grid)
    raise InvalidArgument(f"unknown potential model {model!r}")


def flat_capacitor(u0: float, n_gap: float, z):
    """Closed-form gap-layer potential A (1 + z) of an x-independent device."""
    return (1.0 + np.asarray(z)) / (1.0 + u0 + n_gap)
