"""Shared types for the dimensionless MEMS models.

Everything lives on the rescaled plate D = (0, 1): the ground plate sits at
z = -1, the bottom of the elastic plate at z = u(x) and its top at
z = u(x) + delta.  Permittivities are measured in units of the gap medium,
so the gap layer always has permittivity 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import simpson


class MemsxError(Exception):
    """Base class for all errors raised by memsx."""


class InvalidArgument(MemsxError, ValueError):
    pass


class InvalidProfile(MemsxError, ValueError):
    pass


class DegenerateDomain(MemsxError):
    """The gap layer collapses (u too close to the ground plate)."""


class SolverFailure(MemsxError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularForce(MemsxError):
    """Classical force evaluated at touchdown."""


OBSTACLE_MODES = ("projection", "penalty")


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless constants of the plate/potential system.

    gamma2 is the inertia coefficient, beta the bending stiffness, tau the
    tension, lam the voltage parameter, delta the relative plate thickness and
    eps the aspect ratio.
    """

    gamma2: float = 0.0
    beta: float = 0.0
    tau: float = 1.0
    lam: float = 0.0
    delta: float = 0.1
    eps: float = 0.2
    penalty_s: float = 1e6
    obstacle_mode: str = "projection"
    tol_linear: float = 1e-10
    tol_newton: float = 1e-10
    seed: int = 0
    gap_tol: float = 1e-6
    u_max: float = 4.0
    contact_tol: float = 1e-9
    steady_tol: float = 1e-8
    quad_points: int = 33
    linear_solver: str = "direct"

    def __post_init__(self):
        for name in ("gamma2", "beta", "tau", "lam", "delta", "eps"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidArgument(f"{name} must be finite and >= 0, got {value}")
        if not self.penalty_s > 0:
            raise InvalidArgument("penalty_s must be > 0")
        if self.obstacle_mode not in OBSTACLE_MODES:
            raise InvalidArgument(f"obstacle_mode must be one of {OBSTACLE_MODES}")
        if self.linear_solver not in ("direct", "cg"):
            raise InvalidArgument("linear_solver must be 'direct' or 'cg'")
        if self.quad_points < 2:
            raise InvalidArgument("quad_points must be >= 2")
        if not self.u_max > 0:
            raise InvalidArgument("u_max must be > 0")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


PROFILE_KINDS = ("constant", "affine", "separable")


@dataclass(frozen=True)
class PermittivityProfile:
    """Plate permittivity sigma*(x, s) for x in [0, 1], s in [0, delta].

    Built-in families:

    * ``constant``:  base
    * ``affine``:    base + slope * s
    * ``separable``: (base + slope * s) * (1 + x_amp * sin(pi x))

    ``scale`` multiplies the whole profile; it is how the thin-plate study
    builds the O(d) layer permittivity.
    """

    kind: str = "constant"
    base: float = 1.0
    slope: float = 0.0
    x_amp: float = 0.0
    scale: float = 1.0
    sigma0: float | None = None
    s_max: float = 1.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise InvalidProfile(f"unknown profile kind {self.kind!r}")
        if self.kind == "constant" and (self.slope != 0 or self.x_amp != 0):
            raise InvalidProfile("constant profile takes no slope/x_amp")
        if self.kind == "affine" and self.x_amp != 0:
            raise InvalidProfile("affine profile takes no x_amp")
        if not self.scale > 0:
            raise InvalidProfile("scale must be > 0")
        if self.sigma0 is None:
            object.__setattr__(self, "sigma0", self._sampled_min())
        if not self.sigma0 > 0:
            raise InvalidProfile(f"sigma0 must be > 0, got {self.sigma0}")
        if self._sampled_min() < self.sigma0 * (1 - 1e-12):
            raise InvalidProfile("profile drops below its declared lower bound sigma0")

    @classmethod
    def constant(cls, value, **kw):
        return cls(kind="constant", base=value, **kw)

    @classmethod
    def affine(cls, base, slope, **kw):
        return cls(kind="affine", base=base, slope=slope, **kw)

    @classmethod
    def separable(cls, base, slope=0.0, x_amp=0.0, **kw):
        return cls(kind="separable", base=base, slope=slope, x_amp=x_amp, **kw)

    def scaled(self, factor: float) -> "PermittivityProfile":
        return replace(self, scale=self.scale * factor, sigma0=self.sigma0 * factor)

    def _raw(self, x, s):
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        val = self.base + self.slope * s
        if self.kind == "separable":
            val = val * (1.0 + self.x_amp * np.sin(np.pi * x))
        return self.scale * np.broadcast_to(val, np.broadcast(x, s).shape)

    def __call__(self, x, s):
        return self._raw(x, s)

    def ds(self, x, s):
        """Analytic derivative with respect to s."""
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        val = np.full(np.broadcast(x, s).shape, self.slope * self.scale)
        if self.kind == "separable":
            val = val * (1.0 + self.x_amp * np.sin(np.pi * x))
        return val

    def inv_integral(self, x, s0, s1):
        """Closed form of int_{s0}^{s1} dq / sigma*(x, q)."""
        x = np.asarray(x, dtype=float)
        s0 = np.asarray(s0, dtype=float)
        s1 = np.asarray(s1, dtype=float)
        if self.slope == 0:
            val = (s1 - s0) / self.base
        else:
            lower = self.base + self.slope * s0
            val = np.log1p(self.slope * (s1 - s0) / lower) / self.slope
        if self.kind == "separable":
            val = val / (1.0 + self.x_amp * np.sin(np.pi * x))
        return np.broadcast_to(val, np.broadcast(x, s0, s1).shape) / self.scale

    def _sampled_min(self):
        xs, ss = np.meshgrid(np.linspace(0, 1, 41), np.linspace(0, self.s_max, 41))
        return float(np.min(self._raw(xs, ss)))

    @property
    def constant_in_s(self) -> bool:
        return self.slope == 0

    @property
    def nondecreasing_in_s(self) -> bool:
        return self.slope >= 0

    @property
    def at_least_one(self) -> bool:
        return self._sampled_min() >= 1.0

    def check(self, delta: float, n: int = 33):
        """Spot-check positivity on D x [0, delta]; raises InvalidProfile."""
        xs, ss = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, delta, n))
        vals = self._raw(xs, ss)
        if not np.all(np.isfinite(vals)) or np.min(vals) <= 0:
            raise InvalidProfile("permittivity must be positive")
        if np.min(vals) < self.sigma0 * (1 - 1e-12):
            raise InvalidProfile("permittivity below declared sigma0")


def eval_permittivity(profile: PermittivityProfile, x, s, delta: float | None = None):
    x_arr = np.asarray(x, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    upper = profile.s_max if delta is None else delta
    if np.any((x_arr < 0) | (x_arr > 1)):
        raise InvalidArgument("x must lie in [0, 1]")
    if np.any((s_arr < 0) | (s_arr > upper)):
        raise InvalidArgument(f"s must lie in [0, {upper}]")
    val = profile(x_arr, s_arr)
    if np.any(val <= 0):
        raise InvalidProfile("permittivity must be positive")
    return val if val.ndim else float(val)


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grids for the plate and the two mapped layers.

    n_x counts interior plate nodes (h_x = 1/(n_x+1)); n_z1 and n_z2 count
    all vertical nodes of the mapped gap layer (eta in [0, 1]) and plate
    layer (zeta in [0, 1]).  eta = 1 and zeta = 0 are the same interface row.
    """

    n_x: int
    n_z1: int
    n_z2: int

    @property
    def h_x(self) -> float:
        return 1.0 / (self.n_x + 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_x + 2)

    @property
    def eta(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_z1)

    @property
    def zeta(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_z2)


def build_grid(n_x: int, n_z1: int, n_z2: int) -> Grid:
    for name, n in (("n_x", n_x), ("n_z1", n_z1), ("n_z2", n_z2)):
        if int(n) != n or n < 4:
            raise InvalidArgument(f"{name} must be an integer >= 4, got {n}")
    return Grid(int(n_x), int(n_z1), int(n_z2))


def n_delta(profile: PermittivityProfile, delta: float, quad_points: int = 33, x=None):
    """Integrated inverse permittivity  int_0^delta dq / sigma*(x, q).

    Evaluated at the points ``x`` (default: 65 equispaced points, but callers
    normally pass the plate nodes) by composite Simpson.
    """
    if delta < 0:
        raise InvalidArgument("delta must be >= 0")
    x = np.linspace(0, 1, 65) if x is None else np.asarray(x, dtype=float)
    if delta == 0:
        return np.zeros_like(x)
    if quad_points < 2:
        raise InvalidArgument("quad_points must be >= 2")
    q = np.linspace(0.0, delta, quad_points)
    sig = profile(x[:, None], q[None, :])
    if np.any(sig <= 0):
        raise InvalidProfile("permittivity must be positive")
    return simpson(1.0 / sig, x=q, axis=1)


def robin_gap(profile: PermittivityProfile, x) -> np.ndarray:
    """1/sigma*(x, 0): the reduced gap correction of the Robin model."""
    sig = profile(np.asarray(x, dtype=float), 0.0)
    if np.any(sig <= 0):
        raise InvalidProfile("permittivity must be positive")
    return 1.0 / sig


@dataclass(frozen=True)
class DeflectionField:
    """Nodal plate deflection including both (pinned) endpoints."""

    values: np.ndarray
    u_max: float = 4.0

    def __post_init__(self):
        u = np.array(self.values, dtype=float)
        u.setflags(write=False)
        object.__setattr__(self, "values", u)
        if u.ndim != 1 or u.size < 6:
            raise InvalidArgument("deflection needs at least 6 nodes (4 interior)")
        if not np.all(np.isfinite(u)):
            raise InvalidArgument("deflection must be finite")
        if u[0] != 0 or u[-1] != 0:
            raise InvalidArgument("deflection must vanish at both endpoints")
        if np.min(u) < -1:
            raise InvalidArgument("deflection penetrates the ground plate (u < -1)")
        if np.max(u) >= self.u_max:
            raise InvalidArgument(f"deflection exceeds u_max={self.u_max}")

    @classmethod
    def from_function(cls, grid: Grid, fn, **kw):
        return cls(fn(grid.x), **kw)

    @property
    def n_x(self) -> int:
        return self.values.size - 2


def as_array(u) -> np.ndarray:
    if isinstance(u, DeflectionField):
        return u.values
    return np.asarray(u, dtype=float)


def trapezoid_weights(n_nodes: int, h: float) -> np.ndarray:
    w = np.full(n_nodes, h)
    w[0] = w[-1] = h / 2
    return w
