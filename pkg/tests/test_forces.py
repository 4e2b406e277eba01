import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memsx.core import InvalidArgument, ModelParams, PermittivityProfile, SingularForce, build_grid, n_delta
from memsx.forces import (
    force_membrane,
    force_pelesko,
    force_reduced,
    force_robin,
    force_transmission,
    reduced_energy,
    reduced_gap,
    seeded_test_fields,
    sine_field,
    transmission_parts,
    validate_shape_derivative,
)
from memsx.potential import solve, solve_membrane, solve_robin, solve_transmission

GRID = build_grid(63, 17, 9)


def test_flat_plate_forces_equal_local_force():
    # an x-independent capacitor pulls with 1/2 (1 + u + N)^-2
    u0 = -0.25
    u = np.full(GRID.x.size, u0)
    p = ModelParams(delta=0.2, eps=0.7)
    prof = PermittivityProfile.constant(2.0)
    g_m = force_membrane(solve_membrane(u, p, GRID), u, p).g
    assert np.allclose(g_m, 0.5 / (1 + u0) ** 2, atol=1e-10)
    g_r = force_robin(solve_robin(u, prof, p, GRID), u, prof, p).g
    assert np.allclose(g_r, 0.5 / (1 + u0 + 0.5) ** 2, atol=1e-10)
    g_t = force_transmission(solve_transmission(u, prof, p, GRID), u, prof, p).g
    assert np.allclose(g_t, 0.5 / (1 + u0 + 0.1) ** 2, atol=1e-9)


def test_pelesko_is_top_trace_only():
    p = ModelParams(delta=0.1, eps=0.3)
    prof = PermittivityProfile.affine(2.0, 4.0)
    u = -0.3 * np.sin(np.pi * GRID.x)
    sol = solve_transmission(u, prof, p, GRID)
    parts = transmission_parts(sol, u, prof, p)
    full = force_transmission(sol, u, prof, p).g
    top = force_pelesko(sol, u, prof, p).g
    rest = parts["vertical"] + parts["jump_tangential"] + parts["jump_normal"]
    assert np.max(np.abs(full - top - rest)) <= 1e-12
    assert np.max(np.abs(parts["vertical"])) > 0


def test_force_rejects_mismatched_solution():
    p = ModelParams()
    u = -0.3 * np.sin(np.pi * GRID.x)
    sol = solve_membrane(u, p, GRID)
    with pytest.raises(InvalidArgument):
        force_membrane(sol, 0.5 * u, p)
    with pytest.raises(InvalidArgument):
        force_robin(sol, u, PermittivityProfile.constant(2.0), p)


def test_shape_derivative_small_grid():
    grid = build_grid(63, 17, 9)
    u = -0.3 * np.sin(np.pi * grid.x)
    p = ModelParams(delta=0.1, eps=0.3)
    prof = PermittivityProfile.affine(2.0, 3.0)
    for v in seeded_test_fields(grid, seed=7, count=2):
        for model in ("transmission", "membrane", "robin"):
            res = validate_shape_derivative(u, v, model, p, grid, prof)
            assert res["rel_err"] < 2e-3
            # the one-sided quotients bracket the centred one up to O(s)
            assert abs(res["fd_forward"] - res["fd"]) < 1e-3 * abs(res["fd"])


def test_shape_derivative_argument_checks():
    u = -0.3 * np.sin(np.pi * GRID.x)
    v = sine_field(GRID, 1)
    with pytest.raises(InvalidArgument):
        validate_shape_derivative(u, v, "membrane", ModelParams(), GRID, step=0.0)
    w = v.copy()
    w[0] = 0.1
    with pytest.raises(InvalidArgument):
        validate_shape_derivative(u, w, "membrane", ModelParams(), GRID)


def test_seeded_fields_are_reproducible():
    a = seeded_test_fields(GRID, 3)
    b = seeded_test_fields(GRID, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(x[0] == 0 and x[-1] == 0 for x in a)


def test_reduced_gaps():
    x = GRID.x
    prof = PermittivityProfile.constant(4.0)
    p = ModelParams(delta=0.2)
    assert np.allclose(reduced_gap("transmission", prof, p, x), 0.05)
    assert np.allclose(reduced_gap("robin", prof, p, x), 0.25)
    assert np.all(reduced_gap("classical", None, p, x) == 0)
    with pytest.raises(InvalidArgument):
        reduced_gap("other", prof, p, x)


def test_classical_force_singular_at_touchdown():
    u = -np.sin(np.pi * GRID.x)
    with pytest.raises(SingularForce):
        force_reduced(u, "classical", ModelParams())
    g = force_reduced(u, "transmission", ModelParams(), n_gap=0.25).g
    assert np.max(g) == pytest.approx(0.5 / 0.25**2)


@given(
    interior=st.lists(st.floats(-0.99, 2.0), min_size=4, max_size=30),
    c=st.floats(0.0, 1.0),
)
def test_reduced_force_is_a_shift(interior, c):
    u = np.array([0.0, *interior, 0.0])
    g_c = force_reduced(u, "transmission", ModelParams(), n_gap=c).g
    g_0 = force_reduced(u + c, "classical", ModelParams()).g
    assert np.allclose(g_c, g_0, rtol=1e-14, atol=0)


@given(
    interior=st.lists(st.floats(-0.9, 1.0), min_size=4, max_size=30),
    slope=st.floats(0.0, 5.0),
)
def test_reduced_force_depends_on_profile_only_through_gap(interior, slope):
    u = np.array([0.0, *interior, 0.0])
    x = np.linspace(0, 1, u.size)
    p = ModelParams(delta=0.1)
    prof = PermittivityProfile.affine(2.0, slope)
    same_gap = PermittivityProfile.constant(0.1 / n_delta(prof, 0.1, x=x[:1])[0])
    a = force_reduced(u, "transmission", p, prof).g
    b = force_reduced(u, "transmission", p, same_gap).g
    assert np.allclose(a, b, rtol=1e-12)


def test_reduced_energy_derivative_is_force():
    x = GRID.x
    u = -0.3 * np.sin(np.pi * x)
    v = sine_field(GRID, 2, 0.5)
    h, s = GRID.h_x, 1e-6
    fd = (reduced_energy(u + s * v, 0.1, h) - reduced_energy(u - s * v, 0.1, h)) / (2 * s)
    g = force_reduced(u, "transmission", ModelParams(), n_gap=0.1).g
    w = np.full(x.size, h)
    w[0] = w[-1] = h / 2
    assert fd == pytest.approx(float(w @ (g * v)), rel=1e-8)


def test_membrane_force_positive():
    u = -0.3 * np.sin(np.pi * GRID.x)
    sol = solve("membrane", u, None, ModelParams(), GRID)
    assert np.all(force_membrane(sol, u, ModelParams()).g > 0)
