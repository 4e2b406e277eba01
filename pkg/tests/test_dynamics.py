import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memsx.core import InvalidArgument, ModelParams, PermittivityProfile, build_grid
from memsx.dynamics import (
    Integrator,
    PlateState,
    PotentialForce,
    ReducedForce,
    StepMatrix,
    admissible,
    extract_reaction,
    mechanical_energy,
    simulate,
    stiffness_matrix,
    step,
)


def nodes(n):
    return np.linspace(0.0, 1.0, n + 2)


@pytest.mark.parametrize(
    "beta,tau,shape,clamped,exact",
    [
        # continuum values of 1/2 int (beta u''^2 + tau u'^2) for a = 0.1
        (0.0, 1.0, "sin", None, np.pi**2 * 0.01 / 4),
        (1.0, 0.0, "sin", False, np.pi**4 * 0.01 / 4),
        (1.0, 0.0, "sin2", True, np.pi**4 * 0.01),
        (2.0, 3.0, "sin2", True, 2 * np.pi**4 * 0.01 + 3 * np.pi**2 * 0.01 / 4),
    ],
)
def test_mechanical_energy_second_order(beta, tau, shape, clamped, exact):
    errs = []
    for n in (31, 63, 127):
        x = nodes(n)
        u = 0.1 * (np.sin(np.pi * x) if shape == "sin" else np.sin(np.pi * x) ** 2)
        errs.append(abs(mechanical_energy(u, ModelParams(beta=beta, tau=tau), clamped) - exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_stiffness_spd():
    for beta, tau in ((0, 1), (1, 0), (1, 1)):
        k = stiffness_matrix(20, 1 / 21, beta, tau)
        assert np.allclose(k, k.T)
        assert np.min(np.linalg.eigvalsh(k)) > 0


def test_mechanical_energy_below_obstacle_is_infinite():
    u = np.zeros(10)
    u[4] = -1.5
    assert mechanical_energy(u, ModelParams()) == np.inf


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 200.0))
def test_obstacle_solve_kkt(seed, c0):
    rng = np.random.default_rng(seed)
    n = 15
    k = stiffness_matrix(n, 1 / (n + 1), 0.5, 1.0)
    mat = StepMatrix(k, c0)
    rhs = rng.normal(scale=400.0, size=n)
    u, mult = mat.solve_obstacle(rhs)
    a = c0 * np.eye(n) + k
    assert np.all(u >= -1 - 1e-12)
    assert np.all(mult >= 0)
    assert np.allclose(a @ u - rhs, mult, atol=1e-8 * (1 + np.max(np.abs(rhs))))
    assert np.max(np.abs(mult * (u + 1))) < 1e-8 * (1 + np.max(np.abs(rhs)))


def test_projection_keeps_u_above_obstacle():
    n = 31
    p = ModelParams(lam=12.0)
    fm = ReducedForce.constant_gap(nodes(n), p, 0.25)
    tr = simulate(PlateState.at_rest(n), fm, p, t_end=3.0, dt=1e-3, sample_every=1)
    assert min(tr.min_u) >= -1.0
    assert tr.zipped_counts[-1] > 0


def test_penalty_overshoot_bound():
    # explicit Heaviside push: the per-step overshoot is at most dt*lam*max(g),
    # which is within lam*max(g)/penalty_s as long as penalty_s*dt <= 1
    n = 31
    dt = 1e-4
    p = ModelParams(lam=12.0, obstacle_mode="penalty", penalty_s=1.0 / dt)
    fm = ReducedForce.constant_gap(nodes(n), p, 0.25)
    tr = simulate(PlateState.at_rest(n), fm, p, t_end=0.6, dt=dt, sample_every=1)
    bound = p.lam * 0.5 / 0.25**2 / p.penalty_s
    assert min(tr.min_u) >= -1.0 - bound
    assert min(tr.min_u) < -1.0  # the penalty does let it through a little


@pytest.mark.parametrize("variant,gap", [("classical", None), ("transmission", 0.1), ("robin", None)])
def test_gradient_flow_dissipates(variant, gap):
    n = 31
    x = nodes(n)
    p = ModelParams(lam=2.0, delta=0.1)
    prof = PermittivityProfile.constant(2.0)
    fm = ReducedForce(variant, x, p, prof, n_gap=gap)
    tr = simulate(PlateState.at_rest(n), fm, p, t_end=0.5, record_steps=True, stop_on_steady=False)
    e = np.array([tr.total[0], *tr.step_energies])
    assert np.all(np.diff(e) <= 1e-8)


def test_potential_force_flow_dissipates():
    grid = build_grid(15, 6, 4)
    p = ModelParams(lam=1.0, eps=0.3)
    fm = PotentialForce("membrane", grid, p)
    h = grid.h_x
    tr = simulate(PlateState.at_rest(15), fm, p, t_end=60 * h**2 / 4, record_steps=True, stop_on_steady=False)
    e = np.array([tr.total[0], *tr.step_energies])
    assert np.all(np.diff(e) <= 1e-8)


def test_inertial_free_vibration_decays():
    n = 31
    x = nodes(n)
    p = ModelParams(gamma2=0.5, lam=0.0)
    fm = ReducedForce("classical", x, p)
    init = PlateState(0.2 * np.sin(np.pi * x), np.zeros_like(x))
    tr = simulate(init, fm, p, t_end=5.0, dt=1e-3, record_steps=True, stop_on_steady=False)
    e = np.array([tr.total[0], *tr.step_energies])
    assert np.all(np.diff(e) <= 1e-10)
    assert e[-1] < 0.05 * e[0]


def test_inelastic_contact_with_inertia():
    n = 31
    p = ModelParams(gamma2=0.1, lam=12.0)
    fm = ReducedForce.constant_gap(nodes(n), p, 0.25)
    integ = Integrator(n, 1e-3, fm, p)
    state = PlateState.at_rest(n, p.gamma2)
    for _ in range(3000):
        state, zeta = integ.step(state)
        assert np.min(state.u) >= -1.0
        hit = zeta < 0
        assert np.all(state.w[hit] == 0.0)
        assert np.all(zeta <= 0)
    assert np.any(state.u <= -1.0 + 1e-12)


def test_classical_touchdown_terminates():
    n = 31
    p = ModelParams(lam=10.0)
    fm = ReducedForce("classical", nodes(n), p)
    tr = simulate(PlateState.at_rest(n), fm, p, t_end=5.0, dt=1e-3)
    assert tr.terminated and tr.touchdown_time is not None
    assert tr.min_u[-1] == -1.0
    assert tr.times[-1] < 5.0


def test_transmission_matches_shifted_classical_before_contact():
    # identical force values under u -> u + c until touchdown
    n = 31
    p = ModelParams(lam=2.0)
    x = nodes(n)
    c = 0.1
    a = ReducedForce.constant_gap(x, p, c)
    b = ReducedForce("classical", x, p)
    u = -0.4 * np.sin(np.pi * x)
    assert np.allclose(a.evaluate(u)[0], b.evaluate(u + c)[0], rtol=1e-14)


def test_zero_voltage_stays_at_rest():
    n = 15
    p = ModelParams(lam=0.0)
    fm = ReducedForce("classical", nodes(n), p)
    tr = simulate(PlateState.at_rest(n), fm, p, t_end=1.0)
    assert np.all(tr.final == 0.0)
    assert tr.steady
    r = extract_reaction(tr.final, fm, p)
    assert np.all(r.zeta == 0.0)


def test_step_wrapper_and_checks():
    n = 15
    p = ModelParams(lam=1.0)
    fm = ReducedForce("classical", nodes(n), p)
    s = step(PlateState.at_rest(n), 1e-3, fm, p)
    assert s.t == pytest.approx(1e-3) and np.all(s.u[1:-1] < 0)
    with pytest.raises(InvalidArgument):
        Integrator(n, 0.0, fm, p)
    with pytest.raises(InvalidArgument):
        admissible(np.full(n + 2, -2.0), p)
