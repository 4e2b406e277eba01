import numpy as np
import pytest

from memsx.core import InvalidArgument, ModelParams, PermittivityProfile, build_grid
from memsx.limits import aspect_ratio_study, reduced_energy_exact, thin_plate_study

GRID = build_grid(63, 17, 9)
PROF = PermittivityProfile.constant(2.0)


def flat(u0):
    return lambda x: u0 + 0.0 * x


def sine(x):
    return -0.3 * np.sin(np.pi * x)


def test_thin_plate_o1_flat_closed_form():
    u0 = -0.2
    deltas = [0.2, 0.1, 0.05]
    table = thin_plate_study(flat(u0), PROF, "O1", deltas, ModelParams(), GRID)
    for (d, e, lim, gap, *_), dd in zip(table.rows, deltas):
        assert e == pytest.approx(-0.5 / (1 + u0 + dd / 2), abs=1e-12)
        assert lim == pytest.approx(-0.5 / (1 + u0), abs=1e-12)
    assert all(o == pytest.approx(1.0, abs=0.1) for o in table.orders)


def test_thin_plate_od_flat_is_delta_independent():
    table = thin_plate_study(flat(-0.2), PROF, "Od", [0.2, 0.1, 0.05], ModelParams(), GRID)
    assert max(table.gaps) <= 1e-10
    assert all(o is None for o in table.orders)
    assert table.rows[0][1] == pytest.approx(-0.5 / 1.3, abs=1e-12)


def test_thin_plate_o1_sine_orders():
    table = thin_plate_study(sine, PROF, "O1", [0.2, 0.1, 0.05], ModelParams(), GRID)
    gaps = table.gaps
    assert gaps[0] > gaps[1] > gaps[2]
    assert min(table.orders) >= 0.9
    assert table.rows[0][5:] == (63, 17, 9)


def test_aspect_ratio_flat_gap_zero():
    for model in ("transmission", "robin"):
        table = aspect_ratio_study(flat(-0.3), PROF, model, [0.4, 0.2, 0.1], ModelParams(), GRID)
        assert max(table.gaps) <= 1e-10


def test_aspect_ratio_sine_second_order():
    table = aspect_ratio_study(sine, PROF, "robin", [0.4, 0.2, 0.1], ModelParams(), GRID)
    assert min(table.orders) >= 1.8


def test_reduced_energy_quadrature_vs_nodes():
    p = ModelParams(delta=0.1)
    grid = build_grid(511, 5, 5)
    a = reduced_energy_exact(sine, PROF, "transmission", p)
    b = reduced_energy_exact(sine(grid.x), PROF, "transmission", p, grid)
    # independent closed form for a constant gap N = 0.05
    n = 0.05
    from scipy.integrate import quad

    c = -0.5 * quad(lambda x: 1 / (1 + sine(x) + n), 0, 1, epsabs=1e-14)[0]
    assert a == pytest.approx(c, abs=1e-12)
    assert b == pytest.approx(c, abs=1e-6)
    with pytest.raises(InvalidArgument):
        reduced_energy_exact(sine, PROF, "membrane", p)


def test_sequence_checks():
    with pytest.raises(InvalidArgument):
        aspect_ratio_study(sine, PROF, "transmission", [0.1, 0.2], ModelParams(), GRID)
    with pytest.raises(InvalidArgument):
        thin_plate_study(sine, PROF, "O1", [0.1, 0.1], ModelParams(), GRID)
    with pytest.raises(InvalidArgument):
        thin_plate_study(sine, PROF, "O2", [0.1], ModelParams(), GRID)
    with pytest.raises(InvalidArgument):
        aspect_ratio_study(sine, PROF, "membrane", [0.1], ModelParams(), GRID)


def test_parallel_rows_are_bit_identical():
    a = thin_plate_study(sine, PROF, "Od", [0.2, 0.1], ModelParams(), GRID)
    b = thin_plate_study(sine, PROF, "Od", [0.2, 0.1], ModelParams(), GRID, jobs=2)
    assert a.rows == b.rows
