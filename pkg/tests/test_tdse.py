import math
from dataclasses import replace

import numpy as np
import pytest

from tweezer_clock.errors import ConfigError, InvalidInputError, StabilityError
from tweezer_clock.params import CONSTANTS
from tweezer_clock.tdse import (
    SPLIT_DELTA_MAX,
    Grid1D,
    TrapProtocol,
    WaveFunction1D,
    adiabaticity,
    arm_populations,
    detuning_schedule,
    energy,
    evolve,
    ground_state,
    level_crossing_bound,
    lowest_states,
    potential,
    separation_schedule,
)

P = TrapProtocol()
N = 512


@pytest.fixture(scope="module")
def grid():
    return Grid1D.for_protocol(P, n_points=N)


@pytest.fixture(scope="module")
def split(grid):
    psi0 = ground_state(P, grid)
    return psi0, evolve(psi0, P, grid, n_snapshots=11)


# schedules and potential ---------------------------------------------------

def test_schedule_endpoints():
    T = P.t_split
    assert separation_schedule(0.0, P) == pytest.approx(P.d_max)
    assert separation_schedule(T / 2, P) == pytest.approx(P.d_min)
    assert separation_schedule(T, P) == pytest.approx(P.d_max)
    assert detuning_schedule(0.0, P) == P.delta_max
    assert detuning_schedule(T / 2, P) == 0.0
    assert detuning_schedule(T, P) == 0.0
    assert detuning_schedule(T / 4, P) == pytest.approx(P.delta_max / 2)


def test_schedules_continuous():
    t = np.linspace(0, P.t_split, 10001)
    assert np.max(np.abs(np.diff(separation_schedule(t, P)))) < 1e-3 * P.d_max
    assert np.max(np.abs(np.diff(detuning_schedule(t, P)))) < 1e-3


def test_schedule_rejects_out_of_range():
    for t in (-1e-3, 1.01 * P.t_split):
        with pytest.raises(InvalidInputError):
            separation_schedule(t, P)
        with pytest.raises(InvalidInputError):
            detuning_schedule(t, P)


def test_potential_symmetric_without_detuning():
    x = np.linspace(-4e-6, 4e-6, 801)
    t = 0.7 * P.t_split
    assert np.allclose(potential(x, t, P), potential(-x, t, P), rtol=0, atol=1e-12 * P.v0)


def test_potential_deeper_upper_well():
    d = P.d_max
    diff = potential(-d / 2, 0.0, P) - potential(d / 2, 0.0, P)
    assert diff == pytest.approx(P.v0 * P.delta_max, rel=1e-3)


def test_potential_gravity_term():
    q = replace(P, gravity=True)
    t = 0.75 * P.t_split
    d = separation_schedule(t, q)
    tilt = (potential(d / 2, t, q) - potential(-d / 2, t, q)) - (potential(d / 2, t, P) - potential(-d / 2, t, P))
    assert tilt == pytest.approx(q.mass * q.g * d, rel=1e-9)


def test_protocol_validation():
    with pytest.raises(InvalidInputError):
        TrapProtocol(d_min=4e-6, d_max=3e-6)
    with pytest.raises(InvalidInputError):
        TrapProtocol(delta_max=1.0)
    with pytest.raises(InvalidInputError):
        TrapProtocol(t_split=0.0)
    with pytest.raises(ConfigError):
        TrapProtocol.from_dict({"t_split": 0.1, "dmin": 1e-6})


def test_grid_invariants(grid):
    assert grid.x[N // 2] == pytest.approx(0.0, abs=1e-12 * grid.dx)
    assert grid.x_max - grid.x_min >= P.d_max + 6 * P.sigma - grid.dx * 1.01
    assert grid.stable_for(P)
    assert P.t_split / grid.dt == pytest.approx(round(P.t_split / grid.dt), abs=1e-6)
    with pytest.raises(InvalidInputError):
        Grid1D(-1.0, 1.0, 1000, 1e-6)


def test_default_delta_below_level_crossing_bound(grid):
    assert P.delta_max <= level_crossing_bound(P, grid) + 1e-12
    assert SPLIT_DELTA_MAX + 1e-3 > level_crossing_bound(P, grid)


# ground state --------------------------------------------------------------

def test_ground_state_harmonic_oracle():
    # wells 12 sigma apart are decoupled; the deeper one holds the atom
    q = replace(P, d_max=12e-6, d_min=1e-6)
    g = Grid1D.for_protocol(q, n_points=1024)
    psi = ground_state(q, g)
    omega = math.sqrt(4 * q.v0 / (q.mass * q.sigma**2))
    e0 = energy(psi, q, g) + q.v0
    assert e0 == pytest.approx(0.5 * CONSTANTS.hbar * omega, rel=0.05)
    assert psi.mean_position(g.x) == pytest.approx(q.d_max / 2, rel=1e-3)


def test_ground_state_symmetric_double_well(grid):
    q = replace(P, delta_max=0.0)
    psi = ground_state(q, grid)
    assert abs(psi.mean_position(grid.x)) < 1e-8 * q.d_max
    s = psi.samples
    # x -> -x maps index k to N - k on the symmetric grid
    mirrored = np.roll(s[::-1], 1)
    assert np.max(np.abs(s - mirrored)) < 1e-8 * np.max(np.abs(s))
    assert psi.norm == pytest.approx(1.0, abs=1e-12)


def test_ground_state_in_deeper_well(grid):
    psi = ground_state(P, grid)
    upper, lower = arm_populations(psi)
    assert upper > 0.99
    assert psi.mean_position(grid.x) > 0


def test_lowest_states_orthonormal(grid):
    e, v = lowest_states(P, grid, 0.0, 3)
    assert np.all(np.diff(e) > 0)
    dx = grid.dx / P.sigma
    gram = v.conj() @ v.T * dx
    assert np.allclose(gram, np.eye(3), atol=1e-10)


# evolution -----------------------------------------------------------------

def test_stationary_state():
    q = replace(P, d_max=3e-6, d_min=3e-6 * (1 - 1e-12), delta_max=0.0, t_split=0.01)
    g = Grid1D.for_protocol(q, n_points=N)
    psi0 = ground_state(q, g)
    tr = evolve(psi0, q, g, n_snapshots=3)
    assert tr.final.overlap(psi0) > 1 - 1e-6


def test_free_gaussian_dispersion():
    q = replace(P, v0=1e-60, t_split=4e-4)
    s0 = 0.2e-6
    g = Grid1D.for_protocol(q, n_points=1024, dt=1e-6)
    x = g.x
    amp = np.exp(-(x**2) / (4 * s0**2)).astype(complex)
    amp /= math.sqrt(np.sum(np.abs(amp) ** 2) * g.dx)
    tr = evolve(WaveFunction1D(amp, g.dx), q, g, n_snapshots=5)
    for t, snap in zip(tr.times, tr.snapshots):
        width = math.sqrt(np.sum(x**2 * snap.density) * g.dx)
        expected = s0 * math.sqrt(1 + (CONSTANTS.hbar * t / (2 * q.mass * s0**2)) ** 2)
        assert width == pytest.approx(expected, rel=1e-6)


def test_norm_conserved(split):
    _, tr = split
    assert tr.max_norm_error < 1e-8
    for snap in tr.snapshots:
        assert sum(arm_populations(snap)) == pytest.approx(1.0, abs=1e-8)


def test_balanced_split_gravity_off(split):
    _, tr = split
    upper, lower = arm_populations(tr.final)
    assert abs(upper - 0.5) < 0.01 and abs(lower - 0.5) < 0.01


def test_time_reversed_combiner(split, grid):
    psi0, tr = split
    back = evolve(tr.final, P, grid, n_snapshots=2, reverse=True)
    assert back.final.overlap(psi0) > 0.999
    assert arm_populations(back.final)[0] > 0.99


@pytest.fixture(scope="module")
def dt_ladder(split, grid):
    # final populations at dt, dt/2 and dt/4 from the same initial state
    psi0, tr = split
    pops = [np.array(arm_populations(tr.final))]
    for k in (2, 4):
        fine = replace(grid, dt=grid.dt / k)
        pops.append(np.array(arm_populations(evolve(psi0, P, fine, n_snapshots=2).final)))
    return pops


def test_halving_dt_converges(dt_ladder):
    assert np.max(np.abs(dt_ladder[1] - dt_ladder[0])) < 1e-8


def test_time_step_second_order(dt_ladder):
    d1 = np.max(np.abs(dt_ladder[1] - dt_ladder[0]))
    d2 = np.max(np.abs(dt_ladder[2] - dt_ladder[1]))
    assert d1 / d2 == pytest.approx(4.0, rel=0.1)


def test_grid_convergence(split):
    _, tr = split
    g2 = Grid1D.for_protocol(P, n_points=2 * N)
    tr2 = evolve(ground_state(P, g2), P, g2, n_snapshots=2)
    assert np.max(np.abs(np.subtract(arm_populations(tr2.final), arm_populations(tr.final)))) < 1e-6


def test_parity_preserved():
    q = replace(P, delta_max=0.0, t_split=0.05)
    g = Grid1D.for_protocol(q, n_points=N)
    tr = evolve(ground_state(q, g), q, g, n_snapshots=2)
    rho = tr.final.density * g.dx
    assert np.max(np.abs(rho - np.roll(rho[::-1], 1))) < 1e-8


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_instability_detected():
    g = Grid1D.for_protocol(P, n_points=N)
    psi0 = ground_state(P, g)
    bad = WaveFunction1D(psi0.samples * 1.01, psi0.dx)
    with pytest.raises(InvalidInputError):
        evolve(bad, P, g)
    with pytest.raises(StabilityError):
        # a non-finite potential destroys the norm immediately
        q = replace(P, v0=float("inf"), t_split=100 * g.dt)
        evolve(psi0, q, g, n_snapshots=2)


def test_compensation_restores_balance(split):
    q = replace(P, gravity=True, compensation_gradient=-P.mass * P.g, t_split=P.t_split)
    assert q.slope() == 0.0
    g = Grid1D.for_protocol(q, n_points=N)
    tr = evolve(ground_state(q, g), q, g, n_snapshots=2)
    assert np.allclose(arm_populations(tr.final), arm_populations(split[1].final), atol=1e-12)


def test_gravity_favours_lower_arm_monotonically():
    q = replace(P, gravity=True, t_split=0.1)
    g = Grid1D.for_protocol(q, n_points=N)
    lower = []
    for gv in (0.0, 1e-3, 1e-2, 0.1, 1.0, CONSTANTS.g_earth):
        r = replace(q, g=gv)
        lower.append(arm_populations(evolve(ground_state(r, g), r, g, n_snapshots=2).final)[1])
    assert all(b >= a - 1e-9 for a, b in zip(lower, lower[1:])), lower
    assert lower[-1] > 0.5 + 0.01


# adiabaticity --------------------------------------------------------------

def test_adiabaticity_quasi_static(split, grid):
    _, tr = split
    assert adiabaticity(tr, P, grid) > 0.999


def test_adiabaticity_detects_diabatic_run():
    q = replace(P, t_split=2e-3)
    g = Grid1D.for_protocol(q, n_points=N)
    tr = evolve(ground_state(q, g), q, g, n_snapshots=11)
    assert adiabaticity(tr, q, g) < 0.9
