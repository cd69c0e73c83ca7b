import math

import numpy as np
import pytest

from fluidq.distributions import Exponential, LogNormal, Uniform
from fluidq.equilibrium import equilibrium_state
from fluidq.fluid import (
    EMPTY_SERVERS,
    EquilibriumShaped,
    FluidConfig,
    InitialCondition,
    InvalidInitialError,
    TabulatedProfile,
    ValidatedInitial,
    check_queue_drain_monotone,
    fixed_point_residual,
    initial_load,
    solve,
    survival_at_offered_wait,
    validate_initial,
)
from fluidq.measures import TailMeasure, sup_distance

LN2 = math.log(2.0)


def _cfg(lam, patience, service, horizon=10.0, dt=1e-3):
    return FluidConfig(arrival_rate=lam, patience=patience, service=service,
                       horizon=horizon, dt=dt)


# ---------------------------------------------------------------- initial conditions

def test_validate_initial_empty():
    cfg = _cfg(1.0, Exponential(1.0), Exponential(1.0))
    v = validate_initial(cfg, InitialCondition())
    assert (v.queue0, v.busy0, v.system0) == (0.0, 0.0, 0.0)


def test_validate_initial_equilibrium_case():
    cfg = _cfg(1.2, Exponential(1.0), Exponential(1.0))
    init = InitialCondition(virtual_buffer_mass=1.2 * math.log(1.2),
                            server_profile=EquilibriumShaped(1.0))
    v = validate_initial(cfg, init)
    assert v.queue0 == pytest.approx(0.2, abs=1e-12)
    assert v.busy0 == 1.0


def test_validate_initial_rejects_queue_without_full_servers():
    cfg = _cfg(1.0, Exponential(1.0), Exponential(1.0))
    init = InitialCondition(virtual_buffer_mass=1.0, server_profile=EMPTY_SERVERS)
    with pytest.raises(InvalidInitialError, match="queue positive but servers not full"):
        validate_initial(cfg, init)


def test_validate_initial_rejects_atom_at_zero():
    cfg = _cfg(1.0, Exponential(1.0), Exponential(1.0))
    jumpy = TailMeasure(np.array([0.0, 1.0]), np.array([0.5, 0.4]), 0.9, "linear")
    init = InitialCondition(server_profile=TabulatedProfile(jumpy))
    with pytest.raises(InvalidInitialError, match="atom at zero"):
        validate_initial(cfg, init)


def test_validate_initial_accepts_smooth_tabulated_profile():
    cfg = _cfg(1.0, Exponential(1.0), Exponential(1.0))
    # tables must resolve mass at dt scale: max tail drop <= dt * total
    grid = np.linspace(0.0, 12.0, 24001)
    profile = TailMeasure(grid, 0.8 * np.exp(-grid), 0.8, "linear")
    v = validate_initial(cfg, InitialCondition(server_profile=TabulatedProfile(profile)))
    assert v.busy0 == pytest.approx(0.8, abs=1e-12)


# ---------------------------------------------------------------- survival map

def test_survival_map_examples():
    assert survival_at_offered_wait(2.0, Exponential(1.0), 1.0) == pytest.approx(0.5, abs=1e-12)
    for patience in (Exponential(1.0), Uniform(0.0, 2.0)):
        assert survival_at_offered_wait(2.0, patience, 2.0) == 0.0
        assert survival_at_offered_wait(2.0, patience, 0.0) == 1.0


def test_survival_map_exponential_closed_form():
    # for exponential patience the map is linear: 1 - alpha q / lambda
    lam, alpha = 2.0, 1.0
    for q in np.linspace(0.0, 1.9, 25):
        expected = 1.0 - alpha * q / lam
        assert survival_at_offered_wait(lam, Exponential(alpha), float(q)) == pytest.approx(
            expected, abs=1e-12)


def test_survival_map_nonincreasing():
    lam = 1.5
    for patience in (Exponential(0.7), Uniform(0.0, 2.0), LogNormal.from_mean_cv(1.0, 1.0)):
        vals = [survival_at_offered_wait(lam, patience, q) for q in np.linspace(0.0, 2.0, 40)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------- initial load

def test_initial_load_examples():
    cfg = _cfg(1.0, Exponential(1.0), Exponential(1.0))
    empty = validate_initial(cfg, InitialCondition())
    assert initial_load(cfg, empty, 3.7) == 0.0

    half_queue = ValidatedInitial(virtual0=0.0, queue0=0.5, busy0=0.0,
                                  server_profile=EMPTY_SERVERS)
    assert initial_load(cfg, half_queue, LN2) == pytest.approx(0.25, abs=1e-12)

    eq = ValidatedInitial(virtual0=0.0, queue0=0.0, busy0=1.0,
                          server_profile=EquilibriumShaped(1.0))
    assert initial_load(cfg, eq, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-12)
    # at t=0 the initial load is the initial system mass
    assert initial_load(cfg, eq, 0.0) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- solve

def test_solve_underloaded_closed_form():
    sol = solve(_cfg(0.8, Exponential(1.0), Exponential(1.0)))
    expected = 0.8 * (1.0 - np.exp(-sol.times))
    assert float(np.max(np.abs(sol.system - expected))) <= 1e-3


def test_solve_equilibrium_start_stays_constant():
    state = equilibrium_state(1.2, Exponential(1.0), Exponential(1.0),
                              np.linspace(-5.0, 8.0, 128))
    sol = solve(_cfg(1.2, Exponential(1.0), Exponential(1.0)), state.initial_condition())
    assert float(np.max(np.abs(sol.system - sol.system[0]))) <= 1e-3


def test_solve_overloaded_reaches_stationary_point():
    sol = solve(_cfg(2.0, Exponential(2.0), Exponential(1.0)))
    assert sol.system[-1] == pytest.approx(1.5, abs=2e-3)


def test_solve_equilibrium_with_bounded_patience_support():
    # Uniform(0,2) patience, rho=2: w=1, Q_inf = 2*(1 - 1/4) = 1.5
    lam, patience, service = 2.0, Uniform(0.0, 2.0), Exponential(1.0)
    state = equilibrium_state(lam, patience, service, np.linspace(-4.0, 8.0, 97))
    assert state.queue_mass == pytest.approx(1.5, abs=1e-9)
    sol = solve(_cfg(lam, patience, service, horizon=4.0), state.initial_condition())
    assert float(np.max(np.abs(sol.system - sol.system[0]))) <= 1e-3


def test_solve_with_hyperexponential_patience_uses_generic_inverse():
    from fluidq.distributions import HyperExponential

    patience = HyperExponential((0.4, 0.6), (0.5, 2.0))
    sol = solve(_cfg(1.5, patience, Exponential(1.0), horizon=2.0))
    assert float(np.min(np.diff(sol.scheduled))) >= -1e-12
    assert fixed_point_residual(sol) <= 2e-10


def test_solve_policy_constraints_hold_exactly():
    sol = solve(_cfg(2.0, Exponential(2.0), Exponential(1.0), horizon=2.0))
    np.testing.assert_array_equal(sol.queue, np.maximum(sol.system - 1.0, 0.0))
    np.testing.assert_array_equal(sol.busy, np.minimum(sol.system, 1.0))


def test_solve_structural_invariants():
    for lam, patience in ((2.0, Exponential(2.0)), (1.2, Uniform(0.0, 2.0))):
        sol = solve(_cfg(lam, patience, Exponential(1.0), horizon=5.0))
        assert float(np.min(np.diff(sol.scheduled))) >= -1e-12
        tail_area = patience.stats().integrated_sf_total
        assert float(np.max(sol.queue)) <= lam * tail_area + 1e-9


def test_solve_uniqueness_under_inner_start_perturbation():
    cfg = _cfg(2.0, Exponential(2.0), Exponential(1.0), horizon=3.0)
    a = solve(cfg)
    b = solve(cfg, inner_start_offset=0.5)
    assert float(np.max(np.abs(a.system - b.system))) <= 1e-8


def test_fixed_point_residual_within_tolerance():
    cfg = _cfg(2.0, Exponential(2.0), Exponential(1.0), horizon=2.0)
    sol = solve(cfg)
    assert fixed_point_residual(sol) <= 2.0 * cfg.tol


def test_grid_refinement_is_first_order():
    sols = {}
    for dt in (4e-3, 2e-3, 1e-3):
        sol = solve(_cfg(2.0, Exponential(2.0), Exponential(1.0), dt=dt))
        stride = int(round(4e-3 / dt))
        sols[dt] = sol.system[::stride]
    d1 = float(np.max(np.abs(sols[4e-3] - sols[2e-3])))
    d2 = float(np.max(np.abs(sols[2e-3] - sols[1e-3])))
    assert 1.5 <= d1 / d2 <= 2.5


# ---------------------------------------------------------------- measure profiles

def test_measures_at_empty_initial_time_zero():
    sol = solve(_cfg(1.0, Exponential(1.0), Exponential(1.0), horizon=1.0))
    profiles = sol.measures_at(0.0, np.linspace(-2.0, 2.0, 17))
    assert profiles.buffer.total == 0.0
    assert profiles.server.total == 0.0


def test_measures_at_matches_equilibrium_profiles():
    probes = np.linspace(-6.0, 8.0, 256)
    lam, patience, service = 1.2, Exponential(1.0), Exponential(1.0)
    state = equilibrium_state(lam, patience, service, probes)
    sol = solve(_cfg(lam, patience, service, horizon=2.0), state.initial_condition())
    for t in (1.0, 2.0):
        profiles = sol.measures_at(t, probes)
        assert sup_distance(profiles.buffer, state.buffer_tail, probes) <= 1e-3
        assert sup_distance(profiles.server, state.server_tail, probes) <= 1e-3


def test_measures_at_buffer_against_quadrature_oracle():
    lam, patience = 1.2, Uniform(0.0, 2.0)
    sol = solve(_cfg(lam, patience, Exponential(1.0), horizon=2.0))
    t = 2.0
    profiles = sol.measures_at(t, np.linspace(-3.0, 3.0, 61))
    wait = sol.virtual[sol.grid_index(t)] / lam
    for x in (-3.0, -1.0, -0.25, 0.0, 0.4, 1.3):
        u = np.linspace(0.0, wait, 20001)
        oracle = lam * np.trapezoid(np.asarray(patience.sf(x + u)), u)
        assert profiles.buffer.tail_at(x) == pytest.approx(float(oracle), abs=1e-9)
    # beyond the patience support the whole virtual buffer is counted
    assert profiles.buffer.tail_at(-2.5) == pytest.approx(sol.virtual[sol.grid_index(t)], abs=1e-12)


def test_measures_at_rejects_off_grid_times():
    sol = solve(_cfg(1.0, Exponential(1.0), Exponential(1.0), horizon=1.0))
    with pytest.raises(ValueError, match="grid"):
        sol.measures_at(0.00037, np.linspace(-1.0, 1.0, 9))


# ---------------------------------------------------------------- drain monotonicity

def test_drain_monotone_underloaded_empty():
    sol = solve(_cfg(0.8, Exponential(1.0), Exponential(1.0), horizon=5.0))
    assert check_queue_drain_monotone(sol) <= 1e-12


def test_drain_monotone_overloaded():
    sol = solve(_cfg(2.0, Exponential(2.0), Exponential(1.0)))
    assert check_queue_drain_monotone(sol) <= 1e-6


def test_drain_monotone_equilibrium_affine():
    probes = np.linspace(-5.0, 8.0, 64)
    state = equilibrium_state(2.0, Exponential(2.0), Exponential(1.0), probes)
    sol = solve(_cfg(2.0, Exponential(2.0), Exponential(1.0), horizon=3.0),
                state.initial_condition())
    assert check_queue_drain_monotone(sol) <= 1e-12
