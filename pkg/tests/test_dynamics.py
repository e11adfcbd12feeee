import numpy as np
import pytest

from rosdyn.builders import build_cycle
from rosdyn.dynamics import fundamental_identity_residual, integrate
from rosdyn.linear import LinearSystem, simulate_linear
from rosdyn.market import Fixed, ItemSpec, MarketInstance
from rosdyn.utility import utilities

CIRCLE = np.array([[0.0, -1.0], [1.0, 0.0]])


@pytest.fixture(scope="module")
def circle():
    return simulate_linear(LinearSystem(CIRCLE, np.array([1.0, 0.0]), 4 * np.pi))


def test_no_items_gives_constant_trajectory():
    inst = MarketInstance(("a", "b"))
    traj = integrate(inst, [1.3, 2.5], 5.0)
    assert np.all(traj.states == [1.3, 2.5])
    assert np.all(fundamental_identity_residual(traj) == 0.0)


def test_sampling_grid_includes_endpoint():
    traj = integrate(MarketInstance(("a",)), [1.0], 1.05, sample_every=0.1)
    assert traj.times[0] == 0.0 and traj.times[-1] == 1.05
    assert np.all(np.diff(traj.times) > 0)
    assert len(traj.times) == 12


def test_recorded_utilities_reevaluate_identically():
    inst = build_cycle(3)
    traj = integrate(inst, [1.2, 1.8, 2.4], 3.0)
    for k in (0, 7, len(traj.times) - 1):
        assert np.array_equal(traj.utilities[k], utilities(inst, traj.states[k]))


def test_circle_matches_analytic_solution(circle):
    assert circle.m0.tolist() == pytest.approx([1.1, 1.5, 1.9, 1.5, 2.0, 2.0], abs=1e-8)
    traj = integrate(circle.instance, circle.m0, 4 * np.pi, dt=1e-3, sample_every=1e-2)
    t = traj.times
    assert np.max(np.abs(traj.states[:, 0] - (1.5 - 0.4 * np.cos(t)))) <= 1e-3
    assert np.max(np.abs(traj.states[:, 1] - (1.5 - 0.4 * np.sin(t)))) <= 1e-3
    assert np.all(np.abs(fundamental_identity_residual(traj)) <= 1e-3)


def test_residual_shrinks_under_refinement():
    inst = build_cycle(3)
    res = []
    for k in range(4):
        s = 0.2 / 2**k
        traj = integrate(inst, [1.2, 1.8, 2.4], 20.0, dt=s / 2, sample_every=s)
        res.append(np.max(np.abs(fundamental_identity_residual(traj))))
    assert all(b < a for a, b in zip(res, res[1:]))


def test_symmetric_two_cycle_stays_symmetric():
    traj = integrate(build_cycle(2), [1.4, 1.4], 100.0)
    assert np.max(np.abs(traj.states[:, 0] - traj.states[:, 1])) <= 1e-12
    assert np.max(np.abs(traj.utilities[-1])) <= 1e-6


def test_rkf45_agrees_with_rk4():
    inst = build_cycle(3)
    a = integrate(inst, [1.2, 1.8, 2.4], 10.0, dt=1e-3, method="rk4")
    b = integrate(inst, [1.2, 1.8, 2.4], 10.0, dt=0.05, method="rkf45", rtol=1e-10, atol=1e-12)
    assert np.array_equal(a.times, b.times)
    assert np.max(np.abs(a.states - b.states)) <= 1e-8


def test_negative_states_are_clamped_with_warning():
    inst = MarketInstance(("a",), (ItemSpec({"a": Fixed(100.0)}),), 0.0)
    traj = integrate(inst, [1.5], 1.0, dt=0.1)
    assert np.all(traj.states >= 0.0)
    assert traj.warnings and "clamped" in traj.warnings[0]
    assert traj.completed


def test_non_finite_state_aborts_with_partial_trajectory():
    # copies x (value - payment) overflows to -inf
    inst = MarketInstance(("a",), (ItemSpec({"a": Fixed(1e308)}, copies=10.0),), 0.0)
    traj = integrate(inst, [1.5], 1.0, dt=0.1)
    assert not traj.completed
    assert "non-finite" in traj.warnings[-1]
    assert np.all(np.isfinite(traj.states))


def test_bounds_are_respected_and_rates_recorded():
    inst = MarketInstance(("a",), (ItemSpec({"a": Fixed(1.0)}),), 0.0, {"a": (1.5, 3.0)})
    # the projected rate has a kink where the bound is hit, so sample finely
    traj = integrate(inst, [2.0], 5.0, dt=1e-3, sample_every=1e-3)
    assert traj.states.min() >= 1.5
    assert traj.rates is not None and traj.rates[-1, 0] == 0.0
    assert abs(fundamental_identity_residual(traj)[0]) <= 1e-3


@pytest.mark.parametrize("kw", [{"horizon": 0.0}, {"dt": -1.0}, {"sample_every": 0.0}, {"method": "euler"}])
def test_bad_arguments_rejected(kw):
    args = {"horizon": 1.0, "dt": 0.01, "sample_every": 0.1, "method": "rk4"} | kw
    with pytest.raises(ValueError):
        integrate(MarketInstance(("a",)), [1.0], args.pop("horizon"), **args)


def test_bad_initial_state_rejected():
    with pytest.raises(ValueError):
        integrate(MarketInstance(("a",)), [np.nan], 1.0)
    with pytest.raises(ValueError):
        integrate(MarketInstance(("a",)), [1.0, 2.0], 1.0)
