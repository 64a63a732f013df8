"""Composite drift certificates: flow and jump inequalities, monitors."""
import numpy as np
import pytest

from shdslab.foster import (
    check_gradient_consistency,
    check_sandwich,
    composite_value,
    epsilon_star,
    jump_expectation,
    monitor_along_arc,
    theta_star,
    verify_flow_decrease,
    verify_jump_decrease,
)
from shdslab.hybrid_core import StateVector
from shdslab.scenarios import get_scenario, scenario_names
from shdslab.simulate import simulate_arc
from shdslab.stochastic import RandomStream, UniformBall, sample


def cloud(dim_x, dim_z, n, seed, radius=3.0):
    stream = RandomStream(seed)
    ball = UniformBall(np.zeros(dim_x + dim_z), radius)
    out = []
    for _ in range(n):
        v = sample(ball, stream)
        out.append(StateVector(v[:dim_x], v[dim_x:]))
    return out


def scenario_cloud(sc, n, seed):
    pts = []
    for sv in cloud(sc.system.dim_x, sc.system.dim_z, n, seed):
        x = np.array(sv.x)
        if sc.name in ("switching", "bounded_inputs"):
            # mode and timer coordinates live on their own ranges
            if sc.name == "switching":
                x[2] = 1.0 if x[2] < 0 else 2.0
                x[3] = abs(x[3]) % 2.0
            else:
                x[2:4] = np.clip(x[2:4], -0.9, 0.9)
                x[4] = abs(x[4]) % 1.0
        z = np.array(sv.z)
        if sc.name == "switching_plant":
            z[2] = 1.0 if z[2] < 0 else 2.0
            z[3] = abs(z[3]) % 2.0
        pts.append(StateVector(x, z))
    return pts


def test_theta_star_balances_coupling():
    led = get_scenario("example1").ledger
    assert theta_star(led) == 0.5
    assert epsilon_star(led) == 0.25
    assert epsilon_star(led, override=0.125) == 0.125


def test_composite_value_endpoints():
    sc = get_scenario("example1")
    x, z = np.array([1.0]), np.array([-1.0])
    assert composite_value(sc.cert, 0.0, x, z) == sc.cert.V(x)
    assert composite_value(sc.cert, 1.0, x, z) == sc.cert.W(x, z)
    assert composite_value(sc.cert, sc.theta, x, z) == 0.25


def test_flow_report_families_and_exact_fast_decay():
    sc = get_scenario("example1", epsilon=0.05)
    pts = cloud(1, 1, 120, 5)
    rep = verify_flow_decrease(sc.system, sc.cert, sc.ledger, sc.theta, pts, mode=sc.flow_mode)
    assert rep.passed
    names = [iq.name for iq in rep.inequalities]
    assert names == ["fast_decay", "slow_decay", "coupling_W", "coupling_V"]
    by_name = {iq.name: iq for iq in rep.inequalities}
    assert by_name["fast_decay"].max_residual == 0.0


def test_flow_decrease_all_scenarios():
    for name in scenario_names():
        sc = get_scenario(name)
        pts = scenario_cloud(sc, 80, 11)
        rep = verify_flow_decrease(sc.system, sc.cert, sc.ledger, sc.theta, pts,
                                   mode=sc.flow_mode)
        assert rep.passed, f"{name}: flow certificate violated"
        assert all(c.passed for c in rep.scalar_conditions), name


def test_jump_decrease_all_scenarios():
    for name in scenario_names():
        sc = get_scenario(name)
        pts = scenario_cloud(sc, 80, 13)
        if name == "example1":
            # jump checks only see points on the integer rungs
            pts = [StateVector(np.array([float(k)]), sv.z)
                   for k, sv in enumerate(pts)]
        elif name == "switching":
            pts = [StateVector(np.concatenate([sv.x[:3], [0.0]]), sv.z) for sv in pts]
        elif name == "heavy_ball":
            pts = [StateVector(np.concatenate([sv.x[:4], [100.0]]), sv.z) for sv in pts]
        elif name == "switching_plant":
            pts = [StateVector(sv.x, np.concatenate([sv.z[:3], [0.0]])) for sv in pts]
        else:
            pts = [StateVector(np.concatenate([sv.x[:4], [1.0]]), sv.z) for sv in pts]
        rep = verify_jump_decrease(sc.system, sc.cert, sc.ledger, sc.theta, pts,
                                   mode=sc.jump_mode, route=sc.thm2_route or "reduced",
                                   rho_hat=sc.rho_hat)
        assert rep.passed, f"{name}: jump certificate violated"
        checked = sum(iq.n_checked for iq in rep.inequalities)
        assert checked > 0, f"{name}: no jump points were checked"


def test_jump_expectation_exact_reference_point():
    sc = get_scenario("example1")
    val = jump_expectation(sc.system, sc.cert, sc.theta, StateVector(np.zeros(1), np.zeros(1)))
    assert abs(val - 3.0 / 80.0) <= 1e-14
    val2 = jump_expectation(sc.system, sc.cert, sc.theta,
                            StateVector(np.array([1.0]), np.array([-1.0])))
    assert val2 == pytest.approx(0.15, abs=1e-14)


def test_gradient_consistency_all_scenarios():
    for name in scenario_names():
        sc = get_scenario(name)
        pts = [(sv.x, sv.z) for sv in scenario_cloud(sc, 25, 17)]
        worst = check_gradient_consistency(sc.cert, pts)
        assert worst < 1e-5, f"{name}: analytic and numeric gradients disagree ({worst})"


def test_sandwich_bounds_hold():
    sc = get_scenario("example1")
    assert check_sandwich(sc.cert, sc.system, cloud(1, 1, 200, 23)) <= 1e-9


def test_monitor_counts_composite_increases():
    sc = get_scenario("example1", epsilon=0.1)
    config = sc.default_sim_config(horizon_t=0.1)
    y0 = StateVector(np.array([1.5]), np.array([1.7]))
    arc = simulate_arc(sc.system, y0, config, RandomStream(0))
    # the tuned weighting is monotone here, a pure slow weighting is not
    good = monitor_along_arc(sc.cert, sc.theta, arc, sc.system, config.step_h)
    bad = monitor_along_arc(sc.cert, 0.0, arc, sc.system, config.step_h)
    assert len(good.flags) == 0
    assert len(bad.flags) > 0
    assert good.tol_mono == pytest.approx(1e-6 * config.step_h)
    assert len(good.rows) == len(list(arc.iter_rows()))


def test_monitor_records_jump_deltas():
    sc = get_scenario("example1", epsilon=0.1)
    config = sc.default_sim_config(horizon_t=2.0, horizon_j=4)
    arc = simulate_arc(sc.system, StateVector(np.array([1.0]), np.array([-1.0])),
                       config, RandomStream(3))
    trace = monitor_along_arc(sc.cert, sc.theta, arc, sc.system, config.step_h)
    assert len(trace.jump_deltas) == len(arc.jumps)
    for t_jump, j, delta in trace.jump_deltas:
        assert np.isfinite(delta)
