"""Acceptance gate: ten end-to-end checks with stated tolerances.

Each test prints one pass or fail line naming its tolerance and wall time.
They are ordered from algebraic identities to long Monte Carlo runs.
"""
import math
import os
import time

import numpy as np

from shdslab.analysis import (
    default_initializer,
    estimate_containment,
    estimate_recurrence,
    export_trials_csv,
    run_trials,
)
from shdslab.foster import (
    check_gradient_consistency,
    jump_expectation,
    monitor_along_arc,
    verify_jump_decrease,
)
from shdslab.hybrid_core import StateVector, build_reduced
from shdslab.lmi import (
    check_switched_lmis,
    feasibility_search,
    jacobi_eigenvalues,
    sym_eigenvalues_2x2,
    sym_eigenvalues_3x3,
)
from shdslab.scenarios import get_scenario, switching_lmi_instance
from shdslab.simulate import rk4_step, simulate_arc
from shdslab.stochastic import (
    PURPOSE_INIT,
    Quadrature,
    RandomStream,
    TruncatedExponential,
    UniformBall,
    expectation,
    sample,
)


def finish(number, ok, detail, started, budget):
    elapsed = time.perf_counter() - started
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f}s of {budget:.0f}s)"
    print(line)
    assert ok, line
    assert elapsed < budget, f"criterion {number}: exceeded {budget:.0f}s budget ({elapsed:.1f}s)"


def random_state(sc, stream, radius=2.0):
    # generic point with mode and timer coordinates forced onto their ranges
    dim = sc.system.dim_x + sc.system.dim_z
    v = sample(UniformBall(np.zeros(dim), radius), stream)
    x, z = np.array(v[:sc.system.dim_x]), np.array(v[sc.system.dim_x:])
    if sc.name == "switching":
        x[2] = 1.0 if x[2] < 0 else 2.0
        x[3] = abs(x[3]) % 2.0
    elif sc.name == "bounded_inputs":
        x[2:4] = np.clip(x[2:4], -0.9, 0.9)
        x[4] = abs(x[4]) % 1.0
    elif sc.name == "switching_plant":
        z[2] = 1.0 if z[2] < 0 else 2.0
        z[3] = abs(z[3]) % 2.0
    return x, z


def on_manifold_start(sc, stream, radius=2.0):
    x, _ = random_state(sc, stream, radius)
    if sc.name == "heavy_ball":
        x[4] = 0.0  # timer starts at the beginning of a restart cycle
    return StateVector(x, sc.system.manifold.project(x))


def test_criterion_01_mode_matrices_and_lyapunov_identities():
    started = time.perf_counter()
    inst = switching_lmi_instance(0.03)
    a1_expected = np.array([[-1.0, 3.0], [0.0, -1.0]])
    worst = float(np.max(np.abs(inst.A_modes[0] - a1_expected)))
    for a, p in zip(inst.A_modes, inst.P_modes):
        worst = max(worst, float(np.max(np.abs(a.T @ p + p @ a + np.eye(2)))))
    finish(1, worst <= 1e-12, f"identity residual {worst:.2e} <= 1e-12", started, 1.0)


def test_criterion_02_switched_lmi_feasibility_window():
    started = time.perf_counter()
    inst = switching_lmi_instance(0.03)
    sigma, eta_bar = feasibility_search(inst.A_modes, inst.P_modes, inst.lam, inst.T)
    ok = inst.sigma == sigma and check_switched_lmis(inst).passed
    big = check_switched_lmis(switching_lmi_instance(1.0))
    flow_failures = [e for e in big.entries if not e.passed]
    ok = ok and not big.passed and flow_failures and all(
        "flow" in e.name for e in flow_failures)
    ok = ok and eta_bar < 0.035
    finish(2, ok,
           f"sigma={sigma:.4f} feasible at eta=0.03, flow inequality fails at eta=1, "
           f"eta_bar={eta_bar:.4f} < 0.035", started, 1.0)


def test_criterion_03_jump_margin_bounds_on_grid():
    started = time.perf_counter()
    sc = get_scenario("example1", epsilon=0.05)
    system, cert, theta = sc.system, sc.cert, sc.theta
    axis = np.arange(-100, 101) / 20.0  # exact [-5, 5] step 0.05
    worst_residual = 0.0
    min_margin = math.inf
    min_margin_outside = math.inf
    for xv in axis:
        x = np.array([xv])
        outside = cert.recur_set_Ox(x) >= 0.0
        for zv in axis:
            z = np.array([zv])
            res = float(cert.grad_W_z(x, z) @ system.flow_z(x, z, None)) \
                + sc.ledger.k_z * cert.phi_z(system.manifold.distance(x, z)) ** 2
            worst_residual = max(worst_residual, abs(res))
            e_val = (1.0 - theta) * cert.V(x) + theta * cert.W(x, z)
            margin = e_val - jump_expectation(system, cert, theta, StateVector(x, z))
            min_margin = min(min_margin, margin)
            if outside:
                min_margin_outside = min(min_margin_outside, margin)
    ok = (worst_residual == 0.0
          and min_margin_outside >= 0.1 - 1e-9
          and min_margin >= -3.0 / 68.0 - 1e-9)
    finish(3, ok,
           f"fast-decay residual {worst_residual!r} (exact 0), jump margin "
           f">= {min_margin_outside:.6f} outside the tube (bound 0.1 - 1e-9) and "
           f">= {min_margin:.6f} overall (bound -3/68 - 1e-9)", started, 10.0)


def test_criterion_04_jump_expectation_oracle_and_grid():
    started = time.perf_counter()
    sc = get_scenario("example1", epsilon=0.05)
    origin = StateVector(np.zeros(1), np.zeros(1))
    diff = abs(jump_expectation(sc.system, sc.cert, sc.theta, origin) - 3.0 / 80.0)
    grid = [StateVector(np.array([float(k)]), np.array([zv]))
            for k in range(41) for zv in np.linspace(-5.0, 5.0, 41)]
    rep = verify_jump_decrease(sc.system, sc.cert, sc.ledger, sc.theta, grid,
                               mode="thm3", rho_hat=sc.rho_hat)
    checked = sum(iq.n_checked for iq in rep.inequalities)
    ok = diff <= 1e-14 and rep.passed and checked == 41 * 41 and sc.cert.nu == 0.1
    finish(4, ok,
           f"expectation at the origin within {diff:.1e} of 3/80 (tol 1e-14), "
           f"jump inequality holds at all {checked} grid points with nu=1/10 rho_hat=1/20",
           started, 10.0)


def test_criterion_05_flow_monotonicity_monitor():
    started = time.perf_counter()
    flags = {}
    for name in ("switching", "heavy_ball", "switching_plant"):
        sc = get_scenario(name, epsilon=0.1)
        config = sc.default_sim_config(horizon_t=50.0)
        total = 0
        for seed in range(20):
            y0 = on_manifold_start(sc, RandomStream(2026, trial_index=seed,
                                                    purpose=PURPOSE_INIT))
            arc = simulate_arc(sc.system, y0, config, RandomStream(2026, trial_index=seed))
            trace = monitor_along_arc(sc.cert, sc.theta, arc, sc.system, config.step_h)
            total += len(trace.flags)
        flags[name] = total
    ok = all(v == 0 for v in flags.values())
    detail = ", ".join(f"{k}={v}" for k, v in flags.items())
    finish(5, ok,
           f"flagged composite increases outside the tube over 20 seeds, t=50, "
           f"eps=0.1, tol 1e-6*h: {detail}", started, 120.0)


def test_criterion_06_heavy_ball_convergence():
    started = time.perf_counter()
    sc = get_scenario("heavy_ball", epsilon=0.1)
    u_star = np.array([-0.5, 0.5])
    metric = lambda sv: float(np.linalg.norm(sv.x[:2] - u_star))
    rep = estimate_containment(
        sc.system, sc.cert, default_initializer(sc, 3.0), 200, 0.05,
        sc.default_sim_config(horizon_t=50.0), master_seed=0, metric=metric,
        t_after=50.0 - 1e-9)
    ok = rep.wilson_low >= 0.95
    finish(6, ok,
           f"{rep.successes}/200 trials end within 0.05 of the minimiser, "
           f"Wilson lower bound {rep.wilson_low:.4f} >= 0.95", started, 300.0)


def test_criterion_07_recurrence_hit_fractions():
    started = time.perf_counter()
    sc1 = get_scenario("example1", epsilon=0.05)
    rep1 = estimate_recurrence(
        sc1.system, sc1.cert, default_initializer(sc1, 5.0), 1000, 200.0,
        sc1.default_sim_config(horizon_t=200.0), master_seed=0)
    stops = sum(1 for o in rep1.outcomes if o.termination == "left_c_and_d")
    frac1 = (rep1.hits + stops) / 1000.0
    elapsed1 = time.perf_counter() - started
    assert elapsed1 < 300.0, f"first leg exceeded 300s ({elapsed1:.0f}s)"

    second = time.perf_counter()
    sc4 = get_scenario("bounded_inputs", epsilon=0.1)
    rep4 = estimate_recurrence(
        sc4.system, sc4.cert, default_initializer(sc4, 10.0), 500, 100.0,
        sc4.default_sim_config(horizon_t=100.0), master_seed=0)
    ok = frac1 >= 0.99 and rep4.hit_fraction == 1.0
    finish(7, ok,
           f"hit-or-stop {frac1:.4f} >= 0.99 over 1000 trials, and "
           f"{rep4.hits}/500 constrained-input trials reach the target", second, 300.0)


def test_criterion_08_two_time_scale_consistency():
    started = time.perf_counter()
    sup_layer = {}
    sup_track = {}
    for eps in (0.1, 0.01, 0.001):
        sc = get_scenario("example1", epsilon=eps)
        config = sc.default_sim_config(horizon_t=5.0)
        x0 = np.array([0.8])
        arc = simulate_arc(sc.system, StateVector(x0, sc.system.manifold.project(x0)),
                           config)
        red = build_reduced(sc.system)
        x_red = np.array(x0)
        worst_layer = 0.0
        worst_track = 0.0
        prev_t = 0.0
        for t, _, row, _ in arc.iter_rows():
            if t > prev_t:
                x_red = rk4_step(red.flow, x_red, t - prev_t)
                prev_t = t
            if 1.0 <= t <= 5.0:
                worst_layer = max(worst_layer, abs(row[0] + row[1]))
            worst_track = max(worst_track, abs(row[0] - float(x_red[0])))
        sup_layer[eps] = worst_layer
        sup_track[eps] = worst_track
    ok = (sup_layer[0.1] > sup_layer[0.01] > sup_layer[0.001]
          and sup_track[0.1] > sup_track[0.01] > sup_track[0.001])
    finish(8, ok,
           "sup |z + x| on [1,5] and sup |x - x_reduced| both shrink along "
           f"eps=0.1,0.01,0.001: layer {sup_layer[0.1]:.2e}/{sup_layer[0.01]:.2e}/"
           f"{sup_layer[0.001]:.2e}, tracking {sup_track[0.1]:.2e}/"
           f"{sup_track[0.01]:.2e}/{sup_track[0.001]:.2e}", started, 60.0)


def test_criterion_09_numerical_oracles():
    started = time.perf_counter()
    stream = RandomStream(909)
    worst_eig = 0.0
    for k in range(1000):
        n = 2 if k < 500 else 3
        raw = 3.0 * (2.0 * stream.uniforms(n * n) - 1.0).reshape(n, n)
        m = 0.5 * (raw + raw.T)
        analytic = np.sort(sym_eigenvalues_2x2(m) if n == 2 else sym_eigenvalues_3x3(m))
        worst_eig = max(worst_eig, float(np.max(np.abs(jacobi_eigenvalues(m) - analytic))))

    worst_quad = 0.0
    for T in (0.5, 2.0, 5.0, 100.0):
        closed = (T - 1.0 + math.exp(-T)) / (1.0 - math.exp(-T))
        got = expectation(TruncatedExponential(T), lambda v: float(v[0]), Quadrature(64))
        worst_quad = max(worst_quad, abs(got - closed))

    worst_grad = 0.0
    for name in ("example1", "switching", "heavy_ball", "switching_plant", "bounded_inputs"):
        sc = get_scenario(name)
        pts = [random_state(sc, stream) for _ in range(100)]
        worst_grad = max(worst_grad, check_gradient_consistency(sc.cert, pts))

    ok = worst_eig < 1e-10 and worst_quad < 1e-10 and worst_grad < 1e-5
    finish(9, ok,
           f"eigenvalues within {worst_eig:.1e} (tol 1e-10) over 1000 matrices, "
           f"quadrature within {worst_quad:.1e} (tol 1e-10), gradients within "
           f"{worst_grad:.1e} relative (tol 1e-5) at 100 points per family",
           started, 30.0)


def test_criterion_10_byte_identical_reproduction(tmp_path):
    from click.testing import CliRunner

    started = time.perf_counter()
    runner = CliRunner()
    pairs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        res = runner.invoke(main_cli(), [
            "simulate", "--scenario", "example1", "--seed", "17",
            "--horizon-t", "1", "--x0", "0.5", "--z0", "-0.5",
            "--out", str(out), "--no-plot"])
        assert res.exit_code == 0, res.output
        pairs.append(out)
    same_cli = all(
        (pairs[0] / name).read_bytes() == (pairs[1] / name).read_bytes()
        for name in ("arc.csv", "jumps.csv", "monitor.csv", "summary.json"))

    sc = get_scenario("example1", epsilon=0.1)
    sampler = default_initializer(sc, 3.0)
    config = sc.default_sim_config(horizon_t=2.0)
    csvs = []
    outcome_sets = []
    for threads, env in ((1, None), (4, None), (None, "3")):
        if env is None:
            os.environ.pop("SHDS_LAB_THREADS", None)
        else:
            os.environ["SHDS_LAB_THREADS"] = env
        try:
            outcomes = run_trials(sc.system, sampler, 12, config, master_seed=8,
                                  threads=threads)
        finally:
            os.environ.pop("SHDS_LAB_THREADS", None)
        path = tmp_path / f"trials_{threads}_{env}.csv"
        export_trials_csv(path, outcomes, {"seed": 8})
        csvs.append(path.read_bytes())
        outcome_sets.append([o.final_t for o in outcomes])
    same_trials = csvs[0] == csvs[1] == csvs[2]
    ok = same_cli and same_trials and outcome_sets[0] == outcome_sets[2]
    finish(10, ok,
           "arc, jump, monitor, and summary files byte-identical across reruns; "
           "trial reports byte-identical across thread counts 1, 4, and the "
           "environment override", started, 60.0)


def main_cli():
    from shdslab.cli import main
    return main
