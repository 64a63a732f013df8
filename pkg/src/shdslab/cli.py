"""Command line front end.

Every output file is deterministic for a fixed invocation: headers carry
the tool version, scenario, seed, and a configuration digest, never a
timestamp, and figures are rendered with a fixed hash salt.
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import (default_initializer, default_metric,
                       estimate_containment, estimate_recurrence,
                       epsilon_sweep, export_trials_csv, SWEEP_METRICS)
from .foster import (composite_value, monitor_along_arc, verify_flow_decrease,
                     verify_jump_decrease, check_sandwich)
from .hybrid_core import StateVector, canonical_json
from .lmi import check_switched_lmis
from .scenarios import (Scenario, ScenarioError, get_scenario,
                        scenario_from_config, scenario_names)
from .simulate import (export_arc_csv, export_jumps_csv, export_monitor_csv,
                       simulate_arc, NonFiniteStateError)
from .stochastic import PURPOSE_INIT, RandomStream


def _load_scenario(name: str | None, system_file: str | None,
                   epsilon: float | None, params: dict) -> Scenario:
    if system_file is not None:
        with open(system_file, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if epsilon is not None:
            doc = dict(doc, epsilon=epsilon)
        if params:
            doc = dict(doc)
            doc["parameters"] = dict(doc.get("parameters", {}), **params)
        return scenario_from_config(doc)
    if name is None:
        raise click.UsageError("pass --scenario or --system")
    try:
        return get_scenario(name, epsilon=epsilon, **params)
    except ScenarioError as exc:
        raise click.ClickException(str(exc))


def _header(scenario: Scenario, seed: int | None = None) -> dict:
    head = {
        "tool": f"shdslab {__version__}",
        "scenario": scenario.name,
        "epsilon": repr(scenario.system.epsilon),
        "config": scenario.config_digest(),
    }
    if seed is not None:
        head["seed"] = str(seed)
    return head


def _parse_params(eta, rho, beta, chi1, c_tilde_x) -> dict:
    params = {}
    if eta is not None:
        params["eta"] = eta
    if rho is not None:
        params["rho"] = rho
    if beta is not None:
        params["beta"] = beta
    if chi1 is not None:
        params["chi1"] = chi1
    if c_tilde_x is not None:
        params["c_tilde_x"] = c_tilde_x
    return params


_scenario_options = [
    click.option("--scenario", "name", type=str, default=None,
                 help="Name of a packaged scenario."),
    click.option("--system", "system_file",
                 type=click.Path(exists=True, dir_okay=False), default=None,
                 help="JSON file with {family, epsilon, parameters}."),
    click.option("--epsilon", type=float, default=None,
                 help="Time-scale parameter override."),
    click.option("--eta", type=float, default=None,
                 help="Timer rate bound (switching families)."),
    click.option("--rho", type=float, default=None,
                 help="Momentum retention bound (heavy_ball)."),
    click.option("--beta", type=float, default=None,
                 help="Damping rate (heavy_ball)."),
    click.option("--chi1", type=float, default=None,
                 help="Contraction split (bounded_inputs)."),
    click.option("--c-tilde-x", "c_tilde_x", type=float, default=None,
                 help="Rate floor (bounded_inputs)."),
]


def scenario_options(fn):
    for opt in reversed(_scenario_options):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="shdslab")
def main():
    """Simulation and certificate checks for two-time-scale stochastic
    hybrid systems."""


@main.command("list")
def cmd_list():
    """Show the packaged scenarios."""
    for name in scenario_names():
        sc = get_scenario(name)
        sy = sc.system
        click.echo(
            f"{name}: dim_x={sy.dim_x} dim_z={sy.dim_z} "
            f"epsilon={sy.epsilon:g} theta={sc.theta:.6g} "
            f"eps_star={sc.eps_star:.6g} flow={sc.flow_mode} "
            f"jump={sc.jump_mode}")


def _initial_state(scenario: Scenario, x0: str | None, z0: str | None,
                   seed: int) -> StateVector:
    if x0 is None and z0 is None:
        sampler = default_initializer(scenario, radius=2.0)
        return sampler(RandomStream(seed, purpose=PURPOSE_INIT))
    if x0 is None or z0 is None:
        raise click.UsageError("pass both --x0 and --z0 or neither")
    xv = np.array([float(v) for v in x0.split(",")])
    zv = np.array([float(v) for v in z0.split(",")])
    if xv.size != scenario.system.dim_x or zv.size != scenario.system.dim_z:
        raise click.UsageError(
            f"state dims are x:{scenario.system.dim_x} "
            f"z:{scenario.system.dim_z}")
    return StateVector(xv, zv)


def _render_figure(path: Path, scenario: Scenario, arc, times, energy):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "shdslab"

    system = scenario.system
    dim_x = system.dim_x
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))

    blocks = []
    for seg in arc.segments:
        blocks.append(np.column_stack([seg.times, seg.states]))
    gap = np.full((1, blocks[0].shape[1]), np.nan)
    stacked = np.vstack(sum(([b, gap] for b in blocks), [])[:-1])

    for i in range(dim_x):
        ax1.plot(stacked[:, 0], stacked[:, 1 + i], label=f"x{i}")
    for i in range(system.dim_z):
        ax1.plot(stacked[:, 0], stacked[:, 1 + dim_x + i], "--",
                 label=f"z{i}")
    for jr in arc.jumps:
        ax1.axvline(jr.time.t, color="0.75", lw=0.6, zorder=0)
        ax2.axvline(jr.time.t, color="0.75", lw=0.6, zorder=0)
    ax1.legend(loc="upper right", fontsize=8)
    ax1.set_ylabel("state")

    ax2.plot(times, energy, color="C3")
    ax2.set_ylabel("composite value")
    ax2.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


@main.command("simulate")
@scenario_options
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--horizon-t", type=float, default=None)
@click.option("--horizon-j", type=int, default=None)
@click.option("--step", type=float, default=None)
@click.option("--x0", type=str, default=None,
              help="Comma-separated slow initial state.")
@click.option("--z0", type=str, default=None,
              help="Comma-separated fast initial state.")
@click.option("--out", type=click.Path(file_okay=False), default="out",
              show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
def cmd_simulate(name, system_file, epsilon, eta, rho, beta, chi1, c_tilde_x,
                 seed, horizon_t, horizon_j, step, x0, z0, out, plot):
    """Simulate one arc and write delimited samples, jumps, the monitor
    trace, and optionally a figure."""
    params = _parse_params(eta, rho, beta, chi1, c_tilde_x)
    scenario = _load_scenario(name, system_file, epsilon, params)
    overrides = {}
    if horizon_t is not None:
        overrides["horizon_t"] = horizon_t
    if horizon_j is not None:
        overrides["horizon_j"] = horizon_j
    if step is not None:
        overrides["step_h"] = step
    config = scenario.default_sim_config(**overrides)

    y0 = _initial_state(scenario, x0, z0, seed)
    try:
        arc = simulate_arc(scenario.system, y0, config,
                           stream=RandomStream(seed))
    except NonFiniteStateError as exc:
        raise click.ClickException(f"simulation diverged: {exc}")

    trace = monitor_along_arc(scenario.cert, scenario.theta, arc,
                              scenario.system, config.step_h)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    head = _header(scenario, seed)
    export_arc_csv(arc, out_dir / "arc.csv", head)
    export_jumps_csv(arc, out_dir / "jumps.csv", head)
    export_monitor_csv(trace, out_dir / "monitor.csv", head)

    times = [row[0] for row in trace.rows]
    energy = [row[2] for row in trace.rows]
    if plot:
        _render_figure(out_dir / "figure.svg", scenario, arc, times, energy)

    summary = {
        "scenario": scenario.name,
        "epsilon": scenario.system.epsilon,
        "seed": seed,
        "config": scenario.config_digest(),
        "termination": arc.termination.value,
        "final_t": arc.final_time.t,
        "final_j": arc.final_time.j,
        "n_jumps": len(arc.jumps),
        "monitor_flags": trace.n_flags,
    }
    (out_dir / "summary.json").write_text(canonical_json(summary) + "\n",
                                          encoding="utf-8")
    click.echo(f"wrote {out_dir}/arc.csv jumps.csv monitor.csv"
               + (" figure.svg" if plot else "")
               + f"; termination={arc.termination.value} "
               f"jumps={len(arc.jumps)} flags={trace.n_flags}")


def _flow_points(scenario: Scenario, n: int) -> list[StateVector]:
    sampler = default_initializer(scenario, radius=2.0)
    stream = RandomStream(20_240_001, purpose=PURPOSE_INIT)
    pts = []
    while len(pts) < n:
        sv = sampler(stream)
        if scenario.system.flow_set.contains(sv):
            pts.append(sv)
    return pts


def _jump_points(scenario: Scenario, n: int) -> list[StateVector]:
    sampler = default_initializer(scenario, radius=2.0)
    stream = RandomStream(20_240_002, purpose=PURPOSE_INIT)
    name = scenario.name
    pts = []
    attempts = 0
    while len(pts) < n and attempts < 50 * n:
        attempts += 1
        sv = sampler(stream)
        x, z = np.array(sv.x), np.array(sv.z)
        if name == "example1":
            x[0] = float(max(0, round(abs(x[0]) * 2)))
            z = np.array(z)
        elif name == "switching":
            x[3] = 0.0
        elif name == "heavy_ball":
            x[4] = 100.0
        elif name == "switching_plant":
            z[3] = 0.0
        elif name == "bounded_inputs":
            x[4] = 1.0
        cand = StateVector(x, z)
        if scenario.system.jump_set.contains(cand):
            pts.append(cand)
    return pts


@main.command("verify")
@scenario_options
@click.option("--points", type=int, default=200, show_default=True,
              help="Number of sampled check points per condition.")
@click.option("--sup-points", type=int, default=33, show_default=True,
              help="Selection grid size for jump expectations.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
def cmd_verify(name, system_file, epsilon, eta, rho, beta, chi1, c_tilde_x,
               points, sup_points, out):
    """Check the certificate inequalities on sampled points; exit 1 and
    name the worst residual if any condition fails."""
    params = _parse_params(eta, rho, beta, chi1, c_tilde_x)

    # For the switching families an out-of-range timer rate must surface
    # as a failed matrix inequality, not a construction error, so the
    # instance falls back to its default rate while the inequality check
    # runs at the requested one.
    lmi_eta = params.pop("eta", None)
    try:
        scenario = _load_scenario(name, system_file, epsilon,
                                  dict(params, eta=lmi_eta)
                                  if lmi_eta is not None else dict(params))
    except click.ClickException:
        if lmi_eta is None:
            raise
        scenario = _load_scenario(name, system_file, epsilon, dict(params))

    failures = []
    lines = []

    if scenario.name in ("switching", "switching_plant"):
        from .scenarios import switching_lmi_instance
        check_eta = lmi_eta if lmi_eta is not None else \
            scenario.parameters["eta"]
        report = check_switched_lmis(switching_lmi_instance(check_eta))
        for entry in report.entries:
            status = "PASS" if entry.passed else "FAIL"
            lines.append(f"lmi {entry.name} mode {entry.mode}: "
                         f"lambda_max={entry.lambda_max:.6g} {status}")
            if not entry.passed:
                failures.append((f"lmi {entry.name} mode {entry.mode}",
                                 entry.lambda_max))

    flow_pts = _flow_points(scenario, points)
    flow_report = verify_flow_decrease(
        scenario.system, scenario.cert, scenario.ledger, scenario.theta,
        flow_pts, mode=scenario.flow_mode)
    for ineq in flow_report.inequalities:
        status = "PASS" if ineq.max_residual <= flow_report.tol else "FAIL"
        lines.append(f"flow {ineq.name}: max_residual="
                     f"{ineq.max_residual:.6g} {status}")
        if status == "FAIL":
            failures.append((f"flow {ineq.name}", ineq.max_residual))

    jump_pts = _jump_points(scenario, max(10, points // 4))
    jump_report = verify_jump_decrease(
        scenario.system, scenario.cert, scenario.ledger, scenario.theta,
        jump_pts, mode=scenario.jump_mode,
        route=scenario.thm2_route or "reduced", rho_hat=scenario.rho_hat,
        sup_points=sup_points)
    for ineq in jump_report.inequalities:
        status = "PASS" if ineq.max_residual <= jump_report.tol else "FAIL"
        lines.append(f"jump {ineq.name}: max_residual="
                     f"{ineq.max_residual:.6g} {status}")
        if status == "FAIL":
            failures.append((f"jump {ineq.name}", ineq.max_residual))
    for cond in jump_report.scalar_conditions:
        status = "PASS" if cond.passed else "FAIL"
        lines.append(f"scalar {cond.name}: value={cond.value:.6g} "
                     f"bound={cond.bound:.6g} {status}")
        if not cond.passed:
            failures.append((f"scalar {cond.name}", cond.value))

    sandwich = check_sandwich(scenario.cert, scenario.system, flow_pts)
    status = "PASS" if sandwich <= 1e-9 else "FAIL"
    lines.append(f"sandwich: worst={sandwich:.6g} {status}")
    if status == "FAIL":
        failures.append(("sandwich", sandwich))

    for line in lines:
        click.echo(line)

    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        doc = {
            "scenario": scenario.name,
            "config": scenario.config_digest(),
            "flow": flow_report.to_dict(),
            "jump": jump_report.to_dict(),
            "sandwich_worst": sandwich,
            "passed": not failures,
        }
        (out_dir / "verify.json").write_text(canonical_json(doc) + "\n",
                                             encoding="utf-8")

    if failures:
        worst = max(failures, key=lambda kv: kv[1])
        click.echo(f"FAIL: worst residual {worst[0]} = {worst[1]:.6g}")
        raise SystemExit(1)
    click.echo("PASS: all checked conditions hold")


@main.command("mc-stability")
@scenario_options
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--radius", type=float, default=2.0, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--t-after", type=float, default=0.0, show_default=True)
@click.option("--horizon-t", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def cmd_mc_stability(name, system_file, epsilon, eta, rho, beta, chi1,
                     c_tilde_x, trials, radius, threshold, t_after,
                     horizon_t, seed, out):
    """Estimate the fraction of arcs that stay near the target."""
    if trials < 1:
        raise click.UsageError("--trials must be at least 1")
    params = _parse_params(eta, rho, beta, chi1, c_tilde_x)
    scenario = _load_scenario(name, system_file, epsilon, params)
    config = scenario.default_sim_config(
        **({"horizon_t": horizon_t} if horizon_t is not None else {}))
    sampler = default_initializer(scenario, radius)
    report = estimate_containment(
        scenario.system, scenario.cert, sampler, trials, threshold, config,
        master_seed=seed, t_after=t_after)
    click.echo(
        f"containment {report.successes}/{report.n_trials} "
        f"fraction={report.fraction:.4f} "
        f"wilson=[{report.wilson_low:.4f}, {report.wilson_high:.4f}]")
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "containment.json").write_text(
            report.to_json() + "\n", encoding="utf-8")
        export_trials_csv(out_dir / "trials.csv", report.outcomes,
                          _header(scenario, seed))


@main.command("mc-recurrence")
@scenario_options
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--radius", type=float, default=2.0, show_default=True)
@click.option("--budget", type=float, default=50.0, show_default=True,
              help="Hybrid time budget counted as t + j.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def cmd_mc_recurrence(name, system_file, epsilon, eta, rho, beta, chi1,
                      c_tilde_x, trials, radius, budget, seed, out):
    """Estimate how often arcs reach the recurrence target in budget."""
    if trials < 1:
        raise click.UsageError("--trials must be at least 1")
    params = _parse_params(eta, rho, beta, chi1, c_tilde_x)
    scenario = _load_scenario(name, system_file, epsilon, params)
    config = scenario.default_sim_config(horizon_t=budget)
    sampler = default_initializer(scenario, radius)
    report = estimate_recurrence(
        scenario.system, scenario.cert, sampler, trials, budget, config,
        master_seed=seed)
    click.echo(
        f"recurrence {report.hits}/{report.n_trials} "
        f"fraction={report.hit_fraction:.4f} "
        f"wilson=[{report.wilson_low:.4f}, {report.wilson_high:.4f}] "
        f"p95={report.hitting_percentile(0.95):.4g}")
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "recurrence.json").write_text(
            report.to_json() + "\n", encoding="utf-8")
        export_trials_csv(out_dir / "trials.csv", report.outcomes,
                          _header(scenario, seed))


@main.command("sweep")
@scenario_options
@click.option("--epsilons", type=str, required=True,
              help="Comma-separated, strictly decreasing, e.g. 0.1,0.01.")
@click.option("--metric", type=click.Choice(SWEEP_METRICS),
              default="tracking", show_default=True)
@click.option("--trials", type=int, default=8, show_default=True)
@click.option("--radius", type=float, default=2.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def cmd_sweep(name, system_file, epsilon, eta, rho, beta, chi1, c_tilde_x,
              epsilons, metric, trials, radius, seed, out):
    """Re-run a scenario over several time-scale parameters."""
    if trials < 1:
        raise click.UsageError("--trials must be at least 1")
    params = _parse_params(eta, rho, beta, chi1, c_tilde_x)
    if system_file is not None:
        with open(system_file, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        name = doc["family"]
        params = dict(doc.get("parameters", {}), **params)
    if name is None:
        raise click.UsageError("pass --scenario or --system")
    eps_values = [float(v) for v in epsilons.split(",")]

    def builder(eps):
        return get_scenario(name, epsilon=eps, **params)

    try:
        result = epsilon_sweep(builder, eps_values, metric=metric,
                               n_trials=trials, radius=radius,
                               master_seed=seed)
    except Exception as exc:  # surfaced as a clean CLI error
        raise click.ClickException(str(exc))
    for row in result.rows:
        marker = "<" if row.epsilon < result.eps_star else ">="
        click.echo(f"epsilon={row.epsilon:g} ({marker} eps_star="
                   f"{result.eps_star:.4g}) {metric}={row.value:.6g}")
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "sweep.json").write_text(result.to_json() + "\n",
                                            encoding="utf-8")


if __name__ == "__main__":
    main()
