"""Monte Carlo estimation over simulated arcs.

Every trial draws its randomness from a stream keyed by (master seed,
trial index), so results are reproducible and independent of execution
order. The worker pool size comes from the SHDS_LAB_THREADS environment
variable and never changes the numbers, only the wall time.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .constants import THREADS_ENV_VAR, WILSON_Z
from .foster import CertificateData, monitor_along_arc
from .hybrid_core import SPSystem, StateVector, Termination, canonical_json
from .simulate import NonFiniteStateError, SimConfig, simulate_arc, _fmt, \
    _write_csv
from .stochastic import PURPOSE_INIT, RandomStream, UniformBall, sample


class AnalysisError(RuntimeError):
    pass


def thread_count(override: int | None = None) -> int:
    if override is not None:
        n = int(override)
    else:
        raw = os.environ.get(THREADS_ENV_VAR, "1")
        try:
            n = int(raw)
        except ValueError:
            raise AnalysisError(
                f"{THREADS_ENV_VAR} must be an integer, got {raw!r}")
    if n < 1:
        raise AnalysisError("thread count must be at least 1")
    return min(n, 64)


def wilson_interval(successes: int, n: int,
                    z: float = WILSON_Z) -> tuple[float, float]:
    """Score interval for a binomial proportion."""
    if n < 0 or successes < 0 or successes > n:
        raise AnalysisError("need 0 <= successes <= n")
    if n == 0:
        return 0.0, 1.0
    phat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2.0 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n
                         + z2 / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class TrialOutcome:
    index: int
    termination: str
    stop_label: str | None
    final_t: float
    final_j: int
    final_metric: float
    sup_metric: float
    sup_after: float
    hit_t: float | None
    hit_j: int | None
    nonfinite: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "termination": self.termination,
            "stop_label": self.stop_label,
            "final_t": self.final_t,
            "final_j": self.final_j,
            "final_metric": self.final_metric,
            "sup_metric": self.sup_metric,
            "sup_after": self.sup_after,
            "hit_t": self.hit_t,
            "hit_j": self.hit_j,
            "nonfinite": self.nonfinite,
        }


def _sample_initial(system: SPSystem, init_sampler, stream: RandomStream,
                    max_tries: int = 1000) -> StateVector:
    for _ in range(max_tries):
        y0 = init_sampler(stream)
        if system.flow_set.contains(y0) or system.jump_set.contains(y0):
            return y0
    raise AnalysisError(
        "initial sampler failed to land in the flow or jump set "
        f"after {max_tries} tries")


def _run_trial(system: SPSystem, index: int, master_seed: int, init_sampler,
               config: SimConfig, metric, stop_condition,
               t_after: float) -> TrialOutcome:
    init_stream = RandomStream(master_seed, trial_index=index,
                               purpose=PURPOSE_INIT)
    y0 = _sample_initial(system, init_sampler, init_stream)

    if stop_condition is not None:
        label = stop_condition(0.0, 0, y0)
        if label is not None:
            m0 = metric(y0)
            hit = label == "hit"
            return TrialOutcome(
                index=index, termination=Termination.STOPPED_BY_CALLBACK.value,
                stop_label=label, final_t=0.0, final_j=0, final_metric=m0,
                sup_metric=m0, sup_after=m0 if t_after <= 0.0 else -math.inf,
                hit_t=0.0 if hit else None, hit_j=0 if hit else None,
                nonfinite=False)

    stream = RandomStream(master_seed, trial_index=index)
    try:
        arc = simulate_arc(system, y0, config, stream=stream,
                           stop_condition=stop_condition)
    except NonFiniteStateError:
        return TrialOutcome(
            index=index, termination="nonfinite", stop_label=None,
            final_t=math.nan, final_j=-1, final_metric=math.inf,
            sup_metric=math.inf, sup_after=math.inf, hit_t=None, hit_j=None,
            nonfinite=True)

    sup_all = -math.inf
    sup_after = -math.inf
    final_metric = 0.0
    for t, j, row, _seg in arc.iter_rows():
        sv = StateVector(row[:system.dim_x], row[system.dim_x:])
        m = metric(sv)
        final_metric = m
        if m > sup_all:
            sup_all = m
        if t >= t_after and m > sup_after:
            sup_after = m

    ft = arc.final_time
    hit = (arc.termination is Termination.STOPPED_BY_CALLBACK
           and arc.stop_label == "hit")
    return TrialOutcome(
        index=index, termination=arc.termination.value,
        stop_label=arc.stop_label, final_t=ft.t, final_j=ft.j,
        final_metric=final_metric, sup_metric=sup_all, sup_after=sup_after,
        hit_t=ft.t if hit else None, hit_j=ft.j if hit else None,
        nonfinite=False)


def run_trials(system: SPSystem, init_sampler, n_trials: int,
               config: SimConfig, master_seed: int = 0, metric=None,
               stop_condition=None, t_after: float = 0.0,
               threads: int | None = None) -> tuple[TrialOutcome, ...]:
    """Simulate n_trials independent arcs and collect per-trial outcomes.

    Outcomes are returned sorted by trial index regardless of the
    completion order inside the worker pool.
    """
    if n_trials < 1:
        raise AnalysisError("need at least one trial")
    if metric is None:
        metric = lambda sv: 0.0

    slots: list[TrialOutcome | None] = [None] * n_trials

    def work(i: int):
        slots[i] = _run_trial(system, i, master_seed, init_sampler, config,
                              metric, stop_condition, t_after)

    n_workers = thread_count(threads)
    if n_workers == 1:
        for i in range(n_trials):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(work, range(n_trials)))
    return tuple(slots)  # type: ignore[arg-type]


def default_metric(system: SPSystem, cert: CertificateData):
    """Distance surrogate: worse of the slow target distance and the
    fast offset from the manifold."""

    def metric(sv: StateVector) -> float:
        return max(cert.target_distance(sv.x),
                   system.manifold.distance(sv.x, sv.z))

    return metric


@dataclass(frozen=True)
class ContainmentReport:
    outcomes: tuple[TrialOutcome, ...]
    threshold: float
    t_after: float
    successes: int
    fraction: float
    wilson_low: float
    wilson_high: float
    nonfinite_fraction: float

    @property
    def n_trials(self) -> int:
        return len(self.outcomes)

    def to_dict(self) -> dict:
        return {
            "kind": "containment",
            "n_trials": self.n_trials,
            "threshold": self.threshold,
            "t_after": self.t_after,
            "successes": self.successes,
            "fraction": self.fraction,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
            "nonfinite_fraction": self.nonfinite_fraction,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def estimate_containment(system: SPSystem, cert: CertificateData,
                         init_sampler, n_trials: int, threshold: float,
                         config: SimConfig, master_seed: int = 0,
                         metric=None, t_after: float = 0.0,
                         threads: int | None = None) -> ContainmentReport:
    """Fraction of trials whose distance surrogate stays below the
    threshold from t_after onward."""
    if metric is None:
        metric = default_metric(system, cert)
    outcomes = run_trials(system, init_sampler, n_trials, config,
                          master_seed=master_seed, metric=metric,
                          t_after=t_after, threads=threads)
    successes = sum(1 for o in outcomes
                    if not o.nonfinite and o.sup_after <= threshold)
    lo, hi = wilson_interval(successes, n_trials)
    bad = sum(1 for o in outcomes if o.nonfinite)
    return ContainmentReport(
        outcomes=outcomes, threshold=threshold, t_after=t_after,
        successes=successes, fraction=successes / n_trials, wilson_low=lo,
        wilson_high=hi, nonfinite_fraction=bad / n_trials)


@dataclass(frozen=True)
class RecurrenceReport:
    outcomes: tuple[TrialOutcome, ...]
    budget: float
    hits: int
    hit_fraction: float
    wilson_low: float
    wilson_high: float
    timed_out_fraction: float
    nonfinite_fraction: float
    hitting_times: tuple[float, ...]

    @property
    def n_trials(self) -> int:
        return len(self.outcomes)

    def hitting_percentile(self, q: float) -> float:
        if not self.hitting_times:
            return math.inf
        k = min(len(self.hitting_times) - 1,
                int(math.ceil(q * len(self.hitting_times))) - 1)
        return self.hitting_times[max(0, k)]

    def to_dict(self) -> dict:
        return {
            "kind": "recurrence",
            "n_trials": self.n_trials,
            "budget": self.budget,
            "hits": self.hits,
            "hit_fraction": self.hit_fraction,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
            "timed_out_fraction": self.timed_out_fraction,
            "nonfinite_fraction": self.nonfinite_fraction,
            "hitting_time_p50": self.hitting_percentile(0.5),
            "hitting_time_p95": self.hitting_percentile(0.95),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def recurrence_stop(system: SPSystem, cert: CertificateData, budget: float):
    """Stop on first entry into the recurrence target, or when the
    hybrid time budget t + j runs out."""
    if cert.recur_set_Ox is None or cert.chi is None:
        raise AnalysisError(
            "certificate does not define a recurrence target")

    def stop(t: float, j: int, sv: StateVector) -> str | None:
        r = system.manifold.distance(sv.x, sv.z)
        if cert.in_recurrence_target(sv.x, r):
            return "hit"
        if t + j >= budget:
            return "budget"
        return None

    return stop


def estimate_recurrence(system: SPSystem, cert: CertificateData,
                        init_sampler, n_trials: int, budget: float,
                        config: SimConfig, master_seed: int = 0,
                        threads: int | None = None) -> RecurrenceReport:
    """Fraction of trials that reach the recurrence target within a
    hybrid time budget measured as t + j."""
    stop = recurrence_stop(system, cert, budget)
    metric = default_metric(system, cert)
    outcomes = run_trials(system, init_sampler, n_trials, config,
                          master_seed=master_seed, metric=metric,
                          stop_condition=stop, threads=threads)
    hits = sum(1 for o in outcomes if o.stop_label == "hit")
    timed_out = sum(1 for o in outcomes if o.stop_label == "budget")
    bad = sum(1 for o in outcomes if o.nonfinite)
    times = tuple(sorted(o.hit_t + o.hit_j for o in outcomes
                         if o.hit_t is not None))
    lo, hi = wilson_interval(hits, n_trials)
    return RecurrenceReport(
        outcomes=outcomes, budget=budget, hits=hits,
        hit_fraction=hits / n_trials, wilson_low=lo, wilson_high=hi,
        timed_out_fraction=timed_out / n_trials,
        nonfinite_fraction=bad / n_trials, hitting_times=times)


def default_initializer(scenario, radius: float):
    """Family-specific initial sampler spreading starts over a ball of
    the given radius (structural components such as modes and timers are
    drawn from their own ranges)."""
    name = scenario.name

    if name == "example1":
        def init(stream: RandomStream) -> StateVector:
            x0 = radius * stream.uniform()
            z0 = -x0 + (2.0 * stream.uniform() - 1.0)
            return StateVector(np.array([x0]), np.array([z0]))
        return init

    if name == "switching":
        ball = UniformBall(np.zeros(2), radius)

        def init(stream: RandomStream) -> StateVector:
            xi = sample(ball, stream)
            q = 1.0 if stream.uniform() < 0.5 else 2.0
            tau = 2.0 * stream.uniform()
            z = sample(ball, stream)
            return StateVector(np.concatenate([xi, [q, tau]]), z)
        return init

    if name == "heavy_ball":
        ball = UniformBall(np.zeros(4), radius)

        def init(stream: RandomStream) -> StateVector:
            up = sample(ball, stream)
            return StateVector(np.concatenate([up, [0.0]]),
                               np.array(up[:2]))
        return init

    if name == "switching_plant":
        ball = UniformBall(np.zeros(2), radius)

        def init(stream: RandomStream) -> StateVector:
            x = sample(ball, stream)
            xi = sample(ball, stream)
            q = 1.0 if stream.uniform() < 0.5 else 2.0
            tau = 2.0 * stream.uniform()
            return StateVector(x, np.concatenate([xi, [q, tau]]))
        return init

    if name == "bounded_inputs":
        ball = UniformBall(np.zeros(2), radius)
        input_ball = UniformBall(np.zeros(2), 1.0)

        def init(stream: RandomStream) -> StateVector:
            xi = sample(ball, stream)
            u = sample(input_ball, stream)
            tau = stream.uniform()
            z = sample(ball, stream)
            return StateVector(np.concatenate([xi, u, [tau]]), z)
        return init

    raise AnalysisError(f"no default initializer for scenario {name!r}")


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    value: float
    n_trials: int


@dataclass(frozen=True)
class SweepResult:
    metric: str
    rows: tuple[SweepRow, ...]
    eps_star: float

    def values(self) -> list[float]:
        return [r.value for r in self.rows]

    def to_dict(self) -> dict:
        return {
            "kind": "epsilon_sweep",
            "metric": self.metric,
            "eps_star": self.eps_star,
            "rows": [{"epsilon": r.epsilon, "value": r.value,
                      "n_trials": r.n_trials} for r in self.rows],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


SWEEP_METRICS = ("tracking", "recurrence", "monitor")


def epsilon_sweep(builder, eps_values, *, metric: str = "tracking",
                  n_trials: int = 8, radius: float = 2.0,
                  master_seed: int = 0, t_window=(1.0, 5.0),
                  budget: float = 50.0,
                  threads: int | None = None) -> SweepResult:
    """Re-run a scenario family across time-scale parameters.

    `builder` maps epsilon to a Scenario. `tracking` averages, over
    trials, the largest manifold offset inside the time window;
    `recurrence` reports the hit fraction; `monitor` the mean number of
    flagged composite increases along flows.
    """
    eps_values = [float(e) for e in eps_values]
    if not eps_values or any(e <= 0 for e in eps_values):
        raise AnalysisError("epsilon values must be positive")
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise AnalysisError("epsilon values must be strictly decreasing")
    if metric not in SWEEP_METRICS:
        raise AnalysisError(f"metric must be one of {SWEEP_METRICS}")

    rows = []
    eps_star = None
    for eps in eps_values:
        sc = builder(eps)
        if eps_star is None:
            eps_star = sc.eps_star
        system = sc.system
        config = sc.default_sim_config(
            horizon_t=(t_window[1] if metric == "tracking" else budget))
        sampler = default_initializer(sc, radius)

        if metric == "recurrence":
            rep = estimate_recurrence(system, sc.cert, sampler, n_trials,
                                      budget, config,
                                      master_seed=master_seed,
                                      threads=threads)
            value = rep.hit_fraction
        elif metric == "monitor":
            flags = 0
            for i in range(n_trials):
                init_stream = RandomStream(master_seed, trial_index=i,
                                           purpose=PURPOSE_INIT)
                y0 = _sample_initial(system, sampler, init_stream)
                arc = simulate_arc(system, y0, config,
                                   stream=RandomStream(master_seed,
                                                       trial_index=i))
                trace = monitor_along_arc(sc.cert, sc.theta, arc, system,
                                          config.step_h)
                flags += trace.n_flags
            value = flags / n_trials
        else:
            def in_window(sv, t, lo=t_window[0], hi=t_window[1]):
                return lo <= t <= hi

            sup_sum = 0.0
            for i in range(n_trials):
                init_stream = RandomStream(master_seed, trial_index=i,
                                           purpose=PURPOSE_INIT)
                y0 = _sample_initial(system, sampler, init_stream)
                arc = simulate_arc(system, y0, config,
                                   stream=RandomStream(master_seed,
                                                       trial_index=i))
                sup = 0.0
                for t, j, row, _seg in arc.iter_rows():
                    if t_window[0] <= t <= t_window[1]:
                        sv = StateVector(row[:system.dim_x],
                                         row[system.dim_x:])
                        d = system.manifold.distance(sv.x, sv.z)
                        if d > sup:
                            sup = d
                sup_sum += sup
            value = sup_sum / n_trials

        rows.append(SweepRow(epsilon=eps, value=value, n_trials=n_trials))

    return SweepResult(metric=metric, rows=tuple(rows),
                       eps_star=float(eps_star))


def uniformity_sweep(scenario, radii, n_trials: int, budget: float,
                     master_seed: int = 0,
                     threads: int | None = None) -> list[dict]:
    """Recurrence hitting-time tail versus initial spread radius."""
    out = []
    for radius in radii:
        sampler = default_initializer(scenario, radius)
        config = scenario.default_sim_config(horizon_t=budget)
        rep = estimate_recurrence(scenario.system, scenario.cert, sampler,
                                  n_trials, budget, config,
                                  master_seed=master_seed, threads=threads)
        out.append({
            "radius": float(radius),
            "hit_fraction": rep.hit_fraction,
            "hitting_time_p95": rep.hitting_percentile(0.95),
        })
    return out


def export_trials_csv(path, outcomes, header: dict | None = None):
    """One row per trial; missing hitting times are left empty."""
    columns = ["index", "termination", "stop_label", "t", "j",
               "final_metric", "sup_metric", "sup_after", "hit_t", "hit_j",
               "nonfinite"]

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, bool):
            return "1" if v else "0"
        return _fmt(v)

    rows = [[cell(o.index), o.termination, o.stop_label or "",
             cell(o.final_t), cell(o.final_j), cell(o.final_metric),
             cell(o.sup_metric), cell(o.sup_after), cell(o.hit_t),
             cell(o.hit_j), cell(o.nonfinite)] for o in outcomes]
    _write_csv(path, header or {}, columns, rows)
