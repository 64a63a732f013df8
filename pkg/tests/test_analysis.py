"""Monte Carlo trial running: reports, thread invariance, delimited export."""
import dataclasses

import numpy as np
import pytest

from shdslab.analysis import (
    AnalysisError,
    default_initializer,
    default_metric,
    epsilon_sweep,
    estimate_containment,
    estimate_recurrence,
    export_trials_csv,
    recurrence_stop,
    run_trials,
    thread_count,
    wilson_interval,
)
from shdslab.scenarios import get_scenario


def test_wilson_interval_reference_values():
    low, high = wilson_interval(95, 100)
    assert low == pytest.approx(0.8882495307680808, abs=1e-15)
    assert high == pytest.approx(0.9784563208456319, abs=1e-15)
    assert wilson_interval(0, 0) == (0.0, 1.0)
    low_all, high_all = wilson_interval(200, 200)
    assert low_all == pytest.approx(0.9811546736227335, abs=1e-15)
    assert high_all == 1.0
    assert wilson_interval(0, 50)[0] == pytest.approx(0.0, abs=1e-15)


def test_thread_count_env_override(monkeypatch):
    monkeypatch.delenv("SHDS_LAB_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("SHDS_LAB_THREADS", "6")
    assert thread_count() == 6
    assert thread_count(override=2) == 2
    monkeypatch.setenv("SHDS_LAB_THREADS", "9999")
    assert thread_count() == 64  # capped


def test_run_trials_thread_invariant():
    sc = get_scenario("example1", epsilon=0.1)
    sampler = default_initializer(sc, 3.0)
    config = sc.default_sim_config(horizon_t=2.0)
    metric = default_metric(sc.system, sc.cert)
    one = run_trials(sc.system, sampler, 10, config, master_seed=5, metric=metric, threads=1)
    many = run_trials(sc.system, sampler, 10, config, master_seed=5, metric=metric, threads=4)
    assert [dataclasses.asdict(a) for a in one] == [dataclasses.asdict(b) for b in many]
    assert [o.index for o in one] == list(range(10))


def test_trials_differ_across_seeds_and_indices():
    sc = get_scenario("example1", epsilon=0.1)
    sampler = default_initializer(sc, 3.0)
    config = sc.default_sim_config(horizon_t=0.5)
    metric = default_metric(sc.system, sc.cert)
    a = run_trials(sc.system, sampler, 4, config, master_seed=1, metric=metric)
    b = run_trials(sc.system, sampler, 4, config, master_seed=2, metric=metric)
    finals_a = [t.final_metric for t in a]
    finals_b = [t.final_metric for t in b]
    assert finals_a != finals_b
    assert len(set(finals_a)) > 1  # trial index enters the draw coordinates


def test_estimate_containment_report_shape():
    sc = get_scenario("heavy_ball", epsilon=0.1)
    sampler = default_initializer(sc, 2.0)
    config = sc.default_sim_config(horizon_t=5.0)
    rep = estimate_containment(sc.system, sc.cert, sampler, 12, 50.0, config, master_seed=3)
    assert rep.successes == 12
    assert rep.fraction == 1.0
    assert 0.0 < rep.wilson_low < 1.0
    assert rep.nonfinite_fraction == 0.0


def test_estimate_recurrence_hits_and_percentiles():
    sc = get_scenario("example1", epsilon=0.05)
    sampler = default_initializer(sc, 3.0)
    config = sc.default_sim_config(horizon_t=60.0)
    rep = estimate_recurrence(sc.system, sc.cert, sampler, 20, 60.0, config, master_seed=0)
    assert rep.hits == 20
    assert rep.hit_fraction == 1.0
    assert rep.timed_out_fraction == 0.0
    p50 = rep.hitting_percentile(0.5)
    p95 = rep.hitting_percentile(0.95)
    assert 0.0 <= p50 <= p95 <= 60.0
    assert len(rep.hitting_times) == 20


def test_recurrence_stop_labels():
    sc = get_scenario("example1")
    stop = recurrence_stop(sc.system, sc.cert, budget=10.0)
    inside = np.array([0.2])
    outside = np.array([3.0])
    from shdslab.hybrid_core import StateVector
    assert stop(0.0, 0, StateVector(inside, -inside)) == "hit"
    assert stop(0.0, 0, StateVector(outside, -outside)) is None
    assert stop(9.0, 2, StateVector(outside, -outside)) == "budget"


def test_default_initializer_is_deterministic():
    from shdslab.stochastic import PURPOSE_INIT, RandomStream

    for name in ("example1", "switching", "heavy_ball", "switching_plant", "bounded_inputs"):
        sc = get_scenario(name)
        sampler = default_initializer(sc, 2.0)
        y_a = sampler(RandomStream(7, trial_index=21, purpose=PURPOSE_INIT))
        y_b = sampler(RandomStream(7, trial_index=21, purpose=PURPOSE_INIT))
        y_c = sampler(RandomStream(7, trial_index=22, purpose=PURPOSE_INIT))
        assert np.array_equal(y_a.y, y_b.y)
        assert not np.array_equal(y_a.y, y_c.y)
        assert y_a.dim_x == sc.system.dim_x


def test_export_trials_csv_round_trip(tmp_path):
    sc = get_scenario("example1", epsilon=0.1)
    sampler = default_initializer(sc, 2.0)
    config = sc.default_sim_config(horizon_t=1.0)
    outcomes = run_trials(sc.system, sampler, 5, config, master_seed=2)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    export_trials_csv(p1, outcomes, {"seed": 2})
    export_trials_csv(p2, outcomes, {"seed": 2})
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    assert lines[0] == "# seed: 2"
    assert lines[1].startswith("index,")
    assert len(lines) == 2 + 5


def test_epsilon_sweep_interface():
    rows = epsilon_sweep(lambda eps: get_scenario("example1", epsilon=eps),
                         [0.1, 0.05], metric="tracking", n_trials=3,
                         t_window=(0.5, 1.0), budget=5.0)
    assert rows.metric == "tracking"
    assert [r.epsilon for r in rows.rows] == [0.1, 0.05]
    assert all(r.value >= 0.0 for r in rows.rows)
    with pytest.raises(AnalysisError):
        epsilon_sweep(lambda eps: get_scenario("example1", epsilon=eps),
                      [0.05, 0.1], metric="tracking", n_trials=2)
    with pytest.raises(AnalysisError):
        epsilon_sweep(lambda eps: get_scenario("example1", epsilon=eps),
                      [0.1], metric="no_such_metric", n_trials=2)
