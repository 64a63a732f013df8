"""Fixed-step simulation of two-time-scale stochastic hybrid systems.

Flows advance by classical RK4 on the combined state with the fast field
scaled by 1/epsilon. Set boundaries are localised inside a step by
bisection on a signed event function and then validated against the set's
membership test, so cosmetic sign flips (sawtooth distance functions and
the like) cannot trigger spurious jumps.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .constants import DELTA_SET, EVENT_TOL_DEFAULT
from .hybrid_core import (FlowSegment, HybridArc, HybridTime, JumpRecord,
                          SPSystem, StateVector, Termination)
from .stochastic import PURPOSE_SELECTION, RandomStream, sample


class SimulationError(RuntimeError):
    pass


class NonFiniteStateError(SimulationError):
    pass


class OutsideDomainError(SimulationError):
    pass


class ExitReason(enum.Enum):
    ENTERED_D = "entered_D"
    LEFT_C = "left_C"
    HORIZON = "horizon"
    STOPPED = "stopped"


CD_POLICIES = ("jump_priority", "flow_priority")


@dataclass(frozen=True)
class SimConfig:
    """Knobs for one simulation run.

    cd_policy decides what happens on the overlap of the flow and jump
    sets: "jump_priority" jumps as soon as the jump set is reached,
    "flow_priority" keeps flowing until the flow set is exited.
    flow_selection / jump_selection pick the representative of set-valued
    dynamics: "default" uses the system's registered default, "random"
    draws uniformly from the selection range (once per trial for flows,
    per jump for jumps), "worst" (jumps only) uses the range's upper end,
    and a float fixes the value outright.
    """

    step_h: float = 1e-3
    horizon_t: float = 10.0
    horizon_j: int = 10_000
    cd_policy: str = "jump_priority"
    flow_selection: object = "default"
    jump_selection: object = "random"
    event_tol: float = EVENT_TOL_DEFAULT
    record_samples: bool = True

    def __post_init__(self):
        if not self.step_h > 0:
            raise ValueError("step_h must be positive")
        if self.horizon_t < 0 or self.horizon_j < 0:
            raise ValueError("horizons must be nonnegative")
        if self.cd_policy not in CD_POLICIES:
            raise ValueError(f"unknown cd_policy {self.cd_policy!r}")
        if not self.event_tol > 0:
            raise ValueError("event_tol must be positive")


def rk4_step(field: Callable, y: np.ndarray, h: float) -> np.ndarray:
    k1 = field(y)
    k2 = field(y + 0.5 * h * k1)
    k3 = field(y + 0.5 * h * k2)
    k4 = field(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _require_finite(y: np.ndarray, context: str):
    if not np.all(np.isfinite(y)):
        raise NonFiniteStateError(f"non-finite state during {context}")


def resolve_flow_selection(system: SPSystem, config: SimConfig,
                           selection_stream: RandomStream | None = None):
    """Turn the config's flow_selection policy into a concrete value."""
    if system.flow_selection is None:
        return None
    spec = config.flow_selection
    if isinstance(spec, (int, float)):
        return float(spec)
    if spec == "default":
        return system.flow_selection.default
    if spec == "random":
        if selection_stream is None:
            raise SimulationError(
                "random flow selection needs a selection stream")
        lo, hi = system.flow_selection.lo, system.flow_selection.hi
        return lo + (hi - lo) * selection_stream.uniform()
    raise SimulationError(f"unknown flow_selection {spec!r}")


def resolve_jump_selection(system: SPSystem, config: SimConfig,
                           selection_stream: RandomStream | None = None):
    if system.jump_selection is None:
        return None
    spec = config.jump_selection
    if isinstance(spec, (int, float)):
        return float(spec)
    if spec == "default":
        return system.jump_selection.default
    if spec == "worst":
        return system.jump_selection.hi
    if spec == "random":
        if selection_stream is None:
            raise SimulationError(
                "random jump selection needs a selection stream")
        lo, hi = system.jump_selection.lo, system.jump_selection.hi
        return lo + (hi - lo) * selection_stream.uniform()
    raise SimulationError(f"unknown jump_selection {spec!r}")


def _bisect_inside_boundary(field, y_from, h_step, inside, event_tol):
    """Last parameter theta in [0,1] whose state still satisfies `inside`.

    Returns (theta, state). Assumes inside(rk4 at 0) holds and fails at 1.
    """
    lo, hi = 0.0, 1.0
    y_lo = y_from
    while (hi - lo) * h_step > event_tol:
        mid = 0.5 * (lo + hi)
        y_mid = rk4_step(field, y_from, mid * h_step)
        if inside(y_mid):
            lo, y_lo = mid, y_mid
        else:
            hi = mid
    return lo, y_lo


def _bisect_event_root(field, y_from, y_to, h_step, event_fn, e0, e1,
                       event_tol):
    """Zero crossing of a signed event function within one step.

    Bisects until the bracket is below event_tol in time, then keeps
    halving (up to a fixed budget) until the event value itself is well
    inside the membership slack, so the located state passes validation.
    """
    lo, hi = 0.0, 1.0
    e_lo = e0
    theta, y_theta, e_theta = 1.0, y_to, e1
    for _ in range(200):
        if (hi - lo) * h_step <= event_tol and abs(e_theta) <= 0.25 * DELTA_SET:
            break
        mid = 0.5 * (lo + hi)
        y_mid = rk4_step(field, y_from, mid * h_step)
        e_mid = float(event_fn(y_mid))
        theta, y_theta, e_theta = mid, y_mid, e_mid
        if (e_lo <= 0.0) == (e_mid <= 0.0):
            lo, e_lo = mid, e_mid
        else:
            hi = mid
    return theta, y_theta


def integrate_flow(system: SPSystem, y0: StateVector, config: SimConfig,
                   start: HybridTime = HybridTime(0.0, 0),
                   selection=None, stop_condition=None
                   ) -> tuple[FlowSegment, ExitReason]:
    """Flow from y0 until the jump set is reached, the flow set is left,
    or the time horizon expires.

    The returned segment samples every accepted step (or just the
    endpoints when sample recording is off). Raises OutsideDomainError if
    y0 is not in the flow set and NonFiniteStateError if the state leaves
    the representable range.
    """
    m0 = float(system.flow_set.membership(y0))
    if m0 > DELTA_SET:
        raise OutsideDomainError(
            f"initial state outside the flow set (membership {m0:g})")
    if selection is None:
        selection = resolve_flow_selection(system, config)
    s = selection
    dim_x = system.dim_x

    def field(y):
        return system.flow_field(y, s)

    def in_C(y_flat):
        return float(system.flow_set.membership(
            StateVector.from_flat(y_flat, dim_x))) <= DELTA_SET

    times = [start.t]
    states = [y0.y]

    def finish(reason):
        tt = np.asarray(times)
        ss = np.vstack(states)
        if not config.record_samples and len(times) > 2:
            tt = tt[[0, -1]]
            ss = ss[[0, -1]]
        return FlowSegment(start, tt, ss, dim_x), reason

    sv_cur = y0
    if (config.cd_policy == "jump_priority"
            and system.jump_set.contains(sv_cur)):
        return finish(ExitReason.ENTERED_D)
    if stop_condition is not None and stop_condition(start.t, sv_cur):
        return finish(ExitReason.STOPPED)

    t_cur = start.t
    y_cur = y0.y
    e_cur = float(system.jump_set.event_value(sv_cur))
    horizon_slack = 1e-12 * max(1.0, abs(config.horizon_t))
    while True:
        remaining = config.horizon_t - t_cur
        if remaining <= horizon_slack:
            return finish(ExitReason.HORIZON)
        h_step = min(config.step_h, remaining)
        y_new = rk4_step(field, y_cur, h_step)
        _require_finite(y_new, "flow integration")
        sv_new = StateVector.from_flat(y_new, dim_x)

        theta_D = np.inf
        y_D = None
        if config.cd_policy == "jump_priority":
            e_new = float(system.jump_set.event_value(sv_new))
            crossed = (e_cur <= 0.0) != (e_new <= 0.0)
            if crossed:
                def d_event(yy):
                    return system.jump_set.event_value(
                        StateVector.from_flat(yy, dim_x))

                th, y_evt = _bisect_event_root(field, y_cur, y_new, h_step,
                                               d_event, e_cur, e_new,
                                               config.event_tol)
                sv_evt = StateVector.from_flat(y_evt, dim_x)
                if system.jump_set.contains(sv_evt):
                    theta_D, y_D = th, y_evt
            if np.isinf(theta_D) and system.jump_set.contains(sv_new):
                theta_D, y_D = 1.0, y_new
        else:
            e_new = e_cur

        theta_C = np.inf
        y_C = None
        if float(system.flow_set.membership(sv_new)) > DELTA_SET:
            theta_C, y_C = _bisect_inside_boundary(field, y_cur, h_step, in_C,
                                                   config.event_tol)

        if theta_D < np.inf or theta_C < np.inf:
            tie_slack = config.event_tol / h_step
            if theta_D <= theta_C + tie_slack:
                times.append(t_cur + theta_D * h_step)
                states.append(y_D)
                return finish(ExitReason.ENTERED_D)
            times.append(t_cur + theta_C * h_step)
            states.append(y_C)
            sv_exit = StateVector.from_flat(y_C, dim_x)
            if (config.cd_policy == "flow_priority"
                    and system.jump_set.contains(sv_exit)):
                return finish(ExitReason.ENTERED_D)
            return finish(ExitReason.LEFT_C)

        t_cur += h_step
        y_cur = y_new
        e_cur = e_new
        times.append(t_cur)
        states.append(y_new)
        if stop_condition is not None and stop_condition(t_cur, sv_new):
            return finish(ExitReason.STOPPED)


def execute_jump(system: SPSystem, y: StateVector, stream: RandomStream,
                 config: SimConfig,
                 selection_stream: RandomStream | None = None
                 ) -> tuple[np.ndarray, StateVector]:
    """Draw one noise value and apply the jump map at y.

    y must lie in the jump set. The noise comes from `stream`; a random
    jump selection draws from `selection_stream` (a fresh purpose-tagged
    clone of `stream` when not provided).
    """
    m = float(system.jump_set.membership(y))
    if m > DELTA_SET:
        raise OutsideDomainError(
            f"jump requested outside the jump set (membership {m:g})")
    if selection_stream is None and system.jump_selection is not None:
        selection_stream = stream.clone(PURPOSE_SELECTION)
    s = resolve_jump_selection(system, config, selection_stream)
    v = sample(system.measure, stream)
    gx, gz = system.jump_map(y.x, y.z, v, s)
    gx = np.asarray(gx, dtype=float)
    gz = np.asarray(gz, dtype=float)
    _require_finite(gx, "jump map")
    _require_finite(gz, "jump map")
    return v, StateVector(gx, gz)


def _point_segment(t: float, j: int, y: StateVector) -> FlowSegment:
    return FlowSegment(HybridTime(t, j), np.array([t]), y.y[None, :],
                       y.dim_x)


def simulate_arc(system: SPSystem, y0: StateVector, config: SimConfig,
                 stream: RandomStream | None = None,
                 stop_condition=None) -> HybridArc:
    """Run the hybrid dynamics from y0 until a horizon or domain exit.

    `stream` supplies the jump noise; selection draws use a purpose-tagged
    clone so noise replay is unaffected by selection policy. An optional
    stop_condition(t, j, state) -> label halts the run early; the label is
    stored on the arc.
    """
    if stream is None:
        stream = RandomStream(0)
    selection_stream = stream.clone(PURPOSE_SELECTION)
    flow_sel = resolve_flow_selection(system, config, selection_stream)

    segments: list[FlowSegment] = []
    jumps: list[JumpRecord] = []
    t_cur = 0.0
    j = 0
    y_cur = y0
    stop_label: str | None = None

    def make_arc(term: Termination) -> HybridArc:
        if len(segments) == len(jumps):
            segments.append(_point_segment(t_cur, j, y_cur))
        return HybridArc(segments, jumps, term, stop_label)

    if stop_condition is not None:
        label = stop_condition(t_cur, j, y_cur)
        if label:
            stop_label = label
            return make_arc(Termination.STOPPED_BY_CALLBACK)

    while True:
        in_C = system.flow_set.contains(y_cur)
        in_D = system.jump_set.contains(y_cur)
        if in_C:
            label_cell: list[str] = []

            def seg_stop(t, sv):
                if stop_condition is None:
                    return False
                label = stop_condition(t, j, sv)
                if label:
                    label_cell.append(label)
                    return True
                return False

            seg, reason = integrate_flow(system, y_cur, config,
                                         start=HybridTime(t_cur, j),
                                         selection=flow_sel,
                                         stop_condition=seg_stop)
            segments.append(seg)
            y_cur = seg.final_state
            t_cur = seg.final_time
            if reason is ExitReason.STOPPED:
                stop_label = label_cell[0] if label_cell else "stopped"
                return make_arc(Termination.STOPPED_BY_CALLBACK)
            if reason is ExitReason.HORIZON:
                return make_arc(Termination.HORIZON_REACHED)
            if reason is ExitReason.LEFT_C:
                return make_arc(Termination.LEFT_C_AND_D)
        elif in_D:
            segments.append(_point_segment(t_cur, j, y_cur))
        else:
            return make_arc(Termination.LEFT_C_AND_D)

        # The flow stopped on the jump set (or the state started there).
        if j >= config.horizon_j:
            return make_arc(Termination.JUMP_BUDGET_EXHAUSTED)
        v, y_plus = execute_jump(system, y_cur, stream, config,
                                 selection_stream)
        jumps.append(JumpRecord(HybridTime(t_cur, j), v, y_cur, y_plus))
        j += 1
        y_cur = y_plus
        if stop_condition is not None:
            label = stop_condition(t_cur, j, y_cur)
            if label:
                stop_label = label
                return make_arc(Termination.STOPPED_BY_CALLBACK)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path, header: dict | None, columns: list[str], rows):
    lines = []
    if header:
        for key, val in header.items():
            lines.append(f"# {key}: {val}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def state_column_names(dim_x: int, dim_z: int) -> list[str]:
    return [f"x{i}" for i in range(dim_x)] + [f"z{i}" for i in range(dim_z)]


def export_arc_csv(arc: HybridArc, path, header: dict | None = None):
    """Write the sampled arc as CSV: t, j, state components, segment_id."""
    seg0 = arc.segments[0]
    dim_x = seg0.dim_x
    dim_z = seg0.states.shape[1] - dim_x
    columns = ["t", "j"] + state_column_names(dim_x, dim_z) + ["segment_id"]
    rows = ([t, j] + [float(v) for v in row] + [seg_id]
            for t, j, row, seg_id in arc.iter_rows())
    _write_csv(path, header, columns, rows)


def export_jumps_csv(arc: HybridArc, path, header: dict | None = None):
    """Write the jump log: instant, noise draw, pre and post states."""
    seg0 = arc.segments[0]
    dim_x = seg0.dim_x
    dim_z = seg0.states.shape[1] - dim_x
    state_cols = state_column_names(dim_x, dim_z)
    dim_v = arc.jumps[0].v.shape[0] if arc.jumps else (
        getattr(getattr(arc, "measure", None), "dim", None) or 0)
    columns = (["t", "j"] + [f"v{i}" for i in range(dim_v)]
               + [f"pre_{c}" for c in state_cols]
               + [f"post_{c}" for c in state_cols])
    rows = ([rec.time.t, rec.time.j] + [float(v) for v in rec.v]
            + [float(a) for a in rec.y_pre.y]
            + [float(a) for a in rec.y_post.y]
            for rec in arc.jumps)
    _write_csv(path, header, columns, rows)


def export_monitor_csv(trace, path, header: dict | None = None):
    """Write a certificate monitor trace: t, j, E, tube flag, step flag."""
    flagged = set(trace.flags)
    columns = ["t", "j", "E", "inside_target", "flagged"]
    rows = ([t, j, e, int(inside), int(i in flagged)]
            for i, (t, j, e, inside) in enumerate(trace.rows))
    _write_csv(path, header, columns, rows)
