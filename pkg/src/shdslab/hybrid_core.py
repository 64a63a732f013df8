"""Core types for two-time-scale stochastic hybrid systems.

A system couples a slow state x and a fast state z. During flows x follows
flow_x and z follows flow_z / epsilon; on the jump set, the state is reset
through a noise-driven jump map. Time is hybrid: (t, j) pairs ordered
componentwise.
"""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .constants import DELTA_SET


def canonical_json(obj) -> str:
    """Serialise with sorted keys and no whitespace: byte-stable across runs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    """sha256 of the canonical serialisation, hex digest."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class HybridTime:
    """A point (t, j) in hybrid time: t flow seconds, j jumps so far."""

    t: float
    j: int

    def __post_init__(self):
        if not (self.t >= 0 and self.j >= 0):
            raise ValueError("hybrid time needs t >= 0 and j >= 0")

    @property
    def total(self) -> float:
        return self.t + self.j

    def precedes(self, other: "HybridTime") -> bool:
        return (self.total <= other.total and self.t <= other.t
                and self.j <= other.j)

    def __le__(self, other: "HybridTime") -> bool:
        return self.precedes(other)

    def __lt__(self, other: "HybridTime") -> bool:
        return self.precedes(other) and self != other


@dataclass(frozen=True)
class StateVector:
    """Immutable (x, z) pair; arrays are copied in and marked read-only."""

    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        for name in ("x", "z"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def y(self) -> np.ndarray:
        """Concatenated state (x, z)."""
        return np.concatenate([self.x, self.z])

    @property
    def dim_x(self) -> int:
        return self.x.shape[0]

    @property
    def dim_z(self) -> int:
        return self.z.shape[0]

    def with_parts(self, x=None, z=None) -> "StateVector":
        return StateVector(self.x if x is None else x,
                           self.z if z is None else z)

    @staticmethod
    def from_flat(y: np.ndarray, dim_x: int) -> "StateVector":
        y = np.asarray(y, dtype=float).ravel()
        return StateVector(y[:dim_x], y[dim_x:])


@dataclass(frozen=True)
class SetPredicate:
    """Signed membership test for a closed set.

    `membership` maps a state to a scalar that is <= 0 on the set and
    positive outside; a point counts as inside iff the value is at most the
    shared slack DELTA_SET. `event`, when given, is a continuous function
    whose sign change localises boundary crossings during integration
    (useful when the membership value itself is a one-sided distance).
    """

    membership: Callable[[StateVector], float]
    name: str = ""
    event: Callable[[StateVector], float] | None = None

    def contains(self, y: StateVector, slack: float = DELTA_SET) -> bool:
        return float(self.membership(y)) <= slack

    def event_value(self, y: StateVector) -> float:
        fn = self.event if self.event is not None else self.membership
        return float(fn(y))


@dataclass(frozen=True)
class Manifold:
    """Quasi-steady-state set M(x), here always a single point per x."""

    project: Callable[[np.ndarray], np.ndarray]
    distance_fn: Callable[[np.ndarray, np.ndarray], float] | None = None

    def distance(self, x: np.ndarray, z: np.ndarray) -> float:
        if self.distance_fn is not None:
            return float(self.distance_fn(x, z))
        return float(np.linalg.norm(np.asarray(z) - self.project(x)))


def affine_manifold(M_lin: np.ndarray, m_off: np.ndarray,
                    x_indices: Sequence[int] | None = None) -> Manifold:
    """Manifold z = M_lin @ x[idx] + m_off.

    `x_indices` selects the slow components the map depends on (timers and
    mode labels usually do not enter).
    """
    M_lin = np.asarray(M_lin, dtype=float)
    m_off = np.asarray(m_off, dtype=float).ravel()
    idx = None if x_indices is None else np.asarray(x_indices, dtype=int)

    def project(x: np.ndarray) -> np.ndarray:
        xv = np.asarray(x, dtype=float)
        if idx is not None:
            xv = xv[idx]
        return M_lin @ xv + m_off

    return Manifold(project)


@dataclass(frozen=True)
class SelectionParam:
    """Scalar parameter range selecting a point of a set-valued map."""

    lo: float
    hi: float
    default: float

    def __post_init__(self):
        if not (self.lo <= self.default <= self.hi):
            raise ValueError("selection default outside [lo, hi]")

    def grid(self, n: int) -> np.ndarray:
        return np.linspace(self.lo, self.hi, n)


@dataclass(frozen=True)
class SPSystem:
    """A singularly perturbed stochastic hybrid system.

    flow_x(x, z, s) and flow_z(x, z, s) are the slow and the unscaled fast
    vector fields; the integrator applies the 1/epsilon scaling to flow_z.
    jump_map(x, z, v, s) -> (x_plus, z_plus) consumes one noise draw v.
    The optional selection parameters expose the set-valued freedom of the
    flow and jump maps; maps that are single valued ignore s.
    """

    epsilon: float
    flow_set: SetPredicate
    jump_set: SetPredicate
    flow_x: Callable
    flow_z: Callable
    jump_map: Callable
    measure: object
    dim_x: int
    dim_z: int
    manifold: Manifold | None = None
    flow_selection: SelectionParam | None = None
    jump_selection: SelectionParam | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def with_epsilon(self, epsilon: float) -> "SPSystem":
        return replace(self, epsilon=epsilon)

    def flow_field(self, y: np.ndarray, s) -> np.ndarray:
        """Full right-hand side (dx/dt, dz/dt) on the flat state."""
        x, z = y[:self.dim_x], y[self.dim_x:]
        return np.concatenate([
            np.asarray(self.flow_x(x, z, s), dtype=float),
            np.asarray(self.flow_z(x, z, s), dtype=float) / self.epsilon,
        ])


def manifold_distance(system: SPSystem, y: StateVector) -> float:
    if system.manifold is None:
        raise ValueError("system has no quasi-steady-state manifold attached")
    return system.manifold.distance(y.x, y.z)


@dataclass(frozen=True)
class ReducedSystem:
    """Slow dynamics with the fast state pinned to the manifold."""

    flow: Callable
    jump: Callable
    manifold: Manifold

    def flow_at(self, x: np.ndarray, s=None) -> np.ndarray:
        return np.asarray(self.flow(x, s), dtype=float)


def build_reduced(system: SPSystem, hull_samples: int = 0) -> ReducedSystem:
    """Substitute z = M(x) into the slow field and the jump map.

    `hull_samples` is accepted for forward compatibility with set-valued
    manifolds; the systems shipped here have singleton M(x), for which no
    hull sampling is needed.
    """
    if system.manifold is None:
        raise ValueError("cannot reduce a system without a manifold")
    manifold = system.manifold

    def flow(x, s=None):
        return np.asarray(system.flow_x(x, manifold.project(x), s),
                          dtype=float)

    def jump(x, v, s=None):
        x_plus, _ = system.jump_map(x, manifold.project(x), v, s)
        return np.asarray(x_plus, dtype=float)

    return ReducedSystem(flow, jump, manifold)


class Termination(enum.Enum):
    HORIZON_REACHED = "horizon_reached"
    LEFT_C_AND_D = "left_C_and_D"
    JUMP_BUDGET_EXHAUSTED = "jump_budget_exhausted"
    STOPPED_BY_CALLBACK = "stopped_by_callback"


@dataclass
class FlowSegment:
    """Sampled flow interval at constant jump count."""

    start: HybridTime
    times: np.ndarray
    states: np.ndarray
    dim_x: int

    @property
    def samples(self) -> list:
        return [(float(t), StateVector.from_flat(row, self.dim_x))
                for t, row in zip(self.times, self.states)]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def final_state(self) -> StateVector:
        return StateVector.from_flat(self.states[-1], self.dim_x)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass(frozen=True)
class JumpRecord:
    """One jump: hybrid instant, noise draw consumed, pre and post states."""

    time: HybridTime
    v: np.ndarray
    y_pre: StateVector
    y_post: StateVector


@dataclass
class HybridArc:
    """A simulated solution: flow segments interleaved with jumps.

    Segment i runs at jump count j = i, jumps[i] separates segment i from
    segment i+1, and a (possibly single-sample) segment always follows the
    last jump, so len(segments) == len(jumps) + 1. The recorded v values
    are exactly the noise draws consumed, in order.
    """

    segments: list
    jumps: list
    termination: Termination
    stop_label: str | None = None

    def __post_init__(self):
        if len(self.segments) != len(self.jumps) + 1:
            raise ValueError("arc needs exactly one more segment than jumps")

    @property
    def final_time(self) -> HybridTime:
        return HybridTime(self.segments[-1].final_time, len(self.jumps))

    @property
    def final_state(self) -> StateVector:
        return self.segments[-1].final_state

    def iter_rows(self):
        """Yield (t, j, flat state, segment_id) over all recorded samples."""
        for j, seg in enumerate(self.segments):
            for t, row in zip(seg.times, seg.states):
                yield float(t), j, row, j
