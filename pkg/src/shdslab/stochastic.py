"""Deterministic random streams and jump-noise measures.

Streams are counter based: every draw is a pure function of
(master_seed, trial_index, purpose, draw_counter, component), so any trial
can be replayed bit for bit without storing generator state, and trials can
be evaluated in any order or split across workers without coordination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .constants import MC_N_DEFAULT, QUAD_NODES_DEFAULT

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_DOMAIN = 0x243F6A8885A308D3

# Purpose tags keep independent draw families (jump noise, flow selections,
# initial conditions) on disjoint subsequences of the same master seed.
PURPOSE_JUMP = 0
PURPOSE_SELECTION = 1
PURPOSE_INIT = 2


def mix64(value: int) -> int:
    """Scalar 64-bit finaliser (SplitMix64 style) on Python ints."""
    v = value & _MASK64
    v = ((v ^ (v >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    v = ((v ^ (v >> 27)) * 0x94D049BB133111EB) & _MASK64
    return v ^ (v >> 31)


def _absorb(state: int, value: int) -> int:
    return mix64(state ^ ((mix64(value) + _GOLDEN) & _MASK64))


def stream_word(master_seed: int, trial_index: int, purpose: int,
                counter: int, component: int) -> int:
    """Hash one draw coordinate to a uint64 word, pure Python path."""
    s = _absorb(_DOMAIN, master_seed)
    s = _absorb(s, trial_index)
    s = _absorb(s, purpose)
    s = _absorb(s, counter)
    s = _absorb(s, component)
    return s


def _mix64_np(v: np.ndarray) -> np.ndarray:
    v = (v ^ (v >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    v = (v ^ (v >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return v ^ (v >> np.uint64(31))


def _absorb_np(state: np.ndarray, value: np.ndarray) -> np.ndarray:
    return _mix64_np(state ^ (_mix64_np(value) + np.uint64(_GOLDEN)))


def stream_words(master_seed: int, trial_index: int, purpose: int,
                 counters: np.ndarray, components: np.ndarray) -> np.ndarray:
    """Vectorised hash over a counters x components grid.

    Returns a uint64 array of shape (len(counters), len(components)) equal
    element for element to `stream_word` at the same coordinates.
    """
    counters = np.asarray(counters, dtype=np.uint64)
    components = np.asarray(components, dtype=np.uint64)
    base = _absorb(_DOMAIN, master_seed)
    base = _absorb(base, trial_index)
    base = _absorb(base, purpose)
    s = _absorb_np(np.full(counters.shape, base, dtype=np.uint64), counters)
    grid = s[:, None] ^ (_mix64_np(components[None, :]) + np.uint64(_GOLDEN))
    return _mix64_np(grid)


def words_to_uniforms(words: np.ndarray) -> np.ndarray:
    # Top 53 bits, offset by half an ulp: values lie strictly inside (0, 1).
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def _uniform_grid(master_seed: int, trial_index: int, purpose: int,
                  counters: np.ndarray, n_components: int) -> np.ndarray:
    comps = np.arange(n_components, dtype=np.uint64)
    return words_to_uniforms(
        stream_words(master_seed, trial_index, purpose, counters, comps))


@dataclass
class RandomStream:
    """Replayable draw source for one trial.

    `draw_counter` advances by one per logical draw; a vector draw (all
    components of one noise sample) consumes a single counter value.
    """

    master_seed: int
    trial_index: int = 0
    purpose: int = PURPOSE_JUMP
    draw_counter: int = 0

    def clone(self, purpose: int) -> "RandomStream":
        """Fresh stream on the same (seed, trial) with its own purpose tag."""
        return RandomStream(self.master_seed, self.trial_index, purpose, 0)

    def take_counters(self, n: int) -> np.ndarray:
        base = self.draw_counter
        self.draw_counter = base + n
        return base + np.arange(n, dtype=np.uint64)

    def uniform_grid(self, counters: np.ndarray, k: int) -> np.ndarray:
        return _uniform_grid(self.master_seed, self.trial_index, self.purpose,
                             counters, k)

    def uniform(self) -> float:
        return float(self.uniform_grid(self.take_counters(1), 1)[0, 0])

    def uniforms(self, n: int) -> np.ndarray:
        return self.uniform_grid(self.take_counters(n), 1)[:, 0]

    def uniform_vector(self, k: int) -> np.ndarray:
        return self.uniform_grid(self.take_counters(1), k)[0, :]


class MeasureError(ValueError):
    pass


class _LeafMeasure:
    """Common sampling plumbing: draws pull a uniform grid, one counter per
    sample, then map it through the measure's inverse transform."""

    @property
    def n_components(self) -> int:
        return 1

    def _from_uniforms(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_array(self, stream: RandomStream, n: int) -> np.ndarray:
        counters = stream.take_counters(n)
        return self._from_uniforms(
            stream.uniform_grid(counters, self.n_components))


@dataclass(frozen=True)
class DiscreteMeasure(_LeafMeasure):
    """Finite atomic measure: atoms row-stacked, weights summing to one."""

    atoms: np.ndarray
    weights: np.ndarray
    kind: str = field(default="discrete", init=False)

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if atoms.shape[0] != weights.shape[0]:
            raise MeasureError("atom count and weight count differ")
        if np.any(weights < 0):
            raise MeasureError("negative weight in discrete measure")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise MeasureError(
                f"discrete weights sum to {float(weights.sum())!r}, expected 1")

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def _from_uniforms(self, u: np.ndarray) -> np.ndarray:
        cum = np.cumsum(self.weights)
        idx = np.minimum(np.searchsorted(cum, u[:, 0]), len(cum) - 1)
        return self.atoms[idx]


@dataclass(frozen=True)
class UniformInterval(_LeafMeasure):
    lo: float
    hi: float
    kind: str = field(default="uniform_interval", init=False)

    def __post_init__(self):
        if not self.hi > self.lo:
            raise MeasureError("uniform interval needs hi > lo")

    @property
    def dim(self) -> int:
        return 1

    def _from_uniforms(self, u: np.ndarray) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * u


@dataclass(frozen=True)
class TruncatedExponential(_LeafMeasure):
    """Density e^(v - T) / (1 - e^(-T)) on [0, T]: mass piles up near T."""

    T: float
    kind: str = field(default="truncated_exponential", init=False)

    def __post_init__(self):
        if not self.T > 0:
            raise MeasureError("truncation length must be positive")

    @property
    def dim(self) -> int:
        return 1

    def density(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.exp(v - self.T) / -np.expm1(-self.T)
        return np.where((v >= 0) & (v <= self.T), out, 0.0)

    def mean(self) -> float:
        t = self.T
        return (t - 1.0 + math.exp(-t)) / -math.expm1(-t)

    def _from_uniforms(self, u: np.ndarray) -> np.ndarray:
        # Inverse CDF; the log argument stays in (e^-T, 1) so it is safe.
        return self.T + np.log(u + (1.0 - u) * np.exp(-self.T))


@dataclass(frozen=True)
class UniformBall(_LeafMeasure):
    """Uniform distribution over a closed Euclidean ball."""

    center: np.ndarray
    radius: float
    kind: str = field(default="uniform_ball", init=False)

    def __post_init__(self):
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=float).ravel())
        if not self.radius > 0:
            raise MeasureError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def n_components(self) -> int:
        # Two uniforms per Box-Muller normal, plus one for the radius.
        return 2 * self.dim + 1

    def _from_uniforms(self, u: np.ndarray) -> np.ndarray:
        d = self.dim
        u1, u2 = u[:, 0:2 * d:2], u[:, 1:2 * d:2]
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        radii = self.radius * u[:, 2 * d] ** (1.0 / d)
        return self.center + z / norms * radii[:, None]


@dataclass(frozen=True)
class ProductMeasure:
    """Independent product; samples concatenate the factor samples in order."""

    factors: tuple
    kind: str = field(default="product", init=False)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise MeasureError("product measure needs at least one factor")
        for f in self.factors:
            if isinstance(f, ProductMeasure):
                raise MeasureError("nested product measures are not supported")

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    def sample_array(self, stream: RandomStream, n: int) -> np.ndarray:
        # Factor i of sample j consumes counter base + j*k + i, the order a
        # scalar loop over samples then factors would use.
        k = len(self.factors)
        base = int(stream.draw_counter)
        cols = []
        for i, f in enumerate(self.factors):
            counters = base + i + k * np.arange(n, dtype=np.uint64)
            u = stream.uniform_grid(counters, f.n_components)
            cols.append(f._from_uniforms(u))
        stream.draw_counter = base + n * k
        return np.hstack(cols)


JumpMeasure = (DiscreteMeasure | UniformInterval | TruncatedExponential
               | UniformBall | ProductMeasure)


def sample(measure, stream: RandomStream) -> np.ndarray:
    """Draw one value; advances the counter by one draw per scalar factor."""
    return measure.sample_array(stream, 1)[0]


def sample_array(measure, stream: RandomStream, n: int) -> np.ndarray:
    """Draw n values, shape (n, dim); bitwise equal to n single draws."""
    return measure.sample_array(stream, n)


# --- expectations ---------------------------------------------------------

@dataclass(frozen=True)
class ExactDiscrete:
    pass


@dataclass(frozen=True)
class Quadrature:
    n_nodes: int = QUAD_NODES_DEFAULT


@dataclass(frozen=True)
class MonteCarlo:
    n: int = MC_N_DEFAULT
    stream: RandomStream | None = None


def _atoms_and_weights(measure) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(measure, DiscreteMeasure):
        return measure.atoms, np.asarray(measure.weights)
    if isinstance(measure, ProductMeasure):
        parts = [_atoms_and_weights(f) for f in measure.factors]
        atoms, weights = parts[0]
        for a, w in parts[1:]:
            atoms = np.hstack([np.repeat(atoms, len(a), axis=0),
                               np.tile(a, (len(atoms), 1))])
            weights = np.repeat(weights, len(w)) * np.tile(w, len(weights))
        return atoms, weights
    raise MeasureError(
        f"exact enumeration needs a discrete measure, got {measure.kind}")


def _factor_nodes(measure, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (rows) and weights such that sum(w * f(node)) integrates f dmu."""
    if isinstance(measure, DiscreteMeasure):
        return measure.atoms, np.asarray(measure.weights)
    t, w = np.polynomial.legendre.leggauss(n_nodes)
    if isinstance(measure, UniformInterval):
        mid = 0.5 * (measure.lo + measure.hi)
        half = 0.5 * (measure.hi - measure.lo)
        return (mid + half * t)[:, None], w / 2.0
    if isinstance(measure, TruncatedExponential):
        half = 0.5 * measure.T
        v = half + half * t
        return v[:, None], w * half * measure.density(v)
    if isinstance(measure, UniformBall):
        if measure.dim != 2:
            raise MeasureError("ball quadrature implemented for dimension 2")
        r = 0.5 * measure.radius * (t + 1.0)
        phi = np.pi * (t + 1.0)
        pts = measure.center + np.stack(
            [np.outer(r, np.cos(phi)).ravel(),
             np.outer(r, np.sin(phi)).ravel()], axis=1)
        wts = np.outer(w * r, w).ravel() * (0.5 * measure.radius) * np.pi
        return pts, wts / (np.pi * measure.radius ** 2)
    raise MeasureError(f"no quadrature rule for measure {measure.kind}")


def expectation(measure, integrand: Callable[[np.ndarray], float],
                method=None) -> float:
    """Integrate `integrand` against the measure.

    `method` is one of ExactDiscrete, Quadrature, or MonteCarlo; a purely
    atomic measure defaults to exact enumeration, anything else to
    quadrature.
    """
    if method is None:
        try:
            _atoms_and_weights(measure)
            method = ExactDiscrete()
        except MeasureError:
            method = Quadrature()

    if isinstance(method, ExactDiscrete):
        atoms, weights = _atoms_and_weights(measure)
        return float(sum(w * integrand(a) for a, w in zip(atoms, weights)))

    if isinstance(method, Quadrature):
        factors = (measure.factors if isinstance(measure, ProductMeasure)
                   else (measure,))
        node_sets = [_factor_nodes(f, method.n_nodes) for f in factors]
        # Tensor accumulation over factor grids, first factor outermost.
        stack: list[tuple[np.ndarray, float]] = [(np.empty(0), 1.0)]
        for pts, wts in node_sets:
            stack = [(np.concatenate([v, p]), wt * float(w))
                     for (v, wt) in stack for p, w in zip(pts, wts)]
        return float(sum(w * integrand(v) for v, w in stack))

    if isinstance(method, MonteCarlo):
        stream = method.stream if method.stream is not None else RandomStream(0)
        draws = sample_array(measure, stream, method.n)
        return float(sum(integrand(row) for row in draws) / method.n)

    raise TypeError(f"unknown expectation method {method!r}")
