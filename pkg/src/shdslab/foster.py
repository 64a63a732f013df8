"""Composite Foster certificates and their verification.

A certificate pairs a slow function V(x) with a boundary-layer function
W(x, z); the composite E_theta = (1-theta) V + theta W is the object the
stability arguments run on. This module evaluates the flow and jump
decrease inequalities on user grids, monitors E_theta along simulated
arcs, and provides the canonical mixing weight theta* and the certified
time-scale ratio epsilon*.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .constants import DELTA_SET, FD_REL_STEP, TOL_INEQ, TOL_MONO_COEFF
from .hybrid_core import (HybridArc, SPSystem, StateVector, build_reduced,
                          canonical_json)
from .stochastic import ExactDiscrete, MeasureError, Quadrature, expectation


@dataclass(frozen=True)
class ConstantsLedger:
    """Nonnegative constants of the decrease and interconnection bounds.

    k_x, k_z are the slow and fast decay gains; k1..k4 bound the flow
    coupling; c_x, c_z, k5, k6 enter the jump conditions.
    """

    k_x: float
    k_z: float
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0
    k5: float = 0.0
    k6: float = 0.0
    c_x: float = 0.0
    c_z: float = 0.0

    def __post_init__(self):
        for name in ("k_x", "k_z", "k1", "k2", "k3", "k4", "k5", "k6",
                     "c_x", "c_z"):
            if getattr(self, name) < 0:
                raise ValueError(f"constant {name} must be nonnegative")


def theta_star(ledger: ConstantsLedger) -> float:
    """Mixing weight k3 / (k1 + k3) balancing the coupling terms."""
    denom = ledger.k1 + ledger.k3
    if denom == 0:
        raise ValueError("theta* undefined: k1 + k3 is zero")
    return ledger.k3 / denom


def epsilon_star(ledger: ConstantsLedger,
                 override: float | None = None) -> float:
    """Certified time-scale ratio.

    Evaluates k_x * k_z / (2 * (k2 * k_x + k1 * k_x)). An `override` value,
    when provided, is returned instead; scenario constructors use it when a
    sharper constant is derived by other means.
    """
    if override is not None:
        if not override > 0:
            raise ValueError("epsilon* override must be positive")
        return float(override)
    denom = 2.0 * (ledger.k2 * ledger.k_x + ledger.k1 * ledger.k_x)
    if denom == 0:
        raise ValueError("epsilon* undefined: k1 and k2 are both zero")
    return ledger.k_x * ledger.k_z / denom


@dataclass(frozen=True)
class CertificateData:
    """Certificate functions and shape data for one system.

    phi_x maps the slow state to its rate shape; phi_z maps the manifold
    distance r = |z|_M(x). alpha1/alpha2 sandwich W in r, alpha3/alpha4
    sandwich V in |x|_A (upper bound taken at varpi(x) when given).
    Gradients are optional; verification falls back to central differences.
    rho_x/rho5 take x, rho_z/rho6 take r; they feed the jump conditions.
    recur_set_Ox is a signed membership function on x, negative inside the
    open recurrence target.
    """

    V: Callable
    W: Callable
    phi_x: Callable
    phi_z: Callable
    alpha1: Callable
    alpha2: Callable
    alpha3: Callable
    alpha4: Callable
    target_distance: Callable
    grad_V: Callable | None = None
    grad_W_x: Callable | None = None
    grad_W_z: Callable | None = None
    rho_x: Callable | None = None
    rho_z: Callable | None = None
    rho5: Callable | None = None
    rho6: Callable | None = None
    varpi: Callable | None = None
    recur_set_Ox: Callable | None = None
    chi: float | None = None
    nu: float | None = None

    def in_recurrence_target(self, x: np.ndarray, r: float) -> bool:
        """Strict membership in the open tube around the recurrence set."""
        if self.recur_set_Ox is None or self.chi is None:
            return False
        return float(self.recur_set_Ox(x)) < 0.0 and r < self.chi


def composite_value(cert: CertificateData, theta: float, x: np.ndarray,
                    z: np.ndarray) -> float:
    return (1.0 - theta) * float(cert.V(x)) + theta * float(cert.W(x, z))


def fd_gradient(f: Callable, x: np.ndarray,
                rel_step: float = FD_REL_STEP) -> np.ndarray:
    """Central-difference gradient with step scaled by the point's size."""
    x = np.asarray(x, dtype=float)
    h = rel_step * (1.0 + float(np.linalg.norm(x)))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (float(f(x + e)) - float(f(x - e))) / (2.0 * h)
    return g


def _grad_V(cert: CertificateData, x: np.ndarray) -> np.ndarray:
    if cert.grad_V is not None:
        return np.asarray(cert.grad_V(x), dtype=float)
    return fd_gradient(cert.V, x)


def _grad_W_x(cert: CertificateData, x: np.ndarray,
              z: np.ndarray) -> np.ndarray:
    if cert.grad_W_x is not None:
        return np.asarray(cert.grad_W_x(x, z), dtype=float)
    return fd_gradient(lambda xv: cert.W(xv, z), x)


def _grad_W_z(cert: CertificateData, x: np.ndarray,
              z: np.ndarray) -> np.ndarray:
    if cert.grad_W_z is not None:
        return np.asarray(cert.grad_W_z(x, z), dtype=float)
    return fd_gradient(lambda zv: cert.W(x, zv), z)


@dataclass
class InequalityResult:
    name: str
    max_residual: float
    min_residual: float
    worst_point: list | None
    n_checked: int

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max_residual": self.max_residual,
            "min_residual": self.min_residual,
            "worst_point": self.worst_point,
            "n_checked": self.n_checked,
        }


@dataclass
class ScalarCondition:
    name: str
    value: float
    bound: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "bound": self.bound,
                "passed": self.passed}


@dataclass
class VerificationReport:
    kind: str
    mode: str
    theta: float
    tol: float
    inequalities: list
    scalar_conditions: list
    n_skipped: int
    grid_label: str
    passed: bool = field(init=False)

    def __post_init__(self):
        ineq_ok = all(r.max_residual <= self.tol for r in self.inequalities
                      if r.n_checked > 0)
        scalar_ok = all(s.passed for s in self.scalar_conditions)
        self.passed = ineq_ok and scalar_ok

    def worst(self) -> InequalityResult:
        checked = [r for r in self.inequalities if r.n_checked > 0]
        return max(checked, key=lambda r: r.max_residual)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mode": self.mode,
            "theta": self.theta,
            "tol": self.tol,
            "passed": self.passed,
            "n_skipped": self.n_skipped,
            "grid_label": self.grid_label,
            "inequalities": [r.to_dict() for r in self.inequalities],
            "scalar_conditions": [s.to_dict() for s in self.scalar_conditions],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


class _Tracker:
    """Accumulates one inequality's residuals across the grid."""

    def __init__(self, name: str):
        self.name = name
        self.max = -math.inf
        self.min = math.inf
        self.worst = None
        self.count = 0

    def add(self, residual: float, y: StateVector):
        self.count += 1
        if residual > self.max:
            self.max = residual
            self.worst = [float(v) for v in y.y]
        self.min = min(self.min, residual)

    def result(self) -> InequalityResult:
        if self.count == 0:
            return InequalityResult(self.name, -math.inf, math.inf, None, 0)
        return InequalityResult(self.name, self.max, self.min, self.worst,
                                self.count)


FLOW_MODES = ("strict", "nonstrict", "recurrence")


def verify_flow_decrease(system: SPSystem, cert: CertificateData,
                         ledger: ConstantsLedger, theta: float,
                         grid: Iterable[StateVector], mode: str = "strict",
                         tol: float = TOL_INEQ,
                         grid_label: str = "") -> VerificationReport:
    """Check the four flow inequalities pointwise on a grid.

    fast_decay:    <grad_z W, f_z> + k_z phi_z(r)^2
    slow_decay:    <grad V, f~> + k_x phi_x^2, minus nu inside the
                   recurrence set in "recurrence" mode
    coupling_W:    <grad_x W, f_x> - (k1 phi_z phi_x + k2 phi_z^2 + k4 phi_z)
    coupling_V:    <grad V, f_x - f~> - (k3 phi_z phi_x + k4 phi_z)

    Each residual must stay at or below `tol`. Points outside the flow set
    are skipped and counted. "strict" and "nonstrict" evaluate the same
    formulas; the mode is recorded so reports state which decrease notion
    the certificate claims. The slow field and its reduced counterpart are
    evaluated at the same selection parameter, so selection-dependent
    components cancel in coupling_V.
    """
    if mode not in FLOW_MODES:
        raise ValueError(f"unknown flow mode {mode!r}")
    if mode == "recurrence" and (cert.nu is None or cert.recur_set_Ox is None):
        raise ValueError("recurrence mode needs nu and recur_set_Ox")
    reduced = build_reduced(system)
    s = (system.flow_selection.default
         if system.flow_selection is not None else None)
    trackers = [_Tracker("fast_decay"), _Tracker("slow_decay"),
                _Tracker("coupling_W"), _Tracker("coupling_V")]
    skipped = 0
    for y in grid:
        if not system.flow_set.contains(y):
            skipped += 1
            continue
        x, z = y.x, y.z
        r = system.manifold.distance(x, z)
        f_z = np.asarray(system.flow_z(x, z, s), dtype=float)
        f_x = np.asarray(system.flow_x(x, z, s), dtype=float)
        f_red = reduced.flow_at(x, s)
        gV = _grad_V(cert, x)
        gWx = _grad_W_x(cert, x, z)
        gWz = _grad_W_z(cert, x, z)
        px = float(cert.phi_x(x))
        pz = float(cert.phi_z(r))
        res_a = float(gWz @ f_z) + ledger.k_z * pz * pz
        res_b = float(gV @ f_red) + ledger.k_x * px * px
        if mode == "recurrence" and float(cert.recur_set_Ox(x)) < 0.0:
            res_b -= cert.nu
        res_c = float(gWx @ f_x) - (ledger.k1 * pz * px + ledger.k2 * pz * pz
                                    + ledger.k4 * pz)
        res_d = float(gV @ (f_x - f_red)) - (ledger.k3 * pz * px
                                             + ledger.k4 * pz)
        for tr, res in zip(trackers, (res_a, res_b, res_c, res_d)):
            tr.add(res, y)
    return VerificationReport("flow", mode, theta, tol,
                              [tr.result() for tr in trackers], [], skipped,
                              grid_label)


JUMP_MODES = ("thm1", "thm2_relaxed", "thm3", "thm4")


def _jump_selections(system: SPSystem, sup_points: int):
    if system.jump_selection is None:
        return [None]
    return list(system.jump_selection.grid(sup_points))


def _default_method(system: SPSystem):
    try:
        from .stochastic import _atoms_and_weights
        _atoms_and_weights(system.measure)
        return ExactDiscrete()
    except MeasureError:
        return Quadrature()


def jump_expectation(system: SPSystem, cert: CertificateData, theta: float,
                     y: StateVector, sup_points: int = 101, method=None,
                     restrict_outside_target: bool = False) -> float:
    """Expected worst-case post-jump composite value at y.

    With `restrict_outside_target`, the inner sup ranges only over jump
    outcomes that land outside the recurrence tube; noise values whose
    every outcome lands inside contribute zero.
    """
    selections = _jump_selections(system, sup_points)
    x, z = y.x, y.z

    def integrand(v):
        best = -math.inf
        for s in selections:
            gx, gz = system.jump_map(x, z, v, s)
            gx = np.asarray(gx, dtype=float)
            gz = np.asarray(gz, dtype=float)
            if restrict_outside_target:
                r_g = system.manifold.distance(gx, gz)
                if cert.in_recurrence_target(gx, r_g):
                    continue
            best = max(best, composite_value(cert, theta, gx, gz))
        return best if best > -math.inf else 0.0

    return expectation(system.measure, integrand,
                       method or _default_method(system))


def verify_jump_decrease(system: SPSystem, cert: CertificateData,
                         ledger: ConstantsLedger, theta: float,
                         grid: Iterable[StateVector], mode: str = "thm1",
                         rho_hat=None, route: str = "reduced",
                         tol: float = TOL_INEQ, sup_points: int = 101,
                         method=None,
                         grid_label: str = "") -> VerificationReport:
    """Check the jump decrease condition of the selected stability result.

    thm1: E[sup E(g)] <= E(y) - rho_hat(y) on the jump set (strong decrease;
    `rho_hat` is required, a constant or a function of the state).
    thm2_relaxed: componentwise conditions. Route "reduced" wants the slow
    part to decrease, E[sup V] <= V - c_x rho_x(x), while the fast part may
    inflate by k5 rho5(x); the scalar margin k3 k5 / k1 < c_x closes the
    argument. Route "fast" swaps the roles: E[sup W] <= W - c_z rho_z(r),
    E[sup V] <= V + k6 rho6(r), with k1 k6 / k3 < c_z.
    thm3: E[sup E(g)] <= E(y) - rho_hat(y) + nu inside the recurrence tube.
    thm4: on jump-set points outside the recurrence tube, the sup restricted
    to outcomes outside the tube must not exceed E(y); points inside the
    tube are skipped.
    """
    if mode not in JUMP_MODES:
        raise ValueError(f"unknown jump mode {mode!r}")
    if mode in ("thm1", "thm3") and rho_hat is None:
        raise ValueError(f"mode {mode} requires rho_hat")
    if mode == "thm3" and cert.nu is None:
        raise ValueError("thm3 mode requires nu in the certificate")
    if mode == "thm4" and (cert.recur_set_Ox is None or cert.chi is None):
        raise ValueError("thm4 mode requires recur_set_Ox and chi")

    def rho_hat_at(y: StateVector) -> float:
        if callable(rho_hat):
            return float(rho_hat(y))
        return float(rho_hat)

    method = method or _default_method(system)
    selections = _jump_selections(system, sup_points)
    scalars: list[ScalarCondition] = []
    skipped = 0

    if mode == "thm2_relaxed":
        if route not in ("reduced", "fast"):
            raise ValueError(f"unknown relaxed route {route!r}")
        if route == "reduced":
            if ledger.k1 == 0:
                raise ValueError("route 'reduced' needs k1 > 0")
            value = ledger.k3 * ledger.k5 / ledger.k1
            scalars.append(ScalarCondition("k3*k5/k1 < c_x", value,
                                           ledger.c_x, value < ledger.c_x))
        else:
            if ledger.k3 == 0:
                raise ValueError("route 'fast' needs k3 > 0")
            value = ledger.k1 * ledger.k6 / ledger.k3
            scalars.append(ScalarCondition("k1*k6/k3 < c_z", value,
                                           ledger.c_z, value < ledger.c_z))
        trackers = [_Tracker("jump_V"), _Tracker("jump_W")]
    elif mode == "thm4":
        trackers = [_Tracker("jump_restricted")]
    else:
        trackers = [_Tracker("jump_decrease")]

    for y in grid:
        if not system.jump_set.contains(y):
            skipped += 1
            continue
        x, z = y.x, y.z
        r = system.manifold.distance(x, z)
        if mode == "thm4":
            if cert.in_recurrence_target(x, r):
                skipped += 1
                continue
            J = jump_expectation(system, cert, theta, y, sup_points, method,
                                 restrict_outside_target=True)
            trackers[0].add(J - composite_value(cert, theta, x, z), y)
            continue
        if mode == "thm2_relaxed":
            def sup_V(v):
                return max(float(cert.V(np.asarray(
                    system.jump_map(x, z, v, s)[0], dtype=float)))
                    for s in selections)

            def sup_W(v):
                return max(float(cert.W(
                    *(np.asarray(a, dtype=float)
                      for a in system.jump_map(x, z, v, s))))
                    for s in selections)

            JV = expectation(system.measure, sup_V, method)
            JW = expectation(system.measure, sup_W, method)
            V0 = float(cert.V(x))
            W0 = float(cert.W(x, z))
            if route == "reduced":
                if cert.rho_x is None or cert.rho5 is None:
                    raise ValueError("route 'reduced' needs rho_x and rho5")
                res_V = JV - V0 + ledger.c_x * float(cert.rho_x(x))
                res_W = JW - W0 - ledger.k5 * float(cert.rho5(x))
            else:
                if cert.rho_z is None or cert.rho6 is None:
                    raise ValueError("route 'fast' needs rho_z and rho6")
                res_W = JW - W0 + ledger.c_z * float(cert.rho_z(r))
                res_V = JV - V0 - ledger.k6 * float(cert.rho6(r))
            trackers[0].add(res_V, y)
            trackers[1].add(res_W, y)
            continue
        # thm1 and thm3 share the expected-sup form with different margins.
        J = jump_expectation(system, cert, theta, y, sup_points, method)
        res = J - composite_value(cert, theta, x, z) + rho_hat_at(y)
        if mode == "thm3" and cert.in_recurrence_target(x, r):
            res -= cert.nu
        trackers[0].add(res, y)

    return VerificationReport("jump", mode, theta, tol,
                              [tr.result() for tr in trackers], scalars,
                              skipped, grid_label)


@dataclass
class MonitorTrace:
    """Composite values along an arc with per-step increase flags.

    rows are (t, j, E, inside_target); `flags` indexes the flow steps whose
    increase exceeded the tolerance while both endpoints sat outside the
    recurrence tube. Jump changes are listed separately and never flagged.
    """

    rows: list
    flags: list
    jump_deltas: list
    tol_mono: float

    @property
    def n_flags(self) -> int:
        return len(self.flags)


def monitor_along_arc(cert: CertificateData, theta: float, arc: HybridArc,
                      system: SPSystem, step_h: float,
                      tol_coeff: float = TOL_MONO_COEFF) -> MonitorTrace:
    """Evaluate E_theta over all recorded samples and flag flow increases.

    A flow step is flagged when E grows by more than tol_coeff * step_h and
    neither endpoint lies in the recurrence tube (certificates without a
    recurrence set monitor every step).
    """
    tol_mono = tol_coeff * step_h
    rows = []
    flags = []
    jump_deltas = []
    idx = 0
    for j, seg in enumerate(arc.segments):
        prev = None
        for t, row in zip(seg.times, seg.states):
            sv = StateVector.from_flat(row, seg.dim_x)
            r = system.manifold.distance(sv.x, sv.z)
            inside = cert.in_recurrence_target(sv.x, r)
            e_val = composite_value(cert, theta, sv.x, sv.z)
            rows.append((float(t), j, e_val, inside))
            if prev is not None:
                e_prev, inside_prev = prev
                if (e_val - e_prev > tol_mono and not inside
                        and not inside_prev):
                    flags.append(idx)
            prev = (e_val, inside)
            idx += 1
        if j < len(arc.jumps):
            rec = arc.jumps[j]
            e_pre = composite_value(cert, theta, rec.y_pre.x, rec.y_pre.z)
            e_post = composite_value(cert, theta, rec.y_post.x, rec.y_post.z)
            jump_deltas.append((rec.time.t, rec.time.j, e_post - e_pre))
    return MonitorTrace(rows, flags, jump_deltas, tol_mono)


def check_gradient_consistency(cert: CertificateData,
                               points: Sequence[tuple],
                               rel_tol: float = 1e-5) -> float:
    """Largest relative mismatch between analytic and numeric gradients.

    `points` holds (x, z) pairs. Relative error is measured against
    1 + the numeric gradient's norm, so flat regions do not blow it up.
    Raises if the certificate declares no analytic gradients at all.
    """
    if (cert.grad_V is None and cert.grad_W_x is None
            and cert.grad_W_z is None):
        raise ValueError("certificate has no analytic gradients to check")
    worst = 0.0
    for x, z in points:
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        pairs = []
        if cert.grad_V is not None:
            pairs.append((np.asarray(cert.grad_V(x), dtype=float),
                          fd_gradient(cert.V, x)))
        if cert.grad_W_x is not None:
            pairs.append((np.asarray(cert.grad_W_x(x, z), dtype=float),
                          fd_gradient(lambda xv: cert.W(xv, z), x)))
        if cert.grad_W_z is not None:
            pairs.append((np.asarray(cert.grad_W_z(x, z), dtype=float),
                          fd_gradient(lambda zv: cert.W(x, zv), z)))
        for analytic, numeric in pairs:
            err = float(np.linalg.norm(analytic - numeric))
            scale = 1.0 + float(np.linalg.norm(numeric))
            worst = max(worst, err / scale)
    return worst


def check_sandwich(cert: CertificateData, system: SPSystem,
                   grid: Iterable[StateVector]) -> float:
    """Worst violation of the class-K sandwich bounds over the grid.

    Checks alpha1(r) <= W <= alpha2(r) and alpha3(|x|_A) <= V <= alpha4(.),
    the upper V bound evaluated at varpi(x) when the certificate carries
    one. Nonpositive return means the bounds hold everywhere on the grid.
    """
    worst = -math.inf
    for y in grid:
        x, z = y.x, y.z
        r = system.manifold.distance(x, z)
        d = float(cert.target_distance(x))
        vv = float(cert.V(x))
        ww = float(cert.W(x, z))
        up = float(cert.varpi(x)) if cert.varpi is not None else d
        worst = max(worst,
                    float(cert.alpha1(r)) - ww,
                    ww - float(cert.alpha2(r)),
                    float(cert.alpha3(d)) - vv,
                    vv - float(cert.alpha4(up)))
    return worst
