"""Eigenvalue checks for the switched-system matrix inequalities.

All definiteness verdicts run through a cyclic Jacobi eigensolver. The
matrices here are tiny (dimension at most 6), so Jacobi gives full
precision at negligible cost and keeps the toolkit free of LAPACK
dependence for its pass/fail decisions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import TOL_PD

JACOBI_OFFDIAG_TOL = 1e-12


def sym_part(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def jacobi_eigh(M: np.ndarray, tol: float = JACOBI_OFFDIAG_TOL,
                max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric
    matrix by cyclic Jacobi rotations.

    Sweeps rotate away each off-diagonal entry in turn until the largest
    off-diagonal magnitude drops below `tol`.
    """
    A = sym_part(M).copy()
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = max(off, abs(A[p, q]))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= tol:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                A = rot.T @ A @ rot
                A[p, q] = A[q, p] = 0.0
                V = V @ rot
    else:
        raise RuntimeError("Jacobi iteration failed to converge")
    order = np.argsort(np.diag(A))
    return np.diag(A)[order].copy(), V[:, order]


def jacobi_eigenvalues(M: np.ndarray,
                       tol: float = JACOBI_OFFDIAG_TOL) -> np.ndarray:
    return jacobi_eigh(M, tol)[0]


def sym_eigenvalues_2x2(M: np.ndarray) -> np.ndarray:
    """Closed-form eigenvalues of a symmetric 2x2 matrix, ascending."""
    a, b, c = M[0, 0], 0.5 * (M[0, 1] + M[1, 0]), M[1, 1]
    mean = 0.5 * (a + c)
    disc = math.hypot(0.5 * (a - c), b)
    return np.array([mean - disc, mean + disc])


def sym_eigenvalues_3x3(M: np.ndarray) -> np.ndarray:
    """Closed-form eigenvalues of a symmetric 3x3 matrix, ascending.

    Uses the trigonometric solution of the characteristic cubic.
    """
    A = sym_part(M)
    p1 = A[0, 1] ** 2 + A[0, 2] ** 2 + A[1, 2] ** 2
    q = np.trace(A) / 3.0
    if p1 == 0.0:
        return np.sort(np.diag(A))
    p2 = ((A[0, 0] - q) ** 2 + (A[1, 1] - q) ** 2 + (A[2, 2] - q) ** 2
          + 2.0 * p1)
    p = math.sqrt(p2 / 6.0)
    B = (A - q * np.eye(3)) / p
    r = float(np.linalg.det(B)) / 2.0
    r = min(1.0, max(-1.0, r))
    phi = math.acos(r) / 3.0
    big = q + 2.0 * p * math.cos(phi)
    small = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    return np.sort(np.array([small, 3.0 * q - big - small, big]))


def check_negative_definite(M: np.ndarray,
                            tol_pd: float = TOL_PD) -> tuple[bool, float]:
    """Verdict and largest eigenvalue of the symmetric part of M.

    Negative definite means lambda_max(sym(M)) < -tol_pd.
    """
    lam_max = float(jacobi_eigenvalues(sym_part(M))[-1])
    return lam_max < -tol_pd, lam_max


@dataclass(frozen=True)
class SwitchedLMIInstance:
    """Data for the mode-dependent inequalities of a switched Lyapunov pair.

    `fast_pair`, when present, is (L, P_z) for the boundary-layer check.
    """

    A_modes: tuple
    P_modes: tuple
    lam: np.ndarray
    sigma: float
    eta: float
    T: float
    fast_pair: tuple | None = None

    def __post_init__(self):
        A = tuple(np.asarray(a, dtype=float) for a in self.A_modes)
        P = tuple(np.asarray(p, dtype=float) for p in self.P_modes)
        lam = np.asarray(self.lam, dtype=float)
        object.__setattr__(self, "A_modes", A)
        object.__setattr__(self, "P_modes", P)
        object.__setattr__(self, "lam", lam)
        if len(A) != len(P) or len(A) != len(lam):
            raise ValueError("mode count mismatch between A, P, lam")
        if abs(float(lam.sum()) - 1.0) > 1e-12 or np.any(lam <= 0):
            raise ValueError("mode weights must be positive and sum to one")
        if not (self.sigma > 0 and self.eta >= 0 and self.T > 0):
            raise ValueError("need sigma > 0, eta >= 0, T > 0")

    @property
    def n_modes(self) -> int:
        return len(self.A_modes)

    def p_bar(self) -> np.ndarray:
        return sum(w * P for w, P in zip(self.lam, self.P_modes))


@dataclass(frozen=True)
class LMIEntry:
    name: str
    mode: int | None
    lambda_max: float
    passed: bool


@dataclass(frozen=True)
class LMIReport:
    entries: tuple
    passed: bool

    def failures(self) -> list[LMIEntry]:
        return [e for e in self.entries if not e.passed]

    def worst(self) -> LMIEntry:
        return max(self.entries, key=lambda e: e.lambda_max)


def check_switched_lmis(inst: SwitchedLMIInstance,
                        tol_pd: float = TOL_PD) -> LMIReport:
    """Check the three inequality families of a switched instance.

    "flow": each A_q' P_q + P_q A_q + sigma*eta/T * P_q must be negative
    definite (mode decay survives the timer coupling).
    "jump": each (1/sigma) log(1+sigma) Pbar - P_q must be negative definite
    (averaging over the post-jump timer still contracts).
    "fast": L' P_z + P_z L negative definite, when a fast pair is given.
    """
    entries = []
    pbar = inst.p_bar()
    shrink = math.log1p(inst.sigma) / inst.sigma
    for q, (A, P) in enumerate(zip(inst.A_modes, inst.P_modes)):
        M = A.T @ P + P @ A + (inst.sigma * inst.eta / inst.T) * P
        ok, lam_max = check_negative_definite(M, tol_pd)
        entries.append(LMIEntry("flow", q, lam_max, ok))
    for q, P in enumerate(inst.P_modes):
        ok, lam_max = check_negative_definite(shrink * pbar - P, tol_pd)
        entries.append(LMIEntry("jump", q, lam_max, ok))
    if inst.fast_pair is not None:
        L, Pz = (np.asarray(m, dtype=float) for m in inst.fast_pair)
        ok, lam_max = check_negative_definite(L.T @ Pz + Pz @ L, tol_pd)
        entries.append(LMIEntry("fast", None, lam_max, ok))
    entries = tuple(entries)
    return LMIReport(entries, all(e.passed for e in entries))


class FeasibilitySearchError(RuntimeError):
    pass


def feasibility_search(A_modes, P_modes, lam, T: float,
                       tol_pd: float = TOL_PD) -> tuple[float, float]:
    """Find (sigma, eta_bar) making the switched inequalities feasible.

    The "jump" family holds iff (1/sigma) log(1+sigma) < m, where m is the
    smallest eigenvalue of Pbar^(-1/2) P_q Pbar^(-1/2) over modes. The left
    side decreases from 1 to 0, so a doubling pass brackets the threshold
    sigma_2 and bisection pins it down; sigma is then set a fixed ratio 9/8
    above the threshold to leave a definite margin on the jump family while
    keeping the flow family's eta budget generous. eta_bar is the open upper
    limit for the timer rate: the flow family holds for every eta < eta_bar,
    with equality sitting exactly on the boundary for the worst mode. The
    returned pair is validated at eta_bar/2 before being handed back.
    """
    probe = SwitchedLMIInstance(A_modes, P_modes, lam, 1.0, 0.0, T)
    pbar = probe.p_bar()
    w, V = jacobi_eigh(pbar)
    if w[0] <= 0:
        raise FeasibilitySearchError("average Lyapunov matrix not positive")
    pbar_inv_half = V @ np.diag(1.0 / np.sqrt(w)) @ V.T
    m = min(float(jacobi_eigenvalues(pbar_inv_half @ P @ pbar_inv_half)[0])
            for P in probe.P_modes)
    if m <= 0:
        raise FeasibilitySearchError("a mode matrix is not positive definite")

    def shrink(sigma: float) -> float:
        return math.log1p(sigma) / sigma

    if shrink(1.0) < m:
        sigma_2 = 1.0
    else:
        hi = 1.0
        while shrink(hi) >= m:
            hi *= 2.0
            if hi > 2.0 ** 60:
                raise FeasibilitySearchError(
                    "jump inequality infeasible for any sigma")
        lo = hi / 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if shrink(mid) >= m:
                lo = mid
            else:
                hi = mid
        sigma_2 = hi
    sigma = sigma_2 * 9.0 / 8.0

    decay = []
    for q, (A, P) in enumerate(zip(probe.A_modes, probe.P_modes)):
        lam_max = float(jacobi_eigenvalues(sym_part(A.T @ P + P @ A))[-1])
        if lam_max >= 0:
            raise FeasibilitySearchError(
                f"mode {q} flow inequality infeasible: lambda_max={lam_max:g}")
        decay.append(-lam_max)
    p_top = max(float(jacobi_eigenvalues(P)[-1]) for P in probe.P_modes)
    eta_bar = min(decay) * T / (sigma * p_top)

    witness = SwitchedLMIInstance(A_modes, P_modes, lam, sigma, eta_bar / 2.0,
                                  T)
    report = check_switched_lmis(witness, tol_pd)
    if not report.passed:
        bad = report.failures()[0]
        raise FeasibilitySearchError(
            f"search produced infeasible pair: {bad.name}"
            f"[mode {bad.mode}] lambda_max={bad.lambda_max:g}")
    return sigma, eta_bar


def solve_lyapunov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Symmetric P with A' P + P A = -Q, via the Kronecker linear system."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    K = np.kron(np.eye(n), A.T) + np.kron(A.T, np.eye(n))
    vec_p = np.linalg.solve(K, -Q.reshape(n * n, order="F"))
    return sym_part(vec_p.reshape((n, n), order="F"))
