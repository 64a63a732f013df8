"""Jacobi eigensolver, Lyapunov solves, and switched-mode matrix checks."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shdslab.lmi import (
    FeasibilitySearchError,
    check_negative_definite,
    check_switched_lmis,
    feasibility_search,
    jacobi_eigenvalues,
    jacobi_eigh,
    solve_lyapunov,
    sym_eigenvalues_2x2,
    sym_eigenvalues_3x3,
)
from shdslab.scenarios import switching_lmi_instance
from shdslab.stochastic import RandomStream


def random_symmetric(stream, n, scale=3.0):
    raw = scale * (2.0 * stream.uniforms(n * n) - 1.0)
    m = raw.reshape(n, n)
    return 0.5 * (m + m.T)


def test_jacobi_matches_analytic_2x2():
    stream = RandomStream(101)
    for _ in range(200):
        m = random_symmetric(stream, 2)
        got = jacobi_eigenvalues(m)
        want = np.sort(sym_eigenvalues_2x2(m))
        assert np.max(np.abs(got - want)) < 1e-10


def test_jacobi_matches_analytic_3x3():
    stream = RandomStream(102)
    for _ in range(200):
        m = random_symmetric(stream, 3)
        got = jacobi_eigenvalues(m)
        want = np.sort(sym_eigenvalues_3x3(m))
        assert np.max(np.abs(got - want)) < 1e-10


def test_jacobi_eigh_reconstructs_matrix():
    stream = RandomStream(103)
    for n in (2, 3, 4, 6):
        m = random_symmetric(stream, n)
        vals, vecs = jacobi_eigh(m)
        assert np.allclose(vecs @ np.diag(vals) @ vecs.T, m, atol=1e-10)
        assert np.allclose(vecs.T @ vecs, np.eye(n), atol=1e-10)
        assert np.all(np.diff(vals) >= 0.0)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_jacobi_trace_and_sorting_invariants(seed):
    m = random_symmetric(RandomStream(seed), 3)
    vals = jacobi_eigenvalues(m)
    assert abs(float(vals.sum()) - float(np.trace(m))) < 1e-9
    assert np.all(np.diff(vals) >= 0.0)


def test_solve_lyapunov_identity():
    stream = RandomStream(104)
    for n in (2, 3, 4):
        a = random_symmetric(stream, n) - 4.0 * np.eye(n)  # strictly stable
        q = np.eye(n)
        p = solve_lyapunov(a, q)
        assert np.allclose(p, p.T, atol=1e-12)
        assert np.max(np.abs(a.T @ p + p @ a + q)) < 1e-10


def test_negative_definite_check():
    ok, lam = check_negative_definite(np.diag([-1.0, -2.0]))
    assert ok
    assert lam == pytest.approx(-1.0, abs=1e-12)
    bad, lam_bad = check_negative_definite(np.diag([1.0, -1.0]))
    assert not bad
    assert lam_bad == pytest.approx(1.0, abs=1e-12)


def test_feasibility_search_frozen_values():
    inst = switching_lmi_instance(0.03)
    sigma, eta_bar = feasibility_search(inst.A_modes, inst.P_modes, inst.lam, inst.T)
    assert sigma == 19.476111945559722
    assert eta_bar == 0.03449347716456239
    assert 17.31 < sigma < 22.39
    assert inst.sigma == sigma


def test_switched_lmis_pass_at_small_eta():
    report = check_switched_lmis(switching_lmi_instance(0.03))
    assert report.passed
    assert all(entry.passed for entry in report.entries)
    assert all(entry.lambda_max < 0.0 for entry in report.entries)


def test_switched_lmis_flow_family_fails_at_large_eta():
    report = check_switched_lmis(switching_lmi_instance(1.0))
    assert not report.passed
    failing = [entry for entry in report.entries if not entry.passed]
    assert failing
    assert all("flow" in entry.name for entry in failing)


def test_feasibility_search_rejects_unstable_modes():
    bad = (np.eye(2), np.eye(2))
    p_modes = (np.eye(2), np.eye(2))
    with pytest.raises(FeasibilitySearchError):
        feasibility_search(bad, p_modes, (0.5, 0.5), 2.0)
