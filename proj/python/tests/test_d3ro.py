import json

import cvxpy as cp
import numpy as np
import pytest
from scipy.optimize import linprog

import d3ro


def random_case(rng, L):
    psi = rng.uniform(-10, 10, L)
    p_hat = rng.uniform(0.02, 1.0, L)
    return psi, p_hat / p_hat.sum()


def test_chi2_matches_cvxpy():
    rng = np.random.default_rng(3)
    for _ in range(20):
        L = int(rng.integers(2, 5))
        psi, p_hat = random_case(rng, L)
        rho = float(rng.uniform(0.01, 2.0))
        value, p = d3ro.worst_mode_chi2(psi, p_hat, rho)
        q = cp.Variable(L, nonneg=True)
        ball = sum(cp.quad_over_lin(q[l] - p_hat[l], q[l]) for l in range(L))
        prob = cp.Problem(cp.Maximize(psi @ q), [cp.sum(q) == 1, ball <= rho])
        prob.solve(solver=cp.CLARABEL)
        assert prob.status == cp.OPTIMAL
        assert value == pytest.approx(prob.value, abs=1e-5 * max(1.0, abs(prob.value)))
        assert p.sum() == pytest.approx(1.0)
        assert psi @ p == pytest.approx(value, abs=1e-6 * max(1.0, abs(value)))
        assert np.sum((p - p_hat) ** 2 / np.maximum(p, 1e-300)) <= rho + 1e-6


def test_chi2_worked_example():
    value, _ = d3ro.worst_mode_chi2(np.array([1.0, 0.0]), np.array([0.5, 0.5]), 0.5)
    assert value == pytest.approx(0.5 + np.sqrt(1.0 / 12.0), abs=1e-9)


def test_variation_matches_linprog():
    rng = np.random.default_rng(4)
    for _ in range(50):
        L = int(rng.integers(2, 7))
        psi, p_hat = random_case(rng, L)
        rho = float(rng.uniform(0.0, 2.0))
        value, _ = d3ro.worst_mode_variation(psi, p_hat, rho)
        # variables p, d+, d-
        c = np.concatenate([-psi, np.zeros(2 * L)])
        eye = np.eye(L)
        A_eq = np.vstack([np.hstack([eye, -eye, eye]), np.concatenate([np.ones(L), np.zeros(2 * L)])])
        b_eq = np.concatenate([p_hat, [1.0]])
        A_ub = np.concatenate([np.zeros(L), np.ones(2 * L)])[None, :]
        r = linprog(c, A_ub=A_ub, b_ub=[rho], A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * (3 * L))
        assert r.status == 0
        assert value == pytest.approx(-r.fun, abs=1e-7)


def test_facility_solve_equals_enumeration():
    text = d3ro.gen_facility(seed=2, I=3, J=6)
    inst = json.loads(text)
    assert "ground_truth" in inst or len(text) > 0
    milp = d3ro.solve(text, "MM_M_Variation")
    enum = d3ro.solve_by_enumeration(text, "MM_M_Variation")
    assert milp["status"] == "Optimal"
    assert milp["objective"] == pytest.approx(enum["objective"], rel=1e-6)
    assert np.array_equal(np.round(milp["y"]), np.round(enum["y"]))
    inner = d3ro.evaluate_inner(text, "MM_M_Variation", milp["y"])
    assert inner["total"] == pytest.approx(milp["objective"], rel=1e-6)


def test_fig2_out_of_sample():
    text = d3ro.gen_facility(fig2=True)
    s = d3ro.solve(text)
    assert s["status"] == "Optimal"
    a = d3ro.oos_evaluate(text, s["y"], n=500, seed=11)
    b = d3ro.oos_evaluate(text, s["y"], n=500, seed=11)
    assert a == b
    assert d3ro.oos_evaluate(text, s["y"], n=500, seed=11, shift="mean", value=10.0) < a


def test_bad_arguments_raise():
    text = d3ro.gen_facility(seed=1, I=3, J=6)
    with pytest.raises(ValueError):
        d3ro.oos_evaluate(text, np.ones(3), shift="sideways")
    with pytest.raises(Exception):
        d3ro.solve(text, "NoSuchKind")
