import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import vertex_enumeration
from tep_tariffs import tolerances as tol
from tep_tariffs.lp import (EQ, GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, IterationLimitError,
                            LpBuilder, LpError, LpSolution, check_strong_duality,
                            complementarity_residual, dump_lp, label_name, primal_residual,
                            solve_lp)

METHODS = ("simplex", "highs")


def tiny_max_x():
    b = LpBuilder()
    x = b.add_var("x", obj=1.0)
    b.add_row([x], [1.0], LE, 1.0, "cap")
    return b.build()


@pytest.mark.parametrize("method", METHODS)
def test_single_constraint(method):
    sol = solve_lp(tiny_max_x(), method=method)
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(1.0)
    assert sol.y[0] == pytest.approx(1.0)


@pytest.mark.parametrize("method", METHODS)
def test_two_variable_vertex(method):
    b = LpBuilder()
    x = b.add_var("x", obj=3.0)
    y = b.add_var("y", obj=2.0)
    b.add_row([x, y], [1, 1], LE, 4.0)
    b.add_row([x], [1], LE, 2.0)
    sol = solve_lp(b.build(), method=method)
    assert sol.objective == pytest.approx(10.0)
    np.testing.assert_allclose(sol.x, [2.0, 2.0], atol=1e-9)
    best, _ = vertex_enumeration([3, 2], [[1, 1], [1, 0]], [4, 2], np.zeros(2), np.full(2, 100.0))
    assert best == pytest.approx(10.0)


def test_duality_gap_of_hand_built_pair():
    model = tiny_max_x()
    exact = LpSolution(OPTIMAL, x=np.array([1.0]), y=np.array([1.0]), r=np.array([0.0]),
                       objective=1.0)
    assert check_strong_duality(model, exact).gap == 0.0
    bumped = LpSolution(OPTIMAL, x=np.array([1.0]), y=np.array([1.1]), r=np.array([-0.1]),
                        objective=1.0)
    assert check_strong_duality(model, bumped).gap == pytest.approx(0.1)


def test_duality_check_rejects_non_optimal():
    with pytest.raises(LpError):
        check_strong_duality(tiny_max_x(), LpSolution(INFEASIBLE))


@pytest.mark.parametrize("method", METHODS)
def test_infeasible_and_unbounded(method):
    b = LpBuilder()
    x = b.add_var("x")
    b.add_row([x], [1], GE, 2.0)
    b.add_row([x], [1], LE, 1.0)
    assert solve_lp(b.build(), method=method).status == INFEASIBLE

    b = LpBuilder()
    x = b.add_var("x", obj=1.0)
    y = b.add_var("y", lb=-math.inf)
    b.add_row([x, y], [1, 1], LE, 1.0)
    assert solve_lp(b.build(), method=method).status == UNBOUNDED


def test_degenerate_cycling_example_terminates():
    # a classic cycling instance for Dantzig pricing without anti-cycling
    b = LpBuilder()
    xs = [b.add_var(i, obj=c) for i, c in enumerate([0.75, -150.0, 0.02, -6.0])]
    b.add_row(xs, [0.25, -60, -0.04, 9], LE, 0.0)
    b.add_row(xs, [0.5, -90, -0.02, 3], LE, 0.0)
    b.add_row(xs, [0, 0, 1, 0], LE, 1.0)
    sol = solve_lp(b.build(), method="simplex")
    assert sol.objective == pytest.approx(0.05)


def test_iteration_limit():
    b = LpBuilder()
    xs = [b.add_var(i, obj=1.0 + i) for i in range(6)]
    for i in range(6):
        b.add_row(xs[: i + 1], [1.0] * (i + 1), LE, 10.0 + i)
    with pytest.raises(IterationLimitError):
        solve_lp(b.build(), method="simplex", max_iter=1)


def random_lp(rng, n, m, with_eq):
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0, 1, size=n)
    b = A @ x0 + rng.uniform(0.0, 1.0, size=m)
    lb = np.where(rng.random(n) < 0.3, -rng.uniform(0, 2, n), 0.0)
    ub = rng.uniform(1.5, 4.0, size=n)
    Aeq = beq = None
    if with_eq:
        Aeq = rng.normal(size=(1, n))
        beq = Aeq @ x0
    bld = LpBuilder()
    cols = [bld.add_var(j, lb[j], ub[j], c[j]) for j in range(n)]
    for i in range(m):
        bld.add_row(cols, A[i], LE, b[i])
    if with_eq:
        bld.add_row(cols, Aeq[0], EQ, beq[0])
    return bld.build(), (c, A, b, lb, ub, Aeq, beq)


def test_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 5))
        model, (c, A, b, lb, ub, Aeq, beq) = random_lp(rng, n, m, with_eq=trial % 3 == 0)
        best, _ = vertex_enumeration(c, A, b, lb, ub, Aeq, beq)
        for method in METHODS:
            sol = solve_lp(model, method=method)
            if best is None:
                assert sol.status == INFEASIBLE, (trial, method)
                continue
            assert sol.status == OPTIMAL, (trial, method)
            assert sol.objective == pytest.approx(best, abs=1e-6 * (1 + abs(best)))
            chk = check_strong_duality(model, sol)
            assert chk.gap <= tol.DUALITY_GAP_TOL * (1 + abs(best))
            assert chk.primal_residual <= tol.FEAS_TOL
            assert chk.dual_residual <= tol.FEAS_TOL
            assert complementarity_residual(model, sol) <= 1e-6 * (1 + abs(best))


def test_larger_lps_agree_with_highs():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(5, 21))
        m = int(rng.integers(3, 15))
        model, _ = random_lp(rng, n, m, with_eq=False)
        own = solve_lp(model, method="simplex")
        ref = solve_lp(model, method="highs")
        assert own.status == ref.status == OPTIMAL
        assert own.objective == pytest.approx(ref.objective, abs=1e-6 * (1 + abs(ref.objective)))
        assert check_strong_duality(model, own).passed()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 50.0))
def test_objective_scaling_keeps_vertex_and_scales_duals(seed, scale):
    rng = np.random.default_rng(seed)
    model, _ = random_lp(rng, 4, 4, with_eq=False)
    base = solve_lp(model, method="simplex")
    scaled = solve_lp(model.with_objective(model.c * scale), method="simplex")
    assert scaled.status == base.status == OPTIMAL
    np.testing.assert_allclose(scaled.x, base.x, atol=1e-8)
    np.testing.assert_allclose(scaled.y, base.y * scale, atol=1e-7 * scale)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_complementary_slackness(seed):
    rng = np.random.default_rng(seed)
    model, _ = random_lp(rng, 6, 5, with_eq=True)
    sol = solve_lp(model, method="simplex")
    if sol.optimal:
        assert primal_residual(model, sol.x) <= tol.FEAS_TOL
        assert complementarity_residual(model, sol) <= 1e-6 * (1 + abs(sol.objective))


def test_dump_lp_keeps_labels_and_exact_coefficients():
    b = LpBuilder()
    x = b.add_var(("d", 0, 3), 0.0, 2.5, obj=1.0 / 3.0)
    y = b.add_var(("f", 0, 1), -math.inf, math.inf)
    z = b.add_var(("u", 1), binary=True, obj=-200.0)
    b.add_row([x, y], [0.1, -1.0], EQ, 0.0, ("balance", 0, 2))
    b.add_row([y, z], [1.0, -30.0], LE, 0.0, ("fmax", 0, 1))
    text = dump_lp(b.build(), b.binaries, name="tiny")
    assert "d_0_3" in text and "f_0_1 free" in text
    assert " balance_0_2: 0.1 d_0_3 - 1.0 f_0_1 = 0.0" in text
    assert repr(1.0 / 3.0) in text
    assert text.strip().endswith("End")
    assert "Binaries\n u_1" in text
    assert label_name(("balance", 0, 2)) == "balance_0_2"


def test_simplex_matches_highs_duals_on_nondegenerate_lp():
    b = LpBuilder()
    x = b.add_var("x", obj=2.0)
    y = b.add_var("y", obj=1.0)
    b.add_row([x, y], [1, 2], LE, 8.0)
    b.add_row([x, y], [3, 1], LE, 9.0)
    own = solve_lp(b.build(), method="simplex")
    ref = solve_lp(b.build(), method="highs")
    np.testing.assert_allclose(own.y, ref.y, atol=1e-9)
    np.testing.assert_allclose(own.r, ref.r, atol=1e-9)
