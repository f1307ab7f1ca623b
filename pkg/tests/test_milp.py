import itertools

import numpy as np
import pytest

from tep_tariffs.lp import INFEASIBLE, LE, OPTIMAL, LpBuilder
from tep_tariffs.milp import MilpModel, NodeLimitError, enumerate_oracle, solve_milp

METHODS = ("bnb", "highs")


def knapsack(values, weights, cap):
    b = LpBuilder()
    xs = [b.add_var(("x", i), obj=v, binary=True) for i, v in enumerate(values)]
    b.add_row(xs, weights, LE, cap, "cap")
    return MilpModel(b.build(), b.binaries)


def brute_knapsack(values, weights, cap):
    best = 0.0
    for bits in itertools.product((0, 1), repeat=len(values)):
        if np.dot(bits, weights) <= cap:
            best = max(best, float(np.dot(bits, values)))
    return best


@pytest.mark.parametrize("method", METHODS)
def test_small_knapsack(method):
    sol = solve_milp(knapsack([10, 13, 7, 8], [3, 4, 2, 3], 7), method=method)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(23.0)
    assert set(np.unique(sol.x)) <= {0.0, 1.0}


def test_integral_root_needs_one_node():
    b = LpBuilder()
    x = b.add_var("x", obj=1.0, binary=True)
    y = b.add_var("y", obj=2.0, binary=True)
    b.add_row([x, y], [1, 1], LE, 2.0)
    sol = solve_milp(MilpModel(b.build(), b.binaries), method="bnb")
    assert sol.nodes == 1
    assert sol.objective == pytest.approx(3.0)


def random_mixed(rng, n_bin=8, n_cont=3, m=5):
    b = LpBuilder()
    xb = [b.add_var(("b", i), obj=rng.normal(), binary=True) for i in range(n_bin)]
    xc = [b.add_var(("c", i), 0.0, rng.uniform(1, 3), obj=rng.normal()) for i in range(n_cont)]
    cols = xb + xc
    for i in range(m):
        a = rng.normal(size=len(cols))
        b.add_row(cols, a, LE, rng.uniform(-0.5, 2.0))
    return MilpModel(b.build(), b.binaries)


def test_random_models_match_enumeration():
    rng = np.random.default_rng(11)
    for trial in range(100):
        model = random_mixed(rng)
        ref = enumerate_oracle(model)
        for method in METHODS:
            sol = solve_milp(model, method=method)
            assert sol.status == ref.status, (trial, method)
            if ref.status == OPTIMAL:
                assert sol.objective == pytest.approx(ref.objective, abs=1e-6 * (1 + abs(ref.objective)))


@pytest.mark.parametrize("method", METHODS)
def test_infeasible_model(method):
    b = LpBuilder()
    x = b.add_var("x", binary=True)
    y = b.add_var("y", binary=True)
    b.add_row([x, y], [1, 1], LE, -1.0)
    assert solve_milp(MilpModel(b.build(), b.binaries), method=method).status == INFEASIBLE


def test_bound_history_never_increases():
    rng = np.random.default_rng(3)
    vals = rng.integers(5, 30, size=14).astype(float)
    wts = rng.integers(3, 20, size=14).astype(float)
    sol = solve_milp(knapsack(vals, wts, wts.sum() / 2.3), method="bnb")
    h = np.asarray(sol.bound_history)
    assert h.size > 1
    assert np.all(np.diff(h) <= 1e-9)
    assert sol.best_bound == pytest.approx(sol.objective)
    assert sol.objective == pytest.approx(brute_knapsack(vals, wts, wts.sum() / 2.3))


def test_node_limit_carries_incumbent():
    rng = np.random.default_rng(5)
    vals = rng.integers(5, 30, size=18).astype(float)
    wts = rng.integers(3, 20, size=18).astype(float)
    with pytest.raises(NodeLimitError) as err:
        solve_milp(knapsack(vals, wts, wts.sum() / 2.1), method="bnb", node_limit=4)
    inc = err.value.incumbent
    if inc is not None:
        assert inc.best_bound >= inc.objective
        assert np.dot(inc.x[:18], wts) <= wts.sum() / 2.1 + 1e-9


def test_incumbent_callback_sees_improving_points():
    seen = []
    model = knapsack([10, 13, 7, 8, 9, 4], [3, 4, 2, 3, 3, 1], 9)
    sol = solve_milp(model, method="bnb", on_incumbent=lambda x: seen.append(model.lp.c @ x))
    assert seen and np.all(np.diff(seen) > 0)
    assert seen[-1] == pytest.approx(sol.objective)


def test_enumeration_limit():
    model = knapsack(np.ones(25), np.ones(25), 3)
    with pytest.raises(ValueError):
        enumerate_oracle(model)


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_milp(knapsack([1], [1], 1), method="cplex")
