import math

import numpy as np
import pytest

from graphbell.bounds import (
    BudgetExceededError,
    DeterministicStrategy,
    classical_value,
    exact_bound,
    heuristic_bound,
    naive_bound,
    pivot_party,
    violation_report,
)
from graphbell.coeffs import LambdaTable, resolve_convention
from graphbell.graphio import builtin_graph, random_graph
from graphbell.inequality import build_expression, imax_expression, qubit_inequality

AME_EXPR = build_expression(builtin_graph("ame43"))


def zeros(expr):
    return DeterministicStrategy(tuple((0,) * m for m in expr.scenario))


def test_all_zero_strategy_sums_coefficients():
    val = classical_value(AME_EXPR, zeros(AME_EXPR))
    assert abs(val - sum(t.coeff for t in AME_EXPR.terms).real) < 1e-12


def test_zero_strategy_on_two_party_form():
    lam = LambdaTable.build(3, resolve_convention(3))
    w = np.exp(2j * np.pi / 3)
    phase_sum = sum(w ** (-x * y) for x in range(3) for y in range(3))
    assert abs(phase_sum - 3) < 1e-12
    expected = ((np.conj(lam[1]) + np.conj(lam[2])) * phase_sum / math.sqrt(3)).real
    assert abs(classical_value(imax_expression(3), zeros(imax_expression(3))) - expected) < 1e-12


def test_random_strategies_below_bound():
    best = exact_bound(AME_EXPR).value
    rng = np.random.default_rng(0)
    for _ in range(200):
        s = DeterministicStrategy(tuple(tuple(rng.integers(0, 3, m)) for m in AME_EXPR.scenario))
        assert classical_value(AME_EXPR, s) <= best + 1e-12


def test_exact_examples():
    assert abs(exact_bound(imax_expression(3)).value - 6 * math.cos(math.pi / 9)) < 1e-9
    assert abs(exact_bound(imax_expression(5)).value - 4 * (2 + math.sqrt(5))) < 1e-9
    assert abs(exact_bound(AME_EXPR).value - 7.63816) < 1e-4


def test_bound_result_consistent():
    res = exact_bound(AME_EXPR)
    assert abs(res.value - classical_value(AME_EXPR, res.strategy)) < 1e-12
    assert res.certified and res.method == "exact"
    assert pivot_party(AME_EXPR) == 0


def test_budget_enforced():
    with pytest.raises(BudgetExceededError) as err:
        exact_bound(imax_expression(5), budget=100)
    assert err.value.needed == 5 ** 5
    with pytest.raises(BudgetExceededError):
        naive_bound(AME_EXPR, budget=1000)


@pytest.mark.parametrize("expr", [AME_EXPR, imax_expression(3), build_expression(builtin_graph("line", 4, 3)),
                                  build_expression(random_graph(4, 3, 2)),
                                  qubit_inequality(builtin_graph("cycle", 5, 2))[0]])
def test_exact_equals_naive(expr):
    a, b = exact_bound(expr), naive_bound(expr)
    assert a.value == b.value
    assert a.strategy == b.strategy


def test_threads_agree():
    expr = build_expression(builtin_graph("star", 4, 5))
    one = exact_bound(expr, chunk=512)
    many = exact_bound(expr, threads=4, chunk=512)
    assert one.value == many.value and one.strategy == many.strategy


def test_conjugate_expression_same_bound():
    for expr in (AME_EXPR, imax_expression(5)):
        assert abs(exact_bound(expr).value - exact_bound(expr.conjugate()).value) < 1e-9


def test_heuristic_examples():
    h = heuristic_bound(AME_EXPR, restarts=50, seed=0)
    assert abs(h.value - 7.63816) < 1e-4 and not h.certified
    h = heuristic_bound(imax_expression(3), restarts=50, seed=0)
    assert abs(h.value - 6 * math.cos(math.pi / 9)) < 1e-6


def test_heuristic_reproducible_and_bounded():
    expr = build_expression(random_graph(5, 3, 9))
    exact = exact_bound(expr).value
    a = heuristic_bound(expr, restarts=5, seed=3)
    b = heuristic_bound(expr, restarts=5, seed=3)
    assert a.value == b.value and a.strategy == b.strategy
    lone = heuristic_bound(expr, restarts=0)
    assert lone.value <= exact + 1e-12


def test_violation_report():
    rep = violation_report(6 * math.cos(math.pi / 9), 6.0)
    assert abs(rep["ratio"] - 1.064) < 1e-3 and rep["violated"]
    assert not violation_report(5.0, 5.0)["violated"]
