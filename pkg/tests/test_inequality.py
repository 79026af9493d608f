import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphbell.coeffs import LambdaTable, resolve_convention
from graphbell.corealg import StateVector, kron_all, pauli_xz, to_matrix, weyl_pow
from graphbell.graphio import GraphSpec, builtin_graph, choose_pivots, random_graph
from graphbell.inequality import (
    BellExpression,
    BellTerm,
    CoefficientError,
    ImaginaryResidueError,
    Realization,
    build_expression,
    coefficient_violations,
    custom_coefficients,
    default_coefficients,
    dumps_expression,
    expected_term_count,
    ideal_realization,
    imax_expression,
    loads_expression,
    printed_term_count,
    quantum_bound,
    quantum_value,
    qubit_inequality,
    random_realization,
    sos_residual,
    stabilization_residuals,
    stabilizer_products,
)

AME = builtin_graph("ame43")


def dense_bell_operator(expr, real):
    total = 0
    for t in expr.terms:
        mats = [np.eye(real.state.d)] * expr.n_parties
        for p, s, n in t.factors:
            mats[p] = np.linalg.matrix_power(real.observables[p][s], n)
        total = total + t.coeff * kron_all(mats)
    return total


def test_ame_products():
    piv = choose_pivots(AME, (0, 1))
    blocks = stabilizer_products(AME, piv)
    assert [b.label for b in blocks] == ["G1,0", "G1,1", "G1,2", "G2,4", "G3,3"]
    X, Z = pauli_xz(3)
    g1g2 = next(b for b in blocks if b.label == "G1,1")
    assert np.allclose(to_matrix(g1g2.word), kron_all([X @ Z, Z @ X, Z, Z]))


@pytest.mark.parametrize("d", [3, 5, 7])
def test_pair_products(d):
    g = builtin_graph("pair", d)
    X, Z = pauli_xz(d)
    for k, b in enumerate(stabilizer_products(g, choose_pivots(g))):
        Xk, Zk = np.linalg.matrix_power(X, k), np.linalg.matrix_power(Z, k)
        assert np.allclose(to_matrix(b.word), np.kron(X @ Zk, Z @ Xk))


@pytest.mark.parametrize("g", [AME, builtin_graph("star", 5, 3), random_graph(6, 5, 3)])
def test_first_site_x_exponent(g):
    piv = choose_pivots(g)
    for b in stabilizer_products(g, piv):
        x = b.word.sites[piv.v1][0]
        assert x == (0 if b.label.startswith("G3") else 1)


def test_default_coefficients():
    piv = choose_pivots(AME)
    cs = default_coefficients(AME, piv)
    assert cs.c1 == {1: Fraction(1, 2), 2: Fraction(1)}
    assert cs.c2 == {3: Fraction(1, 2)}
    g = builtin_graph("pair", 7)
    cs = default_coefficients(g, choose_pivots(g))
    assert set(cs.c1.values()) == {1} and not cs.c2


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.sampled_from([3, 5, 7]), st.integers(0, 10 ** 6))
def test_default_coefficients_satisfy_constraints(n, d, seed):
    g = random_graph(n, d, seed)
    piv = choose_pivots(g)
    cs = default_coefficients(g, piv)
    assert coefficient_violations(g, piv, cs) == []
    assert sum(cs.c1.values()) + sum(cs.c2.values()) == d - 1


def test_custom_coefficients():
    piv = choose_pivots(AME)
    cs = custom_coefficients(AME, piv, {"c1.1": "0.3", "c2.4": "0.7"})
    assert cs.c1[1] == Fraction(3, 10) and cs.c2[3] == Fraction(7, 10)
    with pytest.raises(CoefficientError) as err:
        custom_coefficients(AME, piv, {"c1.1": "0.3", "c2.4": "0.6"})
    assert err.value.violated == ["k=1: sum=9/10"]
    with pytest.raises(CoefficientError):
        custom_coefficients(AME, piv, {"c1.1": "-0.5", "c2.4": "1.5"})
    with pytest.raises(CoefficientError):
        custom_coefficients(AME, piv, {"c2.2": "1"})


def test_custom_coefficients_keep_quantum_value():
    piv = choose_pivots(AME)
    cs = custom_coefficients(AME, piv, {"c1.1": "1/3", "c2.4": "2/3"})
    expr = build_expression(AME, piv, cs)
    real = ideal_realization(AME, piv)
    assert abs(quantum_value(expr, real) - 8) < 1e-9
    assert sos_residual(expr, real) < 1e-9


def test_ame_expression_terms():
    expr = build_expression(AME)
    assert len(expr.terms) == 26
    assert expr.scenario == (3, 3, 2, 2)
    lam = LambdaTable.build(3, resolve_convention(3))
    coeffs = {t.factors: t.coeff for t in expr.terms}
    for t in range(3):
        c = coeffs[((0, t, 1), (1, 0, 1), (3, 0, 1))]
        assert abs(c - 1 / (math.sqrt(3) * lam[1])) < 1e-12


@pytest.mark.parametrize("name,params", [("ame43", ()), ("star", (4, 3)), ("line", (5, 3)),
                                         ("random", (5, 5, 1)), ("pair", (7,))])
def test_term_counts(name, params):
    g = builtin_graph(name, *params)
    piv = choose_pivots(g)
    expr = build_expression(g, piv)
    assert len(expr.terms) == expected_term_count(g.d, g.n, piv.n1)
    assert expr.meta["term_count"]["printed_formula"] == printed_term_count(g.d, g.n, piv.n1)
    assert all(len({p for p, _, _ in t.factors}) == len(t.factors) for t in expr.terms)
    assert all(0 < n < g.d for t in expr.terms for _, _, n in t.factors)


@pytest.mark.parametrize("d", [3, 5, 7])
def test_pair_collapses_to_two_party_form(d):
    built = build_expression(builtin_graph("pair", d))
    ref = imax_expression(d)

    def multiset(expr):
        return sorted((round(t.coeff.real, 10), round(t.coeff.imag, 10)) for t in expr.terms)

    assert multiset(built) == multiset(ref)
    # the two differ by shifting the outcomes of B_k by k(k+1)
    ref_coeffs = {t.factors: t.coeff for t in ref.terms}
    w = np.exp(2j * np.pi / d)
    assert len(built.terms) == len(ref.terms) == d * d * (d - 1)
    for t in built.terms:
        (_, _, n), (_, k, _) = t.factors
        assert abs(ref_coeffs[t.factors] - t.coeff * w ** (n * k * (k + 1))) < 1e-12


def test_quantum_bound_examples():
    assert quantum_bound(AME, choose_pivots(AME)) == 8
    for d in (3, 5, 7):
        g = builtin_graph("pair", d)
        assert quantum_bound(g, choose_pivots(g)) == d * (d - 1)
    star = builtin_graph("star", 5, 3)
    assert quantum_bound(star, choose_pivots(star)) == 6


@pytest.mark.parametrize("d", [3, 5, 7])
def test_ideal_observables_are_valid(d):
    real = ideal_realization(builtin_graph("star", 3, d))
    assert max(real.defects(d).values()) < 1e-10


def test_ideal_bases_are_mutually_unbiased():
    X, Z = pauli_xz(3)
    bases = [np.linalg.eig(X @ np.linalg.matrix_power(Z, k))[1] for k in range(3)] + [np.eye(3)]
    for i in range(4):
        for j in range(i + 1, 4):
            overlaps = np.abs(bases[i].conj().T @ bases[j]) ** 2
            assert np.allclose(overlaps, 1 / 3)


@pytest.mark.parametrize("g", [AME, builtin_graph("line", 3, 3), builtin_graph("star", 3, 5)])
def test_bell_operator_is_stabilizer_combination(g):
    piv = choose_pivots(g)
    expr = build_expression(g, piv)
    real = ideal_realization(g, piv)
    target = 0
    for n in range(1, g.d):
        for b in stabilizer_products(g, piv):
            target = target + float(b.weight) * to_matrix(weyl_pow(b.word, n))
    assert np.abs(dense_bell_operator(expr, real) - target).max() < 1e-10


def test_quantum_value_examples():
    expr = build_expression(AME)
    real = ideal_realization(AME)
    assert abs(quantum_value(expr, real) - 8) < 1e-9
    pair = builtin_graph("pair", 3)
    assert abs(quantum_value(build_expression(pair), ideal_realization(pair)) - 6) < 1e-9
    zero = Realization(StateVector.basis(3, [0, 0, 0, 0]), real.observables)
    assert quantum_value(expr, zero) < 8


def test_imaginary_residue_detected():
    expr = BellExpression(3, (3,), (BellTerm(1j, ((0, 0, 1),)),))
    X, Z = pauli_xz(3)
    real = Realization(StateVector.basis(3, [0]), ((Z, X, X),))
    with pytest.raises(ImaginaryResidueError):
        quantum_value(expr, real)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.sampled_from([3, 5]), st.integers(0, 10 ** 6))
def test_conjugation_closure(n, d, seed):
    expr = build_expression(random_graph(n, d, seed))
    coeffs = {t.factors: t.coeff for t in expr.terms}
    for t in expr.terms:
        partner = tuple((p, s, (d - k) % d) for p, s, k in t.factors)
        assert abs(coeffs[partner] - np.conj(t.coeff)) < 1e-12
    real = ideal_realization(random_graph(n, d, seed))
    rand = random_realization(expr, real.state, seed)
    quantum_value(expr, rand)  # raises if the imaginary part survives


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10 ** 6))
def test_ideal_value_hits_bound(n, seed):
    g = random_graph(n, 3, seed)
    piv = choose_pivots(g)
    expr = build_expression(g, piv)
    assert abs(quantum_value(expr, ideal_realization(g, piv)) - quantum_bound(g, piv)) < 1e-9


def test_ideal_state_satisfies_every_product():
    expr = build_expression(AME)
    res = stabilization_residuals(expr, ideal_realization(AME))
    assert len(res) == 10 and max(res.values()) < 1e-10


def test_sos_residual_ideal_and_random():
    expr = build_expression(AME)
    real = ideal_realization(AME)
    assert sos_residual(expr, real) < 1e-9
    for seed in range(5):
        assert sos_residual(expr, random_realization(expr, real.state, seed)) < 1e-8


def test_sos_residual_flags_wrong_order():
    expr = build_expression(AME)
    real = ideal_realization(AME)
    w6 = np.exp(2j * np.pi / 6)
    bad = np.diag([1, w6, w6 ** 2])  # order 6, not 3
    obs = list(real.observables)
    obs[1] = (bad,) + obs[1][1:]
    with pytest.warns(RuntimeWarning):
        res = sos_residual(expr, Realization(real.state, tuple(obs)))
    assert res > 1e-3


def test_qubit_examples():
    tri = GraphSpec.from_edges(2, 3, [(1, 2, 1), (2, 3, 1), (1, 3, 1)])
    _, bc, bq = qubit_inequality(tri)
    assert abs(bc - 2 * math.sqrt(2)) < 1e-12 and bq == 4
    _, _, bq = qubit_inequality(builtin_graph("line", 4, 2))
    assert bq == 5
    with pytest.raises(ValueError):
        qubit_inequality(AME)


def test_qubit_ideal_value():
    g = builtin_graph("star", 4, 2)
    expr, _, bq = qubit_inequality(g)
    assert abs(quantum_value(expr, ideal_realization(g)) - bq) < 1e-9


def test_json_round_trip():
    expr = build_expression(AME)
    text = dumps_expression(expr)
    back = loads_expression(text)
    assert back == expr
    assert back.meta["pivot_party"] == expr.meta["pivot_party"]
    assert dumps_expression(back) == text


def test_permutation_invariance():
    g = random_graph(4, 3, 11)
    expr = build_expression(g)
    real = ideal_realization(g)
    perm = [2, 0, 3, 1]  # old party p becomes new party perm[p]
    inv = np.argsort(perm)
    terms = tuple(BellTerm(t.coeff, tuple(sorted((perm[p], s, n) for p, s, n in t.factors)))
                  for t in expr.terms)
    pexpr = BellExpression(3, tuple(expr.scenario[i] for i in inv), terms)
    tensor = real.state.tensor().transpose(inv)
    preal = Realization(StateVector(3, 4, tensor.reshape(-1)), tuple(real.observables[i] for i in inv))
    assert abs(quantum_value(pexpr, preal) - quantum_value(expr, real)) < 1e-12
