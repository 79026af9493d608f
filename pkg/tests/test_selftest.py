import itertools

import numpy as np
import pytest

from graphbell.coeffs import LambdaTable, resolve_convention
from graphbell.corealg import omega, pauli_xz, random_order_d_unitary
from graphbell.graphio import builtin_graph, choose_pivots
from graphbell.inequality import ideal_realization
from graphbell.selftest import (
    check_anticomm,
    check_canonical_forms,
    check_tilde_relations,
    check_unitary_anticomm,
    xz_nonunitarity,
    tilde_completeness_residual,
    obstruction_sweep,
    run_selftests,
    transposition_obstruction,
    unitary_anticomm_residual,
    xz_combination_residual,
)

AME = builtin_graph("ame43")
LAM3 = LambdaTable.build(3, resolve_convention(3))


def ideal_AB(g=AME):
    real = ideal_realization(g)
    piv = choose_pivots(g)
    return real, real.observables[piv.v1], real.observables[piv.v2]


def test_tilde_relations_ideal_and_transposed():
    real, A, _ = ideal_AB()
    assert check_tilde_relations(A).passed
    assert check_tilde_relations([M.T for M in A]).passed


def test_tilde_relations_fail_for_identity():
    _, A, _ = ideal_AB()
    broken = [A[0], np.eye(3), A[2]]
    rep = check_tilde_relations(broken)
    assert not rep.passed and rep.residuals["anticommutator"] > 0.1


def test_tilde_rejects_other_dimensions():
    with pytest.raises(ValueError):
        check_tilde_relations([np.eye(5)] * 5)


def test_anticomm_ideal():
    _, A, B = ideal_AB()
    assert check_anticomm(A, B).passed
    _, A, B = ideal_AB(builtin_graph("line", 3, 3))
    assert check_anticomm(A, B).passed


def test_anticomm_with_second_edge_multiplicity():
    from graphbell.graphio import GraphSpec
    g = GraphSpec.from_edges(3, 2, [(1, 2, 2)])
    _, A, B = ideal_AB(g)
    assert check_anticomm(A, B, r12=2).passed
    assert not check_anticomm(A, B).passed
    assert all(r.passed for r in run_selftests(g))


def test_anticomm_block_realization():
    X, Z = pauli_xz(3)
    w = omega(3)
    for rank in range(3):
        Q = np.diag([1.0] * rank + [0.0] * (2 - rank))
        Qp = np.eye(2) - Q

        def block(M):
            return np.kron(M, Q) + np.kron(M.T, Qp)

        tildes = [block(X @ np.linalg.matrix_power(Z, k)) for k in range(3)]
        A = [LAM3[1] / np.sqrt(3) * sum(w ** (t * k + k * (k + 1)) * tildes[k] for k in range(3))
             for t in range(3)]
        B = [block(np.linalg.matrix_power(Z, 1) if y == 0 else Z @ np.linalg.matrix_power(X, y))
             for y in range(3)]
        assert check_anticomm(A, B).passed


def test_anticomm_random_fails():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        A = [random_order_d_unitary(3, rng) for _ in range(3)]
        B = [random_order_d_unitary(3, rng) for _ in range(3)]
        rep = check_anticomm(A, B)
        assert max(rep.residuals.values()) > 0.1


def test_unitary_anticomm():
    real, _, _ = ideal_AB()
    rep = check_unitary_anticomm(AME, real)
    assert rep.passed and set(rep.residuals) == {"C4", "D3"}
    X, Z = pauli_xz(3)
    assert unitary_anticomm_residual(Z, X) < 1e-12
    assert abs(abs(1 + omega(3)) - 1) < 1e-12
    degenerate = np.diag([1, 1, omega(3)])
    assert unitary_anticomm_residual(Z, degenerate) > 0.1


def test_canonical_forms():
    rep = check_canonical_forms()
    assert rep.passed
    for rank in range(3):
        assert rep.residuals[f"r{rank}_B2_from_anticommutator"] < 1e-10


def test_obstruction_example():
    v = transposition_obstruction(AME, (1, 0, 0, 0))
    assert v.kind == "scalar_product"
    assert v.witness == ["(G1,0)^1", "(G1,1)^1", "(G1,2)^1"] and v.phase == 1


def test_uniform_patterns_stabilizable():
    for m in ((0, 0, 0, 0), (1, 1, 1, 1)):
        v = transposition_obstruction(AME, m)
        assert v.kind == "stabilizable" and v.residual <= 1e-10


@pytest.mark.parametrize("g", [AME, builtin_graph("line", 3, 3), builtin_graph("star", 4, 3)])
def test_every_mixed_pattern_obstructed(g):
    for m in itertools.product((0, 1), repeat=g.n):
        kind = transposition_obstruction(g, m).kind
        assert (kind == "stabilizable") == (len(set(m)) == 1)
    assert obstruction_sweep(g).passed


def test_xz_nonunitarity():
    for d in (3, 5, 7):
        rep = xz_nonunitarity(d, trials=100, seed=d)
        assert rep.passed and rep.details["non_unitary"] == 100
    assert xz_combination_residual(2, 2 ** -0.5, 2 ** -0.5) < 1e-12
    assert xz_combination_residual(3, 1.0, 0.0) < 1e-12


@pytest.mark.parametrize("d", [3, 5, 7])
def test_tilde_completeness_random_observables(d):
    lam = LambdaTable.build(d, resolve_convention(d))
    rng = np.random.default_rng(d)
    for _ in range(10):
        A = [random_order_d_unitary(d, rng) for _ in range(d)]
        for n in range(1, d):
            assert tilde_completeness_residual(A, n, lam) < 1e-10


def test_suite_passes_on_ame():
    reports = run_selftests(AME)
    assert all(r.passed for r in reports), [r.name for r in reports if not r.passed]


def test_suite_needs_qutrits():
    with pytest.raises(ValueError):
        run_selftests(builtin_graph("pair", 5))
