"""Bell expressions tailored to qudit graph states.

The construction picks a pivot vertex ``A`` and a neighbour ``B`` of it and
collects the stabilizing operators

    G1,k = G_A G_B^k           k = 0..d-1
    G2,j = G_A G_j             j another neighbour of A  ("C" parties)
    G3,j = G_j                 j not adjacent to A       ("D" parties)

Every local ``X Z^b`` at the pivot is traded for the Fourier combination
``Atilde_b^(n)`` of the pivot's ``d`` observables, every other local factor
for a plain observable power.  All powers ``n = 1..d-1`` enter.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .coeffs import Convention, LambdaTable, ParityReading, combined_observable, resolve_convention
from .corealg import (
    DimensionError,
    StateVector,
    WeylWord,
    apply_local_array,
    hermitian_max_eigenvalue,
    omega_powers,
    random_order_d_unitary,
    weyl_matrix,
    weyl_mul,
    weyl_pow,
)
from .graphio import GraphSpec, PivotChoice, choose_pivots
from .graphstate import generators, synthesize_state

SCHEMA = "graphbell/1"
IMAG_TOL = 1e-9


class CoefficientError(ValueError):
    def __init__(self, violated: Sequence, msg: str):
        super().__init__(msg)
        self.violated = list(violated)


class ImaginaryResidueError(ValueError):
    pass


@dataclass(frozen=True)
class BellTerm:
    coeff: complex
    factors: tuple[tuple[int, int, int], ...]  # (party, setting, power), 0-based party


@dataclass(frozen=True)
class Block:
    """One labelled stabilizing operator and how it maps onto observables (n = 1)."""

    label: str
    weight: Fraction
    word: WeylWord
    a_index: int | None  # b in Atilde_b, None if the pivot factor is the identity
    factors: tuple[tuple[int, int, int], ...]  # non-pivot (party, setting, power)


@dataclass(frozen=True)
class CoefficientSet:
    c1: Mapping[int, Fraction]  # k = 1..d-1
    c2: Mapping[int, Fraction]  # keyed by the C party's vertex (0-based)

    def to_dict(self) -> dict:
        return {"c1": {str(k): str(v) for k, v in sorted(self.c1.items())},
                "c2": {str(j + 1): str(v) for j, v in sorted(self.c2.items())}}


@dataclass(frozen=True)
class BellExpression:
    d: int
    scenario: tuple[int, ...]
    terms: tuple[BellTerm, ...]
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_parties(self) -> int:
        return len(self.scenario)

    def conjugate(self) -> "BellExpression":
        d = self.d
        terms = tuple(BellTerm(t.coeff.conjugate(), tuple((p, s, (d - n) % d) for p, s, n in t.factors))
                      for t in self.terms)
        return BellExpression(d, self.scenario, _sorted_terms(terms), dict(self.meta))


@dataclass(frozen=True)
class Realization:
    state: StateVector
    observables: tuple[tuple[np.ndarray, ...], ...]  # [party][setting]

    def transposed(self) -> "Realization":
        obs = tuple(tuple(M.T for M in party) for party in self.observables)
        return Realization(self.state.conj(), obs)

    def defects(self, d: int) -> dict[str, float]:
        """Worst unitarity and order-d residuals over all observables."""
        unit = order = 0.0
        for party in self.observables:
            for M in party:
                eye = np.eye(M.shape[0])
                unit = max(unit, float(np.abs(M.conj().T @ M - eye).max()))
                order = max(order, float(np.abs(np.linalg.matrix_power(M, d) - eye).max()))
        return {"unitarity": unit, "order": order}


def _sorted_terms(terms) -> tuple[BellTerm, ...]:
    return tuple(sorted(terms, key=lambda t: t.factors))


# ---------------------------------------------------------------- products

def _roles(g: GraphSpec, piv: PivotChoice) -> dict[int, str]:
    roles = {piv.v1: "A", piv.v2: "B"}
    roles.update({v: "C" for v in piv.c_parties})
    roles.update({v: "D" for v in piv.d_parties})
    return roles


def scenario_for(g: GraphSpec, piv: PivotChoice) -> tuple[int, ...]:
    roles = _roles(g, piv)
    return tuple(g.d if roles[v] in "AB" else 2 for v in range(g.n))


def ideal_local_words(g: GraphSpec, piv: PivotChoice) -> dict[int, list[tuple[int, int, int]]]:
    """Single-site (x, z, phase) of the target observables for every non-pivot party.

    B_0 = Z, B_k = Z^{r12} X^k; C_0 = Z, C_1 = Z^{r1i} X; D_0 = Z, D_1 = X.
    ``Z^a X^b = omega^{ab} X^b Z^a`` gives the phases.
    """
    d = g.d
    out = {}
    r12 = g.r(piv.v1, piv.v2)
    out[piv.v2] = [(0, 1, 0)] + [(k, r12, r12 * k % d) for k in range(1, d)]
    for v in piv.c_parties:
        r1i = g.r(piv.v1, v)
        out[v] = [(0, 1, 0), (1, r1i, r1i % d)]
    for v in piv.d_parties:
        out[v] = [(0, 1, 0), (1, 0, 0)]
    return out


def _single(d: int, x: int, z: int, phase: int = 0) -> WeylWord:
    return WeylWord(d, phase, ((x, z),))


def _match_local(d: int, local: WeylWord, targets: list[tuple[int, int, int]]) -> tuple[int, int]:
    """(setting, power) with ``target_setting ** power == local`` including phase."""
    if local.is_identity_up_to_phase and local.phase == 0:
        return (-1, 0)
    for s, (x, z, ph) in enumerate(targets):
        base = _single(d, x, z, ph)
        for p in range(1, d):
            if weyl_pow(base, p) == local:
                return (s, p)
    raise AssertionError(f"local operator {local} is not a power of any assigned observable")


def stabilizer_products(g: GraphSpec, piv: PivotChoice,
                        coeffs: CoefficientSet | None = None) -> list[Block]:
    """Labelled products with their observable assignment for ``n = 1``."""
    if g.d == 2:
        raise ValueError("qubit graphs use qubit_inequality")
    d = g.d
    coeffs = coeffs or default_coefficients(g, piv)
    gens = generators(g)
    targets = ideal_local_words(g, piv)
    A, B = piv.v1, piv.v2

    # local factor at each site of a product is the product of the generators'
    # local factors in the same order, so match site by site
    def make(label, weight, factors_seq):
        word = WeylWord.identity(d, g.n)
        for w in factors_seq:
            word = weyl_mul(word, w)
        a_index = None
        facs = []
        for site in range(g.n):
            local = WeylWord.identity(d, 1)
            for w in factors_seq:
                local = weyl_mul(local, _single(d, *w.sites[site]))
            if site == A:
                (x, z), ph = local.sites[0], local.phase
                if (x, z) == (0, 0):
                    assert ph == 0
                    continue
                assert x == 1 and ph == 0, f"pivot factor {local} is not X Z^b"
                a_index = z
                continue
            s, p = _match_local(d, local, targets[site])
            if p:
                facs.append((site, s, p))
        return Block(label, Fraction(weight), word, a_index, tuple(facs))

    blocks = []
    for k in range(d):
        w = 1 if k == 0 else coeffs.c1[k]
        blocks.append(make(f"G1,{k}", w, [gens[A]] + [gens[B]] * k))
    for v in piv.c_parties:
        blocks.append(make(f"G2,{v + 1}", coeffs.c2[v], [gens[A], gens[v]]))
    for v in piv.d_parties:
        blocks.append(make(f"G3,{v + 1}", 1, [gens[v]]))
    return blocks


# ---------------------------------------------------------------- coefficients

def _slot_groups(g: GraphSpec, piv: PivotChoice) -> dict[int, list[int]]:
    d = g.d
    r12 = g.r(piv.v1, piv.v2)
    return {k: [j for j in piv.c_parties if g.r(piv.v1, j) == (k * r12) % d] for k in range(1, d)}


def default_coefficients(g: GraphSpec, piv: PivotChoice) -> CoefficientSet:
    """Even split of each Atilde slot among the operators sharing it."""
    groups = _slot_groups(g, piv)
    c1 = {k: Fraction(1, 1 + len(js)) for k, js in groups.items()}
    c2 = {j: Fraction(1, 1 + len(js)) for js in groups.values() for j in js}
    return CoefficientSet(c1, c2)


def coefficient_violations(g: GraphSpec, piv: PivotChoice, cs: CoefficientSet) -> list[str]:
    out = []
    groups = _slot_groups(g, piv)
    for k, v in cs.c1.items():
        if v <= 0:
            out.append(f"c1,{k}<=0")
    for j, v in cs.c2.items():
        if v <= 0:
            out.append(f"c2,{j + 1}<=0")
    for k, js in groups.items():
        total = cs.c1.get(k, Fraction(0)) + sum(cs.c2.get(j, Fraction(0)) for j in js)
        if total != 1:
            out.append(f"k={k}: sum={total}")
    return out


def custom_coefficients(g: GraphSpec, piv: PivotChoice,
                        overrides: Mapping[str, object]) -> CoefficientSet:
    """Apply overrides such as ``{"c1.1": "0.3", "c2.4": "0.7"}`` (vertex 1-based) on the defaults.

    Values are read as exact decimals/fractions and checked in rational arithmetic.
    """
    base = default_coefficients(g, piv)
    c1, c2 = dict(base.c1), dict(base.c2)
    for key, raw in overrides.items():
        try:
            val = Fraction(str(raw))
        except (ValueError, ZeroDivisionError) as exc:
            raise CoefficientError([key], f"bad coefficient value {raw!r}") from exc
        fam, _, idx = key.partition(".")
        if fam == "c1" and idx.isdigit() and int(idx) in c1:
            c1[int(idx)] = val
        elif fam == "c2" and idx.isdigit() and int(idx) - 1 in c2:
            c2[int(idx) - 1] = val
        else:
            raise CoefficientError([key], f"no coefficient {key!r} for this graph")
    cs = CoefficientSet(c1, c2)
    bad = coefficient_violations(g, piv, cs)
    if bad:
        raise CoefficientError(bad, "coefficient constraints violated: " + "; ".join(bad))
    return cs


# ---------------------------------------------------------------- expression

def atilde_coeff(d: int, b: int, t: int, n: int, lam: LambdaTable) -> complex:
    """Coefficient of ``A_t^n`` in ``Atilde_b^(n)``."""
    w = omega_powers(d)
    return complex(w[(-n * b * (b + 1) - n * t * b) % d] / (math.sqrt(d) * lam[n]))


def atilde_matrices(A: Sequence[np.ndarray], n: int, lam: LambdaTable) -> list[np.ndarray]:
    d = lam.d
    powers = [np.linalg.matrix_power(M, n) for M in A]
    return [sum(atilde_coeff(d, b, t, n, lam) * powers[t] for t in range(d)) for b in range(d)]


def quantum_bound(g: GraphSpec, piv: PivotChoice) -> float:
    if g.d == 2:
        return float(g.n + piv.n1 - 1)
    return float((g.d - 1) * (g.n - piv.n1 + g.d - 1))


def expected_term_count(d: int, n: int, n1: int) -> int:
    return (d - 1) * (d * (d + n1 - 1) + n - n1 - 1)


def printed_term_count(d: int, n: int, n1: int) -> int:
    return (d - 1) * (n + (n1 + d) * (d - 1))


def build_expression(g: GraphSpec, piv: PivotChoice | None = None,
                     coeffs: CoefficientSet | None = None,
                     lam: LambdaTable | None = None) -> BellExpression:
    if g.d == 2:
        return qubit_inequality(g, piv)[0]
    d = g.d
    piv = piv or choose_pivots(g)
    coeffs = coeffs or default_coefficients(g, piv)
    bad = coefficient_violations(g, piv, coeffs)
    if bad:
        raise CoefficientError(bad, "coefficient constraints violated: " + "; ".join(bad))
    lam = lam or LambdaTable.build(d, resolve_convention(d))
    blocks = stabilizer_products(g, piv, coeffs)

    acc: dict[tuple, complex] = {}
    for n in range(1, d):
        for blk in blocks:
            w = float(blk.weight)
            rest = [(p, s, (q * n) % d) for p, s, q in blk.factors]
            if blk.a_index is None:
                _add(acc, tuple(sorted(rest)), complex(w))
                continue
            for t in range(d):
                facs = tuple(sorted(rest + [(piv.v1, t, n)]))
                _add(acc, facs, w * atilde_coeff(d, blk.a_index, t, n, lam))
    terms = _sorted_terms(BellTerm(c, f) for f, c in acc.items())
    meta = {
        "construction": "qudit",
        "graph": g.to_dict(),
        "pivots": piv.to_dict(),
        "pivot_party": piv.v1,
        "coefficients": coeffs.to_dict(),
        "convention": lam.convention.value,
        "parity_reading": lam.reading.value,
        "beta_q": quantum_bound(g, piv),
        "term_count": {"direct": expected_term_count(d, g.n, piv.n1),
                       "printed_formula": printed_term_count(d, g.n, piv.n1),
                       "actual": len(terms)},
        "blocks": [block_to_dict(b) for b in blocks],
    }
    return BellExpression(d, scenario_for(g, piv), terms, meta)


def _add(acc, facs, c):
    acc[facs] = acc.get(facs, 0j) + c


def block_to_dict(b: Block) -> dict:
    return {"label": b.label, "weight": str(b.weight), "word": str(b.word),
            "a_index": b.a_index, "factors": [[p + 1, s, q] for p, s, q in b.factors]}


def imax_expression(d: int, lam: LambdaTable | None = None) -> BellExpression:
    """Two-party expression in its closed Fourier form:
    ``(1/sqrt d) sum_n conj(lambda_n) sum_{x,y} omega^{-nxy} <A_x^n B_y^n>``.
    """
    lam = lam or LambdaTable.build(d, resolve_convention(d))
    w = omega_powers(d)
    terms = []
    for n in range(1, d):
        for x in range(d):
            for y in range(d):
                c = np.conj(lam[n]) * w[(-n * x * y) % d] / math.sqrt(d)
                terms.append(BellTerm(complex(c), ((0, x, n), (1, y, n))))
    return BellExpression(d, (d, d), _sorted_terms(terms),
                          {"construction": "imax", "convention": lam.convention.value,
                           "beta_q": float(d * (d - 1))})


# ---------------------------------------------------------------- realizations

def ideal_realization(g: GraphSpec, piv: PivotChoice | None = None,
                      lam: LambdaTable | None = None) -> Realization:
    d = g.d
    piv = piv or choose_pivots(g)
    state = synthesize_state(g)
    obs: list[tuple[np.ndarray, ...]] = [() for _ in range(g.n)]
    if d == 2:
        X, Z = weyl_matrix(2, 1, 0), weyl_matrix(2, 0, 1)
        for v in range(g.n):
            obs[v] = (X, Z)
        obs[piv.v1] = ((X + Z) / math.sqrt(2), (X - Z) / math.sqrt(2))
        return Realization(state, tuple(obs))
    lam = lam or LambdaTable.build(d, resolve_convention(d))
    obs[piv.v1] = tuple(combined_observable(d, t, 1, lam[1]) for t in range(d))
    for v, targets in ideal_local_words(g, piv).items():
        obs[v] = tuple(np.exp(2j * np.pi * ph / d) * weyl_matrix(d, x, z) for x, z, ph in targets)
    return Realization(state, tuple(obs))


def random_realization(expr: BellExpression, state: StateVector, seed: int) -> Realization:
    """Independent random order-d unitaries for every party and setting."""
    rng = np.random.default_rng(seed)
    obs = tuple(tuple(random_order_d_unitary(expr.d, rng) for _ in range(m)) for m in expr.scenario)
    return Realization(state, obs)


# ---------------------------------------------------------------- evaluation

class _PowerCache:
    def __init__(self, real: Realization):
        self.real = real
        self.cache: dict[tuple[int, int, int], np.ndarray] = {}

    def __call__(self, party: int, setting: int, n: int) -> np.ndarray:
        key = (party, setting, n)
        if key not in self.cache:
            self.cache[key] = np.linalg.matrix_power(self.real.observables[party][setting], n)
        return self.cache[key]


def _check_shapes(expr: BellExpression, real: Realization) -> None:
    if len(real.observables) != expr.n_parties or real.state.n_sites != expr.n_parties:
        raise DimensionError("realization and expression have different party counts")
    for p, m in enumerate(expr.scenario):
        if len(real.observables[p]) < m:
            raise DimensionError(f"party {p + 1} has {len(real.observables[p])} observables, needs {m}")


def bell_operator_apply(expr: BellExpression, real: Realization):
    """Callback applying the Bell operator to (batches of) amplitude vectors."""
    _check_shapes(expr, real)
    pw = _PowerCache(real)
    d_loc, n_sites = real.state.d, real.state.n_sites

    def apply(v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v, dtype=complex)
        for t in expr.terms:
            ops = [(p, pw(p, s, n)) for p, s, n in t.factors]
            out += t.coeff * apply_local_array(v, d_loc, n_sites, ops)
        return out
    return apply


def quantum_value(expr: BellExpression, real: Realization, imag_tol: float = IMAG_TOL) -> float:
    _check_shapes(expr, real)
    pw = _PowerCache(real)
    psi = real.state.amplitudes
    d_loc, n_sites = real.state.d, real.state.n_sites
    total = 0j
    for t in expr.terms:
        ops = [(p, pw(p, s, n)) for p, s, n in t.factors]
        total += t.coeff * np.vdot(psi, apply_local_array(psi, d_loc, n_sites, ops))
    if abs(total.imag) > imag_tol:
        raise ImaginaryResidueError(f"Bell value has imaginary part {total.imag:.3e}")
    return float(total.real)


def bell_max_eigenvalue(expr: BellExpression, real: Realization, seed: int = 0) -> float:
    apply = bell_operator_apply(expr, real)
    return hermitian_max_eigenvalue(apply, real.state.amplitudes.size, seed=seed)


def _blocks_from_meta(expr: BellExpression) -> list[dict]:
    if expr.meta.get("construction") != "qudit":
        raise ValueError("operator form needs an expression built from a graph")
    return expr.meta["blocks"]


def expression_lambda(expr: BellExpression) -> LambdaTable:
    return LambdaTable.build(expr.d, Convention(expr.meta["convention"]),
                             ParityReading(expr.meta.get("parity_reading", "half-sum")))


def tilde_products(expr: BellExpression, real: Realization, n: int):
    """Operator versions of the labelled products at power ``n``.

    Yields ``(weight, ops)`` where ``ops`` are (site, matrix) pairs; the pivot
    carries ``Atilde_b^(n)`` built from the realization's pivot observables.
    """
    d = expr.d
    lam = expression_lambda(expr)
    a_party = int(expr.meta["pivot_party"])
    pw = _PowerCache(real)
    at = atilde_matrices(real.observables[a_party][:d], n, lam)
    out = []
    for blk in _blocks_from_meta(expr):
        ops = [(p - 1, pw(p - 1, s, (q * n) % d)) for p, s, q in blk["factors"] if (q * n) % d]
        if blk["a_index"] is not None:
            ops.append((a_party, at[blk["a_index"]]))
        out.append((blk["label"], float(Fraction(blk["weight"])), ops))
    return out


def stabilization_residuals(expr: BellExpression, real: Realization) -> dict[str, float]:
    """``|| Gtilde psi - psi ||`` for every labelled product and power."""
    psi = real.state.amplitudes
    out = {}
    for n in range(1, expr.d):
        for label, _, ops in tilde_products(expr, real, n):
            v = apply_local_array(psi, real.state.d, real.state.n_sites, ops)
            out[f"{label}^{n}"] = float(np.linalg.norm(v - psi))
    return out


def sos_residual(expr: BellExpression, real: Realization, n_vectors: int = 20, seed: int = 0,
                 precondition_tol: float = 1e-10) -> float:
    """Max over random unit vectors of ``|| (beta_Q - B - 1/2 sum w P^dag P) phi ||``,
    ``P = 1 - Gtilde`` for every labelled product and power.
    """
    _check_shapes(expr, real)
    d = expr.d
    defects = real.defects(d)
    if max(defects.values()) > precondition_tol:
        warnings.warn(f"observables are not unitary of order {d}: {defects}", RuntimeWarning)
    beta = float(expr.meta["beta_q"])
    d_loc, n_sites = real.state.d, real.state.n_sites
    dim = real.state.amplitudes.size

    rng = np.random.default_rng(seed)
    phi = rng.standard_normal((dim, n_vectors)) + 1j * rng.standard_normal((dim, n_vectors))
    phi /= np.linalg.norm(phi, axis=0)

    out = beta * phi - bell_operator_apply(expr, real)(phi)
    for n in range(1, d):
        for _, w, ops in tilde_products(expr, real, n):
            ops_dag = [(p, M.conj().T) for p, M in ops]
            u = phi - apply_local_array(phi, d_loc, n_sites, ops)
            out -= 0.5 * w * (u - apply_local_array(u, d_loc, n_sites, ops_dag))
    return float(np.linalg.norm(out, axis=0).max())


# ---------------------------------------------------------------- qubits

def qubit_inequality(g: GraphSpec, piv: PivotChoice | None = None) -> tuple[BellExpression, float, float]:
    """Two-setting qubit inequality with the sqrt(2) replacement at the pivot.

    Returns the expression with its classical and quantum bounds.
    """
    if g.d != 2:
        raise ValueError(f"qubit construction needs d = 2, got {g.d}")
    piv = piv or choose_pivots(g)
    one = piv.v1
    n1 = piv.n1
    nb1 = set(g.neighbors(one))
    s2 = 1 / math.sqrt(2)
    acc: dict[tuple, complex] = {}
    # G_1 -> X at the pivot, Z on its neighbours
    zs = [(j, 1, 1) for j in sorted(nb1)]
    for t in (0, 1):
        _add(acc, tuple(sorted([(one, t, 1)] + zs)), complex(n1 * s2))
    # G_i for neighbours i: Z at the pivot
    for i in sorted(nb1):
        rest = [(i, 0, 1)] + [(j, 1, 1) for j in g.neighbors(i) if j != one]
        _add(acc, tuple(sorted([(one, 0, 1)] + rest)), complex(s2))
        _add(acc, tuple(sorted([(one, 1, 1)] + rest)), complex(-s2))
    for i in range(g.n):
        if i == one or i in nb1:
            continue
        _add(acc, tuple(sorted([(i, 0, 1)] + [(j, 1, 1) for j in g.neighbors(i)])), 1 + 0j)
    terms = _sorted_terms(BellTerm(c, f) for f, c in acc.items())
    beta_c = g.n + (math.sqrt(2) - 1) * n1 - 1
    beta_q = float(g.n + n1 - 1)
    meta = {"construction": "qubit", "graph": g.to_dict(), "pivots": piv.to_dict(),
            "pivot_party": one, "beta_q": beta_q, "beta_c_formula": beta_c}
    return BellExpression(2, (2,) * g.n, terms, meta), beta_c, beta_q


# ---------------------------------------------------------------- JSON

def expression_to_dict(expr: BellExpression) -> dict:
    meta = dict(expr.meta)
    if "pivot_party" in meta:
        meta["pivot_party"] = int(meta["pivot_party"]) + 1
    return {
        "schema": SCHEMA,
        "d": expr.d,
        "scenario": list(expr.scenario),
        "terms": [{"coeff": [t.coeff.real, t.coeff.imag],
                   "factors": [[p + 1, s, n] for p, s, n in t.factors]} for t in expr.terms],
        "meta": meta,
    }


def expression_from_dict(obj: dict) -> BellExpression:
    meta = dict(obj.get("meta", {}))
    if "pivot_party" in meta:
        meta["pivot_party"] = int(meta["pivot_party"]) - 1
    terms = tuple(BellTerm(complex(*t["coeff"]), tuple((p - 1, s, n) for p, s, n in t["factors"]))
                  for t in obj["terms"])
    return BellExpression(int(obj["d"]), tuple(obj["scenario"]), _sorted_terms(terms), meta)


def dumps_expression(expr: BellExpression) -> str:
    return json.dumps(expression_to_dict(expr), indent=1, sort_keys=True)


def loads_expression(text: str) -> BellExpression:
    return expression_from_dict(json.loads(text))
