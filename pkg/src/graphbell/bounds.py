"""Classical (local deterministic) bounds of Bell expressions.

A deterministic strategy assigns every party and setting an outcome
``a in Z_d``; observable powers then become ``omega^(n a)``.

The exact search enumerates every party except one pivot party, whose
settings decouple once the rest is fixed: for each pivot setting the best
outcome is picked in closed form.  A plain enumeration of all strategies
is kept as an independent route.

Ties are broken towards the lowest strategy code.  Codes are mixed radix
with the pivot party's settings as least significant digits, followed by
the remaining parties in increasing order (settings increasing inside a
party).  Only settings that occur in some term are enumerated; the others
stay at outcome 0.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .corealg import omega_powers
from .inequality import BellExpression

TIE_TOL = 1e-10
DEFAULT_BUDGET = 10 ** 9
CHUNK = 8192


class BudgetExceededError(RuntimeError):
    def __init__(self, needed: int, budget: int):
        super().__init__(f"search needs {needed} strategies, budget is {budget}")
        self.needed = needed
        self.budget = budget


@dataclass(frozen=True)
class DeterministicStrategy:
    outcomes: tuple[tuple[int, ...], ...]  # [party][setting]

    def to_list(self) -> list[list[int]]:
        return [list(p) for p in self.outcomes]


@dataclass
class BoundResult:
    value: float
    strategy: DeterministicStrategy
    method: str
    certified: bool
    evaluated: int
    elapsed: float
    tie_tol: float = TIE_TOL
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"value": self.value, "strategy": self.strategy.to_list(), "method": self.method,
               "certified": self.certified, "evaluated": self.evaluated, "tie_tol": self.tie_tol}
        out.update(self.extra)
        return out


def classical_value(expr: BellExpression, strategy: DeterministicStrategy,
                    imag_tol: float = 1e-9) -> float:
    """Expression value on a deterministic strategy, summed with ``math.fsum``."""
    w = omega_powers(expr.d)
    d = expr.d
    parts = []
    im = []
    for t in expr.terms:
        e = sum(n * strategy.outcomes[p][s] for p, s, n in t.factors) % d
        v = t.coeff * w[e]
        parts.append(v.real)
        im.append(v.imag)
    imag = math.fsum(im)
    if abs(imag) > imag_tol * max(1.0, len(im)):
        raise ValueError(f"classical value has imaginary part {imag:.3e}")
    return math.fsum(parts)


# ------------------------------------------------------------------ layout

def pivot_party(expr: BellExpression) -> int:
    """Party with most settings, lowest index on ties."""
    return max(range(expr.n_parties), key=lambda p: (expr.scenario[p], -p))


def _active_slots(expr: BellExpression) -> set[tuple[int, int]]:
    return {(p, s) for t in expr.terms for p, s, _ in t.factors}


def slot_layout(expr: BellExpression) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """(pivot slots, outer slots) in code order, least significant first."""
    piv = pivot_party(expr)
    active = _active_slots(expr)
    pslots = [(piv, s) for s in range(expr.scenario[piv]) if (piv, s) in active]
    oslots = [(p, s) for p in range(expr.n_parties) if p != piv
              for s in range(expr.scenario[p]) if (p, s) in active]
    return pslots, oslots


def _digits(codes: np.ndarray, d: int, m: int) -> np.ndarray:
    out = np.empty((codes.size, m), dtype=np.int64)
    c = codes.copy()
    for i in range(m):
        out[:, i] = c % d
        c //= d
    return out


def _strategy(expr: BellExpression, slots, digits) -> DeterministicStrategy:
    outs = [[0] * m for m in expr.scenario]
    for (p, s), a in zip(slots, digits):
        outs[p][s] = int(a)
    return DeterministicStrategy(tuple(tuple(o) for o in outs))


def _power_matrix(expr: BellExpression, slots) -> np.ndarray:
    idx = {sl: i for i, sl in enumerate(slots)}
    P = np.zeros((len(slots), len(expr.terms)))
    for j, t in enumerate(expr.terms):
        for p, s, n in t.factors:
            if (p, s) in idx:
                P[idx[(p, s)], j] = n
    return P


def _chunks(total: int, size: int):
    return [(lo, min(total, lo + size)) for lo in range(0, total, size)]


def _run_chunks(fn, ranges, threads: int):
    if threads <= 1 or len(ranges) <= 1:
        return [fn(r) for r in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, ranges))  # map keeps chunk order


def _first_within(vals_fn, ranges, chunk_max, tol):
    """Lowest code whose value is within ``tol`` of the overall maximum."""
    best = max(chunk_max)
    for r, m in zip(ranges, chunk_max):
        if m >= best - tol:
            vals = vals_fn(r)
            i = int(np.flatnonzero(vals >= best - tol)[0])
            return r[0] + i
    raise AssertionError("no chunk reaches the maximum")


# ------------------------------------------------------------------ exact

class _PivotEvaluator:
    """Best total over pivot outcomes for blocks of outer strategies."""

    def __init__(self, expr: BellExpression):
        d = self.d = expr.d
        self.w = omega_powers(d)
        self.pslots, self.oslots = slot_layout(expr)
        self.piv = pivot_party(expr)
        pindex = {s: i for i, (_, s) in enumerate(self.pslots)}
        # group index: (pivot slot i, power n) -> i * d + n ; pivot-free terms -> last column
        self.n_groups = len(self.pslots) * d + 1
        G = np.zeros((len(expr.terms), self.n_groups), dtype=complex)
        for j, t in enumerate(expr.terms):
            pf = [(s, n) for p, s, n in t.factors if p == self.piv]
            g = pindex[pf[0][0]] * d + pf[0][1] if pf else self.n_groups - 1
            G[j, g] = t.coeff
        self.G = G
        self.P = _power_matrix(expr, self.oslots)
        n = np.arange(d)
        self.W = self.w[np.outer(n, n) % d]  # W[n, a] = omega^{n a}

    def scores(self, codes: np.ndarray):
        """Per outer code: best value and per pivot slot the best outcome (lowest on ties)."""
        d = self.d
        dig = _digits(codes, d, len(self.oslots)).astype(float)
        expo = np.rint(dig @ self.P).astype(np.int64) % d
        S = self.w[expo] @ self.G
        total = S[:, -1].real.copy()
        picks = np.zeros((codes.size, len(self.pslots)), dtype=np.int64)
        for i in range(len(self.pslots)):
            vals = (S[:, i * d:(i + 1) * d] @ self.W).real  # (chunk, a)
            top = vals.max(axis=1)
            picks[:, i] = np.argmax(vals >= top[:, None] - TIE_TOL, axis=1)
            total += vals[np.arange(codes.size), picks[:, i]]
        return total, picks


def exact_bound(expr: BellExpression, budget: int = DEFAULT_BUDGET, threads: int = 1,
                chunk: int = CHUNK) -> BoundResult:
    t0 = time.perf_counter()
    ev = _PivotEvaluator(expr)
    d = expr.d
    n_outer = d ** len(ev.oslots)
    if n_outer > budget:
        raise BudgetExceededError(n_outer, budget)
    ranges = _chunks(n_outer, chunk)

    def vals(r):
        return ev.scores(np.arange(r[0], r[1], dtype=np.int64))[0]

    chunk_max = [float(v.max()) for v in _run_chunks(vals, ranges, threads)]
    code = _first_within(vals, ranges, chunk_max, TIE_TOL)
    _, picks = ev.scores(np.array([code], dtype=np.int64))
    odig = _digits(np.array([code]), d, len(ev.oslots))[0]
    strat = _strategy(expr, ev.pslots + ev.oslots, list(picks[0]) + list(odig))
    return BoundResult(classical_value(expr, strat), strat, "exact", True, n_outer,
                       time.perf_counter() - t0,
                       extra={"pivot_party": ev.piv + 1, "outer_strategies": n_outer})


def naive_bound(expr: BellExpression, budget: int = DEFAULT_BUDGET, chunk: int = CHUNK) -> BoundResult:
    """Evaluate every deterministic strategy directly."""
    t0 = time.perf_counter()
    d = expr.d
    pslots, oslots = slot_layout(expr)
    slots = pslots + oslots
    total = d ** len(slots)
    if total > budget:
        raise BudgetExceededError(total, budget)
    P = _power_matrix(expr, slots)
    coeff = np.array([t.coeff for t in expr.terms])
    w = omega_powers(d)

    def vals(r):
        dig = _digits(np.arange(r[0], r[1], dtype=np.int64), d, len(slots)).astype(float)
        expo = np.rint(dig @ P).astype(np.int64) % d
        return (w[expo] @ coeff).real

    ranges = _chunks(total, chunk)
    chunk_max = [float(vals(r).max()) for r in ranges]
    code = _first_within(vals, ranges, chunk_max, TIE_TOL)
    strat = _strategy(expr, slots, _digits(np.array([code]), d, len(slots))[0])
    return BoundResult(classical_value(expr, strat), strat, "naive", True, total,
                       time.perf_counter() - t0)


# ------------------------------------------------------------------ heuristic

def heuristic_bound(expr: BellExpression, restarts: int = 20, seed: int = 0,
                    max_sweeps: int = 1000) -> BoundResult:
    """Coordinate ascent from the all-zero strategy plus ``restarts`` random starts.

    Gives a lower bound on the classical maximum, never a certificate.
    """
    t0 = time.perf_counter()
    d = expr.d
    pslots, oslots = slot_layout(expr)
    slots = pslots + oslots
    P = _power_matrix(expr, slots).astype(np.int64)
    coeff = np.array([t.coeff for t in expr.terms])
    w = omega_powers(d)
    cands = np.arange(d)

    def ascend(x):
        evals = 0
        for _ in range(max_sweeps):
            improved = False
            for i in range(len(slots)):
                trial = np.repeat(x[None, :], d, axis=0)
                trial[:, i] = cands
                v = (w[(trial @ P) % d] @ coeff).real
                evals += d
                j = int(np.argmax(v))
                if v[j] > v[x[i]] + TIE_TOL:
                    x[i] = j
                    improved = True
            if not improved:
                break
        return x, evals

    best = None
    evaluated = 0
    starts = [np.zeros(len(slots), dtype=np.int64)]
    starts += [np.random.default_rng(seed + i).integers(0, d, len(slots)) for i in range(restarts)]
    for x0 in starts:
        x, ev = ascend(x0.copy())
        evaluated += ev
        strat = _strategy(expr, slots, x)
        val = classical_value(expr, strat)
        if best is None or val > best[0] + TIE_TOL:
            best = (val, strat)
    return BoundResult(best[0], best[1], "heuristic", False, evaluated, time.perf_counter() - t0,
                       extra={"restarts": restarts, "seed": seed})


def violation_report(beta_c: float, beta_q: float) -> dict:
    return {"beta_c": beta_c, "beta_q": beta_q, "gap": beta_q - beta_c,
            "ratio": beta_q / beta_c if beta_c else math.inf, "violated": beta_q > beta_c + TIE_TOL}
