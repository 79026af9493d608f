"""Stabilizer generators and state vectors of qudit graph states."""
from __future__ import annotations

import numpy as np

from .corealg import StateVector, WeylWord, apply_word, omega_powers
from .graphio import GraphSpec

MAX_AMPLITUDES = 2 ** 24


class MemoryBudgetError(RuntimeError):
    pass


def generators(g: GraphSpec) -> list[WeylWord]:
    """``G_i = X_i prod_{j in N_i} Z_j^{r_ij}``, one per vertex."""
    words = []
    for i in range(g.n):
        sites = [(0, g.r(i, j)) for j in range(g.n)]
        sites[i] = (1, 0)
        words.append(WeylWord(g.d, 0, tuple(sites)))
    return words


def synthesize_state(g: GraphSpec, max_amplitudes: int = MAX_AMPLITUDES) -> StateVector:
    """Apply ``CZ^{r_ij}`` to ``|+>^N``; ``CZ|k,l> = omega^{kl}|k,l>``.

    All the controlled phases are diagonal, so the whole circuit collapses to
    one phase ``omega^{sum_{i<j} r_ij k_i k_j}`` per basis string.
    """
    d, n = g.d, g.n
    size = d ** n
    if size > max_amplitudes:
        raise MemoryBudgetError(f"{size} amplitudes exceed budget {max_amplitudes}")
    digits = np.indices((d,) * n).reshape(n, -1)
    expo = np.zeros(size, dtype=np.int64)
    for i, j, r in g.edges():
        expo += r * digits[i - 1] * digits[j - 1]
    amps = omega_powers(d)[expo % d] / np.sqrt(size)
    return StateVector(d, n, amps)


def verify_stabilization(state: StateVector, words) -> float:
    """Largest ``|| W psi - psi ||`` over the given words."""
    worst = 0.0
    for w in words:
        out = apply_word(state, w)
        worst = max(worst, float(np.linalg.norm(out.amplitudes - state.amplitudes)))
    return worst


def reduced_density_matrix(state: StateVector, keep) -> np.ndarray:
    keep = sorted(keep)
    rest = [i for i in range(state.n_sites) if i not in keep]
    t = np.transpose(state.tensor(), keep + rest)
    m = t.reshape(state.d ** len(keep), -1)
    return m @ m.conj().T
