"""Weyl-Heisenberg algebra over prime-dimensional qudits.

Words are kept symbolically in the normal form ``omega**phase * X^x Z^z`` per
site, so products, powers, transposes and commutation phases are exact
integer arithmetic mod ``d``.  Dense matrices are only produced on request.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

STRUCT_TOL = 1e-12
UNITARY_TOL = 1e-10
EIG_TOL = 1e-8

# full d^N x d^N matrices are only assembled below this size
DENSE_LIMIT = 4096


class DimensionError(ValueError):
    pass


class NotPrimeError(ValueError):
    def __init__(self, d: int, factor: int):
        self.d = d
        self.factor = factor
        super().__init__(f"dimension {d} is not prime (smallest factor {factor})")


class NonHermitianError(ValueError):
    pass


class EigenConvergenceError(RuntimeError):
    def __init__(self, msg: str, best_estimate: float):
        super().__init__(msg)
        self.best_estimate = best_estimate


def smallest_factor(n: int) -> int:
    if n < 2:
        return n
    f = 2
    while f * f <= n:
        if n % f == 0:
            return f
        f += 1
    return n


def is_prime(n: int) -> bool:
    return n >= 2 and smallest_factor(n) == n


def check_prime(d: int) -> None:
    if not is_prime(d):
        raise NotPrimeError(d, smallest_factor(d) if d >= 2 else d)


def omega(d: int) -> complex:
    return np.exp(2j * np.pi / d)


def omega_powers(d: int) -> np.ndarray:
    """``omega**k`` for k = 0..d-1, with exact values at k=0."""
    out = np.exp(2j * np.pi * np.arange(d) / d)
    out[0] = 1.0
    return out


def pauli_xz(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Shift and clock matrices: ``X|i> = |i+1>``, ``Z|i> = omega^i |i>``."""
    check_prime(d)
    X = np.zeros((d, d), dtype=complex)
    X[(np.arange(d) + 1) % d, np.arange(d)] = 1.0
    Z = np.diag(omega_powers(d))
    return X, Z


def weyl_matrix(d: int, x: int, z: int) -> np.ndarray:
    """Dense ``X^x Z^z`` for a single site."""
    x %= d
    z %= d
    M = np.zeros((d, d), dtype=complex)
    cols = np.arange(d)
    M[(cols + x) % d, cols] = omega_powers(d)[(z * cols) % d]
    return M


@dataclass(frozen=True)
class WeylWord:
    """``omega**phase * (X^x_1 Z^z_1) (x) ... (x) (X^x_N Z^z_N)``."""

    d: int
    phase: int
    sites: tuple[tuple[int, int], ...]

    def __post_init__(self):
        d = self.d
        object.__setattr__(self, "phase", self.phase % d)
        object.__setattr__(
            self, "sites", tuple((int(x) % d, int(z) % d) for x, z in self.sites)
        )

    @classmethod
    def identity(cls, d: int, n: int) -> "WeylWord":
        return cls(d, 0, ((0, 0),) * n)

    @classmethod
    def local(cls, d: int, n: int, ops: dict[int, tuple[int, int]], phase: int = 0) -> "WeylWord":
        sites = [(0, 0)] * n
        for i, xz in ops.items():
            sites[i] = xz
        return cls(d, phase, tuple(sites))

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def is_identity_up_to_phase(self) -> bool:
        return all(x == 0 and z == 0 for x, z in self.sites)

    def __mul__(self, other: "WeylWord") -> "WeylWord":
        return weyl_mul(self, other)

    def __pow__(self, k: int) -> "WeylWord":
        return weyl_pow(self, k)

    def inverse(self) -> "WeylWord":
        return weyl_pow(self, self.d - 1)

    def to_matrix(self) -> np.ndarray:
        return to_matrix(self)

    def __str__(self) -> str:
        parts = []
        for x, z in self.sites:
            s = ("X" + (f"^{x}" if x > 1 else "") if x else "") + (
                "Z" + (f"^{z}" if z > 1 else "") if z else ""
            )
            parts.append(s or "1")
        pre = f"w^{self.phase} " if self.phase else ""
        return pre + " (x) ".join(parts)


def _check_compatible(a: WeylWord, b: WeylWord) -> None:
    if a.d != b.d or a.n_sites != b.n_sites:
        raise DimensionError(
            f"incompatible words: d={a.d}/{b.d}, sites={a.n_sites}/{b.n_sites}"
        )


def weyl_mul(a: WeylWord, b: WeylWord) -> WeylWord:
    # Z^z X^x = omega^{z x} X^x Z^z per site
    _check_compatible(a, b)
    phase = a.phase + b.phase
    sites = []
    for (xa, za), (xb, zb) in zip(a.sites, b.sites):
        phase += za * xb
        sites.append((xa + xb, za + zb))
    return WeylWord(a.d, phase, tuple(sites))


def weyl_pow(w: WeylWord, k: int) -> WeylWord:
    k %= w.d
    out = WeylWord.identity(w.d, w.n_sites)
    for _ in range(k):
        out = weyl_mul(out, w)
    return out


def weyl_transpose(w: WeylWord, sites: Sequence[int]) -> WeylWord:
    """Transpose the listed sites; ``(X^x Z^z)^T = Z^z X^{-x} = omega^{-xz} X^{-x} Z^z``."""
    phase = w.phase
    new = list(w.sites)
    for i in set(sites):
        if not 0 <= i < w.n_sites:
            raise IndexError(f"site {i} out of range for {w.n_sites} sites")
        x, z = new[i]
        phase -= x * z
        new[i] = (-x, z)
    return WeylWord(w.d, phase, tuple(new))


def commutation_phase(s1: WeylWord, s2: WeylWord) -> int:
    """q with ``s1 s2 = omega^q s2 s1``."""
    _check_compatible(s1, s2)
    q = sum(z1 * x2 - z2 * x1 for (x1, z1), (x2, z2) in zip(s1.sites, s2.sites))
    return q % s1.d


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def to_matrix(w: WeylWord, limit: int = DENSE_LIMIT) -> np.ndarray:
    dim = w.d ** w.n_sites
    if dim > limit:
        raise DimensionError(f"refusing to assemble {dim}x{dim} matrix (limit {limit})")
    M = kron_all([weyl_matrix(w.d, x, z) for x, z in w.sites])
    return omega(w.d) ** w.phase * M


@dataclass(frozen=True)
class StateVector:
    d: int
    n_sites: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.d ** self.n_sites:
            raise DimensionError(
                f"{amps.size} amplitudes for {self.n_sites} sites of dimension {self.d}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, d: int, digits: Sequence[int]) -> "StateVector":
        amps = np.zeros(d ** len(digits), dtype=complex)
        idx = 0
        for k in digits:
            idx = idx * d + k
        amps[idx] = 1.0
        return cls(d, len(digits), amps)

    def normalized(self) -> "StateVector":
        return StateVector(self.d, self.n_sites, self.amplitudes / np.linalg.norm(self.amplitudes))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((self.d,) * self.n_sites)

    def conj(self) -> "StateVector":
        return StateVector(self.d, self.n_sites, self.amplitudes.conj())


def apply_local_array(
    psi: np.ndarray, d: int, n_sites: int, ops: Sequence[tuple[int, np.ndarray]]
) -> np.ndarray:
    """Apply a product of single-site matrices to a flat amplitude vector.

    ``psi`` may carry trailing batch dimensions: shape ``(d**n_sites, ...)``.
    """
    batch = psi.shape[1:]
    t = psi.reshape((d,) * n_sites + batch)
    seen = set()
    for site, M in ops:
        if site in seen:
            raise DimensionError(f"more than one operator on site {site}")
        seen.add(site)
        if M.shape != (d, d):
            raise DimensionError(f"operator on site {site} has shape {M.shape}, expected {(d, d)}")
        t = np.moveaxis(np.tensordot(M, t, axes=([1], [site])), 0, site)
    return t.reshape(psi.shape)


def apply_local(state: StateVector, ops: Sequence[tuple[int, np.ndarray]]) -> StateVector:
    amps = apply_local_array(state.amplitudes, state.d, state.n_sites, ops)
    return StateVector(state.d, state.n_sites, amps)


def apply_word(state: StateVector, w: WeylWord) -> StateVector:
    if w.d != state.d or w.n_sites != state.n_sites:
        raise DimensionError("word and state do not match")
    ops = [(i, weyl_matrix(w.d, x, z)) for i, (x, z) in enumerate(w.sites) if x or z]
    out = apply_local(state, ops)
    return StateVector(state.d, state.n_sites, omega(w.d) ** w.phase * out.amplitudes)


def is_unitary(M: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    return np.abs(M.conj().T @ M - np.eye(M.shape[0])).max() <= tol


def is_hermitian(M: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    return np.abs(M - M.conj().T).max() <= tol


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    G = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    Q, R = np.linalg.qr(G)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_order_d_unitary(d: int, rng: np.random.Generator, dim: int | None = None) -> np.ndarray:
    """Random unitary whose spectrum lies in the d-th roots of unity.

    A Haar unitary is diagonalised and each eigenphase snapped to the nearest
    root of unity, keeping the eigenbasis.
    """
    dim = d if dim is None else dim
    U = random_unitary(dim, rng)
    # Schur form of a normal matrix gives an orthonormal eigenbasis
    T, V = sla.schur(U, output="complex")
    k = np.rint(np.angle(np.diag(T)) * d / (2 * np.pi)).astype(int) % d
    return (V * omega_powers(d)[k]) @ V.conj().T


def hermitian_max_eigenvalue(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    *,
    seed: int = 0,
    tol: float = EIG_TOL,
    maxiter: int | None = None,
    herm_tol: float = 1e-8,
    dense_below: int = 64,
) -> float:
    """Largest eigenvalue of a Hermitian operator given only its action.

    Hermiticity is probed on random vectors before the Lanczos run (ARPACK).
    Tiny operators are assembled column by column instead.
    """
    rng = np.random.default_rng(seed)
    for _ in range(3):
        u = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        lhs = np.vdot(u, apply(v))
        rhs = np.vdot(apply(u), v)
        scale = max(1.0, abs(lhs), abs(rhs))
        if abs(lhs - rhs) > herm_tol * scale:
            raise NonHermitianError(f"<u|Av> - <Au|v> = {abs(lhs - rhs):.3e}")

    if dim <= dense_below:
        M = np.column_stack([apply(col) for col in np.eye(dim, dtype=complex)])
        return float(np.linalg.eigvalsh((M + M.conj().T) / 2)[-1])

    op = spla.LinearOperator((dim, dim), matvec=apply, dtype=complex)
    v0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    try:
        vals = spla.eigsh(op, k=1, which="LA", v0=v0, tol=tol * 1e-2, maxiter=maxiter,
                          return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        if len(exc.eigenvalues):
            best = float(np.max(exc.eigenvalues))
        else:
            # nothing converged: fall back to the Rayleigh quotient of the start vector
            best = float(np.vdot(v0, apply(v0)).real / np.vdot(v0, v0).real)
        raise EigenConvergenceError("Lanczos iteration did not converge", best) from exc
    return float(np.max(vals))
