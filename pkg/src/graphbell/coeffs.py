"""Number-theoretic phases for the Fourier-combined observables.

For an odd prime ``d`` the unit-modulus numbers ``lambda_n`` make

    Obar_x^(n) = lambda_n / sqrt(d) * sum_k omega^(n x k) omega^(n k (k+1)) (X Z^k)^n

a unitary of order ``d`` with ``Obar_x^(n) = (Obar_x^(1))^n``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .corealg import check_prime, omega_powers, pauli_xz


class Convention(str, enum.Enum):
    AS_PRINTED = "as-printed"
    CONJUGATE = "conjugate"


class ParityReading(str, enum.Enum):
    # parity of (n + d + 1) / 2: the only reading under which the phases work
    HALF_SUM = "half-sum"
    # parity of n + (d + 1) / 2
    SHIFTED = "shifted"


class ConventionError(RuntimeError):
    pass


def legendre(n: int, d: int) -> int:
    """Legendre symbol by Euler's criterion."""
    if d < 3 or d % 2 == 0:
        raise ValueError(f"Legendre symbol needs an odd prime, got {d}")
    if n % d == 0:
        raise ValueError(f"Legendre symbol ({n}/{d}) undefined for n = 0 mod d")
    r = pow(n % d, (d - 1) // 2, d)
    return 1 if r == 1 else -1


def epsilon(d: int) -> complex:
    return 1.0 if d % 4 == 1 else 1j


def g_coeff(n: int, d: int, reading: ParityReading = ParityReading.HALF_SUM) -> int:
    if not 1 <= n <= d - 1:
        raise ValueError(f"n must be in 1..{d - 1}, got {n}")
    if n % 2 == 0:
        if ParityReading(reading) is ParityReading.HALF_SUM:
            parity = ((n + d + 1) // 2) % 2
        else:
            parity = (n + (d + 1) // 2) % 2
        if parity == 0:
            return n * (n * n - d * (d + 6) + 3)
        return n * (n * n - d * (d - 6) + 3)
    if n % 4 == 1:
        return n * (n * n + 3) + 2 * d * d * (-5 * n + 3)
    return n * (n * n + 3) + 2 * d * d * (n + 3)


def lambda_n(
    n: int,
    d: int,
    convention: Convention = Convention.AS_PRINTED,
    reading: ParityReading = ParityReading.HALF_SUM,
) -> complex:
    check_prime(d)
    g = g_coeff(n, d, reading) % (48 * d)
    val = np.exp(-2j * np.pi * g / (48 * d)) / (epsilon(d) * legendre(n, d))
    if Convention(convention) is Convention.CONJUGATE:
        val = np.conj(val)
    return complex(val)


@dataclass(frozen=True)
class LambdaTable:
    d: int
    values: tuple[complex, ...]  # lambda_1 .. lambda_{d-1}
    convention: Convention
    reading: ParityReading = ParityReading.HALF_SUM

    @classmethod
    def build(cls, d: int, convention: Convention | str = Convention.AS_PRINTED,
              reading: ParityReading | str = ParityReading.HALF_SUM) -> "LambdaTable":
        convention = Convention(convention)
        reading = ParityReading(reading)
        vals = tuple(lambda_n(n, d, convention, reading) for n in range(1, d))
        return cls(d, vals, convention, reading)

    def __getitem__(self, n: int) -> complex:
        return self.values[(n % self.d) - 1]


def combined_observable(d: int, x: int, n: int, lam: complex) -> np.ndarray:
    """``Obar_x^(n)`` built from ``O_k = X Z^k``."""
    X, Z = pauli_xz(d)
    w = omega_powers(d)
    out = np.zeros((d, d), dtype=complex)
    for k in range(d):
        Ok = X @ np.linalg.matrix_power(Z, k)
        out += w[(n * x * k + n * k * (k + 1)) % d] * np.linalg.matrix_power(Ok, n)
    return lam / np.sqrt(d) * out


def convention_defects(table: LambdaTable) -> dict[str, float]:
    """Worst residuals of unitarity, order d, and power consistency."""
    d = table.d
    eye = np.eye(d)
    unit = order = power = 0.0
    for x in range(d):
        base = combined_observable(d, x, 1, table[1])
        for n in range(1, d):
            O = combined_observable(d, x, n, table[n])
            unit = max(unit, np.abs(O.conj().T @ O - eye).max())
            order = max(order, np.abs(np.linalg.matrix_power(O, d) - eye).max())
            power = max(power, np.abs(O - np.linalg.matrix_power(base, n)).max())
    return {"unitarity": float(unit), "order": float(order), "power": float(power)}


@lru_cache(maxsize=None)
def resolve_convention(d: int, tol: float = 1e-10,
                       reading: ParityReading = ParityReading.HALF_SUM) -> Convention:
    """Pick the phase sign under which the combined observables are valid."""
    if d < 3 or d % 2 == 0:
        raise ValueError(f"phase convention only defined for odd primes, got {d}")
    check_prime(d)
    passing = []
    report = {}
    for conv in Convention:
        defects = convention_defects(LambdaTable.build(d, conv, reading))
        report[conv.value] = defects
        if max(defects.values()) <= tol:
            passing.append(conv)
    if len(passing) != 1:
        worst = {c: max(v, key=v.get) for c, v in report.items()}
        raise ConventionError(
            f"d={d}: {len(passing)} conventions pass; failing properties {worst}, defects {report}"
        )
    return passing[0]


def resolved_table(d: int) -> LambdaTable:
    return LambdaTable.build(d, resolve_convention(d))
