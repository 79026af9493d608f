"""Bell inequalities tailored to qudit graph states of prime local dimension."""

__version__ = "0.1.0"

from .bounds import BoundResult, DeterministicStrategy, classical_value, exact_bound, heuristic_bound, naive_bound
from .coeffs import Convention, LambdaTable, resolve_convention
from .corealg import StateVector, WeylWord
from .graphio import GraphSpec, builtin_graph, choose_pivots, parse_graph
from .graphstate import generators, synthesize_state
from .inequality import (
    BellExpression,
    BellTerm,
    CoefficientSet,
    Realization,
    build_expression,
    default_coefficients,
    ideal_realization,
    imax_expression,
    quantum_bound,
    quantum_value,
    qubit_inequality,
    sos_residual,
)

__all__ = [
    "BellExpression", "BellTerm", "BoundResult", "CoefficientSet", "Convention", "DeterministicStrategy",
    "GraphSpec", "LambdaTable", "Realization", "StateVector", "WeylWord", "build_expression",
    "builtin_graph", "choose_pivots", "classical_value", "default_coefficients", "exact_bound",
    "generators", "heuristic_bound", "ideal_realization", "imax_expression", "naive_bound",
    "parse_graph", "quantum_bound", "quantum_value", "qubit_inequality", "resolve_convention",
    "sos_residual", "synthesize_state",
]
