"""Multigraph model, file formats, pivot selection and built-in graphs.

Vertices are 0-based in memory and 1-based in every file and report.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .corealg import is_prime, smallest_factor


class GraphError(ValueError):
    """Invalid graph input; ``code`` is a stable machine-readable tag."""

    def __init__(self, code: str, msg: str):
        super().__init__(f"{code}: {msg}")
        self.code = code


@dataclass(frozen=True)
class GraphSpec:
    d: int
    multiplicities: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not is_prime(self.d):
            raise GraphError("NON_PRIME", f"d={self.d} is not prime (smallest factor {smallest_factor(self.d)})")
        r = self.multiplicities
        n = len(r)
        if n < 2:
            raise GraphError("TOO_SMALL", "need at least 2 vertices")
        for i in range(n):
            if len(r[i]) != n:
                raise GraphError("BAD_SHAPE", "multiplicity matrix is not square")
            if r[i][i] != 0:
                raise GraphError("LOOP", f"loop at vertex {i + 1}")
            for j in range(n):
                if not 0 <= r[i][j] < self.d:
                    raise GraphError("BAD_MULTIPLICITY", f"r[{i + 1},{j + 1}]={r[i][j]} outside 0..{self.d - 1}")
                if r[i][j] != r[j][i]:
                    raise GraphError("ASYMMETRIC", f"r[{i + 1},{j + 1}] != r[{j + 1},{i + 1}]")
        if not _connected(r):
            raise GraphError("DISCONNECTED", "graph is not connected")

    @classmethod
    def from_edges(cls, d: int, n: int, edges) -> "GraphSpec":
        """``edges`` are 1-based ``(i, j, r)`` triples."""
        if n < 2:
            raise GraphError("TOO_SMALL", f"need at least 2 vertices, got {n}")
        if not is_prime(d):
            raise GraphError("NON_PRIME", f"d={d} is not prime (smallest factor {smallest_factor(d)})")
        r = [[0] * n for _ in range(n)]
        seen: dict[tuple[int, int], int] = {}
        for e in edges:
            if len(e) != 3:
                raise GraphError("BAD_EDGE", f"edge {e} is not an (i, j, r) triple")
            i, j, m = (int(v) for v in e)
            if not (1 <= i <= n and 1 <= j <= n):
                raise GraphError("BAD_VERTEX", f"edge ({i}, {j}) outside 1..{n}")
            if i == j:
                raise GraphError("LOOP", f"loop at vertex {i}")
            if not 1 <= m <= d - 1:
                raise GraphError("BAD_MULTIPLICITY", f"edge ({i}, {j}) multiplicity {m} outside 1..{d - 1}")
            key = (min(i, j), max(i, j))
            if key in seen and seen[key] != m:
                raise GraphError("CONFLICTING_EDGE", f"edge {key} given with multiplicities {seen[key]} and {m}")
            seen[key] = m
            r[i - 1][j - 1] = r[j - 1][i - 1] = m
        return cls(d, tuple(tuple(row) for row in r))

    @property
    def n(self) -> int:
        return len(self.multiplicities)

    def r(self, i: int, j: int) -> int:
        return self.multiplicities[i][j]

    def neighbors(self, i: int) -> list[int]:
        return [j for j in range(self.n) if self.multiplicities[i][j]]

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def edges(self) -> list[tuple[int, int, int]]:
        """1-based ``(i, j, r)`` with ``i < j``."""
        return [(i + 1, j + 1, self.multiplicities[i][j])
                for i in range(self.n) for j in range(i + 1, self.n) if self.multiplicities[i][j]]

    def permuted(self, order) -> "GraphSpec":
        """Graph whose vertex ``p`` is vertex ``order[p]`` of this one."""
        r = self.multiplicities
        return GraphSpec(self.d, tuple(tuple(r[a][b] for b in order) for a in order))

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "edges": [list(e) for e in self.edges()]}


def _connected(r) -> bool:
    n = len(r)
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in range(n):
            if r[i][j] and j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == n


def serialize_graph(g: GraphSpec) -> str:
    return json.dumps(g.to_dict())


def serialize_edge_list(g: GraphSpec) -> str:
    lines = [f"{g.d} {g.n}"] + [f"{i} {j} {r}" for i, j, r in g.edges()]
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> GraphSpec:
    """Read either the JSON form or the plain edge-list form."""
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise GraphError("BAD_FORMAT", f"invalid JSON: {exc}") from exc
        try:
            d, n, edges = int(obj["d"]), int(obj["n"]), obj["edges"]
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphError("BAD_FORMAT", f"expected keys d, n, edges: {exc}") from exc
        return GraphSpec.from_edges(d, n, edges)

    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows or len(rows[0]) != 2:
        raise GraphError("BAD_FORMAT", "first line must be 'd N'")
    try:
        d, n = int(rows[0][0]), int(rows[0][1])
        edges = [tuple(int(v) for v in row) for row in rows[1:]]
    except ValueError as exc:
        raise GraphError("BAD_FORMAT", str(exc)) from exc
    return GraphSpec.from_edges(d, n, edges)


def load_graph(path: str) -> GraphSpec:
    with open(path) as fh:
        return parse_graph(fh.read())


BUILTINS = ("pair", "star", "ame43", "line", "cycle", "random")


def builtin_graph(name: str, *params: int) -> GraphSpec:
    """``pair(d)``, ``star(N, d)``, ``ame43``, ``line(N, d)``, ``cycle(N, d)``, ``random(N, d, seed)``."""
    if name == "pair":
        (d,) = params
        return GraphSpec.from_edges(d, 2, [(1, 2, 1)])
    if name == "ame43":
        return GraphSpec.from_edges(3, 4, [(1, 2, 1), (2, 3, 1), (3, 4, 2), (4, 1, 1)])
    if name in ("star", "line", "cycle", "random"):
        n, d = params[0], params[1]
        if n < 2:
            raise GraphError("TOO_SMALL", f"need N >= 2, got {n}")
        if name == "star":
            return GraphSpec.from_edges(d, n, [(1, i, 1) for i in range(2, n + 1)])
        if name == "line":
            return GraphSpec.from_edges(d, n, [(i, i + 1, 1) for i in range(1, n)])
        if name == "cycle":
            if n < 3:
                raise GraphError("TOO_SMALL", f"cycle needs N >= 3, got {n}")
            return GraphSpec.from_edges(d, n, [(i, i % n + 1, 1) for i in range(1, n + 1)])
        seed = params[2] if len(params) > 2 else 0
        return random_graph(n, d, seed)
    raise GraphError("UNKNOWN_GRAPH", f"unknown built-in graph {name!r}; choose from {BUILTINS}")


def parse_builtin(spec: str) -> GraphSpec:
    """``name:p1:p2`` shorthand, e.g. ``star:5:3`` or ``pair:7``."""
    name, *rest = spec.split(":")
    try:
        params = [int(p) for p in rest]
        return builtin_graph(name, *params)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, GraphError):
            raise
        raise GraphError("BAD_BUILTIN", f"bad parameters for {spec!r}: {exc}") from exc


def random_graph(n: int, d: int, seed: int) -> GraphSpec:
    """Erdos-Renyi with p = min(1, 2/N), multiplicities uniform in 1..d-1, resampled until connected."""
    if n < 2:
        raise GraphError("TOO_SMALL", f"need N >= 2, got {n}")
    rng = np.random.default_rng(seed)
    p = min(1.0, 2.0 / n)
    while True:
        edges = []
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                if rng.random() < p:
                    edges.append((i, j, int(rng.integers(1, d))))
        r = [[0] * n for _ in range(n)]
        for i, j, m in edges:
            r[i - 1][j - 1] = r[j - 1][i - 1] = m
        if _connected(r):
            return GraphSpec.from_edges(d, n, edges)


@dataclass(frozen=True)
class PivotChoice:
    """Pivot pair plus the role order of all vertices.

    ``order[p]`` is the original vertex playing relabeled position ``p``:
    position 0 is the pivot, 1 its partner, 2..N1 the pivot's other
    neighbours and the rest the non-neighbours.
    """

    v1: int
    v2: int
    order: tuple[int, ...]
    n1: int

    @property
    def c_parties(self) -> tuple[int, ...]:
        return self.order[2:self.n1 + 1]

    @property
    def d_parties(self) -> tuple[int, ...]:
        return self.order[self.n1 + 1:]

    def to_dict(self) -> dict:
        return {"v1": self.v1 + 1, "v2": self.v2 + 1, "n1": self.n1,
                "order": [v + 1 for v in self.order]}


def choose_pivots(g: GraphSpec, override: tuple[int, int] | None = None) -> PivotChoice:
    """Default pivot: highest degree vertex, partner its highest degree neighbour (ties -> lowest index).

    ``override`` is a 0-based connected pair.
    """
    if override is not None:
        v1, v2 = override
        if not (0 <= v1 < g.n and 0 <= v2 < g.n) or g.r(v1, v2) == 0:
            raise GraphError("PIVOT_NOT_CONNECTED",
                             f"vertices {v1 + 1} and {v2 + 1} are not connected")
    else:
        v1 = max(range(g.n), key=lambda i: (g.degree(i), -i))
        v2 = max(g.neighbors(v1), key=lambda i: (g.degree(i), -i))
    nbrs = [j for j in g.neighbors(v1) if j != v2]
    rest = [j for j in range(g.n) if j != v1 and j != v2 and j not in nbrs]
    order = (v1, v2, *nbrs, *rest)
    return PivotChoice(v1, v2, order, g.degree(v1))
