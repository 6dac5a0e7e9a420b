"""Order graphs and their oriented incidence matrices.

A partial order on ``n`` items is encoded as a directed graph whose edge
``(i, j)`` asks for ``beta[i] <= beta[j]``.  The oriented incidence matrix
``D`` has one row per edge with ``+1`` at the source and ``-1`` at the
target, so ``(D @ beta)[e] = beta[i] - beta[j]`` is positive exactly when
the edge is violated.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import sparse

__all__ = [
    "GraphError",
    "OrderGraph",
    "IncidenceMatrix",
    "build_chain_graph",
    "build_grid_graph",
    "from_edge_list",
    "incidence_matrix",
    "validate_acyclic",
    "parse_graph_spec",
    "load_edge_list_json",
]


class GraphError(ValueError):
    """Invalid graph construction input."""

    def __init__(self, message: str, edge_index: int | None = None):
        super().__init__(message)
        self.edge_index = edge_index


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class IncidenceMatrix:
    """Sparse ``m x n`` oriented incidence matrix.

    Row ``e`` holds exactly two nonzeros: ``+1`` in column ``sources[e]``
    and ``-1`` in column ``targets[e]``.
    """

    n_rows: int
    n_cols: int
    sources: np.ndarray
    targets: np.ndarray

    def rows(self) -> Iterator[tuple[tuple[int, int], tuple[int, int]]]:
        """Yield each row as ``((source, +1), (target, -1))``."""
        for s, t in zip(self.sources.tolist(), self.targets.tolist()):
            yield (s, 1), (t, -1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def matvec(self, beta: np.ndarray) -> np.ndarray:
        """Return ``D @ beta`` (edge differences)."""
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.n_cols,):
            raise ValueError(
                f"vector of length {beta.shape} does not match {self.n_cols} columns"
            )
        return beta[self.sources] - beta[self.targets]

    def rmatvec(self, nu: np.ndarray) -> np.ndarray:
        """Return ``D.T @ nu``."""
        nu = np.asarray(nu, dtype=float)
        if nu.shape != (self.n_rows,):
            raise ValueError(
                f"vector of length {nu.shape} does not match {self.n_rows} rows"
            )
        return self._csc_t @ nu

    @cached_property
    def _csc_t(self) -> sparse.csr_matrix:
        return self.tocsr().T.tocsr()

    def tocsr(self) -> sparse.csr_matrix:
        m = self.n_rows
        indptr = np.arange(0, 2 * m + 1, 2)
        indices = np.empty(2 * m, dtype=np.int64)
        indices[0::2] = self.sources
        indices[1::2] = self.targets
        data = np.tile([1.0, -1.0], m)
        return sparse.csr_matrix((data, indices, indptr), shape=self.shape)

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.shape)
        e = np.arange(self.n_rows)
        out[e, self.sources] = 1.0
        out[e, self.targets] = -1.0
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IncidenceMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.sources, other.sources)
            and np.array_equal(self.targets, other.targets)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class OrderGraph:
    """Directed graph on vertices ``0 .. n_vertices - 1``.

    Edge order is significant: edge ``e`` is row ``e`` of the incidence
    matrix.  Use :func:`from_edge_list` for validated construction.
    """

    n_vertices: int
    edges: tuple[tuple[int, int], ...] = field(default=())

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def incidence(self) -> IncidenceMatrix:
        return incidence_matrix(self)

    @cached_property
    def degrees(self) -> np.ndarray:
        D = self.incidence
        deg = np.bincount(D.sources, minlength=self.n_vertices)
        deg += np.bincount(D.targets, minlength=self.n_vertices)
        return _frozen(deg)


def from_edge_list(n: int, edges: Iterable[Sequence[int]]) -> OrderGraph:
    """Validate an edge list and build an :class:`OrderGraph`.

    Raises
    ------
    GraphError
        On a self-loop, duplicate edge or out-of-range vertex id; the
        ``edge_index`` attribute names the offending edge.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise GraphError(f"number of vertices must be a positive integer, got {n!r}")
    n = int(n)
    seen: dict[tuple[int, int], int] = {}
    out = []
    for k, edge in enumerate(edges):
        if len(edge) != 2:
            raise GraphError(f"edge {k} is not a (source, target) pair: {edge!r}", k)
        s, t = edge
        if any(isinstance(v, bool) or int(v) != v for v in (s, t)):
            raise GraphError(f"edge {k} has non-integer vertex id: {edge!r}", k)
        s, t = int(s), int(t)
        if not (0 <= s < n and 0 <= t < n):
            raise GraphError(f"edge {k} ({s}, {t}) has vertex id out of range [0, {n})", k)
        if s == t:
            raise GraphError(f"self-loop at edge {k}: ({s}, {t})", k)
        if (s, t) in seen:
            raise GraphError(
                f"duplicate edge at index {k}: ({s}, {t}) already at index {seen[(s, t)]}", k
            )
        seen[(s, t)] = k
        out.append((s, t))
    return OrderGraph(n, tuple(out))


def build_chain_graph(n: int) -> OrderGraph:
    """Total order ``0 < 1 < ... < n-1`` with edges ``(i, i+1)``."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise GraphError(f"chain length must be >= 1, got {n!r}")
    n = int(n)
    return OrderGraph(n, tuple((i, i + 1) for i in range(n - 1)))


def build_grid_graph(n1: int, n2: int) -> OrderGraph:
    """Bimonotone order on an ``n1 x n2`` grid.

    Vertex ``(r, c)`` has id ``r * n2 + c``.  Row edges ``(r, c) -> (r, c+1)``
    come first in row-major order, then column edges ``(r, c) -> (r+1, c)``.
    """
    for v in (n1, n2):
        if isinstance(v, bool) or int(v) != v or v < 1:
            raise GraphError(f"grid dimensions must be >= 1, got {n1!r}x{n2!r}")
    n1, n2 = int(n1), int(n2)
    edges = [
        (r * n2 + c, r * n2 + c + 1) for r in range(n1) for c in range(n2 - 1)
    ]
    edges += [
        (r * n2 + c, (r + 1) * n2 + c) for r in range(n1 - 1) for c in range(n2)
    ]
    return OrderGraph(n1 * n2, tuple(edges))


def incidence_matrix(g: OrderGraph) -> IncidenceMatrix:
    """Oriented incidence matrix of ``g`` (``+1`` at source, ``-1`` at target)."""
    if g.edges:
        arr = np.asarray(g.edges, dtype=np.int64).reshape(-1, 2)
        src, tgt = arr[:, 0].copy(), arr[:, 1].copy()
    else:
        src = np.zeros(0, dtype=np.int64)
        tgt = np.zeros(0, dtype=np.int64)
    return IncidenceMatrix(len(g.edges), g.n_vertices, _frozen(src), _frozen(tgt))


def validate_acyclic(g: OrderGraph) -> bool:
    """True iff ``g`` has no directed cycle (Kahn's algorithm)."""
    indeg = [0] * g.n_vertices
    children: list[list[int]] = [[] for _ in range(g.n_vertices)]
    for s, t in g.edges:
        indeg[t] += 1
        children[s].append(t)
    stack = [v for v in range(g.n_vertices) if indeg[v] == 0]
    visited = 0
    while stack:
        v = stack.pop()
        visited += 1
        for w in children[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    return visited == g.n_vertices


def load_edge_list_json(path: str | Path) -> OrderGraph:
    """Read ``{"n": <int>, "edges": [[s, t], ...]}``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "n" not in doc or "edges" not in doc:
        raise GraphError(f"{path}: expected an object with keys 'n' and 'edges'")
    return from_edge_list(doc["n"], doc["edges"])


_CHAIN_RE = re.compile(r"^chain:(\d+)$")
_GRID_RE = re.compile(r"^grid:(\d+)x(\d+)$")


def parse_graph_spec(spec: str) -> OrderGraph:
    """Parse ``chain:<n>``, ``grid:<n1>x<n2>`` or ``edges:<path>``."""
    spec = spec.strip()
    if m := _CHAIN_RE.match(spec):
        return build_chain_graph(int(m.group(1)))
    if m := _GRID_RE.match(spec):
        return build_grid_graph(int(m.group(1)), int(m.group(2)))
    if spec.startswith("edges:"):
        return load_edge_list_json(spec[len("edges:"):])
    raise GraphError(
        f"unrecognised graph spec {spec!r}; use chain:<n>, grid:<n1>x<n2> or edges:<path>"
    )
