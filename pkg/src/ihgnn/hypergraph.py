"""Hypergraph data model and the normalized propagation operator.

The operator is ``M = D^{-1/2} H E B^{-1} H^T D^{-1/2}`` with ``H`` the binary
node-by-hyperedge incidence matrix, ``E = diag(w)``, ``D = diag(H w)`` and
``B = diag(H^T 1)``.
"""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import DTYPE, as_csr


class InadmissibleHypergraphError(ValueError):
    pass


@dataclass(frozen=True)
class Hypergraph:
    """Immutable weighted hypergraph.

    ``edges`` holds sorted node tuples. Use :meth:`from_edges` to build one from
    raw input; it collapses repeated nodes and merges identical hyperedges.
    """

    n: int
    edges: tuple[tuple[int, ...], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("node count must be nonnegative")
        if len(self.edges) != len(self.weights):
            raise ValueError("one weight per hyperedge required")
        for j, e in enumerate(self.edges):
            if len(e) == 0:
                raise ValueError(f"hyperedge {j} is empty")
            if e[0] < 0 or e[-1] >= self.n:
                raise ValueError(f"hyperedge {j} has node index outside [0, {self.n})")
            if any(a >= b for a, b in zip(e, e[1:])):
                raise ValueError(f"hyperedge {j} must be strictly sorted; use Hypergraph.from_edges")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Iterable[int]],
                   weights: Sequence[float] | None = None) -> "Hypergraph":
        edges = [list(e) for e in edges]
        if weights is None:
            weights = [1.0] * len(edges)
        if len(weights) != len(edges):
            raise ValueError("one weight per hyperedge required")
        merged: dict[tuple[int, ...], float] = {}
        n_collapsed = 0
        for e, w in zip(edges, weights):
            key = tuple(sorted(set(int(i) for i in e)))
            if len(key) != len(e):
                n_collapsed += 1
            merged[key] = merged.get(key, 0.0) + float(w)
        if n_collapsed:
            warnings.warn(f"collapsed repeated nodes in {n_collapsed} hyperedge(s)", stacklevel=2)
        return cls(int(n), tuple(merged), tuple(merged.values()))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def incidence(self) -> sp.csr_matrix:
        """Binary incidence matrix ``H`` (n x m)."""
        rows = np.fromiter((i for e in self.edges for i in e), dtype=np.int64)
        cols = np.repeat(np.arange(self.num_edges), [len(e) for e in self.edges])
        h = sp.csr_matrix((np.ones(rows.size, dtype=DTYPE), (rows, cols)),
                          shape=(self.n, self.num_edges))
        h.sort_indices()
        return h

    def node_degrees(self) -> np.ndarray:
        """``D_ii = sum_j H_ij w_j``."""
        if self.num_edges == 0:
            return np.zeros(self.n, dtype=DTYPE)
        return np.asarray(self.incidence() @ np.asarray(self.weights, dtype=DTYPE)).ravel()

    def edge_sizes(self) -> np.ndarray:
        return np.array([len(e) for e in self.edges], dtype=DTYPE)


@dataclass(frozen=True)
class AdmissibilityReport:
    negative_weight_edges: tuple[int, ...] = ()
    isolated_nodes: tuple[int, ...] = ()

    @property
    def admissible(self) -> bool:
        return not self.negative_weight_edges and not self.isolated_nodes

    def first_violation(self) -> str | None:
        if self.negative_weight_edges:
            return f"hyperedge {self.negative_weight_edges[0]} has negative weight"
        if self.isolated_nodes:
            return f"node {self.isolated_nodes[0]} has zero degree"
        return None


def validate_admissible(g: Hypergraph) -> AdmissibilityReport:
    w = np.asarray(g.weights, dtype=DTYPE)
    neg = tuple(int(j) for j in np.flatnonzero(w < 0))
    # degree positivity is only meaningful once weights are nonnegative, but
    # report both so callers see every problem at once
    deg = g.node_degrees()
    iso = tuple(int(i) for i in np.flatnonzero(~(deg > 0)))
    return AdmissibilityReport(neg, iso)


def add_self_loops(g: Hypergraph, weight: float = 1.0) -> Hypergraph:
    """Give every zero-degree node a singleton hyperedge of the given weight."""
    iso = validate_admissible(g).isolated_nodes
    if not iso:
        return g
    return Hypergraph.from_edges(g.n, list(g.edges) + [[i] for i in iso],
                                 list(g.weights) + [weight] * len(iso))


@dataclass(frozen=True, eq=False)
class PropagationOperator:
    m: sp.csr_matrix
    node_degrees: np.ndarray
    edge_degrees: np.ndarray
    hypergraph: Hypergraph | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.m.shape[0]


def build_operator(g: Hypergraph) -> PropagationOperator:
    report = validate_admissible(g)
    if not report.admissible:
        raise InadmissibleHypergraphError(report.first_violation())
    h = g.incidence()
    dv = g.node_degrees()
    de = g.edge_sizes()
    w = np.asarray(g.weights, dtype=DTYPE)
    dinv_sqrt = sp.diags(1.0 / np.sqrt(dv))
    left = dinv_sqrt @ h
    m = left @ sp.diags(w / de) @ left.T
    m = as_csr(m)
    # the two halves are computed identically, so symmetrize away rounding asymmetry
    m = as_csr((m + m.T) * 0.5)
    return PropagationOperator(m, dv, de, g)


def row_stochastic_check(op: PropagationOperator) -> float:
    """Max deviation from 1 of the row sums of ``P = D^{-1/2} M D^{1/2}``."""
    s = np.sqrt(op.node_degrees)
    rowsums = (op.m @ s) / s
    if rowsums.size == 0:
        return 0.0
    return float(np.max(np.abs(rowsums - 1.0)))


def write_hypergraph(g: Hypergraph, path: str | os.PathLike) -> None:
    """Line format: a ``# nodes <n>`` header, then ``weight node node ...`` per hyperedge."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes {g.n}\n")
        for e, w in zip(g.edges, g.weights):
            fh.write(" ".join([repr(float(w))] + [str(i) for i in e]) + "\n")


def read_hypergraph(path: str | os.PathLike) -> Hypergraph:
    n = None
    edges, weights = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "nodes":
                    n = int(parts[1])
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected 'weight node ...'")
            try:
                weights.append(float(parts[0]))
                edges.append([int(p) for p in parts[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if n is None:
        n = 1 + max((max(e) for e in edges), default=-1)
    return Hypergraph.from_edges(n, edges, weights)


def random_hypergraph(n: int, m: int, rng: np.random.Generator, max_size: int = 5,
                      connected: bool = False, weight_range=(0.5, 2.0)) -> Hypergraph:
    """Random admissible hypergraph: ``m`` random hyperedges plus coverage edges.

    With ``connected`` a path of 2-node hyperedges links all nodes; otherwise
    nodes missed by the random hyperedges get singleton hyperedges.
    """
    edges = [rng.choice(n, size=int(rng.integers(1, min(max_size, n) + 1)), replace=False)
             for _ in range(m)]
    if connected:
        edges += [[i, i + 1] for i in range(n - 1)]
    covered = np.zeros(n, dtype=bool)
    for e in edges:
        covered[np.asarray(e)] = True
    edges += [[i] for i in np.flatnonzero(~covered)]
    weights = rng.uniform(*weight_range, size=len(edges))
    return Hypergraph.from_edges(n, edges, weights)
