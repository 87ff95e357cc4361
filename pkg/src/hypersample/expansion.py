"""Hyperedge-dependent expansion of a hypergraph into a pair-node graph.

Every (node v, hyperedge e) incidence becomes one expanded node, so the
expanded vertex count equals the handshake sum of hyperedge degrees. Two
pairs are adjacent iff they share the node or share the hyperedge. The
vertex projection copies node features onto pairs; the back-projection
convexly averages pair rows back to nodes with weights proportional to
1/delta(e), making the round trip the exact identity.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .hypergraph import Hypergraph


@dataclass
class ExpandedGraph:
    """Pair-node graph in canonical hyperedge-major order.

    Adjacency is kept in three CSR views over pair indices, all with
    ascending column order per row: same-vertex neighbors, same-hyperedge
    neighbors, and their disjoint union. No self entries anywhere; the
    self-loop is applied by the convolutions, not stored here.
    """

    num_source_nodes: int
    num_source_edges: int
    vertex_of: np.ndarray
    edge_of: np.ndarray
    copies_of: list
    sv_indptr: np.ndarray
    sv_indices: np.ndarray
    se_indptr: np.ndarray
    se_indices: np.ndarray
    nbr_indptr: np.ndarray
    nbr_indices: np.ndarray

    @property
    def num_pairs(self):
        return self.vertex_of.shape[0]

    @property
    def num_undirected_edges(self):
        return self.nbr_indices.shape[0] // 2

    @property
    def pairs(self):
        return list(zip(self.vertex_of.tolist(), self.edge_of.tolist()))

    def neighbors(self, i):
        return self.nbr_indices[self.nbr_indptr[i] : self.nbr_indptr[i + 1]]


@dataclass
class BackProjection:
    """CSR map node -> (pair index, weight); each node's weights sum to 1."""

    indptr: np.ndarray
    pair_indices: np.ndarray
    weights: np.ndarray


def _block_cliques(blocks):
    """Directed (row, col) arrays joining all ordered pairs inside each block."""
    rows, cols = [], []
    for idx in blocks:
        m = idx.shape[0]
        if m < 2:
            continue
        r = np.repeat(idx, m)
        c = np.tile(idx, m)
        keep = r != c
        rows.append(r[keep])
        cols.append(c[keep])
    if not rows:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(rows), np.concatenate(cols)


def _to_csr(rows, cols, n):
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols.astype(np.int64)


def expand(h: Hypergraph) -> ExpandedGraph:
    """Build the pair-node graph in (hyperedge-major, member-order) order."""
    edge_sizes = np.array([e.size for e in h.hyperedges], dtype=np.int64)
    if h.num_hyperedges:
        vertex_of = np.concatenate(h.hyperedges).astype(np.int64)
        edge_of = np.repeat(np.arange(h.num_hyperedges, dtype=np.int64), edge_sizes)
    else:
        vertex_of = np.zeros(0, dtype=np.int64)
        edge_of = np.zeros(0, dtype=np.int64)
    num_pairs = vertex_of.shape[0]

    # group pair indices by source node, ascending within each group
    by_node = np.argsort(vertex_of, kind="stable").astype(np.int64)
    counts = np.bincount(vertex_of, minlength=h.num_nodes)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    copies_of = [by_node[bounds[v] : bounds[v + 1]] for v in range(h.num_nodes)]

    edge_bounds = np.concatenate([[0], np.cumsum(edge_sizes)]).astype(np.int64)
    edge_blocks = [
        np.arange(edge_bounds[j], edge_bounds[j + 1], dtype=np.int64)
        for j in range(h.num_hyperedges)
    ]

    sv_rows, sv_cols = _block_cliques(copies_of)
    se_rows, se_cols = _block_cliques(edge_blocks)
    sv_indptr, sv_indices = _to_csr(sv_rows, sv_cols, num_pairs)
    se_indptr, se_indices = _to_csr(se_rows, se_cols, num_pairs)
    nbr_indptr, nbr_indices = _to_csr(
        np.concatenate([sv_rows, se_rows]), np.concatenate([sv_cols, se_cols]), num_pairs
    )

    return ExpandedGraph(
        num_source_nodes=h.num_nodes,
        num_source_edges=h.num_hyperedges,
        vertex_of=vertex_of,
        edge_of=edge_of,
        copies_of=copies_of,
        sv_indptr=sv_indptr,
        sv_indices=sv_indices,
        se_indptr=se_indptr,
        se_indices=se_indices,
        nbr_indptr=nbr_indptr,
        nbr_indices=nbr_indices,
    )


def project_features(g: ExpandedGraph, X) -> np.ndarray:
    """Row for pair (v, e) is row v of X. Output is float64."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != g.num_source_nodes:
        raise ValueError(
            f"feature matrix has {X.shape[0] if X.ndim == 2 else '?'} rows,"
            f" expected {g.num_source_nodes}"
        )
    return X.astype(np.float64)[g.vertex_of]


def build_back_projection(g: ExpandedGraph) -> BackProjection:
    delta = np.bincount(g.edge_of, minlength=g.num_source_edges).astype(np.float64)
    inv_delta = np.zeros(g.num_pairs)
    if g.num_pairs:
        inv_delta = 1.0 / delta[g.edge_of]
    denom = np.bincount(g.vertex_of, weights=inv_delta, minlength=g.num_source_nodes)
    safe = np.where(denom > 0, denom, 1.0)

    pair_indices = np.concatenate(g.copies_of) if g.copies_of else np.zeros(0, dtype=np.int64)
    pair_indices = pair_indices.astype(np.int64)
    weights = inv_delta[pair_indices] / safe[g.vertex_of[pair_indices]] if pair_indices.size else np.zeros(0)
    counts = np.array([c.size for c in g.copies_of], dtype=np.int64)
    indptr = np.zeros(g.num_source_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return BackProjection(indptr=indptr, pair_indices=pair_indices, weights=weights)


def back_project(bp: BackProjection, H) -> np.ndarray:
    """Node row = convex combination of its copies' rows."""
    H = np.ascontiguousarray(H, dtype=np.float64)
    if bp.pair_indices.size and H.shape[0] <= bp.pair_indices.max():
        raise ValueError("expanded feature matrix does not cover all pair indices")
    indptr, indices, weights = kernels.as_csr(bp.indptr, bp.pair_indices, bp.weights)
    return kernels.aggregate_rows(H, indptr, indices, weights)


def clique_expansion_propagate(h: Hypergraph, X) -> np.ndarray:
    """One unnormalized clique-expansion step: X' = I Itr X (incidence I)."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != h.num_nodes:
        raise ValueError("feature matrix row count does not match num_nodes")
    X64 = X.astype(np.float64)
    out = np.zeros_like(X64)
    edge_sums = [X64[e].sum(axis=0) for e in h.hyperedges]
    for e, s in zip(h.hyperedges, edge_sums):
        out[e] += s
    return out


def dump_edge_list(g: ExpandedGraph, path):
    """Debug text dump: pair table header, then one line per undirected edge."""
    lines = ["# pairs"]
    for i in range(g.num_pairs):
        lines.append(f"# {i} {g.vertex_of[i]} {g.edge_of[i]}")
    for u in range(g.num_pairs):
        for w in g.neighbors(u):
            if u < w:
                lines.append(f"{u} {w}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
