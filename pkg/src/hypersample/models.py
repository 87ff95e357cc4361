"""Peer MLP, sampled-subgraph GCN, full-batch expanded convolution, transfer.

MLP and GCN share one weight schema (per-layer W and bias, relu between
layers, linear head) so MLP weights can seed the GCN directly. The GCN
consumes a LayeredSubgraph: per layer, a CSR of sampled in-neighbors with
row-normalized weights that already include the self-loop.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels, numerics
from .expansion import BackProjection, ExpandedGraph, back_project
from .numerics import Var

_CHECKPOINT_MAGIC = b"HSMP"


@dataclass
class ModelParams:
    weights: list
    biases: list

    @property
    def num_layers(self):
        return len(self.weights)

    @property
    def layer_dims(self):
        dims = [w.shape[0] for w in self.weights]
        dims.append(self.weights[-1].shape[1])
        return dims

    def copy(self):
        return ModelParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def flat(self):
        """Parameter tensors in optimizer order: weights then biases per layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def init_params(layer_dims, seed) -> ModelParams:
    """He-scaled random weights, zero biases."""
    if len(layer_dims) < 2:
        raise ValueError("need at least input and output dims")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for din, dout in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.standard_normal((din, dout)) * np.sqrt(2.0 / din))
        biases.append(np.zeros(dout))
    return ModelParams(weights=weights, biases=biases)


def transfer_weights(src: ModelParams, template: ModelParams = None) -> ModelParams:
    """Deep-copy src so a GCN starts from the peer MLP's exact weights."""
    if template is not None:
        src_shapes = [w.shape for w in src.weights]
        dst_shapes = [w.shape for w in template.weights]
        if src_shapes != dst_shapes:
            raise ValueError(f"weight schema mismatch: {src_shapes} vs {dst_shapes}")
    return src.copy()


def as_vars(p: ModelParams):
    return [Var(w) for w in p.weights], [Var(b) for b in p.biases]


def mlp_logits_vars(tape, wvars, bvars, X) -> Var:
    h = X if isinstance(X, Var) else Var(np.asarray(X, dtype=np.float64))
    last = len(wvars) - 1
    for l, (w, b) in enumerate(zip(wvars, bvars)):
        h = numerics.add_bias(tape, numerics.matmul(tape, h, w), b)
        if l != last:
            h = numerics.relu(tape, h)
    return h


def mlp_forward(p: ModelParams, X) -> np.ndarray:
    wvars, bvars = as_vars(p)
    return mlp_logits_vars(None, wvars, bvars, X).value


@dataclass
class LayerBlock:
    """One sampled aggregation step: rows for out_nodes from in_nodes' features.

    indices are local positions into in_nodes; every row lists its self-loop
    first, then sampled neighbors in ascending global pair order, with
    uniform weights summing to 1.
    """

    out_nodes: np.ndarray
    in_nodes: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray


@dataclass
class LayeredSubgraph:
    target_pairs: np.ndarray
    blocks: list

    @property
    def support(self):
        """All pair indices the computation touches (deepest input set)."""
        return self.blocks[0].in_nodes if self.blocks else self.target_pairs

    @property
    def sampled_node_count(self):
        return int(self.support.shape[0])


def gcn_logits_vars(tape, wvars, bvars, sg: LayeredSubgraph, H0) -> Var:
    if len(sg.blocks) != len(wvars):
        raise ValueError(
            f"subgraph has {len(sg.blocks)} layers but params have {len(wvars)}"
        )
    H0 = np.asarray(H0, dtype=np.float64)
    if sg.support.size and sg.support.max() >= H0.shape[0]:
        raise ValueError("missing feature row for a sampled pair")
    h = Var(H0[sg.support])
    last = len(wvars) - 1
    for l, block in enumerate(sg.blocks):
        agg = numerics.sparse_neighbor_aggregate(
            tape, h, block.indptr, block.indices, block.weights
        )
        h = numerics.add_bias(tape, numerics.matmul(tape, agg, wvars[l]), bvars[l])
        if l != last:
            h = numerics.relu(tape, h)
    return h


def gcn_forward_sampled(p: ModelParams, sg: LayeredSubgraph, H0) -> np.ndarray:
    """Logit rows aligned with sg.target_pairs order."""
    wvars, bvars = as_vars(p)
    return gcn_logits_vars(None, wvars, bvars, sg, H0).value


def full_batch_rows(g: ExpandedGraph):
    """Row-normalized adjacency-plus-self CSR over all pairs.

    Same row convention as LayerBlock: self first, then neighbors ascending.
    """
    n = g.num_pairs
    deg = np.diff(g.nbr_indptr)
    counts = deg + 1
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    weights = np.empty(indptr[-1])
    for i in range(n):
        s = indptr[i]
        indices[s] = i
        indices[s + 1 : indptr[i + 1]] = g.nbr_indices[g.nbr_indptr[i] : g.nbr_indptr[i + 1]]
        weights[s : indptr[i + 1]] = 1.0 / counts[i]
    return indptr, indices, weights


def gcn_forward_full(p: ModelParams, g: ExpandedGraph, H0) -> np.ndarray:
    """Full-batch GCN over every pair; reference path for evaluation."""
    indptr, indices, weights = full_batch_rows(g)
    h = np.asarray(H0, dtype=np.float64)
    if h.shape[0] != g.num_pairs:
        raise ValueError("missing feature row for a pair")
    last = p.num_layers - 1
    for l, (w, b) in enumerate(zip(p.weights, p.biases)):
        h = kernels.aggregate_rows(h, indptr, indices, weights) @ w + b[None, :]
        if l != last:
            h = np.where(h > 0, h, 0.0)
    return h


def expanded_conv_vars(tape, wvars, bvars, g: ExpandedGraph, H, w_e, w_v) -> Var:
    """Stack of expanded convolutions with the two-perspective sums.

    Each layer computes sigma(w_e * (same-vertex sum incl self) W
    + w_v * (same-edge sum incl self) W + b); the final layer is linear.
    """
    h = H if isinstance(H, Var) else Var(np.asarray(H, dtype=np.float64))
    if h.value.shape[0] != g.num_pairs:
        raise ValueError(f"expected {g.num_pairs} feature rows, got {h.value.shape[0]}")
    sv_w = np.ones(g.sv_indices.shape[0])
    se_w = np.ones(g.se_indices.shape[0])
    last = len(wvars) - 1
    for l, (w, b) in enumerate(zip(wvars, bvars)):
        sv_sum = numerics.sparse_neighbor_aggregate(tape, h, g.sv_indptr, g.sv_indices, sv_w)
        se_sum = numerics.sparse_neighbor_aggregate(tape, h, g.se_indptr, g.se_indices, se_w)
        mixed = numerics.add(
            tape,
            numerics.scale(tape, h, w_e + w_v),
            numerics.add(
                tape,
                numerics.scale(tape, sv_sum, w_e),
                numerics.scale(tape, se_sum, w_v),
            ),
        )
        h = numerics.add_bias(tape, numerics.matmul(tape, mixed, w), b)
        if l != last:
            h = numerics.relu(tape, h)
    return h


def expanded_conv_forward(p: ModelParams, g: ExpandedGraph, H, w_e=1.0, w_v=1.0) -> np.ndarray:
    wvars, bvars = as_vars(p)
    return expanded_conv_vars(None, wvars, bvars, g, H, w_e, w_v).value


def predict_nodes(logits, bp: BackProjection) -> np.ndarray:
    """Per-node class scores: convex combination of the node's copies' logits.

    Class choice downstream is argmax, which breaks ties toward the lower
    class id.
    """
    return back_project(bp, np.asarray(logits, dtype=np.float64))


def save_checkpoint(p: ModelParams, path):
    blob = [_CHECKPOINT_MAGIC, struct.pack("<I", p.num_layers)]
    for w, b in zip(p.weights, p.biases):
        rows, cols = w.shape
        blob.append(struct.pack("<II", rows, cols))
        blob.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        blob.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(blob))


def load_checkpoint(path) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != _CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    (layers,) = struct.unpack("<I", raw[4:8])
    off = 8
    weights, biases = [], []
    for _ in range(layers):
        if off + 8 > len(raw):
            raise ValueError(f"{path}: truncated checkpoint header")
        rows, cols = struct.unpack("<II", raw[off : off + 8])
        off += 8
        need = 8 * (rows * cols + cols)
        if off + need > len(raw):
            raise ValueError(f"{path}: truncated checkpoint payload")
        w = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=off).reshape(rows, cols)
        off += 8 * rows * cols
        b = np.frombuffer(raw, dtype="<f8", count=cols, offset=off)
        off += 8 * cols
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return ModelParams(weights=weights, biases=biases)
