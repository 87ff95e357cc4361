"""Hypergraph container, file I/O, degrees, splits, and a synthetic generator.

A hypergraph is a node set plus a list of hyperedges, each joining two or
more distinct nodes. Node features are stored as float32 (training math is
done in float64 downstream), labels are integer class ids.

File format (UTF-8 JSON):

    {"num_nodes": n, "num_classes": C,
     "hyperedges": [[ids...], ...],
     "labels": [c0, ...],
     "features": <row-major array of arrays> | "<relative path>"}

When "features" is a string it names a binary sidecar file relative to the
JSON file: magic bytes HGF1, then uint32-LE rows and cols, then rows*cols
float32-LE values row-major.
"""

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_FEATURE_MAGIC = b"HGF1"


@dataclass
class Hypergraph:
    """Validated hypergraph with per-node features and labels.

    Hyperedges are normalized to sorted int64 arrays at construction.
    Instances are treated as immutable once built.
    """

    num_nodes: int
    hyperedges: list
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.num_nodes < 0:
            raise ValueError("num_nodes must be nonnegative")
        normalized = []
        for j, edge in enumerate(self.hyperedges):
            arr = np.asarray(edge, dtype=np.int64)
            if arr.ndim != 1:
                raise ValueError(f"hyperedge {j} is not a flat id list")
            if np.unique(arr).size != arr.size:
                raise ValueError(f"duplicate member in hyperedge {j}")
            if arr.size < 2:
                raise ValueError(f"hyperedge {j} has fewer than 2 members")
            if arr.size and (arr.min() < 0 or arr.max() >= self.num_nodes):
                raise ValueError(f"node id out of range in hyperedge {j}")
            normalized.append(np.sort(arr))
        self.hyperedges = normalized

        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
            raise ValueError(
                f"features row count {self.features.shape[0] if self.features.ndim == 2 else '?'}"
                f" does not match num_nodes {self.num_nodes}"
            )
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.num_nodes,):
            raise ValueError("labels length does not match num_nodes")
        if self.num_nodes and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label out of range [0, num_classes)")

    @property
    def num_hyperedges(self):
        return len(self.hyperedges)

    @property
    def feature_dim(self):
        return self.features.shape[1]


@dataclass
class DegreeTable:
    """Per-node degree d(v) and per-hyperedge degree delta(e) = |e|."""

    node_degree: np.ndarray
    edge_degree: np.ndarray


@dataclass
class DatasetSplit:
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray


@dataclass
class SyntheticConfig:
    num_nodes: int
    num_classes: int
    edges_per_class: int
    edge_size: int
    noise_edge_fraction: float
    feature_dim: int
    feature_noise_sigma: float


def compute_degrees(h: Hypergraph) -> DegreeTable:
    """d(v) = number of hyperedges containing v; delta(e) = |e|."""
    node_degree = np.zeros(h.num_nodes, dtype=np.int64)
    edge_degree = np.zeros(h.num_hyperedges, dtype=np.int64)
    for j, edge in enumerate(h.hyperedges):
        edge_degree[j] = edge.size
        node_degree[edge] += 1
    return DegreeTable(node_degree=node_degree, edge_degree=edge_degree)


def load_hypergraph(path) -> Hypergraph:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: parse error at line {e.lineno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: top-level value must be an object")
    for key in ("num_nodes", "num_classes", "hyperedges", "labels", "features"):
        if key not in doc:
            raise ValueError(f"{path}: missing required key '{key}'")

    feats = doc["features"]
    if isinstance(feats, str):
        features = _read_feature_file(path.parent / feats)
    else:
        features = np.asarray(feats, dtype=np.float32)
        if features.ndim == 1 and features.size == 0:
            features = features.reshape(int(doc["num_nodes"]), 0)
        elif features.ndim != 2:
            raise ValueError(f"{path}: features must be an array of equal-length rows")

    return Hypergraph(
        num_nodes=int(doc["num_nodes"]),
        hyperedges=doc["hyperedges"],
        features=features,
        labels=np.asarray(doc["labels"], dtype=np.int64),
        num_classes=int(doc["num_classes"]),
    )


def save_hypergraph(h: Hypergraph, path, features_file=None):
    """Write a hypergraph as JSON.

    With features_file set (a relative path string), features go to that
    binary sidecar next to the JSON file; otherwise they are inlined.
    Round trip through load_hypergraph is bit-exact for features either
    way: every float32 prints as an exact decimal double.
    """
    path = Path(path)
    if features_file is None:
        feats = h.features.astype(np.float64).tolist()
    else:
        if Path(features_file).is_absolute():
            raise ValueError("features_file must be relative to the JSON file")
        _write_feature_file(path.parent / features_file, h.features)
        feats = str(features_file)
    doc = {
        "num_nodes": h.num_nodes,
        "num_classes": h.num_classes,
        "hyperedges": [e.tolist() for e in h.hyperedges],
        "labels": h.labels.tolist(),
        "features": feats,
    }
    path.write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def _read_feature_file(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != _FEATURE_MAGIC:
        raise ValueError(f"{path}: not a feature file (bad magic)")
    rows, cols = struct.unpack("<II", raw[4:12])
    expect = 12 + 4 * rows * cols
    if len(raw) != expect:
        raise ValueError(f"{path}: expected {expect} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=12)
    return data.reshape(rows, cols).astype(np.float32)


def _write_feature_file(path, features: np.ndarray):
    rows, cols = features.shape
    payload = struct.pack("<II", rows, cols)
    body = np.ascontiguousarray(features, dtype="<f4").tobytes()
    Path(path).write_bytes(_FEATURE_MAGIC + payload + body)


def split_dataset(h: Hypergraph, ratios, seed: int) -> DatasetSplit:
    """Random node partition. Sizes follow floor-then-remainder-to-test."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ValueError("ratios must be (train, val, test)")
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be nonnegative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n = h.num_nodes
    n_train = math.floor(n * ratios[0])
    n_val = math.floor(n * ratios[1])
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return DatasetSplit(
        train_ids=np.sort(perm[:n_train]),
        val_ids=np.sort(perm[n_train : n_train + n_val]),
        test_ids=np.sort(perm[n_train + n_val :]),
    )


def generate_synthetic(cfg: SyntheticConfig, seed: int) -> Hypergraph:
    """Planted-community hypergraph for desk-scale experiments.

    Nodes are split into contiguous class blocks. Class-pure hyperedges
    draw edge_size members from one block; noise hyperedges draw from all
    nodes. noise_edge_fraction is the fraction of the total
    num_classes*edges_per_class hyperedges that are noise. Features are a
    one-hot class prototype plus Gaussian noise so that a structure-blind
    model has signal and structure adds more.
    """
    if cfg.edge_size < 2:
        raise ValueError("edge_size must be at least 2")
    if not 0.0 <= cfg.noise_edge_fraction <= 1.0:
        raise ValueError("noise_edge_fraction must be in [0, 1]")
    if cfg.feature_dim < cfg.num_classes:
        raise ValueError("feature_dim must be at least num_classes")
    n, C = cfg.num_nodes, cfg.num_classes

    base, extra = divmod(n, C)
    block_sizes = [base + (1 if c < extra else 0) for c in range(C)]
    for c, size in enumerate(block_sizes):
        if size < cfg.edge_size:
            raise ValueError(
                f"class {c} has {size} members, fewer than edge_size {cfg.edge_size}"
            )
    starts = np.concatenate([[0], np.cumsum(block_sizes)])
    labels = np.repeat(np.arange(C), block_sizes)

    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((n, cfg.feature_dim)) * cfg.feature_noise_sigma
    feats[np.arange(n), labels] += 1.0

    total_edges = C * cfg.edges_per_class
    num_noise = int(round(cfg.noise_edge_fraction * total_edges))
    num_pure = total_edges - num_noise
    pure_base, pure_extra = divmod(num_pure, C)

    hyperedges = []
    for c in range(C):
        block = np.arange(starts[c], starts[c + 1])
        count = pure_base + (1 if c < pure_extra else 0)
        for _ in range(count):
            hyperedges.append(np.sort(rng.choice(block, size=cfg.edge_size, replace=False)))
    for _ in range(num_noise):
        hyperedges.append(np.sort(rng.choice(n, size=cfg.edge_size, replace=False)))

    return Hypergraph(
        num_nodes=n,
        hyperedges=hyperedges,
        features=feats.astype(np.float32),
        labels=labels,
        num_classes=C,
    )
