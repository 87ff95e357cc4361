"""Random hyperedge augmentation: enlarge hyperedges with random extra nodes.

Each hyperedge e gains round(ratio * |e|) distinct nodes drawn uniformly
from its complement (capped at the complement size), widening the search
space of the layer-wise sampler. Original membership is always preserved.
"""

import math
from dataclasses import dataclass

import numpy as np

from .hypergraph import Hypergraph


@dataclass
class RhaConfig:
    ratio: float
    seed: int = 0

    def __post_init__(self):
        if self.ratio < 0:
            raise ValueError("ratio must be nonnegative")


def _round_half_away(x):
    # ratio and degree are nonnegative here, so half always rounds up
    return int(math.floor(x + 0.5))


def augment(h: Hypergraph, cfg: RhaConfig) -> Hypergraph:
    """Return a new hypergraph with enlarged hyperedges.

    Each hyperedge uses its own random stream derived from (seed, edge
    index), so results do not depend on processing order.
    """
    all_nodes = np.arange(h.num_nodes, dtype=np.int64)
    new_edges = []
    for j, edge in enumerate(h.hyperedges):
        want = _round_half_away(cfg.ratio * edge.size)
        complement = np.setdiff1d(all_nodes, edge, assume_unique=True)
        take = min(want, complement.size)
        if take == 0:
            new_edges.append(edge.copy())
            continue
        rng = np.random.default_rng([cfg.seed, j])
        added = rng.choice(complement, size=take, replace=False)
        new_edges.append(np.sort(np.concatenate([edge, added])))
    return Hypergraph(
        num_nodes=h.num_nodes,
        hyperedges=new_edges,
        features=h.features,
        labels=h.labels,
        num_classes=h.num_classes,
    )
