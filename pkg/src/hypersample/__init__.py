"""Scalable hypergraph node classification with adaptive layer-wise sampling."""

from .augmentation import RhaConfig, augment
from .expansion import (
    BackProjection,
    ExpandedGraph,
    back_project,
    build_back_projection,
    clique_expansion_propagate,
    dump_edge_list,
    expand,
    project_features,
)
from .hypergraph import (
    DatasetSplit,
    DegreeTable,
    Hypergraph,
    SyntheticConfig,
    compute_degrees,
    generate_synthetic,
    load_hypergraph,
    save_hypergraph,
    split_dataset,
)
from .models import (
    LayeredSubgraph,
    ModelParams,
    expanded_conv_forward,
    gcn_forward_full,
    gcn_forward_sampled,
    init_params,
    load_checkpoint,
    mlp_forward,
    predict_nodes,
    save_checkpoint,
    transfer_weights,
)
from .numerics import AdamState, Tape, Var, adam_step, finite_difference_check, init_adam
from .sampler import (
    EntropyStats,
    Trajectory,
    build_computation_subgraph,
    entropy_stats,
    init_policy,
    policy_scores,
    random_sample_layer,
    reward,
    sample_layer,
    trajectory_balance_loss,
    variance_loss,
    zeta,
)
from .trainer import EpochMetrics, TrainConfig, evaluate, pretrain_mlp, train

__version__ = "0.1.0"
