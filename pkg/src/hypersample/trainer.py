"""End-to-end pipeline: augment, expand, pretrain, joint train, evaluate.

Per minibatch of train nodes (mapped to all their expanded copies) the
trainer builds one computation subgraph per rollout, computes every
rollout's classifier loss against the pre-update parameters, takes one Adam
step on the classifier using the first rollout's gradients, then takes one
Adam step on the policy from the rollout batch (variance of zeta by
default, trajectory balance as the alternative). Losses are always
cross-entropy over back-projected node logits, never raw pair logits.
"""

import math
import resource
import time
from dataclasses import dataclass

import numpy as np

from . import kernels, numerics
from .augmentation import RhaConfig, augment
from .expansion import BackProjection, ExpandedGraph, build_back_projection, expand, project_features
from .hypergraph import Hypergraph, split_dataset
from .models import (
    ModelParams,
    as_vars,
    gcn_forward_full,
    gcn_forward_sampled,
    gcn_logits_vars,
    init_params,
    mlp_forward,
    mlp_logits_vars,
    predict_nodes,
    transfer_weights,
)
from .numerics import Tape, Var, adam_step, init_adam, softmax_cross_entropy
from .sampler import (
    MODES,
    build_computation_subgraph,
    entropy_stats,
    init_policy,
    pair_degree_scale,
    policy_log_pf_vars,
    set_reward,
    variance_loss,
    zeta,
)

OBJECTIVES = ("variance", "trajectory_balance")

# fixed stream tags so every random draw has its own derived seed lane
_SEED_MLP_INIT = 1
_SEED_GCN_INIT = 2
_SEED_POLICY_INIT = 3
_SEED_ROLLOUT = 23
_SEED_EVAL = 29


@dataclass
class TrainConfig:
    layers: int = 2
    hidden: int = 64
    epochs: int = 50
    mlp_epochs: int = 50
    lr: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 128
    k: int = 8
    tau: float = 1.0
    rha_ratio: float = 0.0
    w_e: float = 1.0
    w_v: float = 1.0
    mode: str = "adaptive"
    objective: str = "variance"
    seed: int = 0
    split_ratios: tuple = (0.4, 0.1, 0.5)
    num_trajectories: int = 4
    k_eval: int = 0  # 0 means exhaustive full-batch evaluation
    policy_hidden: int = 32
    policy_lr: float = 1e-2
    mlp_init: bool = True
    mlp_lr: float | None = None  # pretraining step size; defaults to lr

    @property
    def effective_mlp_lr(self) -> float:
        return self.lr if self.mlp_lr is None else self.mlp_lr

    def validate(self):
        if self.layers < 1:
            raise ValueError("layers must be at least 1")
        for name in ("hidden", "batch_size", "k", "num_trajectories", "policy_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("epochs", "mlp_epochs", "k_eval"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("lr", "tau", "policy_lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.mlp_lr is not None and self.mlp_lr <= 0:
            raise ValueError("mlp_lr must be positive")
        for name in ("weight_decay", "rha_ratio"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.mode == "adaptive" and self.objective == "variance" and self.num_trajectories < 2:
            raise ValueError("variance objective needs num_trajectories >= 2")
        ratios = tuple(self.split_ratios)
        if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError("split_ratios must be three nonnegative fractions summing to 1")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    policy_loss: float
    val_accuracy: float
    test_accuracy: float
    entropy_mean: float
    entropy_std: float
    epoch_time_s: float
    peak_resident_mb: float
    sampled_node_count: int


def _peak_resident_mb():
    # ru_maxrss is kilobytes on Linux
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def _accuracy(scores, labels):
    if labels.size == 0:
        raise ValueError("empty split")
    return float(np.mean(np.argmax(scores, axis=1) == labels))


def _model_dims(h: Hypergraph, cfg: TrainConfig):
    return [h.feature_dim] + [cfg.hidden] * (cfg.layers - 1) + [h.num_classes]


def pretrain_mlp(h: Hypergraph, split, cfg: TrainConfig) -> ModelParams:
    """Train the peer MLP on train-split features only.

    Returns the checkpoint with the best validation accuracy (the final
    parameters when the validation split is empty or epochs is 0).
    """
    if split.train_ids.size == 0:
        raise ValueError("empty split")
    params = init_params(_model_dims(h, cfg), [cfg.seed, _SEED_MLP_INIT])
    if cfg.mlp_epochs == 0:
        return params
    X = h.features[split.train_ids].astype(np.float64)
    y = h.labels[split.train_ids]
    has_val = split.val_ids.size > 0
    if has_val:
        Xval = h.features[split.val_ids].astype(np.float64)
        yval = h.labels[split.val_ids]
    state = init_adam(params.flat(), lr=cfg.effective_mlp_lr, weight_decay=cfg.weight_decay)
    best, best_acc = params.copy(), -1.0
    for _ in range(cfg.mlp_epochs):
        tape = Tape()
        wv, bv = as_vars(params)
        loss = softmax_cross_entropy(tape, mlp_logits_vars(tape, wv, bv, X), y)
        tape.backward(loss)
        grads = [v.grad for pair in zip(wv, bv) for v in pair]
        adam_step(params.flat(), grads, state)
        if has_val:
            acc = _accuracy(mlp_forward(params, Xval), yval)
            if acc > best_acc:
                best_acc, best = acc, params.copy()
    return best if has_val else params


def _batch_projection(bp: BackProjection, node_ids):
    """CSR mapping batch nodes onto rows of the batch's own pair block.

    The pair block is the concatenation of each node's copies in node
    order, so indices are simply 0..total-1.
    """
    counts = bp.indptr[node_ids + 1] - bp.indptr[node_ids]
    indptr = np.zeros(node_ids.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    weights = (
        np.concatenate([bp.weights[bp.indptr[v] : bp.indptr[v + 1]] for v in node_ids])
        if node_ids.size
        else np.zeros(0)
    )
    indices = np.arange(indptr[-1], dtype=np.int64)
    return indptr, indices, weights


def _target_pairs(bp: BackProjection, node_ids):
    if node_ids.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([bp.pair_indices[bp.indptr[v] : bp.indptr[v + 1]] for v in node_ids])


def _ce_value(node_logits, labels):
    return softmax_cross_entropy(None, Var(node_logits), labels).value.item()


def policy_update(policy, trajs, objective, adam_state, H0, deg_norm, log_z=None):
    """One optimizer step on the policy from a batch of finished rollouts.

    Gradients flow through the log P_F terms only; rewards are constants.
    Returns the objective value before the step.
    """
    zetas = np.array([zeta(t) for t in trajs])
    if objective == "variance":
        loss, dz = variance_loss(zetas)
        coeffs = -dz  # d zeta / d log P_F = -1
    elif objective == "trajectory_balance":
        if log_z is None:
            raise ValueError("trajectory balance needs the learned logZ scalar")
        residuals = log_z[0, 0] + np.array([t.log_pf for t in trajs]) - np.array(
            [t.log_reward for t in trajs]
        )
        loss = float(np.mean(residuals * residuals))
        coeffs = 2.0 * residuals / residuals.size
    else:
        raise ValueError(f"unknown objective {objective!r}")

    tape = Tape()
    wv, bv = as_vars(policy)
    total = None
    for traj, c in zip(trajs, coeffs):
        lp = policy_log_pf_vars(tape, wv, bv, traj, H0, deg_norm)
        if lp is None:
            continue
        term = numerics.scale(tape, lp, float(c))
        total = term if total is None else numerics.add(tape, total, term)
    grads = None
    if total is not None:
        tape.backward(total)
        grads = [v.grad for pair in zip(wv, bv) for v in pair]
    params = policy.flat()
    if objective == "trajectory_balance":
        if grads is None:
            grads = [np.zeros_like(p) for p in policy.flat()]
        params = params + [log_z]
        grads = grads + [np.array([[float(np.sum(coeffs))]])]
    if grads is not None:
        adam_step(params, grads, adam_state)
    return float(loss)


def evaluate(
    model: ModelParams,
    h: Hypergraph,
    g: ExpandedGraph,
    bp: BackProjection,
    split_ids,
    k_eval=0,
    mode="full",
    seed=0,
    batch_size=128,
    policy=None,
):
    """Accuracy over the given node ids.

    k_eval = 0 (or mode "full") evaluates with the exhaustive full-batch
    forward. A positive k_eval samples neighborhoods per batch with the
    given mode, using fixed derived seeds so results are reproducible.
    """
    split_ids = np.asarray(split_ids, dtype=np.int64)
    if split_ids.size == 0:
        raise ValueError("empty split")
    H0 = project_features(g, h.features)
    labels = h.labels[split_ids]
    if not k_eval or mode == "full":
        scores = predict_nodes(gcn_forward_full(model, g, H0), bp)
        return _accuracy(scores[split_ids], labels)

    deg_norm = pair_degree_scale(g)
    correct = 0
    for b, start in enumerate(range(0, split_ids.size, batch_size)):
        nodes = split_ids[start : start + batch_size]
        pairs = _target_pairs(bp, nodes)
        if pairs.size == 0:
            # nodes with no copies score zero everywhere; argmax gives class 0
            correct += int(np.sum(h.labels[nodes] == 0))
            continue
        sg, _ = build_computation_subgraph(
            g,
            pairs,
            model.num_layers,
            k_eval,
            mode=mode,
            policy=policy,
            seed=[seed, _SEED_EVAL, b],
            H0=H0,
            deg_norm=deg_norm,
        )
        pair_logits = gcn_forward_sampled(model, sg, H0)
        indptr, indices, weights = _batch_projection(bp, nodes)
        node_scores = kernels.aggregate_rows(pair_logits, *kernels.as_csr(indptr, indices, weights))
        correct += int(np.sum(np.argmax(node_scores, axis=1) == h.labels[nodes]))
    return correct / split_ids.size


def train(h: Hypergraph, cfg: TrainConfig):
    """Full pipeline; returns (classifier, policy, list of EpochMetrics)."""
    cfg.validate()
    split = split_dataset(h, cfg.split_ratios, cfg.seed)
    if split.train_ids.size == 0:
        raise ValueError("empty train split")

    h_run = augment(h, RhaConfig(ratio=cfg.rha_ratio, seed=cfg.seed)) if cfg.rha_ratio > 0 else h
    g = expand(h_run)
    bp = build_back_projection(g)
    H0 = project_features(g, h_run.features)
    deg_norm = pair_degree_scale(g)


    if cfg.mlp_init:
        gcn = transfer_weights(pretrain_mlp(h, split, cfg))
    else:
        gcn = init_params(_model_dims(h, cfg), [cfg.seed, _SEED_GCN_INIT])
    policy = init_policy(h.feature_dim, cfg.policy_hidden, [cfg.seed, _SEED_POLICY_INIT])
    log_z = np.zeros((1, 1))

    adam_c = init_adam(gcn.flat(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    adam_p = init_adam(
        policy.flat() + ([log_z] if cfg.objective == "trajectory_balance" else []),
        lr=cfg.policy_lr,
    )

    metrics = []
    adaptive = cfg.mode == "adaptive"
    # minibatches walk the train ids in sorted order: deterministic, and batch
    # targets stay locally coherent so the frontier-mean policy context is
    # informative rather than a global average
    perm = np.sort(split.train_ids)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        loss_sum = 0.0
        policy_loss_sum = 0.0
        batches = 0
        sampled_count = 0
        epoch_probs = []

        for batch_idx, start in enumerate(range(0, perm.size, cfg.batch_size)):
            batch_nodes = np.sort(perm[start : start + cfg.batch_size])
            pairs = _target_pairs(bp, batch_nodes)
            if pairs.size == 0:
                continue
            labels = h.labels[batch_nodes]
            n_roll = cfg.num_trajectories if adaptive else 1
            rollouts = [
                build_computation_subgraph(
                    g,
                    pairs,
                    cfg.layers,
                    cfg.k,
                    mode=cfg.mode,
                    policy=policy if adaptive else None,
                    seed=[cfg.seed, _SEED_ROLLOUT, epoch, batch_idx, j],
                    H0=H0,
                    deg_norm=deg_norm,
                )
                for j in range(n_roll)
            ]
            indptr, indices, weights = _batch_projection(bp, batch_nodes)

            # rollout 0 trains the classifier; its loss is also its reward
            tape = Tape()
            wv, bv = as_vars(gcn)
            pair_logits = gcn_logits_vars(tape, wv, bv, rollouts[0][0], H0)
            node_logits = numerics.sparse_neighbor_aggregate(
                tape, pair_logits, indptr, indices, weights
            )
            loss_var = softmax_cross_entropy(tape, node_logits, labels)
            loss0 = loss_var.value.item()
            if not math.isfinite(loss0):
                raise FloatingPointError(
                    f"non-finite classifier loss at epoch {epoch} batch {batch_idx}"
                )
            set_reward(rollouts[0][1], loss0, cfg.tau)

            # remaining rollouts: reward only, against pre-update parameters
            for sg_j, traj_j in rollouts[1:]:
                logits_j = gcn_forward_sampled(gcn, sg_j, H0)
                scores_j = kernels.aggregate_rows(
                    logits_j, *kernels.as_csr(indptr, indices, weights)
                )
                set_reward(traj_j, _ce_value(scores_j, labels), cfg.tau)

            tape.backward(loss_var)
            grads = [v.grad for pair in zip(wv, bv) for v in pair]
            adam_step(gcn.flat(), grads, adam_c)

            if adaptive:
                trajs = [t for _, t in rollouts]
                policy_loss_sum += policy_update(
                    policy, trajs, cfg.objective, adam_p, H0, deg_norm,
                    log_z=log_z if cfg.objective == "trajectory_balance" else None,
                )
                for t in trajs:
                    for hop in t.hops:
                        if hop.probs.size:
                            epoch_probs.append(hop.probs)

            loss_sum += loss0
            sampled_count += rollouts[0][0].sampled_node_count
            batches += 1

        if epoch_probs:
            ent = entropy_stats(np.concatenate(epoch_probs), epoch=epoch)
            ent_mean, ent_std = ent.mean, ent.std
        else:
            ent_mean, ent_std = 0.0, 0.0
        # augmentation is graph preprocessing, so the run graph (augmented when
        # rha_ratio > 0) is also the graph the model is scored on
        val_acc = evaluate(
            gcn, h_run, g, bp, split.val_ids, k_eval=cfg.k_eval, mode=cfg.mode,
            seed=cfg.seed, batch_size=cfg.batch_size, policy=policy,
        ) if split.val_ids.size else 0.0
        test_acc = evaluate(
            gcn, h_run, g, bp, split.test_ids, k_eval=cfg.k_eval, mode=cfg.mode,
            seed=cfg.seed, batch_size=cfg.batch_size, policy=policy,
        ) if split.test_ids.size else 0.0
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                train_loss=loss_sum / max(batches, 1),
                policy_loss=policy_loss_sum / max(batches, 1),
                val_accuracy=val_acc,
                test_accuracy=test_acc,
                entropy_mean=ent_mean,
                entropy_std=ent_std,
                epoch_time_s=time.perf_counter() - t0,
                peak_resident_mb=_peak_resident_mb(),
                sampled_node_count=sampled_count,
            )
        )
    return gcn, policy, metrics
