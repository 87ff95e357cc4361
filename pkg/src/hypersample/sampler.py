"""Adaptive layer-wise sampling over the expanded graph.

A small policy network scores frontier neighbors and k of them are kept per
layer via Gumbel-top-k on the log-odds. Each rollout is a trajectory whose
forward log-probability factorizes over per-candidate Bernoulli terms
(chosen: p_i, rejected: 1 - p_i; forced choices carry no rejection term).
The backward probability is identically 1 because expansion states form a
tree, so the single-trajectory partition estimate is
zeta = log R - sum log P_F. Two objectives are provided: the variance of
zeta across a trajectory batch (primary) and trajectory balance with a
learned scalar logZ (alternative).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .expansion import ExpandedGraph
from .models import LayerBlock, LayeredSubgraph, ModelParams, init_params, mlp_logits_vars

MODES = ("adaptive", "random", "full")


@dataclass
class HopRecord:
    """One sampling step: scored candidates and the chosen frontier."""

    candidates: np.ndarray
    probs: np.ndarray
    chosen_mask: np.ndarray
    chosen: np.ndarray
    log_pf: float
    frontier: np.ndarray


@dataclass
class Trajectory:
    batch_index: int
    hops: list = field(default_factory=list)
    log_pf: float = 0.0
    log_reward: float = None

    @property
    def reward(self):
        if self.log_reward is None:
            raise ValueError("missing reward")
        return math.exp(self.log_reward)


@dataclass
class EntropyStats:
    entropies: np.ndarray
    mean: float
    std: float
    epoch: int


def init_policy(feature_dim, hidden, seed) -> ModelParams:
    """Scorer over [candidate feature | mean frontier feature | degree].

    The output layer starts at zero so every initial logit is exactly 0
    (inclusion probability 1/2) while hidden-layer gradients still flow.
    """
    p = init_params([2 * feature_dim + 1, hidden, 1], seed)
    p.weights[-1][:] = 0.0
    return p


def policy_input(H0, deg_norm, candidates, frontier) -> np.ndarray:
    H0 = np.asarray(H0, dtype=np.float64)
    cand_feat = H0[candidates]
    if frontier.size:
        fmean = H0[frontier].mean(axis=0)
    else:
        fmean = np.zeros(H0.shape[1])
    ctx = np.broadcast_to(fmean, cand_feat.shape)
    deg = np.asarray(deg_norm, dtype=np.float64)[candidates][:, None]
    return np.concatenate([cand_feat, ctx, deg], axis=1)


def policy_scores(policy: ModelParams, candidates, frontier, H0, deg_norm) -> np.ndarray:
    """Inclusion probability per candidate, in candidate order."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        raise ValueError("empty candidate list")
    X = policy_input(H0, deg_norm, candidates, np.asarray(frontier, dtype=np.int64))
    logits = X
    last = policy.num_layers - 1
    for l, (w, b) in enumerate(zip(policy.weights, policy.biases)):
        logits = logits @ w + b[None, :]
        if l != last:
            logits = np.where(logits > 0, logits, 0.0)
    return numerics.sigmoid(logits.reshape(-1))


def _log_terms(probs):
    p = np.clip(probs, 1e-12, 1.0 - 1e-12)
    return np.log(p), np.log1p(-p)


def policy_log_pf_vars(tape, wvars, bvars, traj: Trajectory, H0, deg_norm):
    """Differentiable sum of step log P_F terms for a recorded trajectory.

    Re-scores each hop's candidates with the policy given as Vars and
    applies the recorded chosen masks. Forced steps (all-True mask) carry
    only the chosen-mass term by construction. Returns None when no hop was
    policy-scored.
    """
    total = None
    for hop in traj.hops:
        if hop.candidates.size == 0 or hop.probs.size == 0:
            continue
        X = policy_input(H0, deg_norm, hop.candidates, hop.frontier)
        logits = mlp_logits_vars(tape, wvars, bvars, X)
        ll = numerics.bernoulli_log_likelihood(tape, logits, hop.chosen_mask)
        total = ll if total is None else numerics.add(tape, total, ll)
    return total


def sample_layer(candidates, probs, k, seed):
    """Keep k candidates without replacement; return (chosen ids, step log P_F).

    With |candidates| <= k the choice is forced: everything is kept and the
    step carries only the chosen-mass term, no rejection term. Otherwise
    Gumbel-top-k over the log-odds draws exactly k.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be at least 1")
    if candidates.size == 0:
        return candidates.copy(), 0.0
    if probs.shape != candidates.shape:
        raise ValueError("probs do not align with candidates")
    logp, log1mp = _log_terms(probs)
    n = candidates.size
    if n <= k:
        return candidates.copy(), float(logp.sum())
    rng = np.random.default_rng(seed)
    keys = (logp - log1mp) + rng.gumbel(size=n)
    top = np.argpartition(-keys, k - 1)[:k]
    mask = np.zeros(n, dtype=bool)
    mask[top] = True
    log_pf = float(logp[mask].sum() + log1mp[~mask].sum())
    return candidates[mask], log_pf


def random_sample_layer(candidates, k, seed) -> np.ndarray:
    """Uniform without-replacement baseline."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if k < 1:
        raise ValueError("k must be at least 1")
    if candidates.size <= k:
        return candidates.copy()
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(candidates, size=k, replace=False))


def pair_degree_scale(g: ExpandedGraph) -> np.ndarray:
    """Pair degrees scaled into [0, 1] for the policy input."""
    deg = np.diff(g.nbr_indptr).astype(np.float64)
    top = deg.max() if deg.size else 0.0
    return deg / top if top > 0 else deg


def build_computation_subgraph(
    g: ExpandedGraph,
    targets,
    L,
    k,
    mode="adaptive",
    policy=None,
    seed=0,
    H0=None,
    deg_norm=None,
):
    """Frontier expansion from the target pairs, one sampling step per layer.

    Candidates at each step are the neighbors of the previous frontier minus
    every node already retained. Returns the aggregation blocks (computation
    order, uniform row-normalized weights with the self-loop listed first)
    plus the trajectory record. mode "full" keeps every candidate; "random"
    keeps k uniformly and carries the log P_F = 0 convention.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise ValueError("targets must be nonempty")
    if L < 1:
        raise ValueError("L must be at least 1")
    if mode not in MODES:
        raise ValueError(f"unknown sampling mode {mode!r}")
    if mode == "adaptive":
        if policy is None or H0 is None:
            raise ValueError("adaptive mode needs a policy and expanded features")
        if deg_norm is None:
            deg_norm = pair_degree_scale(g)

    in_support = np.zeros(g.num_pairs, dtype=bool)
    in_support[targets] = True
    supports = [targets]
    frontier = targets
    traj = Trajectory(batch_index=0)

    for hop in range(1, L + 1):
        if frontier.size:
            nbrs = np.concatenate(
                [g.nbr_indices[g.nbr_indptr[v] : g.nbr_indptr[v + 1]] for v in frontier]
            )
            cand = np.unique(nbrs)
            cand = cand[~in_support[cand]]
        else:
            cand = np.zeros(0, dtype=np.int64)

        probs = np.zeros(0)
        mask = np.zeros(cand.size, dtype=bool)
        log_pf = 0.0
        if cand.size == 0:
            chosen = cand
        elif mode == "full":
            chosen = cand
            mask = np.ones(cand.size, dtype=bool)
        elif mode == "random":
            chosen = random_sample_layer(cand, k, [seed, hop])
            mask = np.isin(cand, chosen)
        else:
            probs = policy_scores(policy, cand, frontier, H0, deg_norm)
            chosen, log_pf = sample_layer(cand, probs, k, [seed, hop])
            mask = np.isin(cand, chosen)
        traj.hops.append(
            HopRecord(
                candidates=cand,
                probs=probs,
                chosen_mask=mask,
                chosen=chosen,
                log_pf=log_pf,
                frontier=frontier,
            )
        )
        traj.log_pf += log_pf
        in_support[chosen] = True
        supports.append(np.concatenate([supports[-1], chosen]))
        frontier = chosen

    blocks = []
    for t in range(1, L + 1):
        out_nodes = supports[L - t]
        in_nodes = supports[L - t + 1]
        blocks.append(_aggregation_block(g, out_nodes, in_nodes))
    sg = LayeredSubgraph(target_pairs=targets, blocks=blocks)
    return sg, traj


def _aggregation_block(g: ExpandedGraph, out_nodes, in_nodes) -> LayerBlock:
    pos = np.full(g.num_pairs, -1, dtype=np.int64)
    pos[in_nodes] = np.arange(in_nodes.shape[0])
    in_mask = pos >= 0

    rows_idx = []
    counts = np.empty(out_nodes.shape[0], dtype=np.int64)
    for i, v in enumerate(out_nodes):
        nbrs = g.nbr_indices[g.nbr_indptr[v] : g.nbr_indptr[v + 1]]
        kept = nbrs[in_mask[nbrs]]
        rows_idx.append(pos[v])
        if kept.size:
            rows_idx.append(pos[kept])
        counts[i] = 1 + kept.size
    if rows_idx:
        indices = np.concatenate([np.atleast_1d(np.asarray(r, dtype=np.int64)) for r in rows_idx])
    else:
        indices = np.zeros(0, dtype=np.int64)
    indptr = np.zeros(out_nodes.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    weights = np.repeat(1.0 / counts, counts)
    return LayerBlock(
        out_nodes=np.asarray(out_nodes, dtype=np.int64),
        in_nodes=np.asarray(in_nodes, dtype=np.int64),
        indptr=indptr,
        indices=indices,
        weights=weights,
    )


def reward(classifier_loss, tau) -> float:
    """R = exp(-loss / tau), in (0, 1] for nonnegative loss."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return math.exp(-float(classifier_loss) / float(tau))


def set_reward(traj: Trajectory, classifier_loss, tau):
    if tau <= 0:
        raise ValueError("tau must be positive")
    traj.log_reward = -float(classifier_loss) / float(tau)


def zeta(traj: Trajectory) -> float:
    """log R - sum log P_F (the backward flow is 1 on a tree)."""
    if traj.log_reward is None:
        raise ValueError("missing reward")
    return traj.log_reward - traj.log_pf


def variance_loss(zetas):
    """Population variance of the zeta batch and its exact gradient."""
    zetas = np.asarray(zetas, dtype=np.float64)
    if zetas.size < 2:
        raise ValueError("variance loss needs at least 2 trajectories")
    diffs = zetas - zetas.mean()
    loss = float((diffs * diffs).mean())
    grad = 2.0 * diffs / zetas.size
    return loss, grad


def trajectory_balance_loss(traj: Trajectory, log_z) -> float:
    """(logZ + sum log P_F - log R)^2; backward terms vanish on a tree."""
    if traj.log_reward is None:
        raise ValueError("missing reward")
    residual = float(log_z) + traj.log_pf - traj.log_reward
    return residual * residual


def entropy_stats(probs, epoch=0) -> EntropyStats:
    """Bernoulli entropies (nats) with mean and population std."""
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise ValueError("need at least one probability")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0) - np.where(
            p < 1, (1 - p) * np.log1p(-p), 0.0
        )
    return EntropyStats(entropies=h, mean=float(h.mean()), std=float(h.std()), epoch=epoch)
