import math

import numpy as np
import pytest

from hypersample import expand
from hypersample.expansion import project_features
from hypersample.models import ModelParams
from hypersample.numerics import Tape, Var, add, finite_difference_check, scale
from hypersample.sampler import (
    Trajectory,
    build_computation_subgraph,
    entropy_stats,
    init_policy,
    pair_degree_scale,
    policy_log_pf_vars,
    policy_scores,
    random_sample_layer,
    reward,
    sample_layer,
    set_reward,
    trajectory_balance_loss,
    variance_loss,
    zeta,
)
from conftest import make_hypergraph


def small_setup(seed=0, feature_dim=3, hidden=4):
    h = make_hypergraph(
        8,
        [[0, 1, 2], [2, 3], [3, 4, 5], [5, 6], [6, 7], [1, 4, 7]],
        feature_dim=feature_dim,
    )
    g = expand(h)
    H0 = project_features(g, h.features)
    deg = pair_degree_scale(g)
    policy = init_policy(feature_dim, hidden, seed)
    return g, H0, deg, policy


class TestPolicyScores:
    def test_fresh_policy_scores_half(self):
        g, H0, deg, policy = small_setup()
        p = policy_scores(policy, np.arange(5), np.array([5, 6]), H0, deg)
        assert np.all(p == 0.5)

    def test_candidate_order_respected(self):
        g, H0, deg, policy = small_setup()
        rng = np.random.default_rng(1)
        for w in policy.weights:
            w += rng.standard_normal(w.shape) * 0.3
        cand = np.array([0, 3, 7])
        base = policy_scores(policy, cand, np.array([1]), H0, deg)
        perm = np.array([2, 0, 1])
        swapped = policy_scores(policy, cand[perm], np.array([1]), H0, deg)
        assert np.allclose(swapped, base[perm])

    def test_empty_candidates_rejected(self):
        g, H0, deg, policy = small_setup()
        with pytest.raises(ValueError, match="empty candidate"):
            policy_scores(policy, np.zeros(0, dtype=np.int64), np.array([0]), H0, deg)

    def test_degree_scale_range(self):
        g, *_ = small_setup()
        d = pair_degree_scale(g)
        assert d.min() >= 0.0
        assert d.max() == 1.0


class TestSampleLayer:
    def test_two_even_candidates_hand_value(self):
        chosen, lp = sample_layer([10, 11], [0.5, 0.5], k=1, seed=0)
        assert chosen.size == 1
        # one log p plus one log(1 - p), both log(1/2)
        assert lp == pytest.approx(2 * math.log(0.5), abs=1e-12)

    def test_forced_keeps_all_no_rejection_term(self):
        chosen, lp = sample_layer([4, 9], [0.8, 0.25], k=5, seed=0)
        assert chosen.tolist() == [4, 9]
        assert lp == pytest.approx(math.log(0.8) + math.log(0.25), abs=1e-12)

    def test_exact_split_of_terms(self):
        probs = np.array([0.9, 0.2, 0.6])
        chosen, lp = sample_layer([0, 1, 2], probs, k=2, seed=3)
        mask = np.isin([0, 1, 2], chosen)
        want = np.log(probs[mask]).sum() + np.log1p(-probs[~mask]).sum()
        assert lp == pytest.approx(want, abs=1e-12)

    def test_saturated_probs_stay_finite(self):
        _, lp = sample_layer([0, 1], [1.0, 0.0], k=1, seed=0)
        assert math.isfinite(lp)

    def test_empty_candidates(self):
        chosen, lp = sample_layer(np.zeros(0, dtype=np.int64), np.zeros(0), k=2, seed=0)
        assert chosen.size == 0
        assert lp == 0.0

    def test_bad_k(self):
        with pytest.raises(ValueError, match="at least 1"):
            sample_layer([0], [0.5], k=0, seed=0)

    def test_misaligned_probs(self):
        with pytest.raises(ValueError, match="align"):
            sample_layer([0, 1], [0.5], k=1, seed=0)

    def test_marginals_follow_log_odds(self):
        # k = 1 Gumbel-top-1 draws candidate i with probability
        # softmax(log-odds)_i; odds 9:1 here
        hits = 0
        n = 5000
        for s in range(n):
            chosen, _ = sample_layer([0, 1], [0.9, 0.5], k=1, seed=s)
            hits += chosen[0] == 0
        assert abs(hits / n - 0.9) < 0.02


class TestRandomSampleLayer:
    def test_subset_sorted(self):
        out = random_sample_layer(np.array([9, 3, 7, 1]), k=2, seed=0)
        assert out.size == 2
        assert np.array_equal(out, np.sort(out))
        assert set(out.tolist()) <= {1, 3, 7, 9}

    def test_small_pool_kept(self):
        out = random_sample_layer(np.array([5, 2]), k=4, seed=0)
        assert out.tolist() == [5, 2]

    def test_roughly_uniform(self):
        counts = np.zeros(4)
        for s in range(4000):
            out = random_sample_layer(np.arange(4), k=1, seed=s)
            counts[out[0]] += 1
        assert np.all(np.abs(counts / 4000 - 0.25) < 0.03)


class TestFlowAlgebra:
    def test_reward_values(self):
        assert reward(0.0, 1.0) == 1.0
        assert reward(math.log(2.0), 1.0) == pytest.approx(0.5, abs=1e-12)
        assert reward(10.0, 2.0) == pytest.approx(math.exp(-5.0), abs=1e-15)
        with pytest.raises(ValueError, match="positive"):
            reward(1.0, 0.0)

    def test_log_reward_stored_directly(self):
        t = Trajectory(batch_index=0)
        set_reward(t, 2000.0, 1.0)
        # huge losses keep a finite log reward even though exp underflows
        assert t.log_reward == -2000.0
        assert t.reward == 0.0

    def test_zeta_unit_reward(self):
        t = Trajectory(batch_index=0, log_pf=2 * math.log(0.5))
        set_reward(t, 0.0, 1.0)
        assert zeta(t) == pytest.approx(1.3863, abs=5e-5)

    def test_zeta_half_reward(self):
        t = Trajectory(batch_index=0, log_pf=-1.0)
        set_reward(t, math.log(2.0), 1.0)
        assert zeta(t) == pytest.approx(0.3069, abs=5e-5)

    def test_zeta_requires_reward(self):
        with pytest.raises(ValueError, match="missing reward"):
            zeta(Trajectory(batch_index=0))

    def test_variance_loss_hand_value(self):
        loss, grad = variance_loss([0.0, 2.0])
        assert loss == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(grad, [-1.0, 1.0])

    def test_variance_needs_batch(self):
        with pytest.raises(ValueError, match="at least 2"):
            variance_loss([1.0])

    def test_trajectory_balance_hand_value(self):
        t = Trajectory(batch_index=0, log_pf=-1.0)
        set_reward(t, 0.0, 1.0)
        assert trajectory_balance_loss(t, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_flow_residual_identity(self):
        # zeta and the balance loss describe the same residual:
        # TB(logZ) == (logZ - zeta)^2 for every trajectory
        rng = np.random.default_rng(0)
        for _ in range(1000):
            t = Trajectory(batch_index=0, log_pf=float(rng.normal()))
            set_reward(t, float(rng.uniform(0, 3)), float(rng.uniform(0.5, 2)))
            lz = float(rng.normal())
            want = (lz - zeta(t)) ** 2
            assert abs(trajectory_balance_loss(t, lz) - want) < 1e-9


class TestEntropy:
    def test_hand_values(self):
        st = entropy_stats([0.5, 0.1])
        assert st.mean == pytest.approx(0.5091, abs=5e-5)
        assert st.std == pytest.approx(0.1840, abs=5e-5)

    def test_bounds(self):
        rng = np.random.default_rng(4)
        st = entropy_stats(rng.uniform(0, 1, size=500))
        assert np.all(st.entropies >= 0.0)
        assert np.all(st.entropies <= math.log(2.0) + 1e-15)

    def test_degenerate_probs_zero_entropy(self):
        st = entropy_stats([0.0, 1.0])
        assert np.allclose(st.entropies, 0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            entropy_stats([])


class TestSubgraphConstruction:
    def test_path_candidates(self, th1_expanded):
        # from target pair 1 = (node 1, edge 0) the one-hop candidates are
        # pair 0 (same edge) and pair 2 (same vertex)
        sg, traj = build_computation_subgraph(th1_expanded, [1], L=1, k=1, mode="random")
        assert traj.hops[0].candidates.tolist() == [0, 2]
        assert traj.hops[0].chosen.size == 1

    def test_path_full_block_layout(self, th1_expanded):
        sg, _ = build_computation_subgraph(th1_expanded, [1], L=1, k=1, mode="full")
        block = sg.blocks[0]
        assert block.out_nodes.tolist() == [1]
        assert block.in_nodes.tolist() == [1, 0, 2]
        # self first, then kept neighbors in ascending global order
        assert block.indices.tolist() == [0, 1, 2]
        assert np.allclose(block.weights, 1.0 / 3.0)

    def test_random_mode_log_pf_zero(self):
        g, H0, deg, policy = small_setup()
        sg, traj = build_computation_subgraph(g, [0, 5], L=2, k=2, mode="random", seed=4)
        assert traj.log_pf == 0.0
        assert all(h.probs.size == 0 for h in traj.hops)

    def test_adaptive_records_probs_and_log_pf(self):
        g, H0, deg, policy = small_setup()
        sg, traj = build_computation_subgraph(
            g, [0], L=2, k=2, mode="adaptive", policy=policy, seed=1, H0=H0, deg_norm=deg
        )
        assert len(traj.hops) == 2
        total = 0.0
        for hop in traj.hops:
            assert hop.probs.size == hop.candidates.size
            total += hop.log_pf
        assert traj.log_pf == pytest.approx(total, abs=1e-12)

    def test_support_growth_bound(self):
        g, H0, deg, policy = small_setup()
        k, L = 2, 2
        targets = np.array([0, 3, 9])
        sg, _ = build_computation_subgraph(
            g, targets, L=L, k=k, mode="adaptive", policy=policy, seed=7, H0=H0, deg_norm=deg
        )
        assert sg.sampled_node_count <= targets.size + L * k
        assert set(targets.tolist()) <= set(sg.support.tolist())

    def test_support_excludes_revisits(self):
        g, H0, deg, policy = small_setup()
        sg, traj = build_computation_subgraph(
            g, [0, 1, 2], L=3, k=3, mode="adaptive", policy=policy, seed=2, H0=H0, deg_norm=deg
        )
        support = sg.support
        assert np.unique(support).size == support.size
        seen = {0, 1, 2}
        for hop in traj.hops:
            assert not (set(hop.candidates.tolist()) & seen)
            seen |= set(hop.chosen.tolist())

    def test_validation_errors(self, th1_expanded):
        with pytest.raises(ValueError, match="nonempty"):
            build_computation_subgraph(th1_expanded, [], L=1, k=1, mode="full")
        with pytest.raises(ValueError, match="at least 1"):
            build_computation_subgraph(th1_expanded, [0], L=0, k=1, mode="full")
        with pytest.raises(ValueError, match="unknown sampling mode"):
            build_computation_subgraph(th1_expanded, [0], L=1, k=1, mode="greedy")
        with pytest.raises(ValueError, match="adaptive mode needs"):
            build_computation_subgraph(th1_expanded, [0], L=1, k=1, mode="adaptive")


class TestPolicyGradient:
    def rollouts(self, n=3):
        g, H0, deg, policy = small_setup(seed=5)
        rng = np.random.default_rng(3)
        for arr in policy.flat():
            arr += rng.standard_normal(arr.shape) * 0.2
        trajs = []
        for j in range(n):
            _, traj = build_computation_subgraph(
                g, [2 * j, 2 * j + 1], L=2, k=2, mode="adaptive",
                policy=policy, seed=[11, j], H0=H0, deg_norm=deg,
            )
            set_reward(traj, 0.3 + 0.4 * j, tau=1.0)
            trajs.append(traj)
        return policy, trajs, H0, deg

    def test_replay_matches_recorded_log_pf(self):
        policy, trajs, H0, deg = self.rollouts()
        wv, bv = [Var(w) for w in policy.weights], [Var(b) for b in policy.biases]
        for traj in trajs:
            lp = policy_log_pf_vars(None, wv, bv, traj, H0, deg)
            assert lp.value.item() == pytest.approx(traj.log_pf, abs=1e-9)

    def test_variance_gradient_matches_finite_differences(self):
        policy, trajs, H0, deg = self.rollouts()
        shapes = ModelParams(
            weights=[w.copy() for w in policy.weights],
            biases=[b.copy() for b in policy.biases],
        )

        def loss_fn(params):
            w0, b0, w1, b1 = params
            tape = Tape()
            wv = [Var(w0), Var(w1)]
            bv = [Var(b0), Var(b1)]
            lps = [policy_log_pf_vars(tape, wv, bv, t, H0, deg) for t in trajs]
            zetas = np.array([t.log_reward - lp.value.item() for t, lp in zip(trajs, lps)])
            loss, dz = variance_loss(zetas)
            total = None
            for lp, c in zip(lps, -dz):
                term = scale(tape, lp, float(c))
                total = term if total is None else add(tape, total, term)
            tape.backward(total)
            return loss, [wv[0].grad, bv[0].grad, wv[1].grad, bv[1].grad]

        params = [np.ascontiguousarray(p) for p in shapes.flat()]
        assert finite_difference_check(loss_fn, params, h=1e-6) < 1e-5
