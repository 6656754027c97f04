import itertools

import numpy as np
import pytest

from netconsensus import data, gossip, sbm


def complete_graph(n):
    edges = np.array(list(itertools.combinations(range(n), 2)))
    return sbm.Network(n, edges, np.zeros(n, dtype=np.int64), [n])


def make_state(w, shard_size=4, seed=0):
    w = np.asarray(w, dtype=float)
    return gossip.NodeState(
        w=w.copy(), s=w.copy(), psw=1.0,
        local_indices=np.arange(shard_size), rng=np.random.default_rng(seed),
    )


class TestPegasosStep:
    def test_margin_satisfied_pure_shrinkage(self):
        X = np.array([[1.0, 0.0]])
        y = np.array([1])
        state = make_state([5.0, 2.0], shard_size=1)
        gossip.pegasos_step(state, X, y, nu=0.1, t=5)
        # margin = 5 >= 1, so only the (1 - 1/t) shrink applies
        assert state.w == pytest.approx([4.0, 1.6])

    def test_first_step_from_zero(self):
        X = np.array([[2.0, -1.0]])
        y = np.array([-1])
        state = make_state([0.0, 0.0], shard_size=1)
        gossip.pegasos_step(state, X, y, nu=0.25, t=1)
        assert state.w == pytest.approx([-8.0, 4.0])

    def test_toy_separable_set_learned(self):
        ds = data.make_blobs(20, 2, margin=6.0, seed=7)
        X, y = ds.X.toarray(), ds.y
        state = make_state([0.0, 0.0], shard_size=20, seed=1)
        for _ in range(1000):
            gossip.pegasos_step(state, X, y, nu=0.1)
        assert gossip.accuracy(state.w, X, y) == 1.0

    def test_empty_shard_rejected(self):
        state = gossip.NodeState(
            w=np.zeros(2), s=np.zeros(2), psw=1.0,
            local_indices=np.arange(0), rng=np.random.default_rng(0),
        )
        with pytest.raises(ValueError):
            gossip.pegasos_step(state, np.zeros((0, 2)), np.zeros(0), nu=0.1)

    def test_step_counter_advances(self):
        ds = data.make_blobs(8, 2, margin=2.0, seed=0)
        state = make_state([0.0, 0.0], shard_size=8)
        gossip.pegasos_step(state, ds.X.toarray(), ds.y, nu=0.1)
        gossip.pegasos_step(state, ds.X.toarray(), ds.y, nu=0.1)
        assert state.step_count == 2


class TestPushSum:
    def test_single_node_estimate_is_own_weight(self):
        net = sbm.Network(1, np.empty((0, 2)), np.zeros(1, dtype=np.int64), [1])
        state = make_state([3.0, -1.0])
        gossip.push_sum_round([state], net)
        assert state.estimate == pytest.approx([3.0, -1.0])
        assert state.psw == pytest.approx(1.0)

    def test_two_node_hand_simulation(self):
        net = sbm.Network(2, np.array([[0, 1]]), np.zeros(2, dtype=np.int64), [2])
        states = [make_state([0.0]), make_state([1.0])]
        gossip.push_sum_round(states, net)
        assert states[0].s == pytest.approx([0.5])
        assert states[1].s == pytest.approx([0.5])
        assert states[0].psw == pytest.approx(1.0)
        assert states[1].psw == pytest.approx(1.0)
        assert states[0].estimate == pytest.approx([0.5])
        assert states[1].estimate == pytest.approx([0.5])

    def test_mass_conserved_every_round(self):
        model = sbm.make_two_level_model([20, 30], sbm.TwoLevelProbs(0.5, 0.1), 3)
        net, _ = sbm.sample_connected(model)
        rng = np.random.default_rng(0)
        init = rng.normal(size=(net.n, 3))
        states = [make_state(init[i], seed=i) for i in range(net.n)]
        total_s = init.sum(axis=0)
        mix = gossip.mixing_matrix(net)
        for _ in range(100):
            gossip.push_sum_round(states, net, mix=mix)
            s_now = np.sum([st.s for st in states], axis=0)
            w_now = sum(st.psw for st in states)
            assert np.abs(s_now - total_s).max() < 1e-10 * np.abs(total_s).max()
            assert w_now == pytest.approx(net.n, rel=1e-10)

    def test_frozen_estimates_converge_to_average_at_mixing_rate(self):
        model = sbm.make_two_level_model([25, 25], sbm.TwoLevelProbs(0.6, 0.15), 1)
        net, _ = sbm.sample_connected(model)
        rng = np.random.default_rng(5)
        init = rng.random((net.n, 2))
        states = [make_state(init[i], seed=i) for i in range(net.n)]
        mix = gossip.mixing_matrix(net)
        target = init.mean(axis=0)
        mu = np.sort(np.abs(np.linalg.eigvals(mix.toarray())))[-2]
        errors = []
        for _ in range(160):
            gossip.push_sum_round(states, net, mix=mix)
            est = np.stack([st.estimate for st in states])
            errors.append(np.abs(est - target).max())
        errors = np.array(errors)
        assert errors[-1] < 1e-10
        usable = errors[(errors > 1e-11) & (errors < 1e-2)]
        rates = usable[1:] / usable[:-1]
        geo = float(np.exp(np.mean(np.log(rates))))
        assert geo == pytest.approx(mu, rel=0.10)

    def test_mixing_matrix_column_stochastic(self):
        net, _ = sbm.sample_connected(sbm.make_two_level_model([10, 10], sbm.TwoLevelProbs(0.6, 0.2), 4))
        mix = gossip.mixing_matrix(net)
        assert np.abs(np.asarray(mix.sum(axis=0)).ravel() - 1.0).max() < 1e-12


class TestRunGadget:
    def test_symmetric_nodes_agree_after_first_mixing(self):
        # identical shards, identical seeds, complete graph: exact symmetry
        ds = data.make_blobs(12, 3, margin=2.0, seed=1)
        X, y = ds.X.toarray(), ds.y
        n = 5
        states = [make_state(np.zeros(3), shard_size=12, seed=99) for _ in range(n)]
        net = complete_graph(n)
        mix = gossip.mixing_matrix(net)
        for st in states:
            gossip.pegasos_step(st, X, y, nu=0.1)
            st.s = st.w * st.psw
        gossip.push_sum_round(states, net, mix=mix)
        weights = np.stack([st.estimate for st in states])
        assert gossip.max_pairwise_gap(weights) == 0.0

    def test_stopping_soundness_exact_recheck(self):
        model = sbm.make_two_level_model([10, 15], sbm.TwoLevelProbs(0.8, 0.3), 2)
        ds = data.make_blobs(400, 6, margin=2.0, seed=3)
        cfg = gossip.GadgetConfig(nu=0.1, epsilon=1e-10, max_rounds=20_000, learning_rounds=50, seed=4)
        run = gossip.run_gadget(model, ds, cfg)
        assert not run.censored
        brute = 0.0
        for i in range(run.node_weights.shape[0]):
            for j in range(i + 1, run.node_weights.shape[0]):
                brute = max(brute, float(np.linalg.norm(run.node_weights[i] - run.node_weights[j])))
        assert brute < cfg.epsilon
        assert run.max_pairwise_gap_trace[-1] == pytest.approx(brute, rel=1e-6, abs=1e-15)

    def test_objective_dominates_regularizer(self):
        ds = data.make_blobs(300, 5, margin=1.0, seed=6)
        model = sbm.make_two_level_model([12, 12], sbm.TwoLevelProbs(0.8, 0.4), 1)
        cfg = gossip.GadgetConfig(nu=0.2, epsilon=1e-8, max_rounds=5000, learning_rounds=40, seed=2)
        run = gossip.run_gadget(model, ds, cfg)
        w = run.final_weights
        assert np.isfinite(run.final_objective)
        assert run.final_objective >= 0.5 * 0.2 * float(w @ w) - 1e-12

    def test_matches_single_node_oracle_on_pooled_data(self):
        # decentralized training should not lose more than 2 accuracy points
        # against plain single-node subgradient descent on the pooled data
        ds = data.make_blobs(600, 8, margin=3.0, seed=8)
        X, y = ds.X.toarray(), ds.y
        rng = np.random.default_rng(0)
        w = np.zeros(8)
        for t in range(1, 3001):
            i = int(rng.integers(600))
            eta = 1.0 / (0.1 * t)
            margin = y[i] * float(w @ X[i])
            w *= 1.0 - eta * 0.1
            if margin < 1.0:
                w += eta * y[i] * X[i]
        oracle_acc = gossip.accuracy(w, X, y)

        model = sbm.make_two_level_model([30], sbm.TwoLevelProbs(0.9, 0.9), 5)
        cfg = gossip.GadgetConfig(nu=0.1, epsilon=1e-8, max_rounds=10_000, learning_rounds=100, seed=6)
        run = gossip.run_gadget(model, ds, cfg, test_dataset=ds)
        assert gossip.accuracy(run.final_weights, X, y) >= oracle_acc - 0.02

    def test_dataset_smaller_than_network_rejected(self):
        ds = data.make_blobs(10, 3, margin=1.0, seed=0)
        model = sbm.make_two_level_model([30], sbm.TwoLevelProbs(0.9, 0.9), 0)
        with pytest.raises(ValueError, match="shard"):
            gossip.run_gadget(model, ds, gossip.GadgetConfig(nu=0.1, epsilon=1e-6, max_rounds=10))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            gossip.GadgetConfig(nu=0.0, epsilon=1e-6, max_rounds=10)
        with pytest.raises(ValueError):
            gossip.GadgetConfig(nu=0.1, epsilon=0.0, max_rounds=10)

    def test_deterministic_given_seeds(self):
        ds = data.make_blobs(200, 4, margin=2.0, seed=1)
        model = sbm.make_two_level_model([8, 8], sbm.TwoLevelProbs(0.9, 0.5), 3)
        cfg = gossip.GadgetConfig(nu=0.1, epsilon=1e-9, max_rounds=5000, learning_rounds=30, seed=7)
        a = gossip.run_gadget(model, ds, cfg)
        b = gossip.run_gadget(model, ds, cfg)
        assert a.rounds_to_consensus == b.rounds_to_consensus
        assert np.array_equal(a.final_weights, b.final_weights)
