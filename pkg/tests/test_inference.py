import itertools
import math

import numpy as np
import pytest

from topicblocks.evaluation import adjusted_rand_index
from topicblocks.graph import BipartiteMultigraph, state_from_label_arrays
from topicblocks.inference import (
    InferenceConfig,
    MutableLabeledState,
    NonoverlappingAgglomerator,
    block_polish,
    fit,
    fit_doc_anchored,
    fixed_label_score,
    greedy_sweep,
    grow_hierarchy,
    init_state,
    labels_to_state,
    mh_sweep,
    refine_doc_clusters,
    score_doc_anchored,
)
from topicblocks.lda import LabeledCounts, noninformative_hyper, sample_corpus
from topicblocks.microcanonical import joint_logp
from topicblocks.util import IntegrityError


def random_engine_state(rng, n_docs=3, n_words=3, doc_groups=2, word_groups=2):
    group_side = [0] * doc_groups + [1] * word_groups
    items = []
    for d in range(n_docs):
        for w in range(n_words):
            c = int(rng.integers(0, 3))
            if c:
                items.append((d, w, int(rng.integers(doc_groups)),
                              doc_groups + int(rng.integers(word_groups)), c))
    return MutableLabeledState(n_docs, n_words, items, group_side)


class TestEngineDeltaConsistency:
    def test_unit_moves_match_full_recompute(self):
        """After any accepted move the running total equals the from-scratch
        joint within tight tolerance."""
        rng = np.random.default_rng(7)
        st = random_engine_state(rng)
        worst = 0.0
        for _ in range(200):
            keys = sorted(st.bundles.keys())
            key = keys[int(rng.integers(len(keys)))]
            pairs = [p for p, m in st.bundles[key].items() if m > 0]
            pair = pairs[int(rng.integers(len(pairs)))]
            new = (int(rng.integers(2)), 2 + int(rng.integers(2)))
            before = st.sigma()
            delta = st.unit_move(key[0], key[1], pair, new)
            exact = st.score().sigma_nats
            worst = max(worst, abs(st.sigma() - exact), abs(before + delta - exact))
        assert worst < 1e-6

    def test_bulk_moves_and_undo(self):
        rng = np.random.default_rng(8)
        st = random_engine_state(rng, n_docs=4, n_words=4)
        before = st.sigma()
        delta, log = st.relabel_half_edges(1, 2 + 0, 2 + 1)
        assert abs((before + delta) - st.score().sigma_nats) < 1e-6
        st.undo(log)
        assert abs(st.sigma() - before) < 1e-6

    def test_node_move(self):
        rng = np.random.default_rng(9)
        st = random_engine_state(rng, n_docs=4, n_words=4)
        before = st.sigma()
        delta, log = st.relabel_node(0, 1, 0, 1)
        assert abs((before + delta) - st.score().sigma_nats) < 1e-6
        st.undo(log)
        assert abs(st.sigma() - before) < 1e-6

    def test_side_violation_rejected(self):
        rng = np.random.default_rng(10)
        st = random_engine_state(rng)
        key = sorted(st.bundles.keys())[0]
        pair = sorted(st.bundles[key].keys())[0]
        with pytest.raises(IntegrityError):
            st.unit_move(key[0], key[1], pair, (2, 0))


def planted_biclique_graph(mult=3):
    d_idx, w_idx, cnt = [], [], []
    for d in range(4):
        for w in range(4):
            d_idx.append(d); w_idx.append(w); cnt.append(mult)
    for d in range(4, 8):
        for w in range(4, 8):
            d_idx.append(d); w_idx.append(w); cnt.append(mult)
    return BipartiteMultigraph(8, 8, d_idx, w_idx, cnt)


class TestGreedyFit:
    def test_zero_temperature_rejects_uphill(self):
        rng = np.random.default_rng(0)
        st = random_engine_state(rng)
        before = st.sigma()
        mh_sweep(st, rng, temperature=0.0)
        assert st.sigma() <= before + 1e-9

    def test_greedy_sweep_never_increases(self):
        rng = np.random.default_rng(1)
        st = random_engine_state(rng, n_docs=4, n_words=4)
        for _ in range(3):
            before = st.sigma()
            greedy_sweep(st, rng)
            assert st.sigma() <= before + 1e-9

    def test_planted_bicliques_recovered(self):
        graph = planted_biclique_graph()
        cfg = InferenceConfig(mode="greedy", doc_clustering="clustered",
                              seed=3, n_restarts=3, n_sweeps=30)
        result = fit(graph, cfg)
        # dominant group per node
        groups = {}
        for i, j, r, s in zip(result.state.i, result.state.j,
                              result.state.r, result.state.s):
            groups.setdefault(int(i), []).append(int(r))
            groups.setdefault(int(j), []).append(int(s))
        doc_labels = [max(set(groups[d]), key=groups[d].count) for d in range(8)]
        word_labels = [max(set(groups[8 + w]), key=groups[8 + w].count)
                       for w in range(8)]
        truth = [0, 0, 0, 0, 1, 1, 1, 1]
        assert adjusted_rand_index(doc_labels, truth) == 1.0
        assert adjusted_rand_index(word_labels, truth) == 1.0

    def test_trace_nonincreasing(self):
        graph = planted_biclique_graph()
        cfg = InferenceConfig(mode="greedy", doc_clustering="clustered",
                              seed=5, n_restarts=2, n_sweeps=20)
        result = fit(graph, cfg)
        trace = result.sigma_trace
        assert all(a >= b - 1e-6 for a, b in zip(trace, trace[1:]))

    def test_fit_deterministic(self):
        graph = planted_biclique_graph()
        cfg = InferenceConfig(mode="greedy", doc_clustering="clustered",
                              seed=11, n_restarts=2, n_sweeps=15)
        a = fit(graph, cfg)
        b = fit(graph, cfg)
        assert a.sigma == b.sigma
        assert np.array_equal(a.state.r, b.state.r)

    def test_anneal_mode_runs(self):
        graph = planted_biclique_graph(mult=2)
        cfg = InferenceConfig(mode="anneal", doc_clustering="clustered",
                              seed=2, n_restarts=1, n_sweeps=10)
        result = fit(graph, cfg)
        assert np.isfinite(result.sigma)

    def test_empty_graph_trivial_model(self):
        graph = BipartiteMultigraph(2, 2, [], [], [])
        cfg = InferenceConfig(seed=0, n_restarts=1, n_sweeps=2)
        result = fit(graph, cfg)
        assert result.sigma == 0.0

    def test_per_doc_group_mode_keeps_docs_anchored(self):
        graph = planted_biclique_graph(mult=2)
        cfg = InferenceConfig(mode="greedy", doc_clustering="per-doc-group",
                              n_word_groups=2, seed=1, n_restarts=1, n_sweeps=10)
        state = init_state(graph, cfg)
        # every document's half-edges carry its own group
        for (d, w), cnt in state.bundles.items():
            for (rd, rw) in cnt:
                assert rd == d
        # total groups = D + K
        assert len(state.group_side) == 8 + 2


class TestMHChain:
    def test_stationary_distribution_via_transition_matrix(self):
        """One-move transition kernel has the labeled-state posterior as its
        stationary distribution (detailed balance holds exactly)."""
        edges = [(0, 0), (1, 1)]
        pairs = [(0, 2), (0, 3), (1, 2), (1, 3)]
        states = list(itertools.product(range(4), repeat=2))

        def sigma_of(assign):
            rd = [pairs[i][0] for i in assign]
            rw = [pairs[i][1] for i in assign]
            st = state_from_label_arrays(
                2, 2, [e[0] for e in edges], [e[1] for e in edges],
                rd, rw, [1, 1], 4, np.array([0, 0, 1, 1]))
            return joint_logp(st).sigma_nats

        sig = {s: sigma_of(s) for s in states}
        logw = np.array([-sig[s] for s in states])
        target = np.exp(logw - logw.max())
        target /= target.sum()
        n = len(states)
        T = np.zeros((n, n))
        for a_i, s in enumerate(states):
            for edge_i in range(2):
                for tgt in range(4):
                    s2 = list(s)
                    s2[edge_i] = tgt
                    s2 = tuple(s2)
                    b_i = states.index(s2)
                    q = 0.5 * 0.25
                    if s2 == s:
                        T[a_i, a_i] += q
                        continue
                    ratio = math.exp(-(sig[s2] - sig[s]))
                    acc = 0.5 if ratio == 1.0 else min(1.0, ratio)
                    T[a_i, b_i] += q * acc
                    T[a_i, a_i] += q * (1 - acc)
        flow = target[:, None] * T
        assert np.abs(flow - flow.T).max() < 1e-15
        stationary = np.real(np.linalg.matrix_power(T, 4096)[0])
        assert np.abs(stationary - target).max() < 1e-10


class TestFixedLabelScore:
    def test_k1_doc_clustering_two_groups(self):
        labels = LabeledCounts(3, 2, 1, [0, 1, 2], [0, 1, 0], [0, 0, 0], [2, 1, 1])
        st = labels_to_state(labels, "doc-clustering")
        assert st.n_groups == 2
        score = fixed_label_score(labels, "doc-clustering")
        assert np.isfinite(score.sigma_nats)

    def test_per_doc_group_counts(self):
        h = noninformative_hyper(3, 10)
        s = sample_corpus(3, 5, 10, 12, h, seed=0)
        st = labels_to_state(s.labels, "per-doc-group")
        assert st.n_groups == 5 + 3

    def test_deterministic(self):
        h = noninformative_hyper(2, 8)
        s = sample_corpus(2, 6, 8, 10, h, seed=1)
        a = fixed_label_score(s, "per-doc-group").sigma_nats
        b = fixed_label_score(s, "per-doc-group").sigma_nats
        assert a == b

    def test_topic_count_mismatch_rejected(self):
        h = noninformative_hyper(2, 8)
        s = sample_corpus(2, 4, 8, 6, h, seed=2)
        with pytest.raises(ValueError, match="topics"):
            fixed_label_score(s, "per-doc-group", n_topics=5)

    def test_unknown_variant_rejected(self):
        h = noninformative_hyper(2, 8)
        s = sample_corpus(2, 4, 8, 6, h, seed=3)
        with pytest.raises(ValueError):
            fixed_label_score(s, "nested-variant")


class TestAnchoredFitter:
    def test_trace_monotone_and_reaches_truth_quality(self):
        h = noninformative_hyper(2, 12)
        s = sample_corpus(2, 40, 12, 30, h, seed=4)
        dense = np.zeros((40, 12), dtype=np.int64)
        np.add.at(dense, (s.labels.d, s.labels.w), s.labels.counts)
        z, sigma, trace = fit_doc_anchored(dense, 2, seed=0, n_restarts=2,
                                           gibbs_sweeps=10)
        assert all(a >= b - 1e-9 for a, b in zip(trace, trace[1:]))
        assert abs(score_doc_anchored(z).sigma_nats - sigma) < 1e-9
        truth = fixed_label_score(s, "per-doc-group").sigma_nats
        assert sigma <= truth + 0.01 * abs(truth)

    def test_label_totals_preserved(self):
        rng = np.random.default_rng(5)
        dense = rng.integers(0, 4, size=(10, 6))
        z, _, _ = fit_doc_anchored(dense, 3, seed=1, n_restarts=1, gibbs_sweeps=5)
        assert np.array_equal(z.sum(axis=2), dense)


class TestAgglomerator:
    def test_sigma_matches_joint(self):
        rng = np.random.default_rng(0)
        counts = rng.integers(0, 5, size=(12, 9))
        da = rng.integers(0, 3, size=12)
        wa = rng.integers(0, 4, size=9)
        ag = NonoverlappingAgglomerator(counts, da, wa)
        da2, wa2 = ag.materialize()
        d_idx, w_idx = np.nonzero(counts)
        gd, gw = da2.max() + 1, wa2.max() + 1
        gs = np.concatenate([np.zeros(gd, np.int64), np.ones(gw, np.int64)])
        st = state_from_label_arrays(12, 9, d_idx, w_idx, da2[d_idx],
                                     gd + wa2[w_idx], counts[d_idx, w_idx],
                                     gd + gw, gs)
        assert abs(ag.sigma() - joint_logp(st).sigma_nats) < 1e-8

    def test_merge_delta_prediction(self):
        rng = np.random.default_rng(1)
        counts = rng.integers(0, 4, size=(10, 8))
        ag = NonoverlappingAgglomerator(counts, rng.integers(0, 3, size=10),
                                        rng.integers(0, 4, size=8))
        a, b = sorted(ag.tables[1])[:2]
        before = ag.sigma()
        predicted = ag._local_merge_delta(1, a, b) + ag._global_merge_delta(1)
        ag._apply_merge(1, a, b)
        assert abs((ag.sigma() - before) - predicted) < 1e-8

    def test_recovers_planted_bicliques_from_singletons(self):
        counts = np.zeros((8, 8), dtype=np.int64)
        counts[:4, :4] = 3
        counts[4:, 4:] = 3
        ag = NonoverlappingAgglomerator(counts, np.arange(8), np.arange(8))
        ag.greedy_merge()
        da, wa = ag.materialize()
        assert adjusted_rand_index(da, [0] * 4 + [1] * 4) == 1.0
        assert adjusted_rand_index(wa, [0] * 4 + [1] * 4) == 1.0

    def test_greedy_merge_never_increases(self):
        rng = np.random.default_rng(2)
        counts = rng.integers(0, 3, size=(15, 10))
        ag = NonoverlappingAgglomerator(counts, np.arange(15), np.arange(10))
        assert ag.greedy_merge() <= 1e-9


class TestHierarchyGrowth:
    def test_identity_level_never_kept_without_gain(self):
        st = state_from_label_arrays(2, 2, [0, 1], [0, 1], [0, 1], [2, 3],
                                     [1, 1], 4, [0, 0, 1, 1])
        hierarchy, score = grow_hierarchy(st, max_levels=3)
        flat = joint_logp(st).sigma_nats
        assert score.sigma_nats <= flat + 1e-9

    def test_respects_depth_cap(self):
        graph = planted_biclique_graph()
        cfg = InferenceConfig(mode="greedy", doc_clustering="clustered",
                              seed=3, n_restarts=1, n_sweeps=10, max_levels=1)
        result = fit(graph, cfg)
        assert result.hierarchy.depth == 1


class TestRefineDocClusters:
    def test_preserves_topic_mixtures_and_improves(self):
        h = noninformative_hyper(2, 10)
        s = sample_corpus(2, 30, 10, 25, h, seed=6)
        dense = np.zeros((30, 10), dtype=np.int64)
        np.add.at(dense, (s.labels.d, s.labels.w), s.labels.counts)
        z, sigma_anchored, _ = fit_doc_anchored(dense, 2, seed=0, n_restarts=1,
                                                gibbs_sweeps=5)
        score, meta = refine_doc_clusters(z, seed=0, doc_grid=(1, 2, 3),
                                          grow_levels=2, polish_sweeps=1)
        assert score.sigma_nats <= sigma_anchored + 1e-9


class TestBlockPolish:
    def test_polish_never_increases_and_stays_exact(self):
        rng = np.random.default_rng(3)
        st = random_engine_state(rng, n_docs=5, n_words=5, doc_groups=3,
                                 word_groups=3)
        before = st.sigma()
        block_polish(st, max_sweeps=2)
        assert st.sigma() <= before + 1e-9
        assert abs(st.sigma() - st.score().sigma_nats) < 1e-6
