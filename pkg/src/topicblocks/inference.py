"""Search over labeled states: greedy descent, simulated annealing, and
Metropolis-Hastings sampling of half-edge label assignments.

The mutable engine keeps sparse count aggregates (bundle counts, labeled
degrees, group-pair totals, per-side mixture tables) and returns the exact
change of the description length for every unit move, where a unit move
relabels one half-edge pair of one word-document bundle.  Bulk operations
(node relabelings, group merges and splits) are logged sequences of unit
moves, so any proposal can be evaluated and reverted exactly.  The engine's
running total is required to match a from-scratch evaluation of the joint,
and the test suite enforces that.

Document-anchored fits (every document pinned to its own group, the labeled
states whose mixtures read directly as topic proportions) additionally get a
vectorized batch optimizer that proposes whole-bundle reassignments from
count tables and accepts a batch only when the exactly rescored description
length improves, so greedy traces stay monotone at corpus scale.
"""
from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .graph import LabeledGraph, state_from_label_arrays
from .lda import LabeledCounts, LdaSample
from .microcanonical import (
    Hierarchy,
    SideStats,
    joint_logp,
    logp_degrees_given_mixtures,
    logp_overlap_partition,
)
from .scores import ModelScore
from .util import (
    IntegrityError,
    log_factorial,
    log_num_compositions,
    log_num_compositions_large,
)


@dataclass
class InferenceConfig:
    mode: str = "greedy"               # greedy | anneal | mcmc
    doc_clustering: str = "clustered"  # per-doc-group | clustered
    overlap: int | None = None         # max groups per node mixture; None = unbounded
    n_word_groups: int | None = None   # word-side group cap (per-doc-group mode)
    seed: int = 0
    n_sweeps: int = 200
    n_restarts: int = 10
    temperature_start: float = 1.0
    temperature_end: float = 1e-3
    convergence_window: int = 50
    convergence_tol: float = 0.1
    max_levels: int = 1

    def __post_init__(self):
        if self.n_sweeps <= 0 or self.n_restarts <= 0:
            raise ValueError("sweep and restart counts must be positive")
        if self.temperature_end > self.temperature_start:
            raise ValueError("temperature schedule must be nonincreasing")


@dataclass
class FitResult:
    state: LabeledGraph
    hierarchy: Hierarchy
    score: ModelScore
    sigma_trace: list[float] = field(default_factory=list)
    acceptance: dict = field(default_factory=dict)
    wall_time: float = 0.0
    converged: bool = True
    seed: int = 0

    @property
    def sigma(self) -> float:
        return self.score.sigma_nats


class MutableLabeledState:
    """Bipartite labeled state with exact incremental description length.

    Group ids are global; `group_side[g]` is 0 for document groups and 1 for
    word groups.  Groups may be empty transiently; every score uses occupied
    groups only, matching the compressed from-scratch evaluation.
    """

    def __init__(self, n_docs, n_words, bundle_items, group_side, overlap=None):
        self.n_docs = int(n_docs)
        self.n_words = int(n_words)
        self.group_side = list(group_side)
        self.overlap = overlap
        self.bundles: dict[tuple, Counter] = {}
        self.k: Counter = Counter()          # (node, group) -> labeled degree
        self.e_pair: Counter = Counter()     # (doc group, word group) -> count
        self.E = 0
        self.sides = (SideStats(n_groups=0), SideStats(n_groups=0))
        self.node_mixture: dict[int, tuple] = {}
        self._log_xi = 0.0        # sum lg k! - sum lg m!
        self._log_omega = 0.0     # sum lg e_r! - sum lg e_rs!
        self._e_r: Counter = Counter()
        self._side_terms = [0.0, 0.0]
        for (d, w, rd, rw, m) in bundle_items:
            self._bundle_add(int(d), int(w), int(rd), int(rw), int(m))
        for side in (0, 1):
            self._refresh_side(side)

    # -- low-level bookkeeping ------------------------------------------

    def _node(self, side, idx):
        return idx if side == 0 else self.n_docs + idx

    def _bundle_add(self, d, w, rd, rw, m):
        if self.group_side[rd] != 0 or self.group_side[rw] != 1:
            raise IntegrityError("bundle labels must be (document group, word group)")
        cnt = self.bundles.setdefault((d, w), Counter())
        old = cnt[(rd, rw)]
        cnt[(rd, rw)] = old + m
        self._log_xi -= float(log_factorial(old + m) - log_factorial(old))
        old_e = self.e_pair[(rd, rw)]
        self.e_pair[(rd, rw)] = old_e + m
        self._log_omega -= float(log_factorial(old_e + m) - log_factorial(old_e))
        self.E += m
        self._degree_change(0, d, rd, m)
        self._degree_change(1, w, rw, m)

    def _degree_change(self, side, idx, group, dk):
        """Adjust one labeled degree, keeping the mixture tables consistent by
        detaching the node, applying the change, and reattaching it."""
        node = self._node(side, idx)
        st = self.sides[side]
        old_mix = self.node_mixture.get(node, ())
        if old_mix:
            st.n_eff -= 1
            st.size_hist[len(old_mix)] -= 1
            if st.size_hist[len(old_mix)] == 0:
                del st.size_hist[len(old_mix)]
            st.mixture_count[old_mix] -= 1
            if st.mixture_count[old_mix] == 0:
                del st.mixture_count[old_mix]
                for g in old_mix:
                    st.m_r[g] -= 1
                    if st.m_r[g] == 0:
                        del st.m_r[g]
            for g in old_mix:
                kv = self.k[(node, g)]
                st.e_mix[(old_mix, g)] -= kv
                if st.e_mix[(old_mix, g)] == 0:
                    del st.e_mix[(old_mix, g)]
                freq = st.deg_freq[(old_mix, g)]
                freq[kv] -= 1
                if freq[kv] == 0:
                    del freq[kv]
                if not freq:
                    del st.deg_freq[(old_mix, g)]
                st.members_with[g] -= 1
                if st.members_with[g] == 0:
                    del st.members_with[g]
        old_k = self.k[(node, group)]
        new_k = old_k + dk
        if new_k < 0:
            raise IntegrityError(f"labeled degree of node {node} went negative")
        self._log_xi += float(log_factorial(new_k) - log_factorial(old_k))
        if new_k == 0:
            del self.k[(node, group)]
        else:
            self.k[(node, group)] = new_k
        old_er = self._e_r[group]
        new_er = old_er + dk
        self._log_omega += float(log_factorial(new_er) - log_factorial(old_er))
        if new_er == 0:
            del self._e_r[group]
            if group in st.e_r:
                del st.e_r[group]
        else:
            self._e_r[group] = new_er
            st.e_r[group] = new_er
        new_mix = tuple(sorted(g for g in set(old_mix) | {group} if self.k[(node, g)] > 0))
        if new_mix:
            self.node_mixture[node] = new_mix
            st.n_eff += 1
            st.size_hist[len(new_mix)] += 1
            if st.mixture_count[new_mix] == 0:
                for g in new_mix:
                    st.m_r[g] += 1
            st.mixture_count[new_mix] += 1
            for g in new_mix:
                kv = self.k[(node, g)]
                st.e_mix[(new_mix, g)] = st.e_mix.get((new_mix, g), 0) + kv
                st.deg_freq.setdefault((new_mix, g), Counter())[kv] += 1
                st.members_with[g] += 1
        else:
            self.node_mixture.pop(node, None)

    def _refresh_side(self, side):
        st = self.sides[side]
        st.n_groups = len(st.e_r)
        term = 0.0
        if st.n_eff:
            term -= logp_overlap_partition(st, self.overlap)
            term -= logp_degrees_given_mixtures({side: st})
        self._side_terms[side] = term

    # -- description length ----------------------------------------------

    def occupied(self, side=None) -> int:
        if side is None:
            return len(self._e_r)
        return len(self.sides[side].e_r)

    def _geom_term(self) -> float:
        B = self.occupied()
        E = self.E
        if B == 0 or E == 0:
            return 0.0
        omega = 2.0 * E / (B * (B + 1))
        return -(E * math.log(omega) - (E + B * (B + 1) / 2.0) * math.log1p(omega))

    def sigma(self) -> float:
        return (
            self._log_omega
            - self._log_xi
            + self._side_terms[0]
            + self._side_terms[1]
            + self._geom_term()
        )

    def unit_move(self, d, w, old_pair, new_pair) -> float:
        """Relabel one half-edge pair of bundle (d, w); returns the exact
        change in description length.  The inverse call undoes the move."""
        return self.move_mass(d, w, old_pair, new_pair, 1)

    def move_mass(self, d, w, old_pair, new_pair, mass: int, refresh: bool = True) -> float:
        """Relabel `mass` half-edge pairs of bundle (d, w) at once; returns
        the exact change in description length.

        `refresh=False` defers the per-side term recomputation (and returns
        0.0); bulk operations batch many mass moves and refresh once.
        """
        if old_pair == new_pair or mass == 0:
            return 0.0
        before = self.sigma() if refresh else 0.0
        cnt = self.bundles[(d, w)]
        if cnt[old_pair] < mass:
            raise IntegrityError(f"bundle ({d}, {w}) holds no {mass} x {old_pair}")
        rd, rw = old_pair
        rd2, rw2 = new_pair
        if self.group_side[rd2] != 0 or self.group_side[rw2] != 1:
            raise IntegrityError("target labels must respect node sides")
        old_c = cnt[old_pair]
        new_c = cnt[new_pair]
        self._log_xi -= (
            log_factorial(old_c - mass) - log_factorial(old_c)
            + log_factorial(new_c + mass) - log_factorial(new_c)
        )
        cnt[old_pair] = old_c - mass
        if cnt[old_pair] == 0:
            del cnt[old_pair]
        cnt[new_pair] = new_c + mass
        for pair, delta in ((old_pair, -mass), (new_pair, +mass)):
            old_e = self.e_pair[pair]
            self._log_omega -= log_factorial(old_e + delta) - log_factorial(old_e)
            self.e_pair[pair] = old_e + delta
            if self.e_pair[pair] == 0:
                del self.e_pair[pair]
        if rd != rd2:
            self._degree_change(0, d, rd, -mass)
            self._degree_change(0, d, rd2, +mass)
            if refresh:
                self._refresh_side(0)
        if rw != rw2:
            self._degree_change(1, w, rw, -mass)
            self._degree_change(1, w, rw2, +mass)
            if refresh:
                self._refresh_side(1)
        if not refresh:
            return 0.0
        return self.sigma() - before

    def add_group(self, side) -> int:
        self.group_side.append(side)
        return len(self.group_side) - 1

    # -- bulk proposals with undo logs -------------------------------------

    def _bulk_moves(self, moves):
        """Apply (key, old pair, new pair, mass) moves with one side refresh;
        returns (exact delta, undo log)."""
        before = self.sigma()
        touched = set()
        log = []
        for key, pair, target, m in moves:
            self.move_mass(key[0], key[1], pair, target, m, refresh=False)
            log.append((key, pair, target, m))
            if pair[0] != target[0]:
                touched.add(0)
            if pair[1] != target[1]:
                touched.add(1)
        for side in touched:
            self._refresh_side(side)
        return self.sigma() - before, log

    def relabel_half_edges(self, side, g_from, g_to):
        """Move every half-edge labeled g_from to g_to (a merge when g_to is
        occupied).  Returns (delta, undo log)."""
        moves = []
        for key in sorted(self.bundles.keys()):
            cnt = self.bundles[key]
            for pair in sorted(cnt.keys()):
                m = cnt.get(pair, 0)
                if m <= 0:
                    continue
                if side == 0 and pair[0] == g_from:
                    target = (g_to, pair[1])
                elif side == 1 and pair[1] == g_from:
                    target = (pair[0], g_to)
                else:
                    continue
                moves.append((key, pair, target, m))
        return self._bulk_moves(moves)

    def relabel_node(self, side, idx, g_from, g_to, keys=None):
        """Move one node's g_from half-edges to g_to (mixture move).  `keys`
        may carry the node's bundle keys to skip the full scan."""
        if keys is None:
            keys = [k for k in sorted(self.bundles.keys()) if k[side] == idx]
        moves = []
        for key in keys:
            cnt = self.bundles[key]
            for pair in sorted(cnt.keys()):
                m = cnt.get(pair, 0)
                if m <= 0 or pair[side] != g_from:
                    continue
                target = (g_to, pair[1]) if side == 0 else (pair[0], g_to)
                moves.append((key, pair, target, m))
        return self._bulk_moves(moves)

    def undo(self, log):
        moves = [(key, target, pair, m) for key, pair, target, m in reversed(log)]
        self._bulk_moves(moves)

    # -- conversions ------------------------------------------------------

    def to_labeled_graph(self) -> LabeledGraph:
        rows = []
        for (d, w), cnt in sorted(self.bundles.items()):
            for (rd, rw), m in sorted(cnt.items()):
                if m > 0:
                    rows.append((d, w, rd, rw, m))
        if rows:
            d, w, rd, rw, m = (np.asarray(col, dtype=np.int64) for col in zip(*rows))
        else:
            d = w = rd = rw = m = np.zeros(0, dtype=np.int64)
        return state_from_label_arrays(
            self.n_docs, self.n_words, d, w, rd, rw, m,
            len(self.group_side), np.asarray(self.group_side, dtype=np.int64),
        )

    def score(self) -> ModelScore:
        return joint_logp(self.to_labeled_graph(), max_overlap=self.overlap)

    def doc_groups(self):
        return sorted(self.sides[0].e_r)

    def word_groups(self):
        return sorted(self.sides[1].e_r)


# --- initialization ---------------------------------------------------------


def init_state(graph, config: InferenceConfig, rng=None) -> MutableLabeledState:
    """Side-respecting initial labeling.

    per-doc-group mode pins document d to its own group and spreads word
    half-edges over `n_word_groups` random labels; clustered mode seeds one
    group per node on both sides, which the merge moves then coarsen.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    D, V = graph.n_docs, graph.n_words
    items = []
    if config.doc_clustering == "per-doc-group":
        K = config.n_word_groups or 2
        group_side = [0] * D + [1] * K
        for d, w, c in zip(graph.doc_idx, graph.word_idx, graph.counts):
            split = rng.multinomial(int(c), np.full(K, 1.0 / K))
            for r in np.nonzero(split)[0]:
                items.append((int(d), int(w), int(d), D + int(r), int(split[r])))
    elif config.doc_clustering == "clustered":
        group_side = [0] * D + [1] * V
        for d, w, c in zip(graph.doc_idx, graph.word_idx, graph.counts):
            items.append((int(d), int(w), int(d), D + int(w), int(c)))
    else:
        raise ValueError(f"unknown doc_clustering mode {config.doc_clustering!r}")
    return MutableLabeledState(D, V, items, group_side, overlap=config.overlap)


# --- sweeps ------------------------------------------------------------------


def greedy_sweep(state: MutableLabeledState, rng, doc_anchored=False) -> dict:
    """One greedy pass over all bundles: move one unit of each label pair to
    its best alternative, accepting only strict improvements (ties rejected)."""
    accepted = 0
    proposed = 0
    keys = sorted(state.bundles.keys())
    rng.shuffle(keys)
    for key in keys:
        d, w = key
        for pair in sorted(state.bundles[key].keys()):
            if state.bundles[key].get(pair, 0) <= 0:
                continue
            word_targets = state.word_groups()
            doc_targets = [pair[0]] if doc_anchored else state.doc_groups()
            best = None
            for rd2 in doc_targets:
                for rw2 in word_targets:
                    cand = (rd2, rw2)
                    if cand == pair:
                        continue
                    proposed += 1
                    delta = state.unit_move(d, w, pair, cand)
                    if delta < -1e-12 and (best is None or delta < best[0]):
                        best = (delta, cand)
                    state.unit_move(d, w, cand, pair)
            if best is not None:
                state.unit_move(d, w, pair, best[1])
                accepted += 1
    return {"proposed": proposed, "accepted": accepted}


def mh_sweep(state: MutableLabeledState, rng, temperature=1.0,
             doc_labels=None, word_labels=None) -> dict:
    """E Metropolis-Hastings unit proposals at the given temperature.

    A unit is picked proportionally to bundle label mass and sent to a
    uniform label pair, so the acceptance carries the count-ratio correction
    that makes the chain target exp(-sigma) over labeled states.  Proposals
    with ratio exactly one are accepted with probability one half; at zero
    temperature only strict improvements pass.
    """
    doc_labels = doc_labels if doc_labels is not None else state.doc_groups()
    word_labels = word_labels if word_labels is not None else state.word_groups()
    accepted = 0
    keys = sorted(state.bundles.keys())
    totals = np.array([sum(state.bundles[k].values()) for k in keys], dtype=float)
    cum = np.cumsum(totals / totals.sum())
    n_props = state.E
    for _ in range(n_props):
        key = keys[int(np.searchsorted(cum, rng.random(), side="right"))]
        cnt = state.bundles[key]
        pairs = sorted(cnt.keys())
        mass = np.array([cnt[p] for p in pairs], dtype=float)
        pair = pairs[int(rng.choice(len(pairs), p=mass / mass.sum()))]
        new_pair = (
            doc_labels[int(rng.integers(len(doc_labels)))],
            word_labels[int(rng.integers(len(word_labels)))],
        )
        if new_pair == pair:
            continue
        old_c = cnt[pair]
        new_c = cnt.get(new_pair, 0)
        delta = state.unit_move(key[0], key[1], pair, new_pair)
        if temperature <= 0:
            ok = delta < 0
        else:
            ratio = math.exp(min(700.0, -delta / temperature)) * (new_c + 1.0) / old_c
            ok = (rng.random() < 0.5) if ratio == 1.0 else (rng.random() < min(1.0, ratio))
        if ok:
            accepted += 1
        else:
            state.unit_move(key[0], key[1], new_pair, pair)
    return {"proposed": n_props, "accepted": accepted}


def best_merge_pass(state: MutableLabeledState, sides=(0, 1)) -> float:
    """Scan same-side group pairs, applying the best strictly improving merge
    per side until none helps; every evaluation is reverted via its log."""
    total = 0.0
    improved = True
    while improved:
        improved = False
        for side in sides:
            groups = state.doc_groups() if side == 0 else state.word_groups()
            best = None
            for ai in range(len(groups)):
                for bi in range(ai + 1, len(groups)):
                    delta, log = state.relabel_half_edges(side, groups[ai], groups[bi])
                    if delta < -1e-9 and (best is None or delta < best[0]):
                        best = (delta, groups[ai], groups[bi])
                    state.undo(log)
            if best is not None:
                delta, _ = state.relabel_half_edges(side, best[1], best[2])
                total += delta
                improved = True
    return total


def split_pass(state: MutableLabeledState, rng, sides=(0, 1)) -> float:
    """Propose splitting each group by 2-means on member nodes' neighbor
    profiles; keep splits that strictly lower the description length."""
    total = 0.0
    for side in sides:
        groups = list(state.doc_groups() if side == 0 else state.word_groups())
        for g in groups:
            members = sorted({
                (key[side]) for key in state.bundles
                for pair in state.bundles[key]
                if pair[side] == g and state.bundles[key][pair] > 0
            })
            if len(members) < 2:
                continue
            profiles = {}
            for key in sorted(state.bundles.keys()):
                if key[side] not in members:
                    continue
                for pair, m in state.bundles[key].items():
                    if pair[side] != g or m <= 0:
                        continue
                    other = pair[1 - side]
                    profiles.setdefault(key[side], Counter())[other] += m
            cols = sorted({c for p in profiles.values() for c in p})
            mat = np.array([[profiles.get(i, Counter()).get(c, 0) for c in cols]
                            for i in members], dtype=float)
            norms = mat.sum(axis=1, keepdims=True)
            mat = mat / np.maximum(norms, 1.0)
            assign = _two_means(mat, rng)
            if assign.min() == assign.max():
                continue
            fresh = state.add_group(side)
            delta = 0.0
            log = []
            for i, a in zip(members, assign):
                if a == 1:
                    dd, ll = state.relabel_node(side, i, g, fresh)
                    delta += dd
                    log.extend(ll)
            if delta < -1e-9:
                total += delta
            else:
                state.undo(log)
    return total


def _two_means(mat, rng, iters=20):
    n = mat.shape[0]
    centers = mat[rng.choice(n, size=2, replace=False)]
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        dist = ((mat[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = dist.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in (0, 1):
            if np.any(assign == c):
                centers[c] = mat[assign == c].mean(axis=0)
    return assign


# --- hierarchy search --------------------------------------------------------


def grow_hierarchy(state: LabeledGraph, max_levels: int,
                   max_overlap=None) -> tuple[Hierarchy, ModelScore]:
    """Greedy level growing: add an identity level on top, agglomerate its
    groups while the joint improves, keep the level only if it pays for
    itself.  Repeats until no level helps or the depth cap is reached.

    Only the edge-matrix stack changes during the search, so candidates are
    rescored through that term alone; the full joint is assembled once at the
    end.
    """
    from .microcanonical import CountTables, compress_groups, logp_hierarchy

    state = compress_groups(state)
    tables = CountTables(state)
    e_base = tables.dense_e()
    E = tables.E

    def edge_term(assignments):
        return -logp_hierarchy(e_base, assignments, state.group_side, E=E)

    hierarchy = Hierarchy()
    best_term = edge_term([])
    while hierarchy.depth < max_levels:
        prev_n = (
            state.n_groups if not hierarchy.assignments
            else int(np.max(hierarchy.assignments[-1])) + 1
        )
        trial = hierarchy.assignments + [np.arange(prev_n, dtype=np.int64)]
        trial_term = edge_term(trial)
        improved = True
        while improved:
            improved = False
            assignment = trial[-1]
            coarse = np.unique(assignment)
            cand_best = None
            for ai in range(len(coarse)):
                for bi in range(ai + 1, len(coarse)):
                    merged = assignment.copy()
                    merged[merged == coarse[bi]] = coarse[ai]
                    _, merged = np.unique(merged, return_inverse=True)
                    try:
                        term = edge_term(trial[:-1] + [merged])
                    except IntegrityError:
                        continue
                    if term < trial_term - 1e-9 and (
                        cand_best is None or term < cand_best[0]
                    ):
                        cand_best = (term, merged)
            if cand_best is not None:
                trial_term = cand_best[0]
                trial = trial[:-1] + [cand_best[1]]
                improved = True
        if trial_term < best_term - 1e-9:
            hierarchy = Hierarchy(trial)
            best_term = trial_term
        else:
            break
    return hierarchy, joint_logp(state, hierarchy, max_overlap=max_overlap)


# --- full fits ---------------------------------------------------------------


def _fit_one_restart(graph, config: InferenceConfig, ridx: int, seq) -> FitResult:
    rng = np.random.default_rng(seq)
    state = init_state(graph, config, rng)
    trace = [state.sigma()]
    stats = Counter()
    converged = False
    doc_anchored = config.doc_clustering == "per-doc-group"
    if config.mode in ("anneal", "mcmc"):
        if config.mode == "anneal":
            temps = np.geomspace(
                max(config.temperature_start, 1e-6),
                max(config.temperature_end, 1e-6),
                num=min(config.n_sweeps, 20),
            )
        else:
            temps = np.full(min(config.n_sweeps, 20), config.temperature_start)
        for temp in temps:
            info = mh_sweep(state, rng, temperature=float(temp))
            stats.update(info)
            trace.append(state.sigma())
    descent_start = len(trace) - 1
    for _ in range(config.n_sweeps):
        if not doc_anchored:
            best_merge_pass(state)
        info = greedy_sweep(state, rng, doc_anchored=doc_anchored)
        stats.update(info)
        if not doc_anchored:
            split_pass(state, rng)
        trace.append(state.sigma())
        window = min(config.convergence_window, len(trace) - 1 - descent_start)
        if window >= 1 and trace[-1 - window] - trace[-1] < config.convergence_tol:
            converged = True
            break
    from .microcanonical import compress_groups

    final = compress_groups(state.to_labeled_graph())
    hierarchy, score = grow_hierarchy(final, config.max_levels,
                                      max_overlap=config.overlap)
    trace.append(score.sigma_nats)
    return FitResult(
        state=final, hierarchy=hierarchy, score=score, sigma_trace=trace,
        acceptance=dict(stats), converged=converged, seed=ridx,
    )


def fit(graph, config: InferenceConfig) -> FitResult:
    """Best-of-restarts posterior maximization.

    Greedy mode alternates merge scans, unit sweeps, and split proposals
    until a full round yields no improvement; anneal mode runs tempered
    sweeps first; mcmc mode samples at constant temperature before the final
    descent.  The number of groups per side and the hierarchy depth come out
    of the optimization.  If the sweep budget runs out first, the best state
    so far is returned with `converged=False`.

    Restarts use independent seed streams and reduce by minimum description
    length (ties to the lowest restart index); TOPICBLOCKS_THREADS > 1 runs
    them in worker processes with identical results.
    """
    import os

    t0 = time.time()
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_restarts)
    n_workers = int(os.environ.get("TOPICBLOCKS_THREADS", "1") or "1")
    if n_workers > 1 and config.n_restarts > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(
                _fit_one_restart,
                [graph] * config.n_restarts,
                [config] * config.n_restarts,
                range(config.n_restarts),
                seeds,
            ))
    else:
        results = [_fit_one_restart(graph, config, ridx, seq)
                   for ridx, seq in enumerate(seeds)]
    best = min(results, key=lambda r: (r.sigma, r.seed))
    best.wall_time = time.time() - t0
    return best


# --- fixed-label scoring ------------------------------------------------------


def labels_to_state(labels: LabeledCounts, variant: str) -> LabeledGraph:
    """Labeled graph from true token labels.

    "per-doc-group": document d keeps its own group and the word half-edge
    carries the topic, giving D + K groups.  "doc-clustering": both
    half-edges carry the topic (document side j, word side K + j), giving 2K
    groups.  Words never observed are dropped from the node set.
    """
    D, K = labels.n_docs, labels.n_topics
    realized = np.unique(labels.w)
    remap = -np.ones(labels.n_words, dtype=np.int64)
    remap[realized] = np.arange(len(realized))
    w = remap[labels.w]
    if variant == "per-doc-group":
        group_side = np.concatenate([np.zeros(D, np.int64), np.ones(K, np.int64)])
        return state_from_label_arrays(
            D, len(realized), labels.d, w, labels.d, D + labels.r, labels.counts,
            D + K, group_side,
        )
    if variant == "doc-clustering":
        group_side = np.concatenate([np.zeros(K, np.int64), np.ones(K, np.int64)])
        return state_from_label_arrays(
            D, len(realized), labels.d, w, labels.r, K + labels.r, labels.counts,
            2 * K, group_side,
        )
    raise ValueError(f"unknown variant {variant!r}")


def fixed_label_score(sample: LdaSample | LabeledCounts, variant: str,
                      n_topics: int | None = None) -> ModelScore:
    """Description length of the labeled graph built from true labels, with a
    single-level edge-count prior (no nested hierarchy)."""
    labels = sample.labels if isinstance(sample, LdaSample) else sample
    if n_topics is not None and labels.n_topics != n_topics:
        raise ValueError(
            f"labels carry {labels.n_topics} topics but {n_topics} were requested"
        )
    state = labels_to_state(labels, variant)
    return joint_logp(state, model_id="hsbm", parametrization=variant)


# --- document-anchored batch fitter -------------------------------------------


def score_doc_anchored(labels_dense: np.ndarray) -> ModelScore:
    """Exact description length of a dense (D, V, K) label tensor under the
    document-anchored parametrization."""
    return fixed_label_score(LabeledCounts.from_dense(labels_dense), "per-doc-group")


def _gibbs_anneal_anchored(z, d_idx, w_idx, n_dw, rng, sweeps=25,
                           pseudo_doc=1.0, pseudo_word=0.02,
                           t_start=2.0, t_end=0.4):
    """Tempered bundle resampling: each bundle's units are redrawn from the
    count-ratio conditional raised to 1/T along a cooling schedule.  Pure
    initialization heuristic; the exact objective drives the later descent."""
    D, V, K = z.shape
    ndr = z.sum(axis=1).astype(np.float64)
    kwr = z.sum(axis=0).astype(np.float64)
    nr = kwr.sum(axis=0)
    order = np.arange(len(d_idx))
    for temp in np.geomspace(t_start, t_end, sweeps):
        rng.shuffle(order)
        inv = 1.0 / temp
        for t in order:
            d, w = d_idx[t], w_idx[t]
            cur = z[d, w]
            ndr[d] -= cur
            kwr[w] -= cur
            nr -= cur
            p = (ndr[d] + pseudo_doc) * (kwr[w] + pseudo_word) / (nr + V * pseudo_word)
            p = np.maximum(p, 1e-300) ** inv
            p /= p.sum()
            new = rng.multinomial(int(n_dw[t]), p)
            z[d, w] = new
            ndr[d] += new
            kwr[w] += new
            nr += new
    return z


def fit_doc_anchored(counts: np.ndarray, n_topics: int, seed: int = 0,
                     n_restarts: int = 3, max_rounds: int = 60,
                     gibbs_sweeps: int = 25):
    """Fit token labels with documents pinned to their own groups and a
    capped number of word groups.

    Each restart draws a random split, runs tempered bundle resampling to
    escape the symmetric start, then descends greedily: rounds propose either
    whole-bundle reassignments or single-unit shifts toward the label with
    the best count-ratio gain, and a proposal batch is accepted only if the
    exactly recomputed description length drops (a failed batch is retried on
    the most promising fraction of bundles first).  The returned trace covers
    the descent phase and is nonincreasing.
    """
    counts = np.asarray(counts, dtype=np.int64)
    D, V = counts.shape
    K = n_topics
    seeds = np.random.SeedSequence(seed).spawn(n_restarts)
    best_labels, best_sigma, best_trace = None, np.inf, None
    d_idx, w_idx = np.nonzero(counts)
    n_dw = counts[d_idx, w_idx]
    for ridx, seq in enumerate(seeds):
        rng = np.random.default_rng(seq)
        z = np.zeros((D, V, K), dtype=np.int64)
        if ridx % 2 == 0:
            # word-pure start: whole columns owned by one topic
            owner = rng.integers(K, size=V)
            z[d_idx, w_idx, owner[w_idx]] = n_dw
            anneal = dict(sweeps=max(6, gibbs_sweeps // 2), t_start=1.0, t_end=0.3)
        else:
            z[d_idx, w_idx] = rng.multinomial(n_dw, np.full(K, 1.0 / K))
            anneal = dict(sweeps=gibbs_sweeps, t_start=2.0, t_end=0.4)
        if gibbs_sweeps:
            _gibbs_anneal_anchored(z, d_idx, w_idx, n_dw, rng, **anneal)
        sigma = score_doc_anchored(z).sigma_nats
        trace = [sigma]
        for _ in range(max_rounds):
            improved = False
            for mode in ("word", "prop", "bundle", "unit"):
                cand = _anchored_proposal(z, counts, d_idx, w_idx, n_dw, mode)
                if cand is None:
                    continue
                accepted, sigma = _try_batch(z, cand, sigma, d_idx, w_idx)
                if accepted:
                    trace.append(sigma)
                    improved = True
            if not improved:
                break
        if sigma < best_sigma:
            best_labels, best_sigma, best_trace = z.copy(), sigma, trace
    return best_labels, best_sigma, best_trace


def _kmeans(mat, n_clusters, rng, iters=60):
    n = mat.shape[0]
    if n_clusters >= n:
        return np.arange(n, dtype=np.int64)
    centers = mat[rng.choice(n, size=n_clusters, replace=False)]
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        dist = ((mat[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = dist.argmin(axis=1)
        if np.array_equal(new, assign):
            break
        assign = new
        for c in range(n_clusters):
            if np.any(assign == c):
                centers[c] = mat[assign == c].mean(axis=0)
    _, assign = np.unique(assign, return_inverse=True)
    return assign.astype(np.int64)


def block_polish(state: MutableLabeledState, sides=(0, 1), max_sweeps: int = 4) -> float:
    """Greedy node-relabeling sweeps: move each node's half-edges of one group
    entirely to the best same-side group, accepting exact improvements only.
    Polishes seeded clusterings at block granularity."""
    by_node: dict[tuple, list] = {}
    for key in sorted(state.bundles.keys()):
        by_node.setdefault((0, key[0]), []).append(key)
        by_node.setdefault((1, key[1]), []).append(key)
    total = 0.0
    for _ in range(max_sweeps):
        moved = False
        for side in sides:
            groups = state.doc_groups() if side == 0 else state.word_groups()
            size = state.n_docs if side == 0 else state.n_words
            for idx in range(size):
                node = idx if side == 0 else state.n_docs + idx
                keys = by_node.get((side, idx), [])
                if not keys:
                    continue
                for g_from in tuple(state.node_mixture.get(node, ())):
                    best = None
                    for g_to in groups:
                        if g_to == g_from:
                            continue
                        delta, log = state.relabel_node(side, idx, g_from, g_to, keys=keys)
                        if delta < -1e-9 and (best is None or delta < best[0]):
                            best = (delta, g_to)
                        state.undo(log)
                    if best is not None:
                        delta, _ = state.relabel_node(side, idx, g_from, best[1], keys=keys)
                        total += delta
                        moved = True
        if not moved:
            break
    return total


class NonoverlappingAgglomerator:
    """Exact greedy pair merging for nonoverlapping bipartite states.

    Works entirely on group-level tables (the aggregated edge matrix, each
    group's size, degree total, and degree histogram), so a merge candidate
    costs O(groups + distinct degrees) to evaluate.  Global terms that depend
    only on the group count are shared by every candidate pair of a side and
    folded in when testing the best pair against zero.  The running total is
    kept consistent with the full joint evaluation of the materialized state.
    """

    def __init__(self, counts: np.ndarray, doc_assign, word_assign):
        counts = np.asarray(counts, dtype=np.int64)
        self.counts = counts
        self.doc_assign = np.asarray(doc_assign, dtype=np.int64).copy()
        self.word_assign = np.asarray(word_assign, dtype=np.int64).copy()
        k_d = counts.sum(axis=1)
        n_w = counts.sum(axis=0)
        if np.any(k_d[self.doc_assign >= 0] == 0) or np.any(n_w[self.word_assign >= 0] == 0):
            # degree-0 nodes cannot belong to a group; mark them unassigned
            self.doc_assign[k_d == 0] = -1
            self.word_assign[n_w == 0] = -1
        self.Gd = int(self.doc_assign.max()) + 1
        self.Gw = int(self.word_assign.max()) + 1
        self.E = int(counts.sum())
        self.e_mat = np.zeros((self.Gd, self.Gw), dtype=np.int64)
        d_idx, w_idx = np.nonzero(counts)
        np.add.at(self.e_mat, (self.doc_assign[d_idx], self.word_assign[w_idx]),
                  counts[d_idx, w_idx])
        self.tables = {}
        for side, assign, degrees in ((0, self.doc_assign, k_d), (1, self.word_assign, n_w)):
            groups = {}
            for node, g in enumerate(assign):
                if g < 0:
                    continue
                entry = groups.setdefault(int(g), {"n": 0, "e": 0, "freq": Counter()})
                entry["n"] += 1
                entry["e"] += int(degrees[node])
                entry["freq"][int(degrees[node])] += 1
            self.tables[side] = groups

    # -- per-term pieces ---------------------------------------------------
    #
    # For a side whose mixtures are all singletons, the per-group part of the
    # description length reduces to log p(e_r, n_r) - sum_k log n_k! (the
    # degree-assignment n_r! cancels against the partition prior's mixture
    # factorial), plus global terms that depend only on (N, B).

    def side_global_term(self, side, n_groups=None) -> float:
        """Side partition terms that depend only on (N, B): size histogram
        prior, size assignment, and the mixture-frequency histogram prior."""
        groups = self.tables[side]
        n_eff = sum(e["n"] for e in groups.values())
        B = len(groups) if n_groups is None else n_groups
        if n_eff == 0:
            return 0.0
        out = float(log_num_compositions(int(n_eff), int(B)))      # -log P(n)
        # all mixtures have size one: P(q | n) = 1
        out += log_num_compositions_large(float(np.log(B)), n_eff)  # -log P(n_b | n_q)
        out += log_factorial(n_eff)                                 # -log P(b | n_b): / n_q!
        return out

    def _side_local_total(self, side) -> float:
        from .partition_counts import log_partitions
        total = 0.0
        for entry in self.tables[side].values():
            total += log_partitions(entry["e"], entry["n"])
            total -= sum(log_factorial(c) for c in entry["freq"].values())
        return total

    def _omega_term(self) -> float:
        out = 0.0
        for side in (0, 1):
            for entry in self.tables[side].values():
                out += log_factorial(entry["e"])
        nz = self.e_mat[self.e_mat > 0]
        out -= float(np.sum([log_factorial(int(v)) for v in nz]))
        return out

    def _xi_term(self) -> float:
        k_d = self.counts.sum(axis=1)
        n_w = self.counts.sum(axis=0)
        nz = self.counts[self.counts > 0]
        return (float(np.sum([log_factorial(int(v)) for v in k_d[k_d > 0]]))
                + float(np.sum([log_factorial(int(v)) for v in n_w[n_w > 0]]))
                - float(np.sum([log_factorial(int(v)) for v in nz])))

    def _geom_term(self, n_groups_total) -> float:
        B = n_groups_total
        if B == 0 or self.E == 0:
            return 0.0
        omega = 2.0 * self.E / (B * (B + 1))
        return -(self.E * math.log(omega)
                 - (self.E + B * (B + 1) / 2.0) * math.log1p(omega))

    def sigma(self) -> float:
        B0, B1 = len(self.tables[0]), len(self.tables[1])
        total = self._omega_term() - self._xi_term()
        total += self._side_local_total(0) + self._side_local_total(1)
        total += self.side_global_term(0) + self.side_global_term(1)
        total += self._geom_term(B0 + B1)
        return total

    # -- merging -------------------------------------------------------------

    def _local_merge_delta(self, side, a, b) -> float:
        """Candidate-pair part of the merge delta (everything except the
        global group-count terms shared by all pairs of this side)."""
        from .partition_counts import log_partitions
        ta, tb = self.tables[side][a], self.tables[side][b]
        n_ab = ta["n"] + tb["n"]
        e_ab = ta["e"] + tb["e"]
        delta = log_factorial(e_ab) - log_factorial(ta["e"]) - log_factorial(tb["e"])
        if side == 0:
            cols_a, cols_b = self.e_mat[a, :], self.e_mat[b, :]
        else:
            cols_a, cols_b = self.e_mat[:, a], self.e_mat[:, b]
        merged = cols_a + cols_b
        delta -= float(
            np.sum([log_factorial(int(v)) for v in merged[merged > 0]])
            - np.sum([log_factorial(int(v)) for v in cols_a[cols_a > 0]])
            - np.sum([log_factorial(int(v)) for v in cols_b[cols_b > 0]])
        )
        delta += log_partitions(e_ab, n_ab) - log_partitions(ta["e"], ta["n"]) \
            - log_partitions(tb["e"], tb["n"])
        freq = ta["freq"] + tb["freq"]
        delta -= sum(log_factorial(c) for c in freq.values())
        delta += sum(log_factorial(c) for c in ta["freq"].values())
        delta += sum(log_factorial(c) for c in tb["freq"].values())
        return float(delta)

    def _global_merge_delta(self, side) -> float:
        B0, B1 = len(self.tables[0]), len(self.tables[1])
        before = self.side_global_term(side) + self._geom_term(B0 + B1)
        after_side = self.side_global_term(side, n_groups=(B0 if side == 0 else B1) - 1)
        return after_side + self._geom_term(B0 + B1 - 1) - before

    def _apply_merge(self, side, a, b):
        ta, tb = self.tables[side][a], self.tables[side][b]
        ta["n"] += tb["n"]
        ta["e"] += tb["e"]
        ta["freq"] = ta["freq"] + tb["freq"]
        del self.tables[side][b]
        if side == 0:
            self.e_mat[a, :] += self.e_mat[b, :]
            self.e_mat[b, :] = 0
            self.doc_assign[self.doc_assign == b] = a
        else:
            self.e_mat[:, a] += self.e_mat[:, b]
            self.e_mat[:, b] = 0
            self.word_assign[self.word_assign == b] = a

    def greedy_merge(self, sides=(1, 0), tol: float = 1e-9) -> float:
        """Alternate sides, applying the best strictly improving merge until
        none remains.  Local pair deltas are cached and refreshed only for
        pairs touching the last merge."""
        sigma0 = self.sigma()
        caches = {side: {} for side in sides}
        for side in sides:
            groups = sorted(self.tables[side])
            for i in range(len(groups)):
                for j in range(i + 1, len(groups)):
                    caches[side][(groups[i], groups[j])] = self._local_merge_delta(
                        side, groups[i], groups[j])
        improved = True
        while improved:
            improved = False
            for side in sides:
                if len(self.tables[side]) < 2:
                    continue
                global_part = self._global_merge_delta(side)
                cache = caches[side]
                if not cache:
                    continue
                (a, b), local = min(cache.items(), key=lambda kv: kv[1])
                if local + global_part < -tol:
                    self._apply_merge(side, a, b)
                    groups = sorted(self.tables[side])
                    caches[side] = {
                        pair: (self._local_merge_delta(side, *pair)
                               if a in pair else val)
                        for pair, val in cache.items()
                        if b not in pair
                    }
                    improved = True
        return self.sigma() - sigma0

    def materialize(self):
        """Compacted (doc_assign, word_assign) arrays of the current state."""
        doc = self.doc_assign.copy()
        word = self.word_assign.copy()
        _, doc[doc >= 0] = np.unique(doc[doc >= 0], return_inverse=True)
        _, word[word >= 0] = np.unique(word[word >= 0], return_inverse=True)
        return doc, word


def refine_doc_clusters(labels_dense: np.ndarray, seed: int = 0,
                        doc_grid=(1, 2, 3, 4, 6, 8),
                        kmeans_restarts: int = 2, grow_levels: int = 3,
                        polish_sweeps: int = 2):
    """Coarsen an anchored fit into clustered candidates and keep the best.

    Document groups are seeded by k-means over the fitted topic mixtures and
    over raw word-usage profiles; given each document seed, word groups (and
    further document merges) come from exact greedy agglomeration starting at
    word singletons.  Every candidate (including the anchored state itself
    and the construction that labels both half-edges by the token topic) is
    scored exactly; the best is polished by node moves and the leaders get
    nested levels grown on top before the lowest description length wins.
    The coarsening never alters word-side topic labels of the anchored fit,
    so its topic mixtures are preserved.
    """
    z = np.asarray(labels_dense)
    D, V, K = z.shape
    counts = z.sum(axis=2)
    d_idx, w_idx = np.nonzero(counts)
    n_dw = counts[d_idx, w_idx]
    k_d = counts.sum(axis=1)
    theta_hat = z.sum(axis=1) / np.maximum(k_d, 1)[:, None]
    profiles = counts / np.maximum(k_d, 1)[:, None]
    freq = counts.sum(axis=0).astype(float)
    rng = np.random.default_rng(seed)

    candidates = []
    anchored = score_doc_anchored(z)
    candidates.append((anchored, None, None))

    lab = LabeledCounts.from_dense(z)
    topic_pair_state = labels_to_state(lab, "doc-clustering")
    topic_pair = fixed_label_score(lab, "doc-clustering")
    candidates.append((topic_pair, "topic-pair", topic_pair_state))

    seen = set()
    for feat in (theta_hat, profiles):
        for G in doc_grid:
            for _ in range(kmeans_restarts):
                doc_assign = _kmeans(feat, G, rng)
                key = doc_assign.tobytes()
                if key in seen:
                    continue
                seen.add(key)
                # exact greedy agglomeration of word singletons (and further
                # document merges) under this document seed
                agg = NonoverlappingAgglomerator(counts, doc_assign, np.arange(V))
                agg.greedy_merge()
                da, wa = agg.materialize()
                Gd = int(da.max()) + 1
                Gw_eff = int(wa.max()) + 1
                gs = np.concatenate([
                    np.zeros(Gd, np.int64), np.ones(Gw_eff, np.int64)
                ])
                st = state_from_label_arrays(
                    D, V, d_idx, w_idx, da[d_idx],
                    Gd + wa[w_idx], n_dw, Gd + Gw_eff, gs,
                )
                try:
                    sc = joint_logp(st, model_id="hsbm",
                                    parametrization=f"clustered[{Gd}x{Gw_eff}]")
                except IntegrityError:
                    continue
                candidates.append((sc, (da.copy(), wa.copy()), st))
    candidates.sort(key=lambda c: c[0].sigma_nats)
    best = candidates[0][:2]
    with_state = [c for c in candidates if c[2] is not None]
    for rank, (sc, meta, st) in enumerate(with_state[:3]):
        polished = st
        tag = sc.parametrization
        if rank == 0 and polish_sweeps:
            engine = MutableLabeledState(
                D, st.n_nodes - D,
                zip(st.i.tolist(), (st.j - D).tolist(), st.r.tolist(),
                    st.s.tolist(), st.m.tolist()),
                list(st.group_side),
            )
            block_polish(engine, max_sweeps=polish_sweeps)
            polished = engine.to_labeled_graph()
            tag += "+polish"
            sc_p = joint_logp(polished, model_id="hsbm", parametrization=tag)
            if sc_p.sigma_nats < best[0].sigma_nats:
                best = (sc_p, meta)
        if grow_levels > 1:
            _, grown = grow_hierarchy(polished, grow_levels)
            grown = ModelScore(grown.sigma_nats, grown.breakdown,
                               "hsbm", tag + "+levels")
            if grown.sigma_nats < best[0].sigma_nats:
                best = (grown, meta)
    return best


def _largest_remainder_round(n, p):
    """Integer splits of n (per row) proportional to p, exact row sums."""
    raw = n[:, None] * p
    out = np.floor(raw).astype(np.int64)
    short = n - out.sum(axis=1)
    order = np.argsort(-(raw - out), axis=1)
    for j in range(p.shape[1]):
        out[np.arange(len(n)), order[:, j]] += (short > j)
    return out


def _anchored_proposal(z, counts, d_idx, w_idx, n_dw, mode):
    """Candidate label moves ranked by a count-ratio heuristic: the per-unit
    gain of placing mass under topic r given current tables.

    "bundle" sends a bundle's whole mass to the best topic, "prop" splits it
    proportionally to the exponentiated gains (shared words stay shared), and
    "unit" shifts a single unit from the weakest occupied topic to the best.
    """
    ndr = z.sum(axis=1).astype(float)       # (D, K)
    kwr = z.sum(axis=0).astype(float)       # (V, K)
    nr = kwr.sum(axis=0)                    # (K,)
    gain = (
        np.log(ndr + 0.5)[d_idx]
        + np.log(kwr + 0.5)[w_idx]
        - np.log(nr + 0.5)[None, :]
    )
    target = gain.argmax(axis=1)
    rows = np.arange(len(d_idx))
    cur = z[d_idx, w_idx]
    split = None
    if mode == "word":
        # coordinated move of a word's entire column to one topic
        n_w = np.zeros(z.shape[1], dtype=np.int64)
        np.add.at(n_w, w_idx, n_dw)
        col_gain = np.zeros((z.shape[1], z.shape[2]))
        np.add.at(col_gain, w_idx, n_dw[:, None] * np.log(ndr + 0.5)[d_idx])
        col_gain -= n_w[:, None] * np.log(nr + 0.5)[None, :]
        word_target = col_gain.argmax(axis=1)
        target = word_target[w_idx]
        movable = (n_dw - cur[rows, target]) > 0
        word_margin = col_gain.max(axis=1) - (
            (col_gain * kwr).sum(axis=1) / np.maximum(n_w, 1)
        )
        margin = word_margin[w_idx] / np.maximum(n_w, 1)[w_idx]
        donor = target
    elif mode == "bundle":
        movable = (n_dw - cur[rows, target]) > 0
        margin = gain[rows, target] - (gain * cur).sum(axis=1) / np.maximum(n_dw, 1)
        donor = target  # unused in bundle mode
    elif mode == "prop":
        p = np.exp(gain - gain.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        split = _largest_remainder_round(n_dw, p)
        movable = np.any(split != cur, axis=1)
        margin = np.abs(split - cur).sum(axis=1).astype(float)
        donor = target
    else:
        donor = np.where(cur > 0, gain, np.inf).argmin(axis=1)
        movable = (cur[rows, donor] > 0) & (donor != target)
        margin = gain[rows, target] - gain[rows, donor]
    if not np.any(movable):
        return None
    return {"target": target, "donor": donor, "margin": margin,
            "mask": movable, "mode": mode, "split": split}


def _apply_anchored(z, cand, d_idx, w_idx, counts_flat, subset):
    """Apply the candidate on a subset of bundles; returns an undo record."""
    sel = np.nonzero(cand["mask"] & subset)[0]
    before = z[d_idx[sel], w_idx[sel]].copy()
    if cand["mode"] in ("bundle", "word"):
        z[d_idx[sel], w_idx[sel]] = 0
        z[d_idx[sel], w_idx[sel], cand["target"][sel]] = counts_flat[sel]
    elif cand["mode"] == "prop":
        z[d_idx[sel], w_idx[sel]] = cand["split"][sel]
    else:
        z[d_idx[sel], w_idx[sel], cand["donor"][sel]] -= 1
        z[d_idx[sel], w_idx[sel], cand["target"][sel]] += 1
    return sel, before


def _try_batch(z, cand, sigma, d_idx, w_idx):
    """Accept the proposal on the full bundle set, halving to the highest
    margin fraction on failure; z is left at the best accepted state."""
    order = np.argsort(-cand["margin"])
    fraction = 1.0
    counts_flat = z[d_idx, w_idx].sum(axis=1)
    while fraction >= 1 / 64:
        take = order[: max(1, int(len(order) * fraction))]
        subset = np.zeros(len(d_idx), dtype=bool)
        subset[take] = True
        sel, before = _apply_anchored(z, cand, d_idx, w_idx, counts_flat, subset)
        new_sigma = score_doc_anchored(z).sigma_nats
        if new_sigma < sigma - 1e-9:
            return True, new_sigma
        z[d_idx[sel], w_idx[sel]] = before
        fraction /= 4
    return False, sigma
