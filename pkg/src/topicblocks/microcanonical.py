"""Exact log-probability kernel for the microcanonical block model.

The joint probability of a labeled multigraph factorizes into independent
pieces, each a uniform distribution over a counted set:

* the labeled graph given labeled degrees k and group-pair edge counts e
  (a ratio of half-edge pairing counts),
* the labeled degrees given e, conditioned on the overlapping partition
  implied by k (degree histograms inside each group mixture, with restricted
  integer partition counts),
* the overlapping partition itself (mixture-size histogram, mixture
  frequencies, node assignments),
* the edge-count matrix, either geometric at a fixed density scale or, in a
  nested hierarchy, distributed uniformly under the coarser level's matrix.

For word-document graphs the partition factors split by side, so document
and word nodes are never grouped together.  Everything below is evaluated in
log space from sparse count aggregates; nothing touches individual tokens.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .graph import LabeledGraph
from .partition_counts import log_partitions
from .scores import ModelScore
from .util import (
    IntegrityError,
    log_binom,
    log_double_factorial_even,
    log_factorial,
    log_num_compositions,
    log_num_compositions_large,
)


# --- sparse count aggregates ----------------------------------------------


class CountTables:
    """Sparse (e, k) aggregates of a labeled state.

    Edge-count entries are stored for unordered group pairs r <= s with the
    diagonal holding twice the number of within-group edges, so that group
    totals e_r sum to 2E.  Labeled degrees keep only nonzero (node, group)
    pairs.
    """

    def __init__(self, state: LabeledGraph):
        self.n_nodes = state.n_nodes
        self.n_groups = state.n_groups
        B = state.n_groups
        lo = np.minimum(state.r, state.s)
        hi = np.maximum(state.r, state.s)
        weight = np.where(lo == hi, 2 * state.m, state.m)
        key = lo * B + hi
        uniq, inv = np.unique(key, return_inverse=True)
        vals = np.zeros(len(uniq), dtype=np.int64)
        np.add.at(vals, inv, weight)
        self.pair_r = (uniq // B).astype(np.int64)
        self.pair_s = (uniq % B).astype(np.int64)
        self.pair_e = vals
        self.e_r = np.zeros(B, dtype=np.int64)
        np.add.at(self.e_r, self.pair_r, self.pair_e)
        off = self.pair_r != self.pair_s
        np.add.at(self.e_r, self.pair_s[off], self.pair_e[off])
        self.E = int(state.m.sum())

        nk = np.concatenate([state.i, state.j])
        gk = np.concatenate([state.r, state.s])
        mk = np.concatenate([state.m, state.m])
        kkey = nk * B + gk
        kuniq, kinv = np.unique(kkey, return_inverse=True)
        kvals = np.zeros(len(kuniq), dtype=np.int64)
        np.add.at(kvals, kinv, mk)
        self.k_node = (kuniq // B).astype(np.int64)
        self.k_group = (kuniq % B).astype(np.int64)
        self.k_val = kvals

    def dense_e(self) -> np.ndarray:
        e = np.zeros((self.n_groups, self.n_groups), dtype=np.int64)
        e[self.pair_r, self.pair_s] = self.pair_e
        e[self.pair_s, self.pair_r] = self.pair_e
        return e

    def occupied_groups(self) -> np.ndarray:
        return np.nonzero(self.e_r > 0)[0]


def compress_groups(state: LabeledGraph) -> LabeledGraph:
    """Relabel to occupied groups only (ascending old index order)."""
    occupied = np.unique(np.concatenate([state.r, state.s])) if len(state.r) else np.zeros(0, np.int64)
    remap = -np.ones(state.n_groups, dtype=np.int64)
    remap[occupied] = np.arange(len(occupied))
    return LabeledGraph(
        state.n_nodes, state.i, state.j, remap[state.r], remap[state.s], state.m,
        len(occupied), side=state.side,
        group_side=None if state.group_side is None else state.group_side[occupied],
    )


# --- flat (noninformative) pieces ------------------------------------------


def logp_graph_given_ke(state: LabeledGraph, tables: CountTables | None = None) -> float:
    """log of (pairings yielding this labeled graph) / (pairings matching e).

    Within-group totals e_rr must be even; loop bundles with equal labels
    carry a double-factorial correction because their two stubs are
    exchangeable.
    """
    t = tables if tables is not None else CountTables(state)
    diag = t.pair_r == t.pair_s
    if np.any(t.pair_e[diag] % 2 != 0):
        raise IntegrityError("odd within-group edge total")
    log_xi = float(log_factorial(t.k_val).sum())
    loops = state.i == state.j
    equal = loops & (state.r == state.s)
    plain = ~equal
    log_xi -= float(log_factorial(state.m[plain]).sum())
    if np.any(equal):
        log_xi -= float(log_double_factorial_even(2 * state.m[equal]).sum())
    log_omega = float(log_factorial(t.e_r).sum())
    log_omega -= float(log_factorial(t.pair_e[~diag]).sum())
    log_omega -= float(log_double_factorial_even(t.pair_e[diag]).sum())
    return log_xi - log_omega


def logp_degrees_flat(tables: CountTables, n_nodes: int | None = None) -> float:
    """Uniform prior over labeled degree sequences: each group's half-edge
    total is distributed over all nodes as indistinguishable items."""
    n = tables.n_nodes if n_nodes is None else n_nodes
    if np.any(tables.e_r < 0):
        raise IntegrityError("negative group degree total")
    return -float(log_num_compositions(tables.e_r, np.full_like(tables.e_r, n)).sum())


def logp_edge_matrix_geometric(tables: CountTables, omega_bar: float,
                               n_groups: int | None = None) -> float:
    """Independent geometric entries with mean omega_bar over the B(B+1)/2
    unordered group pairs (within-group entries counted in halves)."""
    B = tables.n_groups if n_groups is None else n_groups
    E = tables.E
    if E == 0:
        return -(B * (B + 1) / 2.0) * math.log1p(omega_bar)
    if omega_bar <= 0:
        return -np.inf
    return E * math.log(omega_bar) - (E + B * (B + 1) / 2.0) * math.log1p(omega_bar)


def logp_marginal_flat(state: LabeledGraph, omega_bar: float) -> float:
    """Closed-form marginal of the labeled graph under noninformative mixture
    and rate priors; equals the sum of the three microcanonical pieces."""
    t = CountTables(state)
    B, N, E = t.n_groups, t.n_nodes, t.E
    if E == 0:
        geom = -(B * (B + 1) / 2.0) * math.log1p(omega_bar)
    elif omega_bar <= 0:
        return -np.inf
    else:
        geom = E * math.log(omega_bar) - (E + B * (B + 1) / 2.0) * math.log1p(omega_bar)
    diag = t.pair_r == t.pair_s
    out = geom
    out += float(log_factorial(t.pair_e[~diag]).sum())
    out += float(log_double_factorial_even(t.pair_e[diag]).sum())
    loops = state.i == state.j
    equal = loops & (state.r == state.s)
    out -= float(log_factorial(state.m[~equal]).sum())
    if np.any(equal):
        out -= float(log_double_factorial_even(2 * state.m[equal]).sum())
    out += float((log_factorial(N - 1) - log_factorial(t.e_r + N - 1)).sum())
    out += float(log_factorial(t.k_val).sum())
    return out


# --- overlapping partitions and degree priors -------------------------------


@dataclass
class SideStats:
    """Mixture bookkeeping for the nodes of one side (or all nodes)."""

    n_groups: int                       # groups available on this side
    n_eff: int = 0                      # nodes with a nonempty mixture
    size_hist: Counter = field(default_factory=Counter)      # q -> n_q
    mixture_count: Counter = field(default_factory=Counter)  # mixture -> n_b
    e_mix: dict = field(default_factory=dict)       # (mixture, r) -> degree sum
    deg_freq: dict = field(default_factory=dict)    # (mixture, r) -> Counter{k: freq}
    members_with: Counter = field(default_factory=Counter)   # r -> node count S_r
    m_r: Counter = field(default_factory=Counter)  # r -> occupied mixtures containing r
    e_r: Counter = field(default_factory=Counter)  # r -> half-edge total


def side_statistics(state: LabeledGraph, tables: CountTables | None = None):
    """Per-side mixture statistics derived from the nonzero labeled degrees.

    Nodes with no half-edges carry an empty mixture and do not enter the
    partition support.  Groups are re-expressed per side but keep their
    global indices.
    """
    t = tables if tables is not None else CountTables(state)
    sides = {}

    def stats_for(side_id):
        if state.side is None:
            return sides.setdefault(0, SideStats(n_groups=state.n_groups))
        if side_id not in sides:
            n_side_groups = int((state.group_side == side_id).sum())
            sides[side_id] = SideStats(n_groups=n_side_groups)
        return sides[side_id]

    order = np.argsort(t.k_node, kind="stable")
    nodes = t.k_node[order]
    groups = t.k_group[order]
    vals = t.k_val[order]
    idx = 0
    n = len(nodes)
    while idx < n:
        stop = idx
        node = nodes[idx]
        while stop < n and nodes[stop] == node:
            stop += 1
        gs = groups[idx:stop]
        ks = vals[idx:stop]
        mixture = tuple(int(g) for g in gs)  # sorted by construction of the key
        side_id = 0 if state.side is None else int(state.side[node])
        st = stats_for(side_id)
        st.n_eff += 1
        st.size_hist[len(mixture)] += 1
        st.mixture_count[mixture] += 1
        for g, kv in zip(mixture, ks):
            st.e_mix[(mixture, g)] = st.e_mix.get((mixture, g), 0) + int(kv)
            st.deg_freq.setdefault((mixture, g), Counter())[int(kv)] += 1
            st.members_with[g] += 1
        idx = stop
    for st in sides.values():
        for mixture in st.mixture_count:
            for g in mixture:
                st.m_r[g] += 1
    for r, er in zip(range(t.n_groups), t.e_r):
        if er > 0:
            side_id = 0 if state.group_side is None else int(state.group_side[r])
            stats_for(side_id).e_r[r] = int(er)
    if state.side is not None:
        for side_id in (0, 1):
            stats_for(side_id)
    return sides


def logp_overlap_partition(stats: SideStats, max_overlap: int | None = None) -> float:
    """Log-probability of one side's overlapping partition: uniform mixture
    size histogram, uniform size assignment, uniform mixture frequencies per
    size, uniform mixture assignment."""
    if stats.n_eff == 0:
        return 0.0
    B = stats.n_groups
    Q = B if max_overlap is None else min(max_overlap, B)
    if any(q > Q for q in stats.size_hist):
        raise ValueError(f"node mixture exceeds the overlap bound {Q}")
    out = -float(log_num_compositions(stats.n_eff, Q))
    out += float(sum(log_factorial(nq) for nq in stats.size_hist.values()))
    out -= float(log_factorial(stats.n_eff))
    for q, n_q in stats.size_hist.items():
        out -= log_num_compositions_large(float(log_binom(B, q)), n_q)
        out -= float(log_factorial(n_q))
    for mixture, nb in stats.mixture_count.items():
        out += float(log_factorial(nb))
    return out


def logp_degrees_given_mixtures(stats_by_side: dict) -> float:
    """Log-probability of the labeled degrees given e and the mixtures.

    Per group: a uniform split of its half-edge total across the occupied
    mixtures containing it, with every mixture taking at least one half-edge
    per member node.  Per (mixture, group): a uniform restricted partition of
    the per-mixture degree sum into one positive degree per member, then a
    uniform assignment of those degrees to the members.
    """
    out = 0.0
    for st in stats_by_side.values():
        for r, er in st.e_r.items():
            mr = st.m_r.get(r, 0)
            sr = st.members_with.get(r, 0)
            if mr == 0 or er < sr:
                raise IntegrityError(
                    f"group {r} degree total {er} inconsistent with its {sr} members"
                )
            out -= float(log_num_compositions(er - sr, mr))
        for (mixture, g), esum in st.e_mix.items():
            nb = st.mixture_count[mixture]
            lp = log_partitions(esum, nb)
            if lp == -np.inf:
                raise IntegrityError(
                    f"degree sum {esum} cannot split into {nb} positive parts"
                )
            out -= lp
            freq = st.deg_freq[(mixture, g)]
            out += float(sum(log_factorial(c) for c in freq.values()))
            out -= float(log_factorial(nb))
    return out


def logp_partition_bipartite(state: LabeledGraph, max_overlap: int | None = None,
                             stats_by_side: dict | None = None) -> float:
    """Product of per-side overlapping partition priors.  A group whose
    half-edges touch both sides makes the partition impossible: the result is
    -inf and the offending group is recorded on the returned diagnostics."""
    if state.side is not None:
        bad_r = state.group_side[state.r] != state.side[state.i]
        bad_s = state.group_side[state.s] != state.side[state.j]
        if np.any(bad_r) or np.any(bad_s):
            which = np.nonzero(bad_r | bad_s)[0][0]
            logp_partition_bipartite.last_diagnostic = (
                f"bundle {int(which)} labels a half-edge with a group from the other side"
            )
            return float(-np.inf)
    stats = stats_by_side if stats_by_side is not None else side_statistics(state)
    return float(sum(logp_overlap_partition(st, max_overlap) for st in stats.values()))


logp_partition_bipartite.last_diagnostic = ""


# --- nested hierarchy --------------------------------------------------------


@dataclass
class Hierarchy:
    """Nested coarse-grainings above the base partition.

    `assignments[l]` maps the group ids of level l+1 onto the group ids of
    level l+2 (level 1 being the base partition of the nodes).  An empty list
    is the flat model.
    """

    assignments: list[np.ndarray] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.assignments) + 1


def aggregate_matrix(e: np.ndarray, assignment: np.ndarray, n_coarse: int) -> np.ndarray:
    """Coarse-grain a symmetric edge-count matrix under a group assignment."""
    out = np.zeros((n_coarse, n_coarse), dtype=np.int64)
    idx = np.asarray(assignment, dtype=np.int64)
    np.add.at(out, (idx[:, None], idx[None, :]), e)
    return out


def logp_level_matrix(e_fine: np.ndarray, assignment: np.ndarray, n_coarse: int,
                      e_coarse: np.ndarray | None = None) -> float:
    """Uniform prior of a fine edge matrix under its coarse aggregate: each
    coarse pair's count is spread over the compatible fine pairs."""
    assignment = np.asarray(assignment, dtype=np.int64)
    sizes = np.bincount(assignment, minlength=n_coarse).astype(np.int64)
    agg = aggregate_matrix(e_fine, assignment, n_coarse)
    if e_coarse is not None and not np.array_equal(agg, e_coarse):
        raise IntegrityError("stored coarse matrix does not aggregate from the fine one")
    out = 0.0
    for r in range(n_coarse):
        if agg[r, r] % 2 != 0:
            raise IntegrityError("odd within-group total at a coarse diagonal")
        out -= float(log_num_compositions(agg[r, r] // 2, sizes[r] * (sizes[r] + 1) // 2))
        for s in range(r + 1, n_coarse):
            out -= float(log_num_compositions(agg[r, s], sizes[r] * sizes[s]))
    return out


def logp_level_partition(assignment: np.ndarray, group_side=None) -> float:
    """Prior of a non-overlapping partition of B_prev items, per side when
    side metadata is present: uniform over assignments given sizes, over
    compositions given the coarse count, and over the coarse count itself."""
    assignment = np.asarray(assignment, dtype=np.int64)
    sides = [np.ones(len(assignment), dtype=bool)] if group_side is None else [
        np.asarray(group_side) == 0, np.asarray(group_side) == 1,
    ]
    out = 0.0
    for mask in sides:
        b_prev = int(mask.sum())
        if b_prev == 0:
            continue
        coarse = np.unique(assignment[mask])
        b_new = len(coarse)
        sizes = np.array([(assignment[mask] == c).sum() for c in coarse])
        out += float(log_factorial(sizes).sum()) - float(log_factorial(b_prev))
        out -= float(log_binom(b_prev - 1, b_new - 1))
        out -= math.log(b_prev)
    return out


def hierarchy_group_sides(base_group_side, assignments):
    """Propagate side metadata up the hierarchy; mixing sides in one coarse
    group is an integrity violation."""
    sides = [None if base_group_side is None else np.asarray(base_group_side)]
    for assignment in assignments:
        prev = sides[-1]
        if prev is None:
            sides.append(None)
            continue
        n_coarse = int(np.max(assignment)) + 1 if len(assignment) else 0
        coarse_side = -np.ones(n_coarse, dtype=np.int64)
        for fine, c in enumerate(np.asarray(assignment)):
            if coarse_side[c] == -1:
                coarse_side[c] = prev[fine]
            elif coarse_side[c] != prev[fine]:
                raise IntegrityError(f"coarse group {int(c)} mixes sides")
        sides.append(coarse_side)
    return sides


def top_level_density(E: int, n_groups: int) -> float:
    """Density scale for the topmost edge-count matrix: the value that
    maximizes the geometric prior, 2E / (B (B + 1))."""
    if n_groups == 0:
        return 0.0
    return 2.0 * E / (n_groups * (n_groups + 1))


def logp_hierarchy(e_base: np.ndarray, assignments, group_side=None, E=None) -> float:
    """Log-probability of the whole stack of edge-count matrices plus the
    upper-level partitions; the topmost matrix closes with the geometric
    prior at its maximizing density."""
    e = np.asarray(e_base, dtype=np.int64)
    total_e = int(e.sum()) // 2 if E is None else E
    sides = hierarchy_group_sides(group_side, assignments)
    out = 0.0
    for li, assignment in enumerate(assignments):
        n_coarse = int(np.max(assignment)) + 1 if len(assignment) else 0
        out += logp_level_matrix(e, assignment, n_coarse)
        out += logp_level_partition(assignment, sides[li])
        e = aggregate_matrix(e, assignment, n_coarse)
    B_top = e.shape[0]
    omega = top_level_density(total_e, B_top)
    if total_e == 0:
        out += -(B_top * (B_top + 1) / 2.0) * math.log1p(omega)
    else:
        out += total_e * math.log(omega) - (total_e + B_top * (B_top + 1) / 2.0) * math.log1p(omega)
    return out


# --- full joint --------------------------------------------------------------


def joint_logp(state: LabeledGraph, hierarchy: Hierarchy | None = None,
               max_overlap: int | None = None, model_id: str = "hsbm",
               parametrization: str = "") -> ModelScore:
    """Description length of (graph, labels, partitions): the negative log of
    the joint probability of the labeled graph and every partition level.

    With no hierarchy the state is first compressed to occupied groups, so
    the score is invariant under group relabelings and ignores transiently
    empty groups.
    """
    if hierarchy is None or not hierarchy.assignments:
        state = compress_groups(state)
        hierarchy = Hierarchy()
    tables = CountTables(state)
    if np.any(tables.e_r == 0):
        raise IntegrityError("empty group in a scored state")
    stats = side_statistics(state, tables)
    breakdown = {}
    breakdown["adjacency"] = -logp_graph_given_ke(state, tables)
    breakdown["degrees"] = -logp_degrees_given_mixtures(stats)
    part = logp_partition_bipartite(state, max_overlap, stats_by_side=stats)
    breakdown["partition"] = -part
    breakdown["edge_matrix"] = -logp_hierarchy(
        tables.dense_e(), hierarchy.assignments, state.group_side, E=tables.E
    )
    return ModelScore.from_breakdown(breakdown, model_id=model_id,
                                     parametrization=parametrization)
