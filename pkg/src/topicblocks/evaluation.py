"""Model comparison, topic mixtures, group summaries, and word dissemination.

Description lengths from different models of the same corpus are compared
directly in nats; under equal prior odds the evidence ratio between two
models is exp of the negative description-length difference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .lda import (
    DirichletHyper,
    LabeledCounts,
    lda_description_length,
    noninformative_hyper,
)
from .inference import fixed_label_score
from .scores import ModelScore


def bayes_factor(sigma_1: float, sigma_2: float) -> float:
    """Evidence ratio P(model 1 | data) / P(model 2 | data) assuming equal
    prior model probabilities: exp(-(sigma_1 - sigma_2)), both in nats.

    Corpus-scale gaps overflow any float; the ratio saturates to inf (or 0)
    there, so work with the nat difference directly when it matters."""
    try:
        return math.exp(-(sigma_1 - sigma_2))
    except OverflowError:
        return math.inf


@dataclass
class ComparisonTable:
    rows: list[dict] = field(default_factory=list)
    baseline_id: str | None = None

    def add(self, score: ModelScore, **extra):
        row = {"model_id": score.model_id, "parametrization": score.parametrization,
               "sigma_nats": score.sigma_nats}
        row.update(extra)
        self.rows.append(row)

    def finalize(self, baseline_id: str | None = None):
        """Attach delta columns against the baseline row and flag the single
        smallest description length."""
        if not self.rows:
            return self
        self.baseline_id = baseline_id
        base = None
        if baseline_id is not None:
            for row in self.rows:
                if row["model_id"] == baseline_id:
                    base = row["sigma_nats"]
                    break
            if base is None:
                raise ValueError(f"baseline {baseline_id!r} not in table")
        best = min(r["sigma_nats"] for r in self.rows)
        seen_best = False
        for row in self.rows:
            row["delta_sigma"] = row["sigma_nats"] - base if base is not None else ""
            is_best = (row["sigma_nats"] == best) and not seen_best
            row["best"] = "*" if is_best else ""
            seen_best = seen_best or is_best
        return self

    def to_tsv(self) -> str:
        if not self.rows:
            return ""
        cols = list(self.rows[0].keys())
        lines = ["\t".join(cols)]
        for row in self.rows:
            lines.append("\t".join(_cell(row.get(c, "")) for c in cols))
        return "\n".join(lines) + "\n"


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def compare_models(labels: LabeledCounts, specs: list[dict],
                   baseline_id: str | None = None,
                   true_hyper: DirichletHyper | None = None) -> ComparisonTable:
    """Score a list of model specs on one labeled corpus.

    A spec is {"model": "lda"|"hsbm", ...}: lda takes "hyper" of
    "noninformative" | "true" | a DirichletHyper; hsbm takes "variant" of
    "per-doc-group" | "doc-clustering".  Specs needing true labels reject
    with an explanation when labels are absent.
    """
    if labels is None:
        raise ValueError(
            "these model specs score fixed token labels; a real corpus has "
            "none, so fit a model first or synthesize a labeled corpus"
        )
    table = ComparisonTable()
    for spec in specs:
        kind = spec["model"]
        if kind == "lda":
            hyper = spec.get("hyper", "noninformative")
            if isinstance(hyper, str):
                if hyper == "noninformative":
                    hyp = noninformative_hyper(labels.n_topics, labels.n_words)
                elif hyper == "true":
                    if true_hyper is None:
                        raise ValueError("spec asks for the true prior but none is known")
                    hyp = true_hyper
                else:
                    raise ValueError(f"unknown hyper spec {hyper!r}")
            else:
                hyp = hyper
            score = lda_description_length(
                labels, hyp, model_id=spec.get("id", "lda"),
                parametrization=str(spec.get("hyper", "noninformative")),
            )
        elif kind == "hsbm":
            variant = spec.get("variant", "doc-clustering")
            score = fixed_label_score(labels, variant)
            score = ModelScore(score.sigma_nats, score.breakdown,
                               spec.get("id", "hsbm"), variant)
        else:
            raise ValueError(f"unknown model kind {kind!r}")
        table.add(score, n_tokens=labels.total_tokens)
    return table.finalize(baseline_id)


# --- topic mixtures ----------------------------------------------------------


def topic_mixtures(labels: LabeledCounts) -> np.ndarray:
    """Per-document topic proportions from half-edge labels: the share of the
    document's tokens carrying each word-side topic label.  Empty documents
    get a row of NaNs (flagged rather than invented)."""
    ndr = labels.doc_topic_counts().astype(float)
    k_d = ndr.sum(axis=1)
    out = np.full_like(ndr, np.nan)
    ok = k_d > 0
    out[ok] = ndr[ok] / k_d[ok, None]
    return out


def simplex_histogram(theta: np.ndarray, grid: int = 12) -> np.ndarray:
    """Counts on a barycentric grid over the 2-simplex (three topics)."""
    theta = theta[~np.isnan(theta).any(axis=1)]
    if theta.shape[1] != 3:
        raise ValueError("the 2-simplex histogram needs exactly three topics")
    i = np.clip((theta[:, 0] * grid).astype(int), 0, grid)
    j = np.clip((theta[:, 1] * grid).astype(int), 0, grid)
    hist = np.zeros((grid + 1, grid + 1))
    np.add.at(hist, (i, j), 1)
    return hist


def write_simplex_tsv(theta: np.ndarray, path, grid: int = 12) -> None:
    """Barycentric histogram of three-topic mixtures as TSV rows
    (bin_i, bin_j, count); plot-ready, rendering is out of scope."""
    hist = simplex_histogram(theta, grid)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_i\tbin_j\tcount\n")
        for i in range(grid + 1):
            for j in range(grid + 1):
                if hist[i, j]:
                    fh.write(f"{i}\t{j}\t{int(hist[i, j])}\n")


def simplex_mode_count(theta: np.ndarray, grid: int = 12, min_count: int = 5,
                       rel_threshold: float = 0.2) -> int:
    """Number of density modes on the 2-simplex: connected components of grid
    bins holding at least rel_threshold of the peak (and min_count points)."""
    hist = simplex_histogram(theta, grid)
    thresh = max(min_count, rel_threshold * hist.max())
    high = hist >= thresh
    seen = np.zeros_like(high, dtype=bool)
    comps = 0
    for a in range(grid + 1):
        for b in range(grid + 1):
            if not high[a, b] or seen[a, b]:
                continue
            comps += 1
            stack = [(a, b)]
            seen[a, b] = True
            while stack:
                x, y = stack.pop()
                for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)):
                    xx, yy = x + dx, y + dy
                    if 0 <= xx <= grid and 0 <= yy <= grid and high[xx, yy] and not seen[xx, yy]:
                        seen[xx, yy] = True
                        stack.append((xx, yy))
    return comps


# --- dissemination -----------------------------------------------------------


def dissemination(corpus: Corpus, word: int | str) -> float:
    """How unevenly a word spreads over documents: the number of documents
    containing it divided by the expectation under random token placement,
    where each of its n_w tokens lands in document d with probability
    k_d / M.  Near one for evenly spread words, below one for clumped ones."""
    if isinstance(word, str):
        if word not in corpus.vocab.index:
            raise ValueError(f"word {word!r} does not occur in the corpus")
        wid = corpus.vocab.index[word]
    else:
        wid = int(word)
    n_w = int(corpus.word_counts()[wid])
    if n_w == 0:
        raise ValueError(f"word {word!r} does not occur in the corpus")
    d_w = int((corpus.word_idx == wid).sum())
    k_d = corpus.doc_lengths().astype(float)
    m_total = float(corpus.total_tokens)
    expected = float(np.sum(1.0 - np.exp(n_w * np.log1p(-k_d / m_total))))
    return d_w / expected


def dissemination_all(corpus: Corpus) -> np.ndarray:
    """Dissemination coefficients for every occurring word, computed jointly
    (words sharing a count share the same null expectation)."""
    n_w = corpus.word_counts()
    k_d = corpus.doc_lengths().astype(float)
    m_total = float(corpus.total_tokens)
    d_w = np.zeros(corpus.n_words, dtype=np.int64)
    np.add.at(d_w, corpus.word_idx, 1)
    out = np.full(corpus.n_words, np.nan)
    log_miss = np.log1p(-k_d / m_total)
    for count in np.unique(n_w[n_w > 0]):
        expected = float(np.sum(1.0 - np.exp(count * log_miss)))
        sel = n_w == count
        out[sel] = d_w[sel] / expected
    return out


def shuffled_dissemination_medians(corpus: Corpus, n_shuffles: int = 10,
                                   seed: int = 0) -> np.ndarray:
    """Median dissemination over words for corpora with tokens re-placed at
    random (document lengths preserved); the null the coefficient is scaled
    against, so values concentrate near one."""
    from .corpus import Document, Corpus as CorpusCls

    rng = np.random.default_rng(seed)
    k_d = corpus.doc_lengths()
    tokens = np.repeat(corpus.word_idx, corpus.counts)
    medians = []
    for _ in range(n_shuffles):
        perm = rng.permutation(tokens)
        docs = []
        pos = 0
        for d, doc in enumerate(corpus.docs):
            length = int(k_d[d])
            docs.append(Document(doc.id, perm[pos:pos + length].tolist()))
            pos += length
        shuffled = CorpusCls(corpus.vocab, docs)
        u = dissemination_all(shuffled)
        medians.append(float(np.nanmedian(u)))
    return np.asarray(medians)


# --- group summaries -----------------------------------------------------------


def group_summaries(corpus: Corpus, state, hierarchy=None, level: int = 1,
                    top_words: int = 5, doc_samples: int = 3, seed: int = 0,
                    percentiles=(5, 25, 50, 75, 95)) -> dict:
    """Per-group listings at a hierarchy level: for word groups the most
    frequent member words plus dissemination percentiles; for document groups
    a deterministic sample of member documents."""
    depth = 1 + (len(hierarchy.assignments) if hierarchy is not None else 0)
    if level < 1 or level > depth:
        raise ValueError(f"level {level} out of range; the hierarchy has {depth} level(s)")
    n_docs = corpus.n_docs
    # group of each node at level 1 = dominant label among its half-edges
    node_groups: dict[int, dict[int, int]] = {}
    for i, j, r, s, m in zip(state.i, state.j, state.r, state.s, state.m):
        node_groups.setdefault(int(i), {}).setdefault(int(r), 0)
        node_groups[int(i)][int(r)] += int(m)
        node_groups.setdefault(int(j), {}).setdefault(int(s), 0)
        node_groups[int(j)][int(s)] += int(m)
    assign = {node: max(groups.items(), key=lambda kv: (kv[1], -kv[0]))[0]
              for node, groups in node_groups.items()}
    # lift to the requested level
    if hierarchy is not None:
        for lv in range(level - 1):
            mapping = hierarchy.assignments[lv]
            assign = {node: int(mapping[g]) for node, g in assign.items()}
    u_all = dissemination_all(corpus)
    n_w = corpus.word_counts()
    rng = np.random.default_rng(seed)
    out: dict[int, dict] = {}
    for node, g in sorted(assign.items()):
        entry = out.setdefault(int(g), {"words": [], "docs": []})
        if node < n_docs:
            entry["docs"].append(corpus.docs[node].id)
        else:
            entry["words"].append(node - n_docs)
    for g, entry in out.items():
        wids = np.asarray(entry.pop("words"), dtype=np.int64)
        docs = entry.pop("docs")
        if len(wids):
            order = wids[np.lexsort((wids, -n_w[wids]))]
            entry["top_words"] = [
                (corpus.vocab[int(w)], int(n_w[w])) for w in order[:top_words]
            ]
            entry["dissemination_percentiles"] = {
                int(p): float(np.nanpercentile(u_all[wids], p)) for p in percentiles
            }
            entry["n_words"] = len(wids)
        if docs:
            take = min(doc_samples, len(docs))
            picks = sorted(rng.choice(len(docs), size=take, replace=False).tolist())
            entry["doc_samples"] = [docs[i] for i in picks]
            entry["n_docs"] = len(docs)
    return out


# --- clustering agreement -------------------------------------------------------


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected agreement between two partitions of the same items."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("partitions must label the same items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    n = len(a)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    comb = lambda x: x * (x - 1) / 2.0
    sum_cells = comb(table).sum()
    sum_rows = comb(table.sum(axis=1)).sum()
    sum_cols = comb(table.sum(axis=0)).sum()
    expected = sum_rows * sum_cols / comb(n)
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))
