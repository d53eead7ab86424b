"""Corpus ingestion and the statistics that make word-document networks
unusual: heavy-tailed word frequencies and superlinear edge growth.
"""
import numpy as np

from topicblocks import (
    build_corpus,
    dissemination,
    dissemination_all,
    double_power_law_base,
    fit_heaps_exponent,
    heaps_curve,
    rank_frequency,
    tokenize,
)

## The token filter: lowercase, punctuation to spaces, keep pure a-z words.
print(tokenize("The cat, the cat."))      # ['the', 'cat', 'the', 'cat']
print(tokenize("a1b c-d 42"))             # ['c', 'd']

## Draw a synthetic corpus whose word choices follow a double power law,
## the shape empirical rank-frequency distributions take.
rng = np.random.default_rng(0)
V = 5000
p_w = double_power_law_base(V, gamma1=1.0, gamma2=1.9)
docs = []
for i in range(400):
    tokens = rng.choice(V, size=120, p=p_w)
    docs.append((f"doc{i}", [f"t{t}" for t in tokens]))
corpus = build_corpus(docs, pretokenized=True)
print(f"D={corpus.n_docs} V={corpus.n_words} M={corpus.total_tokens}")

## Rank-frequency: probabilities sorted descending, summing to one.
rf = rank_frequency(corpus)
print("top words:", [(rank, word, round(p, 4)) for rank, word, p in rf[:5]])
print("sum of p_w:", sum(p for _, _, p in rf))

## Vocabulary growth makes the network dense: adding documents grows the
## number of distinct word-document pairs faster than the node count.
curve = heaps_curve(corpus, seed=1)
delta = fit_heaps_exponent(curve, "words_plus_docs")
print(f"edges ~ nodes^{delta:.2f}  (superlinear: {delta > 1})")

## Dissemination: how evenly a word spreads over documents, against a
## random-placement null. Function-word-like tokens sit near 1.
u = dissemination_all(corpus)
top_word = rf[0][1]
print(f"U_D({top_word}) = {dissemination(corpus, top_word):.3f}")
print("median U_D:", float(np.nanmedian(u)).__round__(3))
