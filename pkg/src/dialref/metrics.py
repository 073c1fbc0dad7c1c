"""Retrieval and text-generation metrics, plus random-baseline expectations.

Retrieval metrics are computed from the ranking each result carries; the
rank of the gold referent is recomputed here rather than trusted from the
result object. Items whose referent is absent from the candidate ranking
(reduced away) score 0 everywhere and are tallied in ``n_unresolvable``.

Random expectations use exact rational arithmetic internally so that e.g.
all-9 candidate sets give 1/9 and 2/9 precisely.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .retrieval import EmbeddingBackend, RetrievalResult
from .text import tokenize

BLEU_MAX_ORDER = 4
BLEU_EPSILON = 1e-9


@dataclass(frozen=True)
class RetrievalMetrics:
    accuracy: float
    mrr: float
    ndcg: float
    n_items: int
    n_unresolvable: int


@dataclass(frozen=True)
class TextGenMetrics:
    bleu: float
    rouge_l: float
    jaccard: float
    cosine: float
    n_items: int


def _ranks(
    results: Sequence[RetrievalResult], gold: Mapping[str, str] | None
) -> list[int | None]:
    """1-based rank of each item's gold referent, None when absent."""
    ranks: list[int | None] = []
    for r in results:
        referent = r.referent_id if gold is None else gold[r.mention_id]
        try:
            ranks.append(r.ranking.index(referent) + 1)
        except ValueError:
            ranks.append(None)
    return ranks


def accuracy(results: Sequence[RetrievalResult], gold: Mapping[str, str] | None = None) -> float:
    """Top-1 accuracy; unresolvable items count as incorrect."""
    if not results:
        return 0.0
    ranks = _ranks(results, gold)
    return sum(1 for rank in ranks if rank == 1) / len(results)


def mrr(results: Sequence[RetrievalResult], gold: Mapping[str, str] | None = None) -> float:
    """Mean reciprocal rank; unresolvable items contribute 0."""
    if not results:
        return 0.0
    ranks = _ranks(results, gold)
    return sum(1.0 / rank for rank in ranks if rank is not None) / len(results)


def ndcg(results: Sequence[RetrievalResult], gold: Mapping[str, str] | None = None) -> float:
    """Mean NDCG under binary relevance: one relevant image per item, so
    the ideal DCG is 1 and each item scores 1/log2(1 + rank)."""
    if not results:
        return 0.0
    ranks = _ranks(results, gold)
    return sum(1.0 / math.log2(1 + rank) for rank in ranks if rank is not None) / len(results)


def retrieval_metrics(
    results: Sequence[RetrievalResult], gold: Mapping[str, str] | None = None
) -> RetrievalMetrics:
    ranks = _ranks(results, gold)
    n = len(results)
    return RetrievalMetrics(
        accuracy=accuracy(results, gold),
        mrr=mrr(results, gold),
        ndcg=ndcg(results, gold),
        n_items=n,
        n_unresolvable=sum(1 for rank in ranks if rank is None),
    )


def expected_random_accuracy(candidate_sizes: Iterable[int]) -> Fraction:
    """Mean of 1/|C| over items: the chance a uniform pick is the referent.

    Returned as an exact Fraction so equality checks need no tolerance.
    """
    sizes = list(candidate_sizes)
    if not sizes:
        return Fraction(0)
    if any(c < 1 for c in sizes):
        raise ValueError("candidate sizes must be positive")
    return sum(Fraction(1, c) for c in sizes) / len(sizes)


def expected_random_mrr(candidate_sizes: Iterable[int], *, exact: bool = False) -> Fraction:
    """Random-ranking MRR expectation, as an exact Fraction.

    The headline formula is 2/|C| per item. The true expectation of the
    reciprocal rank under a uniform random permutation is H(|C|)/|C|
    (harmonic number over size); pass ``exact=True`` for that variant.
    """
    sizes = list(candidate_sizes)
    if not sizes:
        return Fraction(0)
    if any(c < 1 for c in sizes):
        raise ValueError("candidate sizes must be positive")
    if exact:
        total = sum(
            sum(Fraction(1, r) for r in range(1, c + 1)) / c for c in sizes
        )
    else:
        total = sum(Fraction(2, c) for c in sizes)
    return total / len(sizes)


# ---------------------------------------------------------------------------
# text-generation metrics

def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu_from_counts(
    clipped: Sequence[int], totals: Sequence[int], cand_len: int, ref_len: int, epsilon: float
) -> float:
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    orders = len(clipped)
    for c, t in zip(clipped, totals):
        p = c / t if (c > 0 and t > 0) else epsilon
        log_sum += math.log(p)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_sum / orders)


def bleu(
    candidate: str,
    reference: str,
    max_order: int = BLEU_MAX_ORDER,
    epsilon: float = BLEU_EPSILON,
) -> float:
    """Sentence-level BLEU: uniform weights over 1..min(max_order, |cand|)
    grams, add-epsilon smoothing on zero counts, brevity penalty."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    orders = min(max_order, len(cand))
    clipped, totals = [], []
    for n in range(1, orders + 1):
        cand_counts = _ngrams(cand, n)
        ref_counts = _ngrams(ref, n)
        clipped.append(sum(min(count, ref_counts[g]) for g, count in cand_counts.items()))
        totals.append(max(0, len(cand) - n + 1))
    return _bleu_from_counts(clipped, totals, len(cand), len(ref), epsilon)


def corpus_bleu(
    pairs: Sequence[tuple[str, str]],
    max_order: int = BLEU_MAX_ORDER,
    epsilon: float = BLEU_EPSILON,
) -> float:
    """Corpus-level BLEU: n-gram counts pooled over all (candidate,
    reference) pairs before taking precisions; brevity penalty over
    total lengths."""
    if not pairs:
        return 0.0
    clipped = [0] * max_order
    totals = [0] * max_order
    cand_len = 0
    ref_len = 0
    for candidate, reference in pairs:
        cand = tokenize(candidate)
        ref = tokenize(reference)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            cand_counts = _ngrams(cand, n)
            ref_counts = _ngrams(ref, n)
            clipped[n - 1] += sum(min(count, ref_counts[g]) for g, count in cand_counts.items())
            totals[n - 1] += max(0, len(cand) - n + 1)
    used = [(c, t) for c, t in zip(clipped, totals) if t > 0]
    if not used:
        return 0.0
    return _bleu_from_counts(
        [c for c, _ in used], [t for _, t in used], cand_len, ref_len, epsilon
    )


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """ROUGE-L F1 (beta = 1) over shared-tokenizer tokens."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def jaccard(candidate: str, reference: str) -> float:
    """Token-set Jaccard index. Two empty token sets count as identical."""
    a = set(tokenize(candidate))
    b = set(tokenize(reference))
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def cosine_text_similarity(candidate: str, reference: str, backend: EmbeddingBackend) -> float:
    """Cosine between the backend's text embeddings, clipped to [0, 1]."""
    a = np.asarray(backend.embed_text(candidate), dtype=np.float64)
    b = np.asarray(backend.embed_text(reference), dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cannot take cosine with a zero embedding")
    cos = float(a @ b) / (na * nb)
    return min(1.0, max(0.0, cos))


def textgen_metrics(
    pairs: Sequence[tuple[str, str]], backend: EmbeddingBackend
) -> TextGenMetrics:
    """Mean sentence-level text metrics over (candidate, reference) pairs."""
    if not pairs:
        return TextGenMetrics(bleu=0.0, rouge_l=0.0, jaccard=0.0, cosine=0.0, n_items=0)
    n = len(pairs)
    return TextGenMetrics(
        bleu=sum(bleu(c, r) for c, r in pairs) / n,
        rouge_l=sum(rouge_l(c, r) for c, r in pairs) / n,
        jaccard=sum(jaccard(c, r) for c, r in pairs) / n,
        cosine=sum(cosine_text_similarity(c, r, backend) for c, r in pairs) / n,
        n_items=n,
    )
