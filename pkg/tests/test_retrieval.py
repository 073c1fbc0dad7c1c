"""Embedding backends, caching, and argmax retrieval."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialref import synthetic
from dialref.corpus import Image
from dialref.retrieval import (
    CandidateMatrix,
    EmbeddingCache,
    HashEmbeddingBackend,
    PlantedOracleBackend,
    TextEmbedding,
    encode_candidates,
    encode_text,
    identify,
    score_and_rank,
)

IMAGES = tuple(Image(f"img-{k}", f"images/{k}.png") for k in range(9))


def test_hash_backend_deterministic_across_instances():
    a = HashEmbeddingBackend(dimension=32, salt="s")
    b = HashEmbeddingBackend(dimension=32, salt="s")
    assert np.array_equal(a.embed_text("a shiny red apple"), b.embed_text("a shiny red apple"))
    assert np.array_equal(a.embed_image(IMAGES[0]), b.embed_image(IMAGES[0]))
    assert a.backend_id == b.backend_id


def test_hash_backend_salt_changes_space():
    a = HashEmbeddingBackend(dimension=32, salt="s1")
    b = HashEmbeddingBackend(dimension=32, salt="s2")
    assert a.backend_id != b.backend_id
    assert not np.array_equal(a.embed_text("apple"), b.embed_text("apple"))


def test_hash_backend_token_order_invariant():
    # mean-of-token-vectors: permuting tokens cannot change the embedding
    b = HashEmbeddingBackend(dimension=16)
    assert np.allclose(b.embed_text("red shiny apple"), b.embed_text("apple red shiny"))


def test_hash_backend_rejects_tokenless_text():
    b = HashEmbeddingBackend()
    with pytest.raises(ValueError):
        b.embed_text("?!...")


def test_encode_text_normalizes():
    b = HashEmbeddingBackend(dimension=24)
    emb = encode_text(b, "the tall lamp")
    assert emb.normalized
    assert abs(np.linalg.norm(emb.vector) - 1.0) < 1e-9
    raw = encode_text(b, "the tall lamp", normalize=False)
    assert not raw.normalized


def test_encode_empty_inputs_rejected():
    b = HashEmbeddingBackend()
    with pytest.raises(ValueError, match="empty"):
        encode_text(b, "")
    with pytest.raises(ValueError, match="empty"):
        encode_candidates(b, [])


def test_embedding_guardrails():
    with pytest.raises(ValueError, match="normalized"):
        TextEmbedding("x", np.array([1.0, 1.0]), "b", True)
    with pytest.raises(ValueError, match="finite"):
        TextEmbedding("x", np.array([np.nan, 0.0]), "b", False)
    with pytest.raises(ValueError, match="align"):
        CandidateMatrix(("a",), np.zeros((2, 3)), "b", False)


def test_score_and_rank_backend_mismatch_rejected():
    b1 = HashEmbeddingBackend(salt="one")
    b2 = HashEmbeddingBackend(salt="two")
    cands = encode_candidates(b1, IMAGES[:3])
    emb = encode_text(b2, "a dog")
    with pytest.raises(ValueError, match="backend mismatch"):
        score_and_rank(cands, emb)


def test_score_and_rank_normalization_mismatch_rejected():
    b = HashEmbeddingBackend()
    cands = encode_candidates(b, IMAGES[:3], normalize=True)
    emb = encode_text(b, "a dog", normalize=False)
    with pytest.raises(ValueError, match="normalization"):
        score_and_rank(cands, emb)


def test_score_and_rank_dimension_mismatch_rejected():
    cands = CandidateMatrix(("a", "b"), np.eye(2), "b", False)
    emb = TextEmbedding("x", np.zeros(3), "b", False)
    with pytest.raises(ValueError, match="dimension mismatch"):
        score_and_rank(cands, emb)


def test_ties_break_toward_canonical_order():
    # identical rows score identically; argsort must keep row order
    matrix = np.stack([np.array([1.0, 0.0])] * 3 + [np.array([0.0, 1.0])])
    cands = CandidateMatrix(("a", "b", "c", "d"), matrix, "fake", False)
    emb = TextEmbedding("q", np.array([1.0, 0.0]), "fake", False)
    result = score_and_rank(cands, emb, referent_id="b")
    assert result.ranking == ("a", "b", "c", "d")
    assert result.rank_of_referent == 2


def test_result_fields_and_properties():
    cands = CandidateMatrix(("a", "b"), np.eye(2), "fake", False)
    emb = TextEmbedding("q", np.array([0.0, 1.0]), "fake", False)
    res = score_and_rank(cands, emb, mention_id="m", referent_id="b")
    assert res.predicted == "b"
    assert res.correct
    assert res.scores == (0.0, 1.0)
    missing = score_and_rank(cands, emb, referent_id="zzz")
    assert not missing.resolvable
    assert missing.rank_of_referent is None
    assert not missing.correct


def test_planted_backend_guarantees_top1(agos2):
    backend = synthetic.planted_backend_for(agos2)
    for d in agos2.dialogues:
        for _, m in d.mentions_in_order():
            if not m.is_single_image:
                continue
            res = identify(agos2, d, m, m.manual_labels["full"], backend, reduced=False)
            assert res.correct, (m.mention_id, res.ranking[:2])
            assert res.rank_of_referent == 1


def test_planted_backend_id_depends_on_planting():
    a = PlantedOracleBackend({"i": "a dog"})
    b = PlantedOracleBackend({"i": "a cat"})
    assert a.backend_id != b.backend_id


def test_identify_reduced_unresolvable(reduction_corpus):
    d = reduction_corpus.dialogues[0]
    _, m = d.find_mention("tools-m2")
    backend = synthetic.planted_backend_for(reduction_corpus)
    res = identify(reduction_corpus, d, m, "the sturdy hammer", backend, reduced=True)
    assert not res.resolvable
    assert res.rank_of_referent is None
    assert len(res.candidate_ids) == 7
    unreduced = identify(reduction_corpus, d, m, "the sturdy hammer", backend, reduced=False)
    assert unreduced.resolvable and unreduced.rank_of_referent == 1


def test_identify_multi_image_mention_has_no_referent(figure_corpus):
    d = figure_corpus.dialogues[0]
    _, m = d.find_mention("fig-m0")
    backend = HashEmbeddingBackend()
    res = identify(figure_corpus, d, m, "the apples", backend, reduced=False)
    assert res.referent_id is None
    assert not res.resolvable
    assert len(res.ranking) == 9


# -- cache ------------------------------------------------------------------------

def _counting(backend):
    class Counting:
        backend_id = backend.backend_id
        dimension = backend.dimension
        deterministic = backend.deterministic

        def __init__(self):
            self.text_calls = 0
            self.image_calls = 0

        def embed_text(self, text):
            self.text_calls += 1
            return backend.embed_text(text)

        def embed_image(self, image):
            self.image_calls += 1
            return backend.embed_image(image)

    return Counting()


def test_cache_avoids_recomputation():
    backend = _counting(HashEmbeddingBackend(dimension=16))
    cache = EmbeddingCache()
    encode_candidates(backend, IMAGES, cache=cache)
    assert backend.image_calls == 9
    assert cache.misses == 9
    encode_candidates(backend, IMAGES, cache=cache)
    assert backend.image_calls == 9  # warm: zero new embed calls
    assert cache.hits == 9
    encode_text(backend, "a lamp", cache=cache)
    encode_text(backend, "a lamp", cache=cache)
    assert backend.text_calls == 1


def test_cache_stores_raw_vectors():
    # normalization happens per call, so a normalize=False read of a cached
    # vector must see the original magnitudes
    backend = HashEmbeddingBackend(dimension=16)
    cache = EmbeddingCache()
    raw_first = encode_text(backend, "a lamp", normalize=False, cache=cache).vector
    encode_text(backend, "a lamp", normalize=True, cache=cache)
    raw_again = encode_text(backend, "a lamp", normalize=False, cache=cache).vector
    assert np.array_equal(raw_first, raw_again)


def test_cache_file_round_trip(tmp_path):
    backend = HashEmbeddingBackend(dimension=8)
    cache = EmbeddingCache()
    encode_text(backend, "a lamp", cache=cache)
    encode_candidates(backend, IMAGES[:2], cache=cache)
    p = tmp_path / "cache.jsonl"
    cache.save(p)
    loaded = EmbeddingCache.load(p)
    assert len(loaded) == len(cache) == 3
    again = _counting(backend)
    encode_text(again, "a lamp", cache=loaded)
    assert again.text_calls == 0


def test_cache_rejects_wrong_format_and_version(tmp_path):
    p = tmp_path / "cache.jsonl"
    p.write_text('{"format": "other"}\n', encoding="utf-8")
    with pytest.raises(ValueError, match="not an embedding cache"):
        EmbeddingCache.load(p)
    p.write_text('{"format": "embedding-cache", "version": 99}\n', encoding="utf-8")
    with pytest.raises(ValueError, match="version"):
        EmbeddingCache.load(p)


def test_cache_keys_isolate_backends():
    cache = EmbeddingCache()
    b1 = _counting(HashEmbeddingBackend(salt="one"))
    b2 = _counting(HashEmbeddingBackend(salt="two"))
    encode_text(b1, "a lamp", cache=cache)
    encode_text(b2, "a lamp", cache=cache)
    assert b1.text_calls == b2.text_calls == 1
    assert len(cache) == 2


# -- invariants (hypothesis) --------------------------------------------------------

@st.composite
def _instances(draw):
    n_cands = draw(st.integers(min_value=1, max_value=9))
    dim = draw(st.integers(min_value=2, max_value=64))
    seed = draw(st.integers(min_value=0, max_value=2**31))
    rng = np.random.default_rng(seed)
    matrix = rng.normal(size=(n_cands, dim))
    vector = rng.normal(size=dim)
    return matrix, vector


@settings(max_examples=120, deadline=None)
@given(_instances(), st.floats(min_value=1e-3, max_value=1e3))
def test_argmax_invariant_under_positive_scaling(instance, scale):
    matrix, vector = instance
    ids = tuple(f"c{k}" for k in range(matrix.shape[0]))
    cands = CandidateMatrix(ids, matrix, "fake", False)
    base = score_and_rank(cands, TextEmbedding("q", vector, "fake", False))
    scaled = score_and_rank(cands, TextEmbedding("q", vector * scale, "fake", False))
    assert base.ranking == scaled.ranking


@settings(max_examples=120, deadline=None)
@given(_instances(), st.randoms(use_true_random=False))
def test_row_permutation_equivariance(instance, rnd):
    matrix, vector = instance
    n = matrix.shape[0]
    ids = tuple(f"c{k}" for k in range(n))
    perm = list(range(n))
    rnd.shuffle(perm)
    cands = CandidateMatrix(ids, matrix, "fake", False)
    permuted = CandidateMatrix(
        tuple(ids[i] for i in perm), matrix[perm], "fake", False
    )
    emb = TextEmbedding("q", vector, "fake", False)
    a = score_and_rank(cands, emb)
    b = score_and_rank(permuted, emb)
    # same id->score mapping regardless of row order
    assert dict(zip(a.candidate_ids, a.scores)) == pytest.approx(
        dict(zip(b.candidate_ids, b.scores))
    )
    # and the same winner when the argmax is unique
    scores = matrix @ vector
    top = np.flatnonzero(scores == scores.max())
    if len(top) == 1:
        assert a.ranking[0] == b.ranking[0]


@settings(max_examples=120, deadline=None)
@given(_instances())
def test_scores_agree_with_bruteforce_dot(instance):
    matrix, vector = instance
    ids = tuple(f"c{k}" for k in range(matrix.shape[0]))
    res = score_and_rank(CandidateMatrix(ids, matrix, "fake", False),
                         TextEmbedding("q", vector, "fake", False))
    for row, got in zip(matrix, res.scores):
        expect = sum(float(a) * float(b) for a, b in zip(row, vector))
        assert got == pytest.approx(expect, abs=1e-9)
    ranked_scores = [res.scores[res.candidate_ids.index(i)] for i in res.ranking]
    assert ranked_scores == sorted(ranked_scores, reverse=True)
