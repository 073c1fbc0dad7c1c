"""Referent describers: surfaces, substitution, chains, coref aggregation,
manual labels, and the generator adapter."""

import json

import pytest

from dialref import synthetic
from dialref.context import DEFAULT_MARKERS, FULL, W3, W7, build_context, serialize_sample
from dialref.describers import (
    DEFAULT_LEXICON,
    CorefClusterOutput,
    EchoGeneratorBackend,
    FixtureGeneratorBackend,
    HttpGeneratorBackend,
    ProformLexicon,
    chain_in_window,
    coref_aggregate,
    crdg_generate,
    describe_coref,
    describe_mention,
    describe_substitution,
    gold_cluster_output,
    gt_chain_concat,
    gt_manual,
    gt_set_of_words,
    label_function,
    load_cluster_file,
    window_text_for,
)


@pytest.fixture()
def fig(figure_corpus):
    return figure_corpus.dialogues[0]


def _m(d, mention_id):
    return d.find_mention(mention_id)[1]


# -- mention / substitution -----------------------------------------------------

def test_mention_describer_returns_surface(fig):
    desc = describe_mention(fig, _m(fig, "fig-m5"), FULL)
    assert desc.text == "that red one"
    assert desc.source == "mention"
    assert desc.mention_id == "fig-m5"


def test_substitution_replaces_bare_pronoun(fig):
    # "it" resolves to the most recent descriptive mention: "the apple"
    assert describe_substitution(fig, _m(fig, "fig-m2"), FULL).text == "the apple"


def test_substitution_keeps_descriptive_mentions(fig):
    assert describe_substitution(fig, _m(fig, "fig-m4"), FULL).text == "the shiny one"
    assert describe_substitution(fig, _m(fig, "fig-m5"), FULL).text == "that red one"
    assert describe_substitution(fig, _m(fig, "fig-m3"), FULL).text == "the strawberry"


def test_substitution_without_antecedent_stays_verbatim(fig):
    # restrict the window so no descriptive mention precedes "it"
    w0 = __import__("dialref.context", fromlist=["ContextWindowSpec"]).ContextWindowSpec("full", 0)
    assert describe_substitution(fig, _m(fig, "fig-m2"), w0).text == "it"


def test_substitution_skips_nondescriptive_antecedents():
    # two proforms in a row: the search continues past "it" to "the red mug"
    from dialref.corpus import Corpus, Dialogue, Image, ImageSet, Mention, Utterance

    images = tuple(Image(f"i{k}", f"images/i{k}.png") for k in range(2))
    mugs = ImageSet("mugs", "Mugs", images)
    m0 = Mention("x0", (7, 18), frozenset({"i0"}), "c")
    m1 = Mention("x1", (0, 2), frozenset({"i0"}), "c")
    m2 = Mention("x2", (10, 14), frozenset({"i0"}), "c")
    d = Dialogue(
        "d", "mugs", "",
        (
            Utterance(0, "A", "I like the red mug.", 1, (m0,)),
            Utterance(1, "B", "it looks nice.", 1, (m1,)),
            Utterance(2, "A", "Should we that one?", 2, (m2,)),
        ),
    )
    Corpus(image_sets=(mugs,), dialogues=(d,))  # sanity: validates
    assert describe_substitution(d, m2, FULL).text == "the red mug"


def test_lexicon_mention_level_judgment():
    assert DEFAULT_LEXICON.is_proform("it")
    assert DEFAULT_LEXICON.is_proform("that one")
    assert DEFAULT_LEXICON.is_proform("the one you mentioned")
    assert not DEFAULT_LEXICON.is_proform("that red one")
    assert not DEFAULT_LEXICON.is_proform("the shiny one")
    assert not DEFAULT_LEXICON.is_proform("the dog")


def test_lexicon_requires_pronouns():
    with pytest.raises(ValueError):
        ProformLexicon(frozenset(), frozenset(), frozenset())


# -- ground-truth chain describers ------------------------------------------------

def test_chain_in_window_orders_and_cuts(fig):
    chain = chain_in_window(fig, _m(fig, "fig-m4"), FULL)
    assert chain.mentions_in_window == ("the apple", "it", "the shiny one")


def test_gt_chain_concat_full(fig):
    assert (
        gt_chain_concat(fig, _m(fig, "fig-m5"), FULL).text
        == "the apple, it, the shiny one, that red one"
    )


def test_gt_chain_concat_window3(fig):
    assert gt_chain_concat(fig, _m(fig, "fig-m5"), W3).text == "it, the shiny one, that red one"


def test_gt_set_of_words_full(fig):
    assert gt_set_of_words(fig, _m(fig, "fig-m5"), FULL).text == "the apple it shiny one that red"


def test_gt_set_of_words_window3(fig):
    assert gt_set_of_words(fig, _m(fig, "fig-m5"), W3).text == "it the shiny one that red"


def test_chain_of_first_mention_is_itself(fig):
    assert gt_chain_concat(fig, _m(fig, "fig-m1"), FULL).text == "the apple"
    assert gt_set_of_words(fig, _m(fig, "fig-m3"), FULL).text == "the strawberry"


def test_gt_manual_returns_label(fig):
    assert gt_manual(_m(fig, "fig-m5"), FULL).text == "the shiny red apple"
    assert gt_manual(_m(fig, "fig-m5"), W3).text == "the shiny red one"


def test_gt_manual_missing_label_names_mention_and_window(fig):
    with pytest.raises(KeyError, match="fig-m0.*full"):
        gt_manual(_m(fig, "fig-m0"), FULL)


# -- coreference aggregation -------------------------------------------------------

def test_window_text_projection(fig):
    text, span = window_text_for(fig, _m(fig, "fig-m5"), W3)
    assert text.count("\n") == 3
    assert text[span[0]:span[1]] == "that red one"


def test_gold_clusters_match_target_surface(fig):
    text, span, clusters = gold_cluster_output(fig, _m(fig, "fig-m5"), FULL)
    assert text[span[0]:span[1]] == "that red one"
    # the target's own chain is present and ends at the target span
    target_cluster = [c for c in clusters.clusters if span in c]
    assert len(target_cluster) == 1
    assert max(s for s, _ in target_cluster[0]) == span[0]


def test_coref_chain_equals_gt_chain_on_gold(fig):
    for mention_id in ("fig-m1", "fig-m2", "fig-m3", "fig-m4", "fig-m5"):
        m = _m(fig, mention_id)
        for w in (W3, W7, FULL):
            assert describe_coref(fig, m, w, "chain").text == gt_chain_concat(fig, m, w).text
            assert describe_coref(fig, m, w, "set").text == gt_set_of_words(fig, m, w).text


def test_coref_equivalence_randomized():
    for seed in range(5):
        corpus = synthetic.agos_like_corpus(n_sets=1, seed=seed)
        for d in corpus.dialogues:
            for _, m in d.mentions_in_order():
                for w in (W3, FULL):
                    assert (
                        describe_coref(d, m, w, "chain").text == gt_chain_concat(d, m, w).text
                    )
                    assert (
                        describe_coref(d, m, w, "set").text == gt_set_of_words(d, m, w).text
                    )


def test_aggregate_no_overlap_returns_surface():
    text = "the blue bird sits. pick that one now."
    # cluster elsewhere in the text, nothing overlapping the target span
    clusters = CorefClusterOutput.from_lists([[[0, 13]]])
    desc = coref_aggregate(text, (25, 33), clusters, "chain", mention_id="m")
    assert desc.text == "that one"


def test_aggregate_exact_match_concatenates_cluster():
    text = "the blue bird sits. pick that one now."
    clusters = CorefClusterOutput.from_lists([[[0, 13], [25, 33]]])
    assert coref_aggregate(text, (25, 33), clusters, "chain").text == "the blue bird, that one"
    assert coref_aggregate(text, (25, 33), clusters, "set").text == "the blue bird that one"


def test_aggregate_partial_overlap_appends_missing_tokens():
    text = "the blue bird sits. pick that blue one now."
    # detector found "blue one" (30, 38); the annotated span is "that blue one"
    clusters = CorefClusterOutput.from_lists([[[0, 13], [30, 38]]])
    desc = coref_aggregate(text, (25, 38), clusters, "chain")
    # cluster surfaces survive, then the unseen token "that" is appended
    assert desc.text == "the blue bird, blue one, that"


def test_aggregate_partial_overlap_tie_prefers_earliest():
    text = "aa bb cc dd"
    clusters = CorefClusterOutput.from_lists([[[0, 2]], [[3, 5]]])
    # target overlaps neither; widen to overlap both equally
    clusters = CorefClusterOutput.from_lists([[[0, 4]], [[2, 6]]])
    desc = coref_aggregate(text, (1, 5), clusters, "chain")
    assert desc.text.startswith("aa b")  # earliest cluster wins the tie


def test_aggregate_drops_spans_after_target():
    text = "the bird. that one. the same bird again."
    clusters = CorefClusterOutput.from_lists([[[0, 8], [10, 18], [20, 39]]])
    assert coref_aggregate(text, (10, 18), clusters, "chain").text == "the bird, that one"


def test_aggregate_rejects_bad_variant_and_span():
    with pytest.raises(ValueError, match="variant"):
        coref_aggregate("abc", (0, 1), CorefClusterOutput(()), "list")
    with pytest.raises(ValueError, match="span"):
        coref_aggregate("abc", (0, 9), CorefClusterOutput(()), "chain")


def test_load_cluster_file(tmp_path):
    p = tmp_path / "clusters.jsonl"
    p.write_text(
        json.dumps({"mention_id": "m1", "window": "3", "clusters": [[[0, 2], [4, 6]]]})
        + "\n"
        + json.dumps({"mention_id": "m1", "window": "full", "clusters": []})
        + "\n",
        encoding="utf-8",
    )
    out = load_cluster_file(p)
    assert out[("m1", "3")].clusters == (((0, 2), (4, 6)),)
    assert out[("m1", "full")].clusters == ()


def test_load_cluster_file_rejects_garbage(tmp_path):
    p = tmp_path / "clusters.jsonl"
    p.write_text('{"mention_id": "m1"}\n', encoding="utf-8")
    with pytest.raises(ValueError, match="bad cluster record"):
        load_cluster_file(p)


# -- generator adapter ---------------------------------------------------------------

def _sample(fig, mention_id, window=W3):
    d = fig
    _, m = d.find_mention(mention_id)
    return serialize_sample(build_context(d, m, window), d.task_instructions, DEFAULT_MARKERS)


def test_echo_backend_returns_marked_span(fig):
    sample = _sample(fig, "fig-m5")
    desc = crdg_generate(sample, EchoGeneratorBackend())
    assert desc.text == "that red one"
    assert desc.source == "crdg"
    assert desc.window is W3


def test_crdg_strips_completion_end(fig):
    class Backend:
        def generate(self, prompt, *, mention_id=None):
            return "  the shiny red one <eod> <eod> "

    desc = crdg_generate(_sample(fig, "fig-m5"), Backend())
    assert desc.text == "the shiny red one"


def test_crdg_rejects_empty_generation(fig):
    class Backend:
        def generate(self, prompt, *, mention_id=None):
            return " <eod> "

    with pytest.raises(ValueError, match="no description"):
        crdg_generate(_sample(fig, "fig-m5"), Backend())


def test_fixture_backend_roundtrip(tmp_path, fig):
    p = tmp_path / "gen.jsonl"
    lines = [json.dumps({"format": "crdg-fixture", "fold_id": "fruits"})]
    lines.append(json.dumps({"mention_id": "fig-m5", "window": "3", "text": "a red apple"}))
    lines.append(json.dumps({"mention_id": "fig-m5", "window": "full", "text": "the red apple"}))
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")

    backend = FixtureGeneratorBackend.from_file(p, window="3")
    assert backend.fold_id == "fruits"
    assert crdg_generate(_sample(fig, "fig-m5"), backend).text == "a red apple"


def test_fixture_backend_duplicate_mention_rejected(tmp_path):
    p = tmp_path / "gen.jsonl"
    rows = [
        {"format": "crdg-fixture", "fold_id": "f"},
        {"mention_id": "m", "window": "3", "text": "a"},
        {"mention_id": "m", "window": "3", "text": "b"},
    ]
    p.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    with pytest.raises(ValueError, match="duplicate generation"):
        FixtureGeneratorBackend.from_file(p, window="3")


def test_fixture_backend_rejects_foreign_files(tmp_path):
    p = tmp_path / "gen.jsonl"
    p.write_text('{"something": "else"}\n', encoding="utf-8")
    with pytest.raises(ValueError, match="not a generation fixture"):
        FixtureGeneratorBackend.from_file(p)


def test_fixture_backend_missing_mention(fig):
    backend = FixtureGeneratorBackend({"other": "text"})
    with pytest.raises(KeyError, match="fig-m5"):
        crdg_generate(_sample(fig, "fig-m5"), backend)


def test_http_generator_backend(monkeypatch, fig):
    calls = {}

    class FakeResponse:
        def raise_for_status(self):
            pass

        def json(self):
            return {"text": "the shiny red one <eod>"}

    def fake_post(url, json=None, timeout=None):
        calls["url"] = url
        calls["prompt"] = json["prompt"]
        return FakeResponse()

    import dialref.describers as D

    monkeypatch.setattr(D.httpx, "post", fake_post)
    backend = HttpGeneratorBackend("http://localhost:9/complete")
    desc = crdg_generate(_sample(fig, "fig-m5"), backend)
    assert desc.text == "the shiny red one"
    assert calls["url"] == "http://localhost:9/complete"
    assert "<m> that red one </m>" in calls["prompt"]


def test_label_function_registry(fig):
    fn = label_function("gt_set")
    m = _m(fig, "fig-m5")
    assert fn(fig, m, FULL) == "the apple it shiny one that red"
    with pytest.raises(KeyError, match="known:"):
        label_function("bogus")
