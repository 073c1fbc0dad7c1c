"""Walk through a small dialogue corpus: load, validate, candidate
reduction.

Run: python3 demos/01_corpus_tour.py
"""

import tempfile
from pathlib import Path

from dialref import (
    candidate_set_at,
    load_corpus,
    save_corpus,
    synthetic,
)


def main() -> None:
    corpus = synthetic.figure_fixture_corpus()
    print(f"image sets : {[s.set_id for s in corpus.image_sets]}")
    print(f"dialogues  : {[d.dialogue_id for d in corpus.dialogues]}")
    print(f"hash       : {corpus.content_hash()[:16]}...")

    dialogue = corpus.dialogues[0]
    print(f"\n{dialogue.dialogue_id}: {dialogue.task_instructions}")
    for utt in dialogue.utterances:
        marks = ", ".join(m.mention_id for m in utt.mentions) or "-"
        print(f"  [{utt.round}] {utt.speaker}: {utt.text}   (mentions: {marks})")

    # candidate sets shrink within a round as images get ranked
    print("\ncandidate sets (reduced | unreduced):")
    for _, mention in dialogue.mentions_in_order():
        reduced = candidate_set_at(corpus, dialogue, mention, reduced=True)
        full = candidate_set_at(corpus, dialogue, mention, reduced=False)
        referent = mention.referent if mention.is_single_image else "(plural)"
        print(f"  {mention.mention_id}: {len(reduced):2d} | {len(full):2d}   -> {referent}")

    # the JSONL round trip is byte-exact, so corpora can be diffed
    out = Path(tempfile.mkdtemp()) / "figure.jsonl"
    save_corpus(corpus, out)
    again = load_corpus(out)
    print(f"\nround trip ok: {again.content_hash() == corpus.content_hash()}")
    print(f"saved to {out}")


if __name__ == "__main__":
    main()
