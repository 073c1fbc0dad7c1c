"""Every referent describer over one mention, side by side.

The interesting comparison is the last one: aggregating a (gold)
coreference system's clusters reproduces the incremental ground-truth
describers exactly, which is what makes the aggregation rule trustworthy
when a real coreference system is swapped in.

Run: python3 demos/03_describers.py
"""

from dialref import (
    FULL,
    W3,
    describe_coref,
    describe_mention,
    describe_substitution,
    gold_cluster_output,
    gt_chain_concat,
    gt_manual,
    gt_set_of_words,
    synthetic,
)


def main() -> None:
    corpus = synthetic.figure_fixture_corpus()
    dialogue = corpus.dialogues[0]
    _, mention = dialogue.find_mention("fig-m5")  # "that red one", a proform

    utt = dialogue.utterance_of(mention)
    print(f"target: {mention.mention_id} = {utt.surface(mention)!r}\n")

    for window in (W3, FULL):
        print(f"window {window.name}:")
        rows = [
            describe_mention(dialogue, mention, window),
            describe_substitution(dialogue, mention, window),
            gt_chain_concat(dialogue, mention, window),
            gt_set_of_words(dialogue, mention, window),
            gt_manual(mention, window),
            describe_coref(dialogue, mention, window, "chain"),
            describe_coref(dialogue, mention, window, "set"),
        ]
        for desc in rows:
            print(f"  {desc.source:>14}: {desc.text}")
        print()

    # what the aggregation actually consumes: window text + clusters
    window_text, target_span, clusters = gold_cluster_output(dialogue, mention, FULL)
    print("gold clusters over the full window:")
    for cluster in clusters.clusters:
        spans = ", ".join(window_text[a:b] for a, b in cluster)
        print(f"  [{spans}]")
    s, e = target_span
    print(f"target span in window text: {window_text[s:e]!r}")


if __name__ == "__main__":
    main()
