"""Linguistic context windows and the prompt/completion export.

Shows how a mention's dialogue history is sliced per window, how samples
are serialized with the marker scheme, and how a fine-tune dataset file
is written for one fold.

Run: python3 demos/02_contexts_and_export.py
"""

import json
import tempfile
from pathlib import Path

from dialref import (
    DEFAULT_MARKERS,
    FULL,
    W3,
    build_context,
    export_finetune_dataset,
    make_folds,
    serialize_sample,
    strip_sample_markers,
    synthetic,
)


def main() -> None:
    corpus = synthetic.figure_fixture_corpus()
    dialogue = corpus.dialogues[0]
    _, mention = dialogue.find_mention("fig-m5")

    for window in (W3, FULL):
        ctx = build_context(dialogue, mention, window)
        print(f"--- window {window.name}: {len(ctx.utterances)} utterances")
        sample = serialize_sample(ctx, dialogue.task_instructions)
        print(sample.prompt)
        print(f"(completion would end with {DEFAULT_MARKERS.completion_end!r})")
        # markers strip back out losslessly
        assert strip_sample_markers(sample) == [t for _, t in ctx.utterances]
        print()

    # one training file per fold; here: the fold whose test set is "dogs"
    agos = synthetic.agos_like_corpus(n_sets=2)
    fold = make_folds(agos)[0]
    train = [agos.dialogue(d) for d in fold.train_dialogue_ids]
    out = Path(tempfile.mkdtemp()) / f"finetune-{fold.fold_id}.jsonl"
    n = export_finetune_dataset(
        agos, train, W3, DEFAULT_MARKERS, "gt_manual", out, fold_id=fold.fold_id
    )
    print(f"wrote {n} prompt/completion pairs to {out}")
    with open(out, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        first = json.loads(fh.readline())
    print(f"header: fold={header['fold_id']} window={header['window']}")
    print(f"sample completion: {first['completion']!r}")


if __name__ == "__main__":
    main()
