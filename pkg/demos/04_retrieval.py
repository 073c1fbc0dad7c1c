"""Zero-shot identification: describe a mention, embed, take the argmax.

Two backends are contrasted. The hash backend is a deterministic stand-in
with no visual knowledge, so it lands near random guessing. The planted
backend embeds each image at its own label text, which makes label-based
retrieval provably perfect and is how the pipeline is validated.

Run: python3 demos/04_retrieval.py
"""

import tempfile
from pathlib import Path

from dialref import (
    FULL,
    EmbeddingCache,
    HashEmbeddingBackend,
    candidate_set_at,
    expected_random_accuracy,
    gt_manual,
    identify,
    retrieval_metrics,
    synthetic,
)


def run(corpus, backend, cache=None):
    results = []
    for dialogue in corpus.dialogues:
        for _, mention in dialogue.mentions_in_order():
            if not mention.is_single_image:
                continue
            text = gt_manual(mention, FULL).text
            results.append(
                identify(corpus, dialogue, mention, text, backend,
                         reduced=True, cache=cache)
            )
    return results


def main() -> None:
    corpus = synthetic.agos_like_corpus(n_sets=2)

    sizes = []
    for d in corpus.dialogues:
        for _, m in d.mentions_in_order():
            if m.is_single_image:
                sizes.append(len(candidate_set_at(corpus, d, m, reduced=True)))
    print(f"random guessing would score {float(expected_random_accuracy(sizes)):.3f}")

    hash_backend = HashEmbeddingBackend(salt="demo")
    report = retrieval_metrics(run(corpus, hash_backend))
    print(f"hash backend   : acc {report.accuracy:.3f}  mrr {report.mrr:.3f}")

    planted = synthetic.planted_backend_for(corpus)
    report = retrieval_metrics(run(corpus, planted))
    print(f"planted backend: acc {report.accuracy:.3f}  mrr {report.mrr:.3f}")

    # a cache makes repeat runs embed nothing new and survives on disk
    cache = EmbeddingCache()
    run(corpus, planted, cache=cache)
    n_after_first = len(cache)
    run(corpus, planted, cache=cache)
    print(f"cache entries after 1st/2nd pass: {n_after_first}/{len(cache)}")
    path = Path(tempfile.mkdtemp()) / "embeddings.jsonl"
    cache.save(path)
    print(f"cache reloads {len(EmbeddingCache.load(path))} vectors from {path}")

    # one mention in detail
    dialogue = corpus.dialogues[0]
    _, mention = next(
        (u, m) for u, m in dialogue.mentions_in_order() if m.is_single_image
    )
    res = identify(corpus, dialogue, mention,
                   gt_manual(mention, FULL).text, planted, reduced=True)
    print(f"\n{mention.mention_id}: {res.description!r}")
    for image_id, score in sorted(
        zip(res.candidate_ids, res.scores), key=lambda t: -t[1]
    )[:3]:
        flag = " <- referent" if image_id == res.referent_id else ""
        print(f"  {score:+.3f} {image_id}{flag}")


if __name__ == "__main__":
    main()
