"""Cross-validation over image sets, plus report files.

Folds are the image sets: each fold holds out one set's dialogues for
evaluation. Every configured describer is scored on the held-out
single-image mentions for every context window and candidate-set mode,
and a random-expectation row is added to every table. Conditioned
generators are replayed from fold-tagged fixture files; a tag mismatch is
treated as training-on-test leakage and aborts the run.

Report output is two files: a machine-readable JSONL of per-item records
and per-fold/average summaries (micro and macro), and a human-readable
table file rounded to two decimals. Both are byte-deterministic given
identical inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import describers as D
from .context import (
    DEFAULT_MARKERS,
    ContextWindowSpec,
    FULL,
    W3,
    build_context,
    serialize_sample,
)
from .corpus import Corpus, Dialogue, FoldSpec, Mention, candidate_set_at, make_folds
from .metrics import (
    RetrievalMetrics,
    TextGenMetrics,
    retrieval_metrics,
    textgen_metrics,
)
from .retrieval import EmbeddingBackend, EmbeddingCache, RetrievalResult, identify

REPORT_FORMAT = "crossval-report"
REPORT_VERSION = 1

RANDOM_ROW = "random"

DESCRIBER_KINDS = (
    "mention",
    "substitution",
    "coref_chain",
    "coref_set",
    "gt_chain",
    "gt_set",
    "gt_manual",
    "crdg",
)


class LeakageError(RuntimeError):
    """A generation fixture was produced for a different fold than the one
    it is being evaluated on."""


@dataclass(frozen=True)
class DescriberSpec:
    """One table row: a describer kind plus its configuration."""

    kind: str
    name: str = ""
    fixture_dir: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in DESCRIBER_KINDS:
            raise ValueError(f"unknown describer kind {self.kind!r}")
        if not self.name:
            object.__setattr__(self, "name", self.kind)
        if self.name == RANDOM_ROW:
            raise ValueError(f"{RANDOM_ROW!r} is reserved for the expectation row")
        if self.kind == "crdg" and not self.fixture_dir:
            raise ValueError("crdg describers need a fixture_dir of per-fold generations")


@dataclass
class FoldResult:
    fold_id: str
    # (describer name, window name, mode) -> metrics over the fold's items
    retrieval: dict[tuple[str, str, str], RetrievalMetrics]
    # same keys -> macro (per-dialogue mean) accuracy/mrr/ndcg
    retrieval_macro: dict[tuple[str, str, str], dict[str, float]]
    # (describer name, window name) -> generation quality vs manual labels
    textgen: dict[tuple[str, str], TextGenMetrics]
    items: list[dict] = field(default_factory=list)


@dataclass
class CrossValReport:
    folds: list[FoldResult]
    averages_retrieval: dict[tuple[str, str, str], dict[str, float]]
    averages_textgen: dict[tuple[str, str], dict[str, float]]
    config: dict


def _descriptions(
    spec: DescriberSpec,
    dialogue: Dialogue,
    window: ContextWindowSpec,
    gen_backend: D.GeneratorBackend | None,
) -> list[tuple[Mention, str]]:
    """Describer output for every single-image mention, document order."""
    out: list[tuple[Mention, str]] = []
    for _, m in dialogue.mentions_in_order():
        if not m.is_single_image:
            continue
        if spec.kind == "mention":
            text = D.describe_mention(dialogue, m, window).text
        elif spec.kind == "substitution":
            text = D.describe_substitution(dialogue, m, window).text
        elif spec.kind == "coref_chain":
            text = D.describe_coref(dialogue, m, window, "chain").text
        elif spec.kind == "coref_set":
            text = D.describe_coref(dialogue, m, window, "set").text
        elif spec.kind == "gt_chain":
            text = D.gt_chain_concat(dialogue, m, window).text
        elif spec.kind == "gt_set":
            text = D.gt_set_of_words(dialogue, m, window).text
        elif spec.kind == "gt_manual":
            text = D.gt_manual(m, window).text
        elif spec.kind == "crdg":
            ctx = build_context(dialogue, m, window)
            sample = serialize_sample(ctx, dialogue.task_instructions, DEFAULT_MARKERS)
            text = D.crdg_generate(sample, gen_backend).text
        else:  # unreachable: DescriberSpec validates
            raise ValueError(spec.kind)
        out.append((m, text))
    return out


def _load_crdg_backend(
    spec: DescriberSpec, fold: FoldSpec, window: ContextWindowSpec
) -> D.FixtureGeneratorBackend:
    path = Path(spec.fixture_dir) / f"{fold.fold_id}.jsonl"
    backend = D.FixtureGeneratorBackend.from_file(path, window=window.name)
    if backend.fold_id != fold.fold_id:
        raise LeakageError(
            f"{path}: generation fixture is tagged for fold {backend.fold_id!r} "
            f"but is being evaluated on fold {fold.fold_id!r}; refusing to mix "
            "training and test data"
        )
    return backend


def _expected_ndcg(size: int) -> float:
    return sum(1.0 / math.log2(1 + r) for r in range(1, size + 1)) / size


def _random_row(
    corpus: Corpus, dialogues: Sequence[Dialogue], reduced: bool
) -> tuple[RetrievalMetrics, dict[str, float]]:
    """Expected random performance over the dialogues' single-image
    mentions: exact rational means of 1/|C| and 2/|C| (unresolvable items
    contribute 0), plus the per-dialogue macro variant."""
    per_dialogue: list[tuple[Fraction, Fraction, float]] = []
    acc = Fraction(0)
    mrr = Fraction(0)
    ndcg = 0.0
    n = 0
    n_unres = 0
    for d in dialogues:
        d_acc = Fraction(0)
        d_mrr = Fraction(0)
        d_ndcg = 0.0
        d_n = 0
        for _, m in d.mentions_in_order():
            if not m.is_single_image:
                continue
            candidates = candidate_set_at(corpus, d, m, reduced=reduced)
            size = len(candidates)
            resolvable = any(img.image_id == m.referent for img in candidates)
            n += 1
            d_n += 1
            if resolvable:
                acc += Fraction(1, size)
                mrr += Fraction(2, size)
                ndcg += _expected_ndcg(size)
                d_acc += Fraction(1, size)
                d_mrr += Fraction(2, size)
                d_ndcg += _expected_ndcg(size)
            else:
                n_unres += 1
        if d_n:
            per_dialogue.append((d_acc / d_n, d_mrr / d_n, d_ndcg / d_n))
    metrics = RetrievalMetrics(
        accuracy=float(acc / n) if n else 0.0,
        mrr=float(mrr / n) if n else 0.0,
        ndcg=(ndcg / n) if n else 0.0,
        n_items=n,
        n_unresolvable=n_unres,
    )
    k = len(per_dialogue)
    macro = {
        "accuracy": float(sum(a for a, _, _ in per_dialogue) / k) if k else 0.0,
        "mrr": float(sum(m_ for _, m_, _ in per_dialogue) / k) if k else 0.0,
        "ndcg": (sum(nd for _, _, nd in per_dialogue) / k) if k else 0.0,
    }
    return metrics, macro


def _macro_retrieval(
    per_dialogue_results: Mapping[str, list[RetrievalResult]]
) -> dict[str, float]:
    """Per-dialogue means of the per-item metrics, then mean of dialogues."""
    accs, mrrs, ndcgs = [], [], []
    for results in per_dialogue_results.values():
        if not results:
            continue
        m = retrieval_metrics(results)
        accs.append(m.accuracy)
        mrrs.append(m.mrr)
        ndcgs.append(m.ndcg)
    k = len(accs)
    if not k:
        return {"accuracy": 0.0, "mrr": 0.0, "ndcg": 0.0}
    return {
        "accuracy": sum(accs) / k,
        "mrr": sum(mrrs) / k,
        "ndcg": sum(ndcgs) / k,
    }


def _evaluate_fold(
    corpus: Corpus,
    fold: FoldSpec,
    specs: Sequence[DescriberSpec],
    backend: EmbeddingBackend,
    windows: Sequence[ContextWindowSpec],
    modes: Sequence[bool],
    cache: EmbeddingCache,
) -> FoldResult:
    retrieval: dict[tuple[str, str, str], RetrievalMetrics] = {}
    retrieval_macro: dict[tuple[str, str, str], dict[str, float]] = {}
    textgen: dict[tuple[str, str], TextGenMetrics] = {}
    items: list[dict] = []
    test_dialogues = [corpus.dialogue(i) for i in fold.test_dialogue_ids]

    for spec in specs:
        for window in windows:
            gen_backend = None
            if spec.kind == "crdg":
                gen_backend = _load_crdg_backend(spec, fold, window)
            pairs: list[tuple[Dialogue, Mention, str]] = []
            for d in test_dialogues:
                for m, text in _descriptions(spec, d, window, gen_backend):
                    pairs.append((d, m, text))

            tg_pairs = []
            for _, m, text in pairs:
                reference = m.manual_labels.get(window.label_key)
                if reference is not None:
                    tg_pairs.append((text, reference))
            textgen[(spec.name, window.name)] = textgen_metrics(tg_pairs, backend)

            for reduced in modes:
                mode = "reduced" if reduced else "unreduced"
                results = [
                    identify(corpus, d, m, text, backend, reduced=reduced, cache=cache)
                    for d, m, text in pairs
                ]
                retrieval[(spec.name, window.name, mode)] = retrieval_metrics(results)
                by_dialogue: dict[str, list[RetrievalResult]] = {}
                for (d, m, text), res in zip(pairs, results):
                    by_dialogue.setdefault(d.dialogue_id, []).append(res)
                    items.append(
                        {
                            "kind": "item",
                            "fold": fold.fold_id,
                            "describer": spec.name,
                            "window": window.name,
                            "mode": mode,
                            "dialogue_id": d.dialogue_id,
                            "mention_id": m.mention_id,
                            "referent_id": res.referent_id,
                            "predicted": res.predicted,
                            "rank": res.rank_of_referent,
                            "n_candidates": len(res.candidate_ids),
                            "resolvable": res.resolvable,
                            "description": text,
                            "reference": m.manual_labels.get(window.label_key),
                        }
                    )
                retrieval_macro[(spec.name, window.name, mode)] = _macro_retrieval(by_dialogue)

    for window in windows:
        for reduced in modes:
            mode = "reduced" if reduced else "unreduced"
            metrics, macro = _random_row(corpus, test_dialogues, reduced)
            retrieval[(RANDOM_ROW, window.name, mode)] = metrics
            retrieval_macro[(RANDOM_ROW, window.name, mode)] = macro

    return FoldResult(
        fold_id=fold.fold_id,
        retrieval=retrieval,
        retrieval_macro=retrieval_macro,
        textgen=textgen,
        items=items,
    )


def run_cross_validation(
    corpus: Corpus,
    specs: Sequence[DescriberSpec],
    backend: EmbeddingBackend,
    windows: Sequence[ContextWindowSpec] = (W3, FULL),
    modes: Sequence[bool] = (True, False),
    *,
    cache: EmbeddingCache | None = None,
    inner_split: Callable[[Corpus, FoldSpec], object] | None = None,
) -> CrossValReport:
    """Hold out each image set in turn and evaluate every describer row.

    ``inner_split`` is a hook for a nested hyperparameter loop: it is
    called once per fold with the training split before evaluation and
    its return value is ignored here.
    """
    if not specs:
        raise ValueError("no describers configured")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate describer names: {names}")
    if cache is None:
        cache = EmbeddingCache()

    folds = make_folds(corpus)
    fold_results = []
    for fold in folds:
        if inner_split is not None:
            inner_split(corpus, fold)
        fold_results.append(
            _evaluate_fold(corpus, fold, specs, backend, windows, modes, cache)
        )

    keys = set(fold_results[0].retrieval)
    for fr in fold_results[1:]:
        if set(fr.retrieval) != keys:
            raise RuntimeError("describer/window keys differ across folds")

    n_folds = len(fold_results)
    averages_retrieval: dict[tuple[str, str, str], dict[str, float]] = {}
    for key in keys:
        cells = [fr.retrieval[key] for fr in fold_results]
        macros = [fr.retrieval_macro[key] for fr in fold_results]
        averages_retrieval[key] = {
            "accuracy": sum(c.accuracy for c in cells) / n_folds,
            "mrr": sum(c.mrr for c in cells) / n_folds,
            "ndcg": sum(c.ndcg for c in cells) / n_folds,
            "n_items": sum(c.n_items for c in cells) / n_folds,
            "n_unresolvable": sum(c.n_unresolvable for c in cells) / n_folds,
            "accuracy_macro": sum(m["accuracy"] for m in macros) / n_folds,
            "mrr_macro": sum(m["mrr"] for m in macros) / n_folds,
            "ndcg_macro": sum(m["ndcg"] for m in macros) / n_folds,
        }

    tg_keys = set(fold_results[0].textgen)
    averages_textgen: dict[tuple[str, str], dict[str, float]] = {}
    for key in tg_keys:
        cells = [fr.textgen[key] for fr in fold_results]
        averages_textgen[key] = {
            "bleu": sum(c.bleu for c in cells) / n_folds,
            "rouge_l": sum(c.rouge_l for c in cells) / n_folds,
            "jaccard": sum(c.jaccard for c in cells) / n_folds,
            "cosine": sum(c.cosine for c in cells) / n_folds,
            "n_items": sum(c.n_items for c in cells) / n_folds,
        }

    config = {
        "describers": names,
        "windows": [w.name for w in windows],
        "modes": ["reduced" if r else "unreduced" for r in modes],
        "backend_id": backend.backend_id,
        "corpus_hash": corpus.content_hash(),
        "folds": [f.fold_id for f in folds],
    }
    return CrossValReport(
        folds=fold_results,
        averages_retrieval=averages_retrieval,
        averages_textgen=averages_textgen,
        config=config,
    )


# ---------------------------------------------------------------------------
# report files

def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def write_report_files(report: CrossValReport, out_dir: str | Path) -> tuple[Path, Path]:
    """Write results.jsonl (machine) and tables.txt (human) under out_dir.

    The machine file carries full-precision values: per-item records, then
    per-fold summaries (micro and macro), then fold averages. The human
    file shows fold averages only, rounded to two decimals.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items_path = out / "results.jsonl"
    tables_path = out / "tables.txt"

    describer_order = list(report.config["describers"]) + [RANDOM_ROW]
    windows = report.config["windows"]
    modes = report.config["modes"]

    with open(items_path, "w", encoding="utf-8") as fh:
        header = {"kind": "header", "format": REPORT_FORMAT, "version": REPORT_VERSION}
        header.update(report.config)
        fh.write(_dump(header) + "\n")
        for fr in report.folds:
            for item in fr.items:
                fh.write(_dump(item) + "\n")
        for fr in report.folds:
            for name in describer_order:
                for window in windows:
                    for mode in modes:
                        key = (name, window, mode)
                        cell = fr.retrieval[key]
                        macro = fr.retrieval_macro[key]
                        fh.write(
                            _dump(
                                {
                                    "kind": "fold_summary",
                                    "fold": fr.fold_id,
                                    "describer": name,
                                    "window": window,
                                    "mode": mode,
                                    "accuracy": cell.accuracy,
                                    "mrr": cell.mrr,
                                    "ndcg": cell.ndcg,
                                    "n_items": cell.n_items,
                                    "n_unresolvable": cell.n_unresolvable,
                                    "accuracy_macro": macro["accuracy"],
                                    "mrr_macro": macro["mrr"],
                                    "ndcg_macro": macro["ndcg"],
                                }
                            )
                            + "\n"
                        )
            for name in report.config["describers"]:
                for window in windows:
                    cell = fr.textgen[(name, window)]
                    fh.write(
                        _dump(
                            {
                                "kind": "fold_textgen",
                                "fold": fr.fold_id,
                                "describer": name,
                                "window": window,
                                "bleu": cell.bleu,
                                "rouge_l": cell.rouge_l,
                                "jaccard": cell.jaccard,
                                "cosine": cell.cosine,
                                "n_items": cell.n_items,
                            }
                        )
                        + "\n"
                    )
        for name in describer_order:
            for window in windows:
                for mode in modes:
                    avg = report.averages_retrieval[(name, window, mode)]
                    record = {"kind": "average", "describer": name, "window": window, "mode": mode}
                    record.update(avg)
                    fh.write(_dump(record) + "\n")
        for name in report.config["describers"]:
            for window in windows:
                avg = report.averages_textgen[(name, window)]
                record = {"kind": "average_textgen", "describer": name, "window": window}
                record.update(avg)
                fh.write(_dump(record) + "\n")

    with open(tables_path, "w", encoding="utf-8") as fh:
        fh.write("Cross-validation report (fold averages)\n")
        fh.write(f"backend: {report.config['backend_id']}\n")
        fh.write(f"corpus: {report.config['corpus_hash'][:12]}\n")
        name_w = max(len(n) for n in describer_order + ["describer"])
        for window in windows:
            for mode in modes:
                fh.write(f"\n== Retrieval | window {window} | {mode} candidates ==\n")
                fh.write(f"{'describer'.ljust(name_w)}   acc   mrr  ndcg  items  unresolvable\n")
                for name in describer_order:
                    avg = report.averages_retrieval[(name, window, mode)]
                    fh.write(
                        f"{name.ljust(name_w)}  {avg['accuracy']:.2f}  {avg['mrr']:.2f}  "
                        f"{avg['ndcg']:.2f}  {avg['n_items']:5.1f}  {avg['n_unresolvable']:.1f}\n"
                    )
        for window in windows:
            fh.write(f"\n== Text generation vs manual labels | window {window} ==\n")
            fh.write(f"{'describer'.ljust(name_w)}  bleu  rouge_l  jaccard  cosine\n")
            for name in report.config["describers"]:
                avg = report.averages_textgen[(name, window)]
                fh.write(
                    f"{name.ljust(name_w)}  {avg['bleu']:.2f}  {avg['rouge_l']:7.2f}  "
                    f"{avg['jaccard']:7.2f}  {avg['cosine']:6.2f}\n"
                )

    return items_path, tables_path
