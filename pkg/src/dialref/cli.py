"""Command-line entry point.

Subcommands cover the pipeline end to end: validate a corpus file,
export fine-tune datasets, generate referent descriptions, run the
cross-validated evaluation, and serve the human-experiment protocols.
Every run is reproducible: all mock randomness is seeded from
RunConfig.seed and outputs depend only on inputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .context import DEFAULT_MARKERS, export_finetune_dataset, parse_window
from .corpus import CorpusError, load_corpus, make_folds
from .crossval import (
    DescriberSpec,
    LeakageError,
    _descriptions,
    _load_crdg_backend,
    run_cross_validation,
    write_report_files,
)
from .retrieval import HashEmbeddingBackend, HttpEmbeddingBackend

DEFAULT_SEED = 0


@dataclass
class RunConfig:
    """Everything a run needs; JSON file plus flag overrides."""

    corpus: str = "corpus.jsonl"
    windows: tuple[str, ...] = ("3", "full")
    describers: tuple[str, ...] = ("mention", "substitution", "gt_chain", "gt_set", "gt_manual")
    backend: str = "hash"
    dimension: int = 64
    api_key_env: str | None = None  # env var NAME holding http-backend credentials
    reduced: tuple[bool, ...] = (True, False)
    out: str = "runs"
    seed: int = DEFAULT_SEED

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "windows" in data:
            data["windows"] = tuple(data["windows"])
        if "describers" in data:
            data["describers"] = tuple(data["describers"])
        if "reduced" in data:
            data["reduced"] = tuple(bool(x) for x in data["reduced"])
        return cls(**data)


def parse_describer(spec: str) -> DescriberSpec:
    """"mention", "gt_chain", ... or "crdg:/path/to/fixtures"."""
    if spec.startswith("crdg:"):
        return DescriberSpec("crdg", fixture_dir=spec.split(":", 1)[1])
    if spec == "crdg":
        raise ValueError("crdg describers need a fixture dir: crdg:/path/to/fixtures")
    return DescriberSpec(spec)


def make_backend(cfg: RunConfig, corpus):
    if cfg.backend == "hash":
        # salt carries the seed so --seed alone switches the embedding space
        return HashEmbeddingBackend(dimension=cfg.dimension, salt=f"hash-seed{cfg.seed}")
    if cfg.backend == "planted":
        from .synthetic import planted_backend_for

        return planted_backend_for(corpus, dimension=cfg.dimension)
    if cfg.backend.startswith("http:") or cfg.backend.startswith("https:"):
        return HttpEmbeddingBackend(
            cfg.backend, dimension=cfg.dimension, api_key_env=cfg.api_key_env
        )
    raise ValueError(f"unknown backend {cfg.backend!r} (hash, planted, or an http(s) URL)")


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if getattr(args, "corpus", None):
        cfg.corpus = args.corpus
    if getattr(args, "window", None):
        cfg.windows = tuple(args.window)
    if getattr(args, "describer", None):
        cfg.describers = tuple(args.describer)
    if getattr(args, "backend", None):
        cfg.backend = args.backend
    if getattr(args, "reduced", None) is not None:
        cfg.reduced = (args.reduced,)
    if getattr(args, "out", None):
        cfg.out = args.out
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    for name in cfg.windows:
        parse_window(name)  # fail fast on a bad window name
    for spec in cfg.describers:
        parse_describer(spec)
    return cfg


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        corpus = load_corpus(args.corpus)
    except FileNotFoundError:
        print(f"error: corpus file not found: {args.corpus}", file=sys.stderr)
        return 1
    except CorpusError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    n_mentions = sum(len(d.mentions_in_order()) for d in corpus.dialogues)
    print(
        f"ok: {len(corpus.image_sets)} image sets, {len(corpus.dialogues)} dialogues, "
        f"{n_mentions} mentions"
    )
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    corpus = load_corpus(cfg.corpus)
    window = parse_window(args.window_name)
    folds = make_folds(corpus)
    if args.fold:
        folds = [f for f in folds if f.fold_id == args.fold]
        if not folds:
            print(f"error: unknown fold {args.fold!r}", file=sys.stderr)
            return 1
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    total = 0
    for fold in folds:
        train = [corpus.dialogue(d) for d in fold.train_dialogue_ids]
        out = out_dir / f"finetune-{args.label_source}-w{window.name}-{fold.fold_id}.jsonl"
        try:
            n = export_finetune_dataset(
                corpus, train, window, DEFAULT_MARKERS, args.label_source, out,
                fold_id=fold.fold_id,
            )
        except KeyError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"{out}: {n} samples")
        total += n
    print(f"total: {total} samples in {len(folds)} file(s)")
    return 0


def cmd_describe(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    corpus = load_corpus(cfg.corpus)
    window = parse_window(args.window_name)
    spec = parse_describer(args.describer_name)
    folds = make_folds(corpus)
    if args.fold:
        folds = [f for f in folds if f.fold_id == args.fold]
        if not folds:
            print(f"error: unknown fold {args.fold!r}", file=sys.stderr)
            return 1
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fold in folds:
        gen_backend = _load_crdg_backend(spec, fold, window) if spec.kind == "crdg" else None
        lines = []
        for dialogue_id in fold.test_dialogue_ids:
            dialogue = corpus.dialogue(dialogue_id)
            for mention, text in _descriptions(spec, dialogue, window, gen_backend):
                lines.append(
                    json.dumps(
                        {
                            "mention_id": mention.mention_id,
                            "window": window.name,
                            "source": spec.name,
                            "text": text,
                        },
                        sort_keys=True,
                        ensure_ascii=False,
                    )
                )
        out = out_dir / f"{fold.fold_id}.jsonl"
        header = json.dumps(
            {"format": "crdg-fixture", "fold_id": fold.fold_id, "source": spec.name},
            sort_keys=True,
            ensure_ascii=False,
        )
        out.write_text(header + "\n" + "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        print(f"{out}: {len(lines)} descriptions")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    corpus = load_corpus(cfg.corpus)
    specs = [parse_describer(s) for s in cfg.describers]
    backend = make_backend(cfg, corpus)
    windows = [parse_window(w) for w in cfg.windows]
    report = run_cross_validation(corpus, specs, backend, windows, cfg.reduced)
    machine, human = write_report_files(report, cfg.out)
    print(f"wrote {machine}")
    print(f"wrote {human}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    corpus = load_corpus(args.corpus)
    app = create_app(
        corpus,
        log_path=args.log,
        seed=args.seed if args.seed is not None else DEFAULT_SEED,
        image_root=args.images,
        ui_dir=args.ui,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialref",
        description="Reference resolution in visually grounded dialogue via text generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--corpus", help="corpus JSONL path")
        p.add_argument("--config", help="RunConfig JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("validate", help="validate a corpus file")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export", help="export fine-tune prompt/completion datasets")
    common(p)
    p.add_argument("--window", dest="window_name", default="full", choices=["3", "7", "13", "full"])
    p.add_argument("--label-source", default="gt_manual")
    p.add_argument("--fold", help="single fold id; default exports every fold")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("describe", help="generate referent descriptions per fold")
    common(p)
    p.add_argument("--window", dest="window_name", default="full", choices=["3", "7", "13", "full"])
    p.add_argument("--describer", dest="describer_name", required=True)
    p.add_argument("--fold", help="single fold id; default describes every fold")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("evaluate", help="run the cross-validated evaluation")
    common(p)
    p.add_argument("--window", action="append", choices=["3", "7", "13", "full"])
    p.add_argument("--describer", action="append")
    p.add_argument("--backend", help="hash, planted, or an http(s) embedding service URL")
    p.add_argument(
        "--reduced",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="evaluate only the reduced (or only the unreduced) candidate mode",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="serve the human-experiment protocols over HTTP")
    p.add_argument("--corpus", required=True)
    p.add_argument("--log", help="append-only event log (enables crash recovery)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--images", help="directory of image files served at /images")
    p.add_argument("--ui", help="built frontend directory served at /app")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, LeakageError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
