"""Linguistic context construction and flat prompt serialization.

A context window caps how much dialogue history is visible for a mention.
The window value N counts *preceding* utterances; the mention's own
utterance is always included on top of those N. The serialized form is a
flat token sequence: optional task-instruction line, then one line per
utterance prefixed with a speaker token, with the target mention wrapped
in begin/end markers in the final line. Only the current mention is
marked; coreferences are never indicated.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .corpus import Corpus, Dialogue, Mention, Utterance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContextWindowSpec:
    """Named history cap. ``history`` is the number of preceding utterances
    kept (None = unbounded); the mention's utterance is always included."""

    name: str
    history: int | None

    def __post_init__(self) -> None:
        if self.history is not None and self.history < 0:
            raise ValueError("history must be >= 0")

    @property
    def label_key(self) -> str:
        """Key into Mention.manual_labels for this window."""
        return self.name


W3 = ContextWindowSpec("3", 3)
W7 = ContextWindowSpec("7", 7)
W13 = ContextWindowSpec("13", 13)
FULL = ContextWindowSpec("full", None)

STANDARD_WINDOWS: dict[str, ContextWindowSpec] = {w.name: w for w in (W3, W7, W13, FULL)}


def parse_window(name: str) -> ContextWindowSpec:
    try:
        return STANDARD_WINDOWS[str(name)]
    except KeyError:
        raise ValueError(f"unknown context window {name!r}; expected one of {sorted(STANDARD_WINDOWS)}")


@dataclass(frozen=True)
class MarkerConfig:
    """Special tokens inserted into the serialized sample.

    ``completion_end`` terminates completions in training files and is
    stripped from generator output at inference time.
    """

    mention_begin: str = "<m>"
    mention_end: str = "</m>"
    speaker_tokens: Mapping[str, str] = field(default_factory=lambda: {"A": "<A>", "B": "<B>"})
    task_token: str = "<task>"
    separator: str = "\n"
    completion_end: str = "<eod>"

    def __post_init__(self) -> None:
        tokens = self.all_tokens()
        if any(not t for t in tokens):
            raise ValueError("marker strings must be non-empty")
        if len(set(tokens)) != len(tokens):
            raise ValueError("marker strings must be pairwise distinct")

    def all_tokens(self) -> list[str]:
        return [
            self.mention_begin,
            self.mention_end,
            *self.speaker_tokens.values(),
            self.task_token,
            self.separator,
            self.completion_end,
        ]

    def to_dict(self) -> dict:
        return {
            "mention_begin": self.mention_begin,
            "mention_end": self.mention_end,
            "speaker_tokens": dict(self.speaker_tokens),
            "task_token": self.task_token,
            "separator": self.separator,
            "completion_end": self.completion_end,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "MarkerConfig":
        return cls(
            mention_begin=obj["mention_begin"],
            mention_end=obj["mention_end"],
            speaker_tokens=dict(obj["speaker_tokens"]),
            task_token=obj["task_token"],
            separator=obj["separator"],
            completion_end=obj.get("completion_end", "<eod>"),
        )


DEFAULT_MARKERS = MarkerConfig()


class MarkerCollisionError(ValueError):
    """A marker string occurs literally in text it would be inserted into."""


@dataclass(frozen=True)
class LinguisticContext:
    """A windowed dialogue slice ending with the mention's utterance."""

    dialogue_id: str
    mention_id: str
    utterances: tuple[tuple[str, str], ...]  # (speaker, text)
    window: ContextWindowSpec
    mention_span: tuple[int, int]  # within the final utterance text


@dataclass(frozen=True)
class SerializedSample:
    """Flat prompt (and completion, when training) for one mention."""

    mention_id: str
    prompt: str
    completion: str | None
    marker_config: MarkerConfig
    window: ContextWindowSpec


def build_context(dialogue: Dialogue, mention: Mention, window: ContextWindowSpec) -> LinguisticContext:
    """The mention's utterance plus up to ``window.history`` preceding ones."""
    utt = dialogue.utterance_of(mention)
    first = 0 if window.history is None else max(0, utt.index - window.history)
    slice_ = dialogue.utterances[first : utt.index + 1]
    return LinguisticContext(
        dialogue_id=dialogue.dialogue_id,
        mention_id=mention.mention_id,
        utterances=tuple((u.speaker, u.text) for u in slice_),
        window=window,
        mention_span=mention.span,
    )


def _check_collisions(markers: MarkerConfig, texts: Iterable[str], what: str) -> None:
    for text in texts:
        for token in markers.all_tokens():
            if token in text:
                raise MarkerCollisionError(f"marker {token!r} occurs in {what}: {text!r}")


def serialize_sample(
    context: LinguisticContext,
    instructions: str,
    markers: MarkerConfig = DEFAULT_MARKERS,
    target: str | None = None,
) -> SerializedSample:
    """Serialize a context into the flat prompt format.

    Layout: task token + instructions on the first line (when instructions
    are non-empty), then one ``<speaker> text`` line per utterance, with
    the mention span wrapped in begin/end markers in the final line. The
    completion carries the target verbatim when supplied (training) and is
    absent at inference.
    """
    _check_collisions(markers, (text for _, text in context.utterances), "utterance text")
    if instructions:
        _check_collisions(markers, [instructions], "task instructions")

    lines: list[str] = []
    if instructions:
        lines.append(f"{markers.task_token} {instructions}")

    last = len(context.utterances) - 1
    for i, (speaker, text) in enumerate(context.utterances):
        try:
            speaker_token = markers.speaker_tokens[speaker]
        except KeyError:
            raise ValueError(f"no speaker token configured for {speaker!r}")
        if i == last:
            start, end = context.mention_span
            if not (0 <= start < end <= len(text)):
                raise ValueError(
                    f"mention span [{start}, {end}) not locatable in final utterance of length {len(text)}"
                )
            text = (
                text[:start]
                + f"{markers.mention_begin} "
                + text[start:end]
                + f" {markers.mention_end}"
                + text[end:]
            )
        lines.append(f"{speaker_token} {text}")

    return SerializedSample(
        mention_id=context.mention_id,
        prompt=markers.separator.join(lines),
        completion=target,
        marker_config=markers,
        window=context.window,
    )


def strip_sample_markers(sample: SerializedSample) -> list[str]:
    """Invert serialization: recover the context utterance texts exactly."""
    markers = sample.marker_config
    lines = sample.prompt.split(markers.separator)
    if lines and lines[0].startswith(markers.task_token + " "):
        lines = lines[1:]
    texts = []
    for i, line in enumerate(lines):
        for token in markers.speaker_tokens.values():
            prefix = token + " "
            if line.startswith(prefix):
                line = line[len(prefix):]
                break
        else:
            raise ValueError(f"utterance line does not begin with a speaker token: {line!r}")
        if i == len(lines) - 1:
            line = line.replace(f"{markers.mention_begin} ", "", 1)
            line = line.replace(f" {markers.mention_end}", "", 1)
        texts.append(line)
    return texts


# ---------------------------------------------------------------------------
# fine-tuning dataset export

FINETUNE_FORMAT_VERSION = 1

# Exports longer than this many whitespace tokens get a warning; nothing is
# ever silently truncated.
PROMPT_LENGTH_WARN_TOKENS = 2048


def finetune_header(
    window: ContextWindowSpec,
    markers: MarkerConfig,
    label_source: str,
    corpus_hash: str,
    fold_id: str | None = None,
) -> dict:
    header = {
        "kind": "header",
        "format_version": FINETUNE_FORMAT_VERSION,
        "window": window.name,
        "markers": markers.to_dict(),
        "label_source": label_source,
        "corpus_hash": corpus_hash,
    }
    if fold_id is not None:
        header["fold_id"] = fold_id
    return header


def export_finetune_dataset(
    corpus: Corpus,
    dialogues: Iterable[Dialogue],
    window: ContextWindowSpec,
    markers: MarkerConfig,
    label_source: str,
    out: str | Path,
    *,
    fold_id: str | None = None,
    label_fn: Callable[[Dialogue, Mention, ContextWindowSpec], str] | None = None,
) -> int:
    """Write one training record per single-image mention of ``dialogues``.

    Records are ordered by dialogue order, then utterance index, then span
    start, then span end. ``label_source`` names the describer that yields
    the target description (resolved via the describer registry unless an
    explicit ``label_fn`` is given). The completion-end marker is appended
    to every target. Returns the number of records written.
    """
    if label_fn is None:
        from . import describers  # late import: describers depends on this module

        label_fn = describers.label_function(label_source)

    dialogues = list(dialogues)
    for d in dialogues:
        _check_collisions(markers, (u.text for u in d.utterances), f"dialogue {d.dialogue_id!r}")

    missing: list[str] = []
    records: list[dict] = []
    for d in dialogues:
        pairs = [(u, m) for u, m in d.mentions_in_order() if m.is_single_image]
        for utt, m in pairs:
            try:
                target = label_fn(d, m, window)
            except KeyError:
                missing.append(m.mention_id)
                continue
            ctx = build_context(d, m, window)
            sample = serialize_sample(ctx, d.task_instructions, markers, target=target)
            n_tokens = len(sample.prompt.split())
            if n_tokens > PROMPT_LENGTH_WARN_TOKENS:
                log.warning(
                    "prompt for mention %s is %d whitespace tokens (> %d)",
                    m.mention_id, n_tokens, PROMPT_LENGTH_WARN_TOKENS,
                )
            records.append(
                {
                    "mention_id": m.mention_id,
                    "prompt": sample.prompt,
                    "completion": f"{target} {markers.completion_end}",
                }
            )
    if missing:
        raise KeyError(f"label source {label_source!r} has no label for mentions: {missing}")

    header = finetune_header(window, markers, label_source, corpus.content_hash(), fold_id)
    with open(out, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True, ensure_ascii=False) + "\n")
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
    return len(records)


def dataset_fingerprint(path: str | Path) -> str:
    """Hash of an exported dataset file, for provenance tracking."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
