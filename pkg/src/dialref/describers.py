"""Referent description producers.

Each describer turns a (mention, context window) pair into a definite
description of the referent: the mention surface itself, a proform
substitution heuristic, aggregation of an external coreference system's
clusters, incremental ground-truth extractions from annotated chains, a
manually written label, or a text generator behind an adapter. All
describers are deterministic given their inputs and configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

import httpx

from .context import FULL, ContextWindowSpec, SerializedSample
from .corpus import Dialogue, Mention, Utterance
from .text import tokenize, unique_in_order

CHAIN_SEPARATOR = ", "

SOURCES = (
    "mention",
    "substitution",
    "coref_chain",
    "coref_set",
    "gt_chain",
    "gt_set",
    "gt_manual",
    "crdg",
)


@dataclass(frozen=True)
class ReferentDescription:
    mention_id: str
    text: str
    source: str
    window: ContextWindowSpec

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"empty description for mention {self.mention_id!r}")


@dataclass(frozen=True)
class CoreferenceChain:
    """Surface strings of the same-chain mentions visible in a window,
    in document order, ending with the target mention."""

    chain_id: str
    mentions_in_window: tuple[str, ...]


@dataclass(frozen=True)
class CorefClusterOutput:
    """Span clusters from an external coreference system, as [start, end)
    character offsets over a window text."""

    clusters: tuple[tuple[tuple[int, int], ...], ...]

    @classmethod
    def from_lists(cls, clusters: Iterable[Iterable[Iterable[int]]]) -> "CorefClusterOutput":
        out = []
        for cluster in clusters:
            spans = []
            for span in cluster:
                start, end = span
                spans.append((int(start), int(end)))
            out.append(tuple(spans))
        return cls(tuple(out))


@dataclass(frozen=True)
class ProformLexicon:
    """What counts as a proform or a phrase without descriptive content.

    The test is mention-level: a phrase is non-descriptive only when every
    token it contains is itself non-descriptive, so "that red one" stays
    descriptive while "the one you mentioned" does not.
    """

    pronouns: frozenset[str]
    nondescriptive_words: frozenset[str]
    function_words: frozenset[str]

    def __post_init__(self) -> None:
        if not self.pronouns:
            raise ValueError("pronoun set must be non-empty")

    def is_proform(self, surface: str) -> bool:
        stripped = surface.strip().lower()
        if stripped in self.pronouns:
            return True
        tokens = tokenize(surface)
        if not tokens:
            return True
        allowed = self.function_words | self.nondescriptive_words | self.pronouns
        return all(t in allowed for t in tokens)


DEFAULT_LEXICON = ProformLexicon(
    pronouns=frozenset("it its this that these those they them one ones".split()),
    nondescriptive_words=frozenset(
        "one ones thing things image images picture pictures photo photos "
        "mention mentions mentioned mentioning choice choices option options".split()
    ),
    function_words=frozenset(
        "the a an this that these those it its they them he she we you i me my your "
        "our their his her of to in on at for with from by as and or not no is are "
        "was were be been being do does did have has had will would can could should "
        "just so too very there here what which who whom whose".split()
    ),
)


def _doc_key(utterance: Utterance, mention: Mention) -> tuple[int, int, int]:
    return (utterance.index, mention.span[0], mention.span[1])


def _window_first_index(target_index: int, window: ContextWindowSpec) -> int:
    return 0 if window.history is None else max(0, target_index - window.history)


def _mentions_in_window(
    dialogue: Dialogue, mention: Mention, window: ContextWindowSpec
) -> tuple[list[tuple[Utterance, Mention]], tuple[int, int, int]]:
    """All (utterance, mention) pairs in the window, document order,
    plus the document-order key of the target mention."""
    target_utt = dialogue.utterance_of(mention)
    first = _window_first_index(target_utt.index, window)
    pairs = [
        (u, m)
        for u, m in dialogue.mentions_in_order()
        if first <= u.index <= target_utt.index
    ]
    return pairs, _doc_key(target_utt, mention)


def describe_mention(
    dialogue: Dialogue, mention: Mention, window: ContextWindowSpec = FULL
) -> ReferentDescription:
    """The marked mention, verbatim."""
    utt = dialogue.utterance_of(mention)
    return ReferentDescription(mention.mention_id, utt.surface(mention), "mention", window)


def describe_substitution(
    dialogue: Dialogue,
    mention: Mention,
    window: ContextWindowSpec = FULL,
    lexicon: ProformLexicon = DEFAULT_LEXICON,
) -> ReferentDescription:
    """Replace a proform or otherwise non-descriptive mention with the most
    recent preceding mention in the window that is neither. Descriptive
    mentions pass through untouched; so does a proform with no qualifying
    antecedent."""
    utt = dialogue.utterance_of(mention)
    surface = utt.surface(mention)
    text = surface
    if lexicon.is_proform(surface):
        pairs, target_key = _mentions_in_window(dialogue, mention, window)
        for u, m in reversed(pairs):
            if _doc_key(u, m) >= target_key:
                continue
            candidate = u.surface(m)
            if not lexicon.is_proform(candidate):
                text = candidate
                break
    return ReferentDescription(mention.mention_id, text, "substitution", window)


def chain_in_window(
    dialogue: Dialogue, mention: Mention, window: ContextWindowSpec
) -> CoreferenceChain:
    """Same-chain mention surfaces in the window, up to and including the target."""
    pairs, target_key = _mentions_in_window(dialogue, mention, window)
    surfaces = [
        u.surface(m)
        for u, m in pairs
        if m.chain_id == mention.chain_id and _doc_key(u, m) <= target_key
    ]
    return CoreferenceChain(chain_id=mention.chain_id, mentions_in_window=tuple(surfaces))


def gt_chain_concat(
    dialogue: Dialogue,
    mention: Mention,
    window: ContextWindowSpec,
    separator: str = CHAIN_SEPARATOR,
) -> ReferentDescription:
    """Incremental concatenation of the annotated reference chain."""
    chain = chain_in_window(dialogue, mention, window)
    text = separator.join(chain.mentions_in_window)
    return ReferentDescription(mention.mention_id, text, "gt_chain", window)


def gt_set_of_words(
    dialogue: Dialogue, mention: Mention, window: ContextWindowSpec
) -> ReferentDescription:
    """Incremental ordered set of the unique lexical items in the chain."""
    chain = chain_in_window(dialogue, mention, window)
    tokens: list[str] = []
    for surface in chain.mentions_in_window:
        tokens.extend(tokenize(surface))
    text = " ".join(unique_in_order(tokens))
    return ReferentDescription(mention.mention_id, text, "gt_set", window)


def gt_manual(mention: Mention, window: ContextWindowSpec) -> ReferentDescription:
    """The manually written label stored for this window, verbatim."""
    try:
        text = mention.manual_labels[window.label_key]
    except KeyError:
        raise KeyError(
            f"mention {mention.mention_id!r} has no manual label for window {window.name!r}"
        ) from None
    return ReferentDescription(mention.mention_id, text, "gt_manual", window)


# ---------------------------------------------------------------------------
# aggregation of external coreference clusters

def window_text_for(
    dialogue: Dialogue, mention: Mention, window: ContextWindowSpec
) -> tuple[str, tuple[int, int]]:
    """Canonical plain-text form of a window for span-based coreference
    systems: utterance texts joined by single newlines. Returns the text
    and the target mention's span projected onto it."""
    target_utt = dialogue.utterance_of(mention)
    first = _window_first_index(target_utt.index, window)
    texts = [u.text for u in dialogue.utterances[first : target_utt.index + 1]]
    offset = sum(len(t) + 1 for t in texts[:-1])
    start, end = mention.span
    return "\n".join(texts), (offset + start, offset + end)


def gold_cluster_output(
    dialogue: Dialogue, mention: Mention, window: ContextWindowSpec
) -> tuple[str, tuple[int, int], CorefClusterOutput]:
    """Project the annotated chains of a window onto its canonical text.

    Stands in for a perfect span-based coreference system: every chain with
    a mention inside the window becomes a cluster of window-level spans.
    The target's own chain is cut off at the target mention, mirroring the
    incremental ground-truth describers. Clusters are ordered by first span.
    """
    target_utt = dialogue.utterance_of(mention)
    first = _window_first_index(target_utt.index, window)
    text, target_span = window_text_for(dialogue, mention, window)
    offsets = {}
    pos = 0
    for u in dialogue.utterances[first : target_utt.index + 1]:
        offsets[u.index] = pos
        pos += len(u.text) + 1

    target_key = _doc_key(target_utt, mention)
    by_chain: dict[str, list[tuple[int, int]]] = {}
    for u, m in dialogue.mentions_in_order():
        if not (first <= u.index <= target_utt.index):
            continue
        if m.chain_id == mention.chain_id and _doc_key(u, m) > target_key:
            continue
        start, end = m.span
        by_chain.setdefault(m.chain_id, []).append((offsets[u.index] + start, offsets[u.index] + end))

    clusters = tuple(sorted((tuple(spans) for spans in by_chain.values()), key=lambda c: c[0]))
    return text, target_span, CorefClusterOutput(clusters)


def _char_overlap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]))


def coref_aggregate(
    window_text: str,
    target_span: tuple[int, int],
    clusters: CorefClusterOutput,
    variant: str = "chain",
    *,
    mention_id: str = "",
    window: ContextWindowSpec = FULL,
) -> ReferentDescription:
    """Aggregate a coreference system's output into a referent description.

    ``variant`` is "chain" (concatenate cluster mention surfaces) or "set"
    (ordered unique tokens). A cluster matches the target span exactly when
    one of its spans equals it; with no overlapping cluster at all the span
    surface is returned unchanged. A partial overlap uses the cluster with
    the most overlapping characters (ties broken toward the earliest
    cluster) and appends whatever target-span tokens the aggregate is still
    missing, so detector misalignments never drop descriptive content.
    """
    text = _aggregate_text(window_text, target_span, clusters, variant)
    return ReferentDescription(mention_id, text, f"coref_{variant}", window)


def _aggregate_text(
    window_text: str,
    target_span: tuple[int, int],
    clusters: CorefClusterOutput,
    variant: str,
) -> str:
    if variant not in ("chain", "set"):
        raise ValueError(f"unknown aggregation variant {variant!r}")
    start, end = target_span
    if not (0 <= start < end <= len(window_text)):
        raise ValueError(f"target span {target_span!r} out of bounds for window text")
    surface = window_text[start:end]

    best = None
    best_overlap = 0
    exact = False
    for cluster in clusters.clusters:
        overlap = max((_char_overlap(span, target_span) for span in cluster), default=0)
        if overlap > best_overlap:
            best, best_overlap = cluster, overlap
        if any(span == target_span for span in cluster):
            best, exact = cluster, True
            break

    if best is None:
        return surface

    # keep cluster spans up to the target plus the detector's own (possibly
    # misaligned) version of it; drop spans that lie wholly after the target
    spans = [s for s in best if s[0] <= start or _char_overlap(s, target_span) > 0]
    spans.sort()
    surfaces = [window_text[s:e] for s, e in spans]
    if variant == "chain":
        text = CHAIN_SEPARATOR.join(surfaces)
    else:
        tokens: list[str] = []
        for s in surfaces:
            tokens.extend(tokenize(s))
        text = " ".join(unique_in_order(tokens))

    if not exact:
        have = set(tokenize(text))
        missing = [t for t in tokenize(surface) if t not in have]
        if missing:
            joiner = CHAIN_SEPARATOR if variant == "chain" else " "
            text = (text + joiner + " ".join(missing)) if text else " ".join(missing)
    return text or surface


def describe_coref(
    dialogue: Dialogue,
    mention: Mention,
    window: ContextWindowSpec,
    variant: str = "chain",
    cluster_source: Callable[
        [Dialogue, Mention, ContextWindowSpec],
        tuple[str, tuple[int, int], CorefClusterOutput],
    ] = gold_cluster_output,
) -> ReferentDescription:
    """Run a cluster source over the window and aggregate its output."""
    text, target_span, clusters = cluster_source(dialogue, mention, window)
    return coref_aggregate(
        text, target_span, clusters, variant, mention_id=mention.mention_id, window=window
    )


def load_cluster_file(path: str | Path) -> dict[tuple[str, str], CorefClusterOutput]:
    """Read precomputed coreference output, one JSON record per line:
    {"mention_id": ..., "window": ..., "clusters": [[[start, end], ...], ...]}.
    Keyed (mention_id, window name) so one file can cover several windows."""
    out: dict[tuple[str, str], CorefClusterOutput] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                key = (obj["mention_id"], obj["window"])
                out[key] = CorefClusterOutput.from_lists(obj["clusters"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad cluster record: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# generator adapter

class GeneratorBackend(Protocol):
    """Anything that maps a serialized prompt to generated text.

    ``mention_id`` is a routing hint for replay-style backends; live
    backends are free to ignore it.
    """

    def generate(self, prompt: str, *, mention_id: str | None = None) -> str: ...


class EchoGeneratorBackend:
    """Returns the marked mention from the prompt. The weakest generator
    that still follows the output contract; handy as a test double."""

    def __init__(self, mention_begin: str = "<m>", mention_end: str = "</m>") -> None:
        self.mention_begin = mention_begin
        self.mention_end = mention_end

    def generate(self, prompt: str, *, mention_id: str | None = None) -> str:
        start = prompt.rfind(self.mention_begin)
        if start == -1:
            return prompt.rsplit("\n", 1)[-1]
        start += len(self.mention_begin)
        end = prompt.find(self.mention_end, start)
        if end == -1:
            end = len(prompt)
        return prompt[start:end].strip()


class FixtureGeneratorBackend:
    """Replays generations recorded in a JSONL file.

    The first line is a header ({"format": "crdg-fixture", "fold_id": ...});
    the rest are {"mention_id", "window", "text"} records. ``fold_id`` tags
    which cross-validation fold the generator was trained for, so runners
    can refuse output produced with test data in training.
    """

    def __init__(self, by_mention: Mapping[str, str], fold_id: str | None = None) -> None:
        self._by_mention = dict(by_mention)
        self.fold_id = fold_id

    @classmethod
    def from_file(cls, path: str | Path, window: str | None = None) -> "FixtureGeneratorBackend":
        by_mention: dict[str, str] = {}
        fold_id = None
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().strip()
            header = json.loads(first) if first else {}
            if header.get("format") != "crdg-fixture":
                raise ValueError(f"{path}: not a generation fixture file")
            fold_id = header.get("fold_id")
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if window is not None and obj.get("window") != window:
                    continue
                if obj["mention_id"] in by_mention:
                    raise ValueError(f"{path}:{lineno}: duplicate generation for {obj['mention_id']!r}")
                by_mention[obj["mention_id"]] = obj["text"]
        return cls(by_mention, fold_id=fold_id)

    def generate(self, prompt: str, *, mention_id: str | None = None) -> str:
        if mention_id is None:
            raise ValueError("fixture backend needs a mention_id to replay")
        try:
            return self._by_mention[mention_id]
        except KeyError:
            raise KeyError(f"no recorded generation for mention {mention_id!r}") from None


class HttpGeneratorBackend:
    """POSTs {"prompt": ...} to a completion endpoint, expects {"text": ...}."""

    def __init__(self, url: str, timeout: float = 30.0) -> None:
        self.url = url
        self.timeout = timeout

    def generate(self, prompt: str, *, mention_id: str | None = None) -> str:
        resp = httpx.post(self.url, json={"prompt": prompt}, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()["text"]


def crdg_generate(sample: SerializedSample, backend: GeneratorBackend) -> ReferentDescription:
    """Ask a conditioned generator for the referent description of a
    serialized sample. Trailing completion-end markers and whitespace are
    stripped; an empty generation is an error, not a description."""
    raw = backend.generate(sample.prompt, mention_id=sample.mention_id)
    text = raw.strip()
    end = sample.marker_config.completion_end
    while text.endswith(end):
        text = text[: -len(end)].strip()
    if not text:
        raise ValueError(f"generator produced no description for mention {sample.mention_id!r}")
    return ReferentDescription(sample.mention_id, text, "crdg", sample.window)


# ---------------------------------------------------------------------------
# registry

def _manual_label_fn(dialogue: Dialogue, mention: Mention, window: ContextWindowSpec) -> str:
    return gt_manual(mention, window).text


LABEL_FUNCTIONS: dict[str, Callable[[Dialogue, Mention, ContextWindowSpec], str]] = {
    "mention": lambda d, m, w: describe_mention(d, m, w).text,
    "substitution": lambda d, m, w: describe_substitution(d, m, w).text,
    "coref_chain": lambda d, m, w: describe_coref(d, m, w, "chain").text,
    "coref_set": lambda d, m, w: describe_coref(d, m, w, "set").text,
    "gt_chain": lambda d, m, w: gt_chain_concat(d, m, w).text,
    "gt_set": lambda d, m, w: gt_set_of_words(d, m, w).text,
    "gt_manual": _manual_label_fn,
}


def label_function(name: str) -> Callable[[Dialogue, Mention, ContextWindowSpec], str]:
    """Look up a describer by name for use as a training-label source."""
    try:
        return LABEL_FUNCTIONS[name]
    except KeyError:
        known = ", ".join(sorted(LABEL_FUNCTIONS))
        raise KeyError(f"unknown label source {name!r} (known: {known})") from None
