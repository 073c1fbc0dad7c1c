"""Data model and I/O for annotated image-ranking dialogues.

A corpus is a set of image sets plus dialogues played over them. Every
dialogue is a sequence of utterances; utterances carry mention spans that
are aligned with the image(s) they denote. Ranking events record when an
image was successfully ranked, which is what drives candidate-set
reduction at evaluation time.

Corpus objects are immutable after load and safe for concurrent reads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

SPEAKERS = ("A", "B")
ROUNDS = (1, 2, 3, 4)
MANUAL_LABEL_KEYS = ("3", "7", "13", "full")


class CorpusError(Exception):
    """Base class for corpus loading/validation failures."""


class CorpusLoadError(CorpusError):
    """The file could not be parsed as a corpus."""


class CorpusValidationError(CorpusError):
    """The parsed corpus violates a schema invariant."""


@dataclass(frozen=True)
class Image:
    image_id: str
    uri: str


@dataclass(frozen=True)
class ImageSet:
    set_id: str
    category: str
    images: tuple[Image, ...]

    def image_ids(self) -> list[str]:
        return [img.image_id for img in self.images]


@dataclass(frozen=True)
class Mention:
    """A span of utterance text denoting one or more images.

    ``span`` is a [start, end) character offset pair into the utterance
    text, so tokenization changes never invalidate annotations.
    ``chain_id`` groups mentions standing in an identity relation.
    ``manual_labels`` maps a context-window name ("3", "7", "13", "full")
    to a hand-written definite description of the referent as disclosed
    within that window.
    """

    mention_id: str
    span: tuple[int, int]
    referent_image_ids: frozenset[str]
    chain_id: str
    manual_labels: Mapping[str, str] = field(default_factory=dict)

    @property
    def is_single_image(self) -> bool:
        return len(self.referent_image_ids) == 1

    @property
    def referent(self) -> str:
        """The referent image id; only defined for single-image mentions."""
        if not self.is_single_image:
            raise ValueError(f"mention {self.mention_id} has {len(self.referent_image_ids)} referents")
        return next(iter(self.referent_image_ids))


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker: str
    text: str
    round: int
    mentions: tuple[Mention, ...] = ()

    def surface(self, mention: Mention) -> str:
        start, end = mention.span
        return self.text[start:end]


@dataclass(frozen=True)
class RankingEvent:
    """An image successfully ranked at a given point in the interaction."""

    image_id: str
    round: int
    utterance_index: int


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    image_set_id: str
    task_instructions: str
    utterances: tuple[Utterance, ...]
    ranking_events: tuple[RankingEvent, ...] = ()

    def mentions_in_order(self) -> list[tuple[Utterance, Mention]]:
        """All (utterance, mention) pairs in document order.

        Document order is (utterance index, span start, span end); nested
        and overlapping spans are permitted so ties fall back to
        annotation order.
        """
        pairs = [(utt, m) for utt in self.utterances for m in utt.mentions]
        pairs.sort(key=lambda p: (p[0].index, p[1].span[0], p[1].span[1]))
        return pairs

    def find_mention(self, mention_id: str) -> tuple[Utterance, Mention]:
        for utt in self.utterances:
            for m in utt.mentions:
                if m.mention_id == mention_id:
                    return utt, m
        raise KeyError(f"mention {mention_id!r} not in dialogue {self.dialogue_id!r}")

    def utterance_of(self, mention: Mention) -> Utterance:
        for utt in self.utterances:
            if any(m is mention or m.mention_id == mention.mention_id for m in utt.mentions):
                return utt
        raise KeyError(f"mention {mention.mention_id!r} not in dialogue {self.dialogue_id!r}")


@dataclass(frozen=True)
class FoldSpec:
    """One cross-validation fold: one image set held out for testing."""

    fold_id: str
    test_image_set_id: str
    train_dialogue_ids: tuple[str, ...]
    test_dialogue_ids: tuple[str, ...]


@dataclass(frozen=True)
class Corpus:
    """Validated, immutable corpus: image sets plus their dialogues."""

    image_sets: tuple[ImageSet, ...]
    dialogues: tuple[Dialogue, ...]

    def __post_init__(self) -> None:
        _validate(self)

    def image_set(self, set_id: str) -> ImageSet:
        for s in self.image_sets:
            if s.set_id == set_id:
                return s
        raise KeyError(f"unknown image set {set_id!r}")

    def dialogue(self, dialogue_id: str) -> Dialogue:
        for d in self.dialogues:
            if d.dialogue_id == dialogue_id:
                return d
        raise KeyError(f"unknown dialogue {dialogue_id!r}")

    def dialogues_for_set(self, set_id: str) -> list[Dialogue]:
        return [d for d in self.dialogues if d.image_set_id == set_id]

    def groups(self) -> list[tuple[ImageSet, list[Dialogue]]]:
        return [(s, self.dialogues_for_set(s.set_id)) for s in self.image_sets]

    def __iter__(self) -> Iterator[tuple[ImageSet, list[Dialogue]]]:
        return iter(self.groups())

    def content_hash(self) -> str:
        """Stable hash of the canonical serialization."""
        digest = hashlib.sha256()
        for record in _records(self):
            digest.update(json.dumps(record, sort_keys=True, ensure_ascii=False).encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()


def _err(msg: str) -> CorpusValidationError:
    return CorpusValidationError(msg)


def _validate(corpus: Corpus) -> None:
    set_ids = [s.set_id for s in corpus.image_sets]
    if len(set(set_ids)) != len(set_ids):
        raise _err("duplicate image set ids")
    for s in corpus.image_sets:
        if not s.images:
            raise _err(f"image set {s.set_id!r} has no images")
        ids = s.image_ids()
        if len(set(ids)) != len(ids):
            raise _err(f"duplicate image ids in set {s.set_id!r}")

    dialogue_ids = [d.dialogue_id for d in corpus.dialogues]
    if len(set(dialogue_ids)) != len(dialogue_ids):
        raise _err("duplicate dialogue ids")

    seen_mentions: set[str] = set()
    for d in corpus.dialogues:
        try:
            image_ids = set(corpus.image_set(d.image_set_id).image_ids())
        except KeyError:
            raise _err(f"dialogue {d.dialogue_id!r} references unknown image set {d.image_set_id!r}")

        for i, utt in enumerate(d.utterances):
            where = f"dialogue {d.dialogue_id!r} utterance {i}"
            if utt.index != i:
                raise _err(f"{where}: index {utt.index} not contiguous from 0")
            if utt.speaker not in SPEAKERS:
                raise _err(f"{where}: speaker {utt.speaker!r} not in {SPEAKERS}")
            if utt.round not in ROUNDS:
                raise _err(f"{where}: round {utt.round} not in {ROUNDS}")
            for m in utt.mentions:
                mwhere = f"{where} mention {m.mention_id!r}"
                start, end = m.span
                if not (0 <= start < end <= len(utt.text)):
                    raise _err(f"{mwhere}: span [{start}, {end}) out of bounds for text of length {len(utt.text)}")
                if not m.referent_image_ids:
                    raise _err(f"{mwhere}: empty referent set")
                dangling = m.referent_image_ids - image_ids
                if dangling:
                    raise _err(f"{mwhere}: dangling image references {sorted(dangling)}")
                if not m.chain_id:
                    raise _err(f"{mwhere}: empty chain id")
                bad_keys = set(m.manual_labels) - set(MANUAL_LABEL_KEYS)
                if bad_keys:
                    raise _err(f"{mwhere}: unknown manual label keys {sorted(bad_keys)}")
                if m.mention_id in seen_mentions:
                    raise _err(f"{mwhere}: duplicate mention id")
                seen_mentions.add(m.mention_id)

        # identity relations only: a chain may not mix referent sets
        chains: dict[str, frozenset[str]] = {}
        for utt in d.utterances:
            for m in utt.mentions:
                prev = chains.setdefault(m.chain_id, m.referent_image_ids)
                if prev != m.referent_image_ids:
                    raise _err(
                        f"dialogue {d.dialogue_id!r} chain {m.chain_id!r} mixes referent sets "
                        f"{sorted(prev)} and {sorted(m.referent_image_ids)}"
                    )

        n_utts = len(d.utterances)
        ranked_per_round: set[tuple[str, int]] = set()
        for ev in d.ranking_events:
            ewhere = f"dialogue {d.dialogue_id!r} ranking event for {ev.image_id!r}"
            if ev.image_id not in image_ids:
                raise _err(f"{ewhere}: unknown image")
            if not (0 <= ev.utterance_index < n_utts):
                raise _err(f"{ewhere}: utterance index {ev.utterance_index} out of bounds")
            key = (ev.image_id, ev.round)
            if key in ranked_per_round:
                raise _err(f"{ewhere}: image ranked twice in round {ev.round}")
            ranked_per_round.add(key)


# ---------------------------------------------------------------------------
# serialization: UTF-8 line-delimited JSON, one image_set or dialogue record
# per line; spans stored as [start, end) character offsets.

def _image_set_record(s: ImageSet) -> dict:
    return {
        "kind": "image_set",
        "set_id": s.set_id,
        "category": s.category,
        "images": [{"image_id": i.image_id, "uri": i.uri} for i in s.images],
    }


def _dialogue_record(d: Dialogue) -> dict:
    return {
        "kind": "dialogue",
        "dialogue_id": d.dialogue_id,
        "image_set_id": d.image_set_id,
        "task_instructions": d.task_instructions,
        "utterances": [
            {
                "index": u.index,
                "speaker": u.speaker,
                "text": u.text,
                "round": u.round,
                "mentions": [
                    {
                        "mention_id": m.mention_id,
                        "span": list(m.span),
                        "referent_image_ids": sorted(m.referent_image_ids),
                        "chain_id": m.chain_id,
                        "manual_labels": {k: m.manual_labels[k] for k in MANUAL_LABEL_KEYS if k in m.manual_labels},
                    }
                    for m in u.mentions
                ],
            }
            for u in d.utterances
        ],
        "ranking_events": [
            {"image_id": e.image_id, "round": e.round, "utterance_index": e.utterance_index}
            for e in d.ranking_events
        ],
    }


def _records(corpus: Corpus) -> list[dict]:
    return [_image_set_record(s) for s in corpus.image_sets] + [_dialogue_record(d) for d in corpus.dialogues]


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical line-delimited form; load/save round-trips byte-equivalently."""
    with open(path, "w", encoding="utf-8") as f:
        for record in _records(corpus):
            f.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            f.write("\n")


def _parse_mention(obj: dict, where: str) -> Mention:
    try:
        span = obj["span"]
        return Mention(
            mention_id=obj["mention_id"],
            span=(int(span[0]), int(span[1])),
            referent_image_ids=frozenset(obj["referent_image_ids"]),
            chain_id=obj["chain_id"],
            manual_labels=dict(obj.get("manual_labels", {})),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise CorpusLoadError(f"{where}: bad mention record: {exc}") from exc


def _parse_dialogue(obj: dict) -> Dialogue:
    did = obj.get("dialogue_id", "<missing id>")
    where = f"dialogue {did!r}"
    try:
        utterances = tuple(
            Utterance(
                index=int(u["index"]),
                speaker=u["speaker"],
                text=u["text"],
                round=int(u["round"]),
                mentions=tuple(
                    _parse_mention(m, f"{where} utterance {u['index']}") for m in u.get("mentions", [])
                ),
            )
            for u in obj["utterances"]
        )
        events = tuple(
            RankingEvent(image_id=e["image_id"], round=int(e["round"]), utterance_index=int(e["utterance_index"]))
            for e in obj.get("ranking_events", [])
        )
        return Dialogue(
            dialogue_id=obj["dialogue_id"],
            image_set_id=obj["image_set_id"],
            task_instructions=obj.get("task_instructions", ""),
            utterances=utterances,
            ranking_events=events,
        )
    except CorpusLoadError:
        raise
    except (KeyError, TypeError) as exc:
        raise CorpusLoadError(f"{where}: bad dialogue record: {exc}") from exc


def _parse_image_set(obj: dict) -> ImageSet:
    where = f"image set {obj.get('set_id', '<missing id>')!r}"
    try:
        return ImageSet(
            set_id=obj["set_id"],
            category=obj["category"],
            images=tuple(Image(image_id=i["image_id"], uri=i["uri"]) for i in obj["images"]),
        )
    except (KeyError, TypeError) as exc:
        raise CorpusLoadError(f"{where}: bad image set record: {exc}") from exc


def load_corpus(path: str | Path) -> Corpus:
    """Load and fully validate a corpus file.

    Raises CorpusLoadError on malformed records and CorpusValidationError
    (naming the dialogue/utterance) on invariant violations.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusLoadError(f"no such corpus file: {path}")
    image_sets: list[ImageSet] = []
    dialogues: list[Dialogue] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusLoadError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            kind = obj.get("kind")
            if kind == "image_set":
                image_sets.append(_parse_image_set(obj))
            elif kind == "dialogue":
                dialogues.append(_parse_dialogue(obj))
            else:
                raise CorpusLoadError(f"{path}:{lineno}: unknown record kind {kind!r}")
    return Corpus(image_sets=tuple(image_sets), dialogues=tuple(dialogues))


# ---------------------------------------------------------------------------
# game-state tracking and evaluation partitions

def candidate_set_at(corpus: Corpus, dialogue: Dialogue, mention: Mention, *, reduced: bool) -> list[Image]:
    """Candidate images for a mention, in canonical (declaration) order.

    With ``reduced=False`` this is the full image set. With
    ``reduced=True``, images ranked earlier in the mention's round are
    removed: a ranking event with the same round and a strictly smaller
    utterance index takes its image out of the visual context. A mention
    whose referent was ranked away stays in the corpus but becomes
    unresolvable; evaluation counts such items as failures.
    """
    utt = dialogue.utterance_of(mention)
    image_set = corpus.image_set(dialogue.image_set_id)
    if not reduced:
        return list(image_set.images)
    ranked = {
        ev.image_id
        for ev in dialogue.ranking_events
        if ev.round == utt.round and ev.utterance_index < utt.index
    }
    return [img for img in image_set.images if img.image_id not in ranked]


def make_folds(corpus: Corpus) -> list[FoldSpec]:
    """One cross-validation fold per image set: that set's dialogues held out."""
    if len(corpus.image_sets) < 2:
        raise CorpusError("cross-validation needs at least 2 image sets")
    folds = []
    for s in corpus.image_sets:
        test = tuple(d.dialogue_id for d in corpus.dialogues if d.image_set_id == s.set_id)
        train = tuple(d.dialogue_id for d in corpus.dialogues if d.image_set_id != s.set_id)
        folds.append(
            FoldSpec(
                fold_id=s.set_id,
                test_image_set_id=s.set_id,
                train_dialogue_ids=train,
                test_dialogue_ids=test,
            )
        )
    return folds


def single_image_mentions(dialogue: Dialogue) -> list[Mention]:
    """Mentions with exactly one referent image, in document order."""
    return [m for _, m in dialogue.mentions_in_order() if m.is_single_image]
