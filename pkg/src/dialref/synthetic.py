"""Synthetic fixture corpora.

The genuine game recordings are a separate download, so tests, demos, and
calibration work run on generated stand-ins shaped like the real data:
image sets of nine, two-player dialogues over four rounds, span-annotated
mentions with chains and manual labels, and scripted ranking events that
drive candidate-set reduction.

``agos_like_corpus`` reproduces the published corpus geometry (5 sets x 9
images, 15 dialogues) and scripts each dialogue's ranking events so the
reduced candidate sizes per dialogue are {9,8,7,6,6,6,5,4,3,2}: mean 1/|C|
is 0.21623 and mean 2/|C| is 0.43246, landing on the reported .22/.43
random-baseline row at two decimals.
"""

from __future__ import annotations

import random
from typing import Mapping, Sequence

from .context import FULL, ContextWindowSpec
from .corpus import (
    Corpus,
    Dialogue,
    Image,
    ImageSet,
    Mention,
    RankingEvent,
    Utterance,
)
from .retrieval import PlantedOracleBackend

# reduced candidate sizes scripted into every generated dialogue
REDUCED_SIZE_PROFILE = (9, 8, 7, 6, 6, 6, 5, 4, 3, 2)

CATEGORIES = [
    ("dogs", "dog"),
    ("cats", "cat"),
    ("birds", "bird"),
    ("cars", "car"),
    ("houses", "house"),
    ("boats", "boat"),
    ("chairs", "chair"),
    ("hats", "hat"),
    ("lamps", "lamp"),
    ("trees", "tree"),
]

ADJECTIVES = [
    "fluffy", "sleepy", "grumpy", "happy", "tiny", "striped", "spotted",
    "golden", "shaggy", "muddy", "shiny", "ancient", "crooked", "bright",
    "pale", "fancy",
]

MENTION_TEMPLATES = [
    "I think {} should go next.",
    "Let's put {} in this spot.",
    "How about {} for this position?",
    "My vote is {} here.",
    "Surely {} fits best now.",
]

FILLERS = [
    "Okay, that one is settled.",
    "Agreed, moving on.",
    "Fine by me.",
    "Good, next position then.",
    "Works for me, let's continue.",
]


def _utt_with_mention(
    index: int,
    speaker: str,
    round_: int,
    template: str,
    expr: str,
    mention_id: str,
    referent_ids: Sequence[str],
    chain_id: str,
    manual_labels: Mapping[str, str] | None = None,
) -> Utterance:
    prefix = template.split("{}", 1)[0]
    mention = Mention(
        mention_id=mention_id,
        span=(len(prefix), len(prefix) + len(expr)),
        referent_image_ids=frozenset(referent_ids),
        chain_id=chain_id,
        manual_labels=dict(manual_labels or {}),
    )
    return Utterance(
        index=index,
        speaker=speaker,
        text=template.format(expr),
        round=round_,
        mentions=(mention,),
    )


def _filler(index: int, speaker: str, round_: int, text: str) -> Utterance:
    return Utterance(index=index, speaker=speaker, text=text, round=round_)


# ---------------------------------------------------------------------------
# hand-written fixtures

def figure_fixture_corpus() -> Corpus:
    """The worked fruit-ranking exchange used across tests and docs.

    Six utterances over one round: a plural mention, an anchor description,
    a pronoun, a second referent, and two increasingly vague rementions of
    the anchor. Manual labels disclose the referent per window.
    """
    ids = [
        "red_apple", "green_apple", "red_strawberry", "banana", "orange",
        "lemon", "pear", "kiwi", "plum",
    ]
    images = tuple(Image(i, f"images/fruits/{i}.png") for i in ids)
    fruits = ImageSet(set_id="fruits", category="fruits", images=images)

    apple_labels = {k: "the apple with the stem" for k in ("3", "7", "13", "full")}
    dialogue = Dialogue(
        dialogue_id="fruits-d1",
        image_set_id="fruits",
        task_instructions="Rank the nine fruit images from most to least appealing.",
        utterances=(
            _utt_with_mention(
                0, "A", 1, "Let's start with {}.", "the apples",
                "fig-m0", ["red_apple", "green_apple"], "c-apples",
            ),
            _utt_with_mention(
                1, "B", 1, "I like {} with the stem.", "the apple",
                "fig-m1", ["red_apple"], "c-red-apple", apple_labels,
            ),
            _utt_with_mention(
                2, "A", 1, "Yeah, {} looks good.", "it",
                "fig-m2", ["red_apple"], "c-red-apple", apple_labels,
            ),
            _utt_with_mention(
                3, "B", 1, "What about {}?", "the strawberry",
                "fig-m3", ["red_strawberry"], "c-strawberry",
                {k: "the red strawberry" for k in ("3", "7", "13", "full")},
            ),
            _utt_with_mention(
                4, "A", 1, "I like {}.", "the shiny one",
                "fig-m4", ["red_apple"], "c-red-apple",
                {k: "the shiny apple" for k in ("3", "7", "13", "full")},
            ),
            _utt_with_mention(
                5, "B", 1, "Do you mean {}?", "that red one",
                "fig-m5", ["red_apple"], "c-red-apple",
                {
                    "3": "the shiny red one",
                    "7": "the shiny red apple",
                    "13": "the shiny red apple",
                    "full": "the shiny red apple",
                },
            ),
        ),
    )
    return Corpus(image_sets=(fruits,), dialogues=(dialogue,))


TOOL_SPECS = [
    ("t1", "hammer", "sturdy"),
    ("t2", "saw", "long"),
    ("t3", "wrench", "rusty"),
    ("t4", "chisel", "sharp"),
    ("t5", "drill", "heavy"),
    ("t6", "level", "yellow"),
    ("t7", "pliers", "small"),
    ("t8", "clamp", "broad"),
    ("t9", "file", "narrow"),
]


def reduction_fixture_corpus() -> Corpus:
    """Scripted ranking events with hand-computed candidate sizes.

    Reduced sizes at the five mentions are 9, 7, 7, 6, 9; the third
    mention refers back to an image ranked two utterances earlier and is
    therefore unresolvable under reduction.
    """
    labels = {tid: f"the {adj} {name}" for tid, name, adj in TOOL_SPECS}
    all_windows = ("3", "7", "13", "full")

    def manual(tid: str) -> dict[str, str]:
        return {k: labels[tid] for k in all_windows}

    images = tuple(Image(tid, f"images/tools/{tid}.png") for tid, _, _ in TOOL_SPECS)
    tools = ImageSet(set_id="tools", category="tools", images=images)
    dialogue = Dialogue(
        dialogue_id="tools-d1",
        image_set_id="tools",
        task_instructions="Rank the nine tool images by usefulness.",
        utterances=(
            _utt_with_mention(
                0, "A", 1, "Let's check {} first.", "the hammer",
                "tools-m0", ["t1"], "c-t1", manual("t1"),
            ),
            _filler(1, "B", 1, "Done, the hammer and the saw are placed."),
            _utt_with_mention(
                2, "A", 1, "Now {} goes here.", "the wrench",
                "tools-m1", ["t3"], "c-t3", manual("t3"),
            ),
            _utt_with_mention(
                3, "B", 1, "Wait, {} again?", "the hammer",
                "tools-m2", ["t1"], "c-t1", manual("t1"),
            ),
            _filler(4, "A", 1, "The wrench is done too."),
            _utt_with_mention(
                5, "B", 1, "Then {} next.", "the chisel",
                "tools-m3", ["t4"], "c-t4", manual("t4"),
            ),
            _utt_with_mention(
                6, "A", 2, "New round, start with {}.", "the saw",
                "tools-m4", ["t2"], "c-t2", manual("t2"),
            ),
        ),
        ranking_events=(
            RankingEvent("t1", 1, 1),
            RankingEvent("t2", 1, 1),
            RankingEvent("t3", 1, 4),
        ),
    )
    return Corpus(image_sets=(tools,), dialogues=(dialogue,))


# expected reduced candidate sizes for reduction_fixture_corpus, in
# mention document order; tools-m2 is the unresolvable one
REDUCTION_FIXTURE_SIZES = (9, 7, 7, 6, 9)


# ---------------------------------------------------------------------------
# generated corpus with the published geometry

def agos_like_corpus(n_sets: int = 5, dialogues_per_set: int = 3, seed: int = 7) -> Corpus:
    """Generate a corpus with the real release's shape and reduction profile.

    Every dialogue has 20 utterances across 4 rounds, 10 single-image
    mentions whose reduced candidate sizes follow REDUCED_SIZE_PROFILE,
    and manual labels for every window. Image labels are unique within a
    set, so a backend planted with them retrieves perfectly.
    """
    if not 1 <= n_sets <= len(CATEGORIES):
        raise ValueError(f"n_sets must be in 1..{len(CATEGORIES)}")
    if dialogues_per_set < 1:
        raise ValueError("dialogues_per_set must be positive")

    image_sets = []
    dialogues = []
    for k in range(n_sets):
        plural, noun = CATEGORIES[k]
        rng_set = random.Random(f"{seed}|{plural}")
        adjectives = rng_set.sample(ADJECTIVES, 9)
        ids = [f"{plural}-img{i}" for i in range(1, 10)]
        labels = {img: f"the {adj} {noun}" for img, adj in zip(ids, adjectives)}
        image_sets.append(
            ImageSet(
                set_id=plural,
                category=plural,
                images=tuple(Image(img, f"images/{plural}/{img}.png") for img in ids),
            )
        )
        for j in range(1, dialogues_per_set + 1):
            dialogues.append(_agos_dialogue(plural, j, ids, labels, seed))
    return Corpus(image_sets=tuple(image_sets), dialogues=tuple(dialogues))


def _agos_dialogue(
    set_id: str,
    j: int,
    image_ids: Sequence[str],
    labels: Mapping[str, str],
    seed: int,
) -> Dialogue:
    rng = random.Random(f"{seed}|{set_id}|d{j}")
    dialogue_id = f"{set_id}-d{j}"
    perms = {r: rng.sample(list(image_ids), 9) for r in (1, 2, 3, 4)}

    # (utterance index, round, referent): candidate sizes follow
    # REDUCED_SIZE_PROFILE given the event script below
    mention_plan = [
        (0, 1, perms[1][2]),
        (2, 1, perms[1][3]),
        (4, 1, perms[1][4]),
        (8, 2, perms[2][3]),
        (9, 2, perms[2][4]),
        (10, 2, perms[2][5]),
        (12, 3, perms[3][6]),
        (14, 3, perms[3][7]),
        (16, 3, perms[3][8]),
        (18, 4, perms[4][7]),
    ]
    events = (
        RankingEvent(perms[1][0], 1, 1),
        RankingEvent(perms[1][1], 1, 3),
        RankingEvent(perms[2][0], 2, 7),
        RankingEvent(perms[2][1], 2, 7),
        RankingEvent(perms[2][2], 2, 7),
        RankingEvent(perms[3][0], 3, 11),
        RankingEvent(perms[3][1], 3, 11),
        RankingEvent(perms[3][2], 3, 11),
        RankingEvent(perms[3][3], 3, 11),
        RankingEvent(perms[3][4], 3, 13),
        RankingEvent(perms[3][5], 3, 15),
        RankingEvent(perms[4][0], 4, 17),
        RankingEvent(perms[4][1], 4, 17),
        RankingEvent(perms[4][2], 4, 17),
        RankingEvent(perms[4][3], 4, 17),
        RankingEvent(perms[4][4], 4, 17),
        RankingEvent(perms[4][5], 4, 17),
        RankingEvent(perms[4][6], 4, 17),
    )

    def round_of(index: int) -> int:
        if index <= 5:
            return 1
        if index <= 10:
            return 2
        if index <= 16:
            return 3
        return 4

    by_index = {idx: (rnd, ref) for idx, rnd, ref in mention_plan}
    utterances = []
    n = 0
    for idx in range(20):
        speaker = "A" if idx % 2 == 0 else "B"
        if idx in by_index:
            rnd, ref = by_index[idx]
            label = labels[ref]
            adj = label.split()[1]
            expr = f"that {adj} one" if rng.random() < 0.25 else label
            utterances.append(
                _utt_with_mention(
                    idx, speaker, rnd, rng.choice(MENTION_TEMPLATES), expr,
                    f"{dialogue_id}-m{n}", [ref], f"c-{dialogue_id}-{ref}",
                    {k: label for k in ("3", "7", "13", "full")},
                )
            )
            n += 1
        else:
            utterances.append(_filler(idx, speaker, round_of(idx), rng.choice(FILLERS)))

    return Dialogue(
        dialogue_id=dialogue_id,
        image_set_id=set_id,
        task_instructions=f"Rank the nine {set_id} from best to worst for the story.",
        utterances=tuple(utterances),
        ranking_events=events,
    )


def planted_backend_for(
    corpus: Corpus, window: ContextWindowSpec = FULL, dimension: int = 64
) -> PlantedOracleBackend:
    """Plant each image's vector at its manual-label text for ``window``.

    The label comes from the first single-image mention of that image (in
    corpus order) carrying one; images nobody mentions fall back to their
    id. With per-image-unique labels this makes gt_manual retrieval exact.
    """
    planted: dict[str, str] = {}
    for d in corpus.dialogues:
        for _, m in d.mentions_in_order():
            if m.is_single_image and window.label_key in m.manual_labels:
                planted.setdefault(m.referent, m.manual_labels[window.label_key])
    return PlantedOracleBackend(planted, dimension=dimension)
