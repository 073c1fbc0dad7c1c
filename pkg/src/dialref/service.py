"""HTTP service for the two human-evaluation protocols.

Independent mode shows one manually written description at a time with
its reduced candidate set; the participant picks a single image. Holistic
mode walks a participant through one dialogue mention by mention,
revealing the transcript up to each mention's utterance, showing all nine
images with their ranked status, and allowing multi-selection.

State is kept in memory and mirrored to an append-only JSONL event log;
replaying the log after a crash reproduces every session and response.
Scoring follows the strict reading: a response to a single-image item is
correct only when the selected set equals the referent set exactly.
"""

from __future__ import annotations

import json
import random
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .corpus import Corpus, Dialogue, Mention, candidate_set_at

MODES = ("independent", "holistic")

EVENT_SESSION = "session_created"
EVENT_RESPONSE = "response_submitted"


@dataclass(frozen=True)
class Response:
    item_id: str
    selected_image_ids: tuple[str, ...]
    latency_ms: int
    timestamp: float
    ranked_selected: bool = False


@dataclass
class ExperimentSession:
    session_id: str
    mode: str
    participant_id: str
    items: tuple[tuple[str, str], ...]  # (dialogue_id, mention_id)
    dialogue_id: str | None = None  # holistic only
    cursor: int = 0
    responses: dict[str, Response] = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return self.cursor >= len(self.items)

    @property
    def completion_code(self) -> str:
        return f"DR-{self.session_id[:8].upper()}"


def item_id_for(dialogue_id: str, mention_id: str) -> str:
    return f"{dialogue_id}:{mention_id}"


def _ranked_at(dialogue: Dialogue, mention: Mention) -> set[str]:
    """Images already ranked in the mention's round at its utterance."""
    utt = dialogue.utterance_of(mention)
    return {
        ev.image_id
        for ev in dialogue.ranking_events
        if ev.round == utt.round and ev.utterance_index < utt.index
    }


class SessionStore:
    """Holds all sessions; every mutation is appended to the event log.

    ``log_path=None`` keeps the store purely in memory. Mutations are
    serialized by a single lock (sessions are low-traffic); reads of
    consistent snapshots take the same lock briefly.
    """

    def __init__(
        self,
        corpus: Corpus,
        log_path: str | Path | None = None,
        seed: int = 0,
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.corpus = corpus
        self.log_path = Path(log_path) if log_path is not None else None
        self.seed = seed
        self.clock = clock
        self.sessions: dict[str, ExperimentSession] = {}
        self._lock = threading.Lock()
        self._counter = 0
        if self.log_path is not None and self.log_path.exists():
            self._replay()

    # -- event log ---------------------------------------------------------

    def _append(self, record: dict) -> None:
        if self.log_path is None:
            return
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    def _replay(self) -> None:
        with open(self.log_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                event = record.get("event")
                if event == EVENT_SESSION:
                    s = record["session"]
                    session = ExperimentSession(
                        session_id=s["session_id"],
                        mode=s["mode"],
                        participant_id=s["participant_id"],
                        items=tuple((d, m) for d, m in s["items"]),
                        dialogue_id=s.get("dialogue_id"),
                    )
                    self.sessions[session.session_id] = session
                    self._counter += 1
                elif event == EVENT_RESPONSE:
                    session = self.sessions[record["session_id"]]
                    response = Response(
                        item_id=record["item_id"],
                        selected_image_ids=tuple(record["selected_image_ids"]),
                        latency_ms=record["latency_ms"],
                        timestamp=record["timestamp"],
                        ranked_selected=record.get("ranked_selected", False),
                    )
                    session.responses[response.item_id] = response
                    session.cursor += 1
                else:
                    raise ValueError(f"{self.log_path}:{lineno}: unknown event {event!r}")

    # -- session creation --------------------------------------------------

    def _independent_items(self, max_items: int | None, session_id: str) -> tuple[tuple[str, str], ...]:
        items = []
        for d in self.corpus.dialogues:
            for _, m in d.mentions_in_order():
                if not m.is_single_image or "full" not in m.manual_labels:
                    continue
                candidates = candidate_set_at(self.corpus, d, m, reduced=True)
                if any(img.image_id == m.referent for img in candidates):
                    items.append((d.dialogue_id, m.mention_id))
        rng = random.Random(f"{self.seed}|{session_id}")
        rng.shuffle(items)
        if max_items is not None:
            items = items[:max_items]
        return tuple(items)

    def _assign_holistic_dialogue(self, participant_id: str) -> Dialogue:
        covered_sets = {
            self.sessions[sid].dialogue_id
            for sid in self.sessions
            if self.sessions[sid].mode == "holistic"
            and self.sessions[sid].participant_id == participant_id
        }
        covered_sets = {
            self.corpus.dialogue(d).image_set_id for d in covered_sets if d is not None
        }
        load = {d.dialogue_id: 0 for d in self.corpus.dialogues}
        for s in self.sessions.values():
            if s.mode == "holistic" and s.dialogue_id is not None:
                load[s.dialogue_id] += 1
        eligible = [d for d in self.corpus.dialogues if d.image_set_id not in covered_sets]
        if not eligible:
            raise HTTPException(
                status_code=409,
                detail=f"participant {participant_id!r} already covered every image set "
                "(at most one dialogue per image set)",
            )
        return min(eligible, key=lambda d: load[d.dialogue_id])

    def create_session(
        self, mode: str, participant_id: str, max_items: int | None = None
    ) -> ExperimentSession:
        if mode not in MODES:
            raise HTTPException(status_code=422, detail=f"unknown mode {mode!r}")
        if not participant_id:
            raise HTTPException(status_code=422, detail="participant_id must be non-empty")
        with self._lock:
            self._counter += 1
            session_id = uuid.uuid5(
                uuid.NAMESPACE_URL, f"dialref|{self.seed}|{self._counter}|{participant_id}"
            ).hex
            if mode == "independent":
                items = self._independent_items(max_items, session_id)
                dialogue_id = None
            else:
                dialogue = self._assign_holistic_dialogue(participant_id)
                dialogue_id = dialogue.dialogue_id
                items = tuple(
                    (dialogue.dialogue_id, m.mention_id)
                    for _, m in dialogue.mentions_in_order()
                )
            if not items:
                raise HTTPException(status_code=409, detail="no items available for this session")
            session = ExperimentSession(
                session_id=session_id,
                mode=mode,
                participant_id=participant_id,
                items=items,
                dialogue_id=dialogue_id,
            )
            self.sessions[session_id] = session
            self._append(
                {
                    "event": EVENT_SESSION,
                    "session": {
                        "session_id": session_id,
                        "mode": mode,
                        "participant_id": participant_id,
                        "items": [list(i) for i in items],
                        "dialogue_id": dialogue_id,
                    },
                }
            )
            return session

    def get(self, session_id: str) -> ExperimentSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}") from None

    # -- stimuli -----------------------------------------------------------

    def next_stimulus(self, session_id: str) -> dict:
        with self._lock:
            session = self.get(session_id)
            if session.completed:
                return {"done": True, "completion_code": session.completion_code}
            dialogue_id, mention_id = session.items[session.cursor]
            dialogue = self.corpus.dialogue(dialogue_id)
            _, mention = dialogue.find_mention(mention_id)
            if session.mode == "independent":
                return self._independent_stimulus(session, dialogue, mention)
            return self._holistic_stimulus(session, dialogue, mention)

    def _independent_stimulus(
        self, session: ExperimentSession, dialogue: Dialogue, mention: Mention
    ) -> dict:
        candidates = candidate_set_at(self.corpus, dialogue, mention, reduced=True)
        item_id = item_id_for(dialogue.dialogue_id, mention.mention_id)
        rng = random.Random(f"{self.seed}|{session.session_id}|{item_id}")
        shuffled = list(candidates)
        rng.shuffle(shuffled)
        return {
            "done": False,
            "mode": "independent",
            "item_id": item_id,
            "index": session.cursor,
            "n_items": len(session.items),
            "description": mention.manual_labels["full"],
            "candidates": [
                {"image_id": img.image_id, "uri": img.uri} for img in shuffled
            ],
            "multi_select": False,
        }

    def _holistic_stimulus(
        self, session: ExperimentSession, dialogue: Dialogue, mention: Mention
    ) -> dict:
        utt = dialogue.utterance_of(mention)
        ranked = _ranked_at(dialogue, mention)
        image_set = self.corpus.image_set(dialogue.image_set_id)
        prefix = [
            {"index": u.index, "speaker": u.speaker, "text": u.text}
            for u in dialogue.utterances[: utt.index + 1]
        ]
        return {
            "done": False,
            "mode": "holistic",
            "item_id": item_id_for(dialogue.dialogue_id, mention.mention_id),
            "index": session.cursor,
            "n_items": len(session.items),
            "utterances": prefix,
            "mention": {
                "utterance_index": utt.index,
                "span": list(mention.span),
                "surface": utt.surface(mention),
            },
            "candidates": [
                {"image_id": img.image_id, "uri": img.uri, "ranked": img.image_id in ranked}
                for img in image_set.images
            ],
            "multi_select": True,
        }

    # -- responses ---------------------------------------------------------

    def submit_response(
        self, session_id: str, item_id: str, selected_image_ids: Sequence[str], latency_ms: int = 0
    ) -> dict:
        with self._lock:
            session = self.get(session_id)
            selection = tuple(sorted(set(selected_image_ids)))
            if not selection:
                raise HTTPException(status_code=422, detail="selection must be non-empty")
            if latency_ms < 0:
                raise HTTPException(status_code=422, detail="latency_ms must be non-negative")

            previous = session.responses.get(item_id)
            if previous is not None:
                if previous.selected_image_ids == selection:
                    return {
                        "cursor": session.cursor,
                        "completed": session.completed,
                        "replayed": True,
                    }
                raise HTTPException(
                    status_code=409,
                    detail=f"item {item_id!r} already has a different response",
                )
            if session.completed:
                raise HTTPException(status_code=409, detail="session already completed")

            expected = item_id_for(*session.items[session.cursor])
            if item_id != expected:
                raise HTTPException(
                    status_code=409,
                    detail=f"out-of-order submission: expected item {expected!r}, got {item_id!r}",
                )

            dialogue_id, mention_id = session.items[session.cursor]
            dialogue = self.corpus.dialogue(dialogue_id)
            _, mention = dialogue.find_mention(mention_id)
            if session.mode == "independent":
                shown = {
                    img.image_id
                    for img in candidate_set_at(self.corpus, dialogue, mention, reduced=True)
                }
                if len(selection) != 1:
                    raise HTTPException(
                        status_code=422, detail="independent mode takes exactly one image"
                    )
            else:
                shown = set(self.corpus.image_set(dialogue.image_set_id).image_ids())
            outside = set(selection) - shown
            if outside:
                raise HTTPException(
                    status_code=422,
                    detail=f"selection outside shown candidates: {sorted(outside)}",
                )

            ranked_selected = (
                session.mode == "holistic"
                and bool(set(selection) & _ranked_at(dialogue, mention))
            )
            response = Response(
                item_id=item_id,
                selected_image_ids=selection,
                latency_ms=int(latency_ms),
                timestamp=self.clock(),
                ranked_selected=ranked_selected,
            )
            session.responses[item_id] = response
            session.cursor += 1
            self._append(
                {
                    "event": EVENT_RESPONSE,
                    "session_id": session.session_id,
                    "item_id": response.item_id,
                    "selected_image_ids": list(response.selected_image_ids),
                    "latency_ms": response.latency_ms,
                    "timestamp": response.timestamp,
                    "ranked_selected": response.ranked_selected,
                }
            )
            return {
                "cursor": session.cursor,
                "completed": session.completed,
                "replayed": False,
                "completion_code": session.completion_code if session.completed else None,
            }

    def export_results(self) -> str:
        """Line-delimited Response records across all sessions."""
        with self._lock:
            lines = []
            for session_id in sorted(self.sessions):
                session = self.sessions[session_id]
                for dialogue_id, mention_id in session.items:
                    item_id = item_id_for(dialogue_id, mention_id)
                    response = session.responses.get(item_id)
                    if response is None:
                        continue
                    lines.append(
                        json.dumps(
                            {
                                "session_id": session_id,
                                "mode": session.mode,
                                "participant_id": session.participant_id,
                                "item_id": response.item_id,
                                "selected_image_ids": list(response.selected_image_ids),
                                "latency_ms": response.latency_ms,
                                "timestamp": response.timestamp,
                                "ranked_selected": response.ranked_selected,
                            },
                            sort_keys=True,
                            ensure_ascii=False,
                        )
                    )
            return "\n".join(lines) + ("\n" if lines else "")


def _item_correct(corpus: Corpus, item: tuple[str, str], response: Response) -> bool | None:
    """Exact-set correctness for single-image items; None = not scored."""
    dialogue = corpus.dialogue(item[0])
    _, mention = dialogue.find_mention(item[1])
    if not mention.is_single_image:
        return None
    return set(response.selected_image_ids) == set(mention.referent_image_ids)


def score_sessions(sessions: Iterable[ExperimentSession], corpus: Corpus) -> dict:
    """Human-performance report over collected sessions.

    Single-image items only; a holistic multi-selection is correct only
    when it equals the referent set exactly. Holistic accuracy is also
    aggregated as the mean over dialogues of the best per-participant
    session accuracy.
    """
    report: dict = {}
    by_mode: dict[str, list[ExperimentSession]] = {"independent": [], "holistic": []}
    for s in sessions:
        by_mode[s.mode].append(s)

    for mode, mode_sessions in by_mode.items():
        n_scored = 0
        n_correct = 0
        per_session_acc: dict[str, float] = {}
        for s in mode_sessions:
            s_scored = 0
            s_correct = 0
            for item in s.items:
                response = s.responses.get(item_id_for(*item))
                if response is None:
                    continue
                verdict = _item_correct(corpus, item, response)
                if verdict is None:
                    continue
                s_scored += 1
                s_correct += int(verdict)
            n_scored += s_scored
            n_correct += s_correct
            if s_scored:
                per_session_acc[s.session_id] = s_correct / s_scored
        entry = {
            "n_sessions": len(mode_sessions),
            "n_scored_items": n_scored,
            "accuracy": (n_correct / n_scored) if n_scored else 0.0,
        }
        if mode == "holistic":
            best_per_dialogue: dict[str, float] = {}
            for s in mode_sessions:
                acc = per_session_acc.get(s.session_id)
                if acc is None or s.dialogue_id is None:
                    continue
                best = best_per_dialogue.get(s.dialogue_id)
                if best is None or acc > best:
                    best_per_dialogue[s.dialogue_id] = acc
            entry["best_of_per_dialogue"] = (
                sum(best_per_dialogue.values()) / len(best_per_dialogue)
                if best_per_dialogue
                else 0.0
            )
            entry["n_dialogues"] = len(best_per_dialogue)
        report[mode] = entry
    return report


# ---------------------------------------------------------------------------
# HTTP layer

class CreateSessionRequest(BaseModel):
    mode: str
    participant_id: str
    max_items: int | None = None


class SubmitResponseRequest(BaseModel):
    item_id: str
    selected_image_ids: list[str]
    latency_ms: int = 0


def create_app(
    corpus: Corpus,
    *,
    log_path: str | Path | None = None,
    seed: int = 0,
    image_root: str | Path | None = None,
    ui_dir: str | Path | None = None,
    clock: Callable[[], float] = time.time,
) -> FastAPI:
    """Experiment service over a validated corpus.

    ``log_path`` enables durability: an existing log is replayed into the
    store at startup. ``image_root`` (optional) serves image files at
    /images; ``ui_dir`` (optional) serves a built frontend at /app.
    """
    store = SessionStore(corpus, log_path=log_path, seed=seed, clock=clock)
    app = FastAPI(title="dialref experiment service")
    app.state.store = store

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "n_sessions": len(store.sessions)}

    @app.get("/config")
    def config() -> dict:
        return {"api_base": "", "modes": list(MODES)}

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest) -> dict:
        session = store.create_session(req.mode, req.participant_id, req.max_items)
        return {
            "session_id": session.session_id,
            "mode": session.mode,
            "participant_id": session.participant_id,
            "dialogue_id": session.dialogue_id,
            "n_items": len(session.items),
            "cursor": session.cursor,
            "completed": session.completed,
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        session = store.get(session_id)
        return {
            "session_id": session.session_id,
            "mode": session.mode,
            "participant_id": session.participant_id,
            "dialogue_id": session.dialogue_id,
            "n_items": len(session.items),
            "cursor": session.cursor,
            "completed": session.completed,
        }

    @app.get("/sessions/{session_id}/next")
    def next_stimulus(session_id: str) -> dict:
        return store.next_stimulus(session_id)

    @app.post("/sessions/{session_id}/responses")
    def submit_response(session_id: str, req: SubmitResponseRequest) -> dict:
        return store.submit_response(
            session_id, req.item_id, req.selected_image_ids, req.latency_ms
        )

    @app.get("/results", response_class=PlainTextResponse)
    def export_results() -> str:
        return store.export_results()

    @app.get("/score")
    def score() -> dict:
        with store._lock:
            sessions = list(store.sessions.values())
        return score_sessions(sessions, corpus)

    if image_root is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/images", StaticFiles(directory=str(image_root)), name="images")
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=str(ui_dir), html=True), name="app")

    return app
