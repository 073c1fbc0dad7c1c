"""Drive the human-experiment service with a scripted participant.

Uses the in-process test client, so no port is opened; `dialref serve`
exposes the same app over HTTP for real sessions. The script walks one
holistic session (whole dialogue, transcript revealed mention by
mention) and one independent session (isolated description + reduced
candidates), then prints the service's own scoring.

Run: python3 demos/06_experiment_service.py
"""

import json
import tempfile
import warnings
from pathlib import Path

warnings.filterwarnings("ignore", message="Using `httpx` with `starlette.testclient`")

from fastapi.testclient import TestClient  # noqa: E402

from dialref import create_app, synthetic


def gold(corpus, item_id):
    dialogue_id, mention_id = item_id.split(":", 1)
    dialogue = corpus.dialogue(dialogue_id)
    _, mention = dialogue.find_mention(mention_id)
    return sorted(mention.referent_image_ids)


def main() -> None:
    corpus = synthetic.figure_fixture_corpus()
    log = Path(tempfile.mkdtemp()) / "events.jsonl"
    client = TestClient(create_app(corpus, log_path=log, seed=1))

    # --- holistic: one full dialogue, prefix-only reveal
    session = client.post(
        "/sessions", json={"mode": "holistic", "participant_id": "demo-h"}
    ).json()
    sid = session["session_id"]
    print(f"holistic session {sid[:8]} on {session['dialogue_id']}")
    while True:
        stim = client.get(f"/sessions/{sid}/next").json()
        if stim.get("done"):
            print(f"  completion code: {stim['completion_code']}")
            break
        shown = stim["utterances"]
        print(
            f"  item {stim['index'] + 1}/{stim['n_items']}: "
            f"{len(shown)} utterances shown, mention {stim['mention']['surface']!r}"
        )
        client.post(
            f"/sessions/{sid}/responses",
            json={"item_id": stim["item_id"],
                  "selected_image_ids": gold(corpus, stim["item_id"]),
                  "latency_ms": 1200},
        )

    # --- independent: shuffled single-image items, one pick each
    agos = synthetic.agos_like_corpus(n_sets=2)
    client2 = TestClient(create_app(agos, seed=1))
    session = client2.post(
        "/sessions",
        json={"mode": "independent", "participant_id": "demo-i", "max_items": 5},
    ).json()
    sid2 = session["session_id"]
    while True:
        stim = client2.get(f"/sessions/{sid2}/next").json()
        if stim.get("done"):
            break
        print(
            f"independent: {stim['description']!r} "
            f"over {len(stim['candidates'])} candidates"
        )
        client2.post(
            f"/sessions/{sid2}/responses",
            json={"item_id": stim["item_id"],
                  "selected_image_ids": gold(agos, stim["item_id"]),
                  "latency_ms": 800},
        )

    print("\nscores:")
    print(json.dumps(client.get("/score").json()["holistic"], indent=2))
    print(json.dumps(client2.get("/score").json()["independent"], indent=2))
    print(f"\nevent log ({log}):")
    print((log.read_text(encoding="utf-8").splitlines()[0])[:100] + "...")


if __name__ == "__main__":
    main()
