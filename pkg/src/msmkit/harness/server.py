"""HTTP rating service hosting blinded pairwise sessions.

Ratings persist to an append-only JSONL with fsync-on-write; duplicate
submissions for the same (rater, pair) are rejected; no provenance ever
leaves the server.
"""

from __future__ import annotations

import datetime
import json
import os
import threading

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, Response
from pydantic import BaseModel

from .pairs import CHOICES, PairSession, RatingRecord, kappa_report


class RatingStore:
    """Append-only JSONL store; replayed on startup so restarts keep
    duplicate rejection intact."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._records: dict[tuple, RatingRecord] = {}
        if os.path.exists(path):
            with open(path) as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    rec = RatingRecord(**json.loads(line))
                    self._records[(rec.session_id, rec.rater, rec.pair_id)] = rec

    def has(self, session_id: str, rater: str, pair_id: str) -> bool:
        return (session_id, rater, pair_id) in self._records

    def add(self, rec: RatingRecord) -> None:
        key = (rec.session_id, rec.rater, rec.pair_id)
        with self._lock:
            if key in self._records:
                raise KeyError(key)
            with open(self.path, "a") as f:
                f.write(json.dumps(rec.__dict__, sort_keys=True) + "\n")
                f.flush()
                os.fsync(f.fileno())
            self._records[key] = rec

    def for_session(self, session_id: str) -> list[RatingRecord]:
        return [r for (sid, _, _), r in self._records.items() if sid == session_id]

    def rated_pairs(self, session_id: str, rater: str) -> set:
        return {
            pid for (sid, rt, pid) in self._records if sid == session_id and rt == rater
        }


class RatingBody(BaseModel):
    pair_id: str
    rater: str
    choice: str
    elapsed_ms: int = 0


def load_sessions(store_dir: str) -> dict[str, PairSession]:
    sessions = {}
    sdir = os.path.join(store_dir, "sessions")
    if os.path.isdir(sdir):
        for name in sorted(os.listdir(sdir)):
            if name.endswith(".json"):
                with open(os.path.join(sdir, name)) as f:
                    data = json.load(f)
                sess = PairSession.from_dict(data)
                sessions[sess.session_id] = sess
    return sessions


def create_app(store_dir: str, ui_dir: str | None = None) -> FastAPI:
    store_dir = str(store_dir)
    sessions = load_sessions(store_dir)
    store = RatingStore(os.path.join(store_dir, "ratings.jsonl"))
    app = FastAPI(title="pairwise rating service")

    def get_session(session_id: str) -> PairSession:
        if session_id not in sessions:
            raise HTTPException(status_code=404, detail="unknown session")
        return sessions[session_id]

    @app.get("/api/sessions")
    def list_sessions():
        out = []
        for sid, sess in sorted(sessions.items()):
            raters = sorted({r.rater for r in store.for_session(sid)})
            out.append({
                "id": sid,
                "n_pairs": len(sess.pairs),
                "n_rated_by": {r: len(store.rated_pairs(sid, r)) for r in raters},
            })
        return out

    @app.get("/api/sessions/{session_id}/next")
    def next_pair(session_id: str, rater: str = Query(...)):
        sess = get_session(session_id)
        rated = store.rated_pairs(session_id, rater)
        for pair in sess.pairs:
            if pair.pair_id not in rated:
                return sess.client_pair_payload(pair)
        return {"complete": True, "n_rated": len(rated)}

    @app.post("/api/sessions/{session_id}/ratings")
    def post_rating(session_id: str, body: RatingBody):
        sess = get_session(session_id)
        if body.choice not in CHOICES:
            raise HTTPException(status_code=400, detail=f"choice must be one of {CHOICES}")
        try:
            pair = sess.pair(body.pair_id)
        except ValueError:
            raise HTTPException(status_code=400, detail="unknown pair")
        if store.has(session_id, body.rater, body.pair_id):
            raise HTTPException(status_code=409, detail="already rated")
        rec = RatingRecord(
            session_id=session_id, pair_id=body.pair_id, rater=body.rater,
            choice=body.choice, left_item=pair.left_item, right_item=pair.right_item,
            elapsed_ms=body.elapsed_ms,
            timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )
        try:
            store.add(rec)
        except KeyError:
            raise HTTPException(status_code=409, detail="already rated")
        return {"accepted": True}

    @app.get("/api/sessions/{session_id}/report")
    def session_report(session_id: str):
        sess = get_session(session_id)
        by_rater: dict[str, list] = {}
        for rec in store.for_session(session_id):
            by_rater.setdefault(rec.rater, []).append(rec)
        if not by_rater:
            return {"session_id": session_id, "parties": [], "n_shared_pairs": 0, "kappa": {}}
        return kappa_report(sess, by_rater)

    @app.get("/images/{name}")
    def image(name: str):
        if not name.endswith(".png") or "/" in name or ".." in name:
            raise HTTPException(status_code=404)
        path = os.path.join(store_dir, "images", name)
        if not os.path.exists(path):
            raise HTTPException(status_code=404)
        return FileResponse(path, media_type="image/png")

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        @app.get("/")
        def index():
            return FileResponse(os.path.join(ui_dir, "index.html"),
                                media_type="text/html")

        app.mount("/dist", StaticFiles(directory=os.path.join(ui_dir, "dist")),
                  name="ui")

    return app


def serve(store_dir: str, host: str = "127.0.0.1", port: int = 8008,
          ui_dir: str | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(store_dir, ui_dir=ui_dir), host=host, port=port)
