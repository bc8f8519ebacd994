"""HTTP backend for the subjective study: serves orbit videos and prompts,
records slider ratings into an append-only store, manages per-subject
session subsets, and exports the CSV the processing pipeline consumes.

Sessions are derived deterministically from (subject_id, seed) and the
store contents, so a restart resumes exactly where the last durable rating
left off.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse, Response
from pydantic import BaseModel

import numpy as np

from .data import AssetRecord, RATINGS_CSV_HEADER, RatingRecord, ValidationError

GRID_STEP = 0.1
N_SUBSETS = 3


def on_grid(value: float) -> bool:
    """True when value is an exact multiple of the 0.1 slider step (post-scaling tolerance 1e-9)."""
    scaled = value * 10.0
    return abs(scaled - round(scaled)) <= 1e-9


@dataclass(frozen=True)
class Session:
    subject_id: str
    subset_index: int  # 1-based
    order: tuple[str, ...]
    cursor: int
    completed: bool

    def __post_init__(self):
        if not 0 <= self.cursor <= len(self.order):
            raise ValidationError("cursor outside [0, subset length]")


def subject_subsets(manifest: list[AssetRecord], subject_id: str, seed: int) -> list[tuple[str, ...]]:
    """Deterministic per-subject shuffle of the manifest, cut into N_SUBSETS parts.

    Earlier subsets absorb the remainder when the manifest size is not divisible.
    """
    ids = [a.asset_id for a in manifest]
    mix = np.random.default_rng([seed, hash_subject(subject_id)])
    order = [ids[i] for i in mix.permutation(len(ids))]
    base, extra = divmod(len(order), N_SUBSETS)
    subsets = []
    start = 0
    for i in range(N_SUBSETS):
        size = base + (1 if i < extra else 0)
        subsets.append(tuple(order[start:start + size]))
        start += size
    return subsets


def hash_subject(subject_id: str) -> int:
    # stable across processes (unlike builtin hash with PYTHONHASHSEED)
    import hashlib
    return int.from_bytes(hashlib.sha256(subject_id.encode("utf-8")).digest()[:8], "little")


class RatingStore:
    """Append-only JSONL event log with last-write-wins view per (subject, asset)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._latest: dict[tuple[str, str], dict] = {}
        self.corrupt_skipped = 0
        if self.path.exists():
            self._replay()
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch()

    def _replay(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key = (str(obj["subject_id"]), str(obj["asset_id"]))
                    scores = [float(s) for s in obj["scores"]]
                    if len(scores) != 3:
                        raise ValueError("bad scores arity")
                    self._latest[key] = obj
                except Exception:
                    self.corrupt_skipped += 1

    def append(self, subject_id: str, asset_id: str, scores: tuple[float, float, float], session: int) -> dict:
        with self._lock:
            previous = self._latest.get((subject_id, asset_id))
            event = {
                "ts": time.time(),
                "subject_id": subject_id,
                "asset_id": asset_id,
                "scores": list(scores),
                "session": session,
                "kind": "rating" if previous is None else "overwrite",
            }
            if previous is not None:
                event["previous_scores"] = previous["scores"]
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._latest[(subject_id, asset_id)] = event
            return event

    def rated_assets(self, subject_id: str) -> set[str]:
        with self._lock:
            return {a for (s, a) in self._latest if s == subject_id}

    def latest(self, subject_id: str, asset_id: str) -> dict | None:
        with self._lock:
            return self._latest.get((subject_id, asset_id))

    def export_records(self) -> list[RatingRecord]:
        with self._lock:
            events = sorted(self._latest.values(), key=lambda e: (e["subject_id"], e["asset_id"]))
        records = []
        for e in events:
            try:
                records.append(RatingRecord(
                    subject_id=e["subject_id"],
                    asset_id=e["asset_id"],
                    scores=tuple(e["scores"]),
                    session=int(e.get("session", 1)),
                ))
            except ValidationError:
                self.corrupt_skipped += 1
        return records


class SessionManager:
    def __init__(self, manifest: list[AssetRecord], store: RatingStore, seed: int):
        self.manifest = manifest
        self.assets = {a.asset_id: a for a in manifest}
        self.store = store
        self.seed = seed
        self._lock = threading.Lock()

    def session(self, subject_id: str, allow_completed: bool = False) -> Session:
        """Resume (or open) the subject's next unfinished subset."""
        subsets = subject_subsets(self.manifest, subject_id, self.seed)
        rated = self.store.rated_assets(subject_id)
        for i, subset in enumerate(subsets, start=1):
            done = sum(1 for a in subset if a in rated)
            if done < len(subset):
                return Session(
                    subject_id=subject_id, subset_index=i, order=subset,
                    cursor=done, completed=False,
                )
        if allow_completed:
            last = subsets[-1]
            return Session(subject_id=subject_id, subset_index=N_SUBSETS, order=last,
                           cursor=len(last), completed=True)
        raise ValidationError(f"subject {subject_id!r} has completed all {N_SUBSETS} subsets")

    def submit(self, subject_id: str, asset_id: str, scores: tuple[float, float, float],
               allow_overwrite: bool = True) -> tuple[dict, Session]:
        with self._lock:
            if asset_id not in self.assets:
                raise KeyError(asset_id)
            for v in scores:
                if not (0.0 <= v <= 5.0):
                    raise ValidationError(f"score {v} outside [0, 5]")
                if not on_grid(v):
                    raise ValidationError(f"score {v} is not a multiple of {GRID_STEP}")
            session = self.session(subject_id)
            rated = self.store.rated_assets(subject_id)
            current = session.order[session.cursor]
            if asset_id != current and asset_id not in rated:
                raise ValidationError(
                    f"asset {asset_id!r} is not the current item ({current!r}) and has no prior rating"
                )
            if asset_id in rated and not allow_overwrite:
                raise ValidationError(f"asset {asset_id!r} already rated and overwriting is disabled")
            event = self.store.append(subject_id, asset_id, scores, session.subset_index)
            # the rating is durable even when it was the study's last item
            return event, self.session(subject_id, allow_completed=True)


def _session_payload(session: Session, total_assets: int, rated_overall: int) -> dict:
    return {
        "subject_id": session.subject_id,
        "subset_index": session.subset_index,
        "subset_size": len(session.order),
        "cursor": session.cursor,
        "completed": session.completed,
        "done_overall": rated_overall,
        "total_assets": total_assets,
    }


class RatingBody(BaseModel):
    asset_id: str
    q: float
    a: float
    c: float


def create_app(
    manifest: list[AssetRecord],
    store_path: str | Path,
    seed: int = 0,
    roster: list[str] | None = None,
    allow_overwrite: bool = True,
    media_root: str | Path | None = None,
) -> FastAPI:
    store = RatingStore(store_path)
    manager = SessionManager(manifest, store, seed)
    allowed = set(roster) if roster else None
    media_root = Path(media_root) if media_root else None

    app = FastAPI(title="orbit rating service")
    app.state.store = store
    app.state.manager = manager

    def check_subject(subject_id: str) -> None:
        if allowed is not None and subject_id not in allowed:
            raise HTTPException(status_code=403, detail=f"unknown subject {subject_id!r}")

    def get_session_or_409(subject_id: str) -> Session:
        try:
            return manager.session(subject_id)
        except ValidationError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    def item_payload(session: Session, index: int) -> dict:
        asset = manager.assets[session.order[index]]
        record = store.latest(session.subject_id, asset.asset_id)
        return {
            "asset_id": asset.asset_id,
            "prompt": asset.prompt,
            "video_url": f"/media/{asset.asset_id}",
            "index": index,
            "subset_size": len(session.order),
            "existing_rating": None if record is None else record["scores"],
        }

    @app.get("/session/{subject_id}")
    def get_session(subject_id: str):
        check_subject(subject_id)
        session = get_session_or_409(subject_id)
        return _session_payload(session, len(manifest), len(store.rated_assets(subject_id)))

    @app.get("/session/{subject_id}/current")
    def get_current(subject_id: str):
        check_subject(subject_id)
        session = get_session_or_409(subject_id)
        return item_payload(session, session.cursor)

    @app.get("/session/{subject_id}/previous")
    def get_previous(subject_id: str):
        check_subject(subject_id)
        session = get_session_or_409(subject_id)
        if session.cursor == 0:
            raise HTTPException(status_code=400, detail="no previous item at the start of a subset")
        return item_payload(session, session.cursor - 1)

    @app.post("/session/{subject_id}/rating")
    def post_rating(subject_id: str, body: RatingBody):
        check_subject(subject_id)
        try:
            event, session = manager.submit(
                subject_id, body.asset_id, (body.q, body.a, body.c), allow_overwrite=allow_overwrite
            )
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown asset {body.asset_id!r}")
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "status": "ok",
            "kind": event["kind"],
            "session": _session_payload(session, len(manifest), len(store.rated_assets(subject_id))),
        }

    @app.get("/media/{asset_id}")
    def get_media(asset_id: str, request: Request):
        if asset_id not in manager.assets:
            raise HTTPException(status_code=404, detail=f"unknown asset {asset_id!r}")
        path = Path(manager.assets[asset_id].video_path)
        if media_root is not None and not path.is_absolute():
            path = media_root / path
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"media for {asset_id!r} not found")
        data = path.read_bytes()
        range_header = request.headers.get("range")
        headers = {"Accept-Ranges": "bytes"}
        if range_header and range_header.startswith("bytes="):
            try:
                start_s, _, end_s = range_header[len("bytes="):].partition("-")
                start = int(start_s) if start_s else 0
                end = int(end_s) if end_s else len(data) - 1
            except ValueError:
                raise HTTPException(status_code=416, detail="malformed range")
            if start >= len(data) or start > end:
                raise HTTPException(status_code=416, detail="range out of bounds")
            end = min(end, len(data) - 1)
            headers["Content-Range"] = f"bytes {start}-{end}/{len(data)}"
            return Response(data[start:end + 1], status_code=206, media_type="video/mp4", headers=headers)
        return Response(data, media_type="video/mp4", headers=headers)

    @app.get("/export.csv")
    def export_csv():
        records = store.export_records()
        lines = [",".join(RATINGS_CSV_HEADER)]
        for rec in records:
            lines.append(",".join([
                rec.subject_id, rec.asset_id,
                repr(rec.scores[0]), repr(rec.scores[1]), repr(rec.scores[2]),
                str(rec.session),
            ]))
        return PlainTextResponse(
            "\n".join(lines) + "\n",
            media_type="text/csv",
            headers={"X-Corrupt-Entries-Skipped": str(store.corrupt_skipped)},
        )

    return app
