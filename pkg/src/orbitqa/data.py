"""Canonical data model and manifest/ratings/score file I/O.

Everything downstream (subjective processing, frame sampling, training,
benchmarking, the rating service) speaks in these record types. All records
are immutable after construction and validated on construction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Fixed dimension order used everywhere: (quality, authenticity, correspondence).
DIMENSIONS = ("quality", "authenticity", "correspondence")

RATINGS_CSV_HEADER = ["subject_id", "asset_id", "quality", "authenticity", "correspondence", "session"]
MANIFEST_FIELDS = ["asset_id", "prompt", "generator", "video_path", "frame_count", "width", "height"]


class ParseError(ValueError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ValueError):
    """A record or record collection violates an invariant."""


@dataclass(frozen=True)
class AssetRecord:
    """One generated 3D asset and its orbit projection video."""

    asset_id: str
    prompt: str
    generator: str
    video_path: str
    frame_count: int
    width: int
    height: int

    def __post_init__(self):
        if not self.asset_id:
            raise ValidationError("asset_id must be non-empty")
        if not self.prompt:
            raise ValidationError(f"asset {self.asset_id}: prompt must be non-empty")
        if self.frame_count < 2 or self.frame_count % 2 != 0:
            raise ValidationError(
                f"asset {self.asset_id}: frame_count must be even and >= 2 "
                f"(front/back pairing needs frame_count/2), got {self.frame_count}"
            )
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"asset {self.asset_id}: resolution must be positive")

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.width, self.height)


@dataclass(frozen=True)
class RatingRecord:
    """One subject's raw (quality, authenticity, correspondence) triple for one asset."""

    subject_id: str
    asset_id: str
    scores: tuple[float, float, float]
    session: int = 1

    def __post_init__(self):
        if len(self.scores) != 3:
            raise ValidationError("scores must have exactly 3 entries (quality, authenticity, correspondence)")
        for dim, s in zip(DIMENSIONS, self.scores):
            if not np.isfinite(s) or s < 0.0 or s > 5.0:
                raise ValidationError(
                    f"rating ({self.subject_id}, {self.asset_id}): {dim} score {s} outside [0, 5]"
                )


@dataclass(frozen=True)
class MosRecord:
    """Processed per-asset label triple; values are on the nominal [0,100] scale.

    Values are not clamped: ratings with |z| > 3 can push a MOS slightly
    outside [0,100], and that is preserved.
    """

    asset_id: str
    mos: tuple[float, float, float]
    n_valid_subjects: int
    n_outliers_removed: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        if len(self.mos) != 3:
            raise ValidationError("mos must have exactly 3 entries")
        if not all(np.isfinite(v) for v in self.mos):
            raise ValidationError(f"asset {self.asset_id}: non-finite MOS value")
        if self.n_valid_subjects < 1:
            raise ValidationError(f"asset {self.asset_id}: n_valid_subjects must be >= 1")


@dataclass(frozen=True)
class ScoreTriple:
    """A predictor's (quality, authenticity, correspondence) output for one asset."""

    asset_id: str
    q: float
    a: float
    c: float

    def __post_init__(self):
        if not (np.isfinite(self.q) and np.isfinite(self.a) and np.isfinite(self.c)):
            raise ValidationError(f"asset {self.asset_id}: score triple contains non-finite value")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.q, self.a, self.c)


@dataclass(frozen=True)
class SplitSpec:
    """One train/test partition of a manifest at the 4:1 ratio."""

    seed: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    ratio: tuple[int, int] = (4, 1)
    grouped_by_prompt: bool = False

    def __post_init__(self):
        train, test = set(self.train_ids), set(self.test_ids)
        if train & test:
            raise ValidationError("train/test ids overlap")
        if len(train) != len(self.train_ids) or len(test) != len(self.test_ids):
            raise ValidationError("duplicate ids inside a split half")
        n = len(self.train_ids) + len(self.test_ids)
        # Exact-size invariant only holds when prompts are not kept together.
        if not self.grouped_by_prompt and len(self.test_ids) != round(n / 5):
            raise ValidationError(
                f"test size {len(self.test_ids)} != round({n}/5) = {round(n / 5)}"
            )

    @property
    def all_ids(self) -> frozenset[str]:
        return frozenset(self.train_ids) | frozenset(self.test_ids)


def load_manifest(path: str | Path) -> list[AssetRecord]:
    """Read an asset manifest (one JSON object per line)."""
    records: list[AssetRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            missing = [k for k in MANIFEST_FIELDS if k not in obj]
            if missing:
                raise ParseError(f"missing fields {missing}", line=lineno)
            try:
                rec = AssetRecord(
                    asset_id=str(obj["asset_id"]),
                    prompt=str(obj["prompt"]),
                    generator=str(obj["generator"]),
                    video_path=str(obj["video_path"]),
                    frame_count=int(obj["frame_count"]),
                    width=int(obj["width"]),
                    height=int(obj["height"]),
                )
            except (ValidationError, TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
            if rec.asset_id in seen:
                raise ValidationError(f"duplicate asset_id {rec.asset_id!r} (line {lineno})")
            seen.add(rec.asset_id)
            records.append(rec)
    return records


def save_manifest(records: list[AssetRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "asset_id": rec.asset_id,
                "prompt": rec.prompt,
                "generator": rec.generator,
                "video_path": rec.video_path,
                "frame_count": rec.frame_count,
                "width": rec.width,
                "height": rec.height,
            }) + "\n")


def _rating_from_fields(subject_id, asset_id, q, a, c, session, lineno) -> RatingRecord:
    try:
        return RatingRecord(
            subject_id=str(subject_id),
            asset_id=str(asset_id),
            scores=(float(q), float(a), float(c)),
            session=int(session),
        )
    except (ValidationError, TypeError, ValueError) as exc:
        raise ParseError(str(exc), line=lineno) from exc


def load_ratings(path: str | Path) -> list[RatingRecord]:
    """Read raw ratings from CSV (header: subject_id,asset_id,quality,authenticity,correspondence,session)
    or JSONL with the same field names."""
    path = Path(path)
    records: list[RatingRecord] = []
    if path.suffix.lower() in (".jsonl", ".json", ".ndjson"):
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
                records.append(_rating_from_fields(
                    obj.get("subject_id"), obj.get("asset_id"),
                    obj.get("quality"), obj.get("authenticity"), obj.get("correspondence"),
                    obj.get("session", 1), lineno,
                ))
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != RATINGS_CSV_HEADER:
                raise ParseError(
                    f"expected CSV header {','.join(RATINGS_CSV_HEADER)}, got {reader.fieldnames}", line=1
                )
            for lineno, row in enumerate(reader, start=2):
                records.append(_rating_from_fields(
                    row["subject_id"], row["asset_id"],
                    row["quality"], row["authenticity"], row["correspondence"],
                    row["session"], lineno,
                ))
    seen: set[tuple[str, str]] = set()
    for rec in records:
        key = (rec.subject_id, rec.asset_id)
        if key in seen:
            raise ValidationError(f"duplicate rating for (subject {rec.subject_id!r}, asset {rec.asset_id!r})")
        seen.add(key)
    return records


def save_ratings(records: list[RatingRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATINGS_CSV_HEADER)
        for rec in records:
            writer.writerow([
                rec.subject_id, rec.asset_id,
                repr(rec.scores[0]), repr(rec.scores[1]), repr(rec.scores[2]),
                rec.session,
            ])


def load_mos(path: str | Path) -> list[MosRecord]:
    records: list[MosRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(MosRecord(
                    asset_id=str(obj["asset_id"]),
                    mos=tuple(float(v) for v in obj["mos"]),
                    n_valid_subjects=int(obj["n_valid_subjects"]),
                    n_outliers_removed=tuple(int(v) for v in obj.get("n_outliers_removed", (0, 0, 0))),
                ))
            except (KeyError, ValidationError, TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
    return records


def save_mos(records: list[MosRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "asset_id": rec.asset_id,
                "mos": list(rec.mos),
                "n_valid_subjects": rec.n_valid_subjects,
                "n_outliers_removed": list(rec.n_outliers_removed),
            }) + "\n")


def load_scores(path: str | Path) -> list[ScoreTriple]:
    """Read a predictor's score file (JSONL: asset_id, q, a, c)."""
    records: list[ScoreTriple] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(ScoreTriple(
                    asset_id=str(obj["asset_id"]),
                    q=float(obj["q"]), a=float(obj["a"]), c=float(obj["c"]),
                ))
            except (KeyError, ValidationError, TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
    return records


def save_scores(records: list[ScoreTriple], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({"asset_id": rec.asset_id, "q": rec.q, "a": rec.a, "c": rec.c}) + "\n")


def make_splits(
    manifest: list[AssetRecord],
    n_splits: int,
    seed: int,
    group_by_prompt: bool = False,
) -> list[SplitSpec]:
    """Draw n_splits independent 4:1 train/test partitions, deterministically per seed.

    With group_by_prompt, all assets sharing a prompt land on the same side;
    the test size is then the closest achievable to round(n/5) without
    splitting a prompt group.
    """
    if n_splits < 1:
        raise ValidationError("n_splits must be >= 1")
    if len(manifest) < 5:
        raise ValidationError(f"manifest has {len(manifest)} assets; need at least 5 for a 4:1 split")
    ids = [rec.asset_id for rec in manifest]
    target = round(len(ids) / 5)
    splits: list[SplitSpec] = []
    for i in range(n_splits):
        split_seed = seed + i
        rng = np.random.default_rng(split_seed)
        if group_by_prompt:
            groups: dict[str, list[str]] = {}
            for rec in manifest:
                groups.setdefault(rec.prompt, []).append(rec.asset_id)
            keys = sorted(groups)
            rng.shuffle(keys)
            test: list[str] = []
            for key in keys:
                group = groups[key]
                if len(test) >= target:
                    break
                # take the group unless stopping now is strictly closer to the target
                overshoot = abs(len(test) + len(group) - target)
                stay = abs(len(test) - target)
                if overshoot <= stay:
                    test.extend(group)
            test_set = set(test)
            train = [a for a in ids if a not in test_set]
            splits.append(SplitSpec(
                seed=split_seed, train_ids=tuple(train), test_ids=tuple(test),
                grouped_by_prompt=True,
            ))
        else:
            perm = rng.permutation(len(ids))
            test_ids = tuple(ids[j] for j in sorted(perm[:target]))
            train_ids = tuple(ids[j] for j in sorted(perm[target:]))
            splits.append(SplitSpec(seed=split_seed, train_ids=train_ids, test_ids=test_ids))
    return splits


def save_splits(splits: list[SplitSpec], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([{
            "seed": s.seed,
            "train_ids": list(s.train_ids),
            "test_ids": list(s.test_ids),
            "ratio": list(s.ratio),
            "grouped_by_prompt": s.grouped_by_prompt,
        } for s in splits], fh, indent=2)


def load_splits(path: str | Path) -> list[SplitSpec]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if isinstance(payload, dict):
        payload = [payload]
    return [SplitSpec(
        seed=int(obj["seed"]),
        train_ids=tuple(obj["train_ids"]),
        test_ids=tuple(obj["test_ids"]),
        ratio=tuple(obj.get("ratio", (4, 1))),
        grouped_by_prompt=bool(obj.get("grouped_by_prompt", False)),
    ) for obj in payload]
