"""Feature files, dataset manifests, and trained-model artifacts.

This module is the boundary where per-frame feature vectors enter the
system: upstream extraction (whatever produced the vectors) is out of
scope, and everything downstream consumes the validated types defined
here.

File formats
------------
GPF1 feature file (one video, one stream)::

    b"GPF1" | u32 dim (LE) | u32 frame_count (LE) | frame_count*dim f32 (LE)

payload is row-major (frame-major). Files store 32-bit floats;
in-memory arithmetic is 64-bit throughout.

Manifest: JSON lines, one object per video with keys ``video_id``,
``label`` (int, classes are 1..C), optional ``appearance`` / ``motion``
paths, and ``split`` ("train" | "test"). An optional first line
``{"label_names": {"1": "...", ...}}`` names the classes; otherwise
names default to ``class_<id>`` for ids 1..max(label).

Model artifact: a single JSON document, see :func:`save_artifact`.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArtifactMismatch,
    BadMagic,
    DuplicateId,
    MissingPath,
    NonFinite,
    TrailingData,
    Truncated,
    UnknownLabel,
    ValidationError,
    ZeroDim,
    ZeroFrames,
)

GPF1_MAGIC = b"GPF1"
STREAMS = ("appearance", "motion")
SPLITS = ("train", "test")


@dataclass(frozen=True)
class StreamFeatureSequence:
    """Per-frame feature vectors for one video and one stream.

    ``rows`` has shape (frame_count, dim), dtype float64, and is marked
    read-only; sequences are safe to share across threads.
    """

    video_id: str
    stream: str
    rows: np.ndarray

    def __post_init__(self):
        if self.stream not in STREAMS:
            raise ValidationError(f"unknown stream {self.stream!r}")
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        if rows.ndim != 2:
            raise ValidationError(
                f"rows must be 2-D (frames x dim), got shape {rows.shape}")
        if rows.shape[0] < 1:
            raise ZeroFrames(f"{self.video_id}/{self.stream}: zero frames")
        if rows.shape[1] < 1:
            raise ZeroDim(f"{self.video_id}/{self.stream}: zero feature dim")
        if not np.isfinite(rows).all():
            raise NonFinite(
                f"{self.video_id}/{self.stream}: non-finite feature values")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    @property
    def frame_count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    label: int
    appearance: str | None = None
    motion: str | None = None
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(
                f"{self.video_id}: bad split {self.split!r}")
        if self.appearance is None and self.motion is None:
            raise MissingPath(f"{self.video_id}: no stream path present")

    def path_for(self, stream: str) -> str:
        if stream not in STREAMS:
            raise ValidationError(f"unknown stream {stream!r}")
        return getattr(self, stream)


@dataclass
class DatasetManifest:
    records: list[VideoRecord]
    label_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.video_id in seen:
                raise DuplicateId(f"duplicate video_id {rec.video_id!r}")
            seen.add(rec.video_id)
        if not self.label_names:
            top = max((r.label for r in self.records), default=0)
            self.label_names = {c: f"class_{c}" for c in range(1, top + 1)}
        ids = sorted(self.label_names)
        if ids != list(range(1, len(ids) + 1)):
            raise UnknownLabel(f"class ids not contiguous from 1: {ids}")
        for rec in self.records:
            if rec.label not in self.label_names:
                raise UnknownLabel(
                    f"{rec.video_id}: label {rec.label} outside "
                    f"declared classes 1..{len(ids)}")

    @property
    def num_classes(self) -> int:
        return len(self.label_names)

    def split(self, which: str) -> list[VideoRecord]:
        if which not in SPLITS:
            raise ValidationError(f"unknown split {which!r}")
        return [r for r in self.records if r.split == which]

    def by_id(self) -> dict[str, VideoRecord]:
        return {r.video_id: r for r in self.records}


# --- GPF1 feature files ------------------------------------------------------

def write_feature_file(seq: StreamFeatureSequence, path: str | os.PathLike) -> None:
    """Write ``seq`` in GPF1 form; loading it back recovers the float32
    rounding of ``seq`` bit-exactly."""
    rows32 = seq.rows.astype("<f4")
    if not np.isfinite(rows32).all():
        raise NonFinite(f"{path}: values overflow float32")
    with open(path, "wb") as fh:
        fh.write(GPF1_MAGIC)
        fh.write(struct.pack("<II", seq.dim, seq.frame_count))
        fh.write(rows32.tobytes(order="C"))


def load_feature_file(path: str | os.PathLike, video_id: str | None = None,
                      stream: str = "appearance") -> StreamFeatureSequence:
    """Load and validate a GPF1 feature file.

    ``video_id`` defaults to the file stem. Errors name the file and the
    byte offset where the problem was detected.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError as exc:
        raise MissingPath(f"{path}: no such feature file") from exc
    if len(data) < 4 or data[:4] != GPF1_MAGIC:
        raise BadMagic(f"{path}: offset 0: expected {GPF1_MAGIC!r}, "
                       f"got {data[:4]!r}")
    if len(data) < 12:
        raise Truncated(f"{path}: offset {len(data)}: header incomplete")
    dim, frames = struct.unpack_from("<II", data, 4)
    if frames == 0:
        raise ZeroFrames(f"{path}: offset 8: frame count is 0")
    if dim == 0:
        raise ZeroDim(f"{path}: offset 4: feature dim is 0")
    need = 12 + 4 * dim * frames
    if len(data) < need:
        raise Truncated(f"{path}: offset {len(data)}: payload declares "
                        f"{frames}x{dim} floats ({need} bytes total)")
    if len(data) > need:
        raise TrailingData(f"{path}: offset {need}: {len(data) - need} "
                           f"unexpected trailing bytes")
    raw = np.frombuffer(data, dtype="<f4", count=dim * frames, offset=12)
    rows = raw.reshape(frames, dim).astype(np.float64)
    if not np.isfinite(rows).all():
        bad = int(np.flatnonzero(~np.isfinite(rows.ravel()))[0])
        raise NonFinite(f"{path}: offset {12 + 4 * bad}: non-finite value")
    if video_id is None:
        video_id = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return StreamFeatureSequence(video_id=video_id, stream=stream, rows=rows)


# --- manifests ----------------------------------------------------------------

def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    """Parse a JSON-lines manifest into a validated :class:`DatasetManifest`."""
    records: list[VideoRecord] = []
    label_names: dict[int, str] = {}
    if not os.path.isfile(path):
        raise MissingPath(f"{path}: no such manifest")
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            if "label_names" in obj and "video_id" not in obj:
                if lineno != 1 and records:
                    raise ValidationError(
                        f"{path}:{lineno}: label_names must be the first line")
                label_names = {int(k): str(v)
                               for k, v in obj["label_names"].items()}
                continue
            missing = [k for k in ("video_id", "label", "split") if k not in obj]
            if missing:
                raise ValidationError(
                    f"{path}:{lineno}: missing keys {missing}")
            try:
                rec = VideoRecord(
                    video_id=str(obj["video_id"]),
                    label=int(obj["label"]),
                    appearance=obj.get("appearance"),
                    motion=obj.get("motion"),
                    split=str(obj["split"]),
                )
            except MissingPath as exc:
                raise MissingPath(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    return DatasetManifest(records=records, label_names=label_names)


def write_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(
            {"label_names": {str(k): v
                             for k, v in sorted(manifest.label_names.items())}},
            sort_keys=True) + "\n")
        for rec in manifest.records:
            obj = {"video_id": rec.video_id, "label": rec.label,
                   "split": rec.split}
            if rec.appearance is not None:
                obj["appearance"] = rec.appearance
            if rec.motion is not None:
                obj["motion"] = rec.motion
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


# --- model artifacts -----------------------------------------------------------

ARTIFACT_FORMAT = "treemkl-model-v1"


def save_artifact(artifact: dict, path: str | os.PathLike) -> None:
    """Serialize a trained-model artifact to a single JSON document.

    Expected keys: ``config`` (depth, variant, kernel kind, gamma, stream,
    route, solver settings), ``beta`` (node weights keyed "l:k" in
    canonical order), ``classes`` (per class id: ``b`` and ``support``
    entries of video_id + alpha), ``label_names``.
    """
    doc = dict(artifact)
    doc["format"] = ARTIFACT_FORMAT
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_artifact(path: str | os.PathLike) -> dict:
    if not os.path.isfile(path):
        raise MissingPath(f"{path}: no such model artifact")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArtifactMismatch(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("format") != ARTIFACT_FORMAT:
        raise ArtifactMismatch(
            f"{path}: format {doc.get('format')!r}, expected {ARTIFACT_FORMAT!r}")
    for key in ("config", "beta", "classes"):
        if key not in doc:
            raise ArtifactMismatch(f"{path}: missing {key!r} section")
    return doc
