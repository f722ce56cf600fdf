"""Deterministic multi-granularity synthetic datasets.

Classes are separable at exactly one hierarchy level. Within every
sibling pair of signal-level intervals, each class writes a
class-specific constant vector on the first interval and its negation
on the second, on top of i.i.d. Gaussian frame noise. The signed copies
cancel under any pooling coarser than the signal level, so class means
agree at the root and every level above the signal level, while every
signal-level node carries a full-amplitude class-distinct vector.

Pooling finer than the signal level is made strictly worse, not just
redundant: every video carries its own detail vector that flips sign
between the two halves of each signal-level interval. The flip cancels
exactly at the signal level (and everything above) but leaks
video-specific variation into deeper nodes, the way sub-action detail
varies between recordings without being class-informative. So the
signal level is the unique granularity where classes separate cleanly.

With ``signal_level = 1`` there is no sibling to cancel against, so the
signal simply shifts the global mean and plain average pooling suffices.

Two-stream datasets put an independent copy of the construction in the
motion stream one level deeper, so the streams carry complementary
granularity.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .dataio import (
    DatasetManifest,
    StreamFeatureSequence,
    VideoRecord,
    write_feature_file,
    write_manifest,
)
from .errors import ShiftTooLarge, SpecInvalid
from .hierarchy import build_intervals


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 4
    per_class: int = 50
    frames: int = 32
    dim: int = 16
    signal_level: int = 3
    amplitude: float = 1.5
    noise_sigma: float = 0.5
    detail_sigma: float = 1.5
    seed: int = 0
    streams: int = 1

    def __post_init__(self):
        if self.num_classes < 2:
            raise SpecInvalid(f"num_classes must be >= 2, got {self.num_classes}")
        if self.per_class < 2:
            raise SpecInvalid(f"per_class must be >= 2, got {self.per_class}")
        if self.signal_level < 1:
            raise SpecInvalid(f"signal_level must be >= 1, got {self.signal_level}")
        if self.streams not in (1, 2):
            raise SpecInvalid(f"streams must be 1 or 2, got {self.streams}")
        if not (self.amplitude > 0 and self.noise_sigma > 0):
            raise SpecInvalid("amplitude and noise_sigma must be positive")
        if self.detail_sigma < 0:
            raise SpecInvalid("detail_sigma must be >= 0")
        deepest = self.signal_level + (1 if self.streams == 2 else 0)
        if self.detail_sigma > 0:
            deepest += 1  # the detail flip needs one level below the signal
        if self.frames < 2 ** (deepest - 1):
            raise SpecInvalid(
                f"frames={self.frames} too short for signal level {deepest}")

    @property
    def total(self) -> int:
        return self.num_classes * self.per_class


@dataclass(frozen=True)
class SynthDataset:
    spec: SynthSpec
    video_ids: list[str]
    labels: np.ndarray
    splits: list[str]
    sequences: dict[str, list[StreamFeatureSequence]]

    def split_indices(self, which: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.splits) == which)


def _signal_profile(frames: int, level: int, block_vectors: np.ndarray,
                    amplitude: float) -> np.ndarray:
    """Per-frame class signal at one level.

    ``block_vectors`` holds one vector per sibling pair of level
    intervals; each pair gets +vector on its first interval and -vector
    on its second. At level 1 the single vector covers everything.
    """
    dim = block_vectors.shape[-1]
    out = np.zeros((frames, dim))
    if level == 1:
        out[:] = amplitude * block_vectors[0]
        return out
    level_ivs = [iv for iv in build_intervals(frames, level)
                 if iv.level == level]
    for block, (plus, minus) in enumerate(zip(level_ivs[::2], level_ivs[1::2])):
        out[plus.start:plus.end] = amplitude * block_vectors[block]
        out[minus.start:minus.end] = -amplitude * block_vectors[block]
    return out


def _detail_profile(frames: int, level: int, vector: np.ndarray) -> np.ndarray:
    """Video-specific detail: +vector / -vector on the two halves of
    every level interval, cancelling exactly at the level's pooling
    (up to one frame when interval lengths are odd)."""
    out = np.zeros((frames, vector.size))
    children = [iv for iv in build_intervals(frames, level + 1)
                if iv.level == level + 1]
    for first, second in zip(children[::2], children[1::2]):
        out[first.start:first.end] = vector
        out[second.start:second.end] = -vector
    return out


def _stream_plan(spec: SynthSpec) -> list[tuple[str, int]]:
    plan = [("appearance", spec.signal_level)]
    if spec.streams == 2:
        plan.append(("motion", spec.signal_level + 1))
    return plan


def gen_sequences(spec: SynthSpec) -> SynthDataset:
    """Generate the dataset in memory; byte-deterministic under the seed."""
    root_ss = np.random.SeedSequence(spec.seed)
    vec_ss, video_ss = root_ss.spawn(2)
    vec_rng = np.random.default_rng(vec_ss)
    plan = _stream_plan(spec)

    class_vectors: dict[str, np.ndarray] = {}
    for stream, level in plan:
        blocks = max(1, 2 ** (level - 2))
        raw = vec_rng.standard_normal((spec.num_classes, blocks, spec.dim))
        class_vectors[stream] = raw / np.linalg.norm(raw, axis=2, keepdims=True)

    video_ids: list[str] = []
    labels = np.empty(spec.total, dtype=int)
    splits: list[str] = []
    sequences: dict[str, list[StreamFeatureSequence]] = {s: [] for s, _ in plan}
    train_per_class = max(1, min(spec.per_class - 1,
                                 int(round(0.7 * spec.per_class))))
    video_seeds = video_ss.spawn(spec.total)

    idx = 0
    for c in range(1, spec.num_classes + 1):
        for v in range(spec.per_class):
            vid = f"synth_c{c:02d}_v{v:03d}"
            video_ids.append(vid)
            labels[idx] = c
            splits.append("train" if v < train_per_class else "test")
            rng = np.random.default_rng(video_seeds[idx])
            for stream, level in plan:
                signal = _signal_profile(spec.frames, level,
                                         class_vectors[stream][c - 1],
                                         spec.amplitude)
                rows = (spec.noise_sigma
                        * rng.standard_normal((spec.frames, spec.dim))
                        + signal)
                if spec.detail_sigma > 0:
                    detail = (spec.detail_sigma / np.sqrt(spec.dim)
                              * rng.standard_normal(spec.dim))
                    rows += _detail_profile(spec.frames, level, detail)
                # float32 rounding here keeps in-memory use identical to
                # a write/load cycle through feature files
                rows = rows.astype(np.float32).astype(np.float64)
                sequences[stream].append(StreamFeatureSequence(
                    video_id=vid, stream=stream, rows=rows))
            idx += 1
    return SynthDataset(spec=spec, video_ids=video_ids, labels=labels,
                        splits=splits, sequences=sequences)


def gen_dataset(spec: SynthSpec, out_dir: str | os.PathLike) -> DatasetManifest:
    """Write feature files plus a manifest under ``out_dir`` and return
    the manifest (70/30 stratified train/test split)."""
    data = gen_sequences(spec)
    out_dir = os.fspath(out_dir)
    feat_dir = os.path.join(out_dir, "features")
    os.makedirs(feat_dir, exist_ok=True)
    records = []
    for i, vid in enumerate(data.video_ids):
        paths = {}
        for stream in data.sequences:
            rel = os.path.join("features", f"{vid}.{stream}.gpf")
            write_feature_file(data.sequences[stream][i],
                               os.path.join(out_dir, rel))
            paths[stream] = rel
        records.append(VideoRecord(
            video_id=vid, label=int(data.labels[i]),
            appearance=paths.get("appearance"), motion=paths.get("motion"),
            split=data.splits[i]))
    manifest = DatasetManifest(records=records)
    write_manifest(manifest, os.path.join(out_dir, "manifest.jsonl"))
    return manifest


def misalign(seq: StreamFeatureSequence, shift: int) -> StreamFeatureSequence:
    """Circularly shift frame order; the frame multiset (and hence the
    global mean) is preserved while localized pooling changes."""
    if abs(shift) > seq.frame_count:
        raise ShiftTooLarge(
            f"|shift|={abs(shift)} exceeds frame count {seq.frame_count}")
    return StreamFeatureSequence(video_id=seq.video_id, stream=seq.stream,
                                 rows=np.roll(seq.rows, shift, axis=0))
