"""Binary temporal hierarchy and node-wise mean pooling.

Level ``l`` (1-based) splits the frame axis into ``2**(l-1)`` contiguous
intervals; a node is identified by ``(level, index)`` with ``index`` in
``1..2**(l-1)``. The canonical node order is level-major then index, and
every weight vector in the package follows it. Depth ``D`` gives
``2**D - 1`` nodes; the root (level 1) is plain global average pooling.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dataio import StreamFeatureSequence
from .errors import (
    BadMagic,
    InsufficientFrames,
    NonFinite,
    TrailingData,
    Truncated,
    ValidationError,
    ZeroDim,
    ZeroFrames,
)

GPT1_MAGIC = b"GPT1"


@dataclass(frozen=True)
class Hierarchy:
    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValidationError(f"depth must be >= 1, got {self.depth}")

    @property
    def node_count(self) -> int:
        return 2 ** self.depth - 1

    @property
    def nodes(self) -> tuple[tuple[int, int], ...]:
        """Canonical (level, index) order: level-major, then index."""
        return _nodes(self.depth)

    def node_position(self, level: int, index: int) -> int:
        """0-based position of node (level, index) in canonical order."""
        if not (1 <= level <= self.depth):
            raise ValidationError(f"level {level} outside 1..{self.depth}")
        if not (1 <= index <= 2 ** (level - 1)):
            raise ValidationError(
                f"index {index} outside 1..{2 ** (level - 1)} at level {level}")
        return 2 ** (level - 1) - 1 + (index - 1)

    def level_slice(self, level: int) -> slice:
        """Canonical-order slice covering every node of one level."""
        first = self.node_position(level, 1)
        return slice(first, first + 2 ** (level - 1))


@lru_cache(maxsize=None)
def _nodes(depth: int) -> tuple[tuple[int, int], ...]:
    return tuple((l, k)
                 for l in range(1, depth + 1)
                 for k in range(1, 2 ** (l - 1) + 1))


@dataclass(frozen=True)
class NodeInterval:
    """Half-open frame interval [start, end) owned by node (level, index)."""

    level: int
    index: int
    start: int
    end: int


@dataclass(frozen=True)
class PooledTree:
    """Node-wise mean vectors for one video and stream.

    ``vectors`` has shape (node_count, dim) in canonical node order.
    """

    video_id: str
    stream: str
    depth: int
    vectors: np.ndarray

    def __post_init__(self):
        vec = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        if vec.ndim != 2:
            raise ValidationError(f"vectors must be 2-D, got {vec.shape}")
        if vec.shape[0] != 2 ** self.depth - 1:
            raise ValidationError(
                f"{self.video_id}: {vec.shape[0]} node vectors for depth "
                f"{self.depth} (expected {2 ** self.depth - 1})")
        if not np.isfinite(vec).all():
            raise NonFinite(f"{self.video_id}/{self.stream}: non-finite pooled value")
        vec.flags.writeable = False
        object.__setattr__(self, "vectors", vec)

    @property
    def node_count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def root(self) -> np.ndarray:
        return self.vectors[0]


def build_intervals(frame_count: int, depth: int) -> list[NodeInterval]:
    """Partition ``[0, frame_count)`` per level with floor-rule boundaries.

    Node ``k`` of level ``l`` covers
    ``[floor((k-1)*T / 2**(l-1)), floor(k*T / 2**(l-1)))``, so each level
    partitions the frame axis exactly and interval sizes differ by at
    most one frame. Requires ``frame_count >= 2**(depth-1)`` so every
    leaf is non-empty.
    """
    if depth < 1:
        raise ValidationError(f"depth must be >= 1, got {depth}")
    leaves = 2 ** (depth - 1)
    if frame_count < leaves:
        raise InsufficientFrames(
            f"frame_count={frame_count} cannot fill depth={depth} "
            f"({leaves} leaves)")
    out = []
    for level in range(1, depth + 1):
        parts = 2 ** (level - 1)
        for index in range(1, parts + 1):
            start = (index - 1) * frame_count // parts
            end = index * frame_count // parts
            out.append(NodeInterval(level=level, index=index,
                                    start=start, end=end))
    return out


def pool_sequence(seq: StreamFeatureSequence, hierarchy: Hierarchy) -> PooledTree:
    """Mean-pool ``seq`` over every node interval of ``hierarchy``.

    The root vector equals the global mean of all frames; deeper nodes
    average shorter, better-localized spans.
    """
    intervals = build_intervals(seq.frame_count, hierarchy.depth)
    vectors = np.empty((hierarchy.node_count, seq.dim))
    for pos, iv in enumerate(intervals):
        vectors[pos] = seq.rows[iv.start:iv.end].mean(axis=0)
    return PooledTree(video_id=seq.video_id, stream=seq.stream,
                      depth=hierarchy.depth, vectors=vectors)


# --- GPT1 container (pooled-tree export) --------------------------------------

def write_pooled_file(tree: PooledTree, path: str | os.PathLike) -> None:
    """GPT1 layout: b"GPT1" | u32 dim | u32 node_count | node_count*dim f32."""
    vec32 = tree.vectors.astype("<f4")
    if not np.isfinite(vec32).all():
        raise NonFinite(f"{path}: values overflow float32")
    with open(path, "wb") as fh:
        fh.write(GPT1_MAGIC)
        fh.write(struct.pack("<II", tree.dim, tree.node_count))
        fh.write(vec32.tobytes(order="C"))


def load_pooled_file(path: str | os.PathLike, video_id: str | None = None,
                     stream: str = "appearance") -> PooledTree:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != GPT1_MAGIC:
        raise BadMagic(f"{path}: offset 0: expected {GPT1_MAGIC!r}, "
                       f"got {data[:4]!r}")
    if len(data) < 12:
        raise Truncated(f"{path}: offset {len(data)}: header incomplete")
    dim, node_count = struct.unpack_from("<II", data, 4)
    if node_count == 0:
        raise ZeroFrames(f"{path}: offset 8: node count is 0")
    if dim == 0:
        raise ZeroDim(f"{path}: offset 4: dim is 0")
    depth = (node_count + 1).bit_length() - 1
    if 2 ** depth - 1 != node_count:
        raise ValidationError(
            f"{path}: node count {node_count} is not 2**D - 1")
    need = 12 + 4 * dim * node_count
    if len(data) < need:
        raise Truncated(f"{path}: offset {len(data)}: payload declares "
                        f"{node_count}x{dim} floats")
    if len(data) > need:
        raise TrailingData(f"{path}: offset {need}: trailing bytes")
    raw = np.frombuffer(data, dtype="<f4", count=dim * node_count, offset=12)
    if video_id is None:
        video_id = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return PooledTree(video_id=video_id, stream=stream, depth=depth,
                      vectors=raw.reshape(node_count, dim).astype(np.float64))
