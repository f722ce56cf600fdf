"""Elementary kernels, combined tree kernels, Gram matrices, gradients.

Two videos are compared through their pooled trees. With node weights
``beta`` (canonical node order) and an elementary kernel ``kappa``:

* concatenation variant:  ``K(A, B) = sum_m beta[m] * kappa(a_m, b_m)``,
  aligned node pairs only — assumes content is temporally aligned;
* averaging variant:      ``K(A, B) = sum_{m,n} beta[m] beta[n] *
  kappa(a_m, b_n)``, all cross pairs — tolerant to misalignment.

Both are positive semi-definite for any non-negative ``beta`` because
sums and products preserve PSD-ness; with an RBF elementary kernel and
``beta`` on the simplex all combined values stay in [0, 1].

Computing a Gram matrix re-weights a fixed set of elementary node
kernels, so :class:`NodeKernelCache` evaluates them once per (tree set,
kernel config) and every ``beta``-dependent quantity afterwards is a
cheap contraction. This pairwise table is the quadratic-cost core of the
whole method.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    DegenerateData,
    DimMismatch,
    IdMismatch,
    ShapeMismatch,
    Truncated,
    ValidationError,
)
from .hierarchy import PooledTree

CONCATENATION = "concatenation"
AVERAGING = "averaging"
VARIANTS = (CONCATENATION, AVERAGING)

# alias map accepted on CLI surfaces
VARIANT_ALIASES = {"concat": CONCATENATION, "avg": AVERAGING,
                   CONCATENATION: CONCATENATION, AVERAGING: AVERAGING}

# largest dense (nodes^2 x rows x cols) tensor we materialize; beyond this
# the averaging contraction loops over node pairs. Size-based so the code
# path, and therefore the bits, depend only on the inputs.
_DENSE_LIMIT = 2 ** 25


def canonical_variant(name: str) -> str:
    try:
        return VARIANT_ALIASES[name]
    except KeyError:
        raise ValidationError(f"unknown combine variant {name!r}") from None


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "rbf"
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValidationError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf":
            if self.gamma is None or not (self.gamma > 0):
                raise ValidationError(
                    f"rbf kernel needs gamma > 0, got {self.gamma}")


def elementary(x: np.ndarray, y: np.ndarray, cfg: KernelConfig) -> float:
    """kappa(x, y): rbf = exp(-gamma * ||x - y||^2), linear = <x, y>."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimMismatch(f"vector shapes differ: {x.shape} vs {y.shape}")
    if cfg.kind == "linear":
        return float(x @ y)
    d = x - y
    return float(np.exp(-cfg.gamma * (d @ d)))


def _kernel_matrix(X: np.ndarray, Y: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Pairwise kappa between rows of X (a, d) and rows of Y (b, d)."""
    if cfg.kind == "linear":
        return X @ Y.T
    sq = (np.sum(X * X, axis=1)[:, None] + np.sum(Y * Y, axis=1)[None, :]
          - 2.0 * (X @ Y.T))
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-cfg.gamma * sq)


def stack_trees(trees: list[PooledTree]) -> tuple[np.ndarray, list[str]]:
    """Stack homogeneous trees into an (n, nodes, dim) array + id list."""
    if not trees:
        raise ShapeMismatch("empty tree list")
    depth, dim = trees[0].depth, trees[0].dim
    for t in trees:
        if t.depth != depth or t.dim != dim:
            raise ShapeMismatch(
                f"tree {t.video_id}: depth/dim ({t.depth},{t.dim}) != "
                f"({depth},{dim})")
    return np.stack([t.vectors for t in trees]), [t.video_id for t in trees]


def _check_pair(a: PooledTree, b: PooledTree, beta: np.ndarray) -> np.ndarray:
    if a.depth != b.depth or a.dim != b.dim:
        raise ShapeMismatch(
            f"trees {a.video_id}/{b.video_id} have mismatched shapes")
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (a.node_count,):
        raise ShapeMismatch(
            f"beta has {beta.size} entries for {a.node_count} nodes")
    return beta


def combined_kernel(a: PooledTree, b: PooledTree, beta: np.ndarray,
                    variant: str, cfg: KernelConfig) -> float:
    variant = canonical_variant(variant)
    beta = _check_pair(a, b, beta)
    cross = _kernel_matrix(a.vectors, b.vectors, cfg)
    if variant == CONCATENATION:
        return float(np.diag(cross) @ beta)
    return float(beta @ cross @ beta)


def kernel_grad_beta(a: PooledTree, b: PooledTree, beta: np.ndarray,
                     variant: str, cfg: KernelConfig) -> np.ndarray:
    """d combined_kernel / d beta; constant in beta for concatenation,
    ``(C + C^T) beta`` for averaging."""
    variant = canonical_variant(variant)
    beta = _check_pair(a, b, beta)
    cross = _kernel_matrix(a.vectors, b.vectors, cfg)
    if variant == CONCATENATION:
        return np.diag(cross).copy()
    return (cross + cross.T) @ beta


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric combined-kernel matrix over an ordered video set."""

    values: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeMismatch(f"gram must be square, got {v.shape}")
        if len(self.ids) != v.shape[0]:
            raise ShapeMismatch(
                f"{len(self.ids)} ids for {v.shape[0]} rows")
        if not np.isfinite(v).all():
            raise ValidationError("gram contains non-finite entries")
        if np.abs(v - v.T).max(initial=0.0) > 1e-10:
            raise ValidationError("gram is not symmetric within 1e-10")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])


class NodeKernelCache:
    """Elementary node kernels between two tree sets, computed once.

    ``aligned()`` returns the (nodes, rows, cols) tensor of same-node
    kernels; ``cross()`` the full (nodes, nodes, rows, cols) tensor.
    ``combined(beta, variant)`` contracts either tensor with the weights
    without touching feature vectors again.
    """

    def __init__(self, row_trees: list[PooledTree], cfg: KernelConfig,
                 col_trees: list[PooledTree] | None = None):
        self.cfg = cfg
        self.rows, self.row_ids = stack_trees(row_trees)
        if col_trees is None:
            self.cols, self.col_ids = self.rows, self.row_ids
        else:
            self.cols, self.col_ids = stack_trees(col_trees)
            if self.cols.shape[1:] != self.rows.shape[1:]:
                raise ShapeMismatch("row/col trees have mismatched shapes")
        self.nodes = self.rows.shape[1]
        self._aligned: np.ndarray | None = None
        self._cross: np.ndarray | None = None

    def _cross_is_dense(self) -> bool:
        size = (self.nodes ** 2) * self.rows.shape[0] * self.cols.shape[0]
        return size <= _DENSE_LIMIT

    def aligned(self) -> np.ndarray:
        if self._aligned is None:
            m, (nr, nc) = self.nodes, (self.rows.shape[0], self.cols.shape[0])
            out = np.empty((m, nr, nc))
            for node in range(m):
                out[node] = _kernel_matrix(self.rows[:, node, :],
                                           self.cols[:, node, :], self.cfg)
            self._aligned = out
        return self._aligned

    def cross(self) -> np.ndarray:
        if self._cross is None:
            m, d = self.nodes, self.rows.shape[2]
            nr, nc = self.rows.shape[0], self.cols.shape[0]
            flat_r = self.rows.transpose(1, 0, 2).reshape(m * nr, d)
            flat_c = self.cols.transpose(1, 0, 2).reshape(m * nc, d)
            big = _kernel_matrix(flat_r, flat_c, self.cfg)
            self._cross = np.ascontiguousarray(
                big.reshape(m, nr, m, nc).transpose(0, 2, 1, 3))
        return self._cross

    def combined(self, beta: np.ndarray, variant: str) -> np.ndarray:
        variant = canonical_variant(variant)
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape != (self.nodes,):
            raise ShapeMismatch(
                f"beta has {beta.size} entries for {self.nodes} nodes")
        if variant == CONCATENATION:
            return np.tensordot(beta, self.aligned(), axes=1)
        if self._cross is not None or self._cross_is_dense():
            return np.einsum("mnab,m,n->ab", self.cross(), beta, beta,
                             optimize=True)
        # node-pair loop keeps memory at one (rows, cols) block
        out = np.zeros((self.rows.shape[0], self.cols.shape[0]))
        for m in range(self.nodes):
            for n in range(self.nodes):
                w = beta[m] * beta[n]
                out += w * _kernel_matrix(self.rows[:, m, :],
                                          self.cols[:, n, :], self.cfg)
        return out

    def pair_blocks(self, i_idx: np.ndarray, j_idx: np.ndarray) -> np.ndarray:
        """Node-kernel matrices for row/row index pairs: (batch, m, m).

        Both index arrays address ``row_trees``; used by pair-based
        training where rows and cols are the same set.
        """
        if self.cols is not self.rows:
            raise ShapeMismatch("pair_blocks needs a single tree set")
        if self._cross is not None:
            return np.ascontiguousarray(
                self._cross[:, :, i_idx, j_idx].transpose(2, 0, 1))
        a, b = self.rows[i_idx], self.rows[j_idx]
        dots = np.einsum("bmd,bnd->bmn", a, b, optimize=True)
        if self.cfg.kind == "linear":
            return dots
        sqn = np.sum(self.rows * self.rows, axis=2)
        sq = sqn[i_idx][:, :, None] + sqn[j_idx][:, None, :] - 2.0 * dots
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-self.cfg.gamma * sq)


def kernel_columns(row_trees: list[PooledTree], col_trees: list[PooledTree],
                   beta: np.ndarray, variant: str,
                   cfg: KernelConfig) -> np.ndarray:
    """Combined-kernel values between two tree lists, shape (rows, cols)."""
    cache = NodeKernelCache(row_trees, cfg, col_trees)
    return cache.combined(beta, variant)


def gram_matrix(trees: list[PooledTree], beta: np.ndarray, variant: str,
                cfg: KernelConfig) -> GramMatrix:
    """Pairwise combined kernel over one tree list, exactly symmetric
    (upper triangle mirrored)."""
    cache = NodeKernelCache(trees, cfg)
    values = cache.combined(beta, variant)
    iu = np.triu_indices(values.shape[0], k=1)
    values[(iu[1], iu[0])] = values[iu]
    return GramMatrix(values=values, ids=tuple(cache.row_ids))


def gram_from_cache(cache: NodeKernelCache, beta: np.ndarray,
                    variant: str) -> GramMatrix:
    if cache.cols is not cache.rows:
        raise ShapeMismatch("gram needs a square cache")
    values = cache.combined(beta, variant)
    iu = np.triu_indices(values.shape[0], k=1)
    values[(iu[1], iu[0])] = values[iu]
    return GramMatrix(values=values, ids=tuple(cache.row_ids))


def median_gamma(trees: list[PooledTree], cap: int = 10_000,
                 seed: int = 0) -> float:
    """Bandwidth heuristic: 1 / median squared distance between aligned
    node vectors of distinct trees, over a seeded sample capped at
    ``cap`` pairs (all pairs when fewer)."""
    if len(trees) < 2:
        raise ShapeMismatch("median_gamma needs at least 2 trees")
    vectors, _ = stack_trees(trees)
    n, m = vectors.shape[0], vectors.shape[1]
    pairs = n * (n - 1) // 2
    total = pairs * m
    if total <= cap:
        picks = np.arange(total)
    else:
        rng = np.random.default_rng(seed)
        picks = rng.choice(total, size=cap, replace=False)
    pair_idx, node_idx = np.divmod(picks, m)
    # decode linear upper-triangle index -> (i, j), row-major
    row_starts = np.concatenate([[0], np.cumsum(n - 1 - np.arange(n - 1))])
    i_idx = np.searchsorted(row_starts, pair_idx, side="right") - 1
    j_idx = pair_idx - row_starts[i_idx] + i_idx + 1
    diff = (vectors[i_idx, node_idx, :] - vectors[j_idx, node_idx, :])
    med = float(np.median(np.sum(diff * diff, axis=1)))
    if med <= 0.0:
        raise DegenerateData("median aligned node distance is zero")
    return 1.0 / med


def fuse_kernels(gram_a: GramMatrix, gram_b: GramMatrix,
                 weight: float = 0.5) -> GramMatrix:
    """Convex combination ``w * A + (1 - w) * B``; PSD is preserved."""
    if gram_a.ids != gram_b.ids:
        raise IdMismatch("gram matrices cover different video sets")
    if not (0.0 <= weight <= 1.0):
        raise ValidationError(f"fusion weight {weight} outside [0, 1]")
    return GramMatrix(values=weight * gram_a.values
                      + (1.0 - weight) * gram_b.values,
                      ids=gram_a.ids)


# --- gram cache file -----------------------------------------------------------

GRM1_MAGIC = b"GRM1"


def write_gram_file(gram: GramMatrix, path) -> None:
    """GRM1 layout: b"GRM1" | u32 n | n x (u32 len + utf-8 id) |
    n(n+1)/2 upper-triangular f64 (row-major, diagonal included)."""
    with open(path, "wb") as fh:
        fh.write(GRM1_MAGIC)
        fh.write(struct.pack("<I", gram.n))
        for vid in gram.ids:
            raw = vid.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        iu = np.triu_indices(gram.n)
        fh.write(gram.values[iu].astype("<f8").tobytes())


def load_gram_file(path) -> GramMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != GRM1_MAGIC:
        raise BadMagic(f"{path}: offset 0: expected {GRM1_MAGIC!r}")
    offset = 4
    try:
        (n,) = struct.unpack_from("<I", data, offset)
        offset += 4
        ids = []
        for _ in range(n):
            (length,) = struct.unpack_from("<I", data, offset)
            offset += 4
            ids.append(data[offset:offset + length].decode("utf-8"))
            offset += length
    except struct.error as exc:
        raise Truncated(f"{path}: offset {offset}: header incomplete") from exc
    count = n * (n + 1) // 2
    need = offset + 8 * count
    if len(data) < need:
        raise Truncated(f"{path}: offset {len(data)}: expected {need} bytes")
    upper = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
    values = np.zeros((n, n))
    iu = np.triu_indices(n)
    values[iu] = upper
    values[(iu[1], iu[0])] = upper
    return GramMatrix(values=values, ids=tuple(ids))
