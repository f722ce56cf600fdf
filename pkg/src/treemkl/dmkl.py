"""Contrastive learning of the node weights, decoupled from the SVMs.

Instead of alternating with dual solves, the node weights are fit
directly to pairwise supervision: a pair of videos is positive when the
labels match, and the loss pushes the combined kernel value toward 1 on
positive pairs and below a margin on negative pairs::

    loss(k, +1) = (1 - k)^2        loss(k, -1) = max(0, k - margin)^2

averaged over a batch. With n videos there are n(n-1)/2 supervised
pairs, far more signal than n labels. Gradients flow through the
combined kernel's weight dependence and then through the simplex
reparametrization, so every optimizer step stays on the simplex. Once
trained, the weights are frozen, the Gram matrix is built once, and the
one-vs-rest machines are trained in a single step.

The recorded loss trace is evaluated on a fixed, seeded evaluation
batch (the full pair set when small enough), so it reflects progress
rather than batch noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, SingleClass, TooFewVideos, ValidationError
from .hierarchy import PooledTree
from .kernels import (
    AVERAGING,
    CONCATENATION,
    KernelConfig,
    NodeKernelCache,
    canonical_variant,
    gram_from_cache,
)
from .simplex import SimplexWeights, backprop_through_simplex
from .svm import SvmModel, TrainConfig, train_one_vs_rest


@dataclass(frozen=True)
class ContrastiveConfig:
    learning_rate: float = 0.0005
    batch_pairs: int = 2048
    iterations: int = 4000
    margin: float = 0.0
    seed: int = 0
    positive_fraction: float | None = None
    optimizer: str = "adam"
    beta_init: str = "uniform"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.batch_pairs < 1 or self.iterations < 0:
            raise ValidationError("batch_pairs must be >= 1, iterations >= 0")
        if not (0.0 <= self.margin < 1.0):
            raise ValidationError(f"margin must be in [0, 1), got {self.margin}")
        if self.positive_fraction is not None and not (
                0.0 < self.positive_fraction < 1.0):
            raise ValidationError("positive_fraction must be in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class PairBatch:
    """Index pairs (i < j for exhaustive batches) with +/-1 same-class labels."""

    i: np.ndarray
    j: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        for name in ("i", "j", "y"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.i.shape == self.j.shape == self.y.shape):
            raise ShapeMismatch("pair index/label arrays differ in shape")

    @property
    def size(self) -> int:
        return self.i.size


def _all_pairs(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(labels.size, k=1)


def pair_labels(labels: np.ndarray, n_pairs: int | None = None,
                seed: int = 0,
                positive_fraction: float | None = None) -> PairBatch:
    """All pairs (default) or a seeded sample of ``n_pairs`` pairs.

    Sampling draws with replacement, optionally rebalanced to a target
    fraction of positive (same-class) pairs.
    """
    labels = np.asarray(labels)
    if labels.size < 2:
        raise TooFewVideos(f"need >= 2 videos, got {labels.size}")
    if n_pairs is None:
        i_idx, j_idx = _all_pairs(labels)
        return PairBatch(i=i_idx, j=j_idx,
                         y=np.where(labels[i_idx] == labels[j_idx], 1.0, -1.0))
    rng = np.random.default_rng(seed)
    return _sample_pairs(labels, n_pairs, rng, positive_fraction)


def _sample_pairs(labels: np.ndarray, n_pairs: int,
                  rng: np.random.Generator,
                  positive_fraction: float | None) -> PairBatch:
    i_all, j_all = _all_pairs(labels)
    y_all = np.where(labels[i_all] == labels[j_all], 1.0, -1.0)
    if positive_fraction is None and n_pairs >= i_all.size:
        # batch budget covers every pair: deterministic full batch, which
        # turns plain gradient descent into exact (monotone) descent
        return PairBatch(i=i_all, j=j_all, y=y_all)
    if positive_fraction is None:
        picks = rng.integers(0, i_all.size, size=n_pairs)
    else:
        pos = np.flatnonzero(y_all > 0)
        neg = np.flatnonzero(y_all < 0)
        if pos.size == 0 or neg.size == 0:
            raise TooFewVideos("rebalancing needs both pair polarities")
        n_pos = int(round(positive_fraction * n_pairs))
        n_pos = min(max(n_pos, 1), n_pairs - 1)
        picks = np.concatenate([
            pos[rng.integers(0, pos.size, size=n_pos)],
            neg[rng.integers(0, neg.size, size=n_pairs - n_pos)],
        ])
    return PairBatch(i=i_all[picks], j=j_all[picks], y=y_all[picks])


def contrastive_loss(k_vals: np.ndarray, y: np.ndarray,
                     margin: float = 0.0) -> float:
    """Mean squared disagreement between kernel values and pair labels;
    zero exactly when positives sit at 1 and negatives at or below the
    margin."""
    k_vals = np.asarray(k_vals, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if k_vals.shape != y.shape:
        raise ShapeMismatch(f"{k_vals.shape} kernel values vs {y.shape} labels")
    pos = (1.0 - k_vals) ** 2
    neg = np.maximum(0.0, k_vals - margin) ** 2
    return float(np.mean(np.where(y > 0, pos, neg)))


def _batch_forward(cache: NodeKernelCache, batch: PairBatch,
                   beta: np.ndarray, variant: str):
    """Kernel values and their per-pair beta-gradients for a batch."""
    if variant == CONCATENATION:
        aligned = cache.aligned()  # (m, n, n)
        diag = aligned[:, batch.i, batch.j].T  # (batch, m)
        return diag @ beta, diag
    blocks = cache.pair_blocks(batch.i, batch.j)  # (batch, m, m)
    weighted = blocks @ beta                      # (batch, m)
    k_vals = weighted @ beta
    grads = weighted + np.einsum("bmn,m->bn", blocks, beta, optimize=True)
    return k_vals, grads


def loss_grad(batch: PairBatch, cache: NodeKernelCache,
              weights: SimplexWeights, variant: str,
              margin: float = 0.0) -> tuple[float, np.ndarray]:
    """Batch loss and its gradient w.r.t. the raw (pre-softmax)
    parameters, composing the pair losses, the kernel's weight
    dependence, and the simplex Jacobian."""
    variant = canonical_variant(variant)
    beta = weights.beta
    k_vals, k_grads = _batch_forward(cache, batch, beta, variant)
    pos = batch.y > 0
    resid = np.where(pos, k_vals - 1.0, np.maximum(0.0, k_vals - margin))
    loss = float(np.mean(resid ** 2))
    de_dk = 2.0 * resid / batch.size
    de_dbeta = de_dk @ k_grads
    return loss, backprop_through_simplex(de_dbeta, beta)


@dataclass
class AdamState:
    """First/second moment accumulators for the raw parameters."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))

    def update(self, grad: np.ndarray, learning_rate: float) -> np.ndarray:
        if grad.shape != self.m.shape:
            raise ShapeMismatch(f"gradient {grad.shape} vs state {self.m.shape}")
        self.step += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad ** 2
        m_hat = self.m / (1.0 - self.beta1 ** self.step)
        v_hat = self.v / (1.0 - self.beta2 ** self.step)
        return -learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class DmklResult:
    weights: SimplexWeights
    loss_trace: np.ndarray
    beta_trace: np.ndarray          # weights at start plus after each step
    eval_batch: PairBatch = field(repr=False, compare=False, default=None)


def dmkl_fit(trees: list[PooledTree], labels: np.ndarray, variant: str,
             cfg: ContrastiveConfig, kernel_cfg: KernelConfig) -> DmklResult:
    """Minimize the contrastive disagreement over the simplex.

    Deterministic given the seed: the evaluation batch, every training
    batch, and any random initialization all derive from it. The trace
    holds the evaluation-batch loss before training and after each of
    the ``iterations`` steps.
    """
    variant = canonical_variant(variant)
    labels = np.asarray(labels)
    if labels.size < 2:
        raise TooFewVideos(f"need >= 2 videos, got {labels.size}")
    if np.unique(labels).size < 2:
        raise SingleClass("need at least 2 classes")
    cache = NodeKernelCache(trees, kernel_cfg)
    if cache._cross_is_dense() and variant == AVERAGING:
        cache.cross()  # precompute once; batches gather from it

    eval_ss, batch_ss, init_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    total_pairs = labels.size * (labels.size - 1) // 2
    if cfg.positive_fraction is None and total_pairs <= cfg.batch_pairs:
        eval_batch = pair_labels(labels)
    else:
        # fixed eval batch drawn the same way training batches are, so
        # the trace measures the objective actually being minimized
        eval_batch = _sample_pairs(labels, cfg.batch_pairs,
                                   np.random.default_rng(eval_ss),
                                   cfg.positive_fraction)

    weights = SimplexWeights.init(
        cache.nodes, cfg.beta_init,
        seed=int(np.random.default_rng(init_ss).integers(2 ** 31)))
    batch_rng = np.random.default_rng(batch_ss)
    adam = AdamState.zeros(cache.nodes)

    def eval_loss(w: SimplexWeights) -> float:
        k_vals, _ = _batch_forward(cache, eval_batch, w.beta, variant)
        return contrastive_loss(k_vals, eval_batch.y, cfg.margin)

    trace = [eval_loss(weights)]
    beta_trace = [weights.beta.copy()]
    for _ in range(cfg.iterations):
        batch = _sample_pairs(labels, cfg.batch_pairs, batch_rng,
                              cfg.positive_fraction)
        _, grad = loss_grad(batch, cache, weights, variant, cfg.margin)
        if cfg.optimizer == "adam":
            delta = adam.update(grad, cfg.learning_rate)
        else:
            delta = -cfg.learning_rate * grad
        weights = weights.with_raw(weights.raw + delta)
        trace.append(eval_loss(weights))
        beta_trace.append(weights.beta.copy())
    return DmklResult(weights=weights, loss_trace=np.asarray(trace),
                      beta_trace=np.asarray(beta_trace),
                      eval_batch=eval_batch)


@dataclass(frozen=True)
class DmklPipelineResult:
    weights: SimplexWeights
    model: SvmModel
    loss_trace: np.ndarray
    beta_trace: np.ndarray = field(repr=False, default=None)


def dmkl_then_svm(trees: list[PooledTree], labels: np.ndarray, variant: str,
                  cfg: ContrastiveConfig, kernel_cfg: KernelConfig,
                  svm_cfg: TrainConfig = TrainConfig()) -> DmklPipelineResult:
    """Freeze the contrastively-learned weights, build the Gram matrix,
    and train the one-vs-rest machines in one step."""
    fit = dmkl_fit(trees, labels, variant, cfg, kernel_cfg)
    cache = NodeKernelCache(trees, kernel_cfg)
    gram = gram_from_cache(cache, fit.weights.beta, canonical_variant(variant))
    model = train_one_vs_rest(gram, np.asarray(labels), svm_cfg)
    return DmklPipelineResult(weights=fit.weights, model=model,
                              loss_trace=fit.loss_trace,
                              beta_trace=fit.beta_trace)
