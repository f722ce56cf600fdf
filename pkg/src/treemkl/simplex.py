"""Simplex reparametrization of node weights and its backward pass.

Node weights live on the probability simplex (entries in [0, 1], summing
to 1). Optimizers work on free real parameters ``raw``; the constrained
vector is ``beta = exp(raw) / sum(exp(raw))``, so every optimizer step
lands back on the simplex by construction. The softmax Jacobian has the
closed form ``J[p, k] = beta[k] * (delta(p, k) - beta[p])``; its columns
sum to zero, which is why gradients of any loss that is constant on the
simplex vanish after the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, NotOnSimplex, ShapeMismatch, ValidationError

SIMPLEX_TOL = 1e-9


def to_simplex(raw: np.ndarray) -> np.ndarray:
    """Normalized exponentials of ``raw`` with max-subtraction for
    overflow safety; invariant under adding a constant to ``raw``."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size == 0:
        raise ShapeMismatch(f"raw must be a non-empty vector, got {raw.shape}")
    if not np.isfinite(raw).all():
        raise NonFinite("raw parameters contain non-finite values")
    shifted = raw - raw.max()
    e = np.exp(shifted)
    return e / e.sum()


def check_on_simplex(beta: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 1 or beta.size == 0:
        raise ShapeMismatch(f"beta must be a non-empty vector, got {beta.shape}")
    if not np.isfinite(beta).all():
        raise NotOnSimplex("beta contains non-finite values")
    if beta.min() < -tol or beta.max() > 1 + tol:
        raise NotOnSimplex(f"beta entries outside [0, 1]: "
                           f"min={beta.min()}, max={beta.max()}")
    if abs(beta.sum() - 1.0) > tol:
        raise NotOnSimplex(f"beta sums to {beta.sum()}, not 1")
    return beta


def jacobian(beta: np.ndarray) -> np.ndarray:
    """d(beta)/d(raw) at the point with softmax value ``beta``.

    Entry [p, k] = beta[k] * (delta(p, k) - beta[p]).
    """
    beta = check_on_simplex(beta)
    return beta[None, :] * (np.eye(beta.size) - beta[:, None])


def backprop_through_simplex(de_dbeta: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. ``beta`` back to the raw parameters.

    Closed form of the chain rule through the softmax:
    ``de_draw[k] = beta[k] * (de_dbeta[k] - <de_dbeta, beta>)``.
    """
    beta = check_on_simplex(beta)
    de_dbeta = np.asarray(de_dbeta, dtype=np.float64)
    if de_dbeta.shape != beta.shape:
        raise ShapeMismatch(
            f"gradient shape {de_dbeta.shape} != beta shape {beta.shape}")
    return beta * (de_dbeta - de_dbeta @ beta)


def accumulate_shared(gradients: list[np.ndarray] | np.ndarray) -> np.ndarray:
    """Average gradients that address the same shared parameters."""
    arr = np.asarray(gradients, dtype=np.float64)
    if arr.size == 0:
        raise ShapeMismatch("no gradients to accumulate")
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected a list of vectors, got shape {arr.shape}")
    return arr.mean(axis=0)


@dataclass(frozen=True)
class SimplexWeights:
    """Raw parameters and the simplex point they induce, kept consistent."""

    raw: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64).copy()
        beta = to_simplex(raw)
        got = np.asarray(self.beta, dtype=np.float64)
        if got.shape != beta.shape or not np.allclose(got, beta, atol=1e-12):
            raise NotOnSimplex("beta inconsistent with raw parameters")
        raw.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> "SimplexWeights":
        raw = np.asarray(raw, dtype=np.float64)
        return cls(raw=raw, beta=to_simplex(raw))

    @classmethod
    def uniform(cls, n: int) -> "SimplexWeights":
        return cls.from_raw(np.zeros(n))

    @classmethod
    def random(cls, n: int, seed: int) -> "SimplexWeights":
        rng = np.random.default_rng(seed)
        return cls.from_raw(rng.standard_normal(n))

    @classmethod
    def init(cls, n: int, scheme: str, seed: int = 0) -> "SimplexWeights":
        if scheme == "uniform":
            return cls.uniform(n)
        if scheme == "random":
            return cls.random(n, seed)
        raise ValidationError(f"unknown init scheme {scheme!r}")

    @property
    def size(self) -> int:
        return self.raw.size

    def with_raw(self, raw: np.ndarray) -> "SimplexWeights":
        return SimplexWeights.from_raw(raw)
