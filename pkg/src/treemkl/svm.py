"""Max-margin dual solver and one-vs-rest kernel classification.

The binary dual solved here, for labels ``y in {-1, +1}`` and a PSD
kernel matrix ``K``::

    min_alpha  0.5 * sum_ij alpha_i alpha_j y_i y_j K_ij - sum_i alpha_i
    s.t.       0 <= alpha_i <= c_box,   sum_i y_i alpha_i = 0

solved by sequential two-coordinate updates along directions that keep
the equality constraint satisfied, always picking the maximally
KKT-violating pair (deterministic given input order). ``c_box = inf``
removes the upper bound, matching the hard-margin formulation exactly;
the finite default exists because real data is rarely separable.

The decision function of class ``c`` is
``g_c(v) = sum_i alpha_i^c y_ic K(v, v_i) + b_c`` and prediction takes
the class with the highest score (ties break to the smallest class id).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotConverged, ShapeMismatch, SingleClass, ValidationError
from .kernels import GramMatrix


@dataclass(frozen=True)
class TrainConfig:
    c_box: float = 10.0
    kkt_tol: float = 1e-6
    max_passes: int = 200

    def __post_init__(self):
        if not (self.c_box > 0):
            raise ValidationError(f"c_box must be positive, got {self.c_box}")
        if not (self.kkt_tol > 0):
            raise ValidationError(f"kkt_tol must be positive, got {self.kkt_tol}")
        if self.max_passes < 1:
            raise ValidationError(f"max_passes must be >= 1, got {self.max_passes}")


@dataclass(frozen=True)
class DualSolution:
    alpha: np.ndarray
    b: float
    updates: int
    kkt_residual: float
    objective: float

    def __iter__(self):
        # allows `alpha, b = solve_dual(...)`
        return iter((self.alpha, self.b))


def _as_matrix(kernel) -> np.ndarray:
    values = getattr(kernel, "values", kernel)
    return np.asarray(values, dtype=np.float64)


def dual_objective(K, alpha: np.ndarray, y: np.ndarray) -> float:
    K = _as_matrix(K)
    ay = alpha * y
    return float(0.5 * ay @ K @ ay - alpha.sum())


def solve_dual(K, y: np.ndarray, cfg: TrainConfig = TrainConfig()) -> DualSolution:
    """Solve the box-constrained dual; see the module docstring.

    The dual objective decreases at every pair update. The shift ``b``
    averages the stationarity values of unbounded support vectors, with
    a midpoint-of-KKT-bounds fallback when every support vector sits on
    a bound.

    Raises :class:`SingleClass` when only one label is present and
    :class:`NotConverged` (carrying the best iterate) when the KKT
    residual is still above ``kkt_tol`` after ``max_passes * n`` pair
    updates.
    """
    K = _as_matrix(K)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if K.shape != (n, n):
        raise ShapeMismatch(f"kernel {K.shape} vs {n} labels")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise SingleClass("labels are all one class")
    if not np.all(np.abs(y) == 1.0):
        raise ValidationError("labels must be +/-1")

    c_box = cfg.c_box
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective: Q @ alpha - 1
    vals = np.empty(n)
    max_updates = cfg.max_passes * n
    updates = 0
    residual = math.inf

    while True:
        # -y * grad, the quantity whose spread measures KKT violation
        np.multiply(y, grad, out=vals)
        np.negative(vals, out=vals)
        up = ((y > 0) & (alpha < c_box)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c_box)) | ((y > 0) & (alpha > 0))
        up_vals = np.where(up, vals, -np.inf)
        low_vals = np.where(low, vals, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        residual = float(up_vals[i] - low_vals[j])
        if residual <= cfg.kkt_tol:
            break
        if updates >= max_updates:
            b = _shift(alpha, grad, y, vals, c_box)
            raise NotConverged(
                f"KKT residual {residual:.3e} > tol {cfg.kkt_tol:.3e} "
                f"after {updates} pair updates",
                alpha=alpha, b=b, residual=residual, updates=updates)

        # step along d = y_i e_i - y_j e_j (keeps sum(y * alpha) fixed)
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        t_max_i = (c_box - alpha[i]) if y[i] > 0 else alpha[i]
        t_max_j = (c_box - alpha[j]) if y[j] < 0 else alpha[j]
        t_max = min(t_max_i, t_max_j)
        if quad > 1e-12:
            t = min(residual / quad, t_max)
        else:
            t = t_max
        alpha[i] += t * y[i]
        alpha[j] -= t * y[j]
        grad += t * y * (K[:, i] - K[:, j])
        updates += 1

    np.clip(alpha, 0.0, c_box if math.isfinite(c_box) else None, out=alpha)
    b = _shift(alpha, grad, y, vals, c_box)
    return DualSolution(alpha=alpha, b=b, updates=updates,
                        kkt_residual=residual,
                        objective=dual_objective(K, alpha, y))


def _shift(alpha, grad, y, vals, c_box, bound_tol=1e-9):
    interior = (alpha > bound_tol) & (alpha < c_box - bound_tol)
    if interior.any():
        # stationarity gives b = -y_i * grad_i on unbounded support vectors
        return float(np.mean(-y[interior] * grad[interior]))
    up = ((y > 0) & (alpha < c_box)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < c_box)) | ((y > 0) & (alpha > 0))
    hi = np.max(np.where(up, vals, -np.inf))
    lo = np.min(np.where(low, vals, np.inf))
    return float((hi + lo) / 2.0)


@dataclass(frozen=True)
class SvmModel:
    """One binary machine per class over a shared training set."""

    train_ids: tuple[str, ...]
    labels: np.ndarray              # class id per training video
    class_ids: np.ndarray           # sorted distinct class ids
    alpha: np.ndarray               # (classes, n) dual coefficients
    b: np.ndarray                   # (classes,) shifts

    def __post_init__(self):
        object.__setattr__(self, "train_ids", tuple(self.train_ids))
        for name in ("labels", "class_ids", "alpha", "b"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.alpha.shape != (self.class_ids.size, len(self.train_ids)):
            raise ShapeMismatch("alpha shape inconsistent with ids/classes")

    @property
    def n_train(self) -> int:
        return len(self.train_ids)

    def signs_for(self, c: int) -> np.ndarray:
        """y_ic: +1 where the training label equals class c, else -1."""
        return np.where(self.labels == c, 1.0, -1.0)

    def class_index(self, c: int) -> int:
        pos = np.searchsorted(self.class_ids, c)
        if pos >= self.class_ids.size or self.class_ids[pos] != c:
            raise ValidationError(f"class {c} not in model")
        return int(pos)


def train_one_vs_rest(gram: GramMatrix, labels: np.ndarray,
                      cfg: TrainConfig = TrainConfig()) -> SvmModel:
    """Train one binary dual per class (positive = that class).

    Per-class failures are re-raised with the class id attached.
    """
    labels = np.asarray(labels)
    if labels.shape != (gram.n,):
        raise ShapeMismatch(f"{labels.size} labels for {gram.n} videos")
    class_ids = np.unique(labels)
    if class_ids.size < 2:
        raise SingleClass(f"need >= 2 classes, got {class_ids.size}")
    alpha = np.zeros((class_ids.size, gram.n))
    b = np.zeros(class_ids.size)
    for ci, c in enumerate(class_ids):
        y = np.where(labels == c, 1.0, -1.0)
        try:
            sol = solve_dual(gram, y, cfg)
        except NotConverged as exc:
            raise NotConverged(f"class {c}: {exc}", alpha=exc.alpha, b=exc.b,
                               residual=exc.residual, updates=exc.updates) from exc
        alpha[ci] = sol.alpha
        b[ci] = sol.b
    return SvmModel(train_ids=gram.ids, labels=labels,
                    class_ids=class_ids, alpha=alpha, b=b)


def decision(model: SvmModel, c: int, k_col: np.ndarray) -> float:
    """Score of class ``c`` for one video given its kernel values
    against the training set (aligned to ``model.train_ids``)."""
    k_col = np.asarray(k_col, dtype=np.float64)
    if k_col.shape != (model.n_train,):
        raise ShapeMismatch(
            f"kernel column has {k_col.size} entries for "
            f"{model.n_train} training videos")
    ci = model.class_index(c)
    return float((model.alpha[ci] * model.signs_for(c)) @ k_col + model.b[ci])


def decision_scores(model: SvmModel, k_cols: np.ndarray) -> np.ndarray:
    """Scores for a batch: rows are videos, columns follow
    ``model.class_ids``."""
    k_cols = np.atleast_2d(np.asarray(k_cols, dtype=np.float64))
    if k_cols.shape[1] != model.n_train:
        raise ShapeMismatch(
            f"kernel columns have {k_cols.shape[1]} entries for "
            f"{model.n_train} training videos")
    signed = model.alpha * np.stack(
        [model.signs_for(c) for c in model.class_ids])
    return k_cols @ signed.T + model.b


def predict(model: SvmModel, k_cols: np.ndarray) -> np.ndarray:
    """Highest-scoring class per video; ties go to the smallest class id."""
    scores = decision_scores(model, k_cols)
    return model.class_ids[np.argmax(scores, axis=1)]
