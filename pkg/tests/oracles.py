"""Independent reference implementations used only to check the library.

Nothing here shares code with the package: the QP oracle enumerates
active sets, gradients come from central finite differences, and the
simplex quadratic program is solved by projected gradient descent.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def central_difference(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for k in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[k] += step
        lo[k] -= step
        grad[k] = (f(hi) - f(lo)) / (2.0 * step)
    return grad


def qp_enumeration_oracle(K: np.ndarray, y: np.ndarray, c_box: float):
    """Global optimum of the SVM dual by exhaustive active-set search.

    min 0.5 a'Qa - 1'a  s.t. 0 <= a <= c_box, y'a = 0, Q = yy' * K.

    Every variable is pinned to 0, pinned to c_box, or left free; for
    each of the 3^n (or 2^n for an infinite box) patterns the free block
    plus the equality multiplier is solved as a linear system and the
    candidate kept if it is feasible. The convex optimum satisfies
    stationarity on its own active set, so the best feasible candidate
    is the global optimum.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    Q = K * np.outer(y, y)

    def objective(a):
        return 0.5 * a @ Q @ a - a.sum()

    bounded = math.isfinite(c_box)
    states = (0, 1, 2) if bounded else (0, 2)  # 0 -> 0, 1 -> c_box, 2 -> free
    best_alpha = np.zeros(n)
    best_obj = objective(best_alpha)

    for pattern in itertools.product(states, repeat=n):
        pattern = np.array(pattern)
        alpha = np.zeros(n)
        alpha[pattern == 1] = c_box
        free = np.flatnonzero(pattern == 2)
        if free.size:
            # stationarity on free block with equality multiplier nu:
            # Q_ff a_f + nu y_f = 1 - Q_f,fixed a_fixed ; y_f' a_f = -y_fixed' a_fixed
            A = np.zeros((free.size + 1, free.size + 1))
            A[:free.size, :free.size] = Q[np.ix_(free, free)]
            A[:free.size, -1] = y[free]
            A[-1, :free.size] = y[free]
            rhs = np.concatenate([1.0 - Q[free] @ alpha, [-(alpha @ y)]])
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if not np.allclose(A @ sol, rhs, atol=1e-8):
                continue
            alpha[free] = sol[:free.size]
        if alpha.min() < -1e-9:
            continue
        if bounded and alpha.max() > c_box + 1e-9:
            continue
        if abs(alpha @ y) > 1e-8:
            continue
        obj = objective(alpha)
        if obj < best_obj:
            best_obj = obj
            best_alpha = alpha.copy()
    return best_alpha, best_obj


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.flatnonzero(u - css / np.arange(1, v.size + 1) > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def simplex_qp_projected_gradient(M: np.ndarray, x0: np.ndarray,
                                  iters: int = 20_000,
                                  step: float | None = None) -> np.ndarray:
    """Minimize 0.5 x'Mx over the simplex by projected gradient descent."""
    M = np.asarray(M, dtype=np.float64)
    x = project_to_simplex(np.asarray(x0, dtype=np.float64))
    if step is None:
        lmax = float(np.linalg.eigvalsh(M)[-1])
        step = 1.0 / max(lmax, 1e-12)
    for _ in range(iters):
        x_new = project_to_simplex(x - step * (M @ x))
        if np.max(np.abs(x_new - x)) < 1e-14:
            x = x_new
            break
        x = x_new
    return x
