"""RBF-kernel SVMs trained by sequential minimal optimization, and their OvR combination."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class SVMError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise SVMError(f"rbf_kernel length mismatch: {x.shape} vs {y.shape}")
    if gamma < 0:
        raise SVMError("gamma must be nonnegative")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_matrix(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    d2 = (X * X).sum(axis=1)[:, None] + (Y * Y).sum(axis=1)[None, :] - 2.0 * X @ Y.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


@dataclass
class BinarySVM:
    support_vectors: np.ndarray   # [n_sv, d]
    dual_coef: np.ndarray         # alpha_i * y_i, [n_sv]
    bias: float
    gamma: float
    C: float
    support: np.ndarray           # row indices into the training matrix
    kkt_violations: int = 0

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if len(self.dual_coef) == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_matrix(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias


def kkt_violations(alpha: np.ndarray, y: np.ndarray, f: np.ndarray, C: float, tol: float) -> int:
    yf = y * f
    low = (alpha <= 0) & (yf < 1 - tol)
    free = (alpha > 0) & (alpha < C) & (np.abs(yf - 1) > tol)
    high = (alpha >= C) & (yf > 1 + tol)
    return int(np.count_nonzero(low | free | high))


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def _snap(a: float, C: float) -> float:
    # rounding can leave a multiplier a hair inside the box; pin it to the bound
    tiny = 1e-12 * C
    if a < tiny:
        return 0.0
    if a > C - tiny:
        return C
    return a


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3, max_passes: int = 1000,
        rng: np.random.Generator | None = None, eps: float = 1e-12) -> tuple[np.ndarray, float, int]:
    """Solve the SVM dual on a precomputed kernel matrix.

    The outer loop visits KKT violators in order (all rows, then free rows
    until they settle); the partner is the free row with the largest
    ``|E_i - E_j|``, falling back to scans of free rows and then all rows.
    Returns ``(alpha, bias, passes)``.
    """
    rng = rng or np.random.default_rng(0)
    n = len(y)
    alpha = np.zeros(n)
    b = 0.0
    E = -y.astype(np.float64)   # f(x) - y with f = 0
    diag = np.diag(K).copy()

    def take_step(i: int, j: int) -> bool:
        nonlocal b
        if i == j:
            return False
        ai, aj, yi, yj = alpha[i], alpha[j], y[i], y[j]
        if yi != yj:
            lo, hi = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            lo, hi = max(0.0, ai + aj - C), min(C, ai + aj)
        if hi - lo < eps:
            return False
        kij = K[i, j]
        eta = diag[i] + diag[j] - 2.0 * kij
        if eta > eps:
            aj_new = min(max(aj + yj * (E[i] - E[j]) / eta, lo), hi)
        else:
            # flat direction: compare the objective at both ends of the segment
            s = yi * yj
            fi = yi * (E[i] - b) - ai * diag[i] - s * aj * kij
            fj = yj * (E[j] - b) - s * ai * kij - aj * diag[j]
            li, hi_i = ai + s * (aj - lo), ai + s * (aj - hi)
            obj_lo = li * fi + lo * fj + 0.5 * li * li * diag[i] + 0.5 * lo * lo * diag[j] + s * lo * li * kij
            obj_hi = hi_i * fi + hi * fj + 0.5 * hi_i * hi_i * diag[i] + 0.5 * hi * hi * diag[j] + s * hi * hi_i * kij
            if obj_lo < obj_hi - eps:
                aj_new = lo
            elif obj_lo > obj_hi + eps:
                aj_new = hi
            else:
                return False
        if abs(aj_new - aj) < eps * (aj_new + aj + eps):
            return False
        ai_new = ai + yi * yj * (aj - aj_new)
        ai_new, aj_new = _snap(ai_new, C), _snap(aj_new, C)
        di, dj = yi * (ai_new - ai), yj * (aj_new - aj)
        b1 = b - E[i] - di * diag[i] - dj * kij
        b2 = b - E[j] - di * kij - dj * diag[j]
        if 0.0 < ai_new < C:
            b_new = b1
        elif 0.0 < aj_new < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        E[:] += di * K[i] + dj * K[j] + (b_new - b)
        alpha[i], alpha[j] = ai_new, aj_new
        b = b_new
        return True

    def examine(j: int) -> int:
        r = E[j] * y[j]
        if not ((r < -tol and alpha[j] < C) or (r > tol and alpha[j] > 0)):
            return 0
        free = np.flatnonzero((alpha > 0) & (alpha < C))
        if len(free) > 1:
            i = int(free[np.argmax(np.abs(E[free] - E[j]))])
            if take_step(i, j):
                return 1
        if len(free):
            start = int(rng.integers(len(free)))
            for i in np.roll(free, -start):
                if take_step(int(i), j):
                    return 1
        start = int(rng.integers(n))
        for i in np.roll(np.arange(n), -start):
            if take_step(int(i), j):
                return 1
        return 0

    examine_all = True
    passes = 0
    changed = 0
    while (changed > 0 or examine_all) and passes < max_passes:
        changed = 0
        rows = range(n) if examine_all else np.flatnonzero((alpha > 0) & (alpha < C))
        for j in rows:
            changed += examine(int(j))
        if examine_all:
            examine_all = False
        elif changed == 0:
            examine_all = True
        passes += 1
    return alpha, b, passes


def train_binary_svm(X: np.ndarray, y: np.ndarray, C: float = 1.0, gamma: float = 1.0, tol: float = 1e-3,
                     max_passes: int = 1000, rng: np.random.Generator | None = None,
                     K: np.ndarray | None = None) -> BinarySVM:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise SVMError("binary SVM needs both labels -1 and +1 present")
    if C <= 0:
        raise SVMError("C must be positive")
    if K is None:
        K = rbf_matrix(X, X, gamma)
    alpha, b, passes = smo(K, y, C, tol, max_passes, rng)
    f = (alpha * y) @ K + b
    bad = kkt_violations(alpha, y, f, C, tol)
    if bad:
        warnings.warn(f"SMO stopped after {passes} passes with {bad} KKT violations (tol {tol})",
                      ConvergenceWarning, stacklevel=2)
    sv = np.flatnonzero(alpha > 0)
    return BinarySVM(X[sv].copy(), (alpha * y)[sv], float(b), float(gamma), float(C), sv, bad)


@dataclass
class OvrSvmModel:
    """One RBF machine per class; a class with no training rows never wins."""

    machines: list[BinarySVM | None]
    gamma: float
    C: float

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        cols = [m.decision(X) if m is not None else np.full(X.shape[0], -np.inf) for m in self.machines]
        return np.stack(cols, axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class code on ties
        return np.argmax(self.decision_function(X), axis=1)


def train_ovr(X: np.ndarray, y: np.ndarray, n_classes: int, C: float = 1.0, gamma: float | None = None,
              tol: float = 1e-3, max_passes: int = 1000, seed: int = 0) -> OvrSvmModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if gamma is None:
        gamma = default_gamma(X)
    K = rbf_matrix(X, X, gamma)
    machines = []
    for c in range(n_classes):
        yc = np.where(y == c, 1.0, -1.0)
        if np.all(yc < 0) or np.all(yc > 0):
            log.warning("class %d has %s training rows; its machine is skipped", c,
                        "no" if np.all(yc < 0) else "only")
            machines.append(None)
            continue
        machines.append(train_binary_svm(X, yc, C, gamma, tol, max_passes, np.random.default_rng([seed, c]), K))
    return OvrSvmModel(machines, float(gamma), float(C))


def default_gamma(X: np.ndarray) -> float:
    """``1 / (d * var(X))``, the usual scale heuristic."""
    var = float(np.var(X))
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def ovr_predict(model: OvrSvmModel | None, x: np.ndarray) -> int:
    if model is None or not model.machines:
        raise SVMError("model is not fitted")
    return int(model.predict(np.atleast_2d(x))[0])
