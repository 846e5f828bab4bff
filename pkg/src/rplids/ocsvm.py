"""Batch-trained one-class SVM novelty detector (the anomaly-gate stage).

Model of normal traffic only: the RBF-kernel nu-one-class dual

    minimize   1/2 sum_ij alpha_i alpha_j K(x_i, x_j)
    subject to 0 <= alpha_i <= 1/(nu * n),  sum_i alpha_i = 1

is solved by pairwise coordinate (SMO-style) updates.  The decision function
is f(x) = sum_i alpha_i K(sv_i, x) - rho; +1 (inlier) when f >= 0, -1
(outlier) otherwise.  nu upper-bounds the fraction of training outliers and
lower-bounds the support-vector fraction.

Features are min-max scaled to [0, 1] with ranges fitted on the training data
(RBF on raw counters is meaningless); unseen values are clamped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


class DegenerateDataError(ValueError):
    """All training points identical: no boundary can be estimated."""


class ArityMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class KernelParams:
    """RBF kernel K(a, b) = exp(-gamma * ||a - b||^2)."""

    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be finite and positive")


@dataclass(frozen=True)
class OcsvmTrainConfig:
    nu: float = 0.2
    gamma: float = 0.9
    tolerance: float = 1e-4
    max_passes: int = 500
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.nu <= 1.0):
            raise ValueError("nu must be in (0, 1]")
        KernelParams(self.gamma)


class MinMaxScaler:
    """Per-feature [0, 1] scaling with fit-time ranges; unseen values clamp."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        span = self.hi - self.lo
        self._inv = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)

    @classmethod
    def fit(cls, data: np.ndarray) -> "MinMaxScaler":
        return cls(data.min(axis=0), data.max(axis=0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.lo) * self._inv, 0.0, 1.0)


def _rbf_matrix(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
          - 2.0 * (a @ b.T))
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass
class OcsvmModel:
    """Fitted one-class SVM: retained support vectors, dual weights and offset."""

    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    params: KernelParams
    scaler: MinMaxScaler
    converged: bool = True
    final_violation: float = 0.0
    _sv_norms: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._sv_norms is None:
            self._sv_norms = np.sum(self.support_vectors ** 2, axis=1)

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_values(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized decision function over rows of ``xs`` (raw feature space).

        Computed in chunks so large streams do not materialise the full
        kernel matrix at once.
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        if xs.shape[1] != self.n_features:
            raise ArityMismatchError(
                f"expected {self.n_features} features, got {xs.shape[1]}")
        out = np.empty(xs.shape[0])
        chunk = max(1, 4_000_000 // max(len(self.alphas), 1))
        for start in range(0, xs.shape[0], chunk):
            z = self.scaler.transform(xs[start:start + chunk])
            sq = (self._sv_norms[None, :] + np.sum(z * z, axis=1)[:, None]
                  - 2.0 * (z @ self.support_vectors.T))
            np.maximum(sq, 0.0, out=sq)
            np.exp(-self.params.gamma * sq, out=sq)
            out[start:start + chunk] = sq @ self.alphas - self.rho
        return out

    def decision_value(self, x: np.ndarray) -> float:
        return float(self.decision_values(np.asarray(x)[None, :])[0])

    def predict(self, x: np.ndarray) -> int:
        """+1 inlier / -1 outlier; the boundary f(x) = 0 counts as inlier."""
        return 1 if self.decision_value(x) >= 0.0 else -1

    def save(self, path):
        np.savez(
            path,
            format_version=np.int64(1),
            scaler_lo=self.scaler.lo,
            scaler_hi=self.scaler.hi,
            gamma=np.float64(self.params.gamma),
            rho=np.float64(self.rho),
            alphas=self.alphas,
            support_vectors=self.support_vectors,
        )

    @classmethod
    def load(cls, path) -> "OcsvmModel":
        with np.load(path) as data:
            version = int(data["format_version"])
            if version != 1:
                raise ValueError(f"unsupported model format version {version}")
            return cls(
                support_vectors=data["support_vectors"],
                alphas=data["alphas"],
                rho=float(data["rho"]),
                params=KernelParams(float(data["gamma"])),
                scaler=MinMaxScaler(data["scaler_lo"], data["scaler_hi"]),
            )


def fit(normal_data: np.ndarray, cfg: OcsvmTrainConfig = OcsvmTrainConfig()) -> OcsvmModel:
    """Fit the one-class boundary on data assumed to be all normal.

    Pairwise updates transfer dual mass from the highest-gradient coordinate
    reachable from a randomly ordered sweep to the globally lowest-gradient
    coordinate still below the box bound, until the maximum KKT violation
    drops below the tolerance or the sweep budget is exhausted.
    """
    X = np.asarray(normal_data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two training vectors")
    if not np.all(np.isfinite(X)):
        raise ValueError("training data must be finite")
    if np.all(X == X[0]):
        raise DegenerateDataError("all training points are identical")

    scaler = MinMaxScaler.fit(X)
    Z = scaler.transform(X)
    n = Z.shape[0]
    C = 1.0 / (cfg.nu * n)
    K = _rbf_matrix(Z, Z, cfg.gamma)

    alpha = np.full(n, 1.0 / n)
    G = K @ alpha
    rng = np.random.default_rng(cfg.seed)
    eps = 1e-12
    tol = cfg.tolerance
    violation = np.inf

    for _ in range(cfg.max_passes):
        order = rng.permutation(n)
        g_low = np.where(alpha < C - eps, G, np.inf)
        j = int(np.argmin(g_low))
        for i in order:
            if alpha[i] <= eps or i == j:
                continue
            gap = G[i] - G[j]
            if gap <= tol:
                continue
            denom = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if denom <= eps:
                step = min(alpha[i], C - alpha[j])
            else:
                step = min(gap / denom, alpha[i], C - alpha[j])
            if step <= 0.0:
                continue
            alpha[i] -= step
            alpha[j] += step
            G += step * (K[j] - K[i])
            if alpha[j] >= C - eps:
                g_low = np.where(alpha < C - eps, G, np.inf)
                j = int(np.argmin(g_low))
        up = np.where(alpha > eps, G, -np.inf)
        low = np.where(alpha < C - eps, G, np.inf)
        violation = float(np.max(up) - np.min(low))
        if violation < tol:
            break
    converged = violation < tol
    if not converged:
        warnings.warn(
            f"one-class SVM solver hit max_passes={cfg.max_passes} with "
            f"KKT violation {violation:.3e}", RuntimeWarning)

    margin = (alpha > eps) & (alpha < C - eps)
    if np.any(margin):
        rho = float(np.mean(G[margin]))
    else:
        rho = float(np.mean(G[alpha > eps]))

    keep = alpha > eps
    return OcsvmModel(
        support_vectors=Z[keep].copy(),
        alphas=alpha[keep].copy(),
        rho=rho,
        params=KernelParams(cfg.gamma),
        scaler=scaler,
        converged=converged,
        final_violation=violation,
    )
