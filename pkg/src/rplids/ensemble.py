"""Incremental signature stage: online-bagged sliding-window KNN with
per-model drift detectors and "replace the loser" model replacement.

Online bagging approximates bootstrap resampling by training every base
learner on each labeled instance k times, k ~ Poisson(1).  Each model's 0/1
error stream feeds its own ADWIN; when any of them reports drift, the model
with the highest windowed error is thrown away and replaced by a fresh empty
learner.  Base learners store multi-class labels so the stage identifies the
attack kind, not just attack-vs-normal.
"""

from __future__ import annotations

import math

import numpy as np

from .core import Label
from .drift import AdwinDetector, DriftStatus


class EmptyModelError(RuntimeError):
    pass


class ColdEnsembleError(RuntimeError):
    pass


class IncrementalMinMaxScaler:
    """Min-max scaling to [0, 1] over the ranges observed so far.

    ``version`` bumps whenever a range expands so window caches can rescale
    lazily.
    """

    def __init__(self, dims: int):
        self.dims = dims
        self.lo = np.full(dims, np.inf)
        self.hi = np.full(dims, -np.inf)
        self.version = 0
        self._inv = np.zeros(dims)

    def update(self, x: np.ndarray):
        grew = False
        if np.any(x < self.lo):
            np.minimum(self.lo, x, out=self.lo)
            grew = True
        if np.any(x > self.hi):
            np.maximum(self.hi, x, out=self.hi)
            grew = True
        if grew:
            span = self.hi - self.lo
            self._inv = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
            self.version += 1

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self.version == 0:
            return np.zeros_like(x, dtype=np.float64)
        return np.clip((x - self.lo) * self._inv, 0.0, 1.0)


# label codes: -1 = Normal, 0..7 = AttackKind; vote ties prefer Normal, then
# the lowest attack code, which is exactly ascending code order.
def _vote(codes, weights) -> int:
    tally = {}
    for code, w in zip(codes, weights):
        code = int(code)
        tally[code] = tally.get(code, 0.0) + w
    best_code = -2
    best_weight = -1.0
    for code in sorted(tally):
        w = tally[code]
        if w > best_weight:
            best_weight = w
            best_code = code
    return best_code


class SlidingKnn:
    """K-nearest-neighbours over a FIFO window of (features, label) pairs.

    Stored features are cached in scaled space against a shared incremental
    scaler; the cache is rebuilt from the raw rows whenever the scaler's
    ranges have grown since the last query.
    """

    def __init__(self, k: int = 6, capacity: int = 1000,
                 scaler: IncrementalMinMaxScaler | None = None, dims: int | None = None):
        if k < 1 or capacity < 1:
            raise ValueError("k and capacity must be positive")
        self.k = k
        self.capacity = capacity
        self.scaler = scaler
        self._dims = dims
        self._raw = None
        self._scaled = None
        self._norms = None
        self._codes = None
        self._weights = None
        self._end = 0
        self.size = 0
        self._scaler_version = -1

    def attach_storage(self, scaled: np.ndarray, norms: np.ndarray):
        """Use externally owned scaled/norm buffers (for fused ensemble queries)."""
        self._scaled = scaled
        self._norms = norms

    def _ensure_buffers(self, dims: int):
        if self._raw is not None:
            return
        self._dims = dims
        cap2 = 2 * self.capacity
        self._raw = np.empty((cap2, dims))
        if self._scaled is None:
            self._scaled = np.zeros((cap2, dims), dtype=np.float32)
            self._norms = np.zeros(cap2, dtype=np.float32)
        self._codes = np.empty(cap2, dtype=np.int16)
        self._weights = np.empty(cap2)
        if self.scaler is None:
            self.scaler = IncrementalMinMaxScaler(dims)

    def _compact(self):
        n = self.size
        self._raw[:n] = self._raw[self._end - n:self._end]
        self._scaled[:n] = self._scaled[self._end - n:self._end]
        self._norms[:n] = self._norms[self._end - n:self._end]
        self._codes[:n] = self._codes[self._end - n:self._end]
        self._weights[:n] = self._weights[self._end - n:self._end]
        self._end = n

    def _refresh_scaled(self):
        if self._scaler_version == self.scaler.version:
            return
        lo, hi = self._end - self.size, self._end
        self._scaled[lo:hi] = self.scaler.transform(self._raw[lo:hi])
        self._norms[lo:hi] = np.einsum(
            "ij,ij->i", self._scaled[lo:hi], self._scaled[lo:hi])
        self._scaler_version = self.scaler.version

    def add(self, x: np.ndarray, label: Label, weight: float = 1.0, times: int = 1,
            z: np.ndarray | None = None):
        if times < 1:
            return
        self._ensure_buffers(len(x))
        if z is None:
            z = self.scaler.transform(np.asarray(x, dtype=np.float64)).astype(np.float32)
        norm = float(z @ z)
        for _ in range(times):
            if self._end == 2 * self.capacity:
                self._compact()
            i = self._end
            self._raw[i] = x
            self._scaled[i] = z
            self._norms[i] = norm
            self._codes[i] = label.code
            self._weights[i] = weight
            self._end += 1
            if self.size < self.capacity:
                self.size += 1

    def truncate(self, keep: int):
        """Keep only the ``keep`` most recent stored instances."""
        if keep < self.size:
            self.size = max(keep, 0)

    def predict(self, x: np.ndarray) -> Label:
        z = self.scaler.transform(np.asarray(x, dtype=np.float64))
        return Label.from_code(self.predict_code(z.astype(np.float32)))

    def predict_code(self, z: np.ndarray) -> int:
        """Vote among the k nearest stored rows; ``z`` is scaled float32."""
        if self.size == 0:
            raise EmptyModelError("no stored instances")
        self._refresh_scaled()
        lo, hi = self._end - self.size, self._end
        w = self._scaled[lo:hi]
        d2 = self._norms[lo:hi] - 2.0 * (w @ z)
        return self._vote_nearest(d2, lo, hi)

    def _vote_nearest(self, d2: np.ndarray, lo: int, hi: int) -> int:
        kk = min(self.k, self.size)
        if kk < self.size:
            nearest = np.argpartition(d2, kk - 1)[:kk]
            codes = self._codes[lo:hi][nearest]
        else:
            nearest = slice(None)
            codes = self._codes[lo:hi]
        first = codes[0]
        if (codes == first).all():
            return int(first)
        return _vote(codes, self._weights[lo:hi][nearest])


class KnnAdwin:
    """Sliding-window KNN whose window length is regulated by its own ADWIN.

    The detector watches the model's misclassification indicator; on drift
    the stored window is truncated to the detector's shrunken width, dropping
    the samples that predate the change.
    """

    def __init__(self, k: int = 6, capacity: int = 1000,
                 scaler: IncrementalMinMaxScaler | None = None,
                 adwin_delta: float = 0.002):
        self.base = SlidingKnn(k=k, capacity=capacity, scaler=scaler)
        self.adwin = AdwinDetector(delta=adwin_delta)

    @property
    def size(self) -> int:
        return self.base.size

    def predict(self, x: np.ndarray) -> Label:
        return self.base.predict(x)

    def predict_code(self, z: np.ndarray):
        return self.base.predict_code(z)

    def learn(self, x: np.ndarray, label: Label, error: float | None,
              weight: float = 1.0, times: int = 1, z: np.ndarray | None = None):
        """Store the instance; ``error`` is this model's pre-training 0/1 error."""
        if error is not None:
            if self.adwin.update(error) is DriftStatus.DRIFT:
                self.base.truncate(self.adwin.width)
        self.base.add(x, label, weight=weight, times=times, z=z)


class OzaEnsemble:
    """Online bagging over KNN learners with drift-triggered replacement.

    weight_mode 'repeat' trains each model k ~ Poisson(1) times per instance
    (the bootstrap approximation); 'poisson_pmf' trains once with weight
    exp(-1)/k! instead, kept for fidelity experiments with the literal update
    rule.
    """

    def __init__(self, n_models: int = 8, k: int = 6, capacity: int = 1000,
                 seed: int = 0, weight_mode: str = "repeat",
                 adwin_delta: float = 0.002, base_adwin: bool = True,
                 replace_on_drift: bool = True, dims: int | None = None,
                 detector_factory=None):
        if n_models < 1:
            raise ValueError("n_models must be >= 1")
        if weight_mode not in ("repeat", "poisson_pmf"):
            raise ValueError("weight_mode must be 'repeat' or 'poisson_pmf'")
        self.n_models = n_models
        self.k = k
        self.capacity = capacity
        self.weight_mode = weight_mode
        self.adwin_delta = adwin_delta
        self.base_adwin = base_adwin
        self.replace_on_drift = replace_on_drift
        self.rng = np.random.default_rng(seed)
        self.scaler = None
        self._detector_factory = detector_factory or \
            (lambda: AdwinDetector(delta=adwin_delta))
        self.models = [self._new_model() for _ in range(n_models)]
        self.detectors = [self._detector_factory() for _ in range(n_models)]
        self._drifted: list[int] = []
        self.step = 0
        self.replacement_log: list[tuple[int, int, float]] = []
        if dims is not None:
            self._ensure_scaler(dims)

    def _new_model(self):
        if self.base_adwin:
            return KnnAdwin(k=self.k, capacity=self.capacity, scaler=self.scaler,
                            adwin_delta=self.adwin_delta)
        return SlidingKnn(k=self.k, capacity=self.capacity, scaler=self.scaler)

    def _base(self, model) -> SlidingKnn:
        return model.base if isinstance(model, KnnAdwin) else model

    def _ensure_scaler(self, dims: int):
        if self.scaler is None:
            self.scaler = IncrementalMinMaxScaler(dims)
            for m in self.models:
                self._base(m).scaler = self.scaler

    def votes(self, x: np.ndarray) -> list[Label | None]:
        """Per-model predictions; empty models abstain with None."""
        x = np.asarray(x, dtype=np.float64)
        if self.scaler is None:
            raise ColdEnsembleError("no model has been trained yet")
        z = self.scaler.transform(x).astype(np.float32)
        out: list[Label | None] = []
        for m in self.models:
            base = self._base(m)
            if base.size == 0:
                out.append(None)
            else:
                out.append(Label.from_code(base.predict_code(z)))
        return out

    def predict(self, x: np.ndarray, votes: list | None = None) -> Label:
        """Majority vote; ties resolve to Normal, then the lowest attack code."""
        if votes is None:
            votes = self.votes(x)
        cast = [v for v in votes if v is not None]
        if not cast:
            raise ColdEnsembleError("every model is empty")
        codes = np.fromiter((v.code for v in cast), dtype=np.int16, count=len(cast))
        return Label.from_code(_vote(codes, np.ones(len(cast))))

    def learn(self, x: np.ndarray, y: Label, votes: list | None = None,
              monitor: bool = True):
        """Poisson-weighted update of every model; detectors see the error first.

        ``votes`` may carry the predictions already computed for this instance
        at test time so they are not recomputed; each model's drift detector
        is fed that model's 0/1 error on (x, y) before the model trains.
        ``monitor=False`` trains without error monitoring (warm-up passes).
        """
        x = np.asarray(x, dtype=np.float64)
        self.step += 1
        if votes is None and monitor:
            try:
                votes = self.votes(x)
            except ColdEnsembleError:
                votes = None
        if votes is None:
            votes = [None] * self.n_models
        self._ensure_scaler(len(x))
        self.scaler.update(x)
        z = self.scaler.transform(x).astype(np.float32)
        self._drifted = []
        ks = self.rng.poisson(1.0, self.n_models)
        for idx, model in enumerate(self.models):
            vote = votes[idx]
            error = None if vote is None else float(vote != y)
            if error is not None:
                if self.detectors[idx].update(error) is DriftStatus.DRIFT:
                    self._drifted.append(idx)
            kdraw = int(ks[idx])
            if self.weight_mode == "repeat":
                if kdraw > 0:
                    self._train(model, x, y, weight=1.0, times=kdraw,
                                error=error, z=z)
            else:
                w = math.exp(-1.0) / math.factorial(kdraw)
                self._train(model, x, y, weight=w, times=1, error=error, z=z)
        if self.replace_on_drift:
            self.replace_loser()

    def _train(self, model, x, y, weight, times, error, z):
        if isinstance(model, KnnAdwin):
            model.learn(x, y, error, weight=weight, times=times, z=z)
        else:
            model.add(x, y, weight=weight, times=times, z=z)

    @property
    def drifted_models(self) -> list[int]:
        """Indices whose detector reported drift on the latest learn()."""
        return list(self._drifted)

    def replace_loser(self) -> bool:
        """On drift, swap the highest-error model for a fresh empty learner."""
        if not self._drifted:
            return False
        errors = [d.error_rate for d in self.detectors]
        loser = int(np.argmax(errors))
        self.replacement_log.append((self.step, loser, float(errors[loser])))
        self.models[loser] = self._new_model()
        self.detectors[loser] = self._detector_factory()
        self._drifted = []
        return True
