"""Streaming change detectors over a bounded real signal.

All detectors consume values in [0, 1] (typically a classifier's 0/1
misclassification indicator) and answer with a Stable / Warning / Drift
status.  A Drift answer implies the detector has already reset (or, for the
windowed detectors, shrunk) its internal state on that same update, so the
caller only has to react to the event.

The seven detectors implemented here are the ones compared in the drift
benchmark command: ADWIN, DDM, EDDM, KSWIN, PageHinkley, HDDM-A and HDDM-W.
Thresholds follow the standard reference implementations and are
constructor-overridable.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy import stats as _scipy_stats


class DriftStatus(enum.Enum):
    STABLE = "stable"
    WARNING = "warning"
    DRIFT = "drift"


class EmptyWindowError(ValueError):
    pass


def _check_value(value) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0) or value != value:
        raise ValueError(f"detector input must be in [0, 1], got {value!r}")
    return value


class DriftDetector:
    """Base interface: update(value) -> DriftStatus, reset(), error_rate."""

    name = "base"
    #: minimum observations before the detector may emit Drift
    min_samples = 0

    def update(self, value) -> DriftStatus:
        raise NotImplementedError

    def reset(self):
        raise NotImplementedError

    @property
    def error_rate(self) -> float:
        """Detector-specific running estimate of the monitored mean."""
        raise NotImplementedError


class AdwinDetector(DriftDetector):
    """Adaptive windowing over an exponential histogram of buckets.

    The window is stored as rows of buckets; row ``i`` holds buckets that each
    summarise ``2**i`` values as a (sum, variance-aux) pair, with at most
    ``max_buckets`` buckets per row before two merge into the next row.  Every
    ``clock`` insertions the window is scanned over all bucket boundaries: a
    split W0|W1 whose sub-window means differ by more than the
    variance-adaptive bound eps_cut(delta, n0, n1) is a drift, and the oldest
    bucket is dropped (repeatedly) to shrink the window.
    """

    name = "adwin"

    def __init__(self, delta: float = 0.002, max_buckets: int = 5,
                 clock: int = 32, min_window: int = 10, min_sub_window: int = 5):
        if not (0.0 < delta < 1.0):
            raise ValueError("delta must be in (0, 1)")
        self.delta = delta
        self.max_buckets = max_buckets
        self.clock = clock
        self.min_window = min_window
        self.min_sub_window = min_sub_window
        self.min_samples = min_window
        self.reset()

    def reset(self):
        # rows[i] = [sums list, variance-aux list]; bucket count = 2**i values
        self._rows = [[[], []]]
        self.total_count = 0
        self.total_sum = 0.0
        self.total_var = 0.0
        self._tick = 0
        self.n_detections = 0

    @property
    def width(self) -> int:
        return self.total_count

    def window_mean(self) -> float:
        if self.total_count == 0:
            raise EmptyWindowError("adwin window is empty")
        return self.total_sum / self.total_count

    @property
    def error_rate(self) -> float:
        return self.total_sum / self.total_count if self.total_count else 0.0

    def update(self, value) -> DriftStatus:
        value = _check_value(value)
        self._tick += 1
        self._insert(value)
        if self._tick % self.clock == 0 and self.total_count > self.min_window:
            if self._reduce_window():
                self.n_detections += 1
                return DriftStatus.DRIFT
        return DriftStatus.STABLE

    # -- exponential histogram maintenance --------------------------------

    def _insert(self, value: float):
        row0 = self._rows[0]
        row0[0].append(value)
        row0[1].append(0.0)
        if self.total_count > 0:
            mean = self.total_sum / self.total_count
            self.total_var += self.total_count * (value - mean) ** 2 / (self.total_count + 1)
        self.total_count += 1
        self.total_sum += value
        self._compress()

    def _compress(self):
        level = 0
        while level < len(self._rows):
            sums, variances = self._rows[level]
            if len(sums) <= self.max_buckets:
                break
            if level + 1 == len(self._rows):
                self._rows.append([[], []])
            n = float(1 << level)
            s0, s1 = sums[0], sums[1]
            # variance added when merging two equal-size buckets
            merged_var = variances[0] + variances[1] + n * (s0 / n - s1 / n) ** 2 / 2.0
            nxt = self._rows[level + 1]
            nxt[0].append(s0 + s1)
            nxt[1].append(merged_var)
            del sums[:2]
            del variances[:2]
            level += 1

    def _delete_oldest(self) -> int:
        level = len(self._rows) - 1
        while not self._rows[level][0]:
            level -= 1
        sums, variances = self._rows[level]
        n = 1 << level
        bucket_sum = sums.pop(0)
        bucket_var = variances.pop(0)
        self.total_count -= n
        self.total_sum -= bucket_sum
        if self.total_count > 0:
            mean_rest = self.total_sum / self.total_count
            self.total_var -= bucket_var + n * self.total_count * \
                (bucket_sum / n - mean_rest) ** 2 / (n + self.total_count)
            if self.total_var < 0.0:
                self.total_var = 0.0
        else:
            self.total_var = 0.0
        if not sums and level == len(self._rows) - 1 and level > 0:
            self._rows.pop()
        return n

    def _reduce_window(self) -> bool:
        changed = False
        log = math.log
        reduced = True
        while reduced:
            reduced = False
            if self.total_count <= self.min_window:
                break
            inv_delta_term = log(2.0 * log(self.total_count) / self.delta)
            var_w = self.total_var / self.total_count
            n0 = 0
            sum0 = 0.0
            n1 = self.total_count
            sum1 = self.total_sum
            done = False
            # oldest buckets first: highest row, front of the list
            for level in range(len(self._rows) - 1, -1, -1):
                sums = self._rows[level][0]
                n = 1 << level
                for idx in range(len(sums)):
                    if level == 0 and idx == len(sums) - 1:
                        done = True
                        break
                    n0 += n
                    n1 -= n
                    sum0 += sums[idx]
                    sum1 -= sums[idx]
                    if n0 <= self.min_sub_window or n1 <= self.min_sub_window:
                        continue
                    m_inv = 1.0 / (n0 - self.min_sub_window + 1) + \
                        1.0 / (n1 - self.min_sub_window + 1)
                    eps_cut = math.sqrt(2.0 * m_inv * var_w * inv_delta_term) + \
                        2.0 / 3.0 * m_inv * inv_delta_term
                    if abs(sum0 / n0 - sum1 / n1) > eps_cut:
                        self._delete_oldest()
                        changed = True
                        reduced = True
                        done = True
                        break
                if done:
                    break
        return changed


class DdmDetector(DriftDetector):
    """Drift Detection Method: monitors error rate p and its std s.

    Warning when p + s exceeds min(p + s) by 2 sigma, drift by 3 sigma.
    """

    name = "ddm"

    def __init__(self, min_samples: int = 30, warn_coeff: float = 2.0,
                 drift_coeff: float = 3.0):
        self.min_samples = min_samples
        self.warn_coeff = warn_coeff
        self.drift_coeff = drift_coeff
        self.reset()

    def reset(self):
        self.n = 0
        self.p = 1.0
        self.s = 0.0
        self.p_min = math.inf
        self.s_min = math.inf

    @property
    def error_rate(self) -> float:
        return self.p if self.n else 0.0

    def update(self, value) -> DriftStatus:
        value = _check_value(value)
        self.n += 1
        if self.n == 1:
            self.p = value
        else:
            self.p += (value - self.p) / self.n
        self.s = math.sqrt(max(self.p * (1.0 - self.p), 0.0) / self.n)
        if self.n < self.min_samples:
            return DriftStatus.STABLE
        if self.p + self.s < self.p_min + self.s_min:
            self.p_min = self.p
            self.s_min = self.s
        level = self.p + self.s
        if level > self.p_min + self.drift_coeff * self.s_min:
            self.reset()
            return DriftStatus.DRIFT
        if level > self.p_min + self.warn_coeff * self.s_min:
            return DriftStatus.WARNING
        return DriftStatus.STABLE


class EddmDetector(DriftDetector):
    """Early DDM: monitors the distance (in samples) between classification errors."""

    name = "eddm"

    def __init__(self, min_samples: int = 30, min_errors: int = 30,
                 warn_threshold: float = 0.95, drift_threshold: float = 0.90):
        if not (drift_threshold < warn_threshold < 1.0):
            raise ValueError("thresholds must satisfy drift < warn < 1")
        self.min_samples = min_samples
        self.min_errors = min_errors
        self.warn_threshold = warn_threshold
        self.drift_threshold = drift_threshold
        self.reset()

    def reset(self):
        self.n = 0
        self.n_errors = 0
        self.last_error_at = 0
        self.dist_mean = 0.0
        self._dist_m2 = 0.0
        self.m2s_max = 0.0

    @property
    def error_rate(self) -> float:
        # larger mean distance between errors = lower error rate
        return 1.0 / (1.0 + self.dist_mean)

    def update(self, value) -> DriftStatus:
        value = _check_value(value)
        self.n += 1
        if value <= 0.5:
            return DriftStatus.STABLE
        self.n_errors += 1
        distance = self.n - self.last_error_at
        self.last_error_at = self.n
        old_mean = self.dist_mean
        self.dist_mean += (distance - self.dist_mean) / self.n_errors
        self._dist_m2 += (distance - old_mean) * (distance - self.dist_mean)
        std = math.sqrt(self._dist_m2 / self.n_errors)
        m2s = self.dist_mean + 2.0 * std
        if self.n < self.min_samples:
            return DriftStatus.STABLE
        if m2s > self.m2s_max:
            self.m2s_max = m2s
            return DriftStatus.STABLE
        if self.n_errors < self.min_errors or self.m2s_max == 0.0:
            return DriftStatus.STABLE
        ratio = m2s / self.m2s_max
        if ratio < self.drift_threshold:
            self.reset()
            return DriftStatus.DRIFT
        if ratio < self.warn_threshold:
            return DriftStatus.WARNING
        return DriftStatus.STABLE


class PageHinkleyDetector(DriftDetector):
    """Page-Hinkley test on the running mean: drift when m_t - min(m_t) > lambda."""

    name = "page_hinkley"

    def __init__(self, threshold: float = 50.0, tolerance: float = 0.005,
                 min_samples: int = 30):
        self.threshold = threshold
        self.tolerance = tolerance
        self.min_samples = min_samples
        self.reset()

    def reset(self):
        self.n = 0
        self.x_mean = 0.0
        self.m_t = 0.0
        self.m_min = 0.0

    @property
    def error_rate(self) -> float:
        return self.x_mean if self.n else 0.0

    def update(self, value) -> DriftStatus:
        value = _check_value(value)
        self.n += 1
        self.x_mean += (value - self.x_mean) / self.n
        self.m_t += value - self.x_mean - self.tolerance
        if self.m_t < self.m_min:
            self.m_min = self.m_t
        if self.n >= self.min_samples and self.m_t - self.m_min > self.threshold:
            self.reset()
            return DriftStatus.DRIFT
        return DriftStatus.STABLE


class KswinDetector(DriftDetector):
    """Kolmogorov-Smirnov windowing: two-sample KS test between the most
    recent stat_size values and a random sample of the older window part.

    Unlike the error-rate detectors, KSWIN can also monitor raw feature
    values; anything in [0, 1] is accepted.  Sampling is driven by a seeded
    generator so the detector stays deterministic.
    """

    name = "kswin"

    def __init__(self, alpha: float = 0.005, window_size: int = 100,
                 stat_size: int = 30, seed: int = 0):
        if not (0.0 < alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")
        if window_size <= stat_size:
            raise ValueError("window_size must exceed stat_size")
        self.alpha = alpha
        self.window_size = window_size
        self.stat_size = stat_size
        self.seed = seed
        self.min_samples = window_size
        self.reset()

    def reset(self):
        self._window: list[float] = []
        self._rng = np.random.default_rng(self.seed)
        self.n = 0

    @property
    def error_rate(self) -> float:
        return sum(self._window) / len(self._window) if self._window else 0.0

    def update(self, value) -> DriftStatus:
        value = _check_value(value)
        self.n += 1
        status = DriftStatus.STABLE
        if len(self._window) >= self.window_size:
            self._window.pop(0)
            older = self._window[:-self.stat_size]
            recent = self._window[-self.stat_size:]
            sample = self._rng.choice(older, self.stat_size)
            st, p_value = _scipy_stats.ks_2samp(sample, recent, method="exact")
            if p_value <= self.alpha and st > 0.1:
                self._window = self._window[-self.stat_size:]
                status = DriftStatus.DRIFT
        self._window.append(value)
        return status


class _EwmaSample:
    __slots__ = ("estimator", "bound_sum")

    def __init__(self):
        self.estimator = -1.0
        self.bound_sum = 0.0


class HddmDetector(DriftDetector):
    """Hoeffding-bound drift detection (A: plain averages, W: EWMA averages).

    Mode A compares the running mean against the lowest (resp. highest)
    confidently-estimated mean seen so far using Hoeffding bounds; mode W does
    the same with exponentially weighted moving averages (forgetting
    ``lambda_w``) under the corresponding McDiarmid bound.
    """

    def __init__(self, mode: str = "A", drift_confidence: float = 0.001,
                 warning_confidence: float = 0.005, lambda_w: float = 0.05,
                 two_sided: bool = True):
        if mode not in ("A", "W"):
            raise ValueError("mode must be 'A' or 'W'")
        self.mode = mode
        self.name = f"hddm_{mode.lower()}"
        self.drift_confidence = drift_confidence
        self.warning_confidence = warning_confidence
        self.lambda_w = lambda_w
        self.two_sided = two_sided
        self.reset()

    def reset(self):
        if self.mode == "A":
            self.total_n = 0
            self.total_c = 0.0
            self.n_min = 0
            self.c_min = 0.0
            self.n_max = 0
            self.c_max = 0.0
        else:
            self.total = _EwmaSample()
            self.sample1_incr = _EwmaSample()
            self.sample2_incr = _EwmaSample()
            self.sample1_decr = _EwmaSample()
            self.sample2_decr = _EwmaSample()

    @property
    def error_rate(self) -> float:
        if self.mode == "A":
            return self.total_c / self.total_n if self.total_n else 0.0
        return self.total.estimator if self.total.estimator >= 0 else 0.0

    def update(self, value) -> DriftStatus:
        value = _check_value(value)
        if self.mode == "A":
            return self._update_a(value)
        return self._update_w(value)

    # -- mode A ------------------------------------------------------------

    def _update_a(self, value: float) -> DriftStatus:
        self.total_n += 1
        self.total_c += value
        if self.n_min == 0:
            self.n_min, self.c_min = self.total_n, self.total_c
        if self.n_max == 0:
            self.n_max, self.c_max = self.total_n, self.total_c
        log_d = math.log(1.0 / self.drift_confidence)
        cota_total = math.sqrt(log_d / (2.0 * self.total_n))
        cota_min = math.sqrt(log_d / (2.0 * self.n_min))
        if self.c_min / self.n_min + cota_min >= self.total_c / self.total_n + cota_total:
            self.n_min, self.c_min = self.total_n, self.total_c
        cota_max = math.sqrt(log_d / (2.0 * self.n_max))
        if self.c_max / self.n_max - cota_max <= self.total_c / self.total_n - cota_total:
            self.n_max, self.c_max = self.total_n, self.total_c
        if self._mean_incr_a(self.drift_confidence):
            self.reset()
            return DriftStatus.DRIFT
        if self.two_sided and self._mean_decr_a(self.drift_confidence):
            self.reset()
            return DriftStatus.DRIFT
        if self._mean_incr_a(self.warning_confidence):
            return DriftStatus.WARNING
        return DriftStatus.STABLE

    def _mean_incr_a(self, confidence: float) -> bool:
        if self.n_min == self.total_n:
            return False
        m = (self.total_n - self.n_min) / self.n_min * (1.0 / self.total_n)
        bound = math.sqrt(m / 2.0 * math.log(2.0 / confidence))
        return self.total_c / self.total_n - self.c_min / self.n_min >= bound

    def _mean_decr_a(self, confidence: float) -> bool:
        if self.n_max == self.total_n:
            return False
        m = (self.total_n - self.n_max) / self.n_max * (1.0 / self.total_n)
        bound = math.sqrt(m / 2.0 * math.log(2.0 / confidence))
        return self.c_max / self.n_max - self.total_c / self.total_n >= bound

    # -- mode W ------------------------------------------------------------

    def _ewma_push(self, sample: _EwmaSample, value: float):
        lam = self.lambda_w
        decay = 1.0 - lam
        if sample.estimator < 0:
            sample.estimator = value
            sample.bound_sum = 1.0
        else:
            sample.estimator = lam * value + decay * sample.estimator
            sample.bound_sum = lam * lam + decay * decay * sample.bound_sum

    def _update_w(self, value: float) -> DriftStatus:
        self._ewma_push(self.total, value)
        self._update_side(value, incr=True)
        self._update_side(value, incr=False)
        if self._detect_increment(self.sample1_incr, self.sample2_incr,
                                  self.drift_confidence):
            self.reset()
            return DriftStatus.DRIFT
        if self.two_sided and self._detect_increment(self.sample2_decr, self.sample1_decr,
                                                     self.drift_confidence):
            self.reset()
            return DriftStatus.DRIFT
        if self._detect_increment(self.sample1_incr, self.sample2_incr,
                                  self.warning_confidence):
            return DriftStatus.WARNING
        return DriftStatus.STABLE

    def _update_side(self, value: float, incr: bool):
        sample1 = self.sample1_incr if incr else self.sample1_decr
        sample2 = self.sample2_incr if incr else self.sample2_decr
        epsilon = math.sqrt(self.total.bound_sum *
                            math.log(1.0 / self.drift_confidence) / 2.0)
        if incr:
            snapshot = self.total.estimator + epsilon < sample1.estimator
        else:
            snapshot = self.total.estimator - epsilon > sample1.estimator
        if sample1.estimator < 0 or snapshot:
            sample1.estimator = self.total.estimator
            sample1.bound_sum = self.total.bound_sum
            sample2.estimator = -1.0
            sample2.bound_sum = 0.0
        else:
            self._ewma_push(sample2, value)

    @staticmethod
    def _detect_increment(low: _EwmaSample, high: _EwmaSample,
                          confidence: float) -> bool:
        if low.estimator < 0 or high.estimator < 0:
            return False
        bound = math.sqrt((low.bound_sum + high.bound_sum) *
                          math.log(1.0 / confidence) / 2.0)
        return high.estimator - low.estimator > bound


DETECTOR_NAMES = ("adwin", "ddm", "eddm", "kswin", "page_hinkley",
                  "hddm_a", "hddm_w")


def make_detector(name: str, **kwargs) -> DriftDetector:
    """Build a drift detector by name; kwargs override its defaults."""
    name = name.lower()
    if name == "adwin":
        return AdwinDetector(**kwargs)
    if name == "ddm":
        return DdmDetector(**kwargs)
    if name == "eddm":
        return EddmDetector(**kwargs)
    if name == "kswin":
        return KswinDetector(**kwargs)
    if name in ("page_hinkley", "ph", "pagehinkley"):
        return PageHinkleyDetector(**kwargs)
    if name == "hddm_a":
        return HddmDetector(mode="A", **kwargs)
    if name == "hddm_w":
        return HddmDetector(mode="W", **kwargs)
    raise ValueError(f"unknown drift detector {name!r}")
