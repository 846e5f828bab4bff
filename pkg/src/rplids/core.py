"""Labels, instances, confusion metrics and the interleaved test-then-train driver.

Everything downstream (drift detectors, the one-class gate, the ensemble, the
forest) consumes the types defined here.  Attack is the positive class
throughout; the binary projection of a label to {+1 normal, -1 attack} is the
single polarity convention of the project.
"""

from __future__ import annotations

import csv
import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

FEATURE_DIM = 30

#: Default window for moving-mean metric curves.
DEFAULT_MOVING_WINDOW = 200


class AttackKind(enum.IntEnum):
    """The eight routing attacks, with stable integer codes for serialization."""

    SH = 0  # sinkhole
    BH = 1  # blackhole
    GH = 2  # grayhole
    DA = 3  # DIS flooding
    IR = 4  # increase rank
    WH = 5  # wormhole
    DS = 6  # DIO suppression
    WP = 7  # worst parent


@dataclass(frozen=True)
class Label:
    """Ground-truth or predicted class: normal traffic or one attack kind."""

    kind: AttackKind | None = None

    @staticmethod
    def normal() -> "Label":
        return _NORMAL

    @staticmethod
    def attack(kind: AttackKind) -> "Label":
        return _ATTACKS[kind]

    @property
    def is_attack(self) -> bool:
        return self.kind is not None

    @property
    def binary(self) -> int:
        """+1 for normal, -1 for attack; fixed project-wide."""
        return -1 if self.kind is not None else 1

    @property
    def code(self) -> int:
        """Integer code: -1 for normal, 0-7 for attacks (AttackKind values)."""
        return -1 if self.kind is None else int(self.kind)

    @staticmethod
    def from_code(code: int) -> "Label":
        return _NORMAL if code < 0 else _ATTACKS[AttackKind(code)]

    def __str__(self) -> str:
        return "Normal" if self.kind is None else self.kind.name

    @staticmethod
    def parse(text: str) -> "Label":
        if text == "Normal":
            return _NORMAL
        return _ATTACKS[AttackKind[text]]


_NORMAL = Label(None)
_ATTACKS = {k: Label(k) for k in AttackKind}


@dataclass
class Instance:
    """One observation flowing through the detectors: 30 features plus context."""

    features: np.ndarray
    label: Label | None = None
    timestamp: float = 0.0
    sender: int = -1

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape != (FEATURE_DIM,):
            raise ValueError(
                f"feature arity must be {FEATURE_DIM}, got {self.features.shape}"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")


class EmptyCountsError(ValueError):
    """metrics() called on a confusion matrix with no observations."""


@dataclass
class ConfusionCounts:
    """Binary confusion counters; attack is the positive class."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def update(self, truth: Label, predicted: Label) -> "ConfusionCounts":
        """Increment exactly one counter from the binary projection of the labels."""
        if truth.is_attack:
            if predicted.is_attack:
                self.tp += 1
            else:
                self.fn += 1
        else:
            if predicted.is_attack:
                self.fp += 1
            else:
                self.tn += 1
        return self


# Backwards-friendly functional form used by the tests and the spec surface.
def update_confusion(cc: ConfusionCounts, truth: Label, predicted: Label) -> ConfusionCounts:
    return cc.update(truth, predicted)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    fpr: float
    fnr: float
    kappa: float
    #: names of metrics whose ratio was 0/0 and was reported as 0.
    degenerate: frozenset = frozenset()


def _ratio(num: float, den: float, name: str, degenerate: set) -> float:
    if den == 0:
        degenerate.add(name)
        return 0.0
    return num / den


def metrics(cc: ConfusionCounts) -> MetricsReport:
    """Standard binary metrics plus Cohen's kappa from the marginals.

    Any 0/0 ratio is reported as 0.0 and the metric name is recorded in the
    ``degenerate`` set, so CSV outputs stay numeric.
    """
    total = cc.total
    if total == 0:
        raise EmptyCountsError("no observations counted")
    tp, fp, tn, fn = float(cc.tp), float(cc.fp), float(cc.tn), float(cc.fn)
    degen: set = set()
    accuracy = (tp + tn) / total
    precision = _ratio(tp, tp + fp, "precision", degen)
    recall = _ratio(tp, tp + fn, "recall", degen)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", degen)
    fpr = _ratio(fp, fp + tn, "fpr", degen)
    fnr = _ratio(fn, fn + tp, "fnr", degen)
    # chance agreement from the marginals
    pc = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (total * total)
    kappa = _ratio(accuracy - pc, 1.0 - pc, "kappa", degen)
    return MetricsReport(accuracy, precision, recall, f1, fpr, fnr, kappa,
                         frozenset(degen))


class MovingMean:
    """Arithmetic mean over the last ``window_len`` values.

    The running sum is recomputed each time the buffer cycles so the reported
    mean stays within 1e-12 of the exact buffer mean regardless of stream
    length.
    """

    def __init__(self, window_len: int = DEFAULT_MOVING_WINDOW):
        if window_len <= 0:
            raise ValueError("window_len must be positive")
        self.window_len = window_len
        self._buf = deque(maxlen=window_len)
        self._sum = 0.0
        self._appends = 0

    def update(self, value: float) -> float:
        if len(self._buf) == self.window_len:
            self._sum -= self._buf[0]
        self._buf.append(value)
        self._sum += value
        self._appends += 1
        if self._appends % self.window_len == 0:
            self._sum = sum(self._buf)
        return self.mean

    @property
    def mean(self) -> float:
        if not self._buf:
            return 0.0
        return self._sum / len(self._buf)

    def __len__(self) -> int:
        return len(self._buf)


class _WindowedConfusion:
    """Confusion counts over the trailing window, for moving f1/kappa curves."""

    def __init__(self, window_len: int):
        self._buf = deque(maxlen=window_len)
        self.counts = ConfusionCounts()

    def update(self, truth: Label, predicted: Label):
        cat = (truth.is_attack, predicted.is_attack)
        if len(self._buf) == self._buf.maxlen:
            self._evict(self._buf[0])
        self._buf.append(cat)
        t, p = cat
        if t:
            if p:
                self.counts.tp += 1
            else:
                self.counts.fn += 1
        elif p:
            self.counts.fp += 1
        else:
            self.counts.tn += 1

    def _evict(self, cat):
        t, p = cat
        if t:
            if p:
                self.counts.tp -= 1
            else:
                self.counts.fn -= 1
        elif p:
            self.counts.fp -= 1
        else:
            self.counts.tn -= 1


@dataclass
class StepRecord:
    """One row of the prequential metrics log."""

    step: int
    truth: Label
    prediction: Label
    cumulative_acc: float
    cumulative_f1: float
    cumulative_kappa: float
    cumulative_fpr: float
    cumulative_fnr: float
    moving_acc: float
    moving_f1: float
    moving_kappa: float


@dataclass
class PrequentialLog:
    records: list = field(default_factory=list)
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)
    drift_events: list = field(default_factory=list)  # (step, detector_name, status)

    def final_metrics(self) -> MetricsReport:
        return metrics(self.counts)


def prequential_run(stream, model, delay: int = 0,
                    moving_window: int = DEFAULT_MOVING_WINDOW) -> PrequentialLog:
    """Interleaved test-then-train evaluation of ``model`` over ``stream``.

    Each instance is predicted first and the outcome recorded; the instance's
    ground-truth label is handed to ``model.learn`` once it becomes available,
    ``delay`` steps after prediction (delay=0 is classic test-then-train).
    The model must expose ``predict(instance) -> Label`` and
    ``learn(instance, label)``.
    """
    if delay < 0:
        raise ValueError("delay must be non-negative")
    log = PrequentialLog()
    cc = log.counts
    pending = deque()
    mov_acc = MovingMean(moving_window)
    mov_cc = _WindowedConfusion(moving_window)
    for step, inst in enumerate(stream):
        truth = inst.label
        if truth is None:
            raise ValueError(f"instance at step {step} has no label")
        pred = model.predict(inst)
        cc.update(truth, pred)
        mov_acc.update(1.0 if pred.is_attack == truth.is_attack else 0.0)
        mov_cc.update(truth, pred)
        cum = metrics(cc)
        try:
            mov = metrics(mov_cc.counts)
            mov_f1, mov_kappa = mov.f1, mov.kappa
        except EmptyCountsError:  # pragma: no cover - window always non-empty here
            mov_f1 = mov_kappa = 0.0
        log.records.append(StepRecord(
            step, truth, pred,
            cum.accuracy, cum.f1, cum.kappa, cum.fpr, cum.fnr,
            mov_acc.mean, mov_f1, mov_kappa,
        ))
        pending.append((step + delay, inst, truth))
        while pending and pending[0][0] <= step:
            _, pinst, plabel = pending.popleft()
            model.learn(pinst, plabel)
    # reveal the labels still owed at end of stream
    while pending:
        _, pinst, plabel = pending.popleft()
        model.learn(pinst, plabel)
    return log


_METRICS_HEADER = [
    "step", "truth", "prediction",
    "cumulative_acc", "cumulative_f1", "cumulative_kappa",
    "cumulative_fpr", "cumulative_fnr",
    "moving_acc", "moving_f1", "moving_kappa",
]


def write_metrics_csv(log: PrequentialLog, path):
    """Metrics log as CSV (header row mandatory, UTF-8, '.' decimals).

    Drift events, when present, are appended after the per-step rows under a
    comment marker so the file stays a single artifact per run.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_METRICS_HEADER)
        for r in log.records:
            w.writerow([
                r.step, str(r.truth), str(r.prediction),
                repr(r.cumulative_acc), repr(r.cumulative_f1),
                repr(r.cumulative_kappa), repr(r.cumulative_fpr),
                repr(r.cumulative_fnr),
                repr(r.moving_acc), repr(r.moving_f1), repr(r.moving_kappa),
            ])
        if log.drift_events:
            fh.write("# drift_events: step,detector_name,status\n")
            for step, name, status in log.drift_events:
                w.writerow([step, name, status])
