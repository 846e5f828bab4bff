"""The hybrid adaptive IDS: one-class gate -> KNN ensemble signature stage ->
HalfSpace-Trees unknown-anomaly stage, with drift-triggered model replacement.

Control flow per instance: the gate classifies first; inliers are Normal and
never touch the later stages.  Gate-flagged instances get an ensemble vote -
an attack vote is a KnownAttack verdict and identifies the kind.  Instances
the ensemble clears are scored by the forest against recently seen traffic;
scores below the rolling quantile threshold are UnknownAnomaly.  The ensemble
(re)trains on every gate-flagged instance once its true label arrives, which
may be ``label_delay`` steps after prediction.

All stages speak :class:`rplids.core.Label`; the +-1 encodings of the
one-class gate exist only at its boundary.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import ocsvm
from .core import FEATURE_DIM, AttackKind, Instance, Label
from .ensemble import ColdEnsembleError, OzaEnsemble
from .hstrees import HsForest, ScoreReservoir, is_anomalous


class ColdPipelineError(RuntimeError):
    """process() called before warmup."""


class InsufficientClassesError(ValueError):
    pass


class VerdictKind(enum.Enum):
    NORMAL = "Normal"
    KNOWN_ATTACK = "KnownAttack"
    UNKNOWN_ANOMALY = "UnknownAnomaly"


@dataclass(frozen=True)
class HybridVerdict:
    kind: VerdictKind
    attack: AttackKind | None = None
    votes: tuple = ()
    score: float | None = None
    gate_value: float = 0.0

    @property
    def is_attack(self) -> bool:
        return self.kind is not VerdictKind.NORMAL

    def as_label(self) -> Label:
        """Binary-compatible label: KnownAttack keeps its kind, UnknownAnomaly
        projects to an attack of unspecified kind (SH code) for counting."""
        if self.kind is VerdictKind.NORMAL:
            return Label.normal()
        if self.kind is VerdictKind.KNOWN_ATTACK:
            return Label.attack(self.attack)
        return Label.attack(AttackKind.SH)

    def __str__(self) -> str:
        if self.kind is VerdictKind.KNOWN_ATTACK:
            return f"KnownAttack({self.attack.name})"
        if self.kind is VerdictKind.UNKNOWN_ANOMALY:
            return f"UnknownAnomaly({self.score:.6g})"
        return "Normal"


@dataclass
class StageCounters:
    """Instrumentation for the stage short-circuit invariant."""

    processed: int = 0
    gate_flagged: int = 0
    ensemble_votes: int = 0
    ensemble_attack: int = 0
    forest_scored: int = 0
    unknown_flagged: int = 0


class CidsCore:
    """Ensemble + forest stages shared by the single- and multi-gate frontends.

    Owns the delayed-label queue: gate-flagged instances are queued at
    prediction time and fed to the ensemble when their label becomes
    available.
    """

    def __init__(self, ensemble: OzaEnsemble, forest: HsForest,
                 scale, label_delay: int = 0, quantile: float = 0.10,
                 reservoir_size: int = 500, min_scores: int = 50):
        if label_delay < 0:
            raise ValueError("label_delay must be non-negative")
        self.ensemble = ensemble
        self.forest = forest
        self.scale = scale  # maps raw features into the forest's [0,1] space
        self.label_delay = label_delay
        self.quantile = quantile
        self.reservoir = ScoreReservoir(reservoir_size, min_scores)
        self.counters = StageCounters()
        self.anomaly_log: list[tuple[int, float, float, bool]] = []
        self.step = 0
        self._pending = deque()

    def analyse_flagged(self, inst: Instance, gate_value: float) -> HybridVerdict:
        """Stages 2 and 3 for an instance the gate already flagged."""
        c = self.counters
        c.gate_flagged += 1
        x = inst.features
        try:
            votes = self.ensemble.votes(x)
            y_hat = self.ensemble.predict(x, votes)
        except ColdEnsembleError:
            raise ColdPipelineError("signature ensemble has no trained model")
        c.ensemble_votes += 1
        if inst.label is not None:
            self._pending.append((self.step + self.label_delay, x, inst.label, votes))
        if y_hat.is_attack:
            c.ensemble_attack += 1
            return HybridVerdict(VerdictKind.KNOWN_ATTACK, attack=y_hat.kind,
                                 votes=tuple(votes), gate_value=gate_value)
        z = self.scale(x)
        score = self.forest.score_and_update(z)
        c.forest_scored += 1
        if self.reservoir.ready:
            threshold = self.reservoir.quantile(self.quantile)
            flagged = is_anomalous(score, self.reservoir, self.quantile)
        else:
            threshold = float("nan")  # cold start scores as non-anomalous
            flagged = False
        self.anomaly_log.append((self.step, score, threshold, flagged))
        self.reservoir.add(score)
        if flagged:
            c.unknown_flagged += 1
            return HybridVerdict(VerdictKind.UNKNOWN_ANOMALY, score=score,
                                 votes=tuple(votes), gate_value=gate_value)
        return HybridVerdict(VerdictKind.NORMAL, score=score,
                             votes=tuple(votes), gate_value=gate_value)

    def begin_step(self):
        self.step += 1
        self.counters.processed += 1

    def deliver_due(self):
        """Train the ensemble on every queued instance whose label is now due."""
        while self._pending and self._pending[0][0] <= self.step:
            _, x, label, votes = self._pending.popleft()
            self.ensemble.learn(x, label, votes)

    def finish(self):
        """Deliver all labels still pending at end of stream."""
        while self._pending:
            _, x, label, votes = self._pending.popleft()
            self.ensemble.learn(x, label, votes)


class HybridIds:
    """Single-gate hybrid pipeline (gate, signature ensemble, anomaly forest)."""

    def __init__(self, gate_cfg: ocsvm.OcsvmTrainConfig | None = None,
                 gate: ocsvm.OcsvmModel | None = None,
                 n_models: int = 8, k_neighbors: int = 6, capacity: int = 1000,
                 n_trees: int = 25, tree_depth: int = 15, window_size: int = 250,
                 quantile: float = 0.10, reservoir_size: int = 500,
                 min_scores: int = 50, label_delay: int = 0, seed: int = 0,
                 weight_mode: str = "repeat", adwin_delta: float = 0.002,
                 detector_factory=None, dims: int = FEATURE_DIM):
        self.gate = gate
        self.gate_cfg = gate_cfg or ocsvm.OcsvmTrainConfig()
        self.ensemble = OzaEnsemble(
            n_models=n_models, k=k_neighbors, capacity=capacity, seed=seed,
            weight_mode=weight_mode, adwin_delta=adwin_delta,
            detector_factory=detector_factory)
        self.forest = HsForest(dims=dims, n_trees=n_trees, depth=tree_depth,
                               window_size=window_size, seed=seed + 1)
        self.core = CidsCore(self.ensemble, self.forest, self._scale,
                             label_delay=label_delay, quantile=quantile,
                             reservoir_size=reservoir_size, min_scores=min_scores)
        self.warmup_len = 0

    def _scale(self, x: np.ndarray) -> np.ndarray:
        return self.gate.scaler.transform(x)

    @property
    def is_warm(self) -> bool:
        return self.gate is not None and self.warmup_len > 0

    @property
    def counters(self) -> StageCounters:
        return self.core.counters

    @property
    def anomaly_log(self):
        return self.core.anomaly_log

    def warmup(self, normal_data: list, labeled_data: list) -> "HybridIds":
        """Fit the gate on normal traffic, pre-train the ensemble on labeled
        traffic, and prime the forest with the normals the gate flags.

        The forest needs a populated reference window before first use, so
        gate-flagged normals (the gate's false positives, which is exactly the
        traffic the forest will see in operation) fill one window and their
        scores seed the threshold reservoir.  Falls back to the lowest-margin
        normals when the gate flags none.
        """
        if not normal_data:
            raise ValueError("normal_data must be nonempty")
        labels = {str(inst.label) for inst in labeled_data if inst.label is not None}
        if len(labels) < 2:
            raise InsufficientClassesError(
                f"labeled_data must contain >= 2 classes, got {sorted(labels)}")
        X = np.stack([inst.features for inst in normal_data])
        if self.gate is None:
            self.gate = ocsvm.fit(X, self.gate_cfg)
        for inst in labeled_data:
            self.ensemble.learn(inst.features, inst.label, monitor=False)
        self._prime_forest(X)
        self.warmup_len = len(labeled_data)
        return self

    def _prime_forest(self, normal_features: np.ndarray):
        dv = self.gate.decision_values(normal_features)
        flagged = normal_features[dv < 0]
        if len(flagged) == 0:
            order = np.argsort(dv)
            flagged = normal_features[order[:self.forest.window_size]]
        fill = [flagged[i % len(flagged)] for i in range(self.forest.window_size)]
        zs = [self._scale(x) for x in fill]
        for z in zs:
            self.forest.update_mass(z)
        for z in zs:
            self.core.reservoir.add(self.forest.score(z))

    def process(self, inst: Instance) -> HybridVerdict:
        """Classify one instance through the staged pipeline (then train)."""
        if not self.is_warm:
            raise ColdPipelineError("pipeline must be warmed up before processing")
        self.core.begin_step()
        gate_value = self.gate.decision_value(inst.features)
        verdict = self._process_gated(inst, gate_value)
        self.core.deliver_due()
        return verdict

    def _process_gated(self, inst: Instance, gate_value: float) -> HybridVerdict:
        if gate_value >= 0.0:
            return HybridVerdict(VerdictKind.NORMAL, gate_value=gate_value)
        return self.core.analyse_flagged(inst, gate_value)

    def process_stream(self, instances: list) -> list:
        """process() over a list with the gate evaluated in one batch."""
        if not self.is_warm:
            raise ColdPipelineError("pipeline must be warmed up before processing")
        if not instances:
            return []
        gate_values = self.gate.decision_values(
            np.stack([i.features for i in instances]))
        verdicts = []
        for inst, gv in zip(instances, gate_values):
            self.core.begin_step()
            verdicts.append(self._process_gated(inst, float(gv)))
            self.core.deliver_due()
        return verdicts

    def finish(self):
        self.core.finish()


@dataclass
class AnidsAgent:
    """Distributed anomaly agent: local one-class model over its neighbourhood.

    Forwards only the observations its model flags as outliers; everything
    else is dropped locally, keeping the central stages' load down.
    """

    model: ocsvm.OcsvmModel
    placement: frozenset = field(default_factory=frozenset)

    def filter(self, inst: Instance) -> Instance | None:
        if self.placement and inst.sender not in self.placement:
            raise ValueError(
                f"sender {inst.sender} not observed by this agent placement")
        if self.model.decision_value(inst.features) < 0.0:
            return inst
        return None


def anids_filter(agent: AnidsAgent, inst: Instance) -> Instance | None:
    return agent.filter(inst)
