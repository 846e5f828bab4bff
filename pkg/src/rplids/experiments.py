"""Experiment runner: simulate scenarios, extract detector streams, warm up
the hybrid pipeline and evaluate it prequentially.

Each attack scenario pairs with an attack-free simulation of the same size
and seed family: the clean run supplies the normal traffic that trains the
one-class gates, the scenario's first ``pretrain_frac`` of instances seed the
signature ensemble, and the remainder is the evaluation stream.  Every
command is deterministic given its spec and seeds, and summary tables are
derived from the verdict logs alone.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import features, ocsvm, rplsim
from .core import (AttackKind, ConfusionCounts, Instance, Label, MovingMean,
                   metrics, prequential_run, write_metrics_csv)
from .drift import DETECTOR_NAMES, make_detector
from .ensemble import OzaEnsemble
from .pipeline import HybridIds, VerdictKind

ALL_ATTACKS = tuple(AttackKind)


@dataclass
class ExperimentSpec:
    """Everything one experiment run needs; file-backed sim config optional."""

    sim: rplsim.SimConfig = field(default_factory=rplsim.SimConfig)
    attacks: tuple = ALL_ATTACKS
    seeds: tuple = (0,)
    out_dir: str = "out"
    nu: float = 0.2
    gamma: float = 0.9
    n_models: int = 8
    k_neighbors: int = 6
    window_size: int = 250
    n_trees: int = 25
    tree_depth: int = 15
    quantile: float = 0.10
    drift_detector: str = "adwin"
    label_delay: int = 0
    pretrain_frac: float = 0.3
    gate_train_size: int = 2000
    pretrain_cap: int = 20000

    def validate(self):
        if not self.seeds:
            raise ValueError("seed list must be nonempty")
        if self.drift_detector not in DETECTOR_NAMES:
            raise ValueError(f"unknown drift detector {self.drift_detector!r}")
        if not (0.0 < self.pretrain_frac < 1.0):
            raise ValueError("pretrain_frac must be in (0, 1)")
        self.sim.validate()
        return self


def merged_detector_stream(events, detectors, cfg: rplsim.SimConfig):
    """Instances from every detector placement, ordered by (timestamp, sender)."""
    merged = []
    for det in detectors:
        try:
            merged.extend(features.extract(
                events, det, tx_range=cfg.tx_range, tx_power=cfg.tx_power,
                path_loss_exponent=cfg.path_loss_exponent,
                rx_sensitivity=cfg.rx_sensitivity))
        except features.PlacementError:
            continue
    merged.sort(key=lambda i: (i.timestamp, i.sender))
    return merged


def simulate_scenario(cfg: rplsim.SimConfig):
    """Run one simulation and extract its merged detector stream."""
    sim = rplsim.Simulator(cfg)
    events = sim.run()
    stream = merged_detector_stream(events, sim.detectors, cfg)
    return sim, events, stream


def normal_bundle(base: rplsim.SimConfig, seed: int, gate_train_size: int):
    """Attack-free twin of a scenario: gate training data + priming normals."""
    cfg = replace(base, seed=seed, attack=None, malicious_fraction=0.0)
    _, _, stream = simulate_scenario(cfg)
    if len(stream) > gate_train_size:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(stream), size=gate_train_size, replace=False))
        train = [stream[i] for i in idx]
    else:
        train = stream
    return train


def build_pipeline(spec: ExperimentSpec, seed: int) -> HybridIds:
    factory = None
    if spec.drift_detector != "adwin":
        name = spec.drift_detector
        factory = (lambda: make_detector(name, seed=seed)) if name == "kswin" \
            else (lambda: make_detector(name))
    return HybridIds(
        gate_cfg=ocsvm.OcsvmTrainConfig(nu=spec.nu, gamma=spec.gamma, seed=seed),
        n_models=spec.n_models, k_neighbors=spec.k_neighbors,
        n_trees=spec.n_trees, tree_depth=spec.tree_depth,
        window_size=spec.window_size, quantile=spec.quantile,
        label_delay=spec.label_delay, seed=seed, detector_factory=factory)


@dataclass
class ScenarioResult:
    attack: AttackKind
    seed: int
    counts: ConfusionCounts
    per_stage: dict
    verdict_log_path: str | None
    accuracy: float
    fnr: float
    fpr: float


def _binary_outcomes(instances, verdicts):
    cc = ConfusionCounts()
    for inst, v in zip(instances, verdicts):
        truth = inst.label
        pred = Label.attack(AttackKind.SH) if v.is_attack else Label.normal()
        cc.update(truth, pred)
    return cc


def write_verdict_log(path, instances, verdicts):
    """Verdict log CSV; carries the truth label so summaries regenerate from it."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "timestamp", "sender", "verdict", "attack_kind",
                    "a_score", "gate_decision_value", "truth"])
        for step, (inst, v) in enumerate(zip(instances, verdicts)):
            w.writerow([
                step, repr(inst.timestamp), inst.sender, v.kind.value,
                v.attack.name if v.attack is not None else "",
                repr(v.score) if v.score is not None else "",
                repr(v.gate_value), str(inst.label),
            ])


def read_verdict_log(path):
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(row)
    return rows


def summary_from_verdict_log(path) -> dict:
    """Binary confusion summary recomputed from a verdict log alone."""
    cc = ConfusionCounts()
    for row in read_verdict_log(path):
        truth = Label.parse(row["truth"])
        pred_attack = row["verdict"] != "Normal"
        cc.update(truth, Label.attack(AttackKind.SH) if pred_attack
                  else Label.normal())
    return {"counts": cc, "metrics": metrics(cc)}


def run_scenario(spec: ExperimentSpec, attack: AttackKind, seed: int,
                 gate_train=None, out_dir: str | None = None) -> ScenarioResult:
    """Simulate one attack scenario and evaluate the hybrid pipeline on it."""
    cfg = replace(spec.sim, seed=seed, attack=attack)
    _, _, stream = simulate_scenario(cfg)
    if gate_train is None:
        gate_train = normal_bundle(spec.sim, seed, spec.gate_train_size)
    split = int(spec.pretrain_frac * len(stream))
    pretrain, evalset = stream[:split], stream[split:]
    if len(pretrain) > spec.pretrain_cap:
        step = len(pretrain) / spec.pretrain_cap
        pretrain = [pretrain[int(i * step)] for i in range(spec.pretrain_cap)]
    ids = build_pipeline(spec, seed)
    ids.warmup(gate_train, pretrain)
    verdicts = ids.process_stream(evalset)
    ids.finish()
    cc = _binary_outcomes(evalset, verdicts)
    m = metrics(cc)
    log_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, f"verdicts_{attack.name}_s{seed}.csv")
        write_verdict_log(log_path, evalset, verdicts)
    return ScenarioResult(
        attack=attack, seed=seed, counts=cc,
        per_stage={
            "processed": ids.counters.processed,
            "gate_flagged": ids.counters.gate_flagged,
            "ensemble_attack": ids.counters.ensemble_attack,
            "forest_scored": ids.counters.forest_scored,
            "unknown_flagged": ids.counters.unknown_flagged,
        },
        verdict_log_path=log_path,
        accuracy=m.accuracy, fnr=m.fnr, fpr=m.fpr)


def cmd_run(spec: ExperimentSpec) -> dict:
    """Per-attack evaluation grid; emits verdict logs and the summary table."""
    spec.validate()
    os.makedirs(spec.out_dir, exist_ok=True)
    bundles = {seed: normal_bundle(spec.sim, seed, spec.gate_train_size)
               for seed in spec.seeds}
    results: dict[AttackKind, list[ScenarioResult]] = {a: [] for a in spec.attacks}
    for attack in spec.attacks:
        for seed in spec.seeds:
            res = run_scenario(spec, attack, seed, gate_train=bundles[seed],
                               out_dir=spec.out_dir)
            results[attack].append(res)
    summary_path = os.path.join(spec.out_dir, "summary.csv")
    write_summary_table(results, spec, summary_path)
    return {"results": results, "summary_path": summary_path}


def write_summary_table(results: dict, spec: ExperimentSpec, path):
    """Accuracy/FNR per attack (medians over seeds), one row per scenario size."""
    attacks = list(results.keys())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["nodes", "malicious", "metric"] + [a.name for a in attacks])
        for metric_name in ("accuracy", "fnr"):
            row = [spec.sim.node_count, spec.sim.malicious_fraction, metric_name]
            for a in attacks:
                vals = sorted(getattr(r, metric_name) for r in results[a])
                median = vals[len(vals) // 2] if len(vals) % 2 else \
                    (vals[len(vals) // 2 - 1] + vals[len(vals) // 2]) / 2.0
                row.append(repr(round(median, 6)))
            w.writerow(row)


class _EnsembleLearner:
    """Instance-protocol adapter so the bare ensemble runs prequentially."""

    def __init__(self, ensemble: OzaEnsemble):
        self.ensemble = ensemble
        self._votes = None

    def predict(self, inst: Instance) -> Label:
        try:
            self._votes = self.ensemble.votes(inst.features)
            return self.ensemble.predict(inst.features, self._votes)
        except Exception:
            self._votes = None
            return Label.normal()

    def learn(self, inst: Instance, label: Label):
        self.ensemble.learn(inst.features, label, self._votes)
        self._votes = None


def cmd_compare_drift(spec: ExperimentSpec, attack: AttackKind = AttackKind.DA,
                      max_instances: int = 8000) -> dict:
    """Benchmark the fixed ensemble paired with each of the seven detectors.

    Protocol: the same seed-pinned scenario stream is replayed through an
    identically seeded ensemble once per detector choice; we report final
    prequential accuracy, drift/replacement counts and wall time per
    detector, plus the accuracy-vs-instances series.
    """
    spec.validate()
    os.makedirs(spec.out_dir, exist_ok=True)
    seed = spec.seeds[0]
    cfg = replace(spec.sim, seed=seed, attack=attack)
    _, _, stream = simulate_scenario(cfg)
    stream = stream[:max_instances]
    rows = []
    series_path = os.path.join(spec.out_dir, "drift_accuracy_series.csv")
    with open(series_path, "w", encoding="utf-8", newline="") as fh:
        sw = csv.writer(fh)
        sw.writerow(["detector", "step", "cumulative_acc", "moving_acc"])
        for name in DETECTOR_NAMES:
            factory = (lambda: make_detector(name, seed=seed)) if name == "kswin" \
                else (lambda: make_detector(name))
            ens = OzaEnsemble(n_models=spec.n_models, k=spec.k_neighbors,
                              seed=seed, detector_factory=factory)
            learner = _EnsembleLearner(ens)
            t0 = time.perf_counter()
            log = prequential_run(stream, learner)
            elapsed = time.perf_counter() - t0
            final = log.final_metrics()
            rows.append({
                "detector": name, "accuracy": final.accuracy,
                "kappa": final.kappa, "replacements": len(ens.replacement_log),
                "wall_time_s": elapsed,
            })
            for rec in log.records[::50]:
                sw.writerow([name, rec.step, repr(rec.cumulative_acc),
                             repr(rec.moving_acc)])
    table_path = os.path.join(spec.out_dir, "drift_comparison.csv")
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["detector", "accuracy", "kappa",
                                           "replacements", "wall_time_s"])
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v)
                        for k, v in r.items()})
    return {"rows": rows, "table_path": table_path, "series_path": series_path}


def cmd_unknown_attack(spec: ExperimentSpec, held_out: AttackKind,
                       out_dir: str | None = None) -> dict:
    """Leave-one-attack-out protocol: pre-train without the held-out attack,
    evaluate on a stream whose only attacks are the held-out kind."""
    spec.validate()
    seed = spec.seeds[0]
    gate_train = normal_bundle(spec.sim, seed, spec.gate_train_size)
    pretrain = []
    for attack in spec.attacks:
        if attack is held_out:
            continue
        cfg = replace(spec.sim, seed=seed, attack=attack)
        _, _, stream = simulate_scenario(cfg)
        split = int(spec.pretrain_frac * len(stream))
        pretrain.extend(stream[:split])
    pretrain.sort(key=lambda i: (i.timestamp, i.sender))
    if len(pretrain) > spec.pretrain_cap:
        step = len(pretrain) / spec.pretrain_cap
        pretrain = [pretrain[int(i * step)] for i in range(spec.pretrain_cap)]
    held_kinds = {i.label.kind for i in pretrain if i.label.is_attack}
    if held_out in held_kinds:
        raise AssertionError("held-out attack leaked into pre-training data")
    eval_cfg = replace(spec.sim, seed=seed + 1, attack=held_out)
    _, _, evalset = simulate_scenario(eval_cfg)
    ids = build_pipeline(spec, seed)
    ids.warmup(gate_train, pretrain)
    verdicts = ids.process_stream(evalset)
    ids.finish()
    cc = _binary_outcomes(evalset, verdicts)
    m = metrics(cc)
    row = {
        "held_out": held_out.name, "accuracy": m.accuracy,
        "precision": m.precision, "f1": m.f1,
        "tpr": m.recall, "fpr": m.fpr,
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"unknown_{held_out.name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["held_out", "accuracy",
                                               "precision", "f1", "tpr", "fpr"])
            w.writeheader()
            w.writerow({k: (repr(v) if isinstance(v, float) else v)
                        for k, v in row.items()})
        row["path"] = path
    return row
