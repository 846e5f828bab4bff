"""Streaming hybrid intrusion detection toolkit for RPL/6LoWPAN routing traffic.

Subpackages: a desk-scale DODAG simulator with labeled attack traces
(:mod:`rplids.rplsim`), passive 30-feature extraction (:mod:`rplids.features`),
streaming drift detectors (:mod:`rplids.drift`), the one-class gate
(:mod:`rplids.ocsvm`), the online-bagged KNN signature stage
(:mod:`rplids.ensemble`), the HalfSpace-Trees anomaly stage
(:mod:`rplids.hstrees`), the staged hybrid pipeline (:mod:`rplids.pipeline`),
and the experiment runner (:mod:`rplids.experiments`, :mod:`rplids.cli`).
"""

from .core import AttackKind, ConfusionCounts, Instance, Label, metrics

__version__ = "0.1.0"

__all__ = ["AttackKind", "ConfusionCounts", "Instance", "Label", "metrics",
           "__version__"]
