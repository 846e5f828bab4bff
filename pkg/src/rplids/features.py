"""Turns packet traces into 30-feature instances from one detector's viewpoint.

Extraction is strictly passive: a detector placement only sees packets whose
transmitter (or unicast receiver) is within radio range, and every feature is
computed from overheard packet fields - sliding-horizon counters per sender
and receiver, rank/version alteration tracking, loss ratios, a DAO-derived
partial parent map, and link-quality estimates from stamped positions.  Node
identities never enter the feature vector, so consistently renumbering nodes
leaves every value unchanged.
"""

from __future__ import annotations

import csv
import math
from collections import deque

from .core import FEATURE_DIM, Instance, Label
from .rplsim import PacketEvent, rssi_dbm

FEATURE_NAMES = (
    # basic
    "pkt_type", "pkt_status", "src_rank", "adv_vn",
    # history
    "snd_dis_count", "snd_dio_count", "snd_dao_count", "snd_daoack_count",
    "snd_cpkt_count", "rcvd_dis_count", "rcvd_dio_count", "rcvd_dao_count",
    "rcvd_daoack_count", "rcvd_cpkt_count", "avg_intpkt_time",
    "rnk_alt_count", "vn_alt_count", "trans_app_count", "pkt_e2e_delay",
    # connection
    "cpkt_loss", "pkt_loss", "avg_hopcount", "neighbour_count", "child_count",
    "same_parent", "rx_sen", "tx_pwr", "rssi", "cmp_snd_prt_lq", "prt_bst_lq",
)

assert len(FEATURE_NAMES) == FEATURE_DIM

PKT_TYPE_CODE = {"DIO": 0, "DIS": 1, "DAO": 2, "DAOACK": 3, "APP": 4}
PKT_STATUS_CODE = {"Successful": 0, "Collided": 1, "Dropped": 2}
CONTROL_KINDS = frozenset(("DIO", "DIS", "DAO", "DAOACK"))


class UnorderedTraceError(ValueError):
    pass


class PlacementError(ValueError):
    pass


class _NodeHistory:
    """Per-node sliding-horizon counters, pruned lazily on access."""

    __slots__ = ("sent", "recv", "sent_times", "app_sent", "ctrl_ok",
                 "app_ok", "rank_alts", "vn_alts", "last_rank", "last_vn")

    def __init__(self):
        self.sent = {k: deque() for k in PKT_TYPE_CODE}
        self.recv = {k: deque() for k in PKT_TYPE_CODE}
        self.sent_times = deque()
        self.app_sent = deque()
        self.ctrl_ok = deque()   # (time, 1 ok / 0 failed)
        self.app_ok = deque()
        self.rank_alts = deque()
        self.vn_alts = deque()
        self.last_rank = None
        self.last_vn = None


def _prune(dq: deque, horizon_start: float):
    while dq and dq[0] < horizon_start:
        dq.popleft()


def _prune_pairs(dq: deque, horizon_start: float):
    while dq and dq[0][0] < horizon_start:
        dq.popleft()


class FeatureExtractor:
    """Streaming fold over the packets one placement overhears."""

    def __init__(self, placement: int, detector_pos: tuple[float, float],
                 tx_range: float = 50.0, horizon: float = 60.0,
                 tx_power: float = 0.0, path_loss_exponent: float = 2.0,
                 rx_sensitivity: float = -85.0):
        self.placement = placement
        self.det_x, self.det_y = detector_pos
        self.tx_range = tx_range
        self.horizon = horizon
        self.tx_power = tx_power
        self.path_loss_exponent = path_loss_exponent
        self.rx_sensitivity = rx_sensitivity
        self._hist: dict[int, _NodeHistory] = {}
        self._pos: dict[int, tuple[float, float]] = {}
        self._parent: dict[int, int] = {}
        self._children: dict[int, dict[int, float]] = {}
        self._avg_hopcount = 0.0
        self._last_time = -math.inf

    def overhears(self, e: PacketEvent) -> bool:
        if math.hypot(e.src_x - self.det_x, e.src_y - self.det_y) <= self.tx_range:
            return True
        return (e.dst_x is not None and
                math.hypot(e.dst_x - self.det_x, e.dst_y - self.det_y) <= self.tx_range)

    def _node(self, nid: int) -> _NodeHistory:
        h = self._hist.get(nid)
        if h is None:
            h = self._hist[nid] = _NodeHistory()
        return h

    def _recompute_hopcount(self):
        total, counted = 0, 0
        for nid in self._parent:
            hops, cur, seen = 0, nid, set()
            while cur in self._parent and cur not in seen and hops < 64:
                seen.add(cur)
                cur = self._parent[cur]
                hops += 1
            if hops:
                total += hops
                counted += 1
        self._avg_hopcount = total / counted if counted else 0.0

    def push(self, e: PacketEvent) -> Instance:
        """Fold one overheard packet and emit its labeled instance."""
        if e.time < self._last_time:
            raise UnorderedTraceError(
                f"trace not time-ordered at t={e.time} after {self._last_time}")
        self._last_time = e.time
        t0 = e.time - self.horizon
        sender = e.src
        hist = self._node(sender)
        self._pos[sender] = (e.src_x, e.src_y)

        # -- update sender history with this packet -------------------------
        _prune(hist.sent[e.kind], t0)
        hist.sent[e.kind].append(e.time)
        _prune(hist.sent_times, t0)
        hist.sent_times.append(e.time)
        ok = 1.0 if e.status == "Successful" else 0.0
        if e.kind == "APP":
            _prune_pairs(hist.app_ok, t0)
            hist.app_ok.append((e.time, ok))
            _prune(hist.app_sent, t0)
            hist.app_sent.append(e.time)
        else:
            _prune_pairs(hist.ctrl_ok, t0)
            hist.ctrl_ok.append((e.time, ok))
        if hist.last_rank is not None and e.src_rank != hist.last_rank:
            _prune(hist.rank_alts, t0)
            hist.rank_alts.append(e.time)
        hist.last_rank = e.src_rank
        if hist.last_vn is not None and e.adv_version != hist.last_vn:
            _prune(hist.vn_alts, t0)
            hist.vn_alts.append(e.time)
        hist.last_vn = e.adv_version

        # -- receiver-side history (unicast target, else the detector) ------
        receiver = e.dst if e.dst >= 0 else self.placement
        rhist = self._node(receiver)
        _prune(rhist.recv[e.kind], t0)
        rhist.recv[e.kind].append(e.time)

        # -- routing state from DAO traffic ----------------------------------
        if e.kind == "DAO" and e.dst >= 0:
            old = self._parent.get(sender)
            self._parent[sender] = e.dst
            self._children.setdefault(e.dst, {})[sender] = e.time
            if old != e.dst:
                self._recompute_hopcount()

        # -- assemble the vector ---------------------------------------------
        snd_dis = len(hist.sent["DIS"])
        snd_dio = len(hist.sent["DIO"])
        snd_dao = len(hist.sent["DAO"])
        snd_daoack = len(hist.sent["DAOACK"])
        snd_cpkt = snd_dis + snd_dio + snd_dao + snd_daoack
        rcvd_dis = len(rhist.recv["DIS"])
        rcvd_dio = len(rhist.recv["DIO"])
        rcvd_dao = len(rhist.recv["DAO"])
        rcvd_daoack = len(rhist.recv["DAOACK"])
        rcvd_cpkt = rcvd_dis + rcvd_dio + rcvd_dao + rcvd_daoack

        n_sent = len(hist.sent_times)
        if n_sent >= 2:
            avg_intpkt = (hist.sent_times[-1] - hist.sent_times[0]) / (n_sent - 1)
        else:
            avg_intpkt = 0.0
        _prune(hist.rank_alts, t0)
        _prune(hist.vn_alts, t0)

        _prune_pairs(hist.ctrl_ok, t0)
        if hist.ctrl_ok:
            cpkt_loss = 1.0 - sum(x[1] for x in hist.ctrl_ok) / len(hist.ctrl_ok)
        else:
            cpkt_loss = 0.0
        _prune_pairs(hist.app_ok, t0)
        if hist.app_ok:
            pkt_loss = 1.0 - sum(x[1] for x in hist.app_ok) / len(hist.app_ok)
        else:
            pkt_loss = 0.0

        # link-quality geometry around the sender, from last-known positions
        sx, sy = e.src_x, e.src_y
        neighbour_count = 0
        parent = self._parent.get(sender)
        parent_dist = None
        min_dist = math.inf
        for nid, (nx, ny) in self._pos.items():
            if nid == sender:
                continue
            d = math.hypot(nx - sx, ny - sy)
            if d <= self.tx_range:
                neighbour_count += 1
                if d < min_dist:
                    min_dist = d
            if nid == parent:
                parent_dist = d
        kids = self._children.get(sender)
        child_count = 0
        if kids:
            child_count = sum(1 for ts in kids.values() if ts >= t0)
        det_parent = self._parent.get(self.placement)
        same_parent = 1.0 if (parent is not None and det_parent is not None
                              and parent == det_parent) else 0.0

        dist_det = math.hypot(sx - self.det_x, sy - self.det_y)
        rssi = rssi_dbm(self.tx_power, dist_det, self.path_loss_exponent)
        if parent is not None and parent in self._pos:
            px, py = self._pos[parent]
            parent_rssi = rssi_dbm(self.tx_power,
                                   math.hypot(px - self.det_x, py - self.det_y),
                                   self.path_loss_exponent)
            cmp_snd_prt_lq = 1.0 if rssi > parent_rssi else 0.0
            prt_bst_lq = 1.0 if (parent_dist is not None and
                                 parent_dist <= min_dist + 1e-9) else 0.0
        else:
            cmp_snd_prt_lq = 0.0
            prt_bst_lq = 0.0

        vec = (
            float(PKT_TYPE_CODE[e.kind]), float(PKT_STATUS_CODE[e.status]),
            float(e.src_rank), float(e.adv_version),
            float(snd_dis), float(snd_dio), float(snd_dao), float(snd_daoack),
            float(snd_cpkt), float(rcvd_dis), float(rcvd_dio), float(rcvd_dao),
            float(rcvd_daoack), float(rcvd_cpkt), avg_intpkt,
            float(len(hist.rank_alts)), float(len(hist.vn_alts)),
            float(len(hist.app_sent)), e.e2e_delay,
            cpkt_loss, pkt_loss, self._avg_hopcount, float(neighbour_count),
            float(child_count), same_parent, self.rx_sensitivity, e.tx_pwr,
            rssi, cmp_snd_prt_lq, prt_bst_lq,
        )
        return Instance(vec, label=e.label, timestamp=e.time, sender=sender)


def detector_position(trace: list[PacketEvent], placement: int):
    """A detector's position is taken from its first own transmission."""
    for e in trace:
        if e.src == placement:
            return (e.src_x, e.src_y)
    raise PlacementError(f"node {placement} never transmits in this trace")


def extract(trace: list[PacketEvent], placement: int, horizon: float = 60.0,
            tx_range: float = 50.0, tx_power: float = 0.0,
            path_loss_exponent: float = 2.0, rx_sensitivity: float = -85.0,
            attach_labels: bool = True) -> list[Instance]:
    """One labeled instance per control/app packet overheard at ``placement``."""
    pos = detector_position(trace, placement)
    fx = FeatureExtractor(placement, pos, tx_range=tx_range, horizon=horizon,
                          tx_power=tx_power, path_loss_exponent=path_loss_exponent,
                          rx_sensitivity=rx_sensitivity)
    out = []
    for e in trace:
        if fx.overhears(e):
            inst = fx.push(e)
            if not attach_labels:
                inst.label = None
            out.append(inst)
    return out


def label_instances(instances: list[Instance], trace: list[PacketEvent],
                    placement: int, tx_range: float = 50.0) -> list[Instance]:
    """Attach each generating packet's ground-truth label to its instance."""
    pos = detector_position(trace, placement)
    det_x, det_y = pos
    overheard = []
    for e in trace:
        if math.hypot(e.src_x - det_x, e.src_y - det_y) <= tx_range or \
                (e.dst_x is not None and
                 math.hypot(e.dst_x - det_x, e.dst_y - det_y) <= tx_range):
            overheard.append(e)
    if len(overheard) != len(instances):
        raise ValueError(f"instance/trace mismatch: {len(instances)} instances "
                         f"vs {len(overheard)} overheard packets")
    for inst, e in zip(instances, overheard):
        if inst.timestamp != e.time or inst.sender != e.src:
            raise ValueError("instances do not line up with the trace")
        inst.label = e.label
    return instances


_DATASET_HEADER = FEATURE_NAMES + ("label", "timestamp", "sender")


def write_dataset(instances: list[Instance], path):
    """The labeled feature CSV: 30 feature columns, truth label, timestamp, sender."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_DATASET_HEADER)
        for inst in instances:
            row = [repr(v) for v in inst.features]
            row.append(str(inst.label) if inst.label is not None else "")
            row.append(repr(inst.timestamp))
            row.append(inst.sender)
            w.writerow(row)


def read_dataset(path) -> list[Instance]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != _DATASET_HEADER:
            raise ValueError(f"{path}: unexpected dataset header")
        for row in reader:
            feats = [float(v) for v in row[:FEATURE_DIM]]
            label = Label.parse(row[FEATURE_DIM]) if row[FEATURE_DIM] else None
            out.append(Instance(feats, label=label,
                                timestamp=float(row[FEATURE_DIM + 1]),
                                sender=int(row[FEATURE_DIM + 2])))
    return out
