"""Desk-scale discrete-event RPL/DODAG simulator producing labeled packet traces.

Models a 6LoWPAN neighbourhood at the level the detectors can see: trickle-
timed DIO multicasts, DIS solicitation while joining, one-hop DAO/DAO-ACK
registration to the preferred parent (storing mode), periodic upward
application traffic forwarded hop by hop, a log-distance path-loss link model
with a hard transmission-range gate, slotted collisions, and per-second node
mobility.  Malicious nodes override their control/forwarding behaviour per
attack kind; every packet row carries the ground-truth label.

The simulator is strictly single-threaded and a pure function of its config:
the same seed yields a byte-identical trace file.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .core import AttackKind, Label

INFINITE_RANK = 0xFFFF
ROOT_RANK = 256
RANK_STEP = 256          # per-hop rank increase
PARENT_HYSTERESIS = 64   # min rank gain before switching parent
NEIGHBOR_TTL = 30.0      # seconds before a silent neighbour is stale
PARENT_FAIL_LIMIT = 3    # consecutive unicast failures before parent loss
PL_REF_DB = 40.0         # path loss at 1 m

TRACE_SCHEMA_VERSION = 1

_TERRAIN_BY_NODES = {16: 250.0, 32: 350.0, 64: 500.0, 128: 700.0}

PKT_KINDS = ("DIO", "DIS", "DAO", "DAOACK", "APP")
PKT_STATUS = ("Successful", "Collided", "Dropped")


class ConfigError(ValueError):
    pass


class TraceFormatError(ValueError):
    pass


def path_loss_db(distance: float, exponent: float = 2.0) -> float:
    """Log-distance path loss: PL(d) = PL(1m) + 10*n*log10(d), d in metres."""
    return PL_REF_DB + 10.0 * exponent * math.log10(max(distance, 1.0))


def rssi_dbm(tx_pwr: float, distance: float, exponent: float = 2.0) -> float:
    return tx_pwr - path_loss_db(distance, exponent)


@dataclass
class SimConfig:
    node_count: int = 32                # LLN nodes, excluding the root
    malicious_fraction: float = 0.2
    mobile_fraction: float = 0.2
    terrain_side: float | None = None   # metres; defaults per node_count
    tx_range: float = 50.0
    velocity: float = 5.0               # m/s for mobile nodes
    duration: float = 1800.0            # simulated seconds
    objective: str = "OF0"              # OF0 (min rank) or LQ (best link)
    rx_sensitivity: float = -85.0       # dBm
    path_loss_exponent: float = 2.0
    tx_power: float = 0.0               # dBm
    seed: int = 0
    attack: AttackKind | None = None
    attack_start: float = 30.0
    detector_fraction: float = 0.1
    mobility_mode: str = "random_walk"  # or group_walk
    app_interval: float = 5.0
    dao_interval: float = 60.0
    trickle_imin: float = 4.0
    trickle_doublings: int = 8
    trickle_redundancy: int = 10
    slot: float = 0.01
    dis_flood_rate: float = 10.0        # DA: DIS multicasts per second
    ds_dio_rate: float = 5.0            # DS: consistent DIOs per second
    grayhole_drop: float = 0.5
    ir_rank_step: int = 128
    beacon_interval: float = 15.0       # SH/IR/WP: lying-DIO beacon period

    def validate(self, strict: bool = True):
        if strict and self.node_count not in _TERRAIN_BY_NODES:
            raise ConfigError(f"node_count must be one of "
                              f"{sorted(_TERRAIN_BY_NODES)}, got {self.node_count}")
        if self.node_count < 2:
            raise ConfigError("node_count must be >= 2")
        if self.attack is not None and strict and \
                round(self.malicious_fraction, 3) not in (0.1, 0.2, 0.3):
            raise ConfigError("malicious_fraction must be 0.1, 0.2 or 0.3")
        if not (0.0 <= self.malicious_fraction <= 1.0):
            raise ConfigError("malicious_fraction must be in [0, 1]")
        if not (0.0 <= self.mobile_fraction <= 1.0):
            raise ConfigError("mobile_fraction must be in [0, 1]")
        if not (0.0 <= self.detector_fraction <= 1.0):
            raise ConfigError("detector_fraction must be in [0, 1]")
        if self.tx_range <= 0:
            raise ConfigError("tx_range must be positive")
        side = self.resolved_terrain_side()
        if strict and not (250.0 <= side <= 850.0):
            raise ConfigError("terrain_side must be in [250, 850] m")
        if self.objective not in ("OF0", "LQ"):
            raise ConfigError("objective must be OF0 or LQ")
        if self.mobility_mode not in ("random_walk", "group_walk"):
            raise ConfigError("mobility_mode must be random_walk or group_walk")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        return self

    def resolved_terrain_side(self) -> float:
        if self.terrain_side is not None:
            return self.terrain_side
        return _TERRAIN_BY_NODES.get(self.node_count, 350.0)


def save_config(cfg: SimConfig, path):
    """Flat key=value config file (one parameter per line, # comments)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# rplsim config\n")
        for f in fields(cfg):
            value = getattr(cfg, f.name)
            if isinstance(value, AttackKind):
                value = value.name
            elif value is None:
                value = "none"
            fh.write(f"{f.name}={value}\n")


def load_config(path) -> SimConfig:
    kwargs = {}
    types = {f.name: f for f in fields(SimConfig)}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in types:
                raise ConfigError(f"{path}:{lineno}: unknown parameter {key!r}")
            if key == "attack":
                kwargs[key] = None if value.lower() == "none" else AttackKind[value]
            elif key == "terrain_side":
                kwargs[key] = None if value.lower() == "none" else float(value)
            elif key in ("node_count", "seed", "trickle_doublings",
                         "trickle_redundancy", "ir_rank_step"):
                kwargs[key] = int(value)
            elif key in ("objective", "mobility_mode"):
                kwargs[key] = value
            else:
                kwargs[key] = float(value)
    return SimConfig(**kwargs)


@dataclass(slots=True)
class PacketEvent:
    """One observed link-layer packet transmission."""

    time: float
    kind: str
    src: int                 # claimed sender id (original node for replays)
    dst: int                 # receiver id, -1 for multicast
    src_rank: int
    adv_version: int
    status: str
    hop_count: int
    e2e_delay: float
    src_x: float             # physical transmitter position
    src_y: float
    dst_x: float | None
    dst_y: float | None
    tx_pwr: float
    label: Label


_TRACE_COLUMNS = ("time", "kind", "src", "dst", "src_rank", "adv_version",
                  "status", "hop_count", "e2e_delay", "src_x", "src_y",
                  "dst_x", "dst_y", "tx_pwr", "label")


def write_trace(events, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# rplsim trace schema_version={TRACE_SCHEMA_VERSION}\n")
        fh.write(",".join(_TRACE_COLUMNS) + "\n")
        for e in events:
            dst_x = "" if e.dst_x is None else repr(e.dst_x)
            dst_y = "" if e.dst_y is None else repr(e.dst_y)
            fh.write(f"{e.time!r},{e.kind},{e.src},{e.dst},{e.src_rank},"
                     f"{e.adv_version},{e.status},{e.hop_count},{e.e2e_delay!r},"
                     f"{e.src_x!r},{e.src_y!r},{dst_x},{dst_y},{e.tx_pwr!r},"
                     f"{e.label}\n")


def read_trace(path) -> list[PacketEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# rplsim trace schema_version="):
            raise TraceFormatError(f"{path}:1: missing schema header")
        version = int(header.rsplit("=", 1)[1])
        if version != TRACE_SCHEMA_VERSION:
            raise TraceFormatError(f"{path}:1: unsupported schema version {version}")
        columns = fh.readline().strip()
        if columns != ",".join(_TRACE_COLUMNS):
            raise TraceFormatError(f"{path}:2: unexpected column header")
        for lineno, line in enumerate(fh, 3):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(_TRACE_COLUMNS):
                raise TraceFormatError(
                    f"{path}:{lineno}: expected {len(_TRACE_COLUMNS)} fields, "
                    f"got {len(parts)}")
            try:
                events.append(PacketEvent(
                    time=float(parts[0]), kind=parts[1], src=int(parts[2]),
                    dst=int(parts[3]), src_rank=int(parts[4]),
                    adv_version=int(parts[5]), status=parts[6],
                    hop_count=int(parts[7]), e2e_delay=float(parts[8]),
                    src_x=float(parts[9]), src_y=float(parts[10]),
                    dst_x=float(parts[11]) if parts[11] else None,
                    dst_y=float(parts[12]) if parts[12] else None,
                    tx_pwr=float(parts[13]), label=Label.parse(parts[14]),
                ))
            except (ValueError, KeyError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from exc
    return events


@dataclass
class NodeState:
    id: int
    rank: int = INFINITE_RANK
    preferred_parent: int | None = None
    version_number: int = 240
    role: str = "Legit"               # Root | Legit | Detector | Attacker
    attack: AttackKind | None = None
    mobility: str = "Static"          # Static | RandomWalk | GroupWalk
    group: int = 0
    # trickle state
    interval: float = 4.0
    redundancy: int = 0
    # bookkeeping
    neighbors: dict = field(default_factory=dict)  # id -> (rank, last_heard, rssi)
    children: dict = field(default_factory=dict)   # id -> last DAO time
    parent_fails: int = 0
    adv_rank: int = INFINITE_RANK     # rank the node advertises (attackers lie)
    joined_at: float | None = None


def apply_attack(node: NodeState, kind: AttackKind) -> NodeState:
    """Mark a node malicious and set the per-kind behaviour override."""
    if not isinstance(kind, AttackKind):
        raise ValueError(f"unknown attack kind {kind!r}")
    node.role = "Attacker"
    node.attack = kind
    return node


# event handler codes, dispatched in the run loop
_TRICKLE_FIRE = 0
_TRICKLE_END = 1
_DIS_TIMER = 2
_APP_TIMER = 3
_DAO_TIMER = 4
_MOVE = 5
_ATTACK_TICK = 6
_FORWARD = 7


class Simulator:
    """Event-driven DODAG simulation; collect() returns the packet trace."""

    def __init__(self, cfg: SimConfig, strict: bool = True):
        cfg.validate(strict=strict)
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.side = cfg.resolved_terrain_side()
        self.n_total = cfg.node_count + 1  # node 0 is the root / border router
        self.imax = cfg.trickle_imin * (2 ** cfg.trickle_doublings)
        self._heap: list = []
        self._seq = 0
        self.now = 0.0
        self.events: list[PacketEvent] = []
        self._slot_idx = -1
        self._slot_buf: list = []
        self._app_seq = 0
        self.parent_changes: list[tuple[float, int, int | None, int | None]] = []
        self._wh_pairs: dict[int, int] = {}
        self._attacks_on = False
        self._place_nodes()
        self._assign_roles()
        self._init_nodes()

    # -- topology setup ----------------------------------------------------

    def _place_nodes(self):
        n = self.n_total
        cols = math.ceil(math.sqrt(n))
        rows = math.ceil(n / cols)
        spacing = float(self.rng.uniform(30.0, 40.0))
        width, height = (cols - 1) * spacing, (rows - 1) * spacing
        x0 = (self.side - width) / 2.0
        y0 = (self.side - height) / 2.0
        pos = np.empty((n, 2))
        cells = [(r, c) for r in range(rows) for c in range(cols)][:n]
        # the root / border router sits at a corner, like a 6BR uplink would
        cells.sort(key=lambda rc: (rc[0] ** 2 + rc[1] ** 2, rc))
        jitter = self.rng.uniform(-5.0, 5.0, size=(n, 2))
        for i, (r, c) in enumerate(cells):
            pos[i, 0] = x0 + c * spacing + jitter[i, 0]
            pos[i, 1] = y0 + r * spacing + jitter[i, 1]
        self.pos = np.clip(pos, 0.0, self.side)

    def _assign_roles(self):
        cfg = self.cfg
        lln = list(range(1, self.n_total))
        n_mal = round(cfg.malicious_fraction * cfg.node_count) if cfg.attack is not None else 0
        attackers = sorted(self.rng.choice(lln, size=n_mal, replace=False).tolist()) \
            if n_mal else []
        self.attackers = attackers
        # detectors by grid partition over the non-malicious nodes
        n_det = max(1, round(cfg.detector_fraction * cfg.node_count))
        candidates = [i for i in lln if i not in set(attackers)]
        self.detectors = self._grid_partition_pick(candidates, n_det)
        # ~mobile_fraction of nodes move, including half of the attackers
        n_mobile = round(cfg.mobile_fraction * cfg.node_count)
        mobile = attackers[: len(attackers) // 2]
        pool = [i for i in candidates if i not in set(self.detectors)]
        extra = [i for i in pool if i not in set(mobile)]
        self.rng.shuffle(extra)
        mobile = mobile + extra[: max(0, n_mobile - len(mobile))]
        self.mobile = sorted(mobile)
        if cfg.attack is AttackKind.WH:
            ordered = sorted(attackers, key=lambda i: self.pos[i, 0])
            half = len(ordered) // 2
            for a, b in zip(ordered[:half], ordered[half:half * 2]):
                self._wh_pairs[a] = b
                self._wh_pairs[b] = a

    def _grid_partition_pick(self, candidates: list[int], want: int) -> list[int]:
        grid = math.ceil(math.sqrt(want))
        cell = self.side / grid
        chosen: list[int] = []
        taken = set()
        for gy in range(grid):
            for gx in range(grid):
                if len(chosen) >= want:
                    break
                cx, cy = (gx + 0.5) * cell, (gy + 0.5) * cell
                best, best_d = None, math.inf
                for i in candidates:
                    if i in taken:
                        continue
                    d = (self.pos[i, 0] - cx) ** 2 + (self.pos[i, 1] - cy) ** 2
                    if d < best_d:
                        best, best_d = i, d
                if best is not None and best_d < (cell * 1.5) ** 2:
                    chosen.append(best)
                    taken.add(best)
        for i in candidates:  # fill up if some grid cells were empty
            if len(chosen) >= want:
                break
            if i not in taken:
                chosen.append(i)
                taken.add(i)
        return sorted(chosen)

    def _init_nodes(self):
        cfg = self.cfg
        self.nodes = [NodeState(i, interval=cfg.trickle_imin)
                      for i in range(self.n_total)]
        root = self.nodes[0]
        root.role = "Root"
        root.rank = root.adv_rank = ROOT_RANK
        root.joined_at = 0.0
        for i in self.attackers:
            apply_attack(self.nodes[i], cfg.attack)
        for i in self.detectors:
            self.nodes[i].role = "Detector"
        groups = max(1, len(self.mobile) // 6)
        for j, i in enumerate(self.mobile):
            self.nodes[i].mobility = ("RandomWalk" if cfg.mobility_mode == "random_walk"
                                      else "GroupWalk")
            self.nodes[i].group = j % groups
        self._headings = {i: float(self.rng.uniform(0, 2 * math.pi))
                          for i in self.mobile}
        self._group_headings = {g: float(self.rng.uniform(0, 2 * math.pi))
                                for g in range(groups)}

    # -- event plumbing ------------------------------------------------------

    def _push(self, t: float, code: int, data=None):
        heapq.heappush(self._heap, (t, self._seq, code, data))
        self._seq += 1

    def _start_trickle(self, node: NodeState, reset: bool = True):
        if reset:
            node.interval = self.cfg.trickle_imin
        node.redundancy = 0
        fire = self.now + float(self.rng.uniform(node.interval / 2, node.interval))
        self._push(fire, _TRICKLE_FIRE, (node.id, node.interval))
        self._push(self.now + node.interval, _TRICKLE_END, (node.id, node.interval))

    def _trickle_inconsistent(self, node: NodeState):
        if node.interval > self.cfg.trickle_imin:
            self._start_trickle(node, reset=True)

    # -- transmissions -------------------------------------------------------

    def _transmit(self, kind: str, src: int, dst: int, label: Label,
                  claimed_src: int | None = None, rank: int | None = None,
                  hop_count: int = 0, e2e_delay: float = 0.0,
                  payload=None, replayed: bool = False,
                  forced_status: str | None = None):
        slot = int(self.now / self.cfg.slot)
        if self._slot_buf and slot != self._slot_idx:
            self._flush_slot()
        if not self._slot_buf:
            self._slot_idx = slot
        node = self.nodes[src]
        self._slot_buf.append({
            "time": self.now, "kind": kind, "phys_src": src,
            "src": claimed_src if claimed_src is not None else src,
            "dst": dst,
            "rank": rank if rank is not None else node.adv_rank,
            "version": node.version_number, "hop_count": hop_count,
            "e2e_delay": e2e_delay, "label": label, "payload": payload,
            "replayed": replayed, "forced_status": forced_status,
        })

    def _flush_slot(self):
        """Resolve collisions and deliver the buffered slot's transmissions.

        Reactions emitted during delivery happen at the slot boundary, so they
        land in a later slot and cannot recurse into this flush.
        """
        buf = self._slot_buf
        if not buf:
            return
        self._slot_buf = []
        self.now = max(self.now, (self._slot_idx + 1) * self.cfg.slot)
        cfg = self.cfg
        # carrier collision: two transmitters in range of each other, same slot
        collided = [False] * len(buf)
        if len(buf) > 1:
            for i in range(len(buf)):
                for j in range(i + 1, len(buf)):
                    a, b = buf[i]["phys_src"], buf[j]["phys_src"]
                    if a == b:
                        continue
                    d = math.hypot(self.pos[a, 0] - self.pos[b, 0],
                                   self.pos[a, 1] - self.pos[b, 1])
                    if d <= cfg.tx_range:
                        collided[i] = collided[j] = True
        for tx, is_collided in zip(buf, collided):
            self._emit_and_deliver(tx, is_collided)

    def _emit_and_deliver(self, tx: dict, collided: bool):
        cfg = self.cfg
        phys = tx["phys_src"]
        px, py = float(self.pos[phys, 0]), float(self.pos[phys, 1])
        dst = tx["dst"]
        if tx["forced_status"] is not None:
            status = tx["forced_status"]
            deliver = False
        elif collided:
            status = "Collided"
            deliver = False
        elif dst >= 0:
            d = math.hypot(self.pos[dst, 0] - px, self.pos[dst, 1] - py)
            ok = d <= cfg.tx_range and \
                rssi_dbm(cfg.tx_power, d, cfg.path_loss_exponent) >= cfg.rx_sensitivity
            status = "Successful" if ok else "Dropped"
            deliver = ok
        else:
            status = "Successful"
            deliver = True
        if dst >= 0:
            dst_x, dst_y = float(self.pos[dst, 0]), float(self.pos[dst, 1])
        else:
            dst_x = dst_y = None
        self.events.append(PacketEvent(
            time=tx["time"], kind=tx["kind"], src=tx["src"], dst=dst,
            src_rank=int(tx["rank"]), adv_version=tx["version"], status=status,
            hop_count=tx["hop_count"], e2e_delay=tx["e2e_delay"],
            src_x=px, src_y=py, dst_x=dst_x, dst_y=dst_y,
            tx_pwr=cfg.tx_power, label=tx["label"]))
        if not deliver:
            if tx["kind"] == "APP" and status == "Dropped" and dst >= 0 \
                    and tx["forced_status"] is None:
                self._parent_unreachable(self.nodes[phys])
            return
        if dst >= 0:
            self._receive(self.nodes[dst], tx, phys)
        else:
            diff = self.pos - self.pos[phys]
            dists = np.hypot(diff[:, 0], diff[:, 1])
            for rid in np.flatnonzero(dists <= cfg.tx_range):
                rid = int(rid)
                if rid != phys:
                    self._receive(self.nodes[rid], tx, phys)

    # -- reception / protocol reactions ---------------------------------------

    def _receive(self, node: NodeState, tx: dict, phys_src: int):
        kind = tx["kind"]
        if kind == "DIO":
            self._on_dio(node, tx, phys_src)
        elif kind == "DIS":
            # solicitation resets the trickle timer so topology is re-advertised
            if node.id != tx["src"]:
                self._trickle_inconsistent(node)
        elif kind == "DAO":
            if node.id == tx["dst"]:
                node.children[tx["src"]] = self.now
                self._transmit("DAOACK", node.id, tx["src"], Label.normal())
        elif kind == "APP":
            if node.id == tx["dst"]:
                self._push(self.now + 0.02 +
                           float(self.rng.uniform(0.0, 0.03)),
                           _FORWARD, (node.id, tx["payload"],
                                      tx["hop_count"] + 1))

    def _on_dio(self, node: NodeState, tx: dict, phys_src: int):
        cfg = self.cfg
        sender = tx["src"]
        if sender == node.id:
            return
        d = math.hypot(self.pos[phys_src, 0] - self.pos[node.id, 0],
                       self.pos[phys_src, 1] - self.pos[node.id, 1])
        rssi = rssi_dbm(cfg.tx_power, d, cfg.path_loss_exponent)
        node.neighbors[sender] = (int(tx["rank"]), self.now, rssi)
        if tx["version"] > node.version_number:
            node.version_number = tx["version"]
            self._trickle_inconsistent(node)
        elif tx["version"] == node.version_number:
            node.redundancy += 1
        if node.role == "Root":
            return
        # wormhole endpoints tunnel every overheard legitimate DIO to their partner
        if node.attack is AttackKind.WH and self._attacks_on and not tx["replayed"]:
            partner = self._wh_pairs.get(node.id)
            if partner is not None and sender != partner:
                self._transmit("DIO", partner, -1, Label.attack(AttackKind.WH),
                               claimed_src=sender, rank=tx["rank"],
                               replayed=True)
        self._select_parent(node)

    def _parent_candidates(self, node: NodeState):
        horizon = self.now - NEIGHBOR_TTL
        for nid, (nrank, heard, rssi) in node.neighbors.items():
            if heard < horizon or nrank >= INFINITE_RANK - RANK_STEP:
                continue
            # the DAO-known subtree is never a parent candidate (loop guard)
            if node.children.get(nid, -math.inf) >= horizon:
                continue
            yield nid, nrank, rssi

    def _select_parent(self, node: NodeState):
        cands = list(self._parent_candidates(node))
        if not cands:
            return
        worst_parent = node.attack is AttackKind.WP and self._attacks_on
        if worst_parent:
            # deliberately the lowest-quality choice that still joins the DODAG
            if self.cfg.objective == "LQ":
                nid, nrank, _ = min(cands, key=lambda c: (c[2], -c[1], c[0]))
            else:
                nid, nrank, _ = max(cands, key=lambda c: (c[1], -c[2], -c[0]))
        elif self.cfg.objective == "LQ":
            nid, nrank, _ = max(cands, key=lambda c: (c[2], -c[1], -c[0]))
        else:
            nid, nrank, _ = min(cands, key=lambda c: (c[1], -c[2], c[0]))
        new_rank = min(nrank + RANK_STEP, INFINITE_RANK)
        if node.preferred_parent is None or worst_parent:
            better = node.preferred_parent != nid and (
                worst_parent or new_rank < node.rank or node.rank >= INFINITE_RANK)
        else:
            better = new_rank + PARENT_HYSTERESIS < node.rank
        changed = False
        if better:
            self.parent_changes.append((self.now, node.id,
                                        node.preferred_parent, nid))
            node.preferred_parent = nid
            node.parent_fails = 0
            changed = node.rank != new_rank
            node.rank = new_rank
            if node.joined_at is None:
                node.joined_at = self.now
                self._on_joined(node)
            self._push(self.now + 1.0 + float(self.rng.uniform(0, 0.5)),
                       _DAO_TIMER, (node.id, True))
        elif node.preferred_parent is not None:
            entry = node.neighbors.get(node.preferred_parent)
            if entry is not None:
                parent_rank = entry[0]
                if parent_rank >= INFINITE_RANK - RANK_STEP:
                    self._detach(node)  # parent poisoned its subtree
                    return
                if parent_rank + RANK_STEP != node.rank:
                    # keep following the current parent's advertised rank
                    changed = True
                    node.rank = parent_rank + RANK_STEP
        # only sinkhole and increase-rank attackers lie about their rank
        lying = self._attacks_on and node.attack in (AttackKind.SH, AttackKind.IR)
        if not lying:
            node.adv_rank = node.rank
        if changed:
            self._trickle_inconsistent(node)

    def _on_joined(self, node: NodeState):
        self._start_trickle(node)
        self._push(self.now + float(self.rng.uniform(0, self.cfg.app_interval)),
                   _APP_TIMER, node.id)
        self._push(self.now + float(self.rng.uniform(1.0, self.cfg.dao_interval)),
                   _DAO_TIMER, (node.id, False))

    def _parent_unreachable(self, node: NodeState):
        node.parent_fails += 1
        if node.parent_fails >= PARENT_FAIL_LIMIT:
            if node.preferred_parent is not None:
                node.neighbors.pop(node.preferred_parent, None)
            self._detach(node)

    def _detach(self, node: NodeState):
        """Leave the DODAG: poison the subtree, then try to rejoin."""
        self.parent_changes.append((self.now, node.id,
                                    node.preferred_parent, None))
        node.preferred_parent = None
        node.parent_fails = 0
        node.rank = INFINITE_RANK
        node.adv_rank = INFINITE_RANK
        self._transmit("DIO", node.id, -1, Label.normal())
        self._select_parent(node)
        if node.preferred_parent is None:
            self._push(self.now + 2.0, _DIS_TIMER, node.id)

    # -- timers ----------------------------------------------------------------

    def _handle(self, code: int, data):
        cfg = self.cfg
        if code == _TRICKLE_FIRE:
            nid, interval = data
            node = self.nodes[nid]
            if interval != node.interval or node.rank >= INFINITE_RANK:
                return  # stale timer from a reset interval
            if node.redundancy < cfg.trickle_redundancy:
                self._send_dio(node)
        elif code == _TRICKLE_END:
            nid, interval = data
            node = self.nodes[nid]
            if interval != node.interval or node.rank >= INFINITE_RANK:
                return
            node.interval = min(node.interval * 2, self.imax)
            self._start_trickle(node, reset=False)
        elif code == _DIS_TIMER:
            node = self.nodes[data]
            if node.preferred_parent is None and node.role != "Root":
                self._transmit("DIS", node.id, -1, Label.normal())
                self._push(self.now + 10.0, _DIS_TIMER, node.id)
        elif code == _APP_TIMER:
            node = self.nodes[data]
            if node.preferred_parent is not None:
                self._app_seq += 1
                self._forward_app(node, (self._app_seq, self.now), 0)
            self._push(self.now + cfg.app_interval, _APP_TIMER, node.id)
        elif code == _DAO_TIMER:
            nid, once = data
            node = self.nodes[nid]
            if node.preferred_parent is not None:
                self._transmit("DAO", node.id, node.preferred_parent,
                               Label.normal())
            if not once:
                self._push(self.now + cfg.dao_interval, _DAO_TIMER, (nid, False))
        elif code == _MOVE:
            self._move_nodes()
            if self.now + 1.0 <= cfg.duration:
                self._push(self.now + 1.0, _MOVE, None)
        elif code == _ATTACK_TICK:
            self._attack_tick(data)
        elif code == _FORWARD:
            nid, payload, hops = data
            self._forward_app(self.nodes[nid], payload, hops)

    def _send_dio(self, node: NodeState):
        label = Label.normal()
        if node.attack is not None and self._attacks_on:
            kind = node.attack
            if kind is AttackKind.SH:
                node.adv_rank = ROOT_RANK + 1
                label = Label.attack(kind)
            elif kind is AttackKind.IR:
                node.adv_rank = min(node.adv_rank + self.cfg.ir_rank_step,
                                    INFINITE_RANK - RANK_STEP - 1)
                label = Label.attack(kind)
            elif kind is AttackKind.WP:
                label = Label.attack(kind)
        self._transmit("DIO", node.id, -1, label)

    def _forward_app(self, node: NodeState, payload, hops: int):
        seq, origin_time = payload
        if node.role == "Root":
            return  # delivered
        if hops > 32 or node.preferred_parent is None:
            self._transmit("APP", node.id, 0, Label.normal(),
                           hop_count=hops, e2e_delay=self.now - origin_time,
                           forced_status="Dropped")
            return
        if node.attack is not None and self._attacks_on and hops > 0:
            if node.attack is AttackKind.BH:
                self._transmit("APP", node.id, node.preferred_parent,
                               Label.attack(AttackKind.BH), hop_count=hops,
                               e2e_delay=self.now - origin_time,
                               forced_status="Dropped")
                return
            if node.attack is AttackKind.GH and \
                    self.rng.random() < self.cfg.grayhole_drop:
                self._transmit("APP", node.id, node.preferred_parent,
                               Label.attack(AttackKind.GH), hop_count=hops,
                               e2e_delay=self.now - origin_time,
                               forced_status="Dropped")
                return
        self._transmit("APP", node.id, node.preferred_parent, Label.normal(),
                       hop_count=hops, e2e_delay=self.now - origin_time,
                       payload=payload)

    def _attack_tick(self, nid: int):
        node = self.nodes[nid]
        cfg = self.cfg
        if node.attack is AttackKind.DA:
            self._transmit("DIS", node.id, -1, Label.attack(AttackKind.DA))
            self._push(self.now + 1.0 / cfg.dis_flood_rate, _ATTACK_TICK, nid)
        elif node.attack is AttackKind.DS:
            if node.rank < INFINITE_RANK:
                # replaying its own consistent DIO inflates neighbours'
                # redundancy counters and suppresses their advertisements
                self._transmit("DIO", node.id, -1, Label.attack(AttackKind.DS))
            self._push(self.now + 1.0 / cfg.ds_dio_rate, _ATTACK_TICK, nid)
        elif node.attack in (AttackKind.SH, AttackKind.IR, AttackKind.WP):
            # rank-lying attackers do not honour trickle suppression: they
            # beacon their advertisement to keep capturing (re)joining nodes
            if node.rank < INFINITE_RANK:
                self._send_dio(node)
            self._push(self.now + cfg.beacon_interval, _ATTACK_TICK, nid)

    def _move_nodes(self):
        cfg = self.cfg
        if not self.mobile:
            return
        step = cfg.velocity * 1.0
        if cfg.mobility_mode == "group_walk":
            for g in self._group_headings:
                self._group_headings[g] += float(self.rng.normal(0.0, 0.2))
        for i in self.mobile:
            if cfg.mobility_mode == "group_walk":
                theta = self._group_headings[self.nodes[i].group] + \
                    float(self.rng.normal(0.0, 0.15))
            else:
                self._headings[i] += float(self.rng.normal(0.0, 0.3))
                theta = self._headings[i]
            x = self.pos[i, 0] + step * math.cos(theta)
            y = self.pos[i, 1] + step * math.sin(theta)
            if not (0.0 <= x <= self.side):
                self._headings[i] = math.pi - theta
                x = min(max(x, 0.0), self.side)
            if not (0.0 <= y <= self.side):
                self._headings[i] = -theta
                y = min(max(y, 0.0), self.side)
            self.pos[i, 0], self.pos[i, 1] = x, y

    # -- main loop --------------------------------------------------------------

    def run(self) -> list[PacketEvent]:
        cfg = self.cfg
        root = self.nodes[0]
        self._start_trickle(root)
        for node in self.nodes[1:]:
            self._push(float(self.rng.uniform(0.5, 5.0)), _DIS_TIMER, node.id)
        self._push(1.0, _MOVE, None)
        for i in self.attackers:
            if cfg.attack in (AttackKind.DA, AttackKind.DS, AttackKind.SH,
                              AttackKind.IR, AttackKind.WP):
                self._push(cfg.attack_start +
                           float(self.rng.uniform(0, 1.0)), _ATTACK_TICK, i)
        while self._heap:
            t_head = self._heap[0][0]
            if t_head > cfg.duration:
                break
            if self._slot_buf and int(t_head / cfg.slot) != self._slot_idx:
                # deliver the pending slot first: reactions it schedules may
                # precede the head event and must be ordered into the heap
                self._flush_slot()
                continue
            t, _, code, data = heapq.heappop(self._heap)
            if not self._attacks_on and t >= cfg.attack_start and cfg.attack is not None:
                self._attacks_on = True
            self.now = t
            self._handle(code, data)
        self.now = cfg.duration
        while self._slot_buf:
            self._flush_slot()
        return self.events


def run(cfg: SimConfig, strict: bool = True) -> list[PacketEvent]:
    """Simulate one scenario; deterministic in ``cfg`` (including its seed)."""
    return Simulator(cfg, strict=strict).run()
