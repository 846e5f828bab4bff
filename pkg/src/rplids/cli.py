"""Command-line experiment runner.

    rplids simulate --nodes 32 --attack SH --seed 1 --out trace.csv
    rplids run --attack-set SH,BH --seeds 0,1,2 --out results/
    rplids compare-drift --seeds 0 --out results/
    rplids unknown-attack --held-out DA --out results/

Exit codes: 0 success, 2 validation error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import experiments, rplsim
from .core import AttackKind
from .drift import DETECTOR_NAMES


def _parse_attacks(text: str):
    if text.lower() == "all":
        return tuple(AttackKind)
    return tuple(AttackKind[name.strip().upper()] for name in text.split(","))


def _parse_seeds(text: str):
    return tuple(int(s) for s in text.split(","))


def _sim_config(args) -> rplsim.SimConfig:
    if args.config:
        cfg = rplsim.load_config(args.config)
    else:
        cfg = rplsim.SimConfig()
    overrides = {}
    if args.nodes is not None:
        overrides["node_count"] = args.nodes
    if args.malicious_frac is not None:
        overrides["malicious_fraction"] = args.malicious_frac
    if args.duration is not None:
        overrides["duration"] = args.duration
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value sim config file")
    p.add_argument("--nodes", type=int, help="LLN node count (16/32/64/128)")
    p.add_argument("--malicious-frac", type=float,
                   help="fraction of malicious nodes (0.1/0.2/0.3)")
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=_parse_seeds, default=(0,),
                   help="comma-separated seed list")
    p.add_argument("--out", required=True, help="output file or directory")
    p.add_argument("--nu", type=float, default=0.2)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--estimators", type=int, default=8,
                   help="ensemble model count")
    p.add_argument("--neighbors", type=int, default=6, help="KNN k")
    p.add_argument("--drift-detector", choices=DETECTOR_NAMES, default="adwin")
    p.add_argument("--label-delay", type=int, default=0)


def _spec(args) -> experiments.ExperimentSpec:
    return experiments.ExperimentSpec(
        sim=_sim_config(args),
        attacks=_parse_attacks(args.attack_set),
        seeds=args.seeds, out_dir=args.out,
        nu=args.nu, gamma=args.gamma,
        n_models=args.estimators, k_neighbors=args.neighbors,
        drift_detector=args.drift_detector, label_delay=args.label_delay,
    ).validate()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rplids",
        description="Streaming hybrid intrusion detection for RPL traffic")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write one labeled trace file")
    _add_common(p_sim)
    p_sim.add_argument("--attack", default="none",
                       help="attack kind (SH/BH/.../WP) or none")

    p_run = sub.add_parser("run", help="per-attack prequential evaluation")
    _add_common(p_run)
    p_run.add_argument("--attack-set", default="all",
                       help="comma-separated attack kinds or 'all'")

    p_cd = sub.add_parser("compare-drift",
                          help="benchmark the seven drift detectors")
    _add_common(p_cd)
    p_cd.add_argument("--attack-set", default="DA")
    p_cd.add_argument("--max-instances", type=int, default=8000)

    p_ua = sub.add_parser("unknown-attack",
                          help="leave-one-attack-out evaluation")
    _add_common(p_ua)
    p_ua.add_argument("--attack-set", default="all")
    p_ua.add_argument("--held-out", required=True,
                      help="attack kind excluded from pre-training")

    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = _sim_config(args)
            attack = None if args.attack.lower() == "none" \
                else AttackKind[args.attack.upper()]
            cfg = replace(cfg, seed=args.seed, attack=attack,
                          malicious_fraction=cfg.malicious_fraction
                          if attack is not None else 0.0)
            cfg.validate()
            events = rplsim.run(cfg)
            rplsim.write_trace(events, args.out)
            print(f"wrote {len(events)} events to {args.out}")
        elif args.command == "run":
            out = experiments.cmd_run(_spec(args))
            print(f"summary written to {out['summary_path']}")
        elif args.command == "compare-drift":
            spec = _spec(args)
            attack = _parse_attacks(args.attack_set)[0]
            out = experiments.cmd_compare_drift(spec, attack=attack,
                                                max_instances=args.max_instances)
            for row in out["rows"]:
                print(f"{row['detector']:>14}: acc={row['accuracy']:.4f} "
                      f"replacements={row['replacements']} "
                      f"time={row['wall_time_s']:.2f}s")
            print(f"table written to {out['table_path']}")
        elif args.command == "unknown-attack":
            spec = _spec(args)
            held = AttackKind[args.held_out.upper()]
            row = experiments.cmd_unknown_attack(spec, held, out_dir=args.out)
            print(f"held_out={row['held_out']} accuracy={row['accuracy']:.4f} "
                  f"tpr={row['tpr']:.4f} fpr={row['fpr']:.4f}")
    except (rplsim.ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
