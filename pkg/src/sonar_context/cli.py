"""Command-line entry point: ``simulate``, ``run`` and ``eval``.

Layout under ``--out``::

    dataset/   images + poses.csv, odometry.csv, sensor.json, scenario.json
    run/       matches.csv, factors.csv, graph.csv, keys.jsonl [, contexts/, clouds/]
    eval/      pr_curve.csv, overlap_hist.csv, blind_traversal.csv, traj_error.csv, eval_meta.json
    config.json  effective configuration of the last command
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import RunConfig, apply_overrides, load_config, save_config
from .errors import FormatError, SonarContextError
from .evaluation import (PRECISION_DEFINITION, RECALL_DEFINITION, blind_traversal, make_record,
                         operating_point, overlap_histogram, pr_curve, trajectory_error,
                         true_positive_ids, write_blind_traversal, write_overlap_histogram,
                         write_pr_curve, write_trajectory_error)
from .pipeline import dump_frames, read_matches, run_sequence, write_factors, write_matches
from .polar_image import ensure_dir, load_dataset
from .posegraph import PoseGraph
from .simulator import circular_route, generate_dataset, load_scenario, make_world

log = logging.getLogger("sonar_context")


def _effective(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = apply_overrides(cfg, seed=args.seed, output=args.out, dataset=args.dataset)
    ensure_dir(cfg.output)
    save_config(cfg, Path(cfg.output) / "config.json")
    return cfg


def cmd_simulate(cfg: RunConfig) -> dict:
    sim = cfg.simulation
    if sim.scenario_file:
        world, traj, noise = load_scenario(sim.scenario_file)
        noise = noise or sim.noise
    else:
        world = make_world(sim.world)
        r = sim.route
        traj = circular_route(r.radius_m, r.frames_per_lap, r.laps, r.revisit_yaw_deg, r.revisit_lateral_m,
                              r.revisit_forward_m, r.arc_fraction, r.dt_s, r.sigma_trans_per_m,
                              r.sigma_yaw_per_rad, cfg.seed)
        noise = sim.noise
    return generate_dataset(world, traj, cfg.sensor, noise, cfg.dataset_dir)


def cmd_run(cfg: RunConfig, dump_context: bool = False, dump_clouds: bool = False) -> dict:
    ds = load_dataset(cfg.dataset_dir)
    ids = [r.frame_id for r in ds.ground_truth]
    if ids != list(range(len(ids))):
        raise FormatError(f"{ds.root}: frame ids must be 0..N-1 in order")
    odom_recs = ds.odometry if ds.odometry is not None else ds.ground_truth
    images = [ds.image(k) for k in range(len(ds))]
    stamps = [r.timestamp_s for r in ds.ground_truth]
    res = run_sequence(images, ds.sensor, [r.pose for r in odom_recs], stamps, cfg)
    out = ensure_dir(cfg.run_dir)
    write_matches(res.matches, out / "matches.csv")
    write_factors(res.factors, out / "factors.csv")
    res.graph.write_csv(out / "graph.csv", res.optimized.poses)
    res.index.save(out / "keys.jsonl")
    if dump_context or dump_clouds:
        dump_frames(res.frames, out, contexts=dump_context, clouds=dump_clouds)
    return {"frames": len(res.frames), "matches": len(res.matches),
            "accepted_matches": sum(m.accepted for m in res.matches),
            "loop_factors": len(res.loop_factors), "final_cost": res.optimized.final_cost,
            "path": str(out)}


def cmd_eval(cfg: RunConfig) -> dict:
    ds = load_dataset(cfg.dataset_dir)
    gt = [r.pose for r in ds.ground_truth]
    run_dir = cfg.run_dir
    for name in ("matches.csv", "graph.csv"):
        if not (run_dir / name).is_file():
            raise FileNotFoundError(f"missing {run_dir / name}; run the 'run' command first")
    best = {}
    for m in read_matches(run_dir / "matches.csv"):
        cur = best.get(m["query_id"])
        if cur is None or (m["distance"], m["cand_id"]) < (cur["distance"], cur["cand_id"]):
            best[m["query_id"]] = m
    records = [make_record(q, m["cand_id"], m["distance"], gt, m["accepted"]) for q, m in sorted(best.items())]
    ev = cfg.eval
    gap = cfg.retrieval.exclusion_gap
    curve = pr_curve(records, gt, ev, gap)
    tp_ids = true_positive_ids(records, ev.tp_distance_m)
    tp_records = [r for r in records if r.query_id in set(tp_ids)]
    hist = overlap_histogram(tp_records)
    bt = blind_traversal(tp_ids, gt)
    graph = PoseGraph.read_csv(run_dir / "graph.csv")
    if sorted(graph.nodes) != list(range(len(gt))):
        raise FormatError(f"{run_dir / 'graph.csv'}: node ids do not match the dataset")
    optimized = [graph.nodes[k] for k in range(len(gt))]
    odom = [r.pose for r in (ds.odometry or ds.ground_truth)]
    errors = {"odometry": trajectory_error(odom, gt), "optimized": trajectory_error(optimized, gt)}

    out = ensure_dir(cfg.eval_dir)
    write_pr_curve(curve, out / "pr_curve.csv")
    write_overlap_histogram(hist, out / "overlap_hist.csv")
    write_blind_traversal(bt, out / "blind_traversal.csv")
    write_trajectory_error(list(range(len(gt))), errors, out / "traj_error.csv")
    op = operating_point(records, gt, cfg.matching.accept_threshold, ev.tp_distance_m, gap)
    summary = {
        "operating_point": dataclasses.asdict(op),
        "true_positives": len(tp_ids),
        "max_blind_traversal_m": bt.max_gap_m,
        "rmse_odometry_m": errors["odometry"].rmse_m,
        "rmse_optimized_m": errors["optimized"].rmse_m,
    }
    meta = {
        "config": cfg.to_dict(),
        "definitions": {
            "recall": RECALL_DEFINITION,
            "precision": PRECISION_DEFINITION,
            "detection": "best candidate per query with distance <= tau",
            "true_positive": "detection whose ground-truth separation <= tp_distance_m",
            "overlap_histogram": "accepted true-positive pairs; |rotation| in 10 deg bins, separation in 1 m bins",
            "blind_traversal": "ground-truth arc length between consecutive accepted true-positive queries, "
                               "including non-empty leading and trailing stretches",
            "trajectory_error": "position error after expressing both trajectories relative to frame 0",
        },
        "summary": summary,
    }
    with open(out / "eval_meta.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return dict(summary, path=str(out))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides 'output')")
    common.add_argument("--seed", type=int, help="trajectory/noise seed (overrides 'seed')")
    common.add_argument("--dataset", help="dataset directory (default <out>/dataset)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="sonar-context", description="Imaging-sonar loop closure toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="render a synthetic dataset")
    run = sub.add_parser("run", parents=[common], help="describe, match, close loops and optimize")
    run.add_argument("--dump-context", action="store_true", help="write per-frame descriptors to run/contexts/")
    run.add_argument("--dump-clouds", action="store_true", help="write per-frame point clouds to run/clouds/")
    sub.add_parser("eval", parents=[common], help="compute metric CSVs from a finished run")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _effective(args)
        if args.command == "simulate":
            summary = cmd_simulate(cfg)
        elif args.command == "run":
            summary = cmd_run(cfg, args.dump_context, args.dump_clouds)
        else:
            summary = cmd_eval(cfg)
    except SonarContextError as e:
        print(json.dumps({"status": "error", "kind": e.kind, "message": str(e)}), file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        kind = "io" if isinstance(e, OSError) else "value"
        print(json.dumps({"status": "error", "kind": kind, "message": str(e)}), file=sys.stderr)
        return 1
    print(json.dumps(dict(status="ok", command=args.command, **summary), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
