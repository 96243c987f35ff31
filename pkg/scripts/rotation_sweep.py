"""Precision/recall of the default pipeline against scripted revisit offsets.

    python3 scripts/rotation_sweep.py [--yaws 0 10 20 30 40] [--lateral 5] [--seed 0] [--csv out.csv]
"""

import argparse
import csv
import sys
import time

from sonar_context.experiments import revisit_sequence, run_and_summarize
from sonar_context.simulator import WorldConfig, make_world


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--yaws", type=float, nargs="*", default=[0, 10, 20, 30, 40])
    p.add_argument("--lateral", type=float, nargs="*", default=[5.0], help="lateral offsets at 0 deg yaw")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames-per-lap", type=int, default=200)
    p.add_argument("--csv", help="write rows here as well")
    args = p.parse_args(argv)

    world = make_world(WorldConfig())
    cases = [(y, 0.0) for y in args.yaws] + [(0.0, l) for l in args.lateral]
    rows = []
    for yaw, lat in cases:
        t = time.time()
        seq = revisit_sequence(yaw, lat, args.seed, args.frames_per_lap, world)
        _, s = run_and_summarize(seq)
        rows.append([yaw, lat, s.precision, s.recall, s.tp, s.detections])
        print(f"yaw {yaw:5.1f} deg  lateral {lat:4.1f} m  precision {s.precision:.3f}  recall {s.recall:.3f}"
              f"  ({s.tp}/{s.detections} detections, {time.time() - t:.1f} s)", flush=True)
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["yaw_deg", "lateral_m", "precision", "recall", "tp", "detections"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
