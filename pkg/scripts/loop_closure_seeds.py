"""Odometry vs optimised trajectory RMSE and blind traversal over several seeds.

    python3 scripts/loop_closure_seeds.py [--seeds 0 1 2 3 4] [--yaw 20]
"""

import argparse
import math
import sys

import numpy as np

from sonar_context.experiments import degraded_config, revisit_sequence, run_and_summarize
from sonar_context.simulator import WorldConfig, make_world


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2, 3, 4])
    p.add_argument("--yaw", type=float, default=20.0)
    p.add_argument("--degraded", action="store_true", help="also run with shifting disabled")
    args = p.parse_args(argv)
    world = make_world(WorldConfig())
    odo, opt = [], []
    for seed in args.seeds:
        seq = revisit_sequence(args.yaw, 0.0, seed, world=world)
        _, s = run_and_summarize(seq)
        odo.append(s.rmse_odometry_m)
        opt.append(s.rmse_optimized_m)
        line = (f"seed {seed}: rmse odometry {s.rmse_odometry_m:.3f} m, optimised {s.rmse_optimized_m:.3f} m, "
                f"ratio {s.rmse_ratio:.3f}, max gap {s.max_gap_m:.1f} m")
        if args.degraded:
            _, d = run_and_summarize(seq, degraded_config())
            line += f", max gap without shifting {d.max_gap_m:.1f} m"
        print(line, flush=True)
    ratio = math.sqrt(np.mean(np.square(opt))) / math.sqrt(np.mean(np.square(odo)))
    print(f"pooled ratio {ratio:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
