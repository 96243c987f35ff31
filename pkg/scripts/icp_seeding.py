"""Registration success with matcher-seeded vs identity ICP initialisation.

    python3 scripts/icp_seeding.py [--yaws 20 25 30 35 40] [--per-cell 10] [--seed 0]
"""

import argparse
import sys

from sonar_context.experiments import icp_seeding_study, seeding_rates


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--yaws", type=float, nargs="*", default=[20, 25, 30, 35, 40])
    p.add_argument("--per-cell", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-offset", type=float, default=1.0, help="translation offset bound, m")
    args = p.parse_args(argv)
    trials = icp_seeding_study(args.yaws, args.per_cell, args.seed, max_offset_m=args.max_offset)
    print("yaw_deg  n   seeded  identity")
    for yaw, r in seeding_rates(trials).items():
        print(f"{yaw:7.1f} {r['n']:3d}   {r['seeded']:.2f}    {r['identity']:.2f}")
    conv_s = sum(t.seeded_converged for t in trials)
    conv_i = sum(t.identity_converged for t in trials)
    print(f"converged (any pose): seeded {conv_s}/{len(trials)}, identity {conv_i}/{len(trials)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
