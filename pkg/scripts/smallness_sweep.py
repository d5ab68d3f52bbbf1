"""Delta-profile of the outside component at and above the working scale.

For a grid of times u, estimates how much of the clock and of the path
the outside component claims by time u: P(outside clock <= delta u) and
P(outside sup <= delta sqrt(u)) over a delta grid, offsets redrawn per
replicate so the origin starts outside the inner region. At delta = 1
the clock probability is exactly 1 by construction; both curves are
nondecreasing in delta; and because the geometry is self-similar the
whole profile should barely move as u grows past the floor a_1^2. The
sweep prints the profile per u and the drift between the smallest and
largest u.
"""

import argparse
import sys
import time

from walkforge.decomposition import smallness_experiment
from walkforge.schedule import roomy_desk_schedule


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K1", type=float, default=7.5)
    ap.add_argument("--multipliers", type=float, nargs="+",
                    default=[1.0, 2.0, 4.0],
                    help="u values as multiples of the floor a_1^2")
    ap.add_argument("--samples", type=int, default=120)
    ap.add_argument("--deltas", type=float, nargs="+",
                    default=[0.05, 0.1, 0.2, 0.5, 1.0])
    ap.add_argument("--seed", type=int, default=7117)
    args = ap.parse_args(argv)

    sch = roomy_desk_schedule(1).with_K(1, args.K1)
    floor = float(sch.a_at(1)) ** 2
    print(f"floor a_1^2 = {floor:.0f}; {args.samples} replicates per u")

    profiles = []
    for j, mult in enumerate(args.multipliers):
        u = mult * floor
        t0 = time.perf_counter()
        out = smallness_experiment(sch, 1, u, args.samples,
                                   args.seed, deltas=args.deltas)
        dt = time.perf_counter() - t0
        profiles.append(out)
        print()
        print(f"u = {u:.0f} ({mult:g} x floor), "
              f"{out['offset_resamples']} offset redraws ({dt:.1f}s)")
        print(f"{'delta':>6} {'P(clock)':>9} {'P(sup)':>8} {'P(joint)':>9}")
        for row in out["rows"]:
            print(f"{row['delta']:6.2f} "
                  f"{row['clock_probability']:9.3f} "
                  f"{row['sup_probability']:8.3f} "
                  f"{row['joint_probability']:9.3f}")

    if len(profiles) > 1:
        first, last = profiles[0]["rows"], profiles[-1]["rows"]
        drift = max(abs(a["clock_probability"] - b["clock_probability"])
                    for a, b in zip(first, last))
        sdrift = max(abs(a["sup_probability"] - b["sup_probability"])
                     for a, b in zip(first, last))
        print()
        print(f"profile drift between extreme u values: "
              f"clock {drift:.3f}, sup {sdrift:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
