"""Calibrate bar strengths level by level and save the finished schedule.

Solves the fundamental square of each level for the bar strength K_n
that matches the obstacle-removed reference resistance, printing the
bisection trace as it goes. The calibrated schedule is written as JSON
so later runs can load it without repeating the solve.
"""

import argparse
import json
import sys
import time

from walkforge.environment import Environment, zero_offsets
from walkforge.network import calibrate_K
from walkforge.schedule import (
    ParameterSchedule,
    default_desk_schedule,
    roomy_desk_schedule,
    schedule_hash,
    validate,
)


def build_schedule(args) -> ParameterSchedule:
    if args.schedule is not None:
        with open(args.schedule) as fh:
            return ParameterSchedule.from_dict(json.load(fh))
    if args.family == "roomy":
        return roomy_desk_schedule(args.levels, b1=args.b1)
    return default_desk_schedule(args.levels)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", choices=("desk", "roomy"), default="desk",
                    help="built-in schedule family (default desk)")
    ap.add_argument("--levels", type=int, default=1,
                    help="number of obstacle levels (default 1)")
    ap.add_argument("--b1", type=int, default=2,
                    help="base gate half-width for the roomy family")
    ap.add_argument("--schedule", default=None,
                    help="load a schedule JSON instead of a built-in")
    ap.add_argument("--tolerance", type=float, default=1e-6,
                    help="relative bracket width to stop at")
    ap.add_argument("--out", default=None,
                    help="write the calibrated schedule JSON here")
    args = ap.parse_args(argv)

    sch = build_schedule(args)
    rep = validate(sch)
    if not rep.ok:
        print("schedule rejected:")
        for label, msg in rep.violations:
            print(f"  {label}: {msg}")
        return 2

    print(f"schedule {schedule_hash(sch)}: levels 1..{sch.levels}")
    for n in range(1, sch.levels + 1):
        a = sch.a_at(n)
        print(f"  level {n}: a={a} beta={sch.beta_at(n)} "
              f"b={sch.b_at(n)} eta={sch.eta_at(n)}")

    for n in range(1, sch.levels + 1):
        env = Environment(sch, zero_offsets(sch))
        t0 = time.perf_counter()
        res = calibrate_K(env, n, tolerance=args.tolerance)
        dt = time.perf_counter() - t0
        if not res.feasible:
            print(f"level {n}: no sign change in [1, 1e12]; residual curve:")
            for k, r in res.probes:
                print(f"  K={k:12.4e}  R(K)={r:.10f}  "
                      f"target {res.reference_resistance:.10f}")
            return 3
        lo, hi = res.bracket
        print(f"level {n}: K={res.K:.10f} in [{lo:.10f}, {hi:.10f}] "
              f"after {res.iterations} probes ({dt:.1f}s)")
        print(f"  reference R = {res.reference_resistance:.10f}, "
              f"calibrated R = {res.calibrated_resistance:.10f}, "
              f"relative residual {res.relative_residual:.3e}")
        if res.beta_square:
            bs = res.beta_square
            print(f"  beta-square diagnostic: with obstacle "
                  f"{bs['with_obstacle']:.6f}, removed "
                  f"{bs['obstacle_removed']:.6f}")
        sch = sch.with_K(n, res.K)

    if args.out is not None:
        with open(args.out, "w") as fh:
            json.dump(sch.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
