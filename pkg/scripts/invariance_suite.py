"""Gaussian-limit diagnostics on the homogeneous lattice.

Runs the marginal suite (means, variances, cross covariance, KS against
the centered normal) on an ensemble of walks, then the rescaled heat
kernel comparison against the factor-2 Gaussian sandwich. The free walk
has per coordinate variance 2t, so the diffusivity reference is 2.
"""

import argparse
import sys
import time

import numpy as np

from walkforge.environment import Environment, zero_offsets
from walkforge.schedule import roomy_desk_schedule
from walkforge.stats import fclt_report, heat_kernel_check
from walkforge.walk import sample_positions

DIFFUSIVITY = 2.0


def marginal_suite(env, times, count, seed):
    t0 = time.perf_counter()
    values = sample_positions(env, 0, (0, 0), times, count, seed)
    dt = time.perf_counter() - t0
    print(f"sampled {count} walks at {len(times)} probe times ({dt:.1f}s)")
    rep = fclt_report(values, times, diffusivity=DIFFUSIVITY,
                      cell=1.0, seed=seed)
    print(f"suite statistic {rep.value:.4f}  "
          f"sigma_hat {rep.sigma_hat:.4f} (reference {DIFFUSIVITY})")
    print(f"{'t':>8} {'coord':>5} {'mean':>9} {'var/2t':>8} {'ks_p':>8}")
    for m in rep.details["marginals"]:
        print(f"{m['time']:8.1f} {m['coordinate']:>5} "
              f"{m['mean']:9.4f} "
              f"{m['variance'] / (DIFFUSIVITY * m['time']):8.4f} "
              f"{m['ks_p_value']:8.4f}")
    return rep


def kernel_suite(env, a, times, samples, seed, smoothing):
    pairs = [((0.0, 0.0), (0.0, 0.0)),
             ((0.0, 0.0), (0.5, 0.0)),
             ((0.0, 0.0), (0.5, 0.5)),
             ((0.25, 0.0), (-0.25, 0.5))]
    t0 = time.perf_counter()
    rep = heat_kernel_check(env, 0, a, times, pairs, samples, seed=seed,
                            smoothing=smoothing)
    dt = time.perf_counter() - t0
    print(f"heat kernel: a={a}, {samples} walks per probe ({dt:.1f}s)")
    print(f"worst matched ratio {rep.value:.4f} "
          f"(sandwich bound 2), sigma_hat {rep.sigma_hat:.4f}")
    print(f"{'t':>6} {'x -> y':>28} {'hits':>6} {'ratio':>8} {'ci':>20}")
    for row in rep.details["probes"]:
        x, y = tuple(row["x"]), tuple(row["y"])
        lo, hi = row["matched_ratio_ci"]
        print(f"{row['t']:6.2f} {f'{x} -> {y}':>28} "
              f"{row['hits']:6d} {row['matched_ratio']:8.4f} "
              f"[{lo:8.4f}, {hi:8.4f}]")
    return rep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=20000,
                    help="ensemble size for the marginal suite")
    ap.add_argument("--times", type=float, nargs="+",
                    default=[25.0, 50.0, 100.0])
    ap.add_argument("--kernel-a", type=int, default=64,
                    help="rescaling side for the heat kernel check")
    ap.add_argument("--kernel-times", type=float, nargs="+",
                    default=[0.5, 1.0])
    ap.add_argument("--kernel-samples", type=int, default=24000)
    ap.add_argument("--smoothing", type=int, default=13,
                    help="occupation window side, odd (wider = more hits)")
    ap.add_argument("--seed", type=int, default=515151)
    args = ap.parse_args(argv)

    sch = roomy_desk_schedule(1).with_K(1, 7.5)
    env = Environment(sch, zero_offsets(sch))

    rep = marginal_suite(env, np.asarray(args.times), args.count, args.seed)
    print()
    krep = kernel_suite(env, args.kernel_a, args.kernel_times,
                        args.kernel_samples, args.seed + 1, args.smoothing)

    bad = [m for m in rep.details["marginals"] if m["ks_p_value"] < 0.01]
    ok = not bad and krep.value <= 2.0
    print()
    print("suite " + ("consistent with the Gaussian limit"
                      if ok else "FLAGS RAISED, inspect the tables above"))
    return 0 if ok else 3


if __name__ == "__main__":
    sys.exit(main())
