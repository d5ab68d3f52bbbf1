"""Splitting a walk's time into obstacle-avoiding stretches and the rest.

At level n the plane splits, by folded sup-distance d from the nearest
tile center, into an inner region (d <= 2 beta_n) and a far region
(d > 4 beta_n). A "free stretch" begins, during a far-to-inner transit,
at the first moment the position is congruent to the previous stretch's
endpoint modulo the level-(n-1) period a_{n-1}, and runs until the next
inner-region entry. Everywhere a stretch goes, the incident edges carry
level-(n-1) conductances (the level-n obstacle sits within beta_n + b_n
of a center, well inside the inner region), and the congruence makes
consecutive stretches see the same coarser environment, so the
concatenation of the stretches, run in its own clock, has the law of a
level-(n-1) walk. The module computes the stretch boundaries, the two
clocks splitting total time, the additive split of the position process,
the time-changed components, and statistical experiments built on them.

Conventions: both clocks and both components are computed from their own
telescoping sums over the respective interval families, never as "total
minus the other", so additivity checks are genuine cross-checks.
Position arithmetic stays in int64 end to end; only clock values are
floating point. A stretch pending at the horizon is included in the
clocks up to the horizon but dropped (and counted) wherever completed
increments are required.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from walkforge import _kernels
from walkforge.environment import Environment, region_codes
from walkforge.rng import RngStream, DOMAIN_WALKERS
from walkforge.schedule import schedule_hash
from walkforge.stats import two_sample_ks
from walkforge.walk import (
    PathRecord,
    positions_at,
    sample_positions,
    simulate,
)


@dataclass(frozen=True)
class ExcursionDecomposition:
    """Stretch boundaries of one path at one level.

    Event index 0 is the start; index i >= 1 is the path's jump i-1.
    departures/arrivals mark the far-region visits and the inner-region
    entries ending them; splice_starts/splice_ends mark the free
    stretches. A -1 in arrivals or splice_ends means the horizon cut
    that interval short. All four are int64 event-index arrays;
    departures/arrivals are parallel, as are splice_starts/splice_ends.
    """

    path: PathRecord
    n: int
    modulus: int
    event_times: np.ndarray
    event_sites: np.ndarray
    departures: np.ndarray
    arrivals: np.ndarray
    splice_starts: np.ndarray
    splice_ends: np.ndarray

    @property
    def pending_splice(self) -> bool:
        return (len(self.splice_ends) > 0
                and self.splice_ends[-1] == -1)

    @property
    def pending_transit(self) -> bool:
        return len(self.arrivals) > 0 and self.arrivals[-1] == -1

    @cached_property
    def splice_start_times(self) -> np.ndarray:
        return self.event_times[self.splice_starts]

    @cached_property
    def splice_end_times(self) -> np.ndarray:
        """Stretch end times; a pending stretch reads +inf (so min(., t)
        clamps drop out of clock sums naturally)."""
        out = np.where(self.splice_ends >= 0,
                       self.event_times[self.splice_ends], np.inf)
        return out

    @cached_property
    def stretches(self) -> np.ndarray:
        """(k, 2) float array of stretch intervals clipped to the
        horizon; row k is [start, end]."""
        return np.stack([self.splice_start_times,
                         np.minimum(self.splice_end_times,
                                    self.path.horizon)], axis=1)

    def clock_pair(self, t):
        """(time inside stretches, time outside) up to t, each from its
        own telescoping sum. Vectorized over t."""
        t = np.asarray(t, dtype=np.float64)
        if t.size and (t.min() < 0 or t.max() > self.path.horizon):
            raise ValueError("query times outside [0, horizon]")
        v = self.splice_start_times
        w = self.splice_end_times
        tt = t[..., None]
        first = (np.minimum(w, tt) - np.minimum(v, tt)).sum(axis=-1)
        starts = np.concatenate([[0.0], self.event_times[
            self.splice_ends[self.splice_ends >= 0]]])
        ends = v if self.pending_splice else np.concatenate([v, [np.inf]])
        second = (np.minimum(ends, tt) - np.minimum(starts, tt)).sum(axis=-1)
        if t.ndim == 0:
            return float(first), float(second)
        return first, second

    def component_positions(self, t):
        """(inside-component, outside-component) positions at time t,
        each from its own telescoping sum over event sites; int64 exact.
        Vectorized: t of shape s gives a pair of (s, 2) arrays."""
        t = np.asarray(t, dtype=np.float64)
        scalar = t.ndim == 0
        tq = np.atleast_1d(t).astype(np.float64)
        if tq.size and (tq.min() < 0 or tq.max() > self.path.horizon):
            raise ValueError("query times outside [0, horizon]")
        start = np.array(self.path.start, dtype=np.int64)
        v = self.splice_start_times
        w = self.splice_end_times
        starts2 = np.concatenate([[0.0], self.event_times[
            self.splice_ends[self.splice_ends >= 0]]])
        ends2 = v if self.pending_splice else np.concatenate([v, [np.inf]])

        def telescoped(lo, hi):
            # clamp both interval ends to each query time, evaluate the
            # path there, and sum the increments; one searchsorted pass
            a = np.minimum(lo, tq[:, None])
            b = np.minimum(hi, tq[:, None])
            if a.size == 0:
                return np.broadcast_to(start, (len(tq), 2)).copy()
            pa = positions_at(self.path, a.ravel()).reshape(*a.shape, 2)
            pb = positions_at(self.path, b.ravel()).reshape(*b.shape, 2)
            return start + (pb - pa).sum(axis=1)

        first = telescoped(v, w)
        second = telescoped(starts2, ends2)
        if scalar:
            return first[0], second[0]
        return first, second


class UnsupportedLevelError(ValueError):
    """The decomposition needs a coarser period below the given level."""


def compute_stopping_times(path: PathRecord, env: Environment,
                           n: int) -> ExcursionDecomposition:
    """Scan a path's events and mark its level-n stretch boundaries.

    The scan is a three-phase state machine over events: wait for a
    far-region visit, then watch the transit (a closed interval, so the
    departure and arrival events themselves are eligible) for a position
    congruent to the anchor mod a_{n-1}, then ride to the next
    inner-region entry, which both ends the stretch and becomes the new
    anchor. The anchor starts at the start position.
    """
    if n == 0:
        raise UnsupportedLevelError(
            "level 0 has no coarser period to splice against")
    if not 1 <= n <= env.level:
        raise IndexError(f"level {n} outside 1..{env.level}")
    modulus = env.schedule.a_at(n - 1)
    ev_times = np.concatenate([[0.0], path.jump_times])
    ev_sites = np.concatenate([
        np.array([path.start], dtype=np.int64),
        path.positions.astype(np.int64, copy=False)])
    codes = region_codes(env, n, ev_sites)
    xm = ev_sites[:, 0] % modulus
    ym = ev_sites[:, 1] % modulus
    d, r, v, t = _kernels.stopping_scan(
        codes == 1, codes == 2, xm, ym, int(xm[0]), int(ym[0]))
    return ExcursionDecomposition(
        path=path, n=n, modulus=modulus,
        event_times=ev_times, event_sites=ev_sites,
        departures=d, arrivals=r, splice_starts=v, splice_ends=t)


def validate_decomposition(dec: ExcursionDecomposition,
                           env: Environment) -> None:
    """Raise AssertionError unless the marks satisfy their invariants."""
    d, r = dec.departures, dec.arrivals
    v, w = dec.splice_starts, dec.splice_ends
    assert len(d) == len(r) and len(v) == len(w)
    if len(r) > 1:
        assert np.all(r[:-1] >= 0), "pending arrival not last"
    if len(w) > 1:
        assert np.all(w[:-1] >= 0), "pending stretch not last"
    seq = []
    for k in range(len(d)):
        seq.append(d[k])
        if r[k] >= 0:
            seq.append(r[k])
    assert np.all(np.diff(seq) >= 0), "transits out of order"
    # stretch intervals disjoint and increasing
    last = len(dec.event_times) - 1
    flat = []
    for k in range(len(v)):
        flat.append(v[k])
        flat.append(w[k] if w[k] >= 0 else last)
    assert np.all(np.diff(flat) >= 0), "stretches overlap"
    codes = region_codes(env, dec.n, dec.event_sites)
    assert np.all(codes[d] == 2), "departure not in the far region"
    done = r[r >= 0]
    assert np.all(codes[done] == 1), "arrival not in the inner region"
    ends = w[w >= 0]
    assert np.all(codes[ends] == 1), "stretch end not in the inner region"
    for k in range(len(v)):
        hi = int(w[k]) if w[k] >= 0 else last + 1
        assert not np.any(codes[int(v[k]):hi] == 1), \
            "stretch enters the inner region before its closing event"
    # every stretch start is congruent to the previous stretch end
    anchor = dec.event_sites[0] % dec.modulus
    for k in range(len(v)):
        site = dec.event_sites[v[k]] % dec.modulus
        assert np.array_equal(site, anchor), "splice congruence broken"
        if w[k] >= 0:
            anchor = dec.event_sites[w[k]] % dec.modulus


@dataclass(frozen=True)
class SplitComponents:
    """The two time-changed components of one decomposed path.

    first: the free stretches concatenated in their own clock; its law
    is the level-(n-1) walk. second: everything else in its clock. Both
    are genuine PathRecords (unit steps, cadlag), so the walk module's
    evaluation, validation, and export all apply; querying past a
    component's horizon raises the usual out-of-domain error.
    """

    decomposition: ExcursionDecomposition
    first: PathRecord
    second: PathRecord

    @property
    def clock1_total(self) -> float:
        return self.first.horizon

    @property
    def clock2_total(self) -> float:
        return self.second.horizon


def split_and_clock(path: PathRecord,
                    dec: ExcursionDecomposition) -> SplitComponents:
    """Build both time-changed components as PathRecords."""
    if dec.path is not path:
        raise ValueError("decomposition does not belong to this path")
    last = len(dec.event_times) - 1
    v, w = dec.splice_starts, dec.splice_ends
    first = _assemble(dec, v, np.where(w >= 0, w, last))
    done = w[w >= 0]
    starts2 = np.concatenate([[0], done])
    if dec.pending_splice:
        ends2 = v
    else:
        ends2 = np.concatenate([v, [last]])
    second = _assemble(dec, starts2, ends2)
    return SplitComponents(decomposition=dec, first=first, second=second)


def _assemble(dec: ExcursionDecomposition, starts, ends) -> PathRecord:
    """Concatenate the event stretches [starts[k], ends[k]] (event
    indices, closed) into one path running in its own clock. The last
    stretch may be horizon-clipped: its end index is then simply the
    last event, and the clip adds the tail time without events."""
    times = dec.event_times
    sites = dec.event_sites
    horizon = dec.path.horizon
    clipped = _clipped(dec, starts, ends)
    t_parts = []
    p_parts = []
    clock = 0.0
    base = np.array(dec.path.start, dtype=np.int64)
    for k in range(len(starts)):
        i, j = int(starts[k]), int(ends[k])
        if j > i:
            # associate as clock + (t - t_i), matching the horizon
            # accumulator below, so interval-final jumps never round
            # past the final clock
            t_parts.append(clock + (times[i + 1:j + 1] - times[i]))
            p_parts.append(base + (sites[i + 1:j + 1] - sites[i]))
        end_time = times[j]
        if k == len(starts) - 1 and clipped:
            end_time = horizon
        clock += end_time - times[i]
        base = base + sites[j] - sites[i]
    if t_parts:
        jt = np.concatenate(t_parts)
        pp = np.concatenate(p_parts)
    else:
        jt = np.empty(0, dtype=np.float64)
        pp = np.empty((0, 2), dtype=np.int64)
    return PathRecord(start=dec.path.start, jump_times=jt, positions=pp,
                      horizon=clock, truncated=dec.path.truncated)


def _clipped(dec: ExcursionDecomposition, starts, ends) -> bool:
    # the final interval reaches the horizon iff it is a pending
    # stretch, or the complement family when no stretch is pending
    if len(starts) == 0:
        return False
    if starts is dec.splice_starts:
        return dec.pending_splice
    return not dec.pending_splice


@dataclass(frozen=True)
class ExcursionIncrements:
    """Displacements across the completed gaps between stretches.

    moves[k] is the position change from the end of stretch k (the
    start, for k = 0) to the start of stretch k+1; peaks[k] is the
    largest Euclidean displacement from the gap's starting position
    anywhere during the closed gap. dropped counts gaps the horizon cut
    short (0 or 1).
    """

    moves: np.ndarray
    peaks: np.ndarray
    dropped: int

    def __len__(self):
        return len(self.moves)


def excursion_increments(path: PathRecord,
                         dec: ExcursionDecomposition) -> ExcursionIncrements:
    if dec.path is not path:
        raise ValueError("decomposition does not belong to this path")
    v, w = dec.splice_starts, dec.splice_ends
    done = w[w >= 0]
    gap_starts = np.concatenate([[0], done])
    m = min(len(gap_starts), len(v))
    moves = np.empty((m, 2), dtype=np.int64)
    peaks = np.empty(m, dtype=np.float64)
    sites = dec.event_sites
    for k in range(m):
        i, j = int(gap_starts[k]), int(v[k])
        moves[k] = sites[j] - sites[i]
        d = (sites[i:j + 1] - sites[i]).astype(np.float64)
        peaks[k] = float(np.sqrt((d * d).sum(axis=1).max()))
    dropped = 0 if dec.pending_splice else 1
    return ExcursionIncrements(moves=moves, peaks=peaks, dropped=dropped)


# ---------------------------------------------------------------------------
# experiments


def law_equality_experiment(env: Environment, n: int, samples: int,
                            horizon: float, seed: int,
                            times=(15.0, 40.0), start=(0, 0),
                            threads=None) -> dict:
    """Marginal comparison between the first time-changed component of
    level-n walks and directly simulated level-(n-1) walks.

    Each of `samples` level-n paths is decomposed; its first component
    is read at the probe times, in the component's own clock. Paths
    whose stretch clock never reaches max(times) are dropped and
    counted. The comparator ensemble is level-(n-1) marginals from the
    same start, drawn from disjoint walker streams of the same master
    seed. Two-sample KS per probe time per coordinate; the two-sample
    form needs no lattice smoothing since both sides share the lattice.
    """
    times = np.asarray(sorted(times), dtype=np.float64)
    kept = []
    dropped = 0
    clock_totals = np.empty(samples)
    for i in range(samples):
        # one path at a time; walker i's stream matches batch_simulate's
        p = simulate(env, n, start, horizon,
                     RngStream(seed, DOMAIN_WALKERS | i))
        dec = compute_stopping_times(p, env, n)
        comp = split_and_clock(p, dec)
        clock_totals[i] = comp.clock1_total
        if comp.clock1_total < times[-1]:
            dropped += 1
            continue
        kept.append(positions_at(comp.first, times))
    if not kept:
        raise RuntimeError("every sample was dropped; horizon too short")
    spliced = np.array(kept)  # (kept, len(times), 2)
    direct = sample_positions(env, n - 1, start, times, samples,
                              master_seed=seed, threads=threads,
                              walker_offset=samples)
    tests = []
    min_p = 1.0
    for k, t in enumerate(times):
        for c in range(2):
            rep = two_sample_ks(spliced[:, k, c], direct[:, k, c])
            tests.append({"time": float(t), "coordinate": c,
                          "statistic": rep.value, "p_value": rep.p_value,
                          "sizes": list(rep.sample_sizes)})
            min_p = min(min_p, rep.p_value)
    return {
        "kind": "law-equality",
        "level": n,
        "samples": samples,
        "kept": len(kept),
        "dropped": dropped,
        "times": [float(t) for t in times],
        "start": [int(start[0]), int(start[1])],
        "horizon": float(horizon),
        "seed": seed,
        "schedule_id": schedule_hash(env.schedule),
        "stretch_clock_quantiles": {
            "q05": float(np.quantile(clock_totals, 0.05)),
            "q50": float(np.quantile(clock_totals, 0.50)),
            "q95": float(np.quantile(clock_totals, 0.95)),
        },
        "tests": tests,
        "min_p_value": min_p,
        "rejected_at_1pct": min_p < 0.01,
    }


def smallness_experiment(schedule, n: int, u: float, samples: int,
                         seed: int, deltas=None, threads=None,
                         resample_offsets: bool = True) -> dict:
    """Empirical law of (outside-clock fraction, outside-component sup)
    at time u, over a delta grid.

    For each replicate the tile offsets are drawn fresh (stream keyed by
    the master seed) and redrawn until the origin lies outside the inner
    region, i.e. its folded sup-distance from the nearest level-n center
    exceeds 2 beta_n; the number of redraws is reported. Estimates, per delta: P(sigma2_u <= delta u),
    P(sup_{s<=u} |X2_s| <= delta sqrt(u)), and the joint probability,
    with 99.7% binomial CIs. The first probability at delta = 1 is
    exactly 1 (the outside clock can never exceed total time), which is
    asserted rather than estimated.
    """
    from walkforge.environment import (
        sample_offsets, zero_offsets, region_membership)
    from walkforge.stats import _wilson

    if deltas is None:
        deltas = np.round(np.arange(0.05, 1.0001, 0.05), 4)
    deltas = np.asarray(deltas, dtype=np.float64)
    if np.any(deltas <= 0) or np.any(deltas > 1):
        raise ValueError("deltas must lie in (0, 1]")
    if u < schedule.a_at(n) ** 2:
        raise ValueError(
            f"u below the working floor a_{n}^2 = {schedule.a_at(n) ** 2}")
    frac = np.empty(samples)
    sup2 = np.empty(samples)
    resamples = 0
    start = (0, 0)
    probe = np.linspace(u / 256, u, 256)  # sup of X2 sampled on a grid
    for i in range(samples):
        if resample_offsets:
            z = 0
            while True:
                off = sample_offsets(schedule, seed + i * 1000003 + z)
                env = Environment(schedule, off)
                if region_membership(env, n, start).region != "gamma1":
                    break
                z += 1
                resamples += 1
        else:
            env = Environment(schedule, zero_offsets(schedule))
            if region_membership(env, n, start).region == "gamma1":
                raise ValueError("origin starts inside the inner region")
        p = simulate(env, n, start, u, RngStream(seed, DOMAIN_WALKERS | i))
        dec = compute_stopping_times(p, env, n)
        _, s2 = dec.clock_pair(u)
        frac[i] = s2 / u
        _, x2 = dec.component_positions(probe)
        sup2[i] = np.sqrt((x2.astype(np.float64) ** 2).sum(axis=1).max())
    sup2 /= np.sqrt(u)
    rows = []
    for d in deltas:
        c_hit = int((frac <= d).sum())
        s_hit = int((sup2 <= d).sum())
        j_hit = int(((frac <= d) & (sup2 <= d)).sum())
        rows.append({
            "delta": float(d),
            "clock_probability": c_hit / samples,
            "clock_ci": list(_wilson(c_hit, samples)),
            "sup_probability": s_hit / samples,
            "sup_ci": list(_wilson(s_hit, samples)),
            "joint_probability": j_hit / samples,
            "joint_ci": list(_wilson(j_hit, samples)),
        })
    return {
        "kind": "smallness",
        "level": n,
        "u": float(u),
        "samples": samples,
        "seed": seed,
        "schedule_id": schedule_hash(schedule),
        "offset_resamples": resamples,
        "resample_offsets": resample_offsets,
        "sup_grid_points": len(probe),
        "rows": rows,
        "clock_probability_at_one": float((frac <= 1.0).mean()),
    }


def covariance_decay_experiment(env: Environment, n: int, samples: int,
                                horizon: float, seed: int, maxlag: int = 8,
                                start=(0, 0), threads=None) -> dict:
    """Lag structure of the between-stretch displacement sequence.

    Pools, across paths, the products of first-coordinate displacements
    at each lag, giving covariance estimates with standard errors, plus
    mean/variance of the displacements and of the gap peaks (reported
    against beta_n for dimensionless ratios). Fits log |cov| against lag
    on the lags whose estimate is positive; with fewer than 3 completed
    gaps per path on average, the report carries a warning suggesting a
    longer horizon.
    """
    beta = env.schedule.beta_at(n)
    series = []
    peaks_all = []
    for i in range(samples):
        p = simulate(env, n, start, horizon,
                     RngStream(seed, DOMAIN_WALKERS | i))
        dec = compute_stopping_times(p, env, n)
        inc = excursion_increments(p, dec)
        if len(inc):
            series.append(inc.moves[:, 0].astype(np.float64))
            peaks_all.append(inc.peaks)
    counts = np.array([len(s) for s in series]) if series else np.array([0])
    mean_gaps = float(counts.mean()) if len(series) else 0.0
    rows = []
    for lag in range(maxlag + 1):
        prods = []
        for s in series:
            if len(s) > lag:
                mu = s.mean()
                prods.append((s[:len(s) - lag] - mu) * (s[lag:] - mu))
        if prods:
            prods = np.concatenate(prods)
            c = float(prods.mean())
            se = float(prods.std(ddof=1) / np.sqrt(len(prods))) \
                if len(prods) > 1 else None
            rows.append({"lag": lag, "covariance": c, "se": se,
                         "pairs": int(len(prods)),
                         "normalized": c / beta ** 2})
    pos = [(r["lag"], r["covariance"]) for r in rows
           if r["lag"] > 0 and r["covariance"] > 0]
    if len(pos) >= 2:
        lags = np.array([p[0] for p in pos], dtype=np.float64)
        logs = np.log([p[1] for p in pos])
        rate = float(-np.polyfit(lags, logs, 1)[0])
    else:
        # all positive-lag estimates at or below zero: no decay to fit,
        # which is itself the expected picture for near-independent gaps
        rate = None
    moves = np.concatenate(series) if series else np.empty(0)
    peaks = np.concatenate(peaks_all) if peaks_all else np.empty(0)
    return {
        "kind": "covariance-decay",
        "level": n,
        "samples": samples,
        "horizon": float(horizon),
        "seed": seed,
        "schedule_id": schedule_hash(env.schedule),
        "beta": beta,
        "mean_gaps_per_path": mean_gaps,
        "warning": ("fewer than 3 completed gaps per path on average; "
                    "consider a longer horizon") if mean_gaps < 3 else None,
        "lags": rows,
        "fitted_decay_rate": rate,
        "move_mean": float(moves.mean()) if len(moves) else None,
        "move_variance": float(moves.var(ddof=1)) if len(moves) > 1 else None,
        "move_variance_normalized": (float(moves.var(ddof=1)) / beta ** 2
                                     if len(moves) > 1 else None),
        "peak_mean": float(peaks.mean()) if len(peaks) else None,
        "peak_mean_normalized": (float(peaks.mean()) / beta
                                 if len(peaks) else None),
        "peak_variance": float(peaks.var(ddof=1)) if len(peaks) > 1 else None,
    }


def obstacle_hitting_time(env: Environment, n: int, path: PathRecord):
    """First event time at which the path sits on an obstacle point of
    any level above n, or None if that never happens before the horizon.
    Until that time a level-n walk and a level-N walk driven by the same
    stream coincide (every conductance either walk can query is equal).
    """
    from walkforge.environment import in_obstacle

    if n >= env.level:
        raise IndexError(f"no levels above {n} in this environment")
    ev_times = np.concatenate([[0.0], path.jump_times])
    ev_sites = np.concatenate([
        np.array([path.start], dtype=np.int64),
        path.positions.astype(np.int64, copy=False)])
    hit = np.zeros(len(ev_sites), dtype=bool)
    for k in range(n + 1, env.level + 1):
        hit |= in_obstacle(env, k, ev_sites)
    idx = np.flatnonzero(hit)
    if len(idx) == 0:
        return None
    return float(ev_times[idx[0]])
