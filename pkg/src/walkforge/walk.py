"""Event-driven simulation of the variable-speed walk.

The walk holds at x for an Exponential time with rate mu_x (the sum of
the four incident conductances) and then jumps to a neighbor chosen with
probability proportional to the shared edge's conductance. Simulation is
exact: no time discretization anywhere, so downstream statistics carry
no discretization bias.

Reproducibility contract: walker i of a batch draws from the Philox
substream keyed (master_seed, walker-domain | i); within a path the
draw order is holding time first, direction second. Results are
bit-identical across runs, thread counts, and walker orderings.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from walkforge import _kernels
from walkforge.environment import CalibrationMissingError, Environment, GUARD
from walkforge.rng import RngStream, DOMAIN_WALKERS, walker_stream


@dataclass
class PathRecord:
    """One realized trajectory: piecewise-constant, cadlag.

    positions[k] is the location right after jump_times[k]; between
    jumps the path sits still. truncated marks a run aborted at the
    coordinate guard band (partial but valid up to its last event).
    """

    start: tuple
    jump_times: np.ndarray
    positions: np.ndarray
    horizon: float
    truncated: bool = False

    def __len__(self):
        return len(self.jump_times)


def validate_path(path: PathRecord) -> None:
    """Raise AssertionError unless the record satisfies its invariants."""
    t = path.jump_times
    p = path.positions
    assert t.ndim == 1 and p.shape == (len(t), 2)
    assert np.all(np.diff(t) > 0), "jump times not strictly increasing"
    if len(t):
        assert t[0] > 0 and t[-1] <= path.horizon
        steps = np.abs(np.diff(p, axis=0, prepend=[[*path.start]]))
        assert np.all(steps.sum(axis=1) == 1), "non-unit step"


@lru_cache(maxsize=128)
def _pack(env: Environment, n: int):
    """Packed level tables for the jitted kernels, levels 1..n of env:
    geo rows (a, a', b, beta, ox, oy), vals rows (eta, K)."""
    sch = env.schedule
    if not 0 <= n <= env.level:
        raise IndexError(f"level {n} outside 0..{env.level}")
    geo = np.empty((n, 6), dtype=np.int64)
    vals = np.empty((n, 2), dtype=np.float64)
    for k in range(1, n + 1):
        K = sch.K_at(k)
        if K is None:
            raise CalibrationMissingError(
                f"simulation at level {n} needs K_{k}, which is unset")
        ox, oy = env.offset_at(k)
        geo[k - 1] = (sch.a_at(k), sch.half_a(k), sch.b_at(k),
                      sch.beta_at(k), ox, oy)
        vals[k - 1] = (sch.eta_at(k), K)
    return geo, vals


def simulate(env: Environment, n: int, start, horizon: float,
             rng: RngStream) -> PathRecord:
    """Run one walk from start until the horizon. Deterministic in rng."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    x0, y0 = int(start[0]), int(start[1])
    if abs(x0) > GUARD or abs(y0) > GUARD:
        raise ValueError("start outside the +-2^62 guard band")
    geo, vals = _pack(env, n)
    gen = rng.generator()
    ts, xs, ys, truncated = _kernels.walk_kernel(
        gen, x0, y0, float(horizon), geo, vals)
    return PathRecord(start=(x0, y0), jump_times=ts,
                      positions=np.stack([xs, ys], axis=1),
                      horizon=float(horizon), truncated=truncated)


def position_at(path: PathRecord, t: float):
    """Cadlag evaluation: the position after the last jump at or before t."""
    if not 0 <= t <= path.horizon:
        raise ValueError(f"t = {t} outside [0, {path.horizon}]")
    idx = np.searchsorted(path.jump_times, t, side="right")
    if idx == 0:
        return path.start
    return (int(path.positions[idx - 1, 0]), int(path.positions[idx - 1, 1]))


def positions_at(path: PathRecord, ts):
    """Vectorized cadlag evaluation; returns an (m, 2) int64 array."""
    ts = np.asarray(ts, dtype=np.float64)
    if ts.size and (ts.min() < 0 or ts.max() > path.horizon):
        raise ValueError("query times outside [0, horizon]")
    idx = np.searchsorted(path.jump_times, ts, side="right")
    full = np.concatenate([np.array([path.start], dtype=np.int64),
                           path.positions.astype(np.int64, copy=False)])
    return full[idx]


def rescale(path: PathRecord, a: float, grid):
    """Diffusive rescaling: value at grid time t is position(a^2 t)/a."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size and path.horizon < a * a * grid.max():
        raise ValueError("horizon too short for the requested grid")
    return positions_at(path, a * a * grid) / a


def round_to_lattice(v):
    """Componentwise nearest lattice point; half-integers round up."""
    return np.floor(np.asarray(v, dtype=np.float64) + 0.5).astype(np.int64)


def batch_simulate(env: Environment, n: int, starts, horizon: float,
                   count: int, master_seed: int, threads: int | None = None,
                   walker_offset: int = 0):
    """count independent walks; walker i fully determined by
    (master_seed, walker_offset + i) regardless of execution order or
    thread count. Pass disjoint offset ranges to draw several mutually
    independent ensembles from one master seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    start_list = _broadcast_starts(starts, count)
    _pack(env, n)  # fail fast on unset K before spawning workers

    def one(i: int) -> PathRecord:
        return simulate(env, n, start_list[i], horizon,
                        RngStream(master_seed, DOMAIN_WALKERS
                                  | (walker_offset + i)))

    if threads is None or threads <= 1 or count == 1:
        return [one(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(count)))


def sample_positions(env: Environment, n: int, start, times, count: int,
                     master_seed: int, threads: int | None = None,
                     walker_offset: int = 0):
    """Ensemble marginals without storing paths.

    Returns an int64 array of shape (count, len(times), 2): the position
    of walker i at each probe time. Walker i's draws are identical to
    batch_simulate's walker i at the same offset, so both views of the
    same seed agree.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d sequence")
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be nonnegative and increasing")
    x0, y0 = int(start[0]), int(start[1])
    geo, vals = _pack(env, n)
    out = np.empty((count, len(times), 2), dtype=np.int64)

    def one(i: int) -> None:
        gen = walker_stream(master_seed, walker_offset + i)
        out[i] = _kernels.marginals_kernel(gen, x0, y0, times, geo, vals)

    if threads is None or threads <= 1 or count == 1:
        for i in range(count):
            one(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(count)))
    return out


def _broadcast_starts(starts, count: int):
    first = starts[0] if len(starts) else None
    if np.isscalar(first) or isinstance(first, (int, np.integer)):
        return [tuple(starts)] * count  # one point for everyone
    if len(starts) != count:
        raise ValueError(f"need {count} starts, got {len(starts)}")
    return [tuple(s) for s in starts]


def path_to_csv(path: PathRecord, file) -> None:
    """Write jump events as "t,x,y" rows, starting with the t=0 state."""
    with open(file, "w") as fh:
        fh.write("t,x,y\n")
        fh.write(f"0.0,{path.start[0]},{path.start[1]}\n")
        for t, (x, y) in zip(path.jump_times, path.positions):
            fh.write(f"{float(t)!r},{x},{y}\n")


def ensemble_to_npz(paths, file) -> None:
    """Columnar binary dump of an ensemble (concatenated event arrays
    plus per-path lengths); loadable with numpy alone."""
    lengths = np.array([len(p) for p in paths], dtype=np.int64)
    np.savez_compressed(
        file,
        lengths=lengths,
        starts=np.array([p.start for p in paths], dtype=np.int64),
        horizons=np.array([p.horizon for p in paths]),
        truncated=np.array([p.truncated for p in paths]),
        times=(np.concatenate([p.jump_times for p in paths])
               if len(paths) else np.empty(0)),
        positions=(np.concatenate([p.positions for p in paths])
                   if len(paths) else np.empty((0, 2), dtype=np.int64)),
    )


def ensemble_from_npz(file):
    """Inverse of ensemble_to_npz."""
    dat = np.load(file)
    out = []
    stop = np.cumsum(dat["lengths"])
    start = stop - dat["lengths"]
    for i in range(len(dat["lengths"])):
        sl = slice(start[i], stop[i])
        out.append(PathRecord(start=tuple(dat["starts"][i]),
                              jump_times=dat["times"][sl],
                              positions=dat["positions"][sl],
                              horizon=float(dat["horizons"][i]),
                              truncated=bool(dat["truncated"][i])))
    return out
