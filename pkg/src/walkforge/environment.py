"""Infinite-lattice conductance oracle.

An Environment pairs a validated schedule with one offset per level and
answers conductance queries for any nearest-neighbor edge at any level
n <= N. Nothing is materialized: the level-n value of an edge follows by
reducing the edge modulo the level's tile period, testing it against the
four symmetric images of an I-shaped obstacle (a high-conductance bar
whose two ends are sealed by low-conductance gate rows), and recursing
to level n-1 when the edge is off the level-n obstacle. Level 0 is the
homogeneous background, identically 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple

import numpy as np

from walkforge.rng import offsets_stream
from walkforge.schedule import ParameterSchedule, validate

GUARD = 1 << 62

GATE = "gate"
BAR = "bar"
UNIT = "unit"


class CalibrationMissingError(RuntimeError):
    """A bar edge was queried at a level whose K is still unset."""


Point = tuple  # (x, y) with signed 64-bit-safe integers


class Edge(NamedTuple):
    u: Point
    v: Point

    @property
    def horizontal(self) -> bool:
        return self.u[1] == self.v[1]


def make_edge(u, v) -> Edge:
    """Canonical nearest-neighbor edge: smaller endpoint first."""
    u = (int(u[0]), int(u[1]))
    v = (int(v[0]), int(v[1]))
    if abs(u[0] - v[0]) + abs(u[1] - v[1]) != 1:
        raise ValueError(f"{u} and {v} are not nearest neighbors")
    for p in (u, v):
        if abs(p[0]) > GUARD or abs(p[1]) > GUARD:
            raise ValueError("coordinate outside the +-2^62 guard band")
    return Edge(u, v) if u <= v else Edge(v, u)


@dataclass(frozen=True)
class Environment:
    """Immutable conductance oracle; safe to share across threads."""

    schedule: ParameterSchedule
    offsets: tuple  # ((ox_1, oy_1), ..., (ox_N, oy_N))
    level: int = -1  # -1 means: use every schedule level

    def __post_init__(self):
        report = validate(self.schedule)
        if not report.ok:
            raise ValueError(f"invalid schedule:\n{report}")
        if self.level == -1:
            object.__setattr__(self, "level", self.schedule.levels)
        if not 0 <= self.level <= self.schedule.levels:
            raise ValueError("active level outside 0..N")
        check_offsets(self.schedule, self.offsets)

    def offset_at(self, n: int) -> Point:
        if not 1 <= n <= self.schedule.levels:
            raise IndexError(f"level {n} outside 1..{self.schedule.levels}")
        return self.offsets[n - 1]


def check_offsets(schedule: ParameterSchedule, offsets) -> None:
    if len(offsets) != schedule.levels:
        raise ValueError(f"need {schedule.levels} offsets, got {len(offsets)}")
    prev = None
    for n in range(1, schedule.levels + 1):
        ox, oy = offsets[n - 1]
        a = schedule.a_at(n)
        if not (0 <= ox < a and 0 <= oy < a):
            raise ValueError(f"offset {n} outside [0, a_{n}-1]^2")
        if prev is not None:
            step = schedule.a_at(n - 1)
            if (ox - prev[0]) % step or (oy - prev[1]) % step:
                raise ValueError(
                    f"offset {n} not congruent to offset {n-1} mod a_{n-1}")
        prev = (ox, oy)


def sample_offsets(schedule: ParameterSchedule, seed: int) -> tuple:
    """Offsets drawn per the refinement rule: O_1 uniform on the level-1
    tile, each O_n uniform over residue-compatible points of its tile.
    Deterministic given seed."""
    gen = offsets_stream(seed)
    out = []
    o = np.array([0, 0], dtype=np.int64)
    prev_a = 1
    for n in range(1, schedule.levels + 1):
        a = schedule.a_at(n)
        z = gen.integers(0, a // prev_a, size=2)
        o = o + prev_a * z
        out.append((int(o[0]), int(o[1])))
        prev_a = a
    return tuple(out)


def zero_offsets(schedule: ParameterSchedule) -> tuple:
    return ((0, 0),) * schedule.levels


# ---------------------------------------------------------------------------
# level pattern: four-image classification (reference implementation)

def _reflect1(p, a):
    return (p[1], p[0])


def _reflect2(p, a):
    return (a - p[1], a - p[0])


def _reflect12(p, a):
    return (a - p[0], a - p[1])


_IMAGES = (lambda p, a: p, _reflect1, _reflect2, _reflect12)


def _map_edge(e: Edge, f, a) -> Edge:
    p, q = f(e.u, a), f(e.v, a)
    return Edge(p, q) if p <= q else Edge(q, p)


def _base_gate(e: Edge, ap: int, b: int, beta: int) -> bool:
    # vertical edges joining the two extra rows above and below the bar,
    # spanning b columns either side of the bar's column
    (x1, y1), (x2, y2) = e
    if x1 != x2:
        return False
    lo = min(y1, y2)
    if lo != ap + 10 * b and lo != ap - 10 * b - 1:
        return False
    return ap - beta - b <= x1 <= ap - beta + b


def _base_bar(e: Edge, ap: int, b: int, beta: int) -> bool:
    # edges of the bar segment itself: column ap - beta, 20b vertical edges
    (x1, y1), (x2, y2) = e
    if x1 != x2 or x1 != ap - beta:
        return False
    return ap - 10 * b <= min(y1, y2) and max(y1, y2) <= ap + 10 * b


def nu0_classify(schedule: ParameterSchedule, n: int, e: Edge) -> str:
    """Class of edge e in the untranslated level-n pattern: GATE, BAR or
    UNIT. Reduces e modulo the tile period and tests the four symmetric
    images of the base I-shape edge sets."""
    if not 1 <= n <= schedule.levels:
        raise IndexError(f"level {n} outside 1..{schedule.levels}")
    e = make_edge(e[0], e[1])
    a = schedule.a_at(n)
    ap, b, beta = schedule.half_a(n), schedule.b_at(n), schedule.beta_at(n)
    ux, uy = e.u
    sx, sy = ux % a, uy % a
    shifted = Edge((sx, sy), (sx + e.v[0] - ux, sy + e.v[1] - uy))
    # gate before bar: defensively ordered, though the sets are disjoint
    for f in _IMAGES:
        if _base_gate(_map_edge(shifted, f, a), ap, b, beta):
            return GATE
    for f in _IMAGES:
        if _base_bar(_map_edge(shifted, f, a), ap, b, beta):
            return BAR
    return UNIT


def conductance(env: Environment, e, n: int) -> float:
    """mu^n_e: the level-n conductance of edge e.

    Recursion: the translated level-n pattern wins where it is not 1,
    otherwise defer to level n-1; level 0 is identically 1. Querying a
    bar edge at a level with unset K raises CalibrationMissingError.
    """
    if not 0 <= n <= env.level:
        raise IndexError(f"level {n} outside 0..{env.level}")
    e = make_edge(e[0], e[1])
    sch = env.schedule
    for k in range(n, 0, -1):
        ox, oy = env.offset_at(k)
        moved = Edge((e.u[0] - ox, e.u[1] - oy), (e.v[0] - ox, e.v[1] - oy))
        cls = nu0_classify(sch, k, moved)
        if cls == GATE:
            return sch.eta_at(k)
        if cls == BAR:
            K = sch.K_at(k)
            if K is None:
                raise CalibrationMissingError(
                    f"bar edge {tuple(e)} needs K_{k}, which is unset")
            return K
    return 1.0


# ---------------------------------------------------------------------------
# vectorized closed form (same classification, array-shaped)

def classify_arrays(schedule: ParameterSchedule, n: int, ux, uy, horiz):
    """Vectorized level-n pattern class for edges given by their smaller
    endpoint (ux, uy) and orientation. Returns int8 codes 0=unit, 1=gate,
    2=bar. Union of the four images in closed form."""
    a = schedule.a_at(n)
    ap, b, beta = schedule.half_a(n), schedule.b_at(n), schedule.beta_at(n)
    T = 10 * b
    x = np.asarray(ux, dtype=np.int64) % a
    y = np.asarray(uy, dtype=np.int64) % a
    horiz = np.asarray(horiz, dtype=bool)
    along, across = np.where(horiz, x, y), np.where(horiz, y, x)
    # gate: edge sits on one of the two sealed rows, within b of a bar column
    on_row = (along == ap + T) | (along == ap - T - 1)
    near_col = (np.abs(np.abs(across - ap) - beta) <= b)
    gate = on_row & near_col
    # bar: edge lies on a bar column, strictly within the 20b-long segment
    on_col = np.abs(across - ap) == beta
    in_seg = (along >= ap - T) & (along <= ap + T - 1)
    bar = on_col & in_seg & ~gate
    return (gate.astype(np.int8) + 2 * bar.astype(np.int8))


def conductance_arrays(env: Environment, n: int, ux, uy, horiz):
    """Vectorized mu^n for edges (smaller endpoint + orientation)."""
    ux = np.asarray(ux, dtype=np.int64)
    uy = np.asarray(uy, dtype=np.int64)
    out = np.ones(np.broadcast(ux, uy).shape, dtype=np.float64)
    undecided = np.ones_like(out, dtype=bool)
    sch = env.schedule
    for k in range(n, 0, -1):
        if not undecided.any():
            break
        ox, oy = env.offset_at(k)
        codes = classify_arrays(sch, k, ux - ox, uy - oy, horiz)
        hit_gate = undecided & (codes == 1)
        hit_bar = undecided & (codes == 2)
        if hit_bar.any():
            K = sch.K_at(k)
            if K is None:
                raise CalibrationMissingError(f"K_{k} is unset")
            out[hit_bar] = K
        out[hit_gate] = sch.eta_at(k)
        undecided &= codes == 0
    return out


# ---------------------------------------------------------------------------
# regions and folding

class RegionInfo(NamedTuple):
    region: str  # "gamma1" | "gamma2" | "neither"
    in_obstacle: bool


def _center_distance(env: Environment, n: int, x, y):
    """Sup-norm distance from (x, y) to the nearest level-n tile center."""
    a = env.schedule.a_at(n)
    ap = env.schedule.half_a(n)
    ox, oy = env.offset_at(n)
    gx = (np.asarray(x, dtype=np.int64) - ox) % a - ap
    gy = (np.asarray(y, dtype=np.int64) - oy) % a - ap
    return np.maximum(np.abs(gx), np.abs(gy))


def region_codes(env: Environment, n: int, xs):
    """Vectorized region classification for an (m, 2) array of points:
    1 = inner region (distance <= 2 beta_n), 2 = far region (> 4 beta_n),
    0 = in between."""
    xs = np.asarray(xs, dtype=np.int64)
    d = _center_distance(env, n, xs[..., 0], xs[..., 1])
    beta = env.schedule.beta_at(n)
    out = np.zeros(d.shape, dtype=np.int8)
    out[d <= 2 * beta] = 1
    out[d > 4 * beta] = 2
    return out


def in_obstacle(env: Environment, n: int, xs):
    """Vectorized membership of points in the level-n obstacle point set
    (bar and gate points, all four images, translated and periodized)."""
    xs = np.asarray(xs, dtype=np.int64)
    sch = env.schedule
    a = sch.a_at(n)
    ap, b, beta = sch.half_a(n), sch.b_at(n), sch.beta_at(n)
    T = 10 * b
    ox, oy = env.offset_at(n)
    px = (xs[..., 0] - ox) % a
    py = (xs[..., 1] - oy) % a
    hit = np.zeros(px.shape, dtype=bool)
    for qx, qy in ((px, py), (py, px), (a - py, a - px), (a - px, a - py)):
        on_bar = (qx == ap - beta) & (np.abs(qy - ap) <= T)
        rows = ((qy == ap + T) | (qy == ap + T + 1)
                | (qy == ap - T) | (qy == ap - T - 1))
        on_gate = rows & (np.abs(qx - (ap - beta)) <= b)
        hit |= on_bar | on_gate
    return hit


def region_membership(env: Environment, n: int, x) -> RegionInfo:
    """Region of a single point plus obstacle membership."""
    if not 1 <= n <= env.level:
        raise IndexError(f"level {n} outside 1..{env.level}")
    p = np.array([[int(x[0]), int(x[1])]], dtype=np.int64)
    if np.abs(p).max() > GUARD:
        raise ValueError("coordinate outside the +-2^62 guard band")
    code = int(region_codes(env, n, p)[0])
    name = {0: "neither", 1: "gamma1", 2: "gamma2"}[code]
    return RegionInfo(name, bool(in_obstacle(env, n, p)[0]))


def fold_to_fundamental(env: Environment, n: int, x) -> Point:
    """Representative of x modulo the level-n tiling, centered on the tile
    of the offset: result - offset lies in [-a'_n, a'_n - 1]^2."""
    if not 1 <= n <= env.level:
        raise IndexError(f"level {n} outside 1..{env.level}")
    a = env.schedule.a_at(n)
    ap = env.schedule.half_a(n)
    ox, oy = env.offset_at(n)
    fx = (int(x[0]) - ox + ap) % a - ap + ox
    fy = (int(x[1]) - oy + ap) % a - ap + oy
    return (fx, fy)


# ---------------------------------------------------------------------------
# exhaustive materialization on one fundamental square (painting route)

def _ishape_point_sets(ap: int, b: int, beta: int):
    """The literal bar and gate point sets of the base (axis-aligned)
    I-shape, before reflection."""
    T = 10 * b
    bar_pts = {(ap - beta, y) for y in range(ap - T, ap + T + 1)}
    gate_pts = set()
    for xx in range(ap - beta - b, ap - beta + b + 1):
        for yy in (ap + T, ap + T + 1, ap - T, ap - T - 1):
            gate_pts.add((xx, yy))
    return bar_pts, gate_pts


def _edges_within(points: set, vertical_only: bool) -> set:
    """Edges with both endpoints in the set (optionally vertical only)."""
    out = set()
    for (x, y) in points:
        if (x, y + 1) in points:
            out.add(((x, y), (x, y + 1)))
        if not vertical_only and (x + 1, y) in points:
            out.add(((x, y), (x + 1, y)))
    return out


def _level_pattern_edges(schedule: ParameterSchedule, n: int):
    """All (gate_edges, bar_edges) of the level-n pattern within one tile,
    in untranslated pattern coordinates, via explicit point-set reflection.
    Asserts the four images and the two classes are pairwise disjoint."""
    a = schedule.a_at(n)
    ap, b, beta = schedule.half_a(n), schedule.b_at(n), schedule.beta_at(n)
    bar_pts, gate_pts = _ishape_point_sets(ap, b, beta)
    bar_base = _edges_within(bar_pts, vertical_only=False)
    gate_base = _edges_within(gate_pts, vertical_only=True)
    gates, bars = set(), set()
    for f in _IMAGES:
        g_img = {_canon(f(p, a), f(q, a)) for p, q in gate_base}
        b_img = {_canon(f(p, a), f(q, a)) for p, q in bar_base}
        assert not (gates & g_img) and not (bars & b_img), \
            "symmetric images overlap; schedule geometry too tight"
        gates |= g_img
        bars |= b_img
    assert not (gates & bars), "gate and bar edge sets intersect"
    return gates, bars


def _canon(p, q):
    return (p, q) if p <= q else (q, p)


def enumerate_fundamental(env: Environment, n: int) -> dict:
    """Materialize mu^n for every edge of the level-n window [0, a_n]^2.

    Built by painting obstacle edges level by level (lowest first, so
    higher levels overwrite), a construction independent of the
    classification route used by conductance(). Guard: a_n <= 4096.
    """
    if not 1 <= n <= env.level:
        raise IndexError(f"level {n} outside 1..{env.level}")
    sch = env.schedule
    A = sch.a_at(n)
    if A > 4096:
        raise ValueError(f"a_{n} = {A} exceeds the materialization guard 4096")

    # torus-resident values keyed by (x, y, horizontal) of the smaller endpoint
    paint = {}
    for k in range(1, n + 1):
        gates, bars = _level_pattern_edges(sch, k)
        eta = sch.eta_at(k)
        K = sch.K_at(k)
        if K is None:
            raise CalibrationMissingError(
                f"cannot materialize level {n}: K_{k} is unset")
        ox, oy = env.offset_at(k)
        ak = sch.a_at(k)
        copies = A // ak
        for edges, value in ((gates, eta), (bars, K)):
            for (p, q) in edges:
                horiz = p[1] == q[1]
                bx, by = (p[0] + ox) % A, (p[1] + oy) % A
                for i in range(copies):
                    for j in range(copies):
                        key = ((bx + i * ak) % A, (by + j * ak) % A, horiz)
                        paint[key] = value

    out = {}
    for x in range(A + 1):
        for y in range(A + 1):
            if x < A:
                key = (x % A, y % A, True)
                out[Edge((x, y), (x + 1, y))] = paint.get(key, 1.0)
            if y < A:
                key = (x % A, y % A, False)
                out[Edge((x, y), (x, y + 1))] = paint.get(key, 1.0)
    return out


def fundamental_to_csv(mapping: dict, path) -> None:
    """Write \"x1,y1,x2,y2,conductance\" rows, sorted for reproducibility."""
    with open(path, "w") as fh:
        fh.write("x1,y1,x2,y2,conductance\n")
        for e in sorted(mapping):
            (x1, y1), (x2, y2) = e
            fh.write(f"{x1},{y1},{x2},{y2},{mapping[e]!r}\n")
