"""Finite resistor networks: potentials, resistances, hitting times.

The walk restricted to a finite window is a reversible chain whose
potential theory reduces to linear algebra on the weighted graph
Laplacian Q = D - A, where A holds the edge conductances mu_xy and D the
vertex strengths mu_x = sum_y mu_xy. This module carries the solver side
of the package: harmonic extension of boundary data, effective
resistance between vertex blocks, capacitary (equilibrium) measures,
Green functions of the killed chain, and expected hitting times for the
variable-speed convention (exponential holds of mean 1/mu_x, so E^x T
solves Q h = 1 off the target and the commute identity reads
E^{nu2} T_1 + E^{nu1} T_2 = r |V| with |V| the plain vertex count).

On top of the solvers sit the two bridges to the lattice model: a window
exporter that materializes an Environment restriction as a FiniteNetwork,
and the calibration routine that picks the bar conductance K_n so that
the level-n fundamental square has the same side-to-side effective
resistance as the square with the level-n obstacle removed.

All solves share one numeric path: symmetric scaling by row maxima (for
a Laplacian these are the diagonal entries), then either a direct sparse
LU below DIRECT_SOLVE_MAX unknowns or conjugate gradients above it (the
scaled system has unit diagonal, so plain CG on it is Jacobi
preconditioned CG on the original), followed by iterative refinement
until the backward error drops below RESIDUAL_TOL. Solves are
deterministic; independent solves may run concurrently since networks
are immutable.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, splu

from walkforge.environment import (
    GUARD,
    CalibrationMissingError,
    Environment,
    classify_arrays,
    conductance_arrays,
)
from walkforge.rng import test_stream

# switch point between sparse LU and Jacobi-preconditioned CG; high
# enough that a full desk fundamental square still factorizes directly
DIRECT_SOLVE_MAX = 200_000
RESIDUAL_TOL = 1e-12
EDGE_EXPORT_MAX = 1_000_000
GREEN_DENSE_MAX = 4_000

SOLVER_DESCRIPTION = (
    f"laplacian-dirichlet/rowmax-scaled/lu<={DIRECT_SOLVE_MAX}"
    f"/jacobi-cg-above/refine-to-{RESIDUAL_TOL:g}"
)


class SingularNetworkError(ValueError):
    """A Dirichlet system has a free component with no boundary contact."""

    def __init__(self, message: str, component=()):
        super().__init__(message)
        self.component = tuple(component)


class UnreachableTargetError(ValueError):
    """A hitting-time target cannot be reached from the start support."""


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class VertexMeasure:
    """Nonnegative weights on a declared support set."""

    weights: dict
    support: frozenset

    def __post_init__(self):
        object.__setattr__(self, "support", frozenset(self.support))
        for v, w in self.weights.items():
            if v not in self.support:
                raise ValueError(f"vertex {v!r} outside the declared support")
            if not (math.isfinite(w) and w >= 0):
                raise ValueError(f"weight {w!r} at {v!r} is not a"
                                 f" finite nonnegative real")

    @property
    def mass(self) -> float:
        return float(sum(self.weights.values()))

    @classmethod
    def point_mass(cls, vertex) -> "VertexMeasure":
        return cls({vertex: 1.0}, frozenset([vertex]))

    def normalized(self) -> "VertexMeasure":
        m = self.mass
        if m <= 0:
            raise ValueError("cannot normalize a zero measure")
        return VertexMeasure({v: w / m for v, w in self.weights.items()},
                             self.support)


@dataclass(frozen=True)
class FiniteNetwork:
    """Undirected graph with positive edge weights, immutable.

    edges holds one entry per unordered vertex pair; boundary is the
    marked subset (window perimeter for exported networks, empty
    otherwise). Every vertex must meet at least one edge so that the
    vertex strengths are strictly positive.
    """

    vertices: tuple
    edges: tuple  # ((u, v, weight), ...)
    boundary: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "boundary", frozenset(self.boundary))
        if not self.vertices:
            raise ValueError("network needs at least one vertex")
        known = set(self.vertices)
        if len(known) != len(self.vertices):
            raise ValueError("duplicate vertices")
        touched = set()
        seen_pairs = set()
        for u, v, w in self.edges:
            if u == v:
                raise ValueError(f"self-loop at {u!r}")
            if u not in known or v not in known:
                raise ValueError(f"edge ({u!r}, {v!r}) leaves the vertex set")
            if (u, v) in seen_pairs:
                raise ValueError(f"duplicate edge ({u!r}, {v!r})")
            seen_pairs.add((u, v))
            seen_pairs.add((v, u))
            if not (isinstance(w, (int, float)) and math.isfinite(w) and w > 0):
                raise ValueError(f"edge ({u!r}, {v!r}) weight {w!r} is not a"
                                 f" positive finite real")
            touched.add(u)
            touched.add(v)
        isolated = known - touched
        if isolated:
            raise ValueError(f"{len(isolated)} vertices have zero strength,"
                             f" e.g. {sorted(isolated)[:4]!r}")
        if not self.boundary <= known:
            raise ValueError("boundary contains unknown vertices")

    @classmethod
    def from_edges(cls, edges, boundary=()) -> "FiniteNetwork":
        """Build with the vertex set collected (sorted) from the edges."""
        verts = sorted({p for u, v, _ in edges for p in (u, v)})
        return cls(tuple(verts),
                   tuple((u, v, float(w)) for u, v, w in edges),
                   frozenset(boundary))

    @cached_property
    def index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def _edge_arrays(self):
        idx = self.index
        iu = np.fromiter((idx[u] for u, _, _ in self.edges),
                         dtype=np.int64, count=len(self.edges))
        iv = np.fromiter((idx[v] for _, v, _ in self.edges),
                         dtype=np.int64, count=len(self.edges))
        w = np.fromiter((w for _, _, w in self.edges),
                        dtype=np.float64, count=len(self.edges))
        return iu, iv, w

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Q = D - A as CSR; row sums vanish, diagonal holds mu_x."""
        n = len(self.vertices)
        iu, iv, w = self._edge_arrays
        rows = np.concatenate([iu, iv, iu, iv])
        cols = np.concatenate([iv, iu, iu, iv])
        data = np.concatenate([-w, -w, w, w])
        return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    @cached_property
    def strengths(self) -> np.ndarray:
        return self.laplacian.diagonal()

    @cached_property
    def adjacency(self) -> dict:
        out = {v: [] for v in self.vertices}
        for u, v, w in self.edges:
            out[u].append((v, w))
            out[v].append((u, w))
        return {v: tuple(nbrs) for v, nbrs in out.items()}

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def edge_count(self) -> int:
        return len(self.edges)


def network_to_csv(net: FiniteNetwork, path) -> None:
    """Edge list as CSV: endpoints JSON-encoded, boundary flags carried."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["u", "v", "weight", "u_boundary", "v_boundary"])
        for u, v, w in net.edges:
            out.writerow([_enc_vertex(u), _enc_vertex(v), repr(float(w)),
                          int(u in net.boundary), int(v in net.boundary)])


def network_from_csv(path) -> FiniteNetwork:
    edges = []
    boundary = set()
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or header[:3] != ["u", "v", "weight"]:
            raise ValueError(f"{path} is not a network edge-list CSV")
        for row in rows:
            u, v = _dec_vertex(row[0]), _dec_vertex(row[1])
            edges.append((u, v, float(row[2])))
            if int(row[3]):
                boundary.add(u)
            if int(row[4]):
                boundary.add(v)
    return FiniteNetwork.from_edges(edges, boundary)


def _enc_vertex(v) -> str:
    return json.dumps(list(v) if isinstance(v, tuple) else v)


def _dec_vertex(s: str):
    v = json.loads(s)
    return tuple(v) if isinstance(v, list) else v


# ---------------------------------------------------------------------------
# core Dirichlet solver

def _solve_spd(Q: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    """Solve the SPD system Q x = b to backward error RESIDUAL_TOL.

    Symmetric scaling by the diagonal (the row maxima of a Laplacian
    block) keeps the factorization stable across weights spanning eta
    to K; iterative refinement then pushes the residual down.
    """
    n = Q.shape[0]
    diag = Q.diagonal()
    if not np.all(diag > 0):
        raise SingularNetworkError("system has a nonpositive diagonal entry")
    d = 1.0 / np.sqrt(diag)
    Qs = Q.multiply(d[:, None]).multiply(d[None, :]).tocsc()
    bs = b * d
    if not np.any(bs):
        return np.zeros(n)
    anorm = float(np.abs(Qs).sum(axis=1).max())
    bnorm = float(np.max(np.abs(bs)))

    def backward_error(y, r):
        denom = anorm * float(np.max(np.abs(y))) + bnorm
        return float(np.max(np.abs(r))) / denom

    # refine toward machine precision; RESIDUAL_TOL is the hard floor
    target = 1e-15
    if n <= DIRECT_SOLVE_MAX:
        lu = splu(Qs)
        y = lu.solve(bs)
        correct = lu.solve
    else:
        # unit diagonal after scaling, so plain CG here is Jacobi CG
        y, _ = cg(Qs, bs, rtol=1e-13, atol=0.0)

        def correct(r):
            dy, _ = cg(Qs, r, rtol=1e-2, atol=0.0)
            return dy

    best, y_best = math.inf, y
    for _ in range(8):
        r = bs - Qs @ y
        be = backward_error(y, r)
        if be < best:
            best, y_best = be, y
        if be <= target or be > best:
            break
        y = y + correct(r)
    if best > RESIDUAL_TOL:
        raise ArithmeticError("solve stalled above the residual tolerance")
    return y_best * d


def _check_anchored(vertices, free_idx, Qff, Qfb) -> None:
    """Every connected component of the free subgraph must couple to at
    least one fixed vertex, else the Dirichlet system is singular."""
    ncomp, labels = connected_components(Qff, directed=False)
    touched = np.zeros(ncomp, dtype=bool)
    contact_rows = np.unique(Qfb.nonzero()[0])
    touched[labels[contact_rows]] = True
    if touched.all():
        return
    bad = int(np.flatnonzero(~touched)[0])
    members = [vertices[free_idx[i]] for i in np.flatnonzero(labels == bad)]
    shown = ", ".join(repr(v) for v in members[:8])
    more = f" and {len(members) - 8} more" if len(members) > 8 else ""
    raise SingularNetworkError(
        f"free component [{shown}{more}] has no boundary contact; the"
        f" Dirichlet system is singular", members)


def _extension_vector(net: FiniteNetwork, fixed_idx: np.ndarray,
                      fixed_vals: np.ndarray) -> np.ndarray:
    n = net.vertex_count
    out = np.zeros(n)
    out[fixed_idx] = fixed_vals
    free = np.setdiff1d(np.arange(n), fixed_idx)
    if free.size == 0:
        return out
    L = net.laplacian
    Qff = L[free][:, free]
    Qfb = L[free][:, fixed_idx]
    _check_anchored(net.vertices, free, Qff, Qfb)
    out[free] = _solve_spd(Qff, -(Qfb @ fixed_vals))
    return out


def _energy(net: FiniteNetwork, vec: np.ndarray) -> float:
    iu, iv, w = net._edge_arrays
    diff = vec[iu] - vec[iv]
    return float(np.sum(w * diff * diff))


# ---------------------------------------------------------------------------
# potentials and resistances

def harmonic_extension(net: FiniteNetwork, boundary: Mapping) -> dict:
    """Extend boundary data harmonically to every vertex.

    boundary maps a nonempty vertex subset to finite reals; the return
    maps every vertex to its potential, with the boundary reproduced
    exactly. Vertices declared nowhere get the unique solution of the
    interior balance equations.
    """
    if not boundary:
        raise ValueError("boundary data must be nonempty")
    idx = net.index
    items = []
    for v, val in boundary.items():
        if v not in idx:
            raise ValueError(f"boundary vertex {v!r} is not in the network")
        if not math.isfinite(val):
            raise ValueError(f"boundary value at {v!r} is not finite")
        items.append((idx[v], float(val)))
    items.sort()
    fixed_idx = np.array([i for i, _ in items], dtype=np.int64)
    fixed_vals = np.array([x for _, x in items])
    vec = _extension_vector(net, fixed_idx, fixed_vals)
    return {v: float(vec[i]) for i, v in enumerate(net.vertices)}


def dirichlet_energy(net: FiniteNetwork, potentials: Mapping) -> float:
    """E(h, h) = sum_e mu_e (dh_e)^2 over the network's edges."""
    idx = net.index
    vec = np.zeros(net.vertex_count)
    for v, val in potentials.items():
        vec[idx[v]] = val
    return _energy(net, vec)


def _check_blocks(net: FiniteNetwork, A1, A2):
    A1, A2 = frozenset(A1), frozenset(A2)
    if not A1 or not A2:
        raise ValueError("both vertex blocks must be nonempty")
    overlap = A1 & A2
    if overlap:
        raise ValueError(f"blocks overlap at {sorted(overlap)[:4]!r}")
    known = set(net.vertices)
    stray = (A1 | A2) - known
    if stray:
        raise ValueError(f"blocks contain unknown vertices"
                         f" {sorted(stray)[:4]!r}")
    return A1, A2


def effective_resistance(net: FiniteNetwork, A1, A2):
    """(r, potentials) between two disjoint vertex blocks.

    potentials solves the unit Dirichlet problem (0 on A1, 1 on A2) and
    r is the reciprocal of its Dirichlet energy.
    """
    A1, A2 = _check_blocks(net, A1, A2)
    idx = net.index
    fixed = sorted([(idx[v], 0.0) for v in A1] + [(idx[v], 1.0) for v in A2])
    vec = _extension_vector(net,
                            np.array([i for i, _ in fixed], dtype=np.int64),
                            np.array([x for _, x in fixed]))
    energy = _energy(net, vec)
    if energy <= 0:
        raise SingularNetworkError("no path joins the two blocks;"
                                   " the resistance is infinite")
    potentials = {v: float(vec[i]) for i, v in enumerate(net.vertices)}
    return 1.0 / energy, potentials


def capacitary_measure(net: FiniteNetwork, A1, A2):
    """(e12, nu1): equilibrium measure of A1 against A2 and its
    normalization by the effective resistance.

    e12 lives on A1, is entrywise nonnegative and has total mass 1/r;
    nu1 = r * e12 is the associated probability measure. e12(z) is the
    net current leaving z under the potential that is 1 on A1 and 0 on
    A2, i.e. the z entry of Q u restricted to A1.
    """
    A1, A2 = _check_blocks(net, A1, A2)
    idx = net.index
    fixed = sorted([(idx[v], 1.0) for v in A1] + [(idx[v], 0.0) for v in A2])
    vec = _extension_vector(net,
                            np.array([i for i, _ in fixed], dtype=np.int64),
                            np.array([x for _, x in fixed]))
    energy = _energy(net, vec)
    if energy <= 0:
        raise SingularNetworkError("no path joins the two blocks;"
                                   " the capacitary measure is degenerate")
    r = 1.0 / energy
    flux = net.laplacian @ vec
    weights = {}
    floor = -1e-9 * energy
    for v in sorted(A1, key=idx.get):
        f = float(flux[idx[v]])
        if f < floor:
            raise ArithmeticError(f"negative capacitary weight {f!r} at"
                                  f" {v!r}")
        weights[v] = max(f, 0.0)
    support = frozenset(A1)
    e12 = VertexMeasure(weights, support)
    nu1 = VertexMeasure({v: r * w for v, w in weights.items()}, support)
    return e12, nu1


# ---------------------------------------------------------------------------
# killed chain: Green function and hitting times

@dataclass(frozen=True)
class GreenFunction:
    """Dense Green matrix of the chain killed on a vertex set.

    matrix[i, j] = g(x_i, x_j) is the expected time the variable-speed
    chain started at x_i spends at x_j before the killed set; row sums
    are expected hitting times of the killed set.
    """

    vertices: tuple
    matrix: np.ndarray

    @cached_property
    def index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    def value(self, x, y) -> float:
        return float(self.matrix[self.index[x], self.index[y]])

    def hitting_time(self, x) -> float:
        return float(self.matrix[self.index[x]].sum())

    def hitting_times(self) -> dict:
        sums = self.matrix.sum(axis=1)
        return {v: float(sums[i]) for i, v in enumerate(self.vertices)}


def green_function(net: FiniteNetwork, killed) -> GreenFunction:
    """Green function of the chain killed on a nonempty vertex set."""
    killed = frozenset(killed)
    if not killed:
        raise ValueError("killed set must be nonempty")
    known = set(net.vertices)
    stray = killed - known
    if stray:
        raise ValueError(f"killed set contains unknown vertices"
                         f" {sorted(stray)[:4]!r}")
    kept = [v for v in net.vertices if v not in killed]
    if not kept:
        raise ValueError("every vertex is killed; nothing to invert")
    if len(kept) > GREEN_DENSE_MAX:
        raise ValueError(f"{len(kept)} retained vertices exceed the dense"
                         f" Green guard {GREEN_DENSE_MAX}")
    idx = net.index
    kept_idx = np.array([idx[v] for v in kept], dtype=np.int64)
    killed_idx = np.array(sorted(idx[v] for v in killed), dtype=np.int64)
    L = net.laplacian
    Q = L[kept_idx][:, kept_idx]
    _check_anchored(net.vertices, kept_idx, Q, L[kept_idx][:, killed_idx])
    diag = Q.diagonal()
    d = 1.0 / np.sqrt(diag)
    Qs = (Q.toarray() * d[:, None]) * d[None, :]
    g = np.linalg.inv(Qs) * d[:, None] * d[None, :]
    return GreenFunction(tuple(kept), g)


def _as_measure(start) -> VertexMeasure:
    if isinstance(start, VertexMeasure):
        return start
    if isinstance(start, dict):
        return VertexMeasure(dict(start), frozenset(start))
    return VertexMeasure.point_mass(start)


def expected_hitting_time(net: FiniteNetwork, start, target) -> float:
    """E^start T_target for the variable-speed chain.

    start is a probability VertexMeasure (a bare vertex is promoted to a
    point mass); mass on the target contributes zero. Raises
    UnreachableTargetError when some start vertex cannot reach the
    target at all.
    """
    target = frozenset(target)
    if not target:
        raise ValueError("target set must be nonempty")
    known = set(net.vertices)
    if not target <= known:
        raise ValueError("target contains unknown vertices")
    start = _as_measure(start)
    if abs(start.mass - 1.0) > 1e-6:
        raise ValueError(f"start measure has mass {start.mass!r}, expected 1")
    idx = net.index
    for v in start.weights:
        if v not in known:
            raise ValueError(f"start vertex {v!r} is not in the network")

    L = net.laplacian
    _, labels = connected_components(L, directed=False)
    target_comps = {int(labels[idx[v]]) for v in target}
    start_comps = set()
    for v in start.weights:
        comp = int(labels[idx[v]])
        if comp not in target_comps:
            raise UnreachableTargetError(f"target is unreachable from start"
                                         f" vertex {v!r}")
        start_comps.add(comp)

    # solve Q h = 1 on the free part of the components actually used
    n = net.vertex_count
    in_target = np.zeros(n, dtype=bool)
    in_target[[idx[v] for v in target]] = True
    relevant = np.isin(labels, sorted(start_comps))
    free = np.flatnonzero(relevant & ~in_target)
    h = np.zeros(n)
    if free.size:
        h[free] = _solve_spd(L[free][:, free], np.ones(free.size))
    return float(sum(w * h[idx[v]] for v, w in start.weights.items()))


def commute_identity_check(net: FiniteNetwork, A1, A2) -> float:
    """Relative residual of E^{nu2} T_1 + E^{nu1} T_2 = r |V|.

    nu1, nu2 are the capacitary probability measures of the two blocks
    and |V| counts every vertex of the network, blocks included. Returns
    |lhs - rhs| / rhs; anything above 1e-9 indicates a solver problem.
    """
    r, _ = effective_resistance(net, A1, A2)
    _, nu1 = capacitary_measure(net, A1, A2)
    _, nu2 = capacitary_measure(net, A2, A1)
    t1 = expected_hitting_time(net, nu2, frozenset(A1))
    t2 = expected_hitting_time(net, nu1, frozenset(A2))
    reference = r * net.vertex_count
    return abs(t1 + t2 - reference) / reference


def harnack_ratio(net: FiniteNetwork, potentials: Mapping, region) -> float:
    """max/min of a positive function over a vertex region."""
    region = tuple(region)
    if not region:
        raise ValueError("region must be nonempty")
    known = set(net.vertices)
    vals = []
    for v in region:
        if v not in known:
            raise ValueError(f"region vertex {v!r} is not in the network")
        if v not in potentials:
            raise ValueError(f"no value supplied at region vertex {v!r}")
        vals.append(float(potentials[v]))
    lo, hi = min(vals), max(vals)
    if lo <= 0:
        raise ValueError(f"function is not positive on the region"
                         f" (min {lo!r})")
    return hi / lo


# ---------------------------------------------------------------------------
# lattice windows

def _window_corners(window):
    (x0, y0), (x1, y1) = window
    x0, y0, x1, y1 = int(x0), int(y0), int(x1), int(y1)
    x0, x1 = min(x0, x1), max(x0, x1)
    y0, y1 = min(y0, y1), max(y0, y1)
    for c in (x0, y0, x1, y1):
        if abs(c) > GUARD:
            raise ValueError("window corner outside the +-2^62 guard band")
    return x0, y0, x1, y1


def _window_edge_arrays(x0, y0, x1, y1):
    """Smaller-endpoint coordinate grids for all window edges, raveled
    x-major to match the vertex ordering used by the exporters."""
    xs = np.arange(x0, x1 + 1, dtype=np.int64)
    ys = np.arange(y0, y1 + 1, dtype=np.int64)
    hx, hy = np.meshgrid(xs[:-1], ys, indexing="ij")
    vx, vy = np.meshgrid(xs, ys[:-1], indexing="ij")
    return (hx.ravel(), hy.ravel()), (vx.ravel(), vy.ravel())


def export_finite_network(env: Environment, n: int, window) -> FiniteNetwork:
    """Materialize the level-n conductances on a rectangular window.

    window is a pair of inclusive corner points ((x0, y0), (x1, y1)).
    Vertices are the lattice points inside, edges the nearest-neighbor
    pairs within the window weighted by the level-n conductance, and the
    window perimeter is marked as boundary. Refuses windows with more
    than EDGE_EXPORT_MAX edges.
    """
    if not 0 <= n <= env.level:
        raise IndexError(f"level {n} outside 0..{env.level}")
    x0, y0, x1, y1 = _window_corners(window)
    W, H = x1 - x0 + 1, y1 - y0 + 1
    n_edges = W * (H - 1) + H * (W - 1)
    if n_edges == 0:
        raise ValueError("window contains no edges")
    if n_edges > EDGE_EXPORT_MAX:
        raise ValueError(f"window has {n_edges} edges, over the export"
                         f" guard {EDGE_EXPORT_MAX}")
    (hx, hy), (vx, vy) = _window_edge_arrays(x0, y0, x1, y1)
    wh = conductance_arrays(env, n, hx, hy, True)
    wv = conductance_arrays(env, n, vx, vy, False)

    vertices = [(x, y)
                for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)]
    edges = []
    for ex, ey, ew in zip(hx.tolist(), hy.tolist(), wh.tolist()):
        edges.append(((ex, ey), (ex + 1, ey), ew))
    for ex, ey, ew in zip(vx.tolist(), vy.tolist(), wv.tolist()):
        edges.append(((ex, ey), (ex, ey + 1), ew))
    boundary = frozenset(
        (x, y) for (x, y) in vertices
        if x in (x0, x1) or y in (y0, y1))
    return FiniteNetwork(tuple(vertices), tuple(edges), boundary)


# ---------------------------------------------------------------------------
# fast grid resistance (shared by calibration; agrees with the generic
# path through export_finite_network + effective_resistance)

def _grid_resistance(W: int, H: int, wh: np.ndarray, wv: np.ndarray) -> float:
    """Effective resistance of a W x H grid between its x-extreme
    columns, with horizontal weights wh (shape (W-1)*H, x-major) and
    vertical weights wv (shape W*(H-1), x-major)."""
    if W < 2:
        raise ValueError("grid needs at least two columns")
    n = W * H
    ih = (np.arange(W - 1)[:, None] * H + np.arange(H)[None, :]).ravel()
    jh = ih + H
    iv = (np.arange(W)[:, None] * H + np.arange(H - 1)[None, :]).ravel()
    jv = iv + 1
    rows = np.concatenate([ih, jh, iv, jv, ih, jh, iv, jv])
    cols = np.concatenate([jh, ih, jv, iv, ih, jh, iv, jv])
    data = np.concatenate([-wh, -wh, -wv, -wv, wh, wh, wv, wv])
    L = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    # left column fixed at 0, right column at 1; free ids are contiguous
    free = np.arange(H, n - H)
    p = np.zeros(n)
    p[n - H:] = 1.0
    if free.size:
        rhs = -(L[free][:, n - H:] @ p[n - H:])
        p[free] = _solve_spd(L[free][:, free], rhs)
    dh = p[jh] - p[ih]
    dv = p[jv] - p[iv]
    energy = float(np.sum(wh * dh * dh) + np.sum(wv * dv * dv))
    return 1.0 / energy


def _window_resistance(env: Environment, n: int, x0, y0, x1, y1,
                       axis: int = 0) -> float:
    """Level-n side-to-side resistance of a window, solved directly on
    index grids (no FiniteNetwork materialization). axis 0 drives the
    current in x, axis 1 in y (solved by transposing the grid)."""
    (hx, hy), (vx, vy) = _window_edge_arrays(x0, y0, x1, y1)
    wh = conductance_arrays(env, n, hx, hy, True)
    wv = conductance_arrays(env, n, vx, vy, False)
    W, H = x1 - x0 + 1, y1 - y0 + 1
    if axis == 0:
        return _grid_resistance(W, H, wh, wv)
    return _grid_resistance(H, W,
                            wv.reshape(W, H - 1).T.ravel(),
                            wh.reshape(W - 1, H).T.ravel())


# ---------------------------------------------------------------------------
# calibration

@dataclass(frozen=True)
class CalibrationResult:
    """Outcome of the level-n bar-strength search.

    probes lists every (K, resistance) evaluated, in evaluation order;
    beta_square carries the small-window diagnostic around one bar. When
    no sign change exists in [1, 1e12] the result is marked infeasible,
    K is None and probes double as the residual curve.
    """

    level: int
    K: Optional[float]
    bracket: tuple
    tolerance: float
    feasible: bool
    reference_resistance: float
    calibrated_resistance: Optional[float]
    residual: Optional[float]
    relative_residual: Optional[float]
    iterations: int
    probes: tuple
    window: tuple
    beta_square: Optional[dict]
    solver: str = SOLVER_DESCRIPTION

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "K": self.K,
            "bracket": list(self.bracket),
            "tolerance": self.tolerance,
            "feasible": self.feasible,
            "reference_resistance": self.reference_resistance,
            "calibrated_resistance": self.calibrated_resistance,
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "iterations": self.iterations,
            "probes": [[k, r] for k, r in self.probes],
            "window": [list(c) for c in self.window],
            "beta_square": self.beta_square,
            "solver": self.solver,
        }


def calibrate_K(env: Environment, n: int, tolerance: float = 1e-6,
                K_max: float = 1e12) -> CalibrationResult:
    """Pick K_n so the level-n fundamental square matches the
    obstacle-removed resistance.

    The level-n tile anchored at the level's offset is solved between
    its x-extreme columns; the target is the same window weighted at
    level n-1 (obstacle removed entirely, not the homogeneous constant).
    The residual R(K) - R_ref is strictly decreasing in K, so a sign
    change over [1, K_max] is bisected in log space until the bracket's
    relative width drops below tolerance. Without a sign change the
    result reports a decade-spaced residual curve instead. Requires
    every level below n to be calibrated already; deterministic, so
    reruns are bit-identical.
    """
    sch = env.schedule
    if not 1 <= n <= env.level:
        raise IndexError(f"level {n} outside 1..{env.level}")
    for k in range(1, n):
        if sch.K_at(k) is None:
            raise CalibrationMissingError(
                f"cannot calibrate level {n}: K_{k} is unset")
    if not 0 < tolerance < 1:
        raise ValueError("tolerance must be in (0, 1)")

    a = sch.a_at(n)
    ox, oy = env.offset_at(n)
    x0, y0, x1, y1 = ox, oy, ox + a, oy + a
    W = H = a + 1
    n_edges = W * (H - 1) + H * (W - 1)
    if n_edges > EDGE_EXPORT_MAX:
        raise ValueError(f"fundamental square needs {n_edges} edges, over"
                         f" the export guard {EDGE_EXPORT_MAX}")
    window = ((x0, y0), (x1, y1))

    (hx, hy), (vx, vy) = _window_edge_arrays(x0, y0, x1, y1)
    # obstacle-removed weights, and the level-n pattern on top of them
    ref_h = conductance_arrays(env, n - 1, hx, hy, True)
    ref_v = conductance_arrays(env, n - 1, vx, vy, False)
    code_h = classify_arrays(sch, n, hx - ox, hy - oy, True)
    code_v = classify_arrays(sch, n, vx - ox, vy - oy, False)
    eta = sch.eta_at(n)
    base_h = np.where(code_h == 1, eta, ref_h)
    base_v = np.where(code_v == 1, eta, ref_v)
    bar_h, bar_v = code_h == 2, code_v == 2

    r_ref = _grid_resistance(W, H, ref_h, ref_v)
    probes = []

    def resistance(K: float) -> float:
        r = _grid_resistance(W, H,
                             np.where(bar_h, K, base_h),
                             np.where(bar_v, K, base_v))
        probes.append((float(K), float(r)))
        return r

    def result(K, bracket, calibrated, iterations, feasible=True):
        bar = _beta_square_diagnostic(env, sch, n, K if feasible else None)
        res = None if calibrated is None else calibrated - r_ref
        return CalibrationResult(
            level=n, K=K, bracket=bracket, tolerance=float(tolerance),
            feasible=feasible, reference_resistance=r_ref,
            calibrated_resistance=calibrated, residual=res,
            relative_residual=None if res is None else res / r_ref,
            iterations=iterations, probes=tuple(probes), window=window,
            beta_square=bar)

    lo, hi = 1.0, float(K_max)
    r_lo = resistance(lo)
    if abs(r_lo - r_ref) <= tolerance * r_ref:
        # no obstacle to compensate (eta_n = 1 lands here exactly)
        return result(lo, (lo, lo), r_lo, 0)
    r_hi = resistance(hi)
    f_lo, f_hi = r_lo - r_ref, r_hi - r_ref
    if math.copysign(1.0, f_lo) == math.copysign(1.0, f_hi):
        for K in (1e3, 1e6, 1e9):
            resistance(K)  # residual curve for the report
        return result(None, (lo, hi), None, 0, feasible=False)

    iterations = 0
    while hi / lo - 1.0 > tolerance:
        mid = math.sqrt(lo * hi)
        f_mid = resistance(mid) - r_ref
        if math.copysign(1.0, f_mid) == math.copysign(1.0, f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        iterations += 1
    K = math.sqrt(lo * hi)
    r_K = resistance(K)
    return result(K, (lo, hi), r_K, iterations)


def _beta_square_diagnostic(env: Environment, sch, n: int, K) -> dict:
    """Resistance of a side-beta_n window straddling one bar, with and
    without the level-n obstacle. A large gap between the two flags that
    the full-square match hides strong local distortion.

    The window sits on a vertical bar image, so the current is driven in
    y: that way the bar edges lie along the current and actually carry
    it (an x-direction solve is exactly blind to a vertical bar, since
    its potential has no vertical gradient)."""
    beta = sch.beta_at(n)
    ap = sch.half_a(n)
    ox, oy = env.offset_at(n)
    bx, by = ox + ap - beta, oy + ap
    half = beta // 2
    x0, x1 = bx - half, bx - half + beta
    y0, y1 = by - half, by - half + beta
    out = {"side": beta, "axis": 1, "window": [[x0, y0], [x1, y1]],
           "obstacle_removed": _window_resistance(env, n - 1,
                                                  x0, y0, x1, y1, axis=1)}
    if K is not None:
        env_K = Environment(sch.with_K(n, K), env.offsets, env.level)
        out["with_obstacle"] = _window_resistance(env_K, n,
                                                  x0, y0, x1, y1, axis=1)
    return out


# ---------------------------------------------------------------------------
# randomized test networks

def random_connected_network(seed: int, max_vertices: int = 50,
                             min_vertices: int = 2,
                             weight_range=(1e-3, 1e3)) -> FiniteNetwork:
    """Connected network with log-uniform weights, for solver checks.

    A random recursive tree guarantees connectivity; up to n extra
    chords are layered on. Vertices are 0..n-1 and the draw depends only
    on the seed.
    """
    gen = test_stream(seed)
    count = int(gen.integers(min_vertices, max_vertices + 1))
    pairs = [(int(gen.integers(0, i)), i) for i in range(1, count)]
    present = set(pairs)
    for u, v in gen.integers(0, count, size=(int(gen.integers(0, count)), 2)):
        u, v = int(u), int(v)
        if u > v:
            u, v = v, u
        if u != v and (u, v) not in present:
            present.add((u, v))
            pairs.append((u, v))
    lo, hi = weight_range
    weights = np.exp(gen.uniform(math.log(lo), math.log(hi),
                                 size=len(pairs)))
    edges = [(u, v, float(w)) for (u, v), w in zip(pairs, weights)]
    return FiniteNetwork.from_edges(edges)
