"""Distributional and path-space diagnostics.

Scaling-limit statements are checked through computable surrogates:
finite-dimensional marginals go through Kolmogorov-Smirnov tests, path
laws through an estimated Skorokhod distance between coupled paths, and
transition densities through smoothed occupation counts compared with
Gaussian kernels. Every report says which surrogate it used and carries
the seed and schedule hash needed to reproduce it.

Two conventions hold throughout. Distances between plane-valued path
points are Euclidean, and the same norm feeds both the oscillation
modulus and the alignment cost, so the modulus bounds proved for one
hold for the other. KS comparisons of lattice-valued samples against a
continuous reference first add seeded uniform jitter over one lattice
cell; without it the test rejects on discreteness alone at the sample
sizes used here (cell width h inflates the variance by h*h/12, which is
orders of magnitude below the test's resolution at desk scale).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from walkforge import _kernels
from walkforge.rng import RngStream, DOMAIN_TESTS
from walkforge.walk import PathRecord, sample_positions


@dataclass(frozen=True)
class DiscretePath:
    """A path sampled on a fixed grid over [0, 1].

    grid: increasing times, grid[0] = 0, grid[-1] = 1.
    values: (len(grid), 2) float array.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or len(grid) < 2:
            raise ValueError("grid must be 1-d with at least two points")
        if grid[0] != 0.0 or grid[-1] != 1.0:
            raise ValueError("grid must start at 0 and end at 1")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if values.shape != (len(grid), 2):
            raise ValueError("values must be (len(grid), 2)")

    def __len__(self):
        return len(self.grid)


def discretize(path: PathRecord, a: float, grid) -> DiscretePath:
    """Diffusively rescaled grid view of a path: value at grid time t is
    position(a^2 t)/a."""
    from walkforge.walk import rescale

    return DiscretePath(np.asarray(grid, dtype=np.float64),
                        rescale(path, a, grid))


@dataclass(frozen=True)
class TestReport:
    """One statistic with its provenance.

    sigma_hat is the estimated per-coordinate diffusivity (variance per
    unit time) whenever the experiment estimates one; reports never
    assume a normalization. details holds experiment-specific tables,
    JSON-ready.
    """

    __test__ = False  # not a pytest class, despite the name

    name: str
    value: float
    p_value: float | None = None
    sample_sizes: tuple = ()
    ci: tuple | None = None
    seed: int | None = None
    schedule_id: str | None = None
    sigma_hat: float | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value outside [0, 1]")
        if self.ci is not None:
            lo, hi = self.ci
            if not lo <= self.value <= hi:
                raise ValueError("confidence interval misses the estimate")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": _py(self.value),
            "p_value": _py(self.p_value),
            "sample_sizes": [int(s) for s in self.sample_sizes],
            "ci": None if self.ci is None else [_py(c) for c in self.ci],
            "seed": _py(self.seed),
            "schedule_id": self.schedule_id,
            "sigma_hat": _py(self.sigma_hat),
            "details": _py(self.details),
        }


def _py(v):
    # JSON-ready copy: numpy scalars/arrays to Python numbers/lists
    if isinstance(v, dict):
        return {k: _py(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_py(x) for x in v]
    if isinstance(v, np.ndarray):
        return _py(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# path functionals


def osc(path, delta: float) -> float:
    """Largest Euclidean fluctuation over time windows of width delta.

    Exact for a PathRecord (the sup over the piecewise-constant path on
    [0, horizon]); for a DiscretePath it is the max over grid-time pairs
    within delta, the natural grid restriction.
    """
    if isinstance(path, PathRecord):
        if not 0 < delta <= path.horizon:
            raise ValueError("delta outside (0, horizon]")
        times = np.concatenate([[0.0], path.jump_times])
        vals = np.concatenate([np.array([path.start], dtype=np.float64),
                               path.positions.astype(np.float64)])
        closed = False  # value intervals are right-open: gap must be < delta
    else:
        if not 0 < delta <= 1:
            raise ValueError("delta outside (0, 1]")
        times = path.grid
        vals = path.values
        closed = True
    best = 0.0
    side = "left" if closed else "right"
    lo_all = np.searchsorted(times, times - delta, side=side)
    for j in range(1, len(times)):
        lo = lo_all[j] if closed else max(lo_all[j] - 1, 0)
        if lo >= j:
            continue
        d = vals[lo:j] - vals[j]
        m = float(np.sqrt((d * d).sum(axis=1).max()))
        if m > best:
            best = m
    return best


def skorokhod_estimate(x: DiscretePath, y: DiscretePath) -> float:
    """Estimated Skorokhod distance between two grid paths.

    Dynamic program over monotone staircase alignments of the two grids
    (endpoints pinned), minimizing the maximum over aligned pairs of
    max(|time difference|, |value difference|). Different grids are
    first merged, each path extended to the union grid by carrying its
    last value forward. The result is an estimate of the cadlag-space
    distance restricted to grid times and grid-valued time changes:
    restricting the time changes can only raise it, restricting the sup
    to grid times can only lower it.
    """
    if np.array_equal(x.grid, y.grid):
        g, vx, vy = x.grid, x.values, y.values
    else:
        g = np.union1d(x.grid, y.grid)
        vx = x.values[np.searchsorted(x.grid, g, side="right") - 1]
        vy = y.values[np.searchsorted(y.grid, g, side="right") - 1]
    return float(_kernels.bottleneck_alignment(g, vx, g, vy))


def gaussian_kernel(t: float, x, y, variance: float = 1.0) -> float:
    """Plane Gaussian transition kernel with per-coordinate variance
    `variance * t`: (2 pi v t)^-1 exp(-|x-y|^2 / (2 v t))."""
    if t <= 0:
        raise ValueError("t must be positive")
    if variance <= 0:
        raise ValueError("variance must be positive")
    dx = float(x[0]) - float(y[0])
    dy = float(x[1]) - float(y[1])
    vt = variance * t
    return math.exp(-(dx * dx + dy * dy) / (2.0 * vt)) / (2.0 * math.pi * vt)


# ---------------------------------------------------------------------------
# KS wrappers


def ks_test(samples, reference, name: str = "ks_one_sample",
            seed=None, schedule_id=None) -> TestReport:
    """One-sample KS against a continuous reference cdf (callable or a
    scipy distribution name). Asymptotic p-value by design."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 8:
        raise ValueError("need at least 8 samples")
    res = sps.kstest(samples, reference, mode="asymp")
    return TestReport(name=name, value=float(res.statistic),
                      p_value=float(res.pvalue),
                      sample_sizes=(samples.size,),
                      seed=seed, schedule_id=schedule_id)


def two_sample_ks(a, b, name: str = "ks_two_sample",
                  seed=None, schedule_id=None) -> TestReport:
    """Two-sample KS; ties are fine (both empirical cdfs step there)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 8 or b.size < 8:
        raise ValueError("need at least 8 samples on each side")
    res = sps.ks_2samp(a, b, method="asymp")
    return TestReport(name=name, value=float(res.statistic),
                      p_value=float(res.pvalue),
                      sample_sizes=(a.size, b.size),
                      seed=seed, schedule_id=schedule_id)


def brownian_grid_path(grid, seed: int, diffusivity: float = 1.0,
                       which: int = 0) -> DiscretePath:
    """Plane Brownian path sampled on a grid over [0, 1]: independent
    Gaussian increments per coordinate, variance diffusivity*dt."""
    grid = np.asarray(grid, dtype=np.float64)
    gen = RngStream(seed, DOMAIN_TESTS | which).generator()
    dt = np.diff(grid)
    inc = gen.normal(size=(len(dt), 2)) * np.sqrt(diffusivity * dt)[:, None]
    vals = np.vstack([np.zeros((1, 2)), np.cumsum(inc, axis=0)])
    return DiscretePath(grid, vals)


# ---------------------------------------------------------------------------
# ensemble diagnostics


def fclt_report(values, times, diffusivity: float | None = None,
                cell: float | None = None, seed=None,
                schedule_id=None, name: str = "fclt") -> TestReport:
    """Gaussian-limit diagnostics for an ensemble of path marginals.

    values: (count, len(times), 2) array, one row of probe positions per
    path (already rescaled if the caller rescales). Checks per
    coordinate and probe time: mean CI covers 0, sample variance against
    diffusivity*t (when a reference diffusivity is given), cross-
    coordinate covariance CI covers 0, KS against the matching centered
    normal, and a correlation diagnostic between disjoint increments.
    cell is the lattice cell width in the units of values; when set, KS
    samples get seeded uniform jitter over one cell (see module note).
    Fewer than 100 paths flags the report as low power.
    """
    values = np.asarray(values, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    count, m, _ = values.shape
    if m != len(times):
        raise ValueError("values and times disagree on probe count")
    jitter = None
    if cell is not None:
        gen = RngStream(seed or 0, DOMAIN_TESTS).generator()
        jitter = gen.uniform(-cell / 2, cell / 2, size=values.shape)

    var_hat = values.var(axis=0, ddof=1)  # (m, 2)
    sigma_hat = float(np.mean(var_hat / times[:, None]))
    rows = []
    worst_dev = 0.0
    for k, t in enumerate(times):
        for c in range(2):
            col = values[:, k, c]
            mean = float(col.mean())
            sd = float(col.std(ddof=1))
            mean_se = sd / math.sqrt(count)
            v = float(var_hat[k, c])
            var_se = v * math.sqrt(2.0 / (count - 1))
            ref_var = diffusivity * t if diffusivity is not None else None
            ks_col = col if jitter is None else col + jitter[:, k, c]
            ks_scale = math.sqrt(ref_var if ref_var is not None
                                 else sigma_hat * t)
            res = sps.kstest(ks_col, "norm", args=(0.0, ks_scale),
                             mode="asymp")
            row = {
                "time": float(t), "coordinate": c,
                "mean": mean, "mean_ci": [mean - 3 * mean_se,
                                          mean + 3 * mean_se],
                "variance": v, "variance_ci": [v - 3 * var_se,
                                               v + 3 * var_se],
                "ks_statistic": float(res.statistic),
                "ks_p_value": float(res.pvalue),
            }
            if ref_var is not None:
                row["reference_variance"] = float(ref_var)
                row["variance_relative_deviation"] = abs(v / ref_var - 1.0)
                worst_dev = max(worst_dev, row["variance_relative_deviation"])
            rows.append(row)
    cross = []
    for k, t in enumerate(times):
        prod = values[:, k, 0] * values[:, k, 1]
        cm, cs = float(prod.mean()), float(prod.std(ddof=1))
        cross.append({"time": float(t), "covariance": cm,
                      "ci": [cm - 3 * cs / math.sqrt(count),
                             cm + 3 * cs / math.sqrt(count)]})
    increments = []
    if m >= 2:
        for k in range(1, m):
            a = values[:, k, :] - values[:, k - 1, :]
            b = values[:, k - 1, :] - (values[:, k - 2, :] if k >= 2 else 0.0)
            for c in range(2):
                r = float(np.corrcoef(a[:, c], b[:, c])[0, 1])
                increments.append({
                    "window": [float(times[k - 1]), float(times[k])],
                    "coordinate": c, "correlation": r,
                    "ci": [r - 3 / math.sqrt(count),
                           r + 3 / math.sqrt(count)]})
    return TestReport(
        name=name, value=worst_dev, sample_sizes=(count,),
        seed=seed, schedule_id=schedule_id, sigma_hat=sigma_hat,
        details={
            "surrogate": "finite-dimensional marginals; KS plus moment CIs",
            "low_power": count < 100,
            "cell": cell,
            "marginals": rows,
            "cross_covariance": cross,
            "increment_correlation": increments,
        })


def heat_kernel_check(env, n: int, a: int, times, pairs, samples: int,
                      seed: int, smoothing: int | None = None,
                      threads=None, schedule_id=None) -> TestReport:
    """Monte Carlo check of the rescaled transition density against
    Gaussian kernels.

    For each source/target pair (x, y) of plane points and each probe
    time t, estimates a^2 P(walk started at [xa] sits in a window around
    [ya] at time a^2 t) / window area, where [.] rounds to the lattice.
    The window is a smoothing x smoothing block of lattice cells. The
    estimate is compared against two references: the unit-variance
    Gaussian kernel with the factor-2 sandwich read verbatim, and the
    variance-matched kernel using the diffusivity estimated from the
    same ensemble. Zero-hit windows are flagged and re-counted with a
    window twice as wide. Binomial 99.7% CIs accompany every ratio.
    """
    from walkforge.walk import round_to_lattice

    times = np.asarray(times, dtype=np.float64)
    if np.any(times <= 0):
        raise ValueError("probe times must be positive")
    if smoothing is None:
        smoothing = max(3, int(round(a / 7)) | 1)
    if smoothing % 2 == 0:
        raise ValueError("smoothing window must be odd")
    pair_list = [(np.asarray(x, dtype=np.float64),
                  np.asarray(y, dtype=np.float64)) for x, y in pairs]
    sources = {}
    for x, _ in pair_list:
        sources.setdefault(tuple(round_to_lattice(x * a)), None)
    lattice_times = a * a * times
    order = np.argsort(lattice_times)
    probe_times = lattice_times[order]
    ens = {}
    for j, src in enumerate(sources):
        ens[src] = sample_positions(
            env, n, src, probe_times, samples, master_seed=seed,
            threads=threads, walker_offset=j * samples)

    # diffusivity from the pooled second moments of every ensemble
    acc = 0.0
    cnt = 0
    for src, pos in ens.items():
        disp = pos.astype(np.float64) - np.array(src, dtype=np.float64)
        v = disp.var(axis=0, ddof=1)  # (len(times), 2)
        acc += float((v / probe_times[:, None]).sum())
        cnt += v.size
    sigma_hat = acc / cnt

    half = smoothing // 2
    rows = []
    worst = 1.0
    violations = 0
    for x, y in pair_list:
        src = tuple(round_to_lattice(x * a))
        tgt = round_to_lattice(y * a)
        pos = ens[src]
        for k_sorted in range(len(probe_times)):
            t = float(times[int(order[k_sorted])])
            w = smoothing
            while True:
                hw = w // 2
                inside = np.all(np.abs(pos[:, k_sorted, :] - tgt) <= hw,
                                axis=1)
                hits = int(inside.sum())
                if hits > 0 or w > 8 * smoothing:
                    break
                w = 2 * w + 1
            p_hat = hits / samples
            density = p_hat / (w * w) * a * a
            lo, hi = _wilson(hits, samples, z=3.0)
            d_lo = lo / (w * w) * a * a
            d_hi = hi / (w * w) * a * a
            k_plain = gaussian_kernel(t, x, y)
            k_match = gaussian_kernel(t, x, y, variance=sigma_hat)
            ratio = density / k_match if k_match > 0 else math.inf
            rows.append({
                "t": t, "x": [float(x[0]), float(x[1])],
                "y": [float(y[0]), float(y[1])],
                "window": w, "hits": hits,
                "density": density, "density_ci": [d_lo, d_hi],
                "plain_kernel": k_plain,
                "plain_ratio": density / k_plain,
                "plain_sandwich_ok": 0.5 * k_plain <= density <= 2 * k_plain,
                "matched_kernel": k_match,
                "matched_ratio": ratio,
                "matched_ratio_ci": [d_lo / k_match, d_hi / k_match],
                "zero_hit_widened": w != smoothing,
            })
            if not rows[-1]["plain_sandwich_ok"]:
                violations += 1
            worst = max(worst, ratio, 1.0 / ratio if ratio > 0 else math.inf)
    return TestReport(
        name="heat_kernel_check", value=worst, sample_sizes=(samples,),
        seed=seed, schedule_id=schedule_id, sigma_hat=sigma_hat,
        details={
            "surrogate": ("smoothed occupation counts vs Gaussian kernels; "
                          "factor-2 sandwich read on the variance-matched "
                          "kernel, verbatim unit-variance ratios reported"),
            "a": a, "level": n, "smoothing": smoothing,
            "plain_sandwich_violations": violations,
            "probes": rows,
        })


def _wilson(hits: int, n: int, z: float = 3.0):
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = hits / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    spread = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - spread), min(1.0, center + spread)
