import json
import math

import numpy as np
import pytest

from walkforge.environment import Environment, zero_offsets
from walkforge.schedule import default_desk_schedule
from walkforge.stats import (
    DiscretePath,
    TestReport,
    brownian_grid_path,
    discretize,
    fclt_report,
    gaussian_kernel,
    heat_kernel_check,
    ks_test,
    osc,
    skorokhod_estimate,
    two_sample_ks,
    _wilson,
)
from walkforge.walk import PathRecord


def grid_path(grid, values):
    return DiscretePath(np.asarray(grid, dtype=np.float64),
                        np.asarray(values, dtype=np.float64))


def record(start, jumps, positions, horizon):
    return PathRecord(start=start,
                      jump_times=np.asarray(jumps, dtype=np.float64),
                      positions=np.asarray(positions, dtype=np.int64),
                      horizon=float(horizon))


class TestDiscretePath:
    def test_valid(self):
        p = grid_path([0, 0.5, 1], [[0, 0], [1, 0], [1, 1]])
        assert len(p) == 3
        assert p.values.dtype == np.float64

    def test_grid_must_span_unit_interval(self):
        with pytest.raises(ValueError):
            grid_path([0.1, 1], [[0, 0], [1, 0]])
        with pytest.raises(ValueError):
            grid_path([0, 0.9], [[0, 0], [1, 0]])

    def test_grid_strictly_increasing(self):
        with pytest.raises(ValueError):
            grid_path([0, 0.5, 0.5, 1], [[0, 0]] * 4)

    def test_value_shape(self):
        with pytest.raises(ValueError):
            grid_path([0, 1], [[0, 0, 0], [1, 0, 0]])
        with pytest.raises(ValueError):
            grid_path([0, 1], [[0, 0]])

    def test_grid_too_short(self):
        with pytest.raises(ValueError):
            DiscretePath(np.array([0.0]), np.zeros((1, 2)))


class TestDiscretize:
    def test_rescaled_values(self):
        p = record((0, 0), [1.0, 3.0], [[1, 0], [1, 1]], 4.0)
        d = discretize(p, 2.0, [0.0, 0.5, 1.0])
        # positions at lattice times 0, 2, 4 are (0,0), (1,0), (1,1)
        assert np.allclose(d.values, [[0, 0], [0.5, 0], [0.5, 0.5]])


class TestOsc:
    def test_constant_path_is_zero(self):
        p = record((3, -2), [], np.empty((0, 2)), 5.0)
        assert osc(p, 1.0) == 0.0
        assert osc(p, 5.0) == 0.0

    def test_single_jump_any_delta(self):
        p = record((0, 0), [2.5], [[1, 0]], 10.0)
        # a jump is a discontinuity: every window width sees it
        for delta in (1e-6, 0.1, 1.0, 10.0):
            assert osc(p, delta) == 1.0

    def test_two_far_jumps(self):
        p = record((0, 0), [1.0, 9.0], [[1, 0], [2, 0]], 10.0)
        assert osc(p, 0.5) == 1.0
        assert osc(p, 10.0) == 2.0

    def test_window_is_right_open_for_records(self):
        # value plateaus are right-open: the plateau ending at 1 and the
        # jump at 2 have infimum gap exactly 1, so width 1 excludes the
        # pair and any strictly wider window includes it
        p = record((0, 0), [1.0, 2.0], [[1, 0], [2, 0]], 4.0)
        assert osc(p, 1.0) == 1.0
        assert osc(p, 1.0000001) == 2.0

    def test_grid_linear_growth(self):
        g = np.linspace(0.0, 1.0, 101)
        v = np.stack([3.0 * g, np.zeros_like(g)], axis=1)
        d = grid_path(g, v)
        got = osc(d, 0.25)
        assert abs(got - 0.75) <= 3.0 * 0.01 + 1e-12

    def test_grid_pairs_are_closed(self):
        d = grid_path([0, 0.5, 1], [[0, 0], [2, 0], [2, 0]])
        # the (0, 0.5) pair sits exactly at gap 0.5 and must count
        assert osc(d, 0.5) == 2.0

    def test_euclidean_norm(self):
        d = grid_path([0, 1], [[0, 0], [3, 4]])
        assert osc(d, 1.0) == 5.0

    def test_delta_bounds(self):
        p = record((0, 0), [], np.empty((0, 2)), 2.0)
        with pytest.raises(ValueError):
            osc(p, 0.0)
        with pytest.raises(ValueError):
            osc(p, 2.5)
        with pytest.raises(ValueError):
            osc(grid_path([0, 1], [[0, 0], [1, 0]]), 1.5)


class TestSkorokhod:
    def test_identical_paths(self):
        x = brownian_grid_path(np.linspace(0, 1, 64), seed=5)
        assert skorokhod_estimate(x, x) == 0.0

    def test_constant_shift(self):
        g = np.linspace(0, 1, 32)
        x = grid_path(g, np.zeros((32, 2)))
        v = np.zeros((32, 2))
        v[:, 0] = 0.7
        y = grid_path(g, v)
        # no time change helps against a uniform value offset
        assert skorokhod_estimate(x, y) == pytest.approx(0.7, abs=1e-12)

    def test_bounded_by_sup_distance(self):
        g = np.linspace(0, 1, 50)
        for s in range(10):
            x = brownian_grid_path(g, seed=40, which=2 * s)
            y = brownian_grid_path(g, seed=40, which=2 * s + 1)
            sup = float(np.sqrt(((x.values - y.values) ** 2)
                                .sum(axis=1)).max())
            assert skorokhod_estimate(x, y) <= sup + 1e-12

    def test_shared_jump_time_across_grids(self):
        x = grid_path([0, 0.5, 1], [[0, 0], [1, 0], [1, 0]])
        y = grid_path([0, 0.25, 0.5, 1],
                      [[0, 0], [0, 0], [1, 0], [1, 0]])
        # same step function sampled on different grids
        assert skorokhod_estimate(x, y) == 0.0

    def test_symmetry_and_self_distance(self):
        g = np.linspace(0, 1, 40)
        for s in range(6):
            x = brownian_grid_path(g, seed=41, which=2 * s)
            y = brownian_grid_path(g, seed=41, which=2 * s + 1)
            assert skorokhod_estimate(x, y) == skorokhod_estimate(y, x)
            assert skorokhod_estimate(x, x) == 0.0

    def test_triangle_inequality_shared_grid(self):
        g = np.linspace(0, 1, 30)
        for s in range(15):
            x = brownian_grid_path(g, seed=42, which=3 * s)
            y = brownian_grid_path(g, seed=42, which=3 * s + 1)
            z = brownian_grid_path(g, seed=42, which=3 * s + 2)
            dxz = skorokhod_estimate(x, z)
            dxy = skorokhod_estimate(x, y)
            dyz = skorokhod_estimate(y, z)
            assert dxz <= dxy + dyz + 1e-12


def monotone_time_change(grid, seed, spread):
    """Random nondecreasing grid-index map with pinned endpoints;
    returns (indices, realized sup |grid[idx] - grid|)."""
    m = len(grid)
    gen = np.random.default_rng(seed)
    idx = np.clip(np.arange(m) + gen.integers(-spread, spread + 1, size=m),
                  0, m - 1)
    idx = np.maximum.accumulate(idx)
    idx[0], idx[-1] = 0, m - 1
    delta = float(np.abs(grid[idx] - grid).max())
    return idx, delta


class TestPathLemmaSurrogates:
    """Computable forms of the three path-space comparison bounds used
    by the scaling-limit diagnostics; the acceptance suite repeats them
    at scale."""

    def test_distance_to_zero_bounded_by_sup(self):
        g = np.linspace(0, 1, 60)
        zero = grid_path(g, np.zeros((60, 2)))
        for s in range(10):
            x = brownian_grid_path(g, seed=50, which=s)
            sup = float(np.sqrt((x.values ** 2).sum(axis=1)).max())
            assert skorokhod_estimate(x, zero) <= sup + 1e-9

    def test_time_change_bounded_by_oscillation(self):
        g = np.linspace(0, 1, 80)
        for s in range(10):
            w = brownian_grid_path(g, seed=51, which=s)
            idx, delta = monotone_time_change(g, 100 + s, spread=4)
            if delta == 0.0:
                continue
            moved = grid_path(g, w.values[idx])
            assert skorokhod_estimate(moved, w) <= osc(w, delta) + 1e-9

    def test_joint_time_change_stability(self):
        g = np.linspace(0, 1, 80)
        for s in range(10):
            x = brownian_grid_path(g, seed=52, which=2 * s)
            y = brownian_grid_path(g, seed=52, which=2 * s + 1)
            idx, delta = monotone_time_change(g, 200 + s, spread=4)
            if delta == 0.0:
                continue
            xs = grid_path(g, x.values[idx])
            ys = grid_path(g, y.values[idx])
            bound = (skorokhod_estimate(x, y)
                     + osc(x, delta) + osc(y, delta))
            assert skorokhod_estimate(xs, ys) <= bound + 1e-9


class TestKSWrappers:
    def test_under_null_rejection_rate(self):
        gen = np.random.default_rng(77)
        rejections = 0
        for _ in range(1000):
            s = gen.normal(size=100)
            if ks_test(s, "norm").p_value < 0.01:
                rejections += 1
        # binomial(1000, 0.01): far tails excluded
        assert 0 <= rejections <= 28

    def test_two_sample_identical(self):
        a = np.arange(64, dtype=np.float64)
        rep = two_sample_ks(a, a)
        assert rep.value == 0.0
        assert rep.p_value == 1.0
        assert rep.sample_sizes == (64, 64)

    def test_two_sample_detects_shift(self):
        gen = np.random.default_rng(4)
        a = gen.normal(size=500)
        b = gen.normal(size=500) + 1.0
        assert two_sample_ks(a, b).p_value < 1e-6

    def test_minimum_sample_sizes(self):
        with pytest.raises(ValueError):
            ks_test(np.zeros(7), "norm")
        with pytest.raises(ValueError):
            two_sample_ks(np.zeros(7), np.zeros(20))


class TestGaussianKernel:
    def test_normalization_constant(self):
        assert gaussian_kernel(1.0, (0, 0), (0, 0)) \
            == pytest.approx(1.0 / (2.0 * math.pi))

    def test_symmetry(self):
        assert gaussian_kernel(0.7, (1.0, 2.0), (-0.5, 0.25)) \
            == gaussian_kernel(0.7, (-0.5, 0.25), (1.0, 2.0))

    def test_quadrature_mass(self):
        h = 0.05
        axis = np.arange(-5.0, 5.0 + h / 2, h)
        total = sum(gaussian_kernel(0.25, (0.0, 0.0), (u, v)) * h * h
                    for u in axis for v in axis)
        assert abs(total - 1.0) < 1e-6

    def test_variance_scaling(self):
        # doubling the diffusivity halves the peak
        k1 = gaussian_kernel(0.5, (0, 0), (0, 0), variance=1.0)
        k2 = gaussian_kernel(0.5, (0, 0), (0, 0), variance=2.0)
        assert k1 == pytest.approx(2.0 * k2)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            gaussian_kernel(0.0, (0, 0), (0, 0))
        with pytest.raises(ValueError):
            gaussian_kernel(1.0, (0, 0), (0, 0), variance=0.0)


class TestReportContainer:
    def test_p_value_range(self):
        with pytest.raises(ValueError):
            TestReport(name="x", value=0.0, p_value=1.5)

    def test_ci_must_cover_value(self):
        with pytest.raises(ValueError):
            TestReport(name="x", value=2.0, ci=(0.0, 1.0))

    def test_to_dict_is_json_ready(self):
        rep = TestReport(
            name="demo", value=np.float64(0.25), p_value=0.5,
            sample_sizes=(np.int64(10),), ci=(0.0, np.float64(1.0)),
            seed=3, schedule_id="abc",
            details={"arr": np.arange(3), "flag": np.bool_(True),
                     "nested": {"x": np.float32(1.5)}})
        d = rep.to_dict()
        s = json.loads(json.dumps(d))
        assert s["value"] == 0.25
        assert s["details"]["arr"] == [0, 1, 2]
        assert s["details"]["flag"] is True
        assert s["details"]["nested"]["x"] == 1.5


class TestBrownianGridPath:
    def test_deterministic_in_seed(self):
        g = np.linspace(0, 1, 20)
        a = brownian_grid_path(g, seed=9, which=4)
        b = brownian_grid_path(g, seed=9, which=4)
        c = brownian_grid_path(g, seed=9, which=5)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_starts_at_origin(self):
        p = brownian_grid_path(np.linspace(0, 1, 10), seed=1)
        assert np.all(p.values[0] == 0.0)

    def test_increment_moments(self):
        g = np.array([0.0, 0.5, 1.0])
        n = 3000
        incs = np.empty((n, 2, 2))
        for i in range(n):
            p = brownian_grid_path(g, seed=70, which=i, diffusivity=4.0)
            incs[i] = np.diff(p.values, axis=0)
        var = incs.var(axis=0, ddof=1)  # expect 4 * 0.5 = 2 everywhere
        assert np.all(np.abs(var / 2.0 - 1.0) < 3.0 * math.sqrt(2.0 / n))
        se = np.sqrt(var / n)
        assert np.all(np.abs(incs.mean(axis=0)) < 3.0 * se)


class TestFcltReport:
    @staticmethod
    def gaussian_ensemble(count, times, diffusivity, seed):
        gen = np.random.default_rng(seed)
        dts = np.diff(np.concatenate([[0.0], times]))
        incs = gen.normal(size=(count, len(times), 2)) \
            * np.sqrt(diffusivity * dts)[None, :, None]
        return np.cumsum(incs, axis=1)

    def test_correct_ensemble_passes(self):
        times = np.array([0.5, 1.0])
        vals = self.gaussian_ensemble(4000, times, 2.0, seed=11)
        rep = fclt_report(vals, times, diffusivity=2.0, seed=11)
        assert rep.value < 0.08
        assert abs(rep.sigma_hat - 2.0) < 0.15
        assert not rep.details["low_power"]
        for row in rep.details["marginals"]:
            assert row["mean_ci"][0] <= 0.0 <= row["mean_ci"][1]
            assert row["ks_p_value"] > 1e-3
        for row in rep.details["cross_covariance"]:
            assert row["ci"][0] <= 0.0 <= row["ci"][1]
        for row in rep.details["increment_correlation"]:
            assert row["ci"][0] <= 0.0 <= row["ci"][1]

    def test_wrong_reference_variance_flagged(self):
        times = np.array([1.0])
        vals = self.gaussian_ensemble(4000, times, 3.0, seed=12)
        rep = fclt_report(vals, times, diffusivity=2.0, seed=12)
        assert rep.value > 0.3  # variance off by half its size

    def test_low_power_flag(self):
        times = np.array([1.0])
        vals = self.gaussian_ensemble(50, times, 1.0, seed=13)
        assert fclt_report(vals, times, seed=13).details["low_power"]

    def test_lattice_jitter_restores_ks(self):
        # fixed-scale analogue of walk marginals: integer-rounded
        # normals at a variance typical of the probe times used here;
        # rounding alone rejects, one-cell jitter does not
        times = np.array([1.0])
        gen = np.random.default_rng(14)
        vals = np.round(gen.normal(scale=math.sqrt(50.0),
                                   size=(20000, 1, 2)))
        raw = fclt_report(vals, times, diffusivity=50.0, seed=14)
        smooth = fclt_report(vals, times, diffusivity=50.0, seed=14,
                             cell=1.0)
        assert raw.details["marginals"][0]["ks_p_value"] < 1e-10
        assert smooth.details["marginals"][0]["ks_p_value"] > 0.05

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fclt_report(np.zeros((10, 2, 2)), np.array([1.0]))


@pytest.fixture(scope="module")
def env():
    sch = default_desk_schedule(1).with_K(1, 7.5)
    return Environment(sch, zero_offsets(sch))


class TestHeatKernelCheck:
    def test_homogeneous_matches_kernel(self, env):
        rep = heat_kernel_check(
            env, 0, a=8, times=(0.5,),
            pairs=(((0.0, 0.0), (0.0, 0.0)), ((0.0, 0.0), (0.75, 0.0))),
            samples=4000, seed=99, smoothing=3)
        assert abs(rep.sigma_hat - 2.0) < 0.15
        for row in rep.details["probes"]:
            assert 0.6 < row["matched_ratio"] < 1.6
            assert not row["zero_hit_widened"]
            assert row["density_ci"][0] <= row["density"] \
                <= row["density_ci"][1]
        assert rep.value < 1.7

    def test_deterministic(self, env):
        kw = dict(times=(0.5,), pairs=(((0.0, 0.0), (0.0, 0.0)),),
                  samples=1000, seed=31, smoothing=3)
        a = heat_kernel_check(env, 0, 8, **kw)
        b = heat_kernel_check(env, 0, 8, **kw)
        assert a.to_dict() == b.to_dict()

    def test_zero_hit_widening(self, env):
        rep = heat_kernel_check(
            env, 0, a=8, times=(0.25,),
            pairs=(((0.0, 0.0), (2.0, 2.0)),),
            samples=500, seed=99, smoothing=3)
        row = rep.details["probes"][0]
        assert row["zero_hit_widened"]
        assert row["window"] > 3

    def test_rejects_even_smoothing(self, env):
        with pytest.raises(ValueError):
            heat_kernel_check(env, 0, 8, (0.5,),
                              (((0.0, 0.0), (0.0, 0.0)),),
                              100, 1, smoothing=4)

    def test_rejects_nonpositive_time(self, env):
        with pytest.raises(ValueError):
            heat_kernel_check(env, 0, 8, (0.0,),
                              (((0.0, 0.0), (0.0, 0.0)),),
                              100, 1)


class TestWilson:
    def test_contains_point_estimate(self):
        for hits, n in ((0, 50), (3, 50), (25, 50), (50, 50)):
            lo, hi = _wilson(hits, n)
            assert 0.0 <= lo <= hits / n <= hi <= 1.0

    def test_degenerate(self):
        assert _wilson(0, 0) == (0.0, 1.0)

    def test_shrinks_with_samples(self):
        lo1, hi1 = _wilson(10, 100)
        lo2, hi2 = _wilson(100, 1000)
        assert hi2 - lo2 < hi1 - lo1
