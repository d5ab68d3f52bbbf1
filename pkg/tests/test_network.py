"""Finite-network potential theory against hand values and an
independent first-step elimination oracle."""

import math

import numpy as np
import pytest

from walkforge.environment import (CalibrationMissingError, Environment,
                                   enumerate_fundamental, zero_offsets)
from walkforge.network import (CalibrationResult, FiniteNetwork,
                               GreenFunction, SingularNetworkError,
                               UnreachableTargetError, VertexMeasure,
                               calibrate_K, capacitary_measure,
                               commute_identity_check, dirichlet_energy,
                               effective_resistance, expected_hitting_time,
                               export_finite_network, green_function,
                               harmonic_extension, harnack_ratio,
                               network_from_csv, network_to_csv,
                               random_connected_network)
from walkforge.schedule import default_desk_schedule, roomy_desk_schedule


# ---------------------------------------------------------------------------
# independent oracle: first-step analysis by literal variable elimination
# (dict arithmetic only, no matrix solver anywhere)

def eliminate_affine(adjacency, free, const, coef):
    """Solve h(v) = const[v] + sum_w coef[v][w] h(w) for v in free by
    eliminating one variable at a time and back-substituting."""
    eqs = {v: [const[v], dict(coef[v])] for v in free}
    order = list(free)
    solved = {}
    for v in order:
        c, a = eqs.pop(v)
        diag = a.pop(v, 0.0)
        scale = 1.0 / (1.0 - diag)
        c *= scale
        a = {w: x * scale for w, x in a.items()}
        for u in eqs:
            a_uv = eqs[u][1].pop(v, 0.0)
            if a_uv:
                eqs[u][0] += a_uv * c
                for w, x in a.items():
                    eqs[u][1][w] = eqs[u][1].get(w, 0.0) + a_uv * x
        solved[v] = (c, a)
    values = {}
    for v in reversed(order):
        c, a = solved[v]
        values[v] = c + sum(x * values[w] for w, x in a.items())
    return values


def first_step_hitting_times(net, target):
    """E^x T_target from the jump chain: h = 1/mu_x + sum P_xy h(y)."""
    target = set(target)
    free = [v for v in net.vertices if v not in target]
    const, coef = {}, {}
    for v in free:
        mu = sum(w for _, w in net.adjacency[v])
        const[v] = 1.0 / mu
        c = {}
        for y, w in net.adjacency[v]:
            if y not in target:
                c[y] = c.get(y, 0.0) + w / mu
        coef[v] = c
    return eliminate_affine(net.adjacency, free, const, coef)


def first_step_hitting_probability(net, A1, A2):
    """P^x(T_A1 < T_A2) for x outside both blocks."""
    A1, A2 = set(A1), set(A2)
    free = [v for v in net.vertices if v not in A1 and v not in A2]
    const, coef = {}, {}
    for v in free:
        mu = sum(w for _, w in net.adjacency[v])
        const[v] = sum(w for y, w in net.adjacency[v] if y in A1) / mu
        c = {}
        for y, w in net.adjacency[v]:
            if y not in A1 and y not in A2:
                c[y] = c.get(y, 0.0) + w / mu
        coef[v] = c
    return eliminate_affine(net.adjacency, free, const, coef)


def small_suite():
    """Deterministic networks with 2..8 vertices and spread-out weights."""
    nets = [
        FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)]),
        FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]),
        FiniteNetwork.from_edges([(0, 1, 2.0), (1, 2, 0.5), (2, 3, 4.0),
                                  (3, 0, 1.0), (0, 2, 0.125)]),
    ]
    for seed in range(40, 52):
        nets.append(random_connected_network(seed, max_vertices=8))
    return nets


# ---------------------------------------------------------------------------
# domain types

class TestFiniteNetwork:
    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            FiniteNetwork((0, 1), ((0, 0, 1.0), (0, 1, 1.0)))

    def test_rejects_duplicate_edge_any_orientation(self):
        with pytest.raises(ValueError, match="duplicate edge"):
            FiniteNetwork((0, 1), ((0, 1, 1.0), (1, 0, 2.0)))

    def test_rejects_nonpositive_weight(self):
        with pytest.raises(ValueError, match="weight"):
            FiniteNetwork((0, 1), ((0, 1, 0.0),))
        with pytest.raises(ValueError, match="weight"):
            FiniteNetwork((0, 1), ((0, 1, -3.0),))

    def test_rejects_isolated_vertex(self):
        with pytest.raises(ValueError, match="zero strength"):
            FiniteNetwork((0, 1, 2), ((0, 1, 1.0),))

    def test_rejects_stray_edge_and_boundary(self):
        with pytest.raises(ValueError, match="leaves the vertex set"):
            FiniteNetwork((0, 1), ((0, 2, 1.0),))
        with pytest.raises(ValueError, match="boundary"):
            FiniteNetwork((0, 1), ((0, 1, 1.0),), boundary=frozenset([7]))

    def test_strengths_and_adjacency(self):
        net = FiniteNetwork.from_edges([(0, 1, 2.0), (1, 2, 3.0)])
        assert net.index == {0: 0, 1: 1, 2: 2}
        assert np.allclose(net.strengths, [2.0, 5.0, 3.0])
        assert dict(net.adjacency[1]) == {0: 2.0, 2: 3.0}
        # laplacian rows sum to zero
        assert np.allclose(np.asarray(net.laplacian.sum(axis=1)).ravel(), 0)

    def test_csv_roundtrip_with_tuple_vertices(self, tmp_path):
        net = FiniteNetwork.from_edges(
            [((0, 0), (0, 1), 0.125), ((0, 1), (1, 1), 7.5)],
            boundary=[(0, 0)])
        path = tmp_path / "net.csv"
        network_to_csv(net, path)
        back = network_from_csv(path)
        assert back.vertices == net.vertices
        assert back.edges == net.edges
        assert back.boundary == net.boundary

    def test_csv_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="edge-list"):
            network_from_csv(path)


class TestVertexMeasure:
    def test_support_and_mass(self):
        m = VertexMeasure({0: 0.25, 3: 0.75}, frozenset([0, 3, 5]))
        assert m.mass == pytest.approx(1.0)
        assert m.normalized().weights == m.weights

    def test_rejects_weight_outside_support(self):
        with pytest.raises(ValueError, match="support"):
            VertexMeasure({1: 0.5}, frozenset([0]))

    def test_rejects_negative_weight(self):
        with pytest.raises(ValueError, match="nonnegative"):
            VertexMeasure({0: -0.5}, frozenset([0]))

    def test_point_mass(self):
        m = VertexMeasure.point_mass((3, 4))
        assert m.weights == {(3, 4): 1.0} and m.mass == 1.0


# ---------------------------------------------------------------------------
# harmonic extension

class TestHarmonicExtension:
    def test_path_midpoint(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        h = harmonic_extension(net, {0: 0.0, 2: 1.0})
        assert h == {0: 0.0, 1: 0.5, 2: 1.0}

    def test_all_boundary_passthrough(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        data = {0: 3.0, 1: -1.0, 2: 7.0}
        assert harmonic_extension(net, data) == data

    def test_unit_grid_columns(self):
        sch = default_desk_schedule(1).with_K(1, 7.5)
        env = Environment(sch, zero_offsets(sch))
        net = export_finite_network(env, 0, ((0, 0), (4, 4)))
        h = harmonic_extension(net, {**{(0, y): 0.0 for y in range(5)},
                                     **{(4, y): 1.0 for y in range(5)}})
        for (x, y), val in h.items():
            assert val == pytest.approx(x / 4, abs=1e-12)

    def test_maximum_principle_random(self):
        for seed in range(10):
            net = random_connected_network(seed, max_vertices=30)
            gen = np.random.default_rng(seed)
            k = min(net.vertex_count, max(2, int(gen.integers(2, 6))))
            picks = gen.choice(net.vertex_count, size=k, replace=False)
            data = {int(v): float(gen.normal()) for v in picks}
            h = harmonic_extension(net, data)
            lo, hi = min(data.values()), max(data.values())
            assert all(lo - 1e-12 <= v <= hi + 1e-12 for v in h.values())

    def test_empty_boundary_rejected(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0)])
        with pytest.raises(ValueError, match="nonempty"):
            harmonic_extension(net, {})

    def test_unknown_boundary_vertex_rejected(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0)])
        with pytest.raises(ValueError, match="not in the network"):
            harmonic_extension(net, {9: 1.0})

    def test_disconnected_component_named(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(SingularNetworkError) as err:
            harmonic_extension(net, {0: 1.0})
        assert set(err.value.component) == {2, 3}

    def test_residual_below_contract(self):
        # backward error of the reported potentials, checked directly
        net = random_connected_network(7)
        data = {0: 0.0, net.vertex_count - 1: 1.0}
        h = harmonic_extension(net, data)
        vec = np.array([h[v] for v in net.vertices])
        resid = net.laplacian @ vec
        free = [i for i, v in enumerate(net.vertices) if v not in data]
        scale = float(np.abs(net.laplacian).sum(axis=1).max())
        rel = np.max(np.abs(resid[free])) / (scale * np.max(np.abs(vec)))
        assert rel <= 1e-12


# ---------------------------------------------------------------------------
# resistance and capacity

class TestEffectiveResistance:
    def test_path_is_two(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        r, pot = effective_resistance(net, [0], [2])
        assert r == pytest.approx(2.0, rel=1e-12)
        assert pot[0] == 0.0 and pot[2] == 1.0

    def test_triangle(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0),
                                        (0, 2, 1.0)])
        r, _ = effective_resistance(net, [0], [1])
        assert r == pytest.approx(2 / 3, rel=1e-12)

    @pytest.mark.parametrize("L", [2, 4, 8, 16])
    def test_grid_closed_form(self, L):
        sch = default_desk_schedule(1).with_K(1, 7.5)
        env = Environment(sch, zero_offsets(sch))
        net = export_finite_network(env, 0, ((0, 0), (L, L)))
        r, _ = effective_resistance(net,
                                    [(0, y) for y in range(L + 1)],
                                    [(L, y) for y in range(L + 1)])
        assert abs(r - L / (L + 1)) <= 1e-10

    def test_energy_resistance_duality(self):
        for seed in range(8):
            net = random_connected_network(seed, max_vertices=40)
            r, pot = effective_resistance(net, [0], [net.vertex_count - 1])
            assert dirichlet_energy(net, pot) * r == pytest.approx(
                1.0, abs=1e-10)

    def test_overlapping_blocks_rejected(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        with pytest.raises(ValueError, match="overlap"):
            effective_resistance(net, [0, 1], [1, 2])

    def test_disconnected_blocks_rejected(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(SingularNetworkError):
            effective_resistance(net, [0], [2])

    def test_rayleigh_monotonicity(self):
        # raising any single conductance cannot raise the resistance
        base = random_connected_network(3, max_vertices=20)
        r0, _ = effective_resistance(base, [0], [base.vertex_count - 1])
        gen = np.random.default_rng(11)
        for _ in range(10):
            j = int(gen.integers(0, base.edge_count))
            bumped = [(u, v, w * 4.0) if i == j else (u, v, w)
                      for i, (u, v, w) in enumerate(base.edges)]
            net = FiniteNetwork(base.vertices, tuple(bumped))
            r1, _ = effective_resistance(net, [0], [base.vertex_count - 1])
            assert r1 <= r0 + 1e-12


class TestCapacitaryMeasure:
    def test_path_values(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        e12, nu1 = capacitary_measure(net, [0], [2])
        assert e12.weights == {0: pytest.approx(0.5, rel=1e-12)}
        assert nu1.weights == {0: pytest.approx(1.0, rel=1e-12)}

    def test_singleton_block_is_point_mass(self):
        for seed in (2, 5):
            net = random_connected_network(seed, max_vertices=15)
            e12, nu1 = capacitary_measure(net, [0],
                                          [net.vertex_count - 1])
            assert set(nu1.weights) == {0}
            assert nu1.mass == pytest.approx(1.0, rel=1e-9)

    def test_mass_is_inverse_resistance(self):
        for seed in range(6):
            net = random_connected_network(seed, max_vertices=30)
            A1 = [0, 1] if net.vertex_count > 3 else [0]
            A2 = [net.vertex_count - 1]
            r, _ = effective_resistance(net, A1, A2)
            e12, nu1 = capacitary_measure(net, A1, A2)
            assert e12.mass * r == pytest.approx(1.0, rel=1e-9)
            assert nu1.mass == pytest.approx(1.0, rel=1e-9)
            assert all(w >= 0 for w in e12.weights.values())

    def test_reproduces_hitting_probability_through_green(self):
        # u(x) = sum_z e12(z) g_{A2}(z, x) equals P^x(T_1 < T_2)
        for seed in (41, 44, 47):
            net = random_connected_network(seed, max_vertices=8)
            n = net.vertex_count
            if n < 3:
                continue
            A1, A2 = [0], [n - 1]
            e12, _ = capacitary_measure(net, A1, A2)
            g = green_function(net, A2)
            probs = first_step_hitting_probability(net, A1, A2)
            for x, want in probs.items():
                got = sum(w * g.value(z, x) for z, w in e12.weights.items())
                assert got == pytest.approx(want, abs=1e-10)


# ---------------------------------------------------------------------------
# killed chain

class TestGreenFunction:
    def test_path_killed_at_end(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        g = green_function(net, [2])
        assert g.vertices == (0, 1)
        assert np.allclose(g.matrix, [[2.0, 1.0], [1.0, 1.0]], atol=1e-12)
        assert g.hitting_time(0) == pytest.approx(3.0, rel=1e-12)

    def test_empty_killed_rejected(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0)])
        with pytest.raises(ValueError, match="nonempty"):
            green_function(net, [])

    def test_all_killed_rejected(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0)])
        with pytest.raises(ValueError, match="every vertex"):
            green_function(net, [0, 1])

    def test_symmetry_and_sign(self):
        for seed in range(8):
            net = random_connected_network(seed, max_vertices=25)
            g = green_function(net, [net.vertex_count - 1])
            m = g.matrix
            denom = np.abs(m).max()
            assert np.abs(m - m.T).max() / denom <= 1e-10
            assert m.min() >= -1e-12 * denom

    def test_row_sums_match_elimination_oracle(self):
        for net in small_suite():
            target = [net.vertex_count - 1]
            want = first_step_hitting_times(net, target)
            got = green_function(net, target).hitting_times()
            for v, t in want.items():
                assert got[v] == pytest.approx(t, rel=1e-10, abs=1e-10)


class TestExpectedHittingTime:
    def test_path_point_mass(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        assert expected_hitting_time(net, 0, [2]) == pytest.approx(
            3.0, rel=1e-12)

    def test_start_on_target_is_zero(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        assert expected_hitting_time(net, 2, [2]) == 0.0

    def test_matches_green_row_sums(self):
        for net in small_suite():
            target = [net.vertex_count - 1]
            g = green_function(net, target).hitting_times()
            for v, t in g.items():
                direct = expected_hitting_time(net, v, target)
                assert direct == pytest.approx(t, rel=1e-10, abs=1e-10)

    def test_matches_elimination_oracle(self):
        for net in small_suite():
            target = [net.vertex_count - 1]
            want = first_step_hitting_times(net, target)
            for v, t in want.items():
                got = expected_hitting_time(net, v, target)
                assert got == pytest.approx(t, rel=1e-10, abs=1e-10)

    def test_measure_start_averages(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        m = VertexMeasure({0: 0.5, 2: 0.5}, frozenset([0, 2]))
        # E^0 T2 = 3, E^2 T2 = 0
        assert expected_hitting_time(net, m, [2]) == pytest.approx(
            1.5, rel=1e-12)

    def test_unreachable_target(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(UnreachableTargetError):
            expected_hitting_time(net, 0, [3])
        # an unrelated disconnected island does not block the solve
        assert expected_hitting_time(net, 2, [3]) == pytest.approx(
            1.0, rel=1e-12)

    def test_non_probability_start_rejected(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0)])
        bad = VertexMeasure({0: 0.25}, frozenset([0]))
        with pytest.raises(ValueError, match="mass"):
            expected_hitting_time(net, bad, [1])


class TestCommuteIdentity:
    def test_path_exact(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        assert commute_identity_check(net, [0], [2]) <= 1e-12

    def test_triangle_exact(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0),
                                        (0, 2, 1.0)])
        assert commute_identity_check(net, [0], [1]) <= 1e-12

    def test_random_suite(self):
        worst = 0.0
        for seed in range(25):
            net = random_connected_network(seed)
            res = commute_identity_check(net, [0], [net.vertex_count - 1])
            worst = max(worst, res)
        assert worst <= 1e-9

    def test_block_targets(self):
        net = random_connected_network(9, max_vertices=30)
        n = net.vertex_count
        res = commute_identity_check(net, [0, 1], [n - 2, n - 1])
        assert res <= 1e-9


# ---------------------------------------------------------------------------
# harnack

class TestHarnackRatio:
    def test_constant_function_is_one(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0), (1, 2, 1.0)])
        assert harnack_ratio(net, {0: 2.0, 1: 2.0, 2: 2.0}, [0, 1, 2]) == 1.0

    def test_homogeneous_window_inner_third(self):
        # 0/1 sides of a 33 x 33 unit window give the linear potential,
        # so the inner third [11, 21]^2 has ratio exactly 21/11
        sch = default_desk_schedule(1).with_K(1, 7.5)
        env = Environment(sch, zero_offsets(sch))
        net = export_finite_network(env, 0, ((0, 0), (32, 32)))
        h = harmonic_extension(net, {**{(0, y): 0.0 for y in range(33)},
                                     **{(32, y): 1.0 for y in range(33)}})
        region = [(x, y) for x in range(11, 22) for y in range(11, 22)]
        ratio = harnack_ratio(net, h, region)
        assert abs(ratio - 21 / 11) <= 1e-9

    def test_nonpositive_rejected(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0)])
        with pytest.raises(ValueError, match="positive"):
            harnack_ratio(net, {0: 0.0, 1: 1.0}, [0, 1])

    def test_empty_region_rejected(self):
        net = FiniteNetwork.from_edges([(0, 1, 1.0)])
        with pytest.raises(ValueError, match="nonempty"):
            harnack_ratio(net, {0: 1.0}, [])


# ---------------------------------------------------------------------------
# window export

@pytest.fixture(scope="module")
def desk1_env():
    sch = default_desk_schedule(1).with_K(1, 7.5)
    return Environment(sch, zero_offsets(sch))


class TestExportFiniteNetwork:
    def test_homogeneous_window_shape(self, desk1_env):
        k = 5
        net = export_finite_network(desk1_env, 0, ((0, 0), (k, k)))
        assert net.vertex_count == (k + 1) ** 2
        assert net.edge_count == 2 * k * (k + 1)
        assert all(w == 1.0 for _, _, w in net.edges)
        # boundary is the perimeter
        assert len(net.boundary) == 4 * k

    def test_corners_normalized(self, desk1_env):
        net = export_finite_network(desk1_env, 0, ((3, 4), (0, 0)))
        assert (0, 0) in net.index and (3, 4) in net.index

    def test_obstacle_window_matches_fundamental_enumeration(self,
                                                             desk1_env):
        sch = desk1_env.schedule
        a = sch.a_at(1)
        paint = enumerate_fundamental(desk1_env, 1)
        net = export_finite_network(desk1_env, 1, ((0, 0), (a, a)))
        for u, v, w in net.edges:
            assert w == paint[(u, v)]
        # and the special-edge census matches on the window interior
        weights = [w for _, _, w in net.edges]
        assert weights.count(sch.eta_at(1)) == 72
        assert weights.count(7.5) == 320

    def test_disjoint_windows_disjoint_vertices(self, desk1_env):
        n1 = export_finite_network(desk1_env, 0, ((0, 0), (3, 3)))
        n2 = export_finite_network(desk1_env, 0, ((10, 10), (13, 13)))
        assert not set(n1.vertices) & set(n2.vertices)

    def test_edge_budget_guard(self, desk1_env):
        with pytest.raises(ValueError, match="export guard"):
            export_finite_network(desk1_env, 0, ((0, 0), (2000, 2000)))

    def test_degenerate_window_rejected(self, desk1_env):
        with pytest.raises(ValueError, match="no edges"):
            export_finite_network(desk1_env, 0, ((5, 5), (5, 5)))

    def test_level_out_of_range(self, desk1_env):
        with pytest.raises(IndexError):
            export_finite_network(desk1_env, 2, ((0, 0), (3, 3)))

    def test_line_window_is_a_path(self, desk1_env):
        net = export_finite_network(desk1_env, 0, ((0, 0), (0, 3)))
        r, _ = effective_resistance(net, [(0, 0)], [(0, 3)])
        assert r == pytest.approx(3.0, rel=1e-12)


# ---------------------------------------------------------------------------
# calibration

@pytest.fixture(scope="module")
def roomy_uncal():
    sch = roomy_desk_schedule(1)
    return Environment(sch, zero_offsets(sch))


class TestCalibrateK:
    def test_roomy_level_one(self, roomy_uncal):
        res = calibrate_K(roomy_uncal, 1, 1e-6)
        assert res.feasible
        lo, hi = res.bracket
        assert 1.0 < lo <= res.K <= hi < 1e12
        assert hi / lo - 1.0 <= 1e-6
        assert abs(res.relative_residual) <= 1e-5
        # probes decrease in K (Rayleigh)
        by_k = sorted(res.probes)
        assert all(r1 >= r2 for (_, r1), (_, r2) in zip(by_k, by_k[1:]))
        # diagnostic square responds to the bar
        bs = res.beta_square
        assert bs["with_obstacle"] < bs["obstacle_removed"]

    def test_rerun_bit_identical(self, roomy_uncal):
        r1 = calibrate_K(roomy_uncal, 1, 1e-4)
        r2 = calibrate_K(roomy_uncal, 1, 1e-4)
        assert r1 == r2

    def test_infeasible_reports_residual_curve(self, roomy_uncal,
                                               monkeypatch):
        import walkforge.network as wn
        real = wn.classify_arrays

        def gates_only(schedule, n, ux, uy, horiz):
            codes = real(schedule, n, ux, uy, horiz)
            codes[codes == 2] = 0
            return codes

        monkeypatch.setattr(wn, "classify_arrays", gates_only)
        res = calibrate_K(roomy_uncal, 1, 1e-6)
        assert not res.feasible
        assert res.K is None and res.residual is None
        ks = sorted(k for k, _ in res.probes)
        assert ks[0] == 1.0 and ks[-1] == 1e12 and len(ks) >= 5

    def test_missing_lower_level_rejected(self):
        sch = roomy_desk_schedule(2)
        env = Environment(sch, zero_offsets(sch))
        with pytest.raises(CalibrationMissingError):
            calibrate_K(env, 2, 1e-4)

    def test_level_out_of_range(self, roomy_uncal):
        with pytest.raises(IndexError):
            calibrate_K(roomy_uncal, 2, 1e-4)

    def test_report_is_json_safe(self, roomy_uncal):
        import json
        res = calibrate_K(roomy_uncal, 1, 1e-3)
        blob = json.dumps(res.to_dict())
        assert json.loads(blob)["level"] == 1


# ---------------------------------------------------------------------------
# random generator

class TestRandomNetwork:
    def test_deterministic(self):
        a, b = random_connected_network(5), random_connected_network(5)
        assert a.vertices == b.vertices and a.edges == b.edges

    def test_size_and_weight_range(self):
        for seed in range(30):
            net = random_connected_network(seed)
            assert 2 <= net.vertex_count <= 50
            for _, _, w in net.edges:
                assert 1e-3 <= w <= 1e3

    def test_connected(self):
        from scipy.sparse.csgraph import connected_components
        for seed in range(30):
            net = random_connected_network(seed)
            ncomp, _ = connected_components(net.laplacian, directed=False)
            assert ncomp == 1
