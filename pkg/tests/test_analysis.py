import math
from types import MappingProxyType

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from errors import ParameterError
from analysis_module import (
    LimitCase, RoundTrip, alternating_limits, analyze, check_impact_drop, check_submartingale,
    classify_premature_closure, classify_round_trips, closure_gap, covariance_y_inverse_gamma,
    interior_fixed_point, long_time_limit, pimi_cutoff, y_sequence,
)
from backward_engine import (
    TREE_MODE, YField, compute_Y, compute_Y_pimi, expected_future_impacts, homogeneous_map, node_moments,
)
from execution_module import INF, deviation_position_ratio, generate_strategy, optimal_trade
from market_model import build_chain, build_tree, deterministic_pimi, parse_pimi, pimi_to_tree, validate
from market_model.example_builders import (
    build_example, build_example_impact_tracks_resilience, build_example_premature_stochastic,
    build_example_unit_resilience_step, build_random_pimi,
)


def _admissible_triple(beta_bar, eta_bar, fill):
    """(E[beta], E[eta], E[beta^2/eta]) with E[beta^2/eta] between E[beta]^2/E[eta] and 1"""
    low = beta_bar ** 2 / eta_bar
    return beta_bar, eta_bar, low + fill * (1.0 - low)


class TestRoundTrips:
    def test_unit_mean_model_has_none(self):
        tree = build_chain([1.0, 1.0], [1.0, 2.0, 4.0])
        labels = classify_round_trips(tree, compute_Y(tree))
        assert set(labels.values()) == {RoundTrip.NONE}

    def test_roundtrip_preset(self):
        tree = build_example('roundtrip-unit-mean')
        yfield = compute_Y(tree)
        m = node_moments(tree, tree.root, yfield)
        assert m.mean_beta == pytest.approx(1.0, abs=1e-15)
        assert yfield[tree.root] < 0.5
        assert classify_round_trips(tree, yfield)[tree.root] is RoundTrip.PROFITABLE

    def test_decreasing_expected_impact_is_profitable(self, random_trees):
        for tree in random_trees(30, unit_mean_beta=0.5, seed=3):
            yfield = compute_Y(tree)
            labels = classify_round_trips(tree, yfield)
            for node_id in tree.nodes:
                if tree.is_terminal(node_id):
                    continue
                if node_moments(tree, node_id, yfield).mean_eta <= 1.0:
                    assert labels[node_id] is RoundTrip.PROFITABLE

    def test_event_characterizations(self, random_trees):
        tol = 1e-9
        for tree in random_trees(200, max_depth=4, unit_mean_beta=0.6, seed=5):
            yfield = compute_Y(tree)
            labels = classify_round_trips(tree, yfield, tol)
            one_go = classify_premature_closure(tree, yfield, tol)
            for node_id in tree.nodes:
                if tree.is_terminal(node_id):
                    assert one_go[node_id]
                    continue
                m = node_moments(tree, node_id, yfield)
                children_at_half = all(
                    abs(yfield.for_node(c) - 0.5) <= 1e-12 for c in tree.children(node_id))
                if children_at_half and abs(m.mean_beta - 1.0) <= 1e-12:
                    assert labels[node_id] is RoundTrip.NONE
                    assert one_go[node_id]
                if abs(m.mean_beta - 1.0) >= 1e-2:
                    assert labels[node_id] is RoundTrip.PROFITABLE
                    if all(tree.is_terminal(c.id) for c in tree.children(node_id)):
                        assert not one_go[node_id]
                if labels[node_id] is RoundTrip.NONE:
                    assert m.mean_y == pytest.approx(0.5, abs=1e-4)

    def test_heavy_branch_next_to_boundary(self):
        # E[beta] = 1 at the root; the rare branch has beta^2/eta = 50 and a
        # child Y a few 1e-9 below 1/2
        delta = math.sqrt(5e-9)
        beta_a = (1.0 - 0.01 * 1.5) / 0.99
        tree = build_tree({'horizon': 2, 'start': 0, 'nodes': [
            {'id': 0, 'time': 0, 'parent': None, 'gamma': 1.0},
            {'id': 1, 'time': 1, 'parent': 0, 'prob': 0.99, 'beta': beta_a, 'gamma': 3.0},
            {'id': 2, 'time': 1, 'parent': 0, 'prob': 0.01, 'beta': 1.5, 'gamma': 0.045},
            {'id': 3, 'time': 2, 'parent': 1, 'prob': 1.0, 'beta': 1.0, 'gamma': 6.0},
            {'id': 4, 'time': 2, 'parent': 2, 'prob': 1.0, 'beta': 1.0 - delta, 'gamma': 0.0675},
        ]})
        assert validate(tree).ok
        yfield = compute_Y(tree)
        labels = classify_round_trips(tree, yfield)
        assert labels[0] is RoundTrip.PROFITABLE
        assert labels[2] is RoundTrip.PROFITABLE
        assert labels[1] is RoundTrip.NONE
        assert closure_gap(tree, 0, yfield) == pytest.approx(0.5 - yfield[0], rel=1e-4)
        assert analyze(tree, yfield).node(0).round_trip is RoundTrip.PROFITABLE

    def test_gap_decomposition(self, random_trees):
        for tree in random_trees(100, max_depth=3, unit_mean_beta=0.5, seed=11):
            yfield = compute_Y(tree)
            one_go = classify_premature_closure(tree, yfield, verify=False)
            labels = classify_round_trips(tree, yfield)
            for node_id in tree.nodes:
                if tree.is_terminal(node_id):
                    continue
                gap = closure_gap(tree, node_id, yfield)
                y = yfield[node_id]
                assert gap == pytest.approx(0.5 - y, abs=1e-12)
                children_at_half = all(
                    abs(yfield.for_node(c) - 0.5) <= 1e-12 for c in tree.children(node_id))
                if labels[node_id] is RoundTrip.NONE:
                    assert one_go[node_id] and children_at_half
                elif one_go[node_id] and children_at_half:
                    pytest.fail(f"Node {node_id} closes at once with children at 1/2 but Y={y!r}")


class TestPrematureClosure:
    def test_deterministic_preset(self):
        tree = build_example('premature-det')
        yfield = compute_Y(tree)
        flags = classify_premature_closure(tree, yfield)
        assert flags[tree.root]
        assert yfield[tree.root] < 0.5
        assert not flags[tree.levels[1][0]]

    def test_stochastic_preset(self):
        tree = build_example('premature-stoch')
        yfield = compute_Y(tree)
        assert classify_premature_closure(tree, yfield)[tree.root]
        assert covariance_y_inverse_gamma(tree, yfield, tree.start + 1) == pytest.approx(
            0.5 * (5.0 / 16.0) * (0.25 - 0.5), abs=1e-12)
        for node in tree.nodes.values():
            if node.parent is not None:
                assert 0.0 < node.beta < 1.0

    def test_no_closure_for_deterministic_resilience_below_one(self):
        for seed in range(500):
            model = build_random_pimi(seed, steps=4, atoms=1, beta_range=(0.05, 0.95))
            tree = pimi_to_tree(model)
            flags = classify_premature_closure(tree, compute_Y_pimi(model))
            assert not any(flags[i] for i in tree.nodes if not tree.is_terminal(i))

    def test_deterministic_preset_last_step(self):
        tree = build_example('premature-det')
        assert compute_Y(tree)[tree.levels[1][0]] == pytest.approx(0.375, abs=1e-15)

    def test_stochastic_covariance_over_p(self):
        rng = np.random.default_rng(21)
        for p in rng.uniform(0.05, 0.95, size=10):
            tree = build_example_premature_stochastic(float(p))
            yfield = compute_Y(tree)
            assert classify_premature_closure(tree, yfield)[tree.root]
            assert covariance_y_inverse_gamma(tree, yfield, tree.start + 1) == pytest.approx(
                0.5 * (5.0 / 16.0) * (p * p - p), abs=1e-12)

    def test_last_step_closure_is_no_round_trip(self, random_trees):
        for tree in random_trees(100, unit_mean_beta=0.5, seed=13):
            yfield = compute_Y(tree)
            labels = classify_round_trips(tree, yfield)
            one_go = classify_premature_closure(tree, yfield)
            for node_id in tree.level(tree.horizon - 1):
                assert one_go[node_id] == (labels[node_id] is RoundTrip.NONE)

    def test_unflagged_nodes_keep_part_of_the_position(self, random_trees):
        for tree in random_trees(50, unit_mean_beta=0.5, seed=14):
            yfield = compute_Y(tree)
            one_go = classify_premature_closure(tree, yfield)
            for node_id, flagged in one_go.items():
                if not flagged:
                    assert optimal_trade(tree, node_id, yfield, 1.0, 0.0) != -1.0


class TestPimiCutoff:
    def test_trailing_unit_mean_steps(self):
        model = deterministic_pimi([0.5, 0.8, 1.0, 1.0], [1.0, 1.2, 2.0, 1.5])
        assert pimi_cutoff(model) == 2

    def test_no_unit_mean_tail(self):
        model = deterministic_pimi([0.5, 0.7], [1.0, 1.2])
        assert pimi_cutoff(model) == model.horizon

    def test_all_unit_mean(self):
        model = parse_pimi({'horizon': 3, 'start': 0, 'pimi': {'gamma_start': 1.0, 'steps': [
            [[0.5, 0.8, 1.0], [0.5, 1.2, 2.0]],
            [[1.0, 1.0, 2.0]],
            [[0.25, 0.4, 1.0], [0.75, 1.2, 2.5]],
        ]}})
        assert pimi_cutoff(model) == 0

    def test_last_mean_just_outside_tolerance(self):
        # Y_1 differs from 1/2 only by O(1e-18), below double precision at 1/2
        model = deterministic_pimi([0.5, 1.0 + 2e-9], [1.0, 2.0])
        assert pimi_cutoff(model) == model.horizon

    def test_unit_step_before_small_departure(self):
        model = deterministic_pimi([1.0, 1.0 + 2e-9], [2.0, 2.0])
        assert pimi_cutoff(model) == model.horizon
        assert compute_Y_pimi(model)[0] == pytest.approx(0.5, abs=1e-12)


class TestLimits:
    def test_constant_half(self):
        result = long_time_limit(1.0, 2.0, 0.6)
        assert result.case is LimitCase.CONSTANT_HALF
        assert result.value == 0.5
        assert all(y == 0.5 for y in y_sequence((1.0, 2.0, 0.6), 1000))

    def test_zero(self):
        result = long_time_limit(0.5, 0.8, 0.5)
        assert result.case is LimitCase.ZERO
        assert result.converged
        assert y_sequence((0.5, 0.8, 0.5), 10 ** 4)[-1] < 1e-9

    def test_unit_expected_impact_decays_slowly(self):
        result = long_time_limit(0.5, 1.0, 0.3, max_iter=1000)
        assert result.case is LimitCase.ZERO
        assert not result.converged
        assert 0.0 < result.residual < 0.5

    @pytest.mark.parametrize("params", [(0.5, 0.99999, 0.3), (0.999, 1.00001, 0.9981)])
    def test_expected_impact_near_one_warns(self, params):
        result = long_time_limit(*params, max_iter=1000)
        assert not result.converged
        assert result.iterations == 1000
        assert 0.0 < result.residual < 0.5

    def test_interior(self):
        result = long_time_limit(1.2, 2.0, 0.8)
        assert result.case is LimitCase.INTERIOR
        assert result.value == pytest.approx(5.0 / 12.0, abs=1e-9)
        assert abs(homogeneous_map(1.2, 2.0, 0.8)(result.value) - result.value) <= 1e-11

    def test_rejects_unrealizable(self):
        with pytest.raises(ParameterError):
            long_time_limit(1.5, 2.0, 0.8)
        with pytest.raises(ParameterError):
            long_time_limit(1.0, 2.0, 1.0)
        with pytest.raises(ParameterError):
            long_time_limit(-1.0, 2.0, 0.5)

    def test_alternating(self):
        result = alternating_limits((1.0, 2.0, 0.6), (1.3, 2.0, 0.9))
        first, second = result.values
        floor = interior_fixed_point(1.3, 2.0, 0.9)
        assert floor == pytest.approx(0.05 / 0.19, abs=1e-12)
        assert result.case is LimitCase.ALTERNATING
        assert abs(first - second) > 1e-6
        for value in result.values:
            assert floor - 1e-12 <= value <= 0.5
        swapped = alternating_limits((1.3, 2.0, 0.9), (1.0, 2.0, 0.6))
        assert swapped.values == (second, first)

    def test_alternating_first_iterates(self):
        other, unit = homogeneous_map(1.3, 2.0, 0.9), homogeneous_map(1.0, 2.0, 0.6)
        y = other(0.5)
        assert y == pytest.approx(0.3875, abs=1e-12)
        assert unit(y) == pytest.approx(0.4278, abs=1e-4)

    def test_alternating_needs_one_unit_triple(self):
        with pytest.raises(ParameterError):
            alternating_limits((1.2, 2.0, 0.8), (1.3, 2.0, 0.9))

    @given(beta_bar=st.floats(0.1, 2.0), eta_bar=st.floats(0.5, 4.0), fill=st.floats(0.01, 0.99),
           y1=st.floats(0.0, 0.5), y2=st.floats(0.0, 0.5))
    @settings(max_examples=200, deadline=None)
    def test_map_is_increasing(self, beta_bar, eta_bar, fill, y1, y2):
        assume(beta_bar ** 2 / eta_bar < 0.99)
        g = homogeneous_map(*_admissible_triple(beta_bar, eta_bar, fill))
        low, high = sorted((y1, y2))
        assert g(low) <= g(high)


class TestReport:
    def test_premature_stochastic_report(self):
        tree = build_example('premature-stoch')
        report = analyze(tree, compute_Y(tree))
        root = report.node(tree.root)
        assert root.one_go
        assert root.z_ratio is INF
        assert root.round_trip is RoundTrip.PROFITABLE
        frame = report.to_frame()
        assert list(frame.columns) == ['node_id', 'time', 'gamma', 'Y', 'round_trip', 'one_go', 'z', 'upper_bound']
        assert report.to_dict()['pimi_cutoff'] is None

    def test_pimi_report(self):
        model = deterministic_pimi([0.5, 1.0], [1.0, 2.0])
        tree = pimi_to_tree(model)
        report = analyze(tree, compute_Y_pimi(model), pimi=model)
        assert report.pimi_cutoff == 1
        assert report.limit_result.case is LimitCase.UNDEFINED

    def test_homogeneous_pimi_limit(self):
        model = deterministic_pimi([1.2] * 3, [2.0] * 3)
        tree = pimi_to_tree(model)
        report = analyze(tree, compute_Y_pimi(model), pimi=model)
        assert report.limit_result.case is LimitCase.INTERIOR

    def test_submartingale(self, random_trees):
        for tree in random_trees(50, max_depth=4, unit_mean_beta=0.3, seed=6):
            assert check_submartingale(tree, compute_Y(tree)) == []


class TestUnitResilienceStep:
    def test_preset(self):
        tree = build_example('unit-resilience-step')
        yfield = compute_Y(tree)
        root, middle = tree.levels[0][0], tree.levels[1][0]
        assert node_moments(tree, root, yfield).mean_beta == 1.0
        assert yfield[middle] == pytest.approx(0.375, abs=1e-15)
        assert yfield[root] < 0.5
        assert classify_round_trips(tree, yfield)[root] is RoundTrip.PROFITABLE

    @pytest.mark.parametrize("beta_N, gammas", [
        (0.5, (1.0, 2.0, 2.0)),
        (1.3, (1.0, 1.5, 3.0)),
        (0.8, (2.0, 2.5, 2.0)),
    ])
    def test_trade_from_zero_position(self, beta_N, gammas):
        tree = build_example_unit_resilience_step(beta_N, gammas)
        yfield = compute_Y(tree)
        root, middle = tree.levels[0][0], tree.levels[1][0]
        eta = tree.eta(middle)
        factor = (0.5 - yfield[middle]) * (1.0 - 1.0 / eta)
        curvature = node_moments(tree, root, yfield).curvature
        assert factor > 0.0
        assert optimal_trade(tree, root, yfield, 0.0, 0.0) == 0.0
        for d in (-0.7, 0.4, 1.0):
            trade = optimal_trade(tree, root, yfield, 0.0, d)
            assert trade != 0.0
            assert trade == pytest.approx(-d / gammas[0] * factor / curvature, rel=1e-10)


class TestImpactTracksResilience:
    def test_y_is_expected_terminal_impact(self):
        for seed in range(20):
            tree = build_example_impact_tracks_resilience(seed, depth=3, branching=3)
            yfield = compute_Y(tree)
            for node_id, node in tree.nodes.items():
                if tree.is_terminal(node_id):
                    continue
                expected = expected_future_impacts(tree, node_id)[-1] / (2.0 * node.gamma)
                assert yfield[node_id] == pytest.approx(expected, rel=1e-12)

    def test_post_trade_deviation_vanishes(self):
        for seed in range(20):
            tree = build_example_impact_tracks_resilience(seed)
            yfield = compute_Y(tree)
            for node_id in tree.nodes:
                if not tree.is_terminal(node_id):
                    assert deviation_position_ratio(tree, node_id, yfield) == pytest.approx(0.0, abs=1e-12)

    def test_preset_waits(self):
        tree = build_example('impact-tracks-resilience', seed=3)
        field_ = generate_strategy(tree, compute_Y(tree), 1.0, 0.0)
        for node_id in tree.nodes:
            if not tree.is_terminal(node_id):
                assert field_.trade(node_id) == pytest.approx(0.0, abs=1e-12)


class TestImpactDrop:
    def test_no_failures_on_valid_models(self, random_trees):
        for tree in random_trees(50, max_depth=4, unit_mean_beta=0.5, seed=17):
            assert check_impact_drop(tree, compute_Y(tree)) == []

    def test_drop_forces_round_trips(self, random_trees):
        for tree in random_trees(50, max_depth=4, unit_mean_beta=0.5, seed=18):
            yfield = compute_Y(tree)
            labels = classify_round_trips(tree, yfield)
            for node_id, node in tree.nodes.items():
                if tree.is_terminal(node_id):
                    continue
                if min(expected_future_impacts(tree, node_id)) < node.gamma * (1.0 - 1e-6):
                    assert labels[node_id] is RoundTrip.PROFITABLE
                    assert yfield[node_id] < 0.5

    def test_flags_inconsistent_field(self):
        tree = build_chain([0.5], [1.0, 0.5])
        assert check_impact_drop(tree, YField(MappingProxyType({0: 0.5, 1: 0.5}), TREE_MODE)) == [0]
