import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochmatch.errors import ResourceError
from stochmatch.instances import (Arrival, Edge, EdgeArrivalInstance, GeneralArrival,
                                  GeneralVertexArrivalInstance, Scenario, VertexArrivalInstance,
                                  gen_correlation, gen_random, gen_tightness)
from stochmatch.oracles import (Tolerances, check_incl_excl, enumerate_edge_outcomes,
                                enumerate_vertex_outcomes, exact_edge_rounding,
                                exact_vertex_rounding, optimal_online, optimal_online_edge,
                                optimal_online_general, optimal_online_vertex, verify_all)
from stochmatch.relaxation import FractionalSolution, build_vertex_lp, solve_instance
from stochmatch.rounding_edge import build_edge_schedule
from stochmatch.rounding_vertex import build_general_schedule, build_schedule


# -- an independent optimal-online reference ---------------------------------

def reference_opt(instance):
    """Plain recursion over arrival outcomes keyed by the matched set."""
    if isinstance(instance, EdgeArrivalInstance):
        edges = instance.edges

        @lru_cache(maxsize=None)
        def rec(k, used_a, used_b):
            if k == len(edges):
                return 0.0
            e = edges[k]
            skip = rec(k + 1, used_a, used_b)
            take = skip
            if e.a not in used_a and e.b not in used_b:
                take = e.weight + rec(k + 1, used_a | {e.a}, used_b | {e.b})
            return e.probability * max(skip, take) + (1 - e.probability) * skip
        return rec(0, frozenset(), frozenset())

    if isinstance(instance, VertexArrivalInstance):
        instance = GeneralVertexArrivalInstance.from_vertex(instance)

    @lru_cache(maxsize=None)
    def rec(t, used):
        if t == instance.online_count:
            return 0.0
        a = instance.arrivals[t]
        skip = rec(t + 1, used)
        val = a.residual_mass * skip
        for s in a.scenarios:
            best = skip
            for u, w in zip(a.neighbors, s.weights):
                if u not in used:
                    best = max(best, w + rec(t + 1, used | {u}))
            val += s.mass * best
        return val
    return rec(0, frozenset())


def greedy_value(instance):
    """Expected value of 'take the heaviest free neighbor' by plain enumeration."""
    def rec(t, used):
        if t == instance.online_count:
            return 0.0
        a = instance.arrivals[t]
        free = [(w, -u, u) for u, w in a.edges if u not in used]
        skip = rec(t + 1, used)
        if not free:
            return skip
        w, _, u = max(free)
        return a.probability * (w + rec(t + 1, used | {u})) + (1 - a.probability) * skip
    return rec(0, frozenset())


def test_opt_single_edge():
    assert optimal_online_vertex(VertexArrivalInstance(1, (Arrival(1.0, ((0, 1.0),)),))).value == 1.0
    assert optimal_online_edge(EdgeArrivalInstance(1, 1, (Edge(0, 0, 1.0, 1.0),))).value == 1.0


def test_opt_two_arrivals_one_offline():
    inst = VertexArrivalInstance(1, (Arrival(0.5, ((0, 2.0),)), Arrival(1.0, ((0, 1.0),))))
    assert optimal_online_vertex(inst).value == pytest.approx(1.5)


def test_opt_general_two_scenarios():
    arr = GeneralArrival((0, 1), (Scenario(0.5, (2.0, 0.0)), Scenario(0.5, (0.0, 1.0))))
    assert optimal_online_general(GeneralVertexArrivalInstance(2, (arr,))).value == \
        pytest.approx(1.5)


def test_opt_no_arrivals():
    assert optimal_online_vertex(VertexArrivalInstance(2, ())).value == 0.0
    assert optimal_online_general(GeneralVertexArrivalInstance(2, ())).value == 0.0


def test_opt_edge_skips_light_edge():
    # the two edges conflict through their shared B-side vertex
    inst = EdgeArrivalInstance(2, 1, (Edge(0, 0, 1.0, 1.0), Edge(1, 0, 1.0, 2.0)))
    assert optimal_online_edge(inst).value == pytest.approx(2.0)


def test_opt_edge_accepts_first():
    inst = EdgeArrivalInstance(2, 1, (Edge(0, 0, 0.5, 1.0), Edge(1, 0, 0.5, 1.0)))
    assert optimal_online_edge(inst).value == pytest.approx(0.75)


def test_opt_tightness_at_least_one():
    for n in range(2, 9):
        assert optimal_online_vertex(gen_tightness(n)).value >= 1.0


def test_opt_general_matches_basic_on_degenerate_encoding():
    for seed in range(10):
        inst = gen_random("vertex", seed)
        assert optimal_online_general(GeneralVertexArrivalInstance.from_vertex(inst)).value == \
            pytest.approx(optimal_online_vertex(inst).value, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["vertex", "edge", "general"]), st.integers(0, 100_000))
def test_opt_matches_reference_recursion(kind, seed):
    inst = gen_random(kind, seed)
    assert optimal_online(inst).value == pytest.approx(reference_opt(inst), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_opt_dominates_greedy(seed):
    inst = gen_random("vertex", seed)
    assert optimal_online_vertex(inst).value >= greedy_value(inst) - 1e-12


def test_opt_action_table_is_consistent():
    inst = gen_random("vertex", 2)
    res = optimal_online_vertex(inst)
    assert len(res.actions) == inst.online_count
    for t, act in enumerate(res.actions):
        for mask, u in enumerate(act):
            if u >= 0:
                assert u in inst.arrivals[t].neighbors and not mask >> u & 1


def test_opt_size_limit():
    inst = VertexArrivalInstance(3, (Arrival(1.0, ((0, 1.0),)),))
    with pytest.raises(ResourceError):
        optimal_online_vertex(inst, limit=2)


def test_opt_monotone_in_arrival_probability():
    base = gen_random("vertex", 9)
    lower = optimal_online_vertex(base).value
    boosted = VertexArrivalInstance(base.offline_count, tuple(
        Arrival(min(1.0, a.probability + 0.1), a.edges) for a in base.arrivals))
    assert optimal_online_vertex(boosted).value >= lower - 1e-12


# -- exact propagation -------------------------------------------------------

@pytest.fixture(scope="module")
def correlation():
    inst = gen_correlation(0.01)
    _, x = solve_instance(inst)
    sched = build_schedule(inst, x)
    return inst, x, sched, exact_vertex_rounding(inst, sched)


def test_single_edge_distribution():
    inst = VertexArrivalInstance(1, (Arrival(1.0, ((0, 4.0),)),))
    _, x = solve_instance(inst)
    dist = exact_vertex_rounding(inst, build_schedule(inst, x))
    assert dist.prob_all_matched(1, (0,)) == 1.0 and dist.expected_wm(0) == 4.0


def test_correlation_marginals(correlation):
    *_, dist = correlation
    assert dist.prob_all_matched(2, (0,)) == pytest.approx(5 / 8, abs=1e-12)
    assert dist.prob_all_matched(2, (1,)) == pytest.approx(1 / 16, abs=1e-12)
    assert dist.prob_all_matched(2, (0, 1)) == pytest.approx(1 / 16, abs=1e-12)
    assert dist.covariance(2, 0, 1) == pytest.approx(3 / 128, abs=1e-12)
    assert dist.covariance(2, 0, 1) > 0


def test_distributions_are_normalized():
    for seed in range(10):
        inst = gen_random("general", seed)
        _, y = solve_instance(inst)
        dist = exact_vertex_rounding(inst, build_general_schedule(inst, y))
        for row in dist.before:
            assert abs(row.sum() - 1.0) <= 1e-12 and row.min() >= 0.0


def _enumerated_vertex(schedule):
    paths = enumerate_vertex_outcomes(schedule)
    total = sum(p for p, _ in paths)
    mean = sum(p * o.total_weight for p, o in paths)
    edge = {}
    for p, o in paths:
        for key in o.matched.items():
            edge[key] = edge.get(key, 0.0) + p
    return total, mean, edge


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["vertex", "general"]), st.integers(0, 100_000))
def test_propagation_matches_full_enumeration(kind, seed):
    inst = gen_random(kind, seed, max_online=4, max_offline=3, max_degree=3)
    _, x = solve_instance(inst)
    sched = (build_schedule if kind == "vertex" else build_general_schedule)(inst, x)
    dist = exact_vertex_rounding(inst, sched)
    total, mean, edge = _enumerated_vertex(sched)
    assert total == pytest.approx(1.0, abs=1e-12)
    assert dist.expected_total == pytest.approx(mean, abs=1e-12)
    for key, p in dist.edge_match.items():
        assert p == pytest.approx(edge.get(key, 0.0), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_edge_propagation_matches_full_enumeration(seed):
    inst = gen_random("edge", seed, max_vertices=6, max_edges=6)
    _, x = solve_instance(inst)
    sched = build_edge_schedule(inst, x)
    dist = exact_edge_rounding(inst, sched)
    paths = enumerate_edge_outcomes(sched)
    assert sum(p for p, _ in paths) == pytest.approx(1.0, abs=1e-12)
    for k in range(len(inst.edges)):
        assert dist.match_prob[k] == pytest.approx(
            sum(p for p, o in paths if k in o.matched), abs=1e-12)
        assert dist.proposal_prob[k] == pytest.approx(
            sum(p for p, o in paths if k in o.proposals), abs=1e-12)


def test_edge_single():
    inst = EdgeArrivalInstance(1, 1, (Edge(0, 0, 1.0, 1.0),))
    _, x = solve_instance(inst)
    dist = exact_edge_rounding(inst, x)
    assert dist.match_prob == (0.5,) and dist.proposal_prob == (1.0,)


# -- inclusion-exclusion identity -------------------------------------------

def test_identity_empty_set(correlation):
    *_, dist = correlation
    lhs, rhs, gap = check_incl_excl(dist, 2, (), {})
    assert lhs == rhs == 1.0 and gap == 0.0


def test_identity_unit_weights_sum_to_one(correlation):
    # with every w_u = 1 each side sums a partition of the sample space
    *_, dist = correlation
    lhs, rhs, _ = check_incl_excl(dist, 2, (0, 1), {0: 1.0, 1: 1.0})
    assert lhs == pytest.approx(1.0, abs=1e-15) and rhs == pytest.approx(1.0, abs=1e-15)


def test_identity_zero_weights_give_all_matched(correlation):
    *_, dist = correlation
    lhs, rhs, _ = check_incl_excl(dist, 2, (0, 1), {0: 0.0, 1: 0.0})
    assert lhs == rhs == pytest.approx(dist.prob_all_matched(2, (0, 1)), abs=1e-15)


def test_identity_rejects_bad_subset(correlation):
    *_, dist = correlation
    with pytest.raises(ValueError):
        check_incl_excl(dist, 1, (5,), {5: 0.0})


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000), st.data())
def test_identity_random_real_weights(seed, data):
    inst = gen_random("vertex", seed)
    _, x = solve_instance(inst)
    dist = exact_vertex_rounding(inst, build_schedule(inst, x))
    t = data.draw(st.integers(0, inst.online_count))
    S = data.draw(st.sets(st.integers(0, inst.offline_count - 1)))
    w = {u: data.draw(st.floats(-2, 2)) for u in S}
    assert check_incl_excl(dist, t, S, w)[2] <= 1e-10


# -- verify_all --------------------------------------------------------------

def test_verify_correlation_passes():
    inst = gen_correlation(0.01)
    _, x = solve_instance(inst)
    report = verify_all(inst, x)
    assert report.passed, report.failures()
    assert {c.name for c in report.checks} >= {
        "matched_subset_bound", "no_proposal_bound", "weight_tail_bound",
        "rounding_guarantee", "inclusion_exclusion_identity", "lp_bounds_opt"}


def test_verify_tightness_ratio():
    inst = gen_tightness(8)
    _, x = solve_instance(inst)
    report = verify_all(inst, x)
    assert report.passed
    assert 1 - 1 / math.e < report.expected_alg / report.opt < 1


def test_verify_gates_on_infeasible_solution():
    inst = gen_correlation(0.01)
    lp, x = solve_instance(inst)
    report = verify_all(inst, x.perturbed(0.2))
    assert not report.passed and len(report.checks) == 1
    assert "free_before_arrival" in report.checks[0].detail


def test_verify_edge_checks():
    inst = gen_random("edge", 4)
    _, x = solve_instance(inst)
    report = verify_all(inst, x)
    assert report.passed
    assert report["match_probability_exact"].worst_slack >= -1e-9


def test_verify_accepts_non_optimal_feasible_solution():
    inst = gen_correlation(0.01)
    lp = build_vertex_lp(inst)
    half = FractionalSolution.from_mapping(lp, {(0, 0): 0.25, (1, 1): 0.1})
    assert verify_all(inst, half, optimal=False).passed


def test_tolerance_override_can_turn_checks_red():
    inst = gen_random("vertex", 1)
    _, x = solve_instance(inst)
    strict = Tolerances(identity=-1.0)
    assert not verify_all(inst, x, strict).passed


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["vertex", "edge", "general"]), st.integers(0, 100_000))
def test_verify_all_on_fuzz(kind, seed):
    inst = gen_random(kind, seed)
    _, x = solve_instance(inst)
    report = verify_all(inst, x)
    assert report.passed, [(c.name, c.worst_slack, c.detail) for c in report.failures()]
