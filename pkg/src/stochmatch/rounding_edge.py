"""Alive/dead rounding for edge arrivals.

For ``e_t = (v, u)`` with prefix masses ``alpha_u``, ``alpha_v``: draw ``b`` with
probability ``x_e / (p_e * (1 - alpha_u))``. If ``u`` is alive, ``e_t`` is
realized and ``b = 1``, then ``u`` dies (it has made its only proposal) and,
if ``v`` is alive, ``e_t`` joins the matching with probability
``1 / (2 - alpha_v)``, killing ``v``. Each edge then lands in the matching
with probability exactly ``x_e / 2``.

Every edge consumes exactly three uniforms, in the order (realization,
``b``, acceptance), regardless of the state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSolutionError
from .instances import EdgeArrivalInstance
from .relaxation import FractionalSolution, ZERO_MASS, require_feasible
from .rounding_vertex import CLAMP_TOL, MonteCarloResult, _draws, run_batches

DRAWS_PER_EDGE = 3


@dataclass(frozen=True)
class EdgeSchedule:
    a_count: int
    b_count: int
    endpoints: tuple               # per edge: (a, b)
    realize_prob: tuple
    alpha_a: tuple
    alpha_b: tuple
    propose_prob: tuple            # probability that b = 1
    accept_prob: tuple             # 1 / (2 - alpha_a)
    weights: tuple

    @property
    def edge_count(self) -> int:
        return len(self.endpoints)

    @property
    def draws_per_trial(self) -> int:
        return DRAWS_PER_EDGE * self.edge_count


def build_edge_schedule(instance: EdgeArrivalInstance, x: FractionalSolution,
                        tolerance: float = 1e-8) -> EdgeSchedule:
    require_feasible(instance, x, tolerance)
    mass = x.as_dict()
    cum_a = [0.0] * instance.offline_a_count
    cum_b = [0.0] * instance.offline_b_count
    alpha_a, alpha_b, propose, accept = [], [], [], []
    for k, e in enumerate(instance.edges):
        xe, aa, ab = mass[k], cum_a[e.a], cum_b[e.b]
        if xe <= ZERO_MASS or e.probability <= 0.0 or ab >= 1.0:
            q = 0.0
        else:
            q = xe / (e.probability * (1.0 - ab))
            if q > 1.0 + CLAMP_TOL:
                raise InfeasibleSolutionError(
                    f"proposal probability {q:.9g} > 1 on edge {k}: "
                    "b_free_before_arrival violated")
            q = min(q, 1.0)
        alpha_a.append(aa)
        alpha_b.append(ab)
        propose.append(q)
        accept.append(1.0 / (2.0 - min(aa, 1.0)))
        cum_a[e.a] += xe
        cum_b[e.b] += xe
    return EdgeSchedule(instance.offline_a_count, instance.offline_b_count,
                        tuple((e.a, e.b) for e in instance.edges),
                        tuple(e.probability for e in instance.edges),
                        tuple(alpha_a), tuple(alpha_b), tuple(propose), tuple(accept),
                        tuple(e.weight for e in instance.edges))


@dataclass(frozen=True)
class EdgeTrialOutcome:
    matched: frozenset             # edge indices in M
    proposals: frozenset           # edges whose proposal condition held
    realized: tuple                # per edge
    alive_a: tuple                 # final alive flags
    alive_b: tuple
    weight: float


def simulate_edge(schedule: EdgeSchedule, coin) -> EdgeTrialOutcome:
    alive_a = [True] * schedule.a_count
    alive_b = [True] * schedule.b_count
    matched, proposals, realized = set(), set(), []
    weight = 0.0
    for k, (v, u) in enumerate(schedule.endpoints):
        real = coin(schedule.realize_prob[k])
        b = coin(schedule.propose_prob[k])
        # the acceptance coin is always consumed; only its relevance depends on state
        go = alive_b[u] and real and b
        acc = coin(schedule.accept_prob[k] if go and alive_a[v] else 0.0)
        realized.append(real)
        if go:
            proposals.add(k)
            if alive_a[v] and acc:
                matched.add(k)
                weight += schedule.weights[k]
                alive_a[v] = False
            alive_b[u] = False
    return EdgeTrialOutcome(frozenset(matched), frozenset(proposals), tuple(realized),
                            tuple(alive_a), tuple(alive_b), weight)


class _EdgeDraws:
    def __init__(self, draws):
        self._it = iter(draws)

    def __call__(self, q):
        return next(self._it) < q


def run_trial_edge(instance: EdgeArrivalInstance, x, rng) -> EdgeTrialOutcome:
    """One trial; ``x`` is a fractional solution or a prebuilt :class:`EdgeSchedule`."""
    schedule = x if isinstance(x, EdgeSchedule) else build_edge_schedule(instance, x)
    return simulate_edge(schedule, _EdgeDraws(_draws(rng, schedule.draws_per_trial)))


def simulate_edge_batch(schedule: EdgeSchedule, draws: np.ndarray):
    n = draws.shape[0]
    alive_a = np.ones((n, schedule.a_count), dtype=bool)
    alive_b = np.ones((n, schedule.b_count), dtype=bool)
    totals = np.zeros(n)
    match = {}
    for k, (v, u) in enumerate(schedule.endpoints):
        d = draws[:, DRAWS_PER_EDGE * k: DRAWS_PER_EDGE * (k + 1)]
        go = alive_b[:, u] & (d[:, 0] < schedule.realize_prob[k]) & \
            (d[:, 1] < schedule.propose_prob[k])
        hit = go & alive_a[:, v] & (d[:, 2] < schedule.accept_prob[k])
        alive_a[hit, v] = False
        alive_b[go, u] = False
        totals[hit] += schedule.weights[k]
        match[k] = hit
    return totals, match


def monte_carlo_edge(instance: EdgeArrivalInstance, x, trials: int, seed: int,
                     batch_size: int = 20000) -> MonteCarloResult:
    schedule = x if isinstance(x, EdgeSchedule) else build_edge_schedule(instance, x)
    return run_batches(lambda d: simulate_edge_batch(schedule, d), schedule.draws_per_trial,
                       trials, seed, batch_size)
