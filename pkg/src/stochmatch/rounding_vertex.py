"""Proposal-sampling rounding for vertex arrivals.

When ``v_t`` arrives, every still-free neighbor ``u`` independently proposes
with probability ``x_(t,u) / (p_t * (1 - alpha_(t,u)))`` where ``alpha_(t,u)``
is the LP mass of ``u`` on earlier arrivals. If ``v_t`` is realized it takes
the heaviest proposal (ties to the lowest offline index).

Randomness: a trial consumes a fixed number of uniforms. For each time ``t``
in order, one draw decides the arrival (or the scenario, in the general
model), followed by one draw per neighbor of ``v_t`` in ascending offline
order. Every neighbor's draw is consumed even if it is matched already, so
the layout does not depend on the state. A coin of probability ``q``
succeeds iff its draw is ``< q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleSolutionError
from .instances import GeneralVertexArrivalInstance, VertexArrivalInstance
from .relaxation import FractionalSolution, ZERO_MASS, require_feasible

CLAMP_TOL = 1e-7


def _proposal_probability(mass, scale, alpha, where):
    if mass <= ZERO_MASS or alpha >= 1.0 or scale <= 0.0:
        return 0.0
    q = mass / (scale * (1.0 - alpha))
    if q > 1.0 + CLAMP_TOL:
        raise InfeasibleSolutionError(
            f"proposal probability {q:.9g} > 1 at {where}: free_before_arrival violated")
    return min(q, 1.0)


@dataclass(frozen=True)
class ProposalSchedule:
    """Per-time proposal parameters derived once from a fractional solution.

    ``alpha``, ``beta`` and ``proposal_prob`` are keyed by ``(t, u)`` for the
    basic model. ``beta`` is ``None`` where ``alpha >= 1``. For the general
    model, ``proposal_prob`` is keyed by ``(t, i, u)`` and ``weights`` by the
    same key; the basic model stores a single scenario ``i = 0``.
    """

    offline_count: int
    neighbors: tuple               # per t: offline indices, ascending
    masses: tuple                  # per t: scenario masses
    alpha: dict
    beta: dict
    proposal_prob: dict
    weights: dict                  # (t, i, u) -> realized weight
    general: bool = False
    priority: tuple = field(default=(), compare=False)

    @property
    def online_count(self) -> int:
        return len(self.neighbors)

    @property
    def draws_per_trial(self) -> int:
        return sum(1 + len(n) for n in self.neighbors)

    def scenario_prob(self, t, i, u) -> float:
        """Proposal probability of ``u`` at time ``t`` under scenario ``i``."""
        if self.general:
            return self.proposal_prob.get((t, i, u), 0.0)
        return self.proposal_prob.get((t, u), 0.0)

    def candidates(self, t, i):
        """Neighbors that may propose in scenario ``i``, heaviest first."""
        return self.priority[t][i]


def _with_priority(sched_kwargs):
    neighbors, masses, weights = (sched_kwargs["neighbors"], sched_kwargs["masses"],
                                  sched_kwargs["weights"])
    general = sched_kwargs["general"]
    probs = sched_kwargs["proposal_prob"]
    priority = []
    for t, nbrs in enumerate(neighbors):
        per = []
        for i in range(len(masses[t])):
            key = (lambda u: (t, i, u)) if general else (lambda u: (t, u))
            cands = [(u, weights[(t, i, u)], probs.get(key(u), 0.0)) for u in nbrs]
            cands = [c for c in cands if c[2] > 0.0]
            cands.sort(key=lambda c: (-c[1], c[0]))
            per.append(tuple(cands))
        priority.append(tuple(per))
    return ProposalSchedule(priority=tuple(priority), **sched_kwargs)


def build_schedule(instance: VertexArrivalInstance, x: FractionalSolution,
                   tolerance: float = 1e-8) -> ProposalSchedule:
    require_feasible(instance, x, tolerance)
    mass = x.as_dict()
    alpha, beta, probs, weights = {}, {}, {}, {}
    cum = [0.0] * instance.offline_count
    neighbors, masses = [], []
    for t, a in enumerate(instance.arrivals):
        for u, w in a.edges:
            al = cum[u]
            xe = mass[(t, u)]
            alpha[(t, u)] = al
            beta[(t, u)] = xe / (1.0 - al) if al < 1.0 else None
            probs[(t, u)] = _proposal_probability(xe, a.probability, al, f"edge ({t}, {u})")
            weights[(t, 0, u)] = w
        for u, _ in a.edges:
            cum[u] += mass[(t, u)]
        neighbors.append(tuple(sorted(a.neighbors)))
        masses.append((a.probability,))
    return _with_priority(dict(offline_count=instance.offline_count, neighbors=tuple(neighbors),
                               masses=tuple(masses), alpha=alpha, beta=beta,
                               proposal_prob=probs, weights=weights, general=False))


def build_general_schedule(instance: GeneralVertexArrivalInstance, y: FractionalSolution,
                           tolerance: float = 1e-8) -> ProposalSchedule:
    require_feasible(instance, y, tolerance)
    mass = y.as_dict()
    alpha, beta, probs, weights = {}, {}, {}, {}
    cum = [0.0] * instance.offline_count
    neighbors, masses = [], []
    for t, a in enumerate(instance.arrivals):
        for u in a.neighbors:
            al = cum[u]
            alpha[(t, u)] = al
            total = sum(mass[(t, i, u)] for i in range(len(a.scenarios)))
            beta[(t, u)] = total / (1.0 - al) if al < 1.0 else None
        for i, s in enumerate(a.scenarios):
            for u, w in zip(a.neighbors, s.weights):
                probs[(t, i, u)] = _proposal_probability(
                    mass[(t, i, u)], s.mass, alpha[(t, u)], f"({t}, {i}, {u})")
                weights[(t, i, u)] = w
        for u in a.neighbors:
            cum[u] += sum(mass[(t, i, u)] for i in range(len(a.scenarios)))
        neighbors.append(tuple(sorted(a.neighbors)))
        masses.append(tuple(s.mass for s in a.scenarios))
    return _with_priority(dict(offline_count=instance.offline_count, neighbors=tuple(neighbors),
                               masses=tuple(masses), alpha=alpha, beta=beta,
                               proposal_prob=probs, weights=weights, general=True))


@dataclass(frozen=True)
class TrialOutcome:
    matched: dict                  # t -> u
    weights: tuple                 # WM(v_t), 0.0 when unmatched
    arrivals: tuple                # scenario index per t, or None when nothing arrived
    proposals: tuple               # per t: frozenset of proposing offline vertices

    @property
    def matched_edges(self) -> frozenset:
        return frozenset(self.matched.items())

    @property
    def total_weight(self) -> float:
        return float(sum(self.weights))


def _draws(rng, count):
    if isinstance(rng, np.random.Generator):
        return rng.random(count)
    draws = np.asarray(rng, dtype=float)
    if draws.shape != (count,):
        raise ValueError(f"expected {count} uniform draws, got shape {draws.shape}")
    return draws


def _pick_scenario(masses, draw):
    acc = 0.0
    for i, m in enumerate(masses):
        acc += m
        if draw < acc:
            return i
    return None


def simulate(schedule: ProposalSchedule, coin) -> TrialOutcome:
    """One run of the rounding with randomness supplied by callables.

    ``coin(q)`` returns a bool that is true with probability ``q``;
    ``coin.scenario(masses)`` (general schedules only) returns a scenario
    index or ``None``. Used directly by the exhaustive enumerator in
    :mod:`stochmatch.oracles`.
    """
    free = [True] * schedule.offline_count
    matched, wm, arrivals, proposals = {}, [], [], []
    for t, nbrs in enumerate(schedule.neighbors):
        if schedule.general:
            i = coin.scenario(schedule.masses[t])
        else:
            i = 0 if coin(schedule.masses[t][0]) else None
        proposed = set()
        for u in nbrs:
            if schedule.general:
                q = schedule.scenario_prob(t, i, u) if i is not None else 0.0
            else:
                # basic model flips proposal coins whether or not v_t arrived
                q = schedule.scenario_prob(t, 0, u)
            if coin(q if free[u] else 0.0):
                proposed.add(u)
        arrivals.append(i)
        proposals.append(frozenset(proposed))
        w_t = 0.0
        if i is not None and proposed:
            u, w_t, _ = next(c for c in schedule.candidates(t, i) if c[0] in proposed)
            free[u] = False
            matched[t] = u
        wm.append(w_t)
    return TrialOutcome(matched, tuple(wm), tuple(arrivals), tuple(proposals))


class _DrawCoins:
    def __init__(self, draws):
        self._it = iter(draws)

    def __call__(self, q):
        return next(self._it) < q

    def scenario(self, masses):
        return _pick_scenario(masses, next(self._it))


def run_trial(instance: VertexArrivalInstance, schedule: ProposalSchedule, rng) -> TrialOutcome:
    """Simulate the rounding once.

    ``rng`` is a ``numpy.random.Generator`` or a sequence of exactly
    ``schedule.draws_per_trial`` uniforms in ``[0, 1)``.
    """
    return simulate(schedule, _DrawCoins(_draws(rng, schedule.draws_per_trial)))


def run_trial_general(instance: GeneralVertexArrivalInstance, y, rng) -> TrialOutcome:
    """General-model trial; ``y`` is a solution of the general LP or a prebuilt schedule."""
    schedule = y if isinstance(y, ProposalSchedule) else build_general_schedule(instance, y)
    return simulate(schedule, _DrawCoins(_draws(rng, schedule.draws_per_trial)))


def simulate_batch(schedule: ProposalSchedule, draws: np.ndarray):
    """Vectorized trials: row ``k`` of ``draws`` is the stream of trial ``k``.

    Returns ``(totals, match)`` where ``match[(t, u)]`` is a boolean vector.
    """
    n = draws.shape[0]
    free = np.ones((n, schedule.offline_count), dtype=bool)
    totals = np.zeros(n)
    match = {}
    col = 0
    for t, nbrs in enumerate(schedule.neighbors):
        head = draws[:, col]
        col += 1
        if schedule.general:
            cum = np.cumsum(schedule.masses[t])
            scen = np.searchsorted(cum, head, side="right")
        else:
            scen = np.where(head < schedule.masses[t][0], 0, 1)
        coins = {u: draws[:, col + j] for j, u in enumerate(nbrs)}
        col += len(nbrs)
        for i in range(len(schedule.masses[t])):
            active = scen == i
            taken = np.zeros(n, dtype=bool)
            for u, w, q in schedule.candidates(t, i):
                hit = active & ~taken & free[:, u] & (coins[u] < q)
                taken |= hit
                free[hit, u] = False
                totals[hit] += w
                match[(t, u)] = match.get((t, u), np.zeros(n, dtype=bool)) | hit
        for u in nbrs:
            match.setdefault((t, u), np.zeros(n, dtype=bool))
    return totals, match


@dataclass(frozen=True)
class MonteCarloResult:
    mean: float
    stderr: float
    frequencies: dict              # edge key -> fraction of trials containing it
    trials: int

    def frequency_stderr(self, key) -> float:
        f = self.frequencies[key]
        return math.sqrt(f * (1.0 - f) / (self.trials - 1)) if self.trials > 1 else 0.0


def summarize(totals: np.ndarray, counts: dict, trials: int) -> MonteCarloResult:
    mean = float(totals.mean())
    se = float(totals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MonteCarloResult(mean, se, {k: c / trials for k, c in counts.items()}, trials)


def run_batches(simulate_rows, draws_per_trial, trials, seed, batch_size):
    """Drive ``simulate_rows(draws) -> (totals, match)`` over seeded batches.

    Batches are consecutive blocks of one generator stream, so the result
    does not depend on ``batch_size``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    totals = []
    counts = {}
    done = 0
    while done < trials:
        n = min(batch_size, trials - done)
        tot, match = simulate_rows(rng.random((n, draws_per_trial)))
        totals.append(tot)
        for k, v in match.items():
            counts[k] = counts.get(k, 0) + int(v.sum())
        done += n
    return summarize(np.concatenate(totals), counts, trials)


def monte_carlo(instance, schedule_or_solution, trials: int, seed: int,
                batch_size: int = 20000) -> MonteCarloResult:
    """Mean matched weight, its standard error and per-edge match frequencies.

    Accepts a :class:`ProposalSchedule` or a fractional solution for either
    vertex model. Frequencies are keyed by ``(t, u)``.
    """
    schedule = schedule_or_solution
    if not isinstance(schedule, ProposalSchedule):
        if isinstance(instance, GeneralVertexArrivalInstance):
            schedule = build_general_schedule(instance, schedule_or_solution)
        else:
            schedule = build_schedule(instance, schedule_or_solution)
    return run_batches(lambda d: simulate_batch(schedule, d), schedule.draws_per_trial,
                       trials, seed, batch_size)
