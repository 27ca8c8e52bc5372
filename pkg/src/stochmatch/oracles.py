"""Exact oracles: optimal online value, rounding state distributions, guarantee checks.

Vertex-model distributions are dense vectors over matched-subset bitmasks of
``B`` (bit ``u`` set means ``u`` is matched). ``before[t]`` is the law of the
matched set just before arrival ``t`` (0-based), so ``before[0]`` is the
point mass on the empty set and ``before[T]`` is the final law.

Edge-model distributions track ``(alive_a_mask, alive_b_mask, proposal_record)``
where the record is the bitmask of edges whose proposal condition fired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ResourceError
from .instances import (MAX_OFFLINE, EdgeArrivalInstance, GeneralVertexArrivalInstance,
                        VertexArrivalInstance)
from .relaxation import build_lp, constraint_slacks
from .rounding_edge import EdgeSchedule, build_edge_schedule, simulate_edge
from .rounding_vertex import (ProposalSchedule, build_general_schedule, build_schedule,
                              simulate)

ONE_MINUS_INV_E = 1.0 - 1.0 / math.e


def _bits(S) -> int:
    m = 0
    for u in S:
        m |= 1 << int(u)
    return m


def _members(mask: int) -> list[int]:
    out, u = [], 0
    while mask:
        if mask & 1:
            out.append(u)
        mask >>= 1
        u += 1
    return out


def _submasks(mask: int):
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def _check_offline(count, limit, what="offline vertices"):
    if count > limit:
        raise ResourceError(f"{count} {what} exceed the bitmask limit {limit}")


# -- optimal online benchmark ------------------------------------------------

@dataclass(frozen=True)
class OnlineOptimum:
    """Value of the best online policy plus its action table.

    ``actions[t]`` maps a matched/used mask to the chosen offline vertex
    (``-1`` = leave unmatched); for general instances ``actions[t][i]`` is the
    table for scenario ``i``; for edge instances it is a boolean accept table.
    """

    value: float
    actions: tuple = field(repr=False)


def optimal_online_vertex(instance: VertexArrivalInstance, limit: int = MAX_OFFLINE):
    """Backward induction over ``(t, matched mask)``; ties go to skip, then lower ``u``."""
    _check_offline(instance.offline_count, limit)
    n = 1 << instance.offline_count
    masks = np.arange(n)
    value = np.zeros(n)
    actions = []
    for a in reversed(instance.arrivals):
        best = value.copy()
        act = np.full(n, -1, dtype=np.int64)
        for u, w in sorted(a.edges):
            bit = 1 << u
            cand = np.where(masks & bit, -np.inf, w + value[masks | bit])
            better = cand > best
            best = np.where(better, cand, best)
            act[better] = u
        value = a.probability * best + (1.0 - a.probability) * value
        actions.append(act)
    return OnlineOptimum(float(value[0]), tuple(reversed(actions)))


def optimal_online_general(instance: GeneralVertexArrivalInstance, limit: int = MAX_OFFLINE):
    _check_offline(instance.offline_count, limit)
    n = 1 << instance.offline_count
    masks = np.arange(n)
    value = np.zeros(n)
    actions = []
    for a in reversed(instance.arrivals):
        nxt = a.residual_mass * value
        per = []
        for s in a.scenarios:
            best = value.copy()
            act = np.full(n, -1, dtype=np.int64)
            for u, w in sorted(zip(a.neighbors, s.weights)):
                bit = 1 << u
                cand = np.where(masks & bit, -np.inf, w + value[masks | bit])
                better = cand > best
                best = np.where(better, cand, best)
                act[better] = u
            nxt = nxt + s.mass * best
            per.append(act)
        value = nxt
        actions.append(tuple(per))
    return OnlineOptimum(float(value[0]), tuple(reversed(actions)))


def optimal_online_edge(instance: EdgeArrivalInstance, limit: int = MAX_OFFLINE):
    na = instance.offline_a_count
    _check_offline(na + instance.offline_b_count, limit, "vertices")
    n = 1 << (na + instance.offline_b_count)
    masks = np.arange(n)
    value = np.zeros(n)
    actions = []
    for e in reversed(instance.edges):
        bits = (1 << e.a) | (1 << (na + e.b))
        cand = np.where(masks & bits, -np.inf, e.weight + value[masks | bits])
        accept = cand > value
        best = np.where(accept, cand, value)
        value = e.probability * best + (1.0 - e.probability) * value
        actions.append(accept)
    return OnlineOptimum(float(value[0]), tuple(reversed(actions)))


def optimal_online(instance, limit: int = MAX_OFFLINE) -> OnlineOptimum:
    if isinstance(instance, VertexArrivalInstance):
        return optimal_online_vertex(instance, limit)
    if isinstance(instance, GeneralVertexArrivalInstance):
        return optimal_online_general(instance, limit)
    if isinstance(instance, EdgeArrivalInstance):
        return optimal_online_edge(instance, limit)
    raise TypeError(f"unsupported instance type {type(instance).__name__}")


# -- vertex rounding: exact propagation --------------------------------------

@dataclass
class VertexDistribution:
    """Exact law of the vertex rounding, time by time."""

    schedule: ProposalSchedule
    before: list                   # np arrays over matched masks, len T + 1
    wm: list                       # per t: {weight: prob} over matched outcomes
    scenario_wm: dict              # (t, i) -> {weight: joint prob}
    edge_match: dict               # (t, u) -> Pr[(t, u) in M]

    @property
    def offline_count(self) -> int:
        return self.schedule.offline_count

    @property
    def online_count(self) -> int:
        return len(self.before) - 1

    def _masks(self):
        return np.arange(len(self.before[0]))

    def prob_matched_free(self, t: int, matched=(), free=()) -> float:
        """Pr[all of ``matched`` matched and all of ``free`` free just before ``t``]."""
        M, F = _bits(matched), _bits(free)
        m = self._masks()
        sel = ((m & M) == M) & ((m & F) == 0)
        return float(self.before[t][sel].sum())

    def prob_all_matched(self, t: int, S) -> float:
        return self.prob_matched_free(t, matched=S)

    def prob_all_free(self, t: int, S) -> float:
        return self.prob_matched_free(t, free=S)

    def covariance(self, t: int, u1: int, u2: int) -> float:
        """Covariance of the matched indicators of ``u1`` and ``u2`` just before ``t``."""
        both = self.prob_all_matched(t, (u1, u2))
        return both - self.prob_all_matched(t, (u1,)) * self.prob_all_matched(t, (u2,))

    def prob_no_proposal(self, t: int, S, scenario: int = 0) -> float:
        """Pr[no vertex of ``S`` joins P at ``t``], given ``scenario`` in the general model.

        In the basic model proposal coins do not depend on the arrival, so
        ``scenario`` is ignored.
        """
        m = self._masks()
        factor = np.ones(len(m))
        for u in S:
            q = self.schedule.scenario_prob(t, scenario, u)
            factor *= np.where(m & (1 << u), 1.0, 1.0 - q)
        return float(self.before[t] @ factor)

    def prob_proposal(self, t: int, u: int, scenario: int = 0) -> float:
        return 1.0 - self.prob_no_proposal(t, (u,), scenario)

    def prob_wm_at_least(self, t: int, w: float) -> float:
        p = sum(q for v, q in self.wm[t].items() if v >= w)
        if w <= 0.0:
            p += 1.0 - sum(self.wm[t].values())
        return float(p)

    def expected_wm(self, t: int) -> float:
        return float(sum(v * q for v, q in self.wm[t].items()))

    @property
    def expected_total(self) -> float:
        return float(sum(self.expected_wm(t) for t in range(self.online_count)))


def exact_vertex_rounding(instance, schedule: ProposalSchedule,
                          limit: int = MAX_OFFLINE) -> VertexDistribution:
    """Forward propagation of the rounding's matched-set law.

    Proposal branches are grouped by the chosen edge: candidate ``k`` in
    priority order (heaviest, then lowest index) wins exactly when it
    proposes and no higher-priority free candidate does.
    """
    _check_offline(schedule.offline_count, limit)
    n = 1 << schedule.offline_count
    masks = np.arange(n)
    pi = np.zeros(n)
    pi[0] = 1.0
    before, wm, scenario_wm, edge_match = [pi], [], {}, {}
    for t, nbrs in enumerate(schedule.neighbors):
        for u in nbrs:
            edge_match[(t, u)] = 0.0
        nxt = np.zeros(n)
        leave = np.ones(n)
        dist = {}
        for i, mass in enumerate(schedule.masses[t]):
            none_yet = np.ones(n)
            sdist = {}
            for u, w, q in schedule.candidates(t, i):
                bit = 1 << u
                free = (masks & bit) == 0
                chosen = mass * q * none_yet * free
                none_yet = none_yet * np.where(free, 1.0 - q, 1.0)
                flow = pi * chosen
                idx = masks[free]
                nxt[idx | bit] += flow[idx]
                leave -= chosen
                total = float(flow.sum())
                edge_match[(t, u)] += total
                dist[w] = dist.get(w, 0.0) + total
                sdist[w] = sdist.get(w, 0.0) + total
            scenario_wm[(t, i)] = sdist
        nxt += pi * np.maximum(leave, 0.0)
        pi = nxt
        before.append(pi)
        wm.append(dist)
    return VertexDistribution(schedule, before, wm, scenario_wm, edge_match)


def check_incl_excl(distribution: VertexDistribution, t: int, S, w: dict):
    """Both sides of the subset inclusion-exclusion identity and their gap.

    ``lhs = sum_X Pr[E^{S-X} and F^X] prod_X w``;
    ``rhs = sum_X Pr[E^{S-X}] prod_X w prod_{S-X} (1 - w)``.
    """
    S = tuple(S)
    if any(not 0 <= u < distribution.offline_count for u in S):
        raise ValueError(f"subset {S} is out of range for {distribution.offline_count} "
                         "offline vertices")
    full = _bits(S)
    lhs = rhs = 0.0
    for X in _submasks(full):
        xs, rest = _members(X), _members(full & ~X)
        wx = math.prod(w[u] for u in xs)
        lhs += distribution.prob_matched_free(t, matched=rest, free=xs) * wx
        rhs += distribution.prob_all_matched(t, rest) * wx * math.prod(1.0 - w[u] for u in rest)
    return lhs, rhs, abs(lhs - rhs)


# -- edge rounding: exact propagation ----------------------------------------

@dataclass
class EdgeDistribution:
    schedule: EdgeSchedule
    before: list                   # per t: {(alive_a, alive_b): prob}
    final: dict                    # {(alive_a, alive_b, record): prob}
    proposal_prob: tuple           # Pr[proposal condition fires on edge k]
    match_prob: tuple

    @property
    def expected_weight(self) -> float:
        return float(sum(p * w for p, w in zip(self.match_prob, self.schedule.weights)))

    def joint_proposal(self, edges) -> float:
        """Pr[the proposal condition fires on every edge in ``edges``]."""
        T = _bits(edges)
        return float(sum(p for (_, _, r), p in self.final.items() if r & T == T))

    def multiple_proposal_prob(self) -> float:
        """Pr[some B-vertex's condition fires on two or more edges]."""
        by_b = {}
        for k, (_, u) in enumerate(self.schedule.endpoints):
            by_b[u] = by_b.get(u, 0) | (1 << k)
        return float(sum(p for (_, _, r), p in self.final.items()
                         if any(bin(r & m).count("1") > 1 for m in by_b.values())))


def exact_edge_rounding(instance: EdgeArrivalInstance, x, limit: int = MAX_OFFLINE):
    schedule = x if isinstance(x, EdgeSchedule) else build_edge_schedule(instance, x)
    _check_offline(schedule.a_count + schedule.b_count, limit, "vertices")
    states = {((1 << schedule.a_count) - 1, (1 << schedule.b_count) - 1, 0): 1.0}
    before, propose, match = [], [], []

    def add(d, key, p):
        if p > 0.0:
            d[key] = d.get(key, 0.0) + p

    for k, (v, u) in enumerate(schedule.endpoints):
        marg = {}
        for (A, B, _), p in states.items():
            marg[(A, B)] = marg.get((A, B), 0.0) + p
        before.append(marg)
        fire = schedule.realize_prob[k] * schedule.propose_prob[k]
        acc = schedule.accept_prob[k]
        nxt = {}
        pk = mk = 0.0
        for (A, B, R), p in states.items():
            if not B >> u & 1:
                add(nxt, (A, B, R), p)
                continue
            add(nxt, (A, B, R), p * (1.0 - fire))
            B2, R2 = B & ~(1 << u), R | (1 << k)
            pk += p * fire
            if A >> v & 1:
                add(nxt, (A & ~(1 << v), B2, R2), p * fire * acc)
                add(nxt, (A, B2, R2), p * fire * (1.0 - acc))
                mk += p * fire * acc
            else:
                add(nxt, (A, B2, R2), p * fire)
        states = nxt
        propose.append(pk)
        match.append(mk)
    marg = {}
    for (A, B, _), p in states.items():
        marg[(A, B)] = marg.get((A, B), 0.0) + p
    before.append(marg)
    return EdgeDistribution(schedule, before, states, tuple(propose), tuple(match))


# -- exhaustive enumeration of trial randomness ------------------------------

RESIDUAL_EPS = 1e-15


def enumerate_paths(run):
    """Yield ``(probability, result)`` over every coin sequence of ``run(coin)``.

    ``run`` receives a coin object with ``coin(q) -> bool`` and
    ``coin.scenario(masses) -> index or None``; it must be deterministic given
    the coin outcomes. Zero-probability branches are skipped.
    """
    pending = [()]
    while pending:
        forced = pending.pop()
        path = []
        weight = [1.0]

        def branch(options):
            options = [(v, p) for v, p in options if p > 0.0]
            k = len(path)
            if k < len(forced):
                j = forced[k]
            else:
                j = 0
                for alt in range(1, len(options)):
                    pending.append(tuple(path) + (alt,))
            path.append(j)
            value, p = options[j]
            weight[0] *= p
            return value

        class Coin:
            def __call__(self, q):
                return branch([(True, q), (False, 1.0 - q)])

            def scenario(self, masses):
                rest = 1.0 - sum(masses)
                opts = [(i, m) for i, m in enumerate(masses)]
                if rest > RESIDUAL_EPS:
                    opts.append((None, rest))
                return branch(opts)

        result = run(Coin())
        yield weight[0], result


def enumerate_vertex_outcomes(schedule: ProposalSchedule):
    return list(enumerate_paths(lambda coin: simulate(schedule, coin)))


def enumerate_edge_outcomes(schedule: EdgeSchedule):
    return list(enumerate_paths(lambda coin: simulate_edge(schedule, coin)))


# -- verification suite -------------------------------------------------------

@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-8
    bound: float = 1e-9            # one-sided inequalities
    exact: float = 1e-9            # equalities such as x_e / 2
    identity: float = 1e-10        # inclusion-exclusion identity
    normalization: float = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst_slack: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.worst_slack >= -self.tolerance


@dataclass
class VerificationReport:
    kind: str
    checks: list = field(default_factory=list)
    expected_alg: float | None = None
    lpopt: float | None = None
    opt: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


class _Worst:
    """Track the minimum slack and where it occurred."""

    def __init__(self):
        self.slack = math.inf
        self.where = ""

    def see(self, slack, where):
        if slack < self.slack:
            self.slack, self.where = float(slack), where

    def result(self, name, tol):
        if self.slack == math.inf:
            return CheckResult(name, 0.0, tol, "vacuous")
        return CheckResult(name, self.slack, tol, self.where)


def _feasibility_check(instance, solution, tol):
    lp = build_lp(instance)
    worst = _Worst()
    bad = []
    for fam, key, s in constraint_slacks(lp, solution):
        worst.see(s, f"{fam}{list(key)}")
        if s < -tol.feasibility:
            bad.append(fam)
    res = worst.result("lp_feasibility", tol.feasibility)
    if bad:
        fams = ",".join(sorted(set(bad)))
        res = CheckResult(res.name, res.worst_slack, res.tolerance,
                          f"violated families: {fams}; worst at {res.detail}")
    return lp, res


def _normalization_check(vectors, tol):
    worst = _Worst()
    for t, v in enumerate(vectors):
        vals = np.fromiter(v.values(), float) if isinstance(v, dict) else v
        worst.see(-abs(float(vals.sum()) - 1.0), f"t={t} sum")
        worst.see(min(0.0, float(vals.min())) if len(vals) else 0.0, f"t={t} min entry")
    return worst.result("distribution_normalization", tol.normalization)


def _prefix_alpha(instance, values):
    """``alpha[t][u]`` = LP mass on ``u`` over arrivals before ``t``, for every ``u``."""
    B = instance.offline_count
    alpha = [np.zeros(B)]
    for t, a in enumerate(instance.arrivals):
        row = alpha[-1].copy()
        for key, val in values.items():
            if key[0] == t:
                row[key[-1]] += val
        alpha.append(row)
    return alpha


def _subsets(B, max_size):
    for S in range(1 << B):
        if max_size is None or bin(S).count("1") <= max_size:
            yield S


def verify_all(instance, solution, tolerances: Tolerances | None = None, *,
               optimal: bool = True, max_subset_size: int | None = None,
               identity_seed: int = 0) -> VerificationReport:
    """Run every applicable exact check on ``instance`` rounded from ``solution``.

    ``optimal`` declares ``solution`` an LP optimum, which enables the
    comparisons against the optimal online value. Subset sweeps visit every
    ``S`` with at most ``max_subset_size`` members (all subsets by default,
    three-element subsets when ``|B| > 12``).
    """
    tol = tolerances or Tolerances()
    kind = instance.kind
    report = VerificationReport(kind)
    lp, feas = _feasibility_check(instance, solution, tol)
    report.checks.append(feas)
    report.lpopt = solution.objective(lp)
    if not feas.passed:
        return report
    if kind == "edge":
        _verify_edge(instance, solution, tol, report, optimal)
    else:
        _verify_vertex(instance, solution, tol, report, optimal, max_subset_size, identity_seed)
    return report


def _verify_vertex(instance, solution, tol, report, optimal, max_subset_size, seed):
    general = instance.kind == "general"
    schedule = (build_general_schedule if general else build_schedule)(instance, solution)
    dist = exact_vertex_rounding(instance, schedule)
    report.expected_alg = dist.expected_total
    values = solution.as_dict()
    B, T = instance.offline_count, instance.online_count
    if max_subset_size is None and B > 12:
        max_subset_size = 3
    checks = report.checks
    checks.append(_normalization_check(dist.before, tol))

    worst = _Worst()
    for q in schedule.proposal_prob.values():
        worst.see(1.0 - q, "proposal probability")
        worst.see(q, "proposal probability")
    checks.append(worst.result("proposal_probability_range", tol.bound))

    # proposal marginal: mass(scenario) * Pr[u proposes | scenario] >= LP mass
    worst = _Worst()
    for key, val in values.items():
        t, u = key[0], key[-1]
        i = key[1] if general else 0
        mass = schedule.masses[t][i]
        worst.see(mass * dist.prob_proposal(t, u, i) - val, f"{key}")
    checks.append(worst.result("proposal_marginal", tol.bound))

    alpha = _prefix_alpha(instance, values)
    worst = _Worst()
    for t in range(T + 1):
        for S in _subsets(B, max_subset_size):
            members = _members(S)
            bound = math.prod(alpha[t][u] for u in members)
            worst.see(bound - dist.prob_all_matched(t, members), f"t={t} S={members}")
    checks.append(worst.result("matched_subset_bound", tol.bound))

    worst = _Worst()
    for t in range(T):
        for i, mass in enumerate(schedule.masses[t]):
            if mass <= 0.0:
                continue
            for S in _subsets(B, max_subset_size):
                members = _members(S)
                bound = math.prod(1.0 - values.get((t, i, u) if general else (t, u), 0.0) / mass
                                  for u in members)
                worst.see(bound - dist.prob_no_proposal(t, members, i),
                          f"t={t} i={i} S={members}")
    checks.append(worst.result("no_proposal_bound", tol.bound))

    worst = _Worst()
    for t in range(T):
        if general:
            a = instance.arrivals[t]
            for i, s in enumerate(a.scenarios):
                pairs = list(zip(a.neighbors, s.weights))
                for thr in sorted({w for _, w in pairs}):
                    got = sum(q for v, q in dist.scenario_wm[(t, i)].items() if v >= thr)
                    need = sum(values[(t, i, u)] for u, w in pairs if w >= thr)
                    worst.see(got - ONE_MINUS_INV_E * need, f"t={t} i={i} w>={thr:g}")
        else:
            edges = instance.arrivals[t].edges
            for thr in sorted({w for _, w in edges}):
                need = sum(values[(t, u)] for u, w in edges if w >= thr)
                worst.see(dist.prob_wm_at_least(t, thr) - ONE_MINUS_INV_E * need,
                          f"t={t} w>={thr:g}")
    checks.append(worst.result("weight_tail_bound", tol.bound))

    checks.append(CheckResult("rounding_guarantee",
                              dist.expected_total - ONE_MINUS_INV_E * report.lpopt, tol.bound,
                              f"E[ALG]={dist.expected_total:.12g} LPOPT={report.lpopt:.12g}"))

    rng = np.random.default_rng(seed)
    worst = _Worst()
    for t in range(T + 1):
        for S in _subsets(B, min(max_subset_size or 4, 4)):
            members = _members(S)
            w = {u: float(rng.uniform(-2.0, 2.0)) for u in members}
            _, _, gap = check_incl_excl(dist, t, members, w)
            worst.see(-gap, f"t={t} S={members}")
    checks.append(worst.result("inclusion_exclusion_identity", tol.identity))

    if optimal:
        opt = (optimal_online_general if general else optimal_online_vertex)(instance).value
        report.opt = opt
        checks.append(CheckResult("lp_bounds_opt", report.lpopt - opt, tol.bound,
                                  f"LPOPT={report.lpopt:.12g} OPT={opt:.12g}"))
        checks.append(CheckResult("ratio_vs_opt", dist.expected_total - ONE_MINUS_INV_E * opt,
                                  tol.bound, f"E[ALG]/OPT={_ratio(dist.expected_total, opt)}"))


def _ratio(a, b):
    return f"{a / b:.12g}" if b > 0 else "nan"


def _verify_edge(instance, solution, tol, report, optimal):
    schedule = build_edge_schedule(instance, solution)
    dist = exact_edge_rounding(instance, schedule)
    report.expected_alg = dist.expected_weight
    x = solution.values
    checks = report.checks
    checks.append(_normalization_check(dist.before + [
        {k: v for k, v in dist.final.items()}], tol))

    worst = _Worst()
    for k, p in enumerate(dist.proposal_prob):
        worst.see(-abs(p - x[k]), f"edge {k}")
    checks.append(worst.result("proposal_condition_exact", tol.exact))

    worst = _Worst()
    for v in range(instance.offline_a_count):
        incident = [k for k, e in enumerate(instance.edges) if e.a == v]
        for T in _submasks(_bits(incident)):
            ks = _members(T)
            worst.see(-abs(dist.joint_proposal(ks) - math.prod(x[k] for k in ks)),
                      f"a={v} edges={ks}")
    checks.append(worst.result("proposal_independence", tol.exact))

    worst = _Worst()
    for k, p in enumerate(dist.match_prob):
        worst.see(-abs(p - x[k] / 2.0), f"edge {k}")
    checks.append(worst.result("match_probability_exact", tol.exact))

    checks.append(CheckResult("single_proposal", -dist.multiple_proposal_prob(), tol.exact))
    checks.append(CheckResult("expected_weight_half",
                              -abs(dist.expected_weight - report.lpopt / 2.0), tol.exact,
                              f"E[ALG]={dist.expected_weight:.12g} LPOPT={report.lpopt:.12g}"))
    if optimal:
        opt = optimal_online_edge(instance).value
        report.opt = opt
        checks.append(CheckResult("lp_bounds_opt", report.lpopt - opt, tol.bound,
                                  f"LPOPT={report.lpopt:.12g} OPT={opt:.12g}"))
        checks.append(CheckResult("ratio_vs_opt", dist.expected_weight - opt / 2.0, tol.bound,
                                  f"E[ALG]/OPT={_ratio(dist.expected_weight, opt)}"))
