"""LP relaxations of the optimal online algorithm and their fractional solutions.

Each builder returns a :class:`LinearProgram` whose rows are tagged with a
constraint family and a key, so rows can be looked up and violations can be
reported by name.

Vertex arrivals (variable per edge ``(t, u)``):

``arrival_capacity[t]``        sum of x over edges of v_t <= p_t
``offline_capacity[u]``        sum of x over edges of u <= 1
``free_before_arrival[t, u]``  x_(t,u) + p_t * sum_{t' < t} x_(t',u) <= p_t

General vertex arrivals (variable per ``(t, i, u)``):

``scenario_capacity[t, i]``    sum_u y_(t,i,u) <= p_(t,i)
``offline_capacity[u]``        sum_{t,i} y_(t,i,u) <= 1
``free_before_arrival[t, i, u]`` y_(t,i,u) + p_(t,i) * sum_{t'<t, i'} y_(t',i',u) <= p_(t,i)

Edge arrivals (variable per edge index ``k``):

``vertex_capacity[side, v]``   sum of x over edges at v <= 1 (side "a" or "b")
``a_free_before_arrival[k]``   x_k + p_k * sum of earlier x at the A endpoint <= p_k
``b_free_before_arrival[k]``   the same at the B endpoint

Rows with no variables are omitted. Nonnegativity is implicit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable

import numpy as np

from .errors import InfeasibleSolutionError, ValidationError
from .instances import (EdgeArrivalInstance, GeneralVertexArrivalInstance,
                        VertexArrivalInstance, validate)
from .simplex import simplex_max

FEASIBILITY_TOL = 1e-8
ZERO_MASS = 1e-12


@dataclass(frozen=True)
class Constraint:
    family: str
    key: tuple
    coeffs: dict
    sense: str
    rhs: float

    def lhs(self, x) -> float:
        return float(sum(a * x[j] for j, a in self.coeffs.items()))

    def slack(self, x) -> float:
        """Signed slack; negative means the row is violated."""
        v = self.lhs(x)
        if self.sense == "<=":
            return self.rhs - v
        if self.sense == ">=":
            return v - self.rhs
        return -abs(v - self.rhs)


@dataclass(frozen=True)
class LinearProgram:
    """``max objective @ x`` over the listed rows with ``x >= 0``."""

    variables: tuple
    objective: tuple
    constraints: tuple

    def __post_init__(self):
        n = len(self.variables)
        if len(self.objective) != n:
            raise ValueError("objective length does not match variable count")
        for row in self.constraints:
            if any(not 0 <= j < n for j in row.coeffs):
                raise ValueError(f"row {row.family}{row.key} references a missing variable")
            if row.sense not in ("<=", ">=", "=="):
                raise ValueError(f"unknown sense {row.sense!r}")

    @property
    def variable_count(self) -> int:
        return len(self.variables)

    def index(self, key: Hashable) -> int:
        return self.variables.index(key)

    def rows(self, family: str) -> list[Constraint]:
        return [r for r in self.constraints if r.family == family]

    def row(self, family: str, key) -> Constraint:
        for r in self.constraints:
            if r.family == family and r.key == key:
                return r
        raise KeyError((family, key))

    def dense(self):
        A = np.zeros((len(self.constraints), len(self.variables)))
        for i, r in enumerate(self.constraints):
            for j, a in r.coeffs.items():
                A[i, j] += a
        return A, [r.sense for r in self.constraints], np.array([r.rhs for r in self.constraints])


@dataclass(frozen=True)
class FractionalSolution:
    """Per-variable LP masses keyed like the LP's variables.

    Keys are ``(t, u)`` for vertex instances, ``(t, i, u)`` for general
    instances and the edge index for edge instances.
    """

    keys: tuple
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(self.keys))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.keys) != len(self.values):
            raise ValueError("keys and values differ in length")

    @classmethod
    def from_mapping(cls, lp: LinearProgram, mapping: dict, default: float = 0.0):
        return cls(lp.variables, tuple(mapping.get(k, default) for k in lp.variables))

    def __getitem__(self, key) -> float:
        return self.values[self.keys.index(key)]

    def get(self, key, default=0.0) -> float:
        try:
            return self[key]
        except ValueError:
            return default

    def as_dict(self) -> dict:
        return dict(zip(self.keys, self.values))

    def objective(self, lp: LinearProgram) -> float:
        return float(np.dot(lp.objective, self.values))

    def perturbed(self, delta: float) -> FractionalSolution:
        """Copy with ``delta`` added to every mass (used to exercise gating)."""
        return FractionalSolution(self.keys, tuple(v + delta for v in self.values))


# ``(t, i, u)``-keyed solutions share the class.
GeneralFractionalSolution = FractionalSolution


def _check(instance):
    problems = validate(instance)
    if problems:
        raise ValidationError(problems)


def build_vertex_lp(instance: VertexArrivalInstance) -> LinearProgram:
    _check(instance)
    variables, objective = [], []
    for t, u, w in instance.edges():
        variables.append((t, u))
        objective.append(w)
    idx = {k: j for j, k in enumerate(variables)}
    rows = []
    for t, a in enumerate(instance.arrivals):
        if a.edges:
            rows.append(Constraint("arrival_capacity", (t,),
                                   {idx[(t, u)]: 1.0 for u, _ in a.edges}, "<=", a.probability))
    for u in range(instance.offline_count):
        cols = {j: 1.0 for (t, v), j in idx.items() if v == u}
        if cols:
            rows.append(Constraint("offline_capacity", (u,), cols, "<=", 1.0))
    for t, a in enumerate(instance.arrivals):
        p = a.probability
        for u, _ in a.edges:
            coeffs = {idx[(s, v)]: p for (s, v) in variables if v == u and s < t}
            coeffs[idx[(t, u)]] = 1.0
            rows.append(Constraint("free_before_arrival", (t, u), coeffs, "<=", p))
    return LinearProgram(tuple(variables), tuple(objective), tuple(rows))


def build_general_lp(instance: GeneralVertexArrivalInstance) -> LinearProgram:
    _check(instance)
    variables, objective = [], []
    for t, a in enumerate(instance.arrivals):
        for i, s in enumerate(a.scenarios):
            for u, w in zip(a.neighbors, s.weights):
                variables.append((t, i, u))
                objective.append(w)
    idx = {k: j for j, k in enumerate(variables)}
    rows = []
    for t, a in enumerate(instance.arrivals):
        for i, s in enumerate(a.scenarios):
            if a.neighbors:
                rows.append(Constraint("scenario_capacity", (t, i),
                                       {idx[(t, i, u)]: 1.0 for u in a.neighbors}, "<=", s.mass))
    for u in range(instance.offline_count):
        cols = {j: 1.0 for (t, i, v), j in idx.items() if v == u}
        if cols:
            rows.append(Constraint("offline_capacity", (u,), cols, "<=", 1.0))
    for t, a in enumerate(instance.arrivals):
        for i, s in enumerate(a.scenarios):
            for u in a.neighbors:
                coeffs = {j: s.mass for (r, _, v), j in idx.items() if v == u and r < t}
                coeffs[idx[(t, i, u)]] = 1.0
                rows.append(Constraint("free_before_arrival", (t, i, u), coeffs, "<=", s.mass))
    return LinearProgram(tuple(variables), tuple(objective), tuple(rows))


def build_edge_lp(instance: EdgeArrivalInstance) -> LinearProgram:
    _check(instance)
    edges = instance.edges
    variables = tuple(range(len(edges)))
    objective = tuple(e.weight for e in edges)
    rows = []
    for side, count, end in (("a", instance.offline_a_count, lambda e: e.a),
                             ("b", instance.offline_b_count, lambda e: e.b)):
        for v in range(count):
            cols = {k: 1.0 for k, e in enumerate(edges) if end(e) == v}
            if cols:
                rows.append(Constraint("vertex_capacity", (side, v), cols, "<=", 1.0))
    for side, end in (("a", lambda e: e.a), ("b", lambda e: e.b)):
        for k, e in enumerate(edges):
            coeffs = {j: e.probability for j in range(k) if end(edges[j]) == end(e)}
            coeffs[k] = 1.0
            rows.append(Constraint(f"{side}_free_before_arrival", (k,), coeffs, "<=",
                                   e.probability))
    return LinearProgram(variables, objective, tuple(rows))


def build_lp(instance) -> LinearProgram:
    if isinstance(instance, VertexArrivalInstance):
        return build_vertex_lp(instance)
    if isinstance(instance, EdgeArrivalInstance):
        return build_edge_lp(instance)
    if isinstance(instance, GeneralVertexArrivalInstance):
        return build_general_lp(instance)
    raise TypeError(f"unsupported instance type {type(instance).__name__}")


def solve(lp: LinearProgram):
    """Return ``(x, objective)`` at an optimal vertex of ``lp``.

    Masses below ``ZERO_MASS`` in magnitude are snapped to zero so that
    tableau round-off never produces phantom positive edges.
    """
    if not lp.variables:
        return np.zeros(0), 0.0
    A, senses, b = lp.dense()
    c = np.asarray(lp.objective, dtype=float)
    x, _, _ = simplex_max(c, A, senses, b)
    x[np.abs(x) < ZERO_MASS] = 0.0
    return x, float(c @ x)


def solve_instance(instance) -> tuple[LinearProgram, FractionalSolution]:
    """Build the instance's LP, solve it, and wrap the optimum."""
    lp = build_lp(instance)
    x, _ = solve(lp)
    return lp, FractionalSolution(lp.variables, tuple(x))


@dataclass(frozen=True)
class Violation:
    family: str
    key: tuple
    slack: float

    def __str__(self):
        return f"{self.family}{list(self.key)} violated by {-self.slack:.3g}"


def constraint_slacks(lp: LinearProgram, solution: FractionalSolution) -> list[tuple]:
    """``(family, key, slack)`` for every row plus one nonnegativity row per variable."""
    if tuple(solution.keys) != tuple(lp.variables):
        raise ValueError(f"solution has {len(solution.keys)} variables keyed differently "
                         f"from the LP's {len(lp.variables)}")
    x = solution.values
    out = [(r.family, r.key, r.slack(x)) for r in lp.constraints]
    out += [("nonnegative", (k,) if not isinstance(k, tuple) else k, v)
            for k, v in zip(lp.variables, x)]
    return out


def validate_solution(instance, solution: FractionalSolution,
                      tolerance: float = FEASIBILITY_TOL) -> list[Violation]:
    """Every LP row violated by more than ``tolerance``."""
    lp = build_lp(instance)
    return [Violation(f, k, s) for f, k, s in constraint_slacks(lp, solution) if s < -tolerance]


def require_feasible(instance, solution, tolerance=FEASIBILITY_TOL):
    bad = validate_solution(instance, solution, tolerance)
    if bad:
        raise InfeasibleSolutionError(
            "fractional solution is infeasible: " + "; ".join(map(str, bad)), bad)
