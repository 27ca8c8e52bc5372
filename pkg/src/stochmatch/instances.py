"""Problem instances for online bipartite stochastic matching.

Three models share one offline side ``B = {0, ..., offline_count - 1}``:

* :class:`VertexArrivalInstance` -- online vertices arrive in list order, each
  realized independently with its own probability.
* :class:`EdgeArrivalInstance` -- edges arrive in list order, each realized
  independently.
* :class:`GeneralVertexArrivalInstance` -- upon arrival, the weight vector of
  the arriving vertex is drawn from a finite distribution.

Instances are frozen dataclasses holding tuples only. Constructors never
reject data; call :func:`validate` to get the list of invariant violations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import InvalidParameterError

MAX_OFFLINE = 20
"""Bitmask limit on ``|B|`` (vertex models) and ``|A| + |B|`` (edge model)."""

MASS_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Arrival:
    """One online vertex: arrival probability and ``(offline index, weight)`` pairs."""

    probability: float
    edges: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(u), float(w)) for u, w in self.edges))
        object.__setattr__(self, "probability", float(self.probability))

    @property
    def neighbors(self) -> tuple[int, ...]:
        return tuple(u for u, _ in self.edges)

    def weight(self, u: int) -> float:
        for v, w in self.edges:
            if v == u:
                return w
        raise KeyError(u)


@dataclass(frozen=True)
class VertexArrivalInstance:
    offline_count: int
    arrivals: tuple[Arrival, ...]

    def __post_init__(self):
        object.__setattr__(self, "arrivals", tuple(
            a if isinstance(a, Arrival) else Arrival(*a) for a in self.arrivals))

    kind = "vertex"

    @property
    def online_count(self) -> int:
        return len(self.arrivals)

    def edges(self) -> list[tuple[int, int, float]]:
        """All edges ``(t, u, w)`` in arrival order."""
        return [(t, u, w) for t, a in enumerate(self.arrivals) for u, w in a.edges]

    def with_weights_scaled(self, factor: float) -> VertexArrivalInstance:
        return VertexArrivalInstance(self.offline_count, tuple(
            Arrival(a.probability, tuple((u, w * factor) for u, w in a.edges))
            for a in self.arrivals))


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    probability: float
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "a", int(self.a))
        object.__setattr__(self, "b", int(self.b))
        object.__setattr__(self, "probability", float(self.probability))
        object.__setattr__(self, "weight", float(self.weight))


@dataclass(frozen=True)
class EdgeArrivalInstance:
    offline_a_count: int
    offline_b_count: int
    edges: tuple[Edge, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(
            e if isinstance(e, Edge) else Edge(*e) for e in self.edges))

    kind = "edge"


@dataclass(frozen=True)
class Scenario:
    """One support point of an arrival's weight distribution.

    ``weights`` is aligned with the owning arrival's ``neighbors`` tuple.
    """

    mass: float
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))


@dataclass(frozen=True)
class GeneralArrival:
    neighbors: tuple[int, ...]
    scenarios: tuple[Scenario, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "neighbors", tuple(int(u) for u in self.neighbors))
        object.__setattr__(self, "scenarios", tuple(
            s if isinstance(s, Scenario) else Scenario(*s) for s in self.scenarios))

    @property
    def residual_mass(self) -> float:
        """Probability of the implicit all-zero ("nothing arrives") scenario."""
        return max(0.0, 1.0 - sum(s.mass for s in self.scenarios))


@dataclass(frozen=True)
class GeneralVertexArrivalInstance:
    """Vertex arrivals with finitely supported joint weight distributions.

    Scenario masses at each time may sum to less than one; the remainder is
    an implicit scenario in which every incident weight is zero and the
    algorithm does nothing.
    """

    offline_count: int
    arrivals: tuple[GeneralArrival, ...]

    def __post_init__(self):
        object.__setattr__(self, "arrivals", tuple(
            a if isinstance(a, GeneralArrival) else GeneralArrival(*a) for a in self.arrivals))

    kind = "general"

    @property
    def online_count(self) -> int:
        return len(self.arrivals)

    @classmethod
    def from_vertex(cls, instance: VertexArrivalInstance) -> GeneralVertexArrivalInstance:
        """Encode a basic instance: one scenario of mass ``p_t`` with the fixed weights."""
        arrivals = []
        for a in instance.arrivals:
            arrivals.append(GeneralArrival(
                a.neighbors, (Scenario(a.probability, tuple(w for _, w in a.edges)),)))
        return cls(instance.offline_count, tuple(arrivals))


Instance = Union[VertexArrivalInstance, EdgeArrivalInstance, GeneralVertexArrivalInstance]


def _bad_number(x, lo=None, hi=None) -> bool:
    if not isinstance(x, (int, float)) or isinstance(x, bool) or not math.isfinite(x):
        return True
    return (lo is not None and x < lo) or (hi is not None and x > hi)


def _bad_count(n) -> bool:
    return not isinstance(n, int) or isinstance(n, bool) or n < 1


def validate(instance) -> list[str]:
    """Return every invariant violation of ``instance`` (empty list means valid)."""
    if isinstance(instance, VertexArrivalInstance):
        return _validate_vertex(instance)
    if isinstance(instance, EdgeArrivalInstance):
        return _validate_edge(instance)
    if isinstance(instance, GeneralVertexArrivalInstance):
        return _validate_general(instance)
    return [f"unsupported instance type {type(instance).__name__}"]


def _validate_vertex(inst: VertexArrivalInstance) -> list[str]:
    out = []
    if _bad_count(inst.offline_count):
        out.append(f"offline_count: must be a positive integer, got {inst.offline_count!r}")
    for t, a in enumerate(inst.arrivals):
        if _bad_number(a.probability, 0.0, 1.0):
            out.append(f"arrivals[{t}].probability: {a.probability!r} not in [0, 1]")
        seen = set()
        for j, (u, w) in enumerate(a.edges):
            if not 0 <= u < inst.offline_count:
                out.append(f"arrivals[{t}].edges[{j}].offline: index {u} out of range "
                           f"[0, {inst.offline_count})")
            if u in seen:
                out.append(f"arrivals[{t}].edges[{j}].offline: duplicate edge to {u}")
            seen.add(u)
            if _bad_number(w, 0.0):
                out.append(f"arrivals[{t}].edges[{j}].weight: {w!r} is not a finite value >= 0")
    return out


def _validate_edge(inst: EdgeArrivalInstance) -> list[str]:
    out = []
    if _bad_count(inst.offline_a_count):
        out.append(f"offline_a_count: must be a positive integer, got {inst.offline_a_count!r}")
    if _bad_count(inst.offline_b_count):
        out.append(f"offline_b_count: must be a positive integer, got {inst.offline_b_count!r}")
    seen = set()
    for i, e in enumerate(inst.edges):
        if not 0 <= e.a < inst.offline_a_count:
            out.append(f"edges[{i}].a: index {e.a} out of range [0, {inst.offline_a_count})")
        if not 0 <= e.b < inst.offline_b_count:
            out.append(f"edges[{i}].b: index {e.b} out of range [0, {inst.offline_b_count})")
        if (e.a, e.b) in seen:
            out.append(f"edges[{i}]: duplicate edge ({e.a}, {e.b})")
        seen.add((e.a, e.b))
        if _bad_number(e.probability, 0.0, 1.0):
            out.append(f"edges[{i}].probability: {e.probability!r} not in [0, 1]")
        if _bad_number(e.weight, 0.0):
            out.append(f"edges[{i}].weight: {e.weight!r} is not a finite value >= 0")
    return out


def _validate_general(inst: GeneralVertexArrivalInstance) -> list[str]:
    out = []
    if _bad_count(inst.offline_count):
        out.append(f"offline_count: must be a positive integer, got {inst.offline_count!r}")
    for t, a in enumerate(inst.arrivals):
        if len(set(a.neighbors)) != len(a.neighbors):
            out.append(f"arrivals[{t}].neighbors: duplicate offline index")
        for u in a.neighbors:
            if not 0 <= u < inst.offline_count:
                out.append(f"arrivals[{t}].neighbors: index {u} out of range "
                           f"[0, {inst.offline_count})")
        total = 0.0
        for i, s in enumerate(a.scenarios):
            if _bad_number(s.mass, 0.0, 1.0):
                out.append(f"arrivals[{t}].scenarios[{i}].mass: {s.mass!r} not in [0, 1]")
            else:
                total += s.mass
            if len(s.weights) != len(a.neighbors):
                out.append(f"arrivals[{t}].scenarios[{i}].weights: length {len(s.weights)} "
                           f"!= neighbor count {len(a.neighbors)}")
            for j, w in enumerate(s.weights):
                if _bad_number(w, 0.0):
                    out.append(f"arrivals[{t}].scenarios[{i}].weights[{j}]: {w!r} "
                               "is not a finite value >= 0")
        if total > 1.0 + MASS_TOLERANCE:
            out.append(f"arrivals[{t}].scenarios: masses sum to {total!r} > 1")
    return out


# -- named instances ---------------------------------------------------------

def gen_correlation(epsilon: float) -> VertexArrivalInstance:
    """Three arrivals, two offline vertices; proposal rounding correlates the offline states.

    Offline ``u1, u2`` are indices 0 and 1. The two edges of the last
    arrival carry weight ``epsilon / 100`` so they never drive a decision.
    """
    if not (isinstance(epsilon, (int, float)) and 0.0 < epsilon < 1.0):
        raise InvalidParameterError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    tiny = epsilon / 100.0
    return VertexArrivalInstance(2, (
        Arrival(0.5, ((0, 100.0),)),
        Arrival(0.25, ((0, 2.0), (1, 1.0))),
        Arrival(epsilon, ((0, tiny), (1, tiny))),
    ))


def gen_tightness(n: int) -> VertexArrivalInstance:
    """``n`` light private edges followed by one heavy vertex adjacent to everything."""
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 2:
        raise InvalidParameterError(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    light = tuple(Arrival(1.0 - 1.0 / n, ((i, 1.0 / n**2),)) for i in range(n))
    heavy = Arrival(1.0, tuple((i, 1.0) for i in range(n)))
    return VertexArrivalInstance(n, light + (heavy,))


# -- random fuzz instances ---------------------------------------------------

def _probability(rng) -> float:
    # (0, 1]
    return float(1.0 - rng.random())


def _weight(rng) -> float:
    return float(rng.uniform(0.0, 10.0))


def gen_random(kind: str, seed: int, *, max_online: int = 5, max_offline: int = 4,
               max_degree: int = 4, max_vertices: int = 8, max_edges: int = 10,
               max_scenarios: int = 3, density: float = 0.6):
    """Seeded random instance of the given ``kind`` ("vertex", "edge" or "general").

    Side sizes are drawn uniformly from the upper half of their caps
    (``ceil(cap / 2) .. cap``); every edge is present independently with
    probability ``density``. Vertex and general instances
    keep at most ``max_degree`` neighbors per arrival. The result always
    passes :func:`validate`.
    """
    if kind not in ("vertex", "edge", "general"):
        raise InvalidParameterError(f"unknown instance kind {kind!r}")
    if not 0.0 < density <= 1.0:
        raise InvalidParameterError(f"density must lie in (0, 1], got {density!r}")
    rng = np.random.default_rng(seed)

    if kind == "edge":
        if max_vertices > MAX_OFFLINE:
            raise InvalidParameterError(f"max_vertices {max_vertices} exceeds the oracle "
                                        f"limit {MAX_OFFLINE}")
        if max_vertices < 2 or max_edges < 1:
            raise InvalidParameterError("edge instances need max_vertices >= 2, max_edges >= 1")
        na = int(rng.integers(max(1, max_vertices // 4), max_vertices // 2 + 1))
        nb = int(rng.integers(max(1, (max_vertices - na + 1) // 2), max_vertices - na + 1))
        pairs = [(a, b) for a in range(na) for b in range(nb) if rng.random() < density]
        if not pairs:
            pairs = [(int(rng.integers(na)), int(rng.integers(nb)))]
        order = rng.permutation(len(pairs))[:max_edges]
        edges = tuple(Edge(pairs[k][0], pairs[k][1], _probability(rng), _weight(rng))
                      for k in order)
        return EdgeArrivalInstance(na, nb, edges)

    if max_offline > MAX_OFFLINE:
        raise InvalidParameterError(f"max_offline {max_offline} exceeds the oracle "
                                    f"limit {MAX_OFFLINE}")
    if max_online < 1 or max_offline < 1 or max_degree < 1:
        raise InvalidParameterError("size caps must be positive")
    na = int(rng.integers((max_online + 1) // 2, max_online + 1))
    nb = int(rng.integers((max_offline + 1) // 2, max_offline + 1))

    def neighbors():
        nbrs = [u for u in range(nb) if rng.random() < density]
        if len(nbrs) > max_degree:
            nbrs = sorted(rng.choice(nbrs, size=max_degree, replace=False).tolist())
        return nbrs

    if kind == "vertex":
        arrivals = []
        for _ in range(na):
            nbrs = neighbors()
            arrivals.append(Arrival(_probability(rng), tuple((u, _weight(rng)) for u in nbrs)))
        return VertexArrivalInstance(nb, tuple(arrivals))

    if max_scenarios < 1:
        raise InvalidParameterError("max_scenarios must be positive")
    arrivals = []
    for _ in range(na):
        nbrs = neighbors()
        k = int(rng.integers(1, max_scenarios + 1))
        if rng.random() < 0.5:
            masses = rng.dirichlet(np.ones(k + 1))[:k]
        else:
            masses = rng.dirichlet(np.ones(k))
            masses = masses / masses.sum()
        scenarios = tuple(Scenario(float(m), tuple(_weight(rng) for _ in nbrs)) for m in masses)
        arrivals.append(GeneralArrival(tuple(nbrs), scenarios))
    return GeneralVertexArrivalInstance(nb, tuple(arrivals))
