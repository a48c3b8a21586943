"""Exact weighted bipartite b-matching and transportation solver.

Solves  max Σ w_e · f_e  over  f ≥ 0,  Σ_r f(l,r) ≤ supply(l),
Σ_l f(l,r) ≤ capacity(r)  with exact arithmetic throughout: weights are
arbitrary-precision integers (callers factor a shared denominator into
``scale``), supplies and capacities are exact rationals.

The algorithm is successive shortest augmenting paths with node potentials on
the min-cost-flow reformulation (maximize weight = negate costs; potentials
initialized by a single Bellman-Ford pass).  Rational data is scaled to
integers by the common denominator before solving, so every augmentation
saturates an arc or exhausts a supply and termination is immediate.

Determinism: nodes are processed in input order and shortest-path ties are
broken by the lowest node index, so co-optimal solutions resolve to a single
canonical one.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .errors import MalformedInstance

Number = Union[int, Fraction]

#: When true, every solve re-checks feasibility, objective, and the optimality
#: certificate (nonnegative reduced costs on residual edges).  Enabled in the
#: test suite; off by default for speed.
VERIFY = False


@dataclass(frozen=True)
class MatchingProblem:
    """A bipartite b-matching / transportation problem.

    ``edges`` are (left index, right index, integer weight) triples; the true
    objective coefficient of an edge is ``weight / scale``.
    """

    left: tuple[str, ...]
    right: tuple[str, ...]
    supply: tuple[Fraction, ...]
    capacity: tuple[Fraction, ...]
    edges: tuple[tuple[int, int, int], ...]
    scale: int = 1

    def __init__(
        self,
        left: Iterable[str],
        right: Iterable[str],
        supply: Iterable[Number],
        capacity: Iterable[Number],
        edges: Iterable[tuple[int, int, int]],
        scale: int = 1,
    ):
        object.__setattr__(self, "left", tuple(left))
        object.__setattr__(self, "right", tuple(right))
        object.__setattr__(self, "supply", tuple(Fraction(s) for s in supply))
        object.__setattr__(self, "capacity", tuple(Fraction(c) for c in capacity))
        object.__setattr__(self, "edges", tuple((int(l), int(r), w) for l, r, w in edges))
        object.__setattr__(self, "scale", int(scale))
        if len(self.supply) != len(self.left) or len(self.capacity) != len(self.right):
            raise MalformedInstance("supply/capacity lengths must match the node lists")
        if any(s < 0 for s in self.supply) or any(c < 0 for c in self.capacity):
            raise MalformedInstance("supplies and capacities must be nonnegative")
        if self.scale <= 0:
            raise MalformedInstance("scale must be a positive integer")
        seen = set()
        for l, r, w in self.edges:
            if not (0 <= l < len(self.left)) or not (0 <= r < len(self.right)):
                raise MalformedInstance(f"edge ({l}, {r}) references an undeclared node")
            if not isinstance(w, int) or isinstance(w, bool):
                raise MalformedInstance("edge weights must be exact integers")
            if (l, r) in seen:
                raise MalformedInstance(f"duplicate edge ({l}, {r})")
            seen.add((l, r))

    def with_unit_weights(self) -> "MatchingProblem":
        return MatchingProblem(
            self.left,
            self.right,
            self.supply,
            self.capacity,
            tuple((l, r, 1) for l, r, _ in self.edges),
            scale=1,
        )


@dataclass(frozen=True)
class MatchingSolution:
    """Flows aligned with the problem's edge list, plus the exact objective,
    the total size V = Σ flow, and the solver's node potentials (source,
    lefts..., rights..., sink) certifying optimality."""

    flows: tuple[Fraction, ...]
    objective: Fraction
    size: Fraction
    potentials: tuple[int, ...]

    @property
    def is_integral(self) -> bool:
        return all(f.denominator == 1 for f in self.flows)


def _lcm_denominator(values: Iterable[Fraction]) -> int:
    d = 1
    for v in values:
        d = d * v.denominator // math.gcd(d, v.denominator)
    return d


def solve(problem: MatchingProblem) -> MatchingSolution:
    """Exact optimal solution under the canonical deterministic pivot order."""
    denom = _lcm_denominator(list(problem.supply) + list(problem.capacity))
    supply = [int(s * denom) for s in problem.supply]
    capacity = [int(c * denom) for c in problem.capacity]
    flows_int, potentials = _solve_scaled(supply, capacity, problem.edges)
    flows = tuple(Fraction(f, denom) for f in flows_int)
    objective = Fraction(
        sum(w * f for (_, _, w), f in zip(problem.edges, flows_int)), denom
    ) / problem.scale
    size = Fraction(sum(flows_int), denom)
    solution = MatchingSolution(
        flows=flows, objective=objective, size=size, potentials=tuple(potentials)
    )
    if VERIFY:
        verify_solution(problem, solution)
    return solution


def max_weight_b_matching(problem: MatchingProblem) -> MatchingSolution:
    """Optimal integral b-matching; requires integer supplies and capacities."""
    if any(s.denominator != 1 for s in problem.supply) or any(
        c.denominator != 1 for c in problem.capacity
    ):
        raise MalformedInstance("b-matching requires integer supplies and capacities")
    solution = solve(problem)
    assert solution.is_integral, "unimodularity guarantees an integral optimum"
    return solution


def max_size(problem: MatchingProblem) -> int:
    """Maximum cardinality V* of the problem under unit weights."""
    solution = solve(problem.with_unit_weights())
    size = solution.size
    if size.denominator != 1:
        return size  # rational supplies: V* itself is rational
    return int(size)


def solve_transportation(problem: MatchingProblem) -> MatchingSolution:
    """Exact optimal fractional solution; supplies/capacities may be rational."""
    return solve(problem)


def _solve_scaled(
    supply: Sequence[int], capacity: Sequence[int], edges: Sequence[tuple[int, int, int]]
) -> tuple[list[int], list[int]]:
    """Successive shortest paths on integer data; returns per-edge flows and
    final node potentials."""
    n_left = len(supply)
    n_right = len(capacity)
    n = 2 + n_left + n_right
    source = 0
    sink = n - 1

    arc_to: list[int] = []
    arc_cap: list[int] = []
    arc_cost: list[int] = []
    arc_flow: list[int] = []
    adj: list[list[int]] = [[] for _ in range(n)]

    def add_arc(u: int, v: int, cap: int, cost: int) -> int:
        idx = len(arc_to)
        arc_to.extend((v, u))
        arc_cap.extend((cap, 0))
        arc_cost.extend((cost, -cost))
        arc_flow.extend((0, 0))
        adj[u].append(idx)
        adj[v].append(idx + 1)
        return idx

    for i, s in enumerate(supply):
        add_arc(source, 1 + i, s, 0)
    edge_arcs = []
    for l, r, w in edges:
        cap = min(supply[l], capacity[r])
        edge_arcs.append(add_arc(1 + l, 1 + n_left + r, cap, -w))
    for j, c in enumerate(capacity):
        add_arc(1 + n_left + j, sink, c, 0)

    # Initial potentials: one Bellman-Ford pass handles the negative costs.
    pot = [0] * n
    n_arcs = len(arc_to)
    for _ in range(n - 1):
        changed = False
        for idx in range(0, n_arcs, 2):
            if arc_cap[idx] > 0:
                u, v = arc_to[idx + 1], arc_to[idx]
                nd = pot[u] + arc_cost[idx]
                if nd < pot[v]:
                    pot[v] = nd
                    changed = True
        if not changed:
            break

    inf = math.inf
    while True:
        dist: list = [inf] * n
        dist[source] = 0
        pred_arc = [-1] * n
        heap = [(0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for idx in adj[u]:
                if arc_cap[idx] - arc_flow[idx] <= 0:
                    continue
                v = arc_to[idx]
                nd = d + arc_cost[idx] + pot[u] - pot[v]
                if nd < dist[v]:
                    dist[v] = nd
                    pred_arc[v] = idx
                    heapq.heappush(heap, (nd, v))
        if dist[sink] == inf:
            break
        if dist[sink] + pot[sink] - pot[source] >= 0:
            break
        # Bottleneck along the path, then push.
        delta = None
        v = sink
        while v != source:
            idx = pred_arc[v]
            residual = arc_cap[idx] - arc_flow[idx]
            if delta is None or residual < delta:
                delta = residual
            v = arc_to[idx ^ 1]
        v = sink
        while v != source:
            idx = pred_arc[v]
            arc_flow[idx] += delta
            arc_flow[idx ^ 1] -= delta
            v = arc_to[idx ^ 1]
        d_sink = dist[sink]
        for v in range(n):
            pot[v] += dist[v] if dist[v] != inf else d_sink

    flows = [arc_flow[idx] for idx in edge_arcs]
    return flows, pot


def verify_solution(problem: MatchingProblem, solution: MatchingSolution) -> None:
    """Re-check feasibility, the exact objective, and the optimality
    certificate (nonnegative reduced costs on all residual edges).  Raises
    AssertionError on any discrepancy."""
    n_left = len(problem.left)
    loads_l = [Fraction(0)] * n_left
    loads_r = [Fraction(0)] * len(problem.right)
    for (l, r, _), f in zip(problem.edges, solution.flows):
        assert f >= 0, "negative flow"
        loads_l[l] += f
        loads_r[r] += f
    for i, s in enumerate(problem.supply):
        assert loads_l[i] <= s, f"supply violated at left node {i}"
    for j, c in enumerate(problem.capacity):
        assert loads_r[j] <= c, f"capacity violated at right node {j}"
    objective = (
        sum((w * f for (_, _, w), f in zip(problem.edges, solution.flows)), Fraction(0))
        / problem.scale
    )
    assert objective == solution.objective, "objective mismatch"
    assert sum(solution.flows) == solution.size, "size mismatch"

    pot = solution.potentials
    assert pot[-1] >= pot[0], "negative-cost augmenting path remains"

    def rc(u: int, v: int, cost: int) -> int:
        return cost + pot[u] - pot[v]

    for (l, r, w), f in zip(problem.edges, solution.flows):
        u, v = 1 + l, 1 + n_left + r
        cap = min(problem.supply[l], problem.capacity[r])
        if f < cap:
            assert rc(u, v, -w) >= 0, f"residual edge ({l},{r}) has negative reduced cost"
        if f > 0:
            assert rc(v, u, w) >= 0, f"reverse edge ({l},{r}) has negative reduced cost"
    for i, s in enumerate(problem.supply):
        load = sum(f for (l, _, _), f in zip(problem.edges, solution.flows) if l == i)
        if load < s:
            assert rc(0, 1 + i, 0) >= 0
        if load > 0:
            assert rc(1 + i, 0, 0) >= 0
    for j, c in enumerate(problem.capacity):
        load = sum(f for (_, r, _), f in zip(problem.edges, solution.flows) if r == j)
        if load < c:
            assert rc(1 + n_left + j, len(pot) - 1, 0) >= 0
        if load > 0:
            assert rc(len(pot) - 1, 1 + n_left + j, 0) >= 0
