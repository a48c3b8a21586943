"""Allocation instances, allocations, and the validity/threshold checking surface.

An instance is a set of agents plus categories, where each category carries an
integer quota and an ordered list of priority tiers over its eligible agents
(tier 1 is the highest priority; ties live inside a tier).  All fractional
quantities are exact `fractions.Fraction` values; there is no floating point
anywhere in the validity logic.

Everything here is immutable after construction and every operation is a pure
function, so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

from .errors import (
    AgentNotEligible,
    DimensionMismatch,
    IneligibleAssignment,
    MalformedInstance,
    UnknownAgent,
    UnknownCategory,
)

PASS = "PASS"
FAIL = "FAIL"
NOT_APPLICABLE = "NOT_APPLICABLE"

ZERO = Fraction(0)
ONE = Fraction(1)


@dataclass(frozen=True)
class Category:
    """A resource pool with a quota and priority tiers over its eligible agents.

    ``tiers[i]`` holds the agents of rank ``i + 1``; the eligible set is the
    union of all tiers.  Tiers must be nonempty and pairwise disjoint.  A
    category with no tiers has an empty eligible set; a quota of zero is
    allowed and simply never allocates.
    """

    name: str
    quota: int
    tiers: tuple[tuple[str, ...], ...]

    def __init__(self, name: str, quota: int, tiers: Iterable[Iterable[str]] = ()):
        object.__setattr__(self, "name", str(name))
        object.__setattr__(self, "quota", quota)
        object.__setattr__(self, "tiers", tuple(tuple(t) for t in tiers))
        if not isinstance(self.quota, int) or isinstance(self.quota, bool) or self.quota < 0:
            raise MalformedInstance(f"category {self.name!r}: quota must be a nonnegative integer")
        seen: set[str] = set()
        for i, tier in enumerate(self.tiers):
            if not tier:
                raise MalformedInstance(f"category {self.name!r}: tier {i + 1} is empty")
            for agent in tier:
                if agent in seen:
                    raise MalformedInstance(
                        f"category {self.name!r}: agent {agent!r} appears in more than one tier"
                    )
                seen.add(agent)

    @property
    def eligible(self) -> tuple[str, ...]:
        """Eligible agents in tier order."""
        return tuple(a for tier in self.tiers for a in tier)

    def rank_of(self, agent: str) -> Optional[int]:
        """1-based tier index of ``agent``, or None if ineligible."""
        for i, tier in enumerate(self.tiers):
            if agent in tier:
                return i + 1
        return None


@dataclass(frozen=True)
class Instance:
    """Agents plus categories; the static description of a rationing problem."""

    agents: tuple[str, ...]
    categories: tuple[Category, ...]
    _by_name: Mapping[str, Category] = field(repr=False, compare=False, default=None)
    _ranks: Mapping[tuple[str, str], int] = field(repr=False, compare=False, default=None)

    def __init__(self, agents: Iterable[str], categories: Iterable[Category]):
        object.__setattr__(self, "agents", tuple(str(a) for a in agents))
        object.__setattr__(self, "categories", tuple(categories))
        if len(set(self.agents)) != len(self.agents):
            raise MalformedInstance("agent identifiers must be unique")
        names = [c.name for c in self.categories]
        if len(set(names)) != len(names):
            raise MalformedInstance("category names must be unique")
        agent_set = set(self.agents)
        ranks: dict[tuple[str, str], int] = {}
        for cat in self.categories:
            for i, tier in enumerate(cat.tiers):
                for agent in tier:
                    if agent not in agent_set:
                        raise MalformedInstance(
                            f"category {cat.name!r} lists unknown agent {agent!r}"
                        )
                    ranks[(cat.name, agent)] = i + 1
        object.__setattr__(self, "_by_name", dict((c.name, c) for c in self.categories))
        object.__setattr__(self, "_ranks", ranks)

    def category(self, name: str) -> Category:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownCategory(f"unknown category {name!r}") from None

    def require_agent(self, agent: str) -> None:
        if agent not in self.agents:
            raise UnknownAgent(f"unknown agent {agent!r}")

    @property
    def total_quota(self) -> int:
        return sum(c.quota for c in self.categories)

    def eligible_pairs(self) -> tuple[tuple[str, str], ...]:
        """All (agent, category-name) pairs with the agent eligible, in
        (category input order, tier order)."""
        return tuple(
            (agent, cat.name) for cat in self.categories for agent in cat.eligible
        )


def rank(instance: Instance, category: str, agent: str) -> int:
    """1-based priority rank of ``agent`` in ``category`` (tier index)."""
    cat = instance.category(category)
    instance.require_agent(agent)
    r = instance._ranks.get((cat.name, agent))
    if r is None:
        raise AgentNotEligible(f"agent {agent!r} is not eligible in category {category!r}")
    return r


def restrict(instance: Instance, agents: Iterable[str]) -> Instance:
    """Cut every priority list at each member of ``agents``.

    For each category, removes every agent of the given set together with all
    agents strictly below one of them, then drops emptied tiers.  Quotas and
    the agent list are unchanged.  Restricting by several agents equals the
    intersection of the single-agent restrictions.
    """
    agent_set = set(agents)
    for a in agent_set:
        instance.require_agent(a)
    new_categories = []
    for cat in instance.categories:
        cutoff = None  # lowest rank of a restricted agent in this category
        for a in agent_set:
            r = instance._ranks.get((cat.name, a))
            if r is not None and (cutoff is None or r < cutoff):
                cutoff = r
        tiers = []
        for i, tier in enumerate(cat.tiers):
            if cutoff is not None and i + 1 > cutoff:
                break
            kept = tuple(a for a in tier if a not in agent_set)
            if kept:
                tiers.append(kept)
        new_categories.append(Category(cat.name, cat.quota, tiers))
    return Instance(instance.agents, new_categories)


@dataclass(frozen=True)
class IntegralAllocation:
    """A map from agents to categories; unassigned agents are omitted.

    Stored canonically as assignment pairs sorted by agent identifier, which
    makes allocations hashable and directly comparable.
    """

    assignment: tuple[tuple[str, str], ...]

    def __init__(self, assignment: Union[Mapping[str, Optional[str]], Iterable[tuple[str, Optional[str]]]]):
        items = assignment.items() if isinstance(assignment, Mapping) else assignment
        pairs = sorted((a, c) for a, c in items if c is not None)
        agents = [a for a, _ in pairs]
        if len(set(agents)) != len(agents):
            raise MalformedInstance("an agent may be assigned at most once")
        object.__setattr__(self, "assignment", tuple(pairs))

    def category_of(self, agent: str) -> Optional[str]:
        for a, c in self.assignment:
            if a == agent:
                return c
        return None

    @property
    def allocated_agents(self) -> frozenset[str]:
        return frozenset(a for a, _ in self.assignment)

    @property
    def size(self) -> int:
        return len(self.assignment)

    def agents_of(self, category: str) -> tuple[str, ...]:
        return tuple(a for a, c in self.assignment if c == category)

    def as_dict(self) -> dict[str, str]:
        return dict(self.assignment)

    def to_fractional(self) -> "FractionalAllocation":
        return FractionalAllocation({(a, c): ONE for a, c in self.assignment})


@dataclass(frozen=True)
class FractionalAllocation:
    """Exact-rational allocation amounts per (agent, category) pair.

    Zero entries are dropped; the remaining entries are sorted, so equal
    allocations compare (and hash) equal.  Per-agent totals may not exceed 1.
    """

    entries: tuple[tuple[str, str, Fraction], ...]

    def __init__(self, entries: Union[Mapping[tuple[str, str], Fraction], Iterable[tuple[str, str, Fraction]]]):
        if isinstance(entries, Mapping):
            triples = [(a, c, Fraction(v)) for (a, c), v in entries.items()]
        else:
            triples = [(a, c, Fraction(v)) for a, c, v in entries]
        triples = sorted((a, c, v) for a, c, v in triples if v != 0)
        totals: dict[str, Fraction] = {}
        seen: set[tuple[str, str]] = set()
        for a, c, v in triples:
            if (a, c) in seen:
                raise MalformedInstance(f"duplicate entry for pair ({a!r}, {c!r})")
            seen.add((a, c))
            if v < 0 or v > 1:
                raise MalformedInstance(f"entry ({a!r}, {c!r}) = {v} outside [0, 1]")
            totals[a] = totals.get(a, ZERO) + v
        for a, t in totals.items():
            if t > 1:
                raise MalformedInstance(f"agent {a!r} total allocation {t} exceeds 1")
        object.__setattr__(self, "entries", tuple(triples))

    def value(self, agent: str, category: str) -> Fraction:
        for a, c, v in self.entries:
            if a == agent and c == category:
                return v
        return ZERO

    def agent_total(self, agent: str) -> Fraction:
        return sum((v for a, _, v in self.entries if a == agent), ZERO)

    def category_total(self, category: str) -> Fraction:
        return sum((v for _, c, v in self.entries if c == category), ZERO)

    @property
    def total(self) -> Fraction:
        """Total allocation size V(x)."""
        return sum((v for _, _, v in self.entries), ZERO)

    @property
    def is_integral(self) -> bool:
        return all(v == 1 for _, _, v in self.entries)

    def to_integral(self) -> IntegralAllocation:
        if not self.is_integral:
            raise MalformedInstance("allocation has fractional entries")
        return IntegralAllocation({a: c for a, c, _ in self.entries})


AnyAllocation = Union[IntegralAllocation, FractionalAllocation]


@dataclass(frozen=True)
class AxiomVerdict:
    status: str
    witness: Optional[dict] = None

    @property
    def passed(self) -> bool:
        return self.status == PASS


@dataclass(frozen=True)
class ValidityReport:
    """Per-axiom verdicts with concrete witnesses for every failure."""

    qr: AxiomVerdict
    er: AxiomVerdict
    pr: AxiomVerdict
    pe: AxiomVerdict
    cs: AxiomVerdict

    @property
    def is_valid(self) -> bool:
        """Quota-, eligibility-, priority-respecting and Pareto efficient."""
        return all(v.passed for v in (self.qr, self.er, self.pr, self.pe))

    @property
    def fully_valid(self) -> bool:
        """Valid and additionally not category-unstable."""
        return self.is_valid and self.cs.status != FAIL


@dataclass(frozen=True)
class Thresholds:
    """Per-category inner/outer audit thresholds, aligned with the instance's
    category order."""

    categories: tuple[str, ...]
    inner: tuple[int, ...]
    outer: tuple[int, ...]

    def inner_of(self, category: str) -> int:
        return self.inner[self.categories.index(category)]

    def outer_of(self, category: str) -> int:
        return self.outer[self.categories.index(category)]


def _as_fractional(allocation: AnyAllocation) -> FractionalAllocation:
    if isinstance(allocation, IntegralAllocation):
        return allocation.to_fractional()
    return allocation


def _check_dimensions(instance: Instance, allocation: FractionalAllocation) -> None:
    agent_set = set(instance.agents)
    names = {c.name for c in instance.categories}
    for a, c, _ in allocation.entries:
        if a not in agent_set:
            raise DimensionMismatch(f"allocation names unknown agent {a!r}")
        if c not in names:
            raise DimensionMismatch(f"allocation names unknown category {c!r}")


def find_trade_cycle(instance: Instance, allocation: IntegralAllocation) -> Optional[list[tuple[str, str]]]:
    """Category-stability check: a trade cycle over allocated pairs, or None.

    Nodes are the allocated (agent, category) pairs; there is an edge
    (a, c) -> (a', c') whenever a' is eligible in c with priority at least
    a's.  Tie edges cost 0 and strict edges cost -1, so a CS violation is a
    cycle of negative total cost; equivalently, a strict edge whose endpoints
    lie in the same strongly connected component.
    """
    nodes = list(allocation.assignment)
    n = len(nodes)
    if n < 2:
        return None
    adj: list[list[int]] = [[] for _ in range(n)]
    strict_edges: list[tuple[int, int]] = []
    for i, (a, c) in enumerate(nodes):
        r_cur = instance._ranks[(c, a)]
        for j, (a2, _) in enumerate(nodes):
            if i == j:
                continue
            r_new = instance._ranks.get((c, a2))
            if r_new is None or r_new > r_cur:
                continue
            adj[i].append(j)
            if r_new < r_cur:
                strict_edges.append((i, j))
    component = _strong_components(adj)
    for u, v in strict_edges:
        if component[u] != component[v]:
            continue
        # Close the cycle: shortest hop path v -> u inside the component.
        path = _bfs_path(adj, component, v, u)
        k = path.index(min(path))
        cycle = path[k:] + path[:k]
        return [nodes[i] for i in cycle]
    return None


def _strong_components(adj: list[list[int]]) -> list[int]:
    """Kosaraju strongly-connected components; returns a component id per node."""
    n = len(adj)
    order: list[int] = []
    seen = [False] * n
    for start in range(n):
        if seen[start]:
            continue
        stack = [(start, 0)]
        seen[start] = True
        while stack:
            node, idx = stack.pop()
            if idx < len(adj[node]):
                stack.append((node, idx + 1))
                nxt = adj[node][idx]
                if not seen[nxt]:
                    seen[nxt] = True
                    stack.append((nxt, 0))
            else:
                order.append(node)
    radj: list[list[int]] = [[] for _ in range(n)]
    for u in range(n):
        for v in adj[u]:
            radj[v].append(u)
    component = [-1] * n
    label = 0
    for start in reversed(order):
        if component[start] != -1:
            continue
        stack = [start]
        component[start] = label
        while stack:
            node = stack.pop()
            for nxt in radj[node]:
                if component[nxt] == -1:
                    component[nxt] = label
                    stack.append(nxt)
        label += 1
    return component


def _bfs_path(adj: list[list[int]], component: list[int], src: int, dst: int) -> list[int]:
    """Shortest hop path src -> dst using only nodes of src's component."""
    if src == dst:
        return [src]
    comp = component[src]
    pred = {src: None}
    frontier = [src]
    while frontier:
        nxt_frontier = []
        for node in frontier:
            for nxt in adj[node]:
                if component[nxt] != comp or nxt in pred:
                    continue
                pred[nxt] = node
                if nxt == dst:
                    path = [dst]
                    while pred[path[-1]] is not None:
                        path.append(pred[path[-1]])
                    path.reverse()
                    return path
                nxt_frontier.append(nxt)
        frontier = nxt_frontier
    raise AssertionError("no path inside a strongly connected component")


def validate(instance: Instance, allocation: AnyAllocation, v_star: int) -> ValidityReport:
    """Check QR, ER, PR, PE, and CS, producing a witness for each failure.

    ``v_star`` must be the maximum achievable size of any quota- and
    eligibility-respecting allocation (see ``matching.max_size``); the Pareto
    efficiency test is exactly ``V(x) == v_star`` given the other axioms.
    CS applies to integral allocations only and is reported NOT_APPLICABLE
    for strictly fractional input.
    """
    frac = _as_fractional(allocation)
    _check_dimensions(instance, frac)

    qr = AxiomVerdict(PASS)
    for cat in instance.categories:
        load = frac.category_total(cat.name)
        if load > cat.quota:
            qr = AxiomVerdict(FAIL, {"category": cat.name, "allocated": load, "quota": cat.quota})
            break

    er = AxiomVerdict(PASS)
    for cat in instance.categories:
        eligible = set(cat.eligible)
        for a, c, v in frac.entries:
            if c == cat.name and a not in eligible:
                er = AxiomVerdict(FAIL, {"agent": a, "category": c, "value": v})
                break
        if not er.passed:
            break

    pr = AxiomVerdict(PASS)
    totals = {a: frac.agent_total(a) for a in instance.agents}
    for cat in instance.categories:
        if not pr.passed:
            break
        for lower in cat.eligible:  # tier order, highest priority first
            if frac.value(lower, cat.name) == 0:
                continue
            r_lower = instance._ranks[(cat.name, lower)]
            for higher in cat.eligible:
                if instance._ranks[(cat.name, higher)] >= r_lower:
                    break
                if totals[higher] != 1:
                    pr = AxiomVerdict(
                        FAIL,
                        {"higher_agent": higher, "category": cat.name, "lower_agent": lower},
                    )
                    break
            if not pr.passed:
                break

    size = frac.total
    if qr.passed and er.passed and pr.passed and size == v_star:
        pe = AxiomVerdict(PASS)
    else:
        pe = AxiomVerdict(FAIL, {"size": size, "max_size": v_star})

    if frac.is_integral:
        cycle = find_trade_cycle(instance, frac.to_integral())
        if cycle is None:
            cs = AxiomVerdict(PASS)
        else:
            cs = AxiomVerdict(FAIL, {"cycle": cycle})
    else:
        cs = AxiomVerdict(NOT_APPLICABLE)

    return ValidityReport(qr=qr, er=er, pr=pr, pe=pe, cs=cs)


def thresholds(instance: Instance, allocation: IntegralAllocation) -> Thresholds:
    """Inner and outer audit thresholds of an integral allocation.

    The inner threshold of a category is the worst (largest) rank among its
    allocated agents, or 0 when it allocated nothing; the outer threshold is
    the best (smallest) rank among its unallocated eligible agents, or one
    more than its tier count when every eligible agent is allocated.
    """
    if not isinstance(allocation, IntegralAllocation):
        allocation = allocation.to_integral()
    names = {c.name for c in instance.categories}
    agent_set = set(instance.agents)
    for a, c in allocation.assignment:
        if a not in agent_set or c not in names:
            raise IneligibleAssignment(f"assignment ({a!r}, {c!r}) is not part of the instance")
        if instance._ranks.get((c, a)) is None:
            raise IneligibleAssignment(f"agent {a!r} is assigned to {c!r} but not eligible there")
    allocated = allocation.allocated_agents
    inner = []
    outer = []
    for cat in instance.categories:
        mine = [instance._ranks[(cat.name, a)] for a in allocation.agents_of(cat.name)]
        inner.append(max(mine) if mine else 0)
        waiting = [
            instance._ranks[(cat.name, a)] for a in cat.eligible if a not in allocated
        ]
        outer.append(min(waiting) if waiting else len(cat.tiers) + 1)
    return Thresholds(
        categories=tuple(c.name for c in instance.categories),
        inner=tuple(inner),
        outer=tuple(outer),
    )
