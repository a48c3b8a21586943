"""Selecting valid allocations under secondary criteria.

Covers agent inclusion/exclusion queries (unanimous and serviceable agents),
agent utilities (utility-Pareto-efficient selection and desk-scale welfare
argmax), and inner/outer threshold optimization.  The serviceability and
outer-threshold problems are NP-hard in general, so those searches run under
an explicit budget and raise ``BudgetExceeded`` rather than ever returning a
wrong answer.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Union

from . import allocate, matching
from .errors import BudgetExceeded, EmptyInstance, MissingUtility
from .model import (
    Instance,
    IntegralAllocation,
    Thresholds,
    rank,
    restrict,
    thresholds as compute_thresholds,
)

SUM = "sum"
NASH = "nash"
MIN = "min"
MINMAX = "minmax"
MAXMIN = "maxmin"

WELFARE_AGGREGATORS = (SUM, NASH, MIN)
INNER_MODES = (SUM, MINMAX)
OUTER_MODES = (MAXMIN, SUM)

ZERO = Fraction(0)


@dataclass(frozen=True)
class SearchBudget:
    """Limits for the exhaustive searches; exceeding any limit raises
    ``BudgetExceeded``."""

    max_agents: int = 16
    max_total_quota: int = 10
    max_states: int = 500_000

    def admit(self, instance: Instance) -> None:
        if len(instance.agents) > self.max_agents:
            raise BudgetExceeded(
                f"instance has {len(instance.agents)} agents, budget allows {self.max_agents}"
            )
        if instance.total_quota > self.max_total_quota:
            raise BudgetExceeded(
                f"instance has total quota {instance.total_quota}, budget allows {self.max_total_quota}"
            )


DEFAULT_BUDGET = SearchBudget()


@dataclass(frozen=True)
class AgentQueryResult:
    verdict: bool
    witness: Optional[IntegralAllocation] = None


@dataclass(frozen=True)
class UtilityProfile:
    """Exact-rational utilities in (0, 1] per (agent, category) pair."""

    entries: tuple[tuple[str, str, Fraction], ...]

    def __init__(self, entries: Union[Mapping[tuple[str, str], Fraction], list]):
        if isinstance(entries, Mapping):
            triples = [(a, c, Fraction(v)) for (a, c), v in entries.items()]
        else:
            triples = [(a, c, Fraction(v)) for a, c, v in entries]
        object.__setattr__(self, "entries", tuple(sorted(triples)))

    def as_dict(self) -> dict[tuple[str, str], Fraction]:
        return {(a, c): v for a, c, v in self.entries}

    def realized(self, allocation: IntegralAllocation, agent: str) -> Fraction:
        category = allocation.category_of(agent)
        if category is None:
            return ZERO
        return self.as_dict()[(agent, category)]


def _require_utilities(instance: Instance, utilities: UtilityProfile) -> dict[tuple[str, str], Fraction]:
    table = utilities.as_dict()
    for pair in instance.eligible_pairs():
        value = table.get(pair)
        if value is None:
            raise MissingUtility(f"no utility for eligible pair {pair}")
        if not (0 < value <= 1):
            raise MissingUtility(f"utility for {pair} must lie in (0, 1], got {value}")
    return table


def is_unanimous(instance: Instance, agent: str) -> AgentQueryResult:
    """Is the agent allocated in every valid allocation?

    Decided exactly by comparing V* with the maximum size of the agent's
    restriction; when the answer is no, the witness is a valid allocation of
    the original instance that excludes the agent.
    """
    instance.require_agent(agent)
    v_star = allocate.max_size(instance)
    restricted = restrict(instance, [agent])
    v_without = allocate.max_size(restricted)
    if v_star > v_without:
        return AgentQueryResult(True)
    if restricted.eligible_pairs():
        witness = allocate.solve_valid(restricted)
    else:
        witness = IntegralAllocation({})
    report = allocate.check(instance, witness)
    assert report.is_valid, "restriction optimum must be valid for the original instance"
    return AgentQueryResult(False, witness)


def _greedy_moves(instance: Instance, allocated: frozenset[str], quota_left: tuple[int, ...]) -> Iterator[tuple[int, str]]:
    """Legal serial-dictatorship moves from a state: (category index, agent)
    pairs where the agent sits in the category's top unallocated tier."""
    for ci, cat in enumerate(instance.categories):
        if quota_left[ci] == 0:
            continue
        for tier in cat.tiers:
            members = sorted(a for a in tier if a not in allocated)
            if members:
                for agent in members:
                    yield ci, agent
                break


def _max_extension(instance: Instance, allocated: frozenset[str], quota_left: tuple[int, ...]) -> int:
    """Upper bound on how many more agents any continuation can allocate."""
    agent_index = {}
    edges = []
    for cat_pos, cat in enumerate(instance.categories):
        if quota_left[cat_pos] == 0:
            continue
        for a in cat.eligible:
            if a in allocated:
                continue
            if a not in agent_index:
                agent_index[a] = len(agent_index)
            edges.append((agent_index[a], cat_pos, 1))
    if not edges:
        return 0
    problem = matching.MatchingProblem(
        left=tuple(agent_index),
        right=tuple(c.name for c in instance.categories),
        supply=[1] * len(agent_index),
        capacity=list(quota_left),
        edges=edges,
    )
    return matching.max_size(problem)


def is_serviceable(
    instance: Instance, agent: str, budget: Optional[SearchBudget] = None
) -> AgentQueryResult:
    """Is there a valid allocation in which the agent is allocated?

    Exhaustive search over serial-dictatorship runs (every valid allocated
    set is reached by one), memoized on (remaining quotas, allocated set) and
    pruned when a state can no longer reach a maximum-size allocation.
    """
    instance.require_agent(agent)
    budget = budget or DEFAULT_BUDGET
    budget.admit(instance)
    v_star = allocate.max_size(instance)
    if v_star == 0:
        return AgentQueryResult(False)
    eligible_anywhere = {a for a, _ in instance.eligible_pairs()}
    if agent not in eligible_anywhere:
        return AgentQueryResult(False)

    start_quota = tuple(c.quota for c in instance.categories)
    visited: set[tuple[tuple[int, ...], frozenset[str]]] = set()
    assignment: dict[str, str] = {}

    def dfs(allocated: frozenset[str], quota_left: tuple[int, ...]) -> Optional[dict]:
        key = (quota_left, allocated)
        if key in visited:
            return None
        visited.add(key)
        if len(visited) > budget.max_states:
            raise BudgetExceeded(f"search exceeded {budget.max_states} states")
        moves = list(_greedy_moves(instance, allocated, quota_left))
        if not moves:
            if len(allocated) == v_star and agent in allocated:
                return dict(assignment)
            return None
        if len(allocated) + _max_extension(instance, allocated, quota_left) < v_star:
            return None
        if agent not in allocated and not any(
            quota_left[ci] > 0 and agent in cat.eligible
            for ci, cat in enumerate(instance.categories)
        ):
            return None
        for ci, chosen in moves:
            name = instance.categories[ci].name
            assignment[chosen] = name
            quota = tuple(
                q - 1 if i == ci else q for i, q in enumerate(quota_left)
            )
            found = dfs(allocated | {chosen}, quota)
            del assignment[chosen]
            if found is not None:
                return found
        return None

    witness = dfs(frozenset(), start_quota)
    if witness is None:
        return AgentQueryResult(False)
    return AgentQueryResult(True, IntegralAllocation(witness))


def allocate_with_preferences(instance: Instance, utilities: UtilityProfile) -> IntegralAllocation:
    """Two-stage utility-aware selection.

    Stage one solves the default perturbed program to fix which agents are
    allocated; stage two re-solves on the restriction by the unallocated set
    with utility-driven penalties (higher utility, smaller penalty), plus a
    tiny rank-proportional term that keeps penalties strictly tier-monotone
    when agents of different priority share a utility.  The result satisfies
    QR, ER, PR, and is Pareto efficient in the agents' realized utilities.
    """
    table = _require_utilities(instance, utilities)
    if not instance.eligible_pairs():
        return IntegralAllocation({})
    first = allocate.solve_valid(instance)
    unallocated = [a for a in instance.agents if first.category_of(a) is None]
    restricted = restrict(instance, unallocated)
    pairs = restricted.eligible_pairs()
    if not pairs:
        return IntegralAllocation({})
    n_agents = len(instance.agents)
    n_categories = len(instance.categories)
    u_max = max(table[pair] for pair in pairs)
    denominator = 1
    for pair in pairs:
        value = table[pair]
        denominator = denominator * value.denominator // _gcd(denominator, value.denominator)
    eta = Fraction(1, 8 * n_agents**2 * n_categories**2 * denominator)
    coefficients = {}
    for a, c in pairs:
        delta = (u_max - table[(a, c)]) / (2 * n_agents * n_categories)
        delta += rank(restricted, c, a) * eta
        coefficients[(a, c)] = 1 - delta
    problem = allocate.weights_problem(restricted, coefficients)
    solution = matching.max_weight_b_matching(problem)
    assignment = {}
    for (l, r, _), f in zip(problem.edges, solution.flows):
        if f == 1:
            assignment[restricted.agents[l]] = restricted.categories[r].name
    return IntegralAllocation(assignment)


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def brute_force_welfare(
    instance: Instance,
    utilities: UtilityProfile,
    aggregator: str = SUM,
    budget=None,
) -> IntegralAllocation:
    """Exact argmax of an aggregate welfare over all valid allocations.

    Desk-scale only (the problem is NP-hard): enumerates the valid set and
    compares exact rationals; NASH compares products directly, with no
    logarithms.  Ties go to the first allocation in canonical enumeration
    order.
    """
    from . import oracle

    if aggregator not in WELFARE_AGGREGATORS:
        raise MissingUtility(f"unknown aggregator {aggregator!r}")
    table = _require_utilities(instance, utilities)
    result = oracle.enumerate_all(instance, budget=budget)
    if not result.valid:
        raise EmptyInstance("instance admits no valid allocation")

    def score(allocation: IntegralAllocation):
        realized = []
        for agent in instance.agents:
            category = allocation.category_of(agent)
            realized.append(table[(agent, category)] if category is not None else ZERO)
        if aggregator == SUM:
            return sum(realized, ZERO)
        if aggregator == MIN:
            return min(realized) if realized else ZERO
        product = Fraction(1)
        for value in realized:
            product *= value
        return product

    best = result.valid[0]
    best_score = score(best)
    for candidate in result.valid[1:]:
        s = score(candidate)
        if s > best_score:
            best, best_score = candidate, s
    return best


def optimize_inner(instance: Instance, mode: str = SUM) -> IntegralAllocation:
    """Valid allocation minimizing the sum of allocated ranks (``sum``) or the
    maximum allocated rank (``minmax``), via the matching rank schemes."""
    if mode not in INNER_MODES:
        raise EmptyInstance(f"unknown inner mode {mode!r}")
    if not instance.eligible_pairs():
        return IntegralAllocation({})
    scheme = allocate.RANK_SUM if mode == SUM else allocate.RANK_MINMAX
    return allocate.solve_valid(instance, allocate.make_perturbation(instance, scheme))


def optimize_outer(
    instance: Instance, mode: str = MAXMIN, budget: Optional[SearchBudget] = None
) -> tuple[IntegralAllocation, Thresholds]:
    """Valid allocation maximizing the minimum (``maxmin``) or the sum
    (``sum``) of per-category outer thresholds.

    NP-hard, so this is an exhaustive search: outer thresholds depend only on
    the unallocated set, and every valid allocated set is realized by a
    category-stable allocation, so it suffices to scan serial-dictatorship
    terminal states of maximum size.
    """
    if mode not in OUTER_MODES:
        raise EmptyInstance(f"unknown outer mode {mode!r}")
    budget = budget or DEFAULT_BUDGET
    budget.admit(instance)
    v_star = allocate.max_size(instance)

    best: Optional[IntegralAllocation] = None
    best_thresholds: Optional[Thresholds] = None
    best_score = None
    visited: set[tuple[tuple[int, ...], frozenset[str]]] = set()
    assignment: dict[str, str] = {}

    def dfs(allocated: frozenset[str], quota_left: tuple[int, ...]) -> None:
        nonlocal best, best_thresholds, best_score
        key = (quota_left, allocated)
        if key in visited:
            return
        visited.add(key)
        if len(visited) > budget.max_states:
            raise BudgetExceeded(f"search exceeded {budget.max_states} states")
        moves = list(_greedy_moves(instance, allocated, quota_left))
        if not moves:
            if len(allocated) != v_star:
                return
            candidate = IntegralAllocation(dict(assignment))
            ts = compute_thresholds(instance, candidate)
            score = min(ts.outer) if mode == MAXMIN else sum(ts.outer)
            if best_score is None or score > best_score:
                best, best_thresholds, best_score = candidate, ts, score
            return
        if len(allocated) + _max_extension(instance, allocated, quota_left) < v_star:
            return
        for ci, chosen in moves:
            name = instance.categories[ci].name
            assignment[chosen] = name
            quota = tuple(q - 1 if i == ci else q for i, q in enumerate(quota_left))
            dfs(allocated | {chosen}, quota)
            del assignment[chosen]

    dfs(frozenset(), tuple(c.quota for c in instance.categories))
    if best is None:
        # No allocating move at all: the empty allocation is the unique valid
        # one (v_star is 0 in this case).
        best = IntegralAllocation({})
        best_thresholds = compute_thresholds(instance, best)
    return best, best_thresholds
