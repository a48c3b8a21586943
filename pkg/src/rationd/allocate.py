"""Core selection machinery for valid allocations.

A *valid perturbation* assigns every eligible (agent, category) pair a small
positive penalty that is constant within a priority tier and strictly grows
down the tiers, with all penalties summing to at most 1/2.  Maximizing the
perturbed size  V_delta(x) = sum x_ac * (1 - delta_ac)  over the b-matching
polytope yields exactly the quota-, eligibility-, priority-respecting and
Pareto-efficient allocations; this module builds those perturbations, solves
the perturbed program, and provides the converse constructions (realizing a
given allocation as a serial dictatorship order or as a perturbation optimum)
plus the decomposition of fractional valid allocations into integral ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from . import matching
from .errors import (
    EmptyInstance,
    EntryOnIneligiblePair,
    InvalidPerturbation,
    MalformedChoiceOrder,
    NotValidAllocation,
    NotValidOrNotCS,
)
from .model import (
    FractionalAllocation,
    Instance,
    IntegralAllocation,
    ValidityReport,
    validate,
)

RANK_SUM = "rank-sum"
RANK_MINMAX = "rank-minmax"
UNIFORM_TIERED = "uniform-tiered"

SCHEMES = (RANK_SUM, RANK_MINMAX, UNIFORM_TIERED)

POSITIVITY = "positivity"
SMALL_EFFECT = "small-effect"
CONSISTENCY = "consistency"

ZERO = Fraction(0)
HALF = Fraction(1, 2)


@dataclass(frozen=True)
class Perturbation:
    """Per-(agent, category) positive rationals, defined exactly on the
    eligible pairs of an instance."""

    entries: tuple[tuple[str, str, Fraction], ...]

    def __init__(self, entries: Union[Mapping[tuple[str, str], Fraction], Iterable[tuple[str, str, Fraction]]]):
        if isinstance(entries, Mapping):
            triples = [(a, c, Fraction(v)) for (a, c), v in entries.items()]
        else:
            triples = [(a, c, Fraction(v)) for a, c, v in entries]
        object.__setattr__(self, "entries", tuple(sorted(triples)))

    def as_dict(self) -> dict[tuple[str, str], Fraction]:
        return {(a, c): v for a, c, v in self.entries}

    @property
    def total(self) -> Fraction:
        return sum((v for _, _, v in self.entries), ZERO)

    def perturbed_value(self, allocation: Union[IntegralAllocation, FractionalAllocation]) -> Fraction:
        """V_delta(x) = sum x_ac * (1 - delta_ac)."""
        lookup = self.as_dict()
        if isinstance(allocation, IntegralAllocation):
            pairs = [(a, c, Fraction(1)) for a, c in allocation.assignment]
        else:
            pairs = list(allocation.entries)
        return sum((v * (1 - lookup[(a, c)]) for a, c, v in pairs), ZERO)


@dataclass(frozen=True)
class PerturbationCheck:
    ok: bool
    violated: Optional[str] = None
    witness: Optional[tuple] = None


@dataclass(frozen=True)
class ConvexCombination:
    """Positive weights summing to 1 over integral allocations whose weighted
    sum reproduces a fractional allocation exactly."""

    components: tuple[tuple[Fraction, IntegralAllocation], ...]

    @property
    def weights(self) -> tuple[Fraction, ...]:
        return tuple(w for w, _ in self.components)

    def mixture(self) -> FractionalAllocation:
        acc: dict[tuple[str, str], Fraction] = {}
        for w, alloc in self.components:
            for a, c in alloc.assignment:
                acc[(a, c)] = acc.get((a, c), ZERO) + w
        return FractionalAllocation(acc)


def is_valid_perturbation(instance: Instance, perturbation: Perturbation) -> PerturbationCheck:
    """Check Positivity, Small Effect, and Consistency, in that order.

    Returns the first violated property with a witness pair.  Raises
    ``EntryOnIneligiblePair`` if the perturbation's domain is not exactly the
    instance's eligible pairs.
    """
    eligible = set(instance.eligible_pairs())
    given = {(a, c) for a, c, _ in perturbation.entries}
    extra = given - eligible
    if extra:
        a, c = min(extra)
        raise EntryOnIneligiblePair(f"perturbation entry on ineligible pair ({a!r}, {c!r})")
    missing = eligible - given
    if missing:
        a, c = min(missing)
        raise EntryOnIneligiblePair(f"perturbation is missing eligible pair ({a!r}, {c!r})")

    lookup = perturbation.as_dict()
    for a, c, v in perturbation.entries:
        if v <= 0:
            return PerturbationCheck(False, POSITIVITY, (a, c))
    if perturbation.total > HALF:
        return PerturbationCheck(False, SMALL_EFFECT, None)
    for cat in instance.categories:
        previous_tier_value: Optional[Fraction] = None
        for tier in cat.tiers:
            values = {lookup[(a, cat.name)] for a in tier}
            if len(values) > 1:
                pair = sorted(tier)[:2]
                return PerturbationCheck(False, CONSISTENCY, (pair[0], cat.name))
            value = values.pop()
            if previous_tier_value is not None and value <= previous_tier_value:
                return PerturbationCheck(False, CONSISTENCY, (tier[0], cat.name))
            previous_tier_value = value
    return PerturbationCheck(True)


def make_perturbation(instance: Instance, scheme: str = UNIFORM_TIERED) -> Perturbation:
    """Build a valid perturbation from the instance's ranks.

    ``rank-sum`` (and its alias ``uniform-tiered``, the documented default)
    uses delta = r / (2 |C| |A|^2), whose optima minimize the total rank of
    allocated agents.  ``rank-minmax`` uses
    delta = (1 / (2 |C| |A|)) * (1 / (|A| + 1))^(|A| - r), whose optima
    minimize the worst allocated rank.
    """
    if scheme not in SCHEMES:
        raise InvalidPerturbation(f"unknown scheme {scheme!r}")
    pairs = instance.eligible_pairs()
    if not pairs:
        raise EmptyInstance("instance has no eligible (agent, category) pair")
    n_agents = len(instance.agents)
    n_categories = len(instance.categories)
    entries = {}
    for cat in instance.categories:
        for i, tier in enumerate(cat.tiers):
            r = i + 1
            if scheme == RANK_MINMAX:
                delta = Fraction(1, 2 * n_categories * n_agents) * Fraction(
                    1, n_agents + 1
                ) ** (n_agents - r)
            else:
                delta = Fraction(r, 2 * n_categories * n_agents * n_agents)
            for agent in tier:
                entries[(agent, cat.name)] = delta
    return Perturbation(entries)


def weights_problem(instance: Instance, coefficients: Mapping[tuple[str, str], Fraction]) -> matching.MatchingProblem:
    """Scale exact-rational objective coefficients to integers and build the
    b-matching problem (agents supply 1, categories their quotas)."""
    denom = 1
    for v in coefficients.values():
        denom = denom * v.denominator // math.gcd(denom, v.denominator)
    agent_index = {a: i for i, a in enumerate(instance.agents)}
    cat_index = {c.name: j for j, c in enumerate(instance.categories)}
    edges = [
        (agent_index[a], cat_index[c], int(coefficients[(a, c)] * denom))
        for (a, c) in instance.eligible_pairs()
    ]
    return matching.MatchingProblem(
        left=instance.agents,
        right=tuple(c.name for c in instance.categories),
        supply=[1] * len(instance.agents),
        capacity=[c.quota for c in instance.categories],
        edges=edges,
        scale=denom,
    )


def size_problem(instance: Instance) -> matching.MatchingProblem:
    """Unit-weight b-matching problem of the instance (for max_size)."""
    agent_index = {a: i for i, a in enumerate(instance.agents)}
    cat_index = {c.name: j for j, c in enumerate(instance.categories)}
    edges = [
        (agent_index[a], cat_index[c], 1) for (a, c) in instance.eligible_pairs()
    ]
    return matching.MatchingProblem(
        left=instance.agents,
        right=tuple(c.name for c in instance.categories),
        supply=[1] * len(instance.agents),
        capacity=[c.quota for c in instance.categories],
        edges=edges,
    )


def max_size(instance: Instance) -> int:
    """Maximum achievable allocation size V* (no priority constraints)."""
    if not instance.eligible_pairs():
        return 0
    return matching.max_size(size_problem(instance))


def check(instance: Instance, allocation) -> ValidityReport:
    """Validate against the instance, computing V* internally."""
    return validate(instance, allocation, max_size(instance))


def solve_valid(instance: Instance, perturbation: Optional[Perturbation] = None) -> IntegralAllocation:
    """Solve the perturbed program and return its canonical integral optimum.

    The output satisfies all five axioms (QR, ER, PR, PE, and CS).  With no
    perturbation given, the default scheme is used.
    """
    if not instance.eligible_pairs():
        return IntegralAllocation({})
    if perturbation is None:
        perturbation = make_perturbation(instance)
    result = is_valid_perturbation(instance, perturbation)
    if not result.ok:
        raise InvalidPerturbation(
            f"perturbation violates {result.violated} (witness {result.witness})"
        )
    coefficients = {(a, c): 1 - v for a, c, v in perturbation.entries}
    problem = weights_problem(instance, coefficients)
    solution = matching.max_weight_b_matching(problem)
    assignment = {}
    for (l, r, _), f in zip(problem.edges, solution.flows):
        if f == 1:
            assignment[instance.agents[l]] = instance.categories[r].name
    return IntegralAllocation(assignment)


TieBreak = Callable[[str, tuple[str, ...]], str]


def _lexicographic(category: str, candidates: tuple[str, ...]) -> str:
    return min(candidates)


def serial_dictatorship(
    instance: Instance,
    order: Sequence[str],
    tie_break: Optional[TieBreak] = None,
) -> IntegralAllocation:
    """Run the greedy category-by-category allocation along a choice order.

    Each entry of ``order`` names a category, which allocates one unit to its
    highest-priority unallocated eligible agent (if any).  The order must
    contain each category exactly quota-many times.  Ties within a tier go to
    the lexicographically smallest agent unless ``tie_break`` overrides.
    """
    counts: dict[str, int] = {}
    for name in order:
        counts[name] = counts.get(name, 0) + 1
    for cat in instance.categories:
        if counts.pop(cat.name, 0) != cat.quota:
            raise MalformedChoiceOrder(
                f"order must contain category {cat.name!r} exactly {cat.quota} times"
            )
    if counts:
        raise MalformedChoiceOrder(f"order names unknown categories {sorted(counts)}")
    if tie_break is None:
        tie_break = _lexicographic
    assignment: dict[str, str] = {}
    for name in order:
        cat = instance.category(name)
        for tier in cat.tiers:
            candidates = tuple(sorted(a for a in tier if a not in assignment))
            if candidates:
                pick = tie_break(name, candidates)
                if pick not in candidates:
                    raise MalformedChoiceOrder(
                        f"tie-break chose {pick!r} outside candidates {candidates}"
                    )
                assignment[pick] = name
                break
    return IntegralAllocation(assignment)


def _choice_stages(instance: Instance, allocation: IntegralAllocation) -> list[tuple[str, str]]:
    """Stage sequence (category, agent) realizing a valid CS allocation by
    serial dictatorship: at each stage some category allocates one of its
    highest-priority remaining agents, consistent with the allocation."""
    remaining = set(instance.agents)
    quota_left = {c.name: c.quota for c in instance.categories}
    todo = dict(allocation.assignment)
    stages: list[tuple[str, str]] = []
    while todo:
        progressed = False
        for cat in instance.categories:
            if quota_left[cat.name] == 0:
                continue
            top = None
            for tier in cat.tiers:
                members = sorted(a for a in tier if a in remaining)
                if members:
                    top = members
                    break
            if not top:
                continue
            picks = [a for a in top if todo.get(a) == cat.name]
            if not picks:
                continue
            agent = picks[0]
            stages.append((cat.name, agent))
            remaining.remove(agent)
            quota_left[cat.name] -= 1
            del todo[agent]
            progressed = True
            break
        if not progressed:
            raise AssertionError(
                "no serial dictatorship stage found for a CS-passing allocation"
            )
    return stages


def realize_as_choice_order(instance: Instance, allocation: IntegralAllocation) -> tuple[str, ...]:
    """Choice order realizing a valid, category-stable allocation.

    The first V(x) entries each allocate an agent; leftover category copies
    are appended at the end.  Raises ``NotValidOrNotCS`` otherwise.
    """
    report = check(instance, allocation)
    if not report.fully_valid:
        raise NotValidOrNotCS(_report_failure(report))
    stages = _choice_stages(instance, allocation)
    order = [c for c, _ in stages]
    used: dict[str, int] = {}
    for c in order:
        used[c] = used.get(c, 0) + 1
    for cat in instance.categories:
        order.extend([cat.name] * (cat.quota - used.get(cat.name, 0)))
    return tuple(order)


def tie_break_for(allocation: IntegralAllocation) -> TieBreak:
    """Tie-break preferring, within a tier, agents the given allocation
    assigns to the choosing category (used to round-trip choice orders)."""

    def pick(category: str, candidates: tuple[str, ...]) -> str:
        preferred = [a for a in candidates if allocation.category_of(a) == category]
        return min(preferred) if preferred else min(candidates)

    return pick


def realize_perturbation(instance: Instance, allocation: IntegralAllocation) -> Perturbation:
    """A valid perturbation whose optimum is attained by the given allocation.

    Follows the stage-wise bonus construction: allocating stages down a
    choice order receive geometrically decaying bonuses rho (plus tiny
    rank-spacing terms), eligible pairs never covered by a stage receive even
    tinier rank-decreasing bonuses, and the bonuses convert to penalties via
    delta = (K - rho) / (1 + K) with K slightly above rho_max so that every
    delta stays strictly positive.
    """
    report = check(instance, allocation)
    if not report.fully_valid:
        raise NotValidOrNotCS(_report_failure(report))
    stages = _choice_stages(instance, allocation)
    n_agents = len(instance.agents)
    n_categories = len(instance.categories)
    rho_max = Fraction(1, 2 * n_categories * n_agents)
    eps = rho_max / (n_agents + 1) ** (n_agents + 1)
    eps2 = eps / (n_agents + 1)

    rho: dict[tuple[str, str], Fraction] = {}
    last_rank: dict[str, int] = {c.name: 0 for c in instance.categories}
    for i, (cat_name, agent) in enumerate(stages, start=1):
        cat = instance.category(cat_name)
        r = instance._ranks[(cat_name, agent)]
        base = rho_max / Fraction(n_agents + 1) ** (i - 1)
        for j in range(last_rank[cat_name] + 1, r + 1):
            bonus = base + (r - j) * eps
            for member in cat.tiers[j - 1]:
                rho[(member, cat_name)] = bonus
        if r > last_rank[cat_name]:
            last_rank[cat_name] = r

    for cat in instance.categories:
        depth = len(cat.tiers)
        for j in range(last_rank[cat.name] + 1, depth + 1):
            bonus = (depth - j) * eps2
            for member in cat.tiers[j - 1]:
                rho[(member, cat.name)] = bonus

    shift = rho_max * rho_max
    k = rho_max + shift
    entries = {pair: (k - value) / (1 + k) for pair, value in rho.items()}
    perturbation = Perturbation(entries)
    result = is_valid_perturbation(instance, perturbation)
    if not result.ok:
        raise AssertionError(f"constructed perturbation violates {result.violated}")
    return perturbation


def _report_failure(report: ValidityReport) -> str:
    for name in ("qr", "er", "pr", "pe", "cs"):
        verdict = getattr(report, name)
        if verdict.status == "FAIL":
            return f"allocation fails {name.upper()} with witness {verdict.witness}"
    return "allocation fails validation"


# ---------------------------------------------------------------------------
# Decomposition of fractional valid allocations


def decompose(instance: Instance, allocation: FractionalAllocation, v_star: int) -> ConvexCombination:
    """Write a valid fractional allocation as an exact convex combination of
    valid integral allocations.

    Phase one repeatedly splits along alternating paths between two nodes of
    not-fully-allocated agents in the fractional-pair graph until every agent
    total is integral; phase two finishes each piece by cycle-canceling
    (Birkhoff-von Neumann) rotations.  Raises ``NotValidAllocation`` when the
    input does not pass validation.
    """
    report = validate(instance, allocation, v_star)
    if not report.is_valid:
        raise NotValidAllocation(_report_failure(report), report=report)
    leaves: dict[IntegralAllocation, Fraction] = {}

    def phase_one(current: FractionalAllocation, weight: Fraction) -> None:
        fractional_totals = [
            a for a in instance.agents if current.agent_total(a).denominator != 1
        ]
        if not fractional_totals:
            for w, piece in _birkhoff(instance, current, weight):
                leaves[piece] = leaves.get(piece, ZERO) + w
            return
        path = _red_path(instance, current)
        plus, minus = _split_bounds(current, path)
        forward = _adjust(current, path, plus, +1)
        backward = _adjust(current, path, minus, -1)
        total = plus + minus
        phase_one(forward, weight * minus / total)
        phase_one(backward, weight * plus / total)

    phase_one(allocation, Fraction(1))
    components = tuple(sorted(leaves.items(), key=lambda item: item[0].assignment))
    combination = ConvexCombination(
        components=tuple((w, alloc) for alloc, w in components)
    )
    assert sum(combination.weights, ZERO) == 1
    return combination


def _red_path(instance: Instance, allocation: FractionalAllocation) -> list[tuple[str, str]]:
    """Alternating path between two red nodes of the fractional-pair graph.

    Nodes are pairs with 0 < x < 1; a node is red when its agent is not fully
    allocated.  Nodes sharing a category are adjacent; white nodes sharing an
    agent are adjacent.  BFS starts from the lowest-indexed red node, and the
    found path is compressed so edge kinds alternate (category, agent,
    category, ...), which makes its length odd.
    """
    nodes = [(a, c) for a, c, v in allocation.entries if 0 < v < 1]
    reds = {
        (a, c) for a, c in nodes if allocation.agent_total(a) < 1
    }
    if not reds:
        raise AssertionError("phase one requires a red node")
    start = min(reds)
    pred: dict[tuple[str, str], Optional[tuple[str, str]]] = {start: None}
    frontier = [start]
    target = None
    while frontier and target is None:
        nxt_frontier = []
        for node in frontier:
            for other in nodes:
                if other in pred or other == node:
                    continue
                share_category = other[1] == node[1]
                share_agent = other[0] == node[0]
                white_pair = node not in reds and other not in reds
                if share_category or (share_agent and white_pair):
                    pred[other] = node
                    if other in reds:
                        target = other
                        break
                    nxt_frontier.append(other)
            if target is not None:
                break
        frontier = nxt_frontier
    if target is None:
        raise AssertionError("red node has no red partner in its component")
    path = [target]
    while pred[path[-1]] is not None:
        path.append(pred[path[-1]])
    path.reverse()
    return _alternate(path)


def _alternate(path: list[tuple[str, str]]) -> list[tuple[str, str]]:
    """Compress runs of same-kind edges so the path alternates between
    category-sharing and agent-sharing steps.

    A run of category edges stays within one category (and likewise for
    agents), so its endpoints are directly adjacent and the interior nodes
    can be dropped.
    """
    n = len(path)
    if n < 3:
        return path
    kinds = [
        "cat" if path[i][1] == path[i + 1][1] else "agent" for i in range(n - 1)
    ]
    out = [path[0]]
    i = 0
    while i < n - 1:
        j = i
        while j + 1 < n - 1 and kinds[j + 1] == kinds[i]:
            j += 1
        out.append(path[j + 1])
        i = j + 1
    return out


def _split_bounds(allocation: FractionalAllocation, path: list[tuple[str, str]]) -> tuple[Fraction, Fraction]:
    """Largest +eps / -eps adjustments along the path that keep every variable
    in [0, 1] and every agent total in [0, 1]."""
    signs = {}
    for i, node in enumerate(path):
        signs[node] = signs.get(node, 0) + (1 if i % 2 else -1)
    agent_net: dict[str, int] = {}
    for node, s in signs.items():
        agent_net[node[0]] = agent_net.get(node[0], 0) + s

    def direction_bound(direction: int) -> Fraction:
        bound = None
        for (a, c), s in signs.items():
            step = s * direction
            if step == 0:
                continue
            value = allocation.value(a, c)
            room = (1 - value) / step if step > 0 else value / (-step)
            bound = room if bound is None else min(bound, room)
        for a, net in agent_net.items():
            step = net * direction
            if step == 0:
                continue
            total = allocation.agent_total(a)
            room = (1 - total) / step if step > 0 else total / (-step)
            bound = room if bound is None else min(bound, room)
        assert bound is not None and bound > 0
        return bound

    return direction_bound(+1), direction_bound(-1)


def _adjust(allocation: FractionalAllocation, path: list[tuple[str, str]], eps: Fraction, direction: int) -> FractionalAllocation:
    values = {(a, c): v for a, c, v in allocation.entries}
    for i, node in enumerate(path):
        sign = (1 if i % 2 else -1) * direction
        values[node] = values.get(node, ZERO) + sign * eps
    return FractionalAllocation({k: v for k, v in values.items() if v != 0})


def _birkhoff(instance: Instance, allocation: FractionalAllocation, weight: Fraction) -> list[tuple[Fraction, IntegralAllocation]]:
    """Cycle-canceling decomposition once every agent total is integral.

    A dummy slack row absorbs each category's unused quota, making all row
    and column sums integral, so the fractional cells always contain a cycle;
    rotating the cycle both ways splits the allocation in two, preserving all
    row and column sums.
    """
    if allocation.is_integral:
        return [(weight, allocation.to_integral())]
    slack = "\x00slack"
    cells: dict[tuple[str, str], Fraction] = {
        (a, c): v for a, c, v in allocation.entries
    }
    for cat in instance.categories:
        leftover = cat.quota - allocation.category_total(cat.name)
        if leftover != 0:
            cells[(slack, cat.name)] = leftover

    cycle = _fractional_cycle(cells)
    # Direction +1 raises even-indexed cells and lowers odd-indexed ones, so
    # it is bounded by the smallest odd cell (and vice versa).
    bound_up = min(cells[cycle[i]] for i in range(1, len(cycle), 2))
    bound_down = min(cells[cycle[i]] for i in range(0, len(cycle), 2))

    def rotated(eps: Fraction, direction: int) -> FractionalAllocation:
        out = dict(cells)
        for i, cell in enumerate(cycle):
            sign = (1 if i % 2 == 0 else -1) * direction
            out[cell] = out[cell] + sign * eps
        return FractionalAllocation(
            {(a, c): v for (a, c), v in out.items() if a != slack and v != 0}
        )

    up_piece = rotated(bound_up, +1)
    down_piece = rotated(bound_down, -1)
    total = bound_up + bound_down
    return _birkhoff(instance, up_piece, weight * bound_down / total) + _birkhoff(
        instance, down_piece, weight * bound_up / total
    )


def _fractional_cycle(cells: Mapping[tuple[str, str], Fraction]) -> list[tuple[str, str]]:
    """A cycle through strictly fractional cells, alternating row/column moves.

    View fractional cells as edges of a bipartite graph over rows and
    columns.  Integral row and column sums force every touched vertex to have
    degree at least two, so walking to any neighbor other than the previous
    vertex must eventually revisit a vertex, closing a cycle; the cycle's
    edges are the wanted cells.
    """
    fractional = sorted(k for k, v in cells.items() if v.denominator != 1)
    assert fractional, "no fractional cells left"
    adjacency: dict[tuple[str, str], list[tuple[str, str]]] = {}
    for r, c in fractional:
        adjacency.setdefault(("row", r), []).append(("col", c))
        adjacency.setdefault(("col", c), []).append(("row", r))
    for neighbors in adjacency.values():
        neighbors.sort()
    walk = [("row", fractional[0][0])]
    position = {walk[0]: 0}
    while True:
        current = walk[-1]
        previous = walk[-2] if len(walk) >= 2 else None
        nxt = next(v for v in adjacency[current] if v != previous)
        if nxt in position:
            vertex_cycle = walk[position[nxt]:]
            break
        position[nxt] = len(walk)
        walk.append(nxt)
    cycle_cells = []
    k = len(vertex_cycle)
    for i in range(k):
        u = vertex_cycle[i]
        v = vertex_cycle[(i + 1) % k]
        row = u[1] if u[0] == "row" else v[1]
        col = u[1] if u[0] == "col" else v[1]
        cycle_cells.append((row, col))
    return cycle_cells
