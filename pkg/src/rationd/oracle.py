"""Independent brute-force ground truth, plus the stable-matching machinery.

``enumerate_all`` exhaustively lists integral allocations of small instances
and classifies them, serving as the oracle that every clever algorithm in
this package is tested against.  The stable-matching half implements
man-proposing deferred acceptance and the brute-force check that no local
perturbation function can make maximum-weight matchings stable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from .errors import BudgetExceeded, MalformedInstance, WrongDimension
from .model import Instance, IntegralAllocation, find_trade_cycle

ZERO = Fraction(0)


@dataclass(frozen=True)
class OracleBudget:
    max_agents: int = 8
    max_categories: int = 4
    max_total_quota: int = 8

    def admit(self, instance: Instance) -> None:
        if len(instance.agents) > self.max_agents:
            raise BudgetExceeded(
                f"{len(instance.agents)} agents exceed the enumeration budget of {self.max_agents}"
            )
        if len(instance.categories) > self.max_categories:
            raise BudgetExceeded(
                f"{len(instance.categories)} categories exceed the budget of {self.max_categories}"
            )
        if instance.total_quota > self.max_total_quota:
            raise BudgetExceeded(
                f"total quota {instance.total_quota} exceeds the budget of {self.max_total_quota}"
            )


DEFAULT_ORACLE_BUDGET = OracleBudget()


@dataclass(frozen=True)
class EnumerationResult:
    """All QR/ER/PR allocations of an instance, the valid subset (maximum
    size), the valid and category-stable subset, and V*."""

    qr_er_pr: tuple[IntegralAllocation, ...]
    valid: tuple[IntegralAllocation, ...]
    valid_cs: tuple[IntegralAllocation, ...]
    v_star: int


def _passes_pr(instance: Instance, assignment: dict[str, str]) -> bool:
    """An allocated pair (a, c) requires every strictly higher-priority agent
    in c to be allocated (somewhere); ties within a tier are fine."""
    allocated = set(assignment)
    for cat in instance.categories:
        seen_unallocated = False
        for tier in cat.tiers:
            if seen_unallocated and any(assignment.get(a) == cat.name for a in tier):
                return False
            if any(a not in allocated for a in tier):
                seen_unallocated = True
    return True


def enumerate_all(instance: Instance, budget: Optional[OracleBudget] = None) -> EnumerationResult:
    """Exhaustively classify every integral allocation of a small instance.

    Enumerates assignment maps respecting ER and QR (agents in input order,
    categories in input order, unassigned last), then classifies PR by direct
    check, PE by size against the enumerated maximum, and CS via the trade
    cycle finder.
    """
    budget = budget or DEFAULT_ORACLE_BUDGET
    budget.admit(instance)

    options: list[list[Optional[str]]] = []
    for agent in instance.agents:
        eligible = [c.name for c in instance.categories if agent in c.eligible]
        options.append(eligible + [None])

    quotas = {c.name: c.quota for c in instance.categories}
    all_assignments: list[dict[str, str]] = []
    sizes: list[int] = []
    counts = {name: 0 for name in quotas}
    current: dict[str, str] = {}

    def walk(i: int) -> None:
        if i == len(instance.agents):
            all_assignments.append(dict(current))
            sizes.append(len(current))
            return
        agent = instance.agents[i]
        for choice in options[i]:
            if choice is None:
                walk(i + 1)
            elif counts[choice] < quotas[choice]:
                counts[choice] += 1
                current[agent] = choice
                walk(i + 1)
                del current[agent]
                counts[choice] -= 1

    walk(0)
    v_star = max(sizes) if sizes else 0

    qr_er_pr = []
    valid = []
    valid_cs = []
    for assignment, size in zip(all_assignments, sizes):
        if not _passes_pr(instance, assignment):
            continue
        allocation = IntegralAllocation(assignment)
        qr_er_pr.append(allocation)
        if size == v_star:
            valid.append(allocation)
            if find_trade_cycle(instance, allocation) is None:
                valid_cs.append(allocation)
    return EnumerationResult(
        qr_er_pr=tuple(qr_er_pr),
        valid=tuple(valid),
        valid_cs=tuple(valid_cs),
        v_star=v_star,
    )


def serial_dictatorship_outcomes(
    instance: Instance, budget: Optional[OracleBudget] = None, max_states: int = 500_000
) -> frozenset[IntegralAllocation]:
    """Every allocation reachable by serial dictatorship, over all choice
    orders and all within-tier tie-breaks.

    A run is any maximal sequence of greedy moves (some category with quota
    left allocates an agent from its top unallocated tier); orders whose
    copies come up with no candidates contribute nothing new.
    """
    budget = budget or DEFAULT_ORACLE_BUDGET
    budget.admit(instance)
    outcomes: set[IntegralAllocation] = set()
    visited: set[frozenset] = set()

    def dfs(assignment: dict[str, str], quota_left: tuple[int, ...]) -> None:
        key = frozenset(assignment.items())
        if key in visited:
            return
        visited.add(key)
        if len(visited) > max_states:
            raise BudgetExceeded(f"outcome enumeration exceeded {max_states} states")
        allocated = set(assignment)
        moved = False
        for ci, cat in enumerate(instance.categories):
            if quota_left[ci] == 0:
                continue
            for tier in cat.tiers:
                members = sorted(a for a in tier if a not in allocated)
                if members:
                    moved = True
                    for agent in members:
                        assignment[agent] = cat.name
                        quota = tuple(
                            q - 1 if i == ci else q for i, q in enumerate(quota_left)
                        )
                        dfs(assignment, quota)
                        del assignment[agent]
                    break
        if not moved:
            outcomes.add(IntegralAllocation(dict(assignment)))

    dfs({}, tuple(c.quota for c in instance.categories))
    return frozenset(outcomes)


# ---------------------------------------------------------------------------
# Stable matching


@dataclass(frozen=True)
class StableMatchingInstance:
    """Complete strict preference lists for n men and n women."""

    men: tuple[str, ...]
    women: tuple[str, ...]
    men_prefs: tuple[tuple[str, ...], ...]
    women_prefs: tuple[tuple[str, ...], ...]

    def __init__(self, men, women, men_prefs, women_prefs):
        object.__setattr__(self, "men", tuple(men))
        object.__setattr__(self, "women", tuple(women))
        object.__setattr__(self, "men_prefs", tuple(tuple(p) for p in men_prefs))
        object.__setattr__(self, "women_prefs", tuple(tuple(p) for p in women_prefs))
        n = len(self.men)
        if len(self.women) != n:
            raise MalformedInstance("need equally many men and women")
        for prefs, pool in ((self.men_prefs, self.women), (self.women_prefs, self.men)):
            if len(prefs) != n:
                raise MalformedInstance("one preference list per person required")
            for lst in prefs:
                if sorted(lst) != sorted(pool):
                    raise MalformedInstance(f"list {lst} is not a permutation of {pool}")

    def man_rank(self, man: str, woman: str) -> int:
        """Rank of ``woman`` in ``man``'s list (1-based)."""
        return self.men_prefs[self.men.index(man)].index(woman) + 1

    def woman_rank(self, woman: str, man: str) -> int:
        """Rank of ``man`` in ``woman``'s list (1-based)."""
        return self.women_prefs[self.women.index(woman)].index(man) + 1


def deferred_acceptance(sm: StableMatchingInstance) -> tuple[tuple[str, str], ...]:
    """Man-proposing deferred acceptance; returns (man, woman) pairs in man
    order.  The output matching has no blocking pair."""
    n = len(sm.men)
    next_proposal = [0] * n
    engaged_to: dict[str, int] = {}  # woman -> man index
    free = list(range(n - 1, -1, -1))
    while free:
        m = free.pop()
        woman = sm.men_prefs[m][next_proposal[m]]
        next_proposal[m] += 1
        holder = engaged_to.get(woman)
        if holder is None:
            engaged_to[woman] = m
        elif sm.woman_rank(woman, sm.men[m]) < sm.woman_rank(woman, sm.men[holder]):
            engaged_to[woman] = m
            free.append(holder)
        else:
            free.append(m)
    pairs = {sm.men[m]: w for w, m in engaged_to.items()}
    return tuple((man, pairs[man]) for man in sm.men)


def blocking_pairs(sm: StableMatchingInstance, matching: Iterable[tuple[str, str]]) -> list[tuple[str, str]]:
    match_of_man = dict(matching)
    match_of_woman = {w: m for m, w in match_of_man.items()}
    blocks = []
    for man in sm.men:
        for woman in sm.women:
            if match_of_man[man] == woman:
                continue
            prefers_m = sm.man_rank(man, woman) < sm.man_rank(man, match_of_man[man])
            prefers_w = sm.woman_rank(woman, man) < sm.woman_rank(woman, match_of_woman[woman])
            if prefers_m and prefers_w:
                blocks.append((man, woman))
    return blocks


WOMEN = ("a", "b", "c", "d", "e", "f")
MEN = ("alpha", "beta", "gamma", "delta", "epsilon", "zeta")

# Partial preference tables; '*' positions are completed canonically by
# appending the remaining partners in lexicographic order.
_INSTANCE_1_WOMEN = {
    "a": ["alpha"],
    "b": ["beta"],
    "c": ["gamma"],
    "d": ["alpha", "delta", "zeta"],
    "e": ["alpha", "beta", "epsilon", "delta"],
    "f": ["alpha", "epsilon", "beta", "zeta"],
}
_INSTANCE_1_MEN = {
    "alpha": ["a"],
    "beta": ["b"],
    "gamma": ["c"],
    "delta": ["a", "e", "b", "c", "d"],
    "epsilon": ["a", "b", "e", "f"],
    "zeta": ["a", "f", "d"],
}
_INSTANCE_2_WOMEN = _INSTANCE_1_WOMEN
_INSTANCE_2_MEN = {
    "alpha": ["a"],
    "beta": ["b"],
    "gamma": ["c"],
    "delta": ["a", "e", "b", "d"],
    "epsilon": ["a", "b", "e", "c", "f"],
    "zeta": ["a", "f", "d"],
}

#: The unique stable matching of both fixture instances.
FIXTURE_MATCHING = tuple(zip(MEN, WOMEN))


def _complete(prefix: Sequence[str], pool: Sequence[str]) -> tuple[str, ...]:
    rest = sorted(set(pool) - set(prefix))
    return tuple(prefix) + tuple(rest)


def _build_fixture(women_table, men_table) -> StableMatchingInstance:
    return StableMatchingInstance(
        men=MEN,
        women=WOMEN,
        men_prefs=[_complete(men_table[m], WOMEN) for m in MEN],
        women_prefs=[_complete(women_table[w], MEN) for w in WOMEN],
    )


def _all_perfect_matchings(sm: StableMatchingInstance) -> list[tuple[tuple[str, str], ...]]:
    return [
        tuple(zip(sm.men, perm)) for perm in itertools.permutations(sm.women)
    ]


_fixture_cache: Optional[tuple[StableMatchingInstance, StableMatchingInstance]] = None


def unstable_fixtures() -> tuple[StableMatchingInstance, StableMatchingInstance]:
    """The two 6x6 instances under the canonical completion.

    Verified on first use: deferred acceptance returns the fixture matching
    and brute force confirms it is the unique stable matching of each
    instance; constructing them fails loudly otherwise.
    """
    global _fixture_cache
    if _fixture_cache is None:
        one = _build_fixture(_INSTANCE_1_WOMEN, _INSTANCE_1_MEN)
        two = _build_fixture(_INSTANCE_2_WOMEN, _INSTANCE_2_MEN)
        for inst in (one, two):
            stable = [
                m for m in _all_perfect_matchings(inst) if not blocking_pairs(inst, m)
            ]
            if stable != [FIXTURE_MATCHING]:
                raise AssertionError(
                    "canonical completion does not yield a unique stable matching"
                )
            if deferred_acceptance(inst) != FIXTURE_MATCHING:
                raise AssertionError("deferred acceptance disagrees with the fixture")
        _fixture_cache = (one, two)
    return _fixture_cache


@dataclass(frozen=True)
class InstanceScanReport:
    best_value: Fraction
    maximizers: tuple[tuple[tuple[str, str], ...], ...]
    unstable_maximizers: tuple[tuple[tuple[str, str], ...], ...]
    all_maximizers_stable: bool
    requirement: str
    requirement_holds: bool


@dataclass(frozen=True)
class LocalPerturbationReport:
    """Brute-force verdict on whether a 6x6 local weight table makes every
    maximum-weight matching stable, for both fixture instances."""

    f25_minus_f24_sign: int
    instances: tuple[InstanceScanReport, InstanceScanReport]
    requirements_mutually_exclusive: bool

    @property
    def some_instance_has_unstable_maximizer(self) -> bool:
        return any(not rep.all_maximizers_stable for rep in self.instances)


def check_local_perturbation(f_table: Sequence[Sequence[Union[int, Fraction]]]) -> LocalPerturbationReport:
    """Scan both fixture instances for V_F-maximizing matchings and report
    whether every maximizer is stable.

    ``f_table[i][j]`` is the weight F(i+1, j+1) applied to a pair where the
    man has rank i+1 on the woman's list and the woman rank j+1 on the
    man's.  Also reports the sign of F(2,5) - F(2,4) and each instance's
    requirement from the impossibility argument (instance one needs
    "F(2,5) < F(2,4)", instance two the reverse; they cannot both hold).
    """
    table = [[Fraction(v) for v in row] for row in f_table]
    if len(table) != 6 or any(len(row) != 6 for row in table):
        raise WrongDimension("the weight table must be 6x6")

    def value(sm: StableMatchingInstance, matching) -> Fraction:
        total = ZERO
        for man, woman in matching:
            total += table[sm.woman_rank(woman, man) - 1][sm.man_rank(man, woman) - 1]
        return total

    reports = []
    requirements = (
        ("F(2,5) < F(2,4)", table[1][4] < table[1][3]),
        ("F(2,4) < F(2,5)", table[1][3] < table[1][4]),
    )
    for sm, (requirement, holds) in zip(unstable_fixtures(), requirements):
        best = None
        maximizers = []
        for matching in _all_perfect_matchings(sm):
            v = value(sm, matching)
            if best is None or v > best:
                best = v
                maximizers = [matching]
            elif v == best:
                maximizers.append(matching)
        unstable = tuple(m for m in maximizers if blocking_pairs(sm, m))
        reports.append(
            InstanceScanReport(
                best_value=best,
                maximizers=tuple(maximizers),
                unstable_maximizers=unstable,
                all_maximizers_stable=not unstable,
                requirement=requirement,
                requirement_holds=holds,
            )
        )
    diff = table[1][4] - table[1][3]
    sign = 0 if diff == 0 else (1 if diff > 0 else -1)
    return LocalPerturbationReport(
        f25_minus_f24_sign=sign,
        instances=(reports[0], reports[1]),
        requirements_mutually_exclusive=not (
            requirements[0][1] and requirements[1][1]
        ),
    )
