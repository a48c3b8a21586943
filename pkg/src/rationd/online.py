"""Online arrival model, the interim-LP policy with restrictions, the
hard-priority baseline, and hindsight loss accounting.

Agents arrive one at a time over a fixed horizon; each has an observable type
drawn i.i.d. from known rational probabilities, and categories hold quotas
with priority tiers over the *types*.  The interim-LP policy solves, per
round, an exact transportation relaxation over the expected future arrivals
and follows its argmax, restricting eligibility after every rejection so the
remaining run can never be forced into a priority violation it has not
already conceded.

Decisions are exact: expected counts stay rationals, the transportation LP is
solved in scaled integers, and argmax comparisons never touch floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import allocate, matching
from .errors import (
    IneligibleAssignment,
    InvalidPerturbation,
    InvalidProbabilityVector,
    LengthMismatch,
    MalformedInstance,
    QuotaUnderflow,
)
from .model import Category, Instance, restrict

RESTRICTED_LP = "restricted-lp"
HARD_PRIORITY = "hard-priority"
POLICIES = (RESTRICTED_LP, HARD_PRIORITY)

ZERO = Fraction(0)


@dataclass(frozen=True)
class OnlineInstance:
    """Types with arrival probabilities, categories with type-level tiers,
    and a horizon of rounds."""

    types: tuple[str, ...]
    probabilities: tuple[Fraction, ...]
    categories: tuple[Category, ...]
    horizon: int

    def __init__(self, types, probabilities, categories, horizon):
        object.__setattr__(self, "types", tuple(types))
        object.__setattr__(self, "probabilities", tuple(Fraction(p) for p in probabilities))
        object.__setattr__(self, "categories", tuple(categories))
        object.__setattr__(self, "horizon", int(horizon))
        if len(self.probabilities) != len(self.types):
            raise InvalidProbabilityVector("one probability per type required")
        if any(p <= 0 for p in self.probabilities):
            raise InvalidProbabilityVector("arrival probabilities must be positive")
        if sum(self.probabilities, ZERO) != 1:
            raise InvalidProbabilityVector("arrival probabilities must sum to exactly 1")
        if self.horizon < 1:
            raise MalformedInstance("horizon must be at least 1")
        # Validates tier structure and type membership.
        object.__setattr__(self, "_types_instance", Instance(self.types, self.categories))

    @property
    def type_instance(self) -> Instance:
        """The type-level instance (types standing in for agents)."""
        return self._types_instance

    @property
    def p_min(self) -> Fraction:
        return min(self.probabilities)


@dataclass(frozen=True)
class SimulationState:
    """Everything the policy may look at in round t: remaining quotas, the
    restricted type-level eligibility, past decisions, and arrivals up to and
    including the current one."""

    instance: OnlineInstance
    round: int
    remaining_quotas: tuple[int, ...]
    eligibility: Instance
    arrivals: tuple[str, ...]
    decisions: tuple[Optional[str], ...]


@dataclass(frozen=True)
class RoundDiagnostics:
    lp_value: Optional[Fraction]
    argmax: Optional[str]


@dataclass(frozen=True)
class SimulationTrace:
    arrivals: tuple[str, ...]
    decisions: tuple[Optional[str], ...]
    efficiency_loss: int
    priority_loss: int
    diagnostics: tuple[RoundDiagnostics, ...]


@dataclass(frozen=True)
class MetricSummary:
    mean: Fraction
    maximum: int
    stderr: float


@dataclass(frozen=True)
class SimulationSummary:
    trials: int
    efficiency: MetricSummary
    priority: MetricSummary
    combined: MetricSummary


def initial_state(instance: OnlineInstance) -> SimulationState:
    return SimulationState(
        instance=instance,
        round=1,
        remaining_quotas=tuple(c.quota for c in instance.categories),
        eligibility=instance.type_instance,
        arrivals=(),
        decisions=(),
    )


def observe(state: SimulationState, arrival: str) -> SimulationState:
    if arrival not in state.instance.types:
        raise MalformedInstance(f"unknown type {arrival!r}")
    if len(state.arrivals) != state.round - 1:
        raise MalformedInstance("this round's arrival was already observed")
    return SimulationState(
        instance=state.instance,
        round=state.round,
        remaining_quotas=state.remaining_quotas,
        eligibility=state.eligibility,
        arrivals=state.arrivals + (arrival,),
        decisions=state.decisions,
    )


class _LpPolicy:
    """Scaled-integer machinery shared by ``interim_lp``/``policy_step`` and
    the fast simulation loop."""

    def __init__(self, instance: OnlineInstance, perturbation: allocate.Perturbation):
        self.instance = instance
        check = allocate.is_valid_perturbation(instance.type_instance, perturbation)
        if not check.ok:
            raise InvalidPerturbation(f"perturbation violates {check.violated}")
        self.type_index = {t: i for i, t in enumerate(instance.types)}
        self.p_denom = 1
        for p in instance.probabilities:
            self.p_denom = self.p_denom * p.denominator // math.gcd(self.p_denom, p.denominator)
        self.p_scaled = [int(p * self.p_denom) for p in instance.probabilities]
        delta = perturbation.as_dict()
        self.w_denom = 1
        for value in delta.values():
            d = (1 - value).denominator
            self.w_denom = self.w_denom * d // math.gcd(self.w_denom, d)
        self.weights = {
            (self.type_index[th], ci): int((1 - delta[(th, cat.name)]) * self.w_denom)
            for ci, cat in enumerate(instance.categories)
            for th in cat.eligible
        }

    def solve(
        self,
        t: int,
        theta_idx: int,
        quotas: Sequence[int],
        eligible: Sequence[frozenset[int]],
    ) -> tuple[list[list[int]], list[int], int]:
        """Solve the round-t interim LP; returns (per-type-per-category scaled
        flows, scaled type supplies, scaled objective numerator)."""
        T = self.instance.horizon
        n_types = len(self.instance.types)
        supplies = [
            (self.p_denom if k == theta_idx else 0) + (T - t) * self.p_scaled[k]
            for k in range(n_types)
        ]
        capacities = [q * self.p_denom for q in quotas]
        edges = []
        for ci, members in enumerate(eligible):
            for k in members:
                edges.append((k, ci, self.weights[(k, ci)]))
        flows, _ = matching._solve_scaled(supplies, capacities, edges)
        table = [[0] * len(quotas) for _ in range(n_types)]
        objective = 0
        for (k, ci, w), f in zip(edges, flows):
            table[k][ci] = f
            objective += w * f
        return table, supplies, objective

    def decide(
        self,
        t: int,
        theta_idx: int,
        quotas: Sequence[int],
        eligible: Sequence[frozenset[int]],
    ) -> tuple[Optional[int], Fraction]:
        """Argmax decision for the current arrival plus the exact LP value.

        Tie-break: a real category beats the outside option, then larger
        remaining quota, then category input order.
        """
        table, supplies, objective = self.solve(t, theta_idx, quotas, eligible)
        row = table[theta_idx]
        bottom = supplies[theta_idx] - sum(row)
        best_ci: Optional[int] = None
        best_val = bottom
        for ci in range(len(quotas)):
            if theta_idx not in eligible[ci]:
                continue
            value = row[ci]
            if value > best_val or (
                value == best_val
                and (
                    best_ci is None
                    or quotas[ci] > quotas[best_ci]
                )
            ):
                best_ci = ci
                best_val = value
        lp_value = Fraction(objective, self.w_denom * self.p_denom)
        if best_ci is not None and quotas[best_ci] <= 0:
            raise QuotaUnderflow("argmax selected a category with no remaining quota")
        return best_ci, lp_value


def _eligible_sets(instance: OnlineInstance, eligibility: Instance) -> list[frozenset[int]]:
    index = {t: i for i, t in enumerate(instance.types)}
    return [
        frozenset(index[t] for t in cat.eligible) for cat in eligibility.categories
    ]


def interim_lp(
    state: SimulationState, perturbation: allocate.Perturbation
) -> dict[tuple[str, Optional[str]], Fraction]:
    """Exact solution of the round's interim transportation relaxation.

    Keys are (type, category) pairs plus (type, None) for the unallocated
    column; values are exact rationals.  The supply of each type is
    1(type == current arrival) + (rounds left) * p(type).
    """
    if len(state.arrivals) != state.round:
        raise MalformedInstance("observe the current arrival before solving")
    policy = _LpPolicy(state.instance, perturbation)
    theta_idx = policy.type_index[state.arrivals[-1]]
    eligible = _eligible_sets(state.instance, state.eligibility)
    table, supplies, _ = policy.solve(
        state.round, theta_idx, state.remaining_quotas, eligible
    )
    out: dict[tuple[str, Optional[str]], Fraction] = {}
    for k, typ in enumerate(state.instance.types):
        row_total = 0
        for ci, cat in enumerate(state.instance.categories):
            out[(typ, cat.name)] = Fraction(table[k][ci], policy.p_denom)
            row_total += table[k][ci]
        out[(typ, None)] = Fraction(supplies[k] - row_total, policy.p_denom)
    return out


def policy_step(
    state: SimulationState, perturbation: allocate.Perturbation
) -> tuple[Optional[str], SimulationState, RoundDiagnostics]:
    """One round of the restricted-LP policy: solve, follow the argmax,
    decrement quota on allocation, restrict eligibility on rejection."""
    if len(state.arrivals) != state.round:
        raise MalformedInstance("observe the current arrival before stepping")
    policy = _LpPolicy(state.instance, perturbation)
    arrival = state.arrivals[-1]
    theta_idx = policy.type_index[arrival]
    eligible = _eligible_sets(state.instance, state.eligibility)
    best_ci, lp_value = policy.decide(
        state.round, theta_idx, state.remaining_quotas, eligible
    )
    if best_ci is None:
        decision = None
        quotas = state.remaining_quotas
        if any(arrival in cat.eligible for cat in state.eligibility.categories):
            eligibility = restrict(state.eligibility, [arrival])
        else:
            eligibility = state.eligibility
    else:
        decision = state.instance.categories[best_ci].name
        quotas = tuple(
            q - 1 if i == best_ci else q for i, q in enumerate(state.remaining_quotas)
        )
        eligibility = state.eligibility
    next_state = SimulationState(
        instance=state.instance,
        round=state.round + 1,
        remaining_quotas=quotas,
        eligibility=eligibility,
        arrivals=state.arrivals,
        decisions=state.decisions + (decision,),
    )
    return decision, next_state, RoundDiagnostics(lp_value=lp_value, argmax=decision)


def _run_restricted_lp(
    instance: OnlineInstance, arrivals: Sequence[str], policy: _LpPolicy
) -> tuple[list[Optional[str]], list[RoundDiagnostics]]:
    type_index = policy.type_index
    ranks = [
        [instance.type_instance._ranks.get((cat.name, t)) for t in instance.types]
        for cat in instance.categories
    ]
    eligible = [
        frozenset(type_index[t] for t in cat.eligible) for cat in instance.categories
    ]
    quotas = [c.quota for c in instance.categories]
    decisions: list[Optional[str]] = []
    diagnostics: list[RoundDiagnostics] = []
    for t, arrival in enumerate(arrivals, start=1):
        theta_idx = type_index[arrival]
        best_ci, lp_value = policy.decide(t, theta_idx, quotas, eligible)
        if best_ci is None:
            decisions.append(None)
            # Drop the arrival's type and everything strictly below it.
            new_eligible = []
            for ci in range(len(quotas)):
                r = ranks[ci][theta_idx]
                if r is None or theta_idx not in eligible[ci]:
                    new_eligible.append(eligible[ci])
                else:
                    new_eligible.append(
                        frozenset(
                            k
                            for k in eligible[ci]
                            if k != theta_idx and ranks[ci][k] <= r
                        )
                    )
            eligible = new_eligible
            diagnostics.append(RoundDiagnostics(lp_value=lp_value, argmax=None))
        else:
            quotas[best_ci] -= 1
            name = instance.categories[best_ci].name
            decisions.append(name)
            diagnostics.append(RoundDiagnostics(lp_value=lp_value, argmax=name))
    return decisions, diagnostics


def _run_hard_priority(
    instance: OnlineInstance, arrivals: Sequence[str]
) -> tuple[list[Optional[str]], list[RoundDiagnostics]]:
    """Baseline that never allows a priority violation.

    An arrival may be allocated through a category only if no strictly
    higher-priority arrival was left unallocated there, and only if, after
    the allocation, every type it would leave "protected" (some category has
    then allocated below it) retains enough total quota to absorb every
    remaining arrival.  On the single-category three-tier family this is
    exactly the stopping-time rule: accept the top type while quota remains,
    accept lower types only once remaining quota covers all remaining
    arrivals, and never accept a type below a previously rejected one.
    """
    T = instance.horizon
    n_cats = len(instance.categories)
    type_index = {t: i for i, t in enumerate(instance.types)}
    ranks = [
        [instance.type_instance._ranks.get((cat.name, t)) for t in instance.types]
        for cat in instance.categories
    ]
    quotas = [c.quota for c in instance.categories]
    max_alloc_rank = [0] * n_cats
    min_rejected_rank = [math.inf] * n_cats
    decisions: list[Optional[str]] = []

    def safe_after(ci: int, new_rank: int) -> bool:
        remaining = T - len(decisions) - 1
        mal = list(max_alloc_rank)
        mal[ci] = max(mal[ci], new_rank)
        qs = list(quotas)
        qs[ci] -= 1
        for k in range(len(instance.types)):
            protected = any(
                ranks[cj][k] is not None and ranks[cj][k] < mal[cj]
                for cj in range(n_cats)
            )
            if not protected:
                continue
            capacity = sum(
                qs[cj] for cj in range(n_cats) if ranks[cj][k] is not None
            )
            if capacity < remaining:
                return False
        return True

    for arrival in arrivals:
        k = type_index[arrival]
        candidates = []
        for ci in range(n_cats):
            r = ranks[ci][k]
            if r is None or quotas[ci] == 0:
                continue
            if r > min_rejected_rank[ci]:
                continue
            if not safe_after(ci, r):
                continue
            candidates.append((r, -quotas[ci], ci))
        if candidates:
            candidates.sort()
            ci = candidates[0][2]
            quotas[ci] -= 1
            max_alloc_rank[ci] = max(max_alloc_rank[ci], ranks[ci][k])
            decisions.append(instance.categories[ci].name)
        else:
            for ci in range(n_cats):
                r = ranks[ci][k]
                if r is not None and r < min_rejected_rank[ci]:
                    min_rejected_rank[ci] = r
            decisions.append(None)
    diagnostics = [RoundDiagnostics(lp_value=None, argmax=d) for d in decisions]
    return decisions, diagnostics


def hindsight_losses(
    instance: OnlineInstance,
    arrivals: Sequence[str],
    decisions: Sequence[Optional[str]],
) -> tuple[int, int]:
    """Efficiency loss (offline maximum cardinality minus allocations made)
    and priority loss (arrived agents left unallocated while eligible in a
    category that allocated any slot to a strictly lower-priority type)."""
    T = instance.horizon
    if len(arrivals) != T or len(decisions) != T:
        raise LengthMismatch(f"arrivals and decisions must have length {T}")
    ranks = instance.type_instance._ranks
    counts = {t: 0 for t in instance.types}
    for arrival in arrivals:
        if arrival not in counts:
            raise MalformedInstance(f"unknown type {arrival!r}")
        counts[arrival] += 1
    used = {c.name: 0 for c in instance.categories}
    max_alloc_rank = {c.name: 0 for c in instance.categories}
    for arrival, decision in zip(arrivals, decisions):
        if decision is None:
            continue
        if decision not in used:
            raise IneligibleAssignment(f"decision names unknown category {decision!r}")
        r = ranks.get((decision, arrival))
        if r is None:
            raise IneligibleAssignment(
                f"type {arrival!r} was allocated through {decision!r} but is ineligible there"
            )
        used[decision] += 1
        if used[decision] > instance.type_instance.category(decision).quota:
            raise QuotaUnderflow(f"category {decision!r} exceeded its quota")
        max_alloc_rank[decision] = max(max_alloc_rank[decision], r)

    type_index = {t: i for i, t in enumerate(instance.types)}
    edges = [
        (type_index[t], ci, 1)
        for ci, cat in enumerate(instance.categories)
        for t in cat.eligible
    ]
    if edges:
        problem = matching.MatchingProblem(
            left=instance.types,
            right=tuple(c.name for c in instance.categories),
            supply=[counts[t] for t in instance.types],
            capacity=[c.quota for c in instance.categories],
            edges=edges,
        )
        offline_best = matching.max_size(problem)
    else:
        offline_best = 0
    allocated = sum(1 for d in decisions if d is not None)
    efficiency_loss = offline_best - allocated

    priority_loss = 0
    for arrival, decision in zip(arrivals, decisions):
        if decision is not None:
            continue
        envious = any(
            ranks.get((cat.name, arrival)) is not None
            and ranks[(cat.name, arrival)] < max_alloc_rank[cat.name]
            for cat in instance.categories
        )
        if envious:
            priority_loss += 1
    return efficiency_loss, priority_loss


def draw_arrivals(instance: OnlineInstance, rng: np.random.Generator) -> list[str]:
    """Sample a horizon's worth of i.i.d. arrivals with exact probabilities
    (integer thresholds under the common denominator)."""
    denom = 1
    for p in instance.probabilities:
        denom = denom * p.denominator // math.gcd(denom, p.denominator)
    cumulative = []
    acc = 0
    for p in instance.probabilities:
        acc += int(p * denom)
        cumulative.append(acc)
    draws = rng.integers(0, denom, size=instance.horizon)
    arrivals = []
    for raw in draws:
        for k, bound in enumerate(cumulative):
            if raw < bound:
                arrivals.append(instance.types[k])
                break
    return arrivals


def run_simulation(
    instance: OnlineInstance,
    policy: str,
    trials: int,
    master_seed: int,
) -> tuple[list[SimulationTrace], SimulationSummary]:
    """Run independent trials of a policy and account losses in hindsight.

    Trial ``i`` draws its arrivals from a dedicated substream seeded by
    (master_seed, i), so identical inputs reproduce identical traces.
    """
    if policy not in POLICIES:
        raise MalformedInstance(f"unknown policy {policy!r}")
    if trials < 1:
        raise MalformedInstance("at least one trial required")
    lp_policy = None
    if policy == RESTRICTED_LP:
        perturbation = allocate.make_perturbation(instance.type_instance)
        lp_policy = _LpPolicy(instance, perturbation)
    traces = []
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([master_seed, trial]))
        arrivals = draw_arrivals(instance, rng)
        if policy == RESTRICTED_LP:
            decisions, diagnostics = _run_restricted_lp(instance, arrivals, lp_policy)
        else:
            decisions, diagnostics = _run_hard_priority(instance, arrivals)
        efficiency, priority = hindsight_losses(instance, arrivals, decisions)
        traces.append(
            SimulationTrace(
                arrivals=tuple(arrivals),
                decisions=tuple(decisions),
                efficiency_loss=efficiency,
                priority_loss=priority,
                diagnostics=tuple(diagnostics),
            )
        )
    summary = summarize(traces)
    return traces, summary


def summarize(traces: Sequence[SimulationTrace]) -> SimulationSummary:
    def metric(values: list[int]) -> MetricSummary:
        n = len(values)
        mean = Fraction(sum(values), n)
        if n > 1:
            variance = sum((Fraction(v) - mean) ** 2 for v in values) / (n - 1)
            stderr = math.sqrt(float(variance) / n)
        else:
            stderr = 0.0
        return MetricSummary(mean=mean, maximum=max(values), stderr=stderr)

    return SimulationSummary(
        trials=len(traces),
        efficiency=metric([t.efficiency_loss for t in traces]),
        priority=metric([t.priority_loss for t in traces]),
        combined=metric([t.efficiency_loss + t.priority_loss for t in traces]),
    )
