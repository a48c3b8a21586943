"""rationd: exact-arithmetic priority-respecting resource rationing.

Validates, selects, audits, and decomposes quota/priority allocations via
perturbed weighted b-matching, and simulates online allocation policies with
hindsight loss accounting.  All domain arithmetic is exact (integers and
`fractions.Fraction`).
"""

from .allocate import (
    ConvexCombination,
    Perturbation,
    PerturbationCheck,
    RANK_MINMAX,
    RANK_SUM,
    UNIFORM_TIERED,
    check,
    decompose,
    is_valid_perturbation,
    make_perturbation,
    max_size,
    realize_as_choice_order,
    realize_perturbation,
    serial_dictatorship,
    solve_valid,
    tie_break_for,
)
from .errors import (
    BudgetExceeded,
    DomainError,
    MalformedDocument,
    MalformedInstance,
    RationdError,
)
from .matching import MatchingProblem, MatchingSolution, max_weight_b_matching, solve_transportation
from .model import (
    Category,
    FractionalAllocation,
    Instance,
    IntegralAllocation,
    Thresholds,
    ValidityReport,
    rank,
    restrict,
    thresholds,
    validate,
)
from .online import (
    HARD_PRIORITY,
    OnlineInstance,
    RESTRICTED_LP,
    SimulationState,
    SimulationTrace,
    hindsight_losses,
    initial_state,
    interim_lp,
    observe,
    policy_step,
    run_simulation,
)
from .oracle import (
    EnumerationResult,
    StableMatchingInstance,
    check_local_perturbation,
    deferred_acceptance,
    enumerate_all,
    serial_dictatorship_outcomes,
    unstable_fixtures,
)
from .selection import (
    AgentQueryResult,
    SearchBudget,
    UtilityProfile,
    allocate_with_preferences,
    brute_force_welfare,
    is_serviceable,
    is_unanimous,
    optimize_inner,
    optimize_outer,
)

__version__ = "0.1.0"
