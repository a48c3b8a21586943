"""Exception hierarchy shared across the package.

Three top-level branches map onto the CLI exit codes: malformed input (1),
domain errors (2), and exhausted search budgets (3).
"""


class RationdError(Exception):
    """Base class for every library error."""


class MalformedDocument(RationdError):
    """An input document or value failed to parse or validate."""


class MalformedInstance(MalformedDocument):
    """An instance violates a structural invariant (duplicate names, bad tiers, ...)."""


class DomainError(RationdError):
    """Inputs are well-formed but violate an operation's contract."""


class UnknownAgent(DomainError):
    pass


class UnknownCategory(DomainError):
    pass


class AgentNotEligible(DomainError):
    pass


class DimensionMismatch(DomainError):
    pass


class IneligibleAssignment(DomainError):
    pass


class EntryOnIneligiblePair(DomainError):
    """A perturbation or utility table does not match the instance's eligible pairs."""


class EmptyInstance(DomainError):
    """The instance has no eligible (agent, category) pair."""


class InvalidPerturbation(DomainError):
    pass


class MalformedChoiceOrder(DomainError):
    pass


class NotValidOrNotCS(DomainError):
    """The allocation is not valid, or fails category stability."""


class NotValidAllocation(DomainError):
    """The allocation fails validation; carries the offending report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MissingUtility(DomainError):
    pass


class InvalidProbabilityVector(DomainError):
    pass


class LengthMismatch(DomainError):
    pass


class QuotaUnderflow(DomainError):
    """Internal consistency failure: a quota went negative."""


class WrongDimension(DomainError):
    pass


class BudgetExceeded(RationdError):
    """An exhaustive search would exceed its configured budget."""
