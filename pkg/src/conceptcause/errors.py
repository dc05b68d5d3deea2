"""Exception types shared across the package."""


class ConceptCauseError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(ConceptCauseError, ValueError):
    """A model, map, classifier or spec file is malformed."""


class QueryError(ConceptCauseError, ValueError):
    """A query cannot be answered for the given model and arguments."""


class ImpossibleEvidenceError(QueryError):
    """The conditioning evidence has probability zero under the model."""


class InfeasibleError(QueryError):
    """A function family cannot reproduce the observed conditionals."""


class UnderdeterminedError(QueryError):
    """A credal set holds more than one distribution where one was required."""


class CapacityError(QueryError):
    """An enumeration would exceed its configured size cap."""
