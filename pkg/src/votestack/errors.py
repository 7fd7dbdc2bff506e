"""Exception types raised across the engine."""


class VotestackError(Exception):
    """Base class for all engine errors."""


class InvalidProbabilityError(VotestackError):
    """A probability vector contains a non-finite entry."""


class ProbabilityRangeError(VotestackError):
    """A probability entry falls outside [0, 1]."""


class NormalizationError(VotestackError):
    """A probability vector does not sum to 1 within tolerance."""

    def __init__(self, message, observed_sum):
        super().__init__(message)
        self.observed_sum = observed_sum


class ShapeError(VotestackError):
    """Vector or matrix dimensions disagree with the declared shape."""


class EmptyInputError(VotestackError):
    """An operation that needs at least one sample received none."""


class DegenerateSplitError(VotestackError):
    """A train/val pairing cannot support fitting (missing or unshared classes)."""


class StratificationError(VotestackError):
    """A stratified partition cannot be built (class count below fold count)."""


class IncompleteTableError(VotestackError):
    """A probability table is missing a required (sample, learner, fold) entry."""


class DuplicateRowError(VotestackError):
    """A probability-table file repeats a (sample, learner, fold) key."""


class TableParseError(VotestackError):
    """A table or feature file failed to parse; carries the offending line."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class SchemaError(VotestackError):
    """File contents disagree with the declared manifest or header schema."""


class ConfigError(VotestackError):
    """Invalid configuration value or combination."""


class ModeError(VotestackError):
    """A routing mode was invoked without the inputs it requires."""


class EmptyMetaError(VotestackError):
    """The meta-learner was asked to train on an empty meta-dataset."""


class NumericError(VotestackError):
    """A numeric quantity (gradient, weight) became non-finite."""
