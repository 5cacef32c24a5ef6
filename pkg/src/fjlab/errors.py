"""Exception hierarchy.

Two branches matter for the CLI exit-code contract: ValidationError maps
to exit code 1 (bad inputs, files, configs, scenario parameters) and
NumericalError maps to exit code 2 (well-formed inputs on which the
requested computation fails).
"""


class FJLabError(Exception):
    """Base class for all package errors."""


class ValidationError(FJLabError):
    """Invalid input data, file content, or configuration."""


class NumericalError(FJLabError):
    """Computation failed on structurally valid input."""


# -- validation ----------------------------------------------------------


class ShapeMismatch(ValidationError):
    """Array shapes are inconsistent with each other or with the model."""


class NegativeEntry(ValidationError):
    """A probability-like entry is more negative than the tolerance allows."""


class AllZeroVector(ValidationError):
    """A vector with zero total mass cannot be normalized."""


class WeightNotSimplex(ValidationError):
    """A weight vector or matrix row is not on the probability simplex."""


class LabelOutOfRange(ValidationError):
    """A class label lies outside [0, d)."""


class TooFewAgents(ValidationError):
    """The operation needs at least two agents."""


class TooFewPoints(ValidationError):
    """The operation needs at least three paired observations."""


class EmptyInput(ValidationError):
    """An empty collection was passed where at least one item is required."""


class InsufficientSamples(ValidationError):
    """Too few reports or samples to aggregate."""


class InvalidScenario(ValidationError):
    """Scenario parameters violate their admissible ranges."""


class UnbalancedScenario(ValidationError):
    """The operation requires balanced region probabilities."""


class ConfidenceOrderViolated(ValidationError):
    """Scenario parameters make a non-competent agent at least as confident
    as the competent one, so confidence routing cannot be analyzed."""


class DegenerateTrajectory(ValidationError):
    """All snapshots are identical and no regularizer breaks the tie."""


class MissingParams(ValidationError):
    """Fitted parameters required by the operation are not available."""


class MissingLabels(ValidationError):
    """Ground-truth labels required by the operation are not available."""


class ParseError(ValidationError):
    """A file is syntactically malformed or has the wrong structure."""


class SchemaVersionUnsupported(ValidationError):
    """The file declares a schema version this package does not read."""


class InvariantViolation(ValidationError):
    """File content violates a numeric invariant (names the exact cell)."""


class ConfigError(ValidationError):
    """Unknown section/key or unparsable value in a run configuration."""


# -- numerical -----------------------------------------------------------


class NoConvergence(NumericalError):
    """An iterative method exhausted its iteration budget."""


class NotContractive(NumericalError):
    """The update operator has spectral radius too close to or above 1."""


class SingularSystem(NumericalError):
    """The linear system for the fixed point is numerically singular."""


class DegenerateStubbornness(NumericalError):
    """Zero-stubbornness agents leave the long-run influence matrix
    short of row-stochasticity; reported, never repaired."""
