"""Exception types shared across the package.

Everything raised on purpose derives from CausalPanelError so callers can
catch one base class at the CLI boundary. Validation problems (bad files,
bad shapes, bad configs) are PanelValidationError; failures inside an
estimator are EstimationError.
"""


class CausalPanelError(Exception):
    """Base class for all errors raised by this package."""


class PanelValidationError(CausalPanelError):
    """Input data or configuration failed validation."""


class ParseError(PanelValidationError):
    """A CSV cell or header could not be interpreted."""


class DuplicateRow(PanelValidationError):
    """The same (unit, time) pair appears more than once."""


class IncompletePanel(PanelValidationError):
    """The unit x time grid has missing cells."""


class InvalidStructure(PanelValidationError):
    """Panel dimensions or treatment layout violate the model's requirements."""


class EstimationError(CausalPanelError):
    """An estimator could not produce a result on this input."""


class InsufficientData(EstimationError):
    """Not enough observations to identify the requested model."""


class SingularDesign(EstimationError):
    """A regression design matrix is rank deficient."""


class InvalidCell(EstimationError):
    """A (unit, time) coordinate is outside the treated post-period block."""


class InvalidRank(EstimationError):
    """Requested number of factors is out of range for the panel."""


class SingularProjection(EstimationError):
    """The factor design for the loading projection is rank deficient."""


class SingularCovariance(EstimationError):
    """A covariance matrix needed for a diagnostic is singular."""


class Underdetermined(EstimationError):
    """More free coefficients than pre-period observations."""


class TooManySubsets(EstimationError):
    """Exhaustive subset search would exceed the enumeration budget."""


class NonStationary(EstimationError):
    """A fitted autoregression lies outside the stationary region."""


class PerfectPreFit(EstimationError):
    """A unit's pre-period residuals are exactly zero, so the fit ratio is undefined."""


class DegenerateWeights(EstimationError):
    """A weighting scheme collapsed onto conflicting degenerate members."""


class ExperimentDegenerate(EstimationError):
    """Too many simulation replications failed to produce an estimate."""


class InsufficientDraws(EstimationError):
    """Not enough posterior draws to form the requested quantile."""


class InvalidSpec(PanelValidationError):
    """A simulation or sampler specification is internally inconsistent."""


class InvalidFeatures(EstimationError):
    """A synthetic-control feature matrix contains non-finite entries."""


class InsufficientReplicates(EstimationError):
    """Too few bootstrap replicates for the requested interval level."""


class FilterDivergence(EstimationError):
    """The Kalman filter produced a non-positive predictive variance."""


class TestUndefined(EstimationError):
    """The placebo test statistic is undefined for the treated unit."""


class ConvergenceWarning(UserWarning):
    """An iterative fit stopped at its iteration cap or looks unmixed."""
