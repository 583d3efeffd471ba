"""Exception hierarchy shared by all adlab modules.

Every physics-contract failure derives from :class:`AdlabError`; the CLI maps
these to exit code 2 and records ``type(err).__name__`` in ``summary.json``.
"""


class AdlabError(Exception):
    """Base class for numerical/physical contract violations."""


class NotHermitian(AdlabError):
    pass


class DegenerateSpectrum(AdlabError):
    pass


class PropagationFailed(AdlabError):
    pass


class StepTooCoarse(AdlabError):
    pass


class NonUnitaryDrift(AdlabError):
    pass


class GridMismatch(AdlabError):
    pass


class GridTooCoarse(AdlabError):
    pass


class ContinuityLost(AdlabError):
    pass


class MissingDerivative(AdlabError):
    pass


class GapTooSmall(AdlabError):
    pass


class DivisionGuard(AdlabError):
    pass


class PhaseUnwrapFailed(AdlabError):
    pass


class InsufficientSamples(AdlabError):
    pass


class RegimeViolation(AdlabError):
    pass


class TIndependenceViolated(AdlabError):
    pass


class ScenarioError(Exception):
    """Malformed or unreadable scenario input (CLI exit code 1)."""


class PreconditionUnmet(UserWarning):
    """Sufficient conditions for an approximation are not met; result still computed."""
