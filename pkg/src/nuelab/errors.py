"""Exception types shared across the package."""


class NuelabError(Exception):
    pass


class OutOfDomain(NuelabError, ValueError):
    """Point lies outside the phase-space interval by more than the clamp slack."""


class AtCriticalPoint(NuelabError, ValueError):
    """Derivative requested exactly at a critical/singular point."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NotMarkov(NuelabError, TypeError):
    """Map lacks the full-branch Markov structure required here."""


class TruncationLoss(NuelabError, ValueError):
    """Aggregate mass lost to branch truncation exceeds the budget."""


class NonSummableReturns(NuelabError, ValueError):
    """Truncated sum of |omega| * R(omega) does not stabilise."""


class GcdNotOne(NuelabError, ValueError):
    """Return times share a common divisor > 1; pass the tower for f^k instead."""


class AmbiguousDecay(NuelabError, ValueError):
    """No decay regression reached the acceptance R^2 threshold."""


class InsufficientSignal(NuelabError, ValueError):
    """Too few correlation values exceed their noise floor to fit."""


class InsufficientData(NuelabError, ValueError):
    """Not enough distinct observations for the requested statistic."""


class CapExceeded(NuelabError, RuntimeError):
    """Iteration cap reached before the defining inequality resolved."""


class ResidueTooLarge(NuelabError, RuntimeError):
    """Unresolved mass left by a partition run exceeds its tolerance."""


class DegenerateChop(NuelabError, ValueError):
    """A chop produced a parameter interval below representable width."""


class MonotoneViolation(NuelabError, ValueError):
    """Midpoint image fell outside the endpoint span of a parameter curve."""


class PrecisionExhausted(NuelabError, RuntimeError):
    """Interval widths reached the binary64 floor; construction stops honestly."""


class PreconditionUnsatisfiable(NuelabError, ValueError):
    """No eta > 0 satisfies the Stirling-bound relation for the given eta-hat."""


class NoAcipAvailable(NuelabError, ValueError):
    """Ensemble correlation method requires a density estimate."""


class ConfigError(NuelabError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class GaussTruncationWarning(UserWarning):
    """An orbit entered the unmodelled tail [0, 1/(r_max+1)) of the Gauss map."""
