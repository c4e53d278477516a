"""Exception hierarchy shared by all morseflow modules."""


class MorseflowError(Exception):
    """Base class for all errors raised by morseflow."""


class DimensionError(MorseflowError):
    """Ambient dimensions or degrees of algebraic objects do not match."""


class TransversalityError(MorseflowError):
    """An evaluation matrix is singular below the configured margin threshold.

    Carries the offending margin (smallest singular value) so callers can
    decide whether to jitter and retry.
    """

    def __init__(self, message, margin=0.0):
        super().__init__(message)
        self.margin = float(margin)


class NonConvergenceError(MorseflowError):
    """An iterative procedure (flow horizon, Newton, regular-value search) ran out of budget."""


class DegenerateCriticalPointError(MorseflowError):
    """A critical point has an eigenvalue inside the degeneracy tolerance: the field is not Morse."""


class RegularityError(MorseflowError):
    """A map violates the regularity condition (a k-cell limit lands on a critical point of index > k)."""


class ChainMapError(MorseflowError):
    """A computed graded map fails the boundary-commutation identity.

    This is the designated canary for counting or sign defects and is always fatal.
    """


class ConfigError(MorseflowError):
    """A scenario configuration file could not be parsed or validated."""
