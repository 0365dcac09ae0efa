"""Exception hierarchy shared by every subsystem."""


class WittenMorseError(Exception):
    """Base class for all package errors."""


# spectral core
class AsymmetricInput(WittenMorseError, ValueError):
    pass


class IndexOutOfRange(WittenMorseError, IndexError):
    pass


class NoConvergence(WittenMorseError, RuntimeError):
    def __init__(self, iterations, best_residual, message=None):
        self.iterations = iterations
        self.best_residual = best_residual
        super().__init__(
            message
            or f"eigensolver did not converge after {iterations} iterations "
            f"(best residual {best_residual:.3e})"
        )


class NegativeSpectrum(WittenMorseError, ValueError):
    pass


class AmbiguousGap(WittenMorseError, RuntimeError):
    pass


# complexes
class DegreeOutOfRange(WittenMorseError, ValueError):
    pass


class ParseError(WittenMorseError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownCatalogEntry(WittenMorseError, KeyError):
    pass


class TopologyError(WittenMorseError, ValueError):
    pass


# Morse analysis
class DegenerateCritical(WittenMorseError, ValueError):
    pass


class LengthMismatch(WittenMorseError, ValueError):
    pass


class NonzeroRemainder(WittenMorseError, ValueError):
    pass


# SUSY bookkeeping
class IdentityViolation(WittenMorseError, RuntimeError):
    pass


class InsufficientSpectrum(WittenMorseError, ValueError):
    pass


class NoGap(WittenMorseError, RuntimeError):
    pass


# semiclassical models
class WellTooCloseToBoundary(WittenMorseError, ValueError):
    pass


class OverlappingSupports(WittenMorseError, ValueError):
    pass


class NonDiagonalPartition(WittenMorseError, ValueError):
    pass


# harness
class ConfigError(WittenMorseError, ValueError):
    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
