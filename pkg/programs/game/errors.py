"""
Exception hierarchy shared by every package of the project.

All errors derive from GameError so the command line front end can map
any failure to an exit code through the class MRO.
"""


class GameError(Exception):
    """Root of every error raised by the project."""


# --- configuration -------------------------------------------------------

class ConfigError(GameError):
    """A scenario file could not be turned into a ScenarioConfig."""


class ParseError(ConfigError):
    """
    The scenario file is not well formed.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int
        1-based line of the problem, 0 when unknown.
    column : int
        1-based column of the problem, 0 when unknown.
    """

    def __init__(self, message, line=0, column=0):
        self.line = line
        self.column = column
        if line:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class UnknownField(ConfigError):
    def __init__(self, name, section=None):
        self.name = name
        where = f" in section '{section}'" if section else ""
        super().__init__(f"unknown field '{name}'{where}")


class ValidationError(ConfigError):
    """Wraps a data-model error found while loading a configuration."""

    def __init__(self, cause):
        self.cause = cause
        super().__init__(f"{type(cause).__name__}: {cause}")


# --- data model ----------------------------------------------------------

class ModelError(GameError, ValueError):
    """Inputs violate the game's data model."""


class DimensionMismatch(ModelError):
    pass


class NotSymmetric(ModelError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"{name} is not symmetric")


class NotPositiveDefinite(ModelError):
    def __init__(self, name, semi=False):
        self.name = name
        kind = "positive semidefinite" if semi else "positive definite"
        super().__init__(f"{name} is not {kind}")


class DiscountOutOfRange(ModelError):
    def __init__(self, gamma):
        self.gamma = gamma
        super().__init__(f"discount gamma={gamma} must lie in (0, 1)")


class LengthMismatch(ModelError):
    pass


# --- numerics ------------------------------------------------------------

class SingularMatrix(GameError):
    pass


class MaxIterationsExceeded(GameError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(last step {residual:.3e})")


class UnstableClosedLoop(GameError):
    def __init__(self, radius):
        self.radius = radius
        super().__init__(
            f"discounted closed-loop spectral radius {radius:.6f} is not < 1")


class IncentiveInfeasible(GameError):
    def __init__(self, residual, bound):
        self.residual = residual
        self.bound = bound
        super().__init__(
            f"no exact incentive matrix: residual {residual:.3e} "
            f"exceeds {bound:.3e}")


# --- learning ------------------------------------------------------------

class NotConverged(GameError):
    def __init__(self, iterations, h_delta):
        self.iterations = iterations
        self.h_delta = h_delta
        super().__init__(
            f"policy iteration stopped after {iterations} iterations "
            f"with |dh|={h_delta:.3e}")


class RankDeficient(GameError):
    def __init__(self, rank, expected):
        self.rank = rank
        self.expected = expected
        super().__init__(
            f"regression matrix has rank {rank}, {expected} required: "
            "increase the sample count or the exploration noise")


class TooFewSamples(GameError):
    def __init__(self, n, required):
        self.n = n
        self.required = required
        super().__init__(f"{n} data tuples given, at least {required} required")


# --- simulation / oracle -------------------------------------------------

class TailRequiresLinearPolicy(GameError):
    pass


class EmptyGrid(GameError):
    pass
