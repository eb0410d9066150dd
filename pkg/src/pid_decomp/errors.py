"""Exception hierarchy shared by the library and the CLI."""


class PidDecompError(Exception):
    """Base class for every error raised by ``pid_decomp``."""


class InvalidArgumentError(PidDecompError, ValueError):
    pass


class ConstructionInfeasibleError(PidDecompError):
    """A degradation channel cannot be built because its condition fails."""


class ConditionsInconclusiveError(PidDecompError):
    """Neither zero-UI condition holds, so no closed form is available."""


class InfeasibleProblemError(PidDecompError):
    """The coupling set is empty (pairwise marginals disagree on M)."""


class NumericalIntegrityError(PidDecompError, ArithmeticError):
    """A quantity that must be nonnegative or consistent is not, beyond rounding."""


class InternalError(PidDecompError, RuntimeError):
    pass
