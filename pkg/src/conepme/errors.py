"""Exception hierarchy shared by all modules."""


class ConeError(Exception):
    """Base class for every error raised by the package."""


class SpectrumError(ConeError):
    pass


class IndicialError(ConeError):
    pass


class ConstraintError(IndicialError):
    """A parameter set violates one of the admissibility constraints.

    Attributes
    ----------
    constraints : list of str
        Names of the violated constraints, e.g. ``["pq", "pole-hit"]``.
    """

    def __init__(self, message, constraints=()):
        super().__init__(message)
        self.constraints = list(constraints)


class AlgebraError(ConeError):
    pass


class GreenError(ConeError):
    pass


class NormError(ConeError):
    pass


class SolverError(ConeError):
    pass


class QuenchError(SolverError):
    """Positivity could not be restored by step halving."""


class FitError(ConeError):
    pass


class ConfigError(ConeError):
    pass
