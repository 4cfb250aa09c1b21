"""Exception types raised across the package."""


class StokesBiotError(Exception):
    pass


# mesh
class ZeroCells(StokesBiotError, ValueError):
    pass


class InvalidRect(StokesBiotError, ValueError):
    pass


class NonMatching(StokesBiotError, ValueError):
    pass


class NotOnLine(StokesBiotError, ValueError):
    pass


# elements / forms / system
class UnsupportedDegree(StokesBiotError, ValueError):
    pass


class UnsupportedOrder(StokesBiotError, ValueError):
    pass


class SpaceMismatch(StokesBiotError, ValueError):
    pass


class OrientationError(StokesBiotError, ValueError):
    pass


class NonPositiveParam(StokesBiotError, ValueError):
    pass


class MissingHistory(StokesBiotError, ValueError):
    pass


class SingularBlock(StokesBiotError, ArithmeticError):
    pass


class DimensionMismatch(StokesBiotError, ValueError):
    pass


# solver
class Singular(StokesBiotError, ArithmeticError):
    pass


class NotSPD(StokesBiotError, ArithmeticError):
    pass


# timestepper / analysis / verification
class MissingInitialData(StokesBiotError, ValueError):
    pass


class HistoryMismatch(StokesBiotError, ValueError):
    pass


class UnknownCase(StokesBiotError, KeyError):
    pass


# config
class ConfigError(StokesBiotError, ValueError):
    def __init__(self, name, message, line=None):
        self.name = name
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{name}: {message}{where}")


class MissingKey(ConfigError):
    def __init__(self, name):
        super().__init__(name, "required key is missing")


class BadValue(ConfigError):
    pass


class IoError(StokesBiotError, OSError):
    pass
