"""Exception types shared across the package."""


class DarqnError(Exception):
    pass


class DimensionError(DarqnError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(DarqnError, ValueError):
    """A precondition of an operation was violated by the caller."""


class NumericError(DarqnError, ArithmeticError):
    """NaN/Inf encountered, or a value outside an operation's domain."""


class DomainError(NumericError):
    pass


class ConfigError(DarqnError, ValueError):
    """Invalid configuration or input file."""


class WorldFileError(ConfigError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = str(path) if path is not None else "<world>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
