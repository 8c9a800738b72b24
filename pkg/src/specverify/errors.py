"""Exception hierarchy.

Everything raised on purpose by the package derives from SpecVerifyError so
the CLI can map it onto an exit code in one place.
"""


class SpecVerifyError(Exception):
    pass


class ShapeError(SpecVerifyError, ValueError):
    """Dimension mismatch between a network, an input or a specification."""


class NumericError(SpecVerifyError, ArithmeticError):
    """Non-finite value, NaN gradient or failed internal numeric check."""


class SchemaError(SpecVerifyError, ValueError):
    """A model, specification or dataset file does not match its schema."""


class ParseError(SchemaError):
    pass


class BoundOrderError(SpecVerifyError, ValueError):
    """An interval was passed with lower > upper."""


class DomainError(SpecVerifyError, ValueError):
    pass


class ConfigError(SpecVerifyError, ValueError):
    """Invalid configuration (e.g. term-count cap, dimension guard)."""


class SolverLimitError(SpecVerifyError, RuntimeError):
    pass


class InternalConsistencyError(SpecVerifyError, RuntimeError):
    pass


class FormatError(SpecVerifyError, ValueError):
    """Bad magic number or header in a dataset file."""


class TrainingError(SpecVerifyError, RuntimeError):
    pass
