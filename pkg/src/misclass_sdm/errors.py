"""Exception classes carrying the command-line exit code of their failure class."""


class MisclassError(Exception):
    exit_code = 1


class InputOutputError(MisclassError):
    """A file could not be read or written."""

    exit_code = 3


class SchemaError(MisclassError, ValueError):
    """Input content is malformed: columns, labels, values or JSON layout."""

    exit_code = 4


class ConvergenceError(MisclassError):
    """Chains failed the R-hat gate."""

    exit_code = 5


class DimensionError(MisclassError, ValueError):
    """Array shapes or covariate counts do not line up."""

    exit_code = 6


EXIT_CODES = {
    0: "success",
    1: "unexpected error",
    2: "invalid command-line usage",
    InputOutputError.exit_code: "file could not be read or written",
    SchemaError.exit_code: "malformed input (columns, labels, values, empty training set)",
    ConvergenceError.exit_code: "chains not converged (R-hat gate failed)",
    DimensionError.exit_code: "dimension mismatch between data and posterior",
}
