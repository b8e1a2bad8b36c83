"""Error taxonomy shared across the pipeline.

The CLI maps each class to a distinct exit code, so raising the right
type here is part of the external contract.
"""


class ConfigError(ValueError):
    """Invalid configuration or precondition violation (exit code 2)."""


class MissingInputError(FileNotFoundError):
    """A required input file or directory does not exist (exit code 3)."""


class BudgetExhaustedError(RuntimeError):
    """The privacy budget does not admit even one training step (exit code 4)."""


class NumericError(ArithmeticError):
    """Non-finite loss, gradient, or update (exit code 5)."""
