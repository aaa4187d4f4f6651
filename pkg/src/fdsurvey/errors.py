"""Exception types shared across the package."""


class FdsurveyError(Exception):
    """Base class for all package errors."""


class ContractError(FdsurveyError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(FdsurveyError, ValueError):
    """An invalid population, design, noise or experiment configuration."""


class DesignError(FdsurveyError, ValueError):
    """A sampling design cannot support the requested estimator."""


class NumericalError(FdsurveyError, ArithmeticError):
    """A numerical routine failed (non-convergence, degenerate input)."""
