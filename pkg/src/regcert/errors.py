"""Semantic exception hierarchy shared across the package."""


class RegcertError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(RegcertError, ValueError):
    """An argument violates a documented precondition."""


class UnboundedQuantileError(DomainError):
    """The standard normal quantile was requested at p = 0 or p = 1."""


class UndefinedBoundError(DomainError):
    """Accepted-region geometry makes a probability bound undefined."""


class TransportError(RegcertError, RuntimeError):
    """A subprocess model failed, timed out, or replied with garbage."""


class ConfigError(RegcertError, ValueError):
    """A run configuration file is malformed or inconsistent."""
