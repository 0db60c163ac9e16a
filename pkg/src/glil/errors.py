"""Semantic exception hierarchy.

The CLI maps these onto exit codes: input/configuration problems exit 2,
numeric failures exit 3, failed property verdicts exit 4.
"""


class GlilError(Exception):
    """Base class for all errors raised by this package."""


class InputError(GlilError, ValueError):
    """Arguments violate an operation's contract (domain, shape, membership)."""


class ConfigError(GlilError):
    """Grid, lattice, or experiment configuration is invalid (for example a
    CFL violation or a lattice too narrow for the requested horizon)."""


class NumericError(GlilError, FloatingPointError):
    """A non-finite value appeared where the scheme guarantees finiteness."""


class StrategyViolationError(InputError):
    """An adversary strategy emitted a volatility outside its band."""
