"""Exception types shared across the package."""

from __future__ import annotations


class InputError(ValueError):
    """A machine, loop or schedule document is malformed.

    ``path`` points at the offending element, e.g. ``slots[2].id``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InfeasibleError(ValueError):
    """No schedule can exist, independently of the solver (e.g. a zero-distance cycle)."""


class BoundsError(ValueError):
    """Stage bounds cannot be derived for the given graph and II."""


class BackendError(RuntimeError):
    """The constraint solver is unavailable or a session was misused."""
