"""Exception hierarchy shared by all solvers."""

from __future__ import annotations


class WfError(Exception):
    """Base class for every error raised by wfsolve."""


class InputError(WfError, ValueError):
    """Malformed network, injections, file contents or parameters."""


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class DisconnectedNetworkError(InputError):
    def __init__(self, components):
        self.components = [sorted(map(str, c)) for c in components]
        desc = "; ".join("{" + ", ".join(c) + "}" for c in self.components)
        super().__init__(f"network is disconnected: components {desc}")


class UnsupportedNetworkError(WfError):
    """The requested solver has no guarantee for this topology."""


class NonConvergenceError(WfError):
    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")


class InfeasibleError(WfError):
    """The relaxation (or the LP) admits no feasible point."""


class BudgetExceededError(WfError):
    """Node or time budget ran out before optimality was proven.

    ``incumbent`` holds the best solution found so far (may be ``None``) and
    ``gap`` the remaining bound gap.
    """

    def __init__(self, message: str, incumbent=None, gap: float = float("inf")):
        self.incumbent = incumbent
        self.gap = gap
        super().__init__(message)


class DegeneratePivotError(WfError):
    """The simplex basis became numerically singular."""

    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(f"{message} (basis condition number {condition:.3e})")
        self.condition = condition
