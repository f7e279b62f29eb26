#!/usr/bin/env python3
# === planner_errors.py ===
# Error kinds shared by the planner modules. master.py maps each one to an exit code.


class PlannerError(Exception):
    """Base class for every error raised by the planner modules."""

    exit_code = 3


class InvalidArgumentError(PlannerError, ValueError):
    """A caller passed a value outside the documented domain."""

    exit_code = 2


class UsageError(InvalidArgumentError):
    """Command line could not be parsed (unknown verb, flag or choice)."""


class ProblemTooLargeError(PlannerError, ValueError):
    """Instance exceeds the configured cap of an exponential-time planner."""

    exit_code = 2


class InfeasibleRicianRegimeError(PlannerError, ValueError):
    """Large-G y_Q branch evaluated where sqrt(2G) <= Q^-1(epsilon)."""


class InfeasibleInputError(PlannerError, ValueError):
    """Tour cannot meet its deadlines even at maximum speed."""

    exit_code = 1


class NumericFailureError(PlannerError, ArithmeticError):
    """Iterative routine hit its iteration cap; best_iterate holds the last good point."""

    def __init__(self, message, best_iterate=None):
        super().__init__(message)
        self.best_iterate = best_iterate


class ScenarioParseError(PlannerError, ValueError):
    """Scenario or config file is not well-formed JSON or misses a field."""

    exit_code = 2

    def __init__(self, message, field=None, line=None):
        location = []
        if field is not None:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.field = field
        self.line = line


class ScenarioValidationError(PlannerError, ValueError):
    """One or more type invariants failed; problems lists every failure."""

    exit_code = 2

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems) or "invalid scenario")
