"""Exception types shared across the pipeline."""

from __future__ import annotations


class MapPlanError(Exception):
    """Base class for every error raised by mapplan."""


# model


class UnpairedSnapAction(MapPlanError):
    def __init__(self, name: str):
        super().__init__(f"snap action {name} has no matching counterpart")
        self.name = name


class SignatureMismatch(MapPlanError):
    def __init__(self, start: str, end: str):
        super().__init__(f"parameter lists differ between {start} and {end}")
        self.start = start
        self.end = end


class NonGroundFluent(MapPlanError):
    def __init__(self, term: object):
        super().__init__(f"fluent {term} is not ground")
        self.term = term


class EffectNotGround(MapPlanError):
    def __init__(self, term: object):
        super().__init__(f"effect {term} is not ground under the binding")
        self.term = term


class KBError(MapPlanError):
    """Raised when a KB text has error-level diagnostics."""

    def __init__(self, diagnostics: list):
        self.diagnostics = list(diagnostics)
        first = next((d for d in self.diagnostics if d.severity == "error"), None)
        super().__init__(str(first) if first else "invalid knowledge base")


# planning


class Unsolvable(MapPlanError):
    pass


class LimitExceeded(MapPlanError):
    def __init__(self, limits: object, reason: str):
        super().__init__(f"search limit reached ({reason})")
        self.limits = limits
        self.reason = reason


class MappingInapplicable(MapPlanError):
    def __init__(self, step: int, head: object, literal: object):
        super().__init__(f"step {step}: {head} is not applicable ({literal})")
        self.step = step
        self.head = head
        self.literal = literal


class InconsistentMatrix(MapPlanError):
    pass


# scheduling


class UnsatisfiableSlot(MapPlanError):
    def __init__(self, action: str, rtype: str):
        super().__init__(f"{action} needs a {rtype} but none is declared")
        self.action = action
        self.rtype = rtype


class Infeasible(MapPlanError):
    pass


class SolveTimeout(MapPlanError):
    pass


class ScheduleViolation(MapPlanError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations[:3]))
        self.violations = violations


class InconsistentInput(MapPlanError):
    pass


# kms


class TransportError(MapPlanError):
    pass


class MalformedCompletion(MapPlanError):
    pass


class ExtractionError(MapPlanError):
    pass
