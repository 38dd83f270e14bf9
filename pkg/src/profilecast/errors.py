"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for configuration
problems, 3 for bad input data, 4 for numerical failures.
"""

from __future__ import annotations


class ProfilecastError(Exception):
    exit_code = 1


class ConfigError(ProfilecastError):
    exit_code = 2


class ConfigInvalid(ConfigError):
    pass


class DataError(ProfilecastError):
    exit_code = 3


class EmptyFile(DataError):
    pass


class MalformedRow(DataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateReading(DataError):
    def __init__(self, entity_id: str, day: int, slot: int, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate reading for entity {entity_id!r}, day {day}, slot {slot}{where}")
        self.entity_id = entity_id
        self.day = day
        self.slot = slot
        self.line = line


class SlotAllMissing(DataError):
    def __init__(self, slot: int, entity_id: str | None = None):
        who = f" for entity {entity_id!r}" if entity_id is not None else ""
        super().__init__(f"slot {slot} has no observations{who}")
        self.slot = slot
        self.entity_id = entity_id


class ClassTooSmall(DataError):
    def __init__(self, label: int, count: int, needed: int):
        super().__init__(f"class {label} has {count} member(s); at least {needed} required")
        self.label = label
        self.count = count


class LabelOutOfRange(DataError):
    pass


class NumericalError(ProfilecastError):
    exit_code = 4


class NotPositiveDefinite(NumericalError):
    pass


class DegenerateComponent(NumericalError):
    def __init__(self, component: int, mass: float, needed: float):
        super().__init__(
            f"component {component} has responsibility mass {mass:.3g} < {needed:g}"
        )
        self.component = component
        self.mass = mass


class AllFitsFailed(NumericalError):
    pass


class NoUsefulStage(NumericalError):
    pass
