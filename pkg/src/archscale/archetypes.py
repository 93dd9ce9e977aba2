from __future__ import annotations

from enum import Enum


class Archetype(str, Enum):
    """Workload behaviour classes, in tie-break precedence order."""

    SPIKE = "SPIKE"
    PERIODIC = "PERIODIC"
    RAMP = "RAMP"
    STATIONARY = "STATIONARY"

    @property
    def index(self) -> int:
        return ARCHETYPES.index(self)

    @classmethod
    def parse(cls, value) -> "Archetype":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown archetype {value!r}") from None


ARCHETYPES: tuple[Archetype, ...] = tuple(Archetype)
