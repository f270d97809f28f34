from __future__ import annotations

from enum import IntEnum


class ManeuverLabel(IntEnum):
    ST = 0   # straight: the non-maneuver class for metric purposes
    RT = 1
    LT = 2
    RLC = 3
    LLC = 4
    SS = 5


LABELS = tuple(m.name for m in ManeuverLabel)
STRAIGHT = ManeuverLabel.ST
