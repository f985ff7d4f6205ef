"""Threshold alarms on monitored properties, with hysteresis on clearing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..monitor_stream import OK, Sample
from .codecs import exact

RAISED = "raised"
CLEARED = "cleared"


@dataclass(frozen=True)
class AlarmSpec:
    device: str
    property: str
    lo: float
    hi: float
    hysteresis: float = 0.0


@dataclass(frozen=True)
class AlarmEvent:
    alarm_id: int
    kind: str
    device: str
    property: str
    value: object
    event_seq: int
    offset_ns: int


class AlarmTracker:
    """Raises once when a sample leaves [lo, hi]; clears once back inside
    [lo + hysteresis, hi - hysteresis]. Non-ok samples are ignored."""

    def __init__(self, spec: AlarmSpec, alarm_id: int = 0, sink: Optional[list] = None):
        self.spec = spec
        self.alarm_id = alarm_id
        self.active = False
        self.sink = sink if sink is not None else []
        self._lo, self._hi = exact(spec.lo), exact(spec.hi)
        self._h = exact(spec.hysteresis)

    def feed(self, sample: Sample) -> Optional[AlarmEvent]:
        if sample.quality != OK:
            return None
        v = exact(sample.value)
        kind = None
        if not self.active and (v > self._hi or v < self._lo):
            self.active, kind = True, RAISED
        elif self.active and self._lo + self._h <= v <= self._hi - self._h:
            self.active, kind = False, CLEARED
        if kind is None:
            return None
        ev = AlarmEvent(self.alarm_id, kind, sample.device, sample.property,
                        sample.value, sample.event_seq, sample.offset_ns)
        self.sink.append(ev)
        return ev

    __call__ = feed
