"""Array time, the pervasive 48 ms timing event and pulse-counting slave clocks.

All time is integer nanoseconds of TAI measured from a simulation epoch.
Nothing in here touches floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Optional

from .errors import DomainError, NotSynchronized

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

PERIOD_NS = 48 * NS_PER_MS

# Time-scale ladder of the control system, shortest first.
DEVICE_INTERACTION_NS = 2 * NS_PER_MS  # shortest software interaction
CORRELATOR_DUMP_NS = 16 * NS_PER_MS
TIMING_EVENT_NS = PERIOD_NS
OBSERVATION_CHANGE_NS = 1 * NS_PER_S
SLOW_MONITOR_NS = 300 * NS_PER_S

TIME_SCALES = {
    "device_interaction": DEVICE_INTERACTION_NS,
    "correlator_dump": CORRELATOR_DUMP_NS,
    "timing_event": TIMING_EVENT_NS,
    "observation_change": OBSERVATION_CHANGE_NS,
    "slow_monitor": SLOW_MONITOR_NS,
}


@dataclass(frozen=True, order=True)
class ArrayTime:
    """A TAI instant in integer nanoseconds since the simulation epoch."""

    tai_ns: int

    def __post_init__(self):
        if not isinstance(self.tai_ns, int) or isinstance(self.tai_ns, bool):
            raise DomainError(f"ArrayTime needs integer ns, got {self.tai_ns!r}")
        if self.tai_ns < 0:
            raise DomainError(f"ArrayTime before epoch: {self.tai_ns}")

    def __add__(self, duration_ns: int) -> "ArrayTime":
        if not isinstance(duration_ns, int):
            return NotImplemented
        return ArrayTime(self.tai_ns + duration_ns)

    def __sub__(self, other):
        if isinstance(other, ArrayTime):
            return self.tai_ns - other.tai_ns
        if isinstance(other, int):
            return ArrayTime(self.tai_ns - other)
        return NotImplemented

    def __str__(self):
        s, ns = divmod(self.tai_ns, NS_PER_S)
        return f"{s}.{ns:09d}s"


@dataclass(frozen=True)
class TimingEvent:
    seq: int
    tai: ArrayTime


@dataclass(frozen=True)
class MasterClock:
    """Central reference: defines when every timing event occurs."""

    epoch: ArrayTime = ArrayTime(0)
    period_ns: int = PERIOD_NS

    def event_time(self, seq: int) -> ArrayTime:
        if seq < 0:
            raise DomainError(f"negative event sequence {seq}")
        return ArrayTime(self.epoch.tai_ns + seq * self.period_ns)

    def event(self, seq: int) -> TimingEvent:
        return TimingEvent(seq, self.event_time(seq))

    def event_at_or_after(self, t: ArrayTime) -> int:
        """Smallest seq whose pulse edge is not earlier than ``t``."""
        if t < self.epoch:
            raise DomainError(f"{t} precedes the epoch {self.epoch}")
        return -(-(t.tai_ns - self.epoch.tai_ns) // self.period_ns)

    def event_at_or_before(self, t: ArrayTime) -> int:
        if t < self.epoch:
            raise DomainError(f"{t} precedes the epoch {self.epoch}")
        return (t.tai_ns - self.epoch.tai_ns) // self.period_ns

    def decompose(self, t: ArrayTime) -> tuple[int, int]:
        """Split ``t`` into (event seq, ns offset within that period)."""
        seq = self.event_at_or_before(t)
        return seq, t.tai_ns - self.event_time(seq).tai_ns

    def pulses(self, start: int = 0, stop: Optional[int] = None) -> Iterator[TimingEvent]:
        seq = start
        while stop is None or seq < stop:
            yield self.event(seq)
            seq += 1


@dataclass(frozen=True)
class SlaveClock:
    """Clock at a remote computer that keeps time by counting pulses.

    Pulse delivery latency never enters the arithmetic: once given the
    array time of one event, the slave only counts subsequent pulses.
    """

    period_ns: int = PERIOD_NS
    synced_seq: Optional[int] = None
    synced_tai: Optional[ArrayTime] = None
    pulses_since_sync: int = 0
    last_delivery: Optional[ArrayTime] = None

    @property
    def synchronized(self) -> bool:
        return self.synced_tai is not None

    def sync(self, seq: int, tai: ArrayTime) -> "SlaveClock":
        return replace(self, synced_seq=seq, synced_tai=tai, pulses_since_sync=0)

    def pulse(self, delivered_at: Optional[ArrayTime] = None) -> "SlaveClock":
        if not self.synchronized:
            raise NotSynchronized("pulse counted before synchronization")
        return replace(
            self, pulses_since_sync=self.pulses_since_sync + 1, last_delivery=delivered_at
        )

    @property
    def seq(self) -> int:
        if not self.synchronized:
            raise NotSynchronized("slave clock was never synchronized")
        return self.synced_seq + self.pulses_since_sync

    def now(self) -> ArrayTime:
        if not self.synchronized:
            raise NotSynchronized("slave clock was never synchronized")
        return self.synced_tai + self.pulses_since_sync * self.period_ns


def slave_sync(slave: SlaveClock, seq: int, tai: ArrayTime) -> SlaveClock:
    return slave.sync(seq, tai)


def slave_now(slave: SlaveClock) -> ArrayTime:
    return slave.now()
