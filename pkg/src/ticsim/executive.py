"""Time-tagged command path: ACC-side intake and ABM-side windowed dispatch.

A command tagged for event E is transmitted during period E-1, inside the
target device's window slot, as a latch-at-next-pulse write; the hardware
applies it on pulse E. Monitor polls of period P follow the command traffic
of the same period.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .errors import BusTimeout, DomainError, Overcommitted
from .framework.config import DeviceSpec, PropertySpec
from .monitor_stream import OK, RANGE, TIMEOUT, Broker, Collector, Sample
from .simbus import LATCH_FLAG, BusTransaction, CanBus, NodeAddress, frame_duration, round_trip_ns
from .timebase import NS_PER_MS, PERIOD_NS, ArrayTime, MasterClock, SlaveClock, TimingEvent


@dataclass(frozen=True)
class WindowPolicy:
    slots_per_period: int = 16
    slot_width_ns: int = 3 * NS_PER_MS

    def __post_init__(self):
        if self.slots_per_period * self.slot_width_ns != PERIOD_NS:
            raise DomainError("window slots must tile the 48 ms period exactly")

    def slot_start(self, period_start: ArrayTime, slot: int) -> ArrayTime:
        return period_start + slot * self.slot_width_ns


@dataclass(frozen=True)
class LeadPolicy:
    min_lead_events: int = 2

    def __post_init__(self):
        if self.min_lead_events < 1:
            raise DomainError("min_lead_events must be at least 1")

    @property
    def max_latency_ns(self) -> int:
        """Exclusive bound on ACC->ABM latency the lead rule tolerates."""
        return (self.min_lead_events - 1) * PERIOD_NS


@dataclass(frozen=True)
class TimedCommand:
    device: str
    member: str  # property or method name
    value: object  # encoded payload for properties, argument object for methods
    execute_event: int
    window_slot: int = 0
    client: int = 0
    order: int = -1


class Rejection(enum.Enum):
    LATE = "late"
    PAST = "past"


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    command: TimedCommand
    reason: Optional[Rejection] = None

    def __bool__(self):
        return self.accepted


def check_lead(execute_event: int, now_event: int, lead: LeadPolicy) -> Optional[Rejection]:
    if execute_event <= now_event:
        return Rejection.PAST
    if execute_event - now_event < lead.min_lead_events:
        return Rejection.LATE
    return None


@dataclass
class DispatchReport:
    accepted: int = 0
    rejected_late: int = 0
    rejected_past: int = 0
    dispatched_writes: int = 0
    window_overruns: int = 0
    period_overruns: int = 0
    late_arrivals: int = 0
    orphaned: int = 0
    command_timeouts: int = 0
    monitor_polls: int = 0
    monitor_timeouts: int = 0
    max_occupancy_ns: int = 0

    @property
    def rejected(self) -> int:
        return self.rejected_late + self.rejected_past

    @property
    def violations(self) -> int:
        return self.period_overruns + self.late_arrivals + self.command_timeouts

    def merge(self, other: "DispatchReport") -> "DispatchReport":
        out = DispatchReport()
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            setattr(out, name, max(a, b) if name == "max_occupancy_ns" else a + b)
        return out


class Executive:
    """ACC-side intake. Routes accepted commands to the owning ABM."""

    def __init__(self, lead: LeadPolicy = LeadPolicy(), clock: MasterClock = MasterClock(),
                 transport: Optional[Callable] = None):
        self.lead = lead
        self.clock = clock
        self.routes: dict[str, "Abm"] = {}
        self.transport = transport or self._direct
        self.report = DispatchReport()
        self._order = 0

    def route(self, device: str, abm: "Abm") -> None:
        self.routes[device] = abm

    @staticmethod
    def _direct(cmd: TimedCommand, abm: "Abm", send_time: ArrayTime) -> None:
        abm.enqueue(cmd, send_time)

    def now_event(self, t: ArrayTime) -> int:
        """Intake drains on pulse edges: a submission at t is handled at the next pulse."""
        return self.clock.event_at_or_after(t)

    def submit(self, cmd: TimedCommand, now_event: int) -> SubmitResult:
        reason = check_lead(cmd.execute_event, now_event, self.lead)
        if reason is Rejection.PAST:
            self.report.rejected_past += 1
            return SubmitResult(False, cmd, reason)
        if reason is Rejection.LATE:
            self.report.rejected_late += 1
            return SubmitResult(False, cmd, reason)
        cmd = replace(cmd, order=self._order)
        self._order += 1
        self.report.accepted += 1
        self.transport(cmd, self.routes[cmd.device], self.clock.event_time(now_event))
        return SubmitResult(True, cmd)


@dataclass
class PolledMonitor:
    device: str
    prop: PropertySpec
    node: int
    period_events: int
    start_event: int
    channel: str = "monitor"
    id: int = -1
    listeners: list = field(default_factory=list)
    samples: int = 0

    def due(self, seq: int) -> bool:
        return seq > self.start_event and (seq - self.start_event) % self.period_events == 0


@dataclass(frozen=True)
class LatchExpectation:
    device: str
    rca: int
    received_ns: int
    execute_event: int


class DevicePort:
    """Bus access handed to a device controller by its ABM."""

    def __init__(self, abm: "Abm", spec: DeviceSpec):
        self.abm = abm
        self.spec = spec

    def transact(self, rca: int, payload: bytes = b"", at: Optional[ArrayTime] = None) -> BusTransaction:
        return self.abm.transact(NodeAddress(self.spec.node, rca), payload, at)


class Abm:
    """Bus master for one real-time computer (an antenna ABM or the central ARTM)."""

    def __init__(self, name: str, bus: CanBus, clock: MasterClock = MasterClock(),
                 window: WindowPolicy = WindowPolicy(), broker: Optional[Broker] = None):
        self.name = name
        self.bus = bus
        self.clock = clock
        self.window = window
        self.broker = broker if broker is not None else Broker()
        self.slave = SlaveClock(clock.period_ns)
        self.devices: dict[str, DeviceSpec] = {}
        self.controllers: dict = {}
        self.queue: dict[int, list] = defaultdict(list)
        self.monitors: dict[int, PolledMonitor] = {}
        self.collectors: dict[str, Collector] = {}
        self.expectations: list[LatchExpectation] = []
        self.report = DispatchReport()
        self.dispatched_through = -1
        self.clock_faults = 0
        self._next_monitor = 0

    # topology
    def attach_device(self, spec: DeviceSpec) -> None:
        self.devices[spec.name] = spec

    def port(self, spec: DeviceSpec) -> DevicePort:
        return DevicePort(self, spec)

    def collector(self, channel: str) -> Collector:
        if channel not in self.collectors:
            self.collectors[channel] = Collector(self.name, self.broker, channel)
        return self.collectors[channel]

    # time
    def sync(self, seq: int, tai: ArrayTime) -> None:
        self.slave = self.slave.sync(seq, tai)

    def pulse(self, delivered_at: Optional[ArrayTime] = None) -> TimingEvent:
        """Count one timing pulse and run that period's work."""
        self.slave = self.slave.pulse(delivered_at)
        return self.cycle()

    def cycle(self) -> TimingEvent:
        event = TimingEvent(self.slave.seq, self.slave.now())
        if event.tai != self.clock.event_time(event.seq):
            self.clock_faults += 1
        for collector in self.collectors.values():
            collector.flush(event)
        self.abm_dispatch(TimingEvent(event.seq + 1, event.tai + self.clock.period_ns))
        self.schedule_monitors(event)
        return event

    # commands
    def enqueue(self, cmd: TimedCommand, arrival: ArrayTime) -> None:
        if cmd.execute_event <= self.dispatched_through:
            # arrived after its transmission window: cannot execute on time
            self.report.late_arrivals += 1
            return
        self.queue[cmd.execute_event].append(cmd)

    def abm_dispatch(self, event: TimingEvent) -> list:
        """Transmit everything due at ``event`` during the period before it."""
        period_start = event.tai - self.clock.period_ns
        self.dispatched_through = event.seq
        jobs = []
        for cmd in self.queue.pop(event.seq, []):
            jobs.append((cmd.window_slot, 0, cmd.order, cmd.device, cmd))
        for name, ctl in self.controllers.items():
            writes = ctl.per_event(event.seq)
            if writes:
                jobs.append((self.devices[name].slot, 1, 0, name, writes))
        jobs.sort(key=lambda j: j[:4])
        out = []
        for slot, internal, _, device, item in jobs:
            spec = self.devices[device]
            if internal:
                writes = item
            else:
                writes = self._expand(spec, item)
                if writes is None:
                    self.report.orphaned += 1
                    continue
            slot_start = self.window.slot_start(period_start, slot)
            slot_end = slot_start + self.window.slot_width_ns
            for rca, payload in writes:
                start = max(slot_start, self.bus.free_at)
                tx = self.bus.poll(NodeAddress(spec.node, rca | LATCH_FLAG), payload, start)
                out.append(tx)
                self.report.dispatched_writes += 1
                if tx.timed_out:
                    self.report.command_timeouts += 1
                    continue
                if tx.end > slot_end:
                    self.report.window_overruns += 1
                if tx.end > event.tai:
                    self.report.period_overruns += 1
                received = tx.start + frame_duration(tx.request, self.bus.model)
                self.expectations.append(LatchExpectation(device, rca, received.tai_ns, event.seq))
        self._note_occupancy(event.seq - 1)
        return out

    def _expand(self, spec: DeviceSpec, cmd: TimedCommand):
        ctl = self.controllers.get(spec.name)
        if ctl is not None:
            return ctl.expand(cmd.member, cmd.value, cmd.execute_event)
        if spec.has_prop(cmd.member):
            return [(spec.prop(cmd.member).rca, cmd.value)]
        return None

    # monitors
    def monitor_cost_ns(self, prop: PropertySpec) -> int:
        """Budget per poll: a full 8-byte frame each way, whatever the property width."""
        return round_trip_ns(8, 8, self.bus.model)

    def committed_ns(self) -> int:
        model = self.bus.model
        control = sum(c.control_budget_ns(model) for c in self.controllers.values())
        return control + sum(self.monitor_cost_ns(m.prop) for m in self.monitors.values())

    def add_monitor(self, mon: PolledMonitor) -> int:
        if self.committed_ns() + self.monitor_cost_ns(mon.prop) > self.clock.period_ns:
            raise Overcommitted(
                f"{self.name}: monitor {mon.device}:{mon.prop.name} exceeds the period budget"
            )
        mon.id = self._next_monitor
        self._next_monitor += 1
        self.monitors[mon.id] = mon
        return mon.id

    def remove_monitor(self, monitor_id: int) -> None:
        self.monitors.pop(monitor_id, None)

    def schedule_monitors(self, event: TimingEvent) -> list:
        due = [m for m in self.monitors.values() if m.due(event.seq)]
        if not due:
            self._note_occupancy(event.seq)
            return []
        period_end = event.tai + self.clock.period_ns
        start = max(event.tai, self.bus.free_at)
        needed = sum(self.monitor_cost_ns(m.prop) for m in due)
        if start + needed > period_end:
            raise Overcommitted(
                f"{self.name}: {needed} ns of monitor polls do not fit after {start} in event {event.seq}"
            )
        out = []
        for mon in due:
            tx = self.bus.poll(NodeAddress(mon.node, mon.prop.rca), b"", max(start, self.bus.free_at))
            out.append(tx)
            self.report.monitor_polls += 1
            if tx.end > period_end:
                self.report.period_overruns += 1
            sample = self._sample(mon, tx)
            mon.samples += 1
            self.collector(mon.channel).collect(sample)
            for listener in mon.listeners:
                listener(sample)
        self._note_occupancy(event.seq)
        return out

    def _sample(self, mon: PolledMonitor, tx: BusTransaction) -> Sample:
        seq, offset = self.clock.decompose(tx.end)
        if tx.timed_out:
            self.report.monitor_timeouts += 1
            return Sample(mon.device, mon.prop.name, None, TIMEOUT, seq, offset)
        value = mon.prop.codec_obj.decode(tx.response.payload)
        quality = OK if mon.prop.in_range(value) else RANGE
        return Sample(mon.device, mon.prop.name, value, quality, seq, offset)

    # immediate traffic
    def transact(self, addr: NodeAddress, payload: bytes = b"", at: Optional[ArrayTime] = None) -> BusTransaction:
        if at is None:
            at = self.slave.now() if self.slave.synchronized else ArrayTime(self.clock.epoch.tai_ns)
        return self.bus.poll(addr, payload, max(at, self.bus.free_at))

    def read(self, addr: NodeAddress, at: Optional[ArrayTime] = None) -> BusTransaction:
        tx = self.transact(addr, b"", at)
        if tx.timed_out:
            raise BusTimeout(f"{self.name}: no answer from node {addr.node} rca {addr.rca:#x}", tx)
        return tx

    def _note_occupancy(self, period_seq: int) -> None:
        if period_seq < 0:
            return
        occ = self.bus.occupancy(period_seq)
        if occ > self.report.max_occupancy_ns:
            self.report.max_occupancy_ns = occ
