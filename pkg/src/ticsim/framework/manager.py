"""Naming, lifecycle and client access to devices and their properties."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

from ..errors import BusTimeout, Late, NameNotFound, Past, RangeError, UsageError
from ..executive import Abm, Executive, PolledMonitor, Rejection, SubmitResult, TimedCommand
from ..monitor_stream import OK, RANGE
from ..simbus import NodeAddress
from ..timebase import ArrayTime
from .alarms import AlarmSpec, AlarmTracker
from .config import PERSISTENT, Registry
from .devices import DeviceController, make_controller


@dataclass(frozen=True)
class MonitorSpec:
    device: str
    property: str
    period_events: int = 1
    channel: str = "monitor"


@dataclass(frozen=True)
class Reading:
    value: object
    timestamp: ArrayTime
    quality: str = OK


class DeviceHandle:
    """Client reference to a device; release exactly once."""

    _ids = itertools.count()

    def __init__(self, manager: "Manager", name: str):
        self.manager = manager
        self.name = name
        self.id = next(self._ids)
        self.released = False

    @property
    def device(self) -> DeviceController:
        if self.released:
            raise UsageError(f"handle {self.id} on {self.name} was released")
        return self.manager.controller(self.name)

    def __repr__(self):
        state = "released" if self.released else "live"
        return f"<DeviceHandle {self.name} #{self.id} {state}>"


class Manager:
    """In-process stand-in for the object manager of the control middleware.

    Persistent devices are created by :meth:`start`; transient ones on the
    first :meth:`resolve` and destroyed when their last handle is released.
    """

    def __init__(self, registry: Registry, abms: dict, executive: Executive,
                 time_source: Optional[Callable[[], ArrayTime]] = None):
        self.registry = registry
        self.executive = executive
        self.abms: dict[str, Abm] = {}
        for spec in registry.devices:
            if spec.bus is not None:
                abm = abms[spec.bus]
                self.abms[spec.name] = abm
                abm.attach_device(spec)
                executive.route(spec.name, abm)
        self.time_source = time_source or (lambda: executive.clock.epoch)
        self.refcounts: dict[str, int] = {}
        self.live: dict[str, DeviceController] = {}
        self.instantiations: dict[str, int] = {}
        self.alarm_events: list = []
        self._monitors: dict[int, tuple] = {}
        self._monitor_ids = itertools.count()
        self._device_monitors: dict[str, list] = {}
        self._alarms: dict[int, AlarmTracker] = {}
        self._alarm_ids = itertools.count()
        self._children: dict[str, list] = {}

    # lifecycle
    def start(self) -> None:
        for spec in self.registry.devices:
            if spec.lifecycle == PERSISTENT and spec.name not in self.live:
                self._instantiate(spec.name)

    def controller(self, name: str) -> DeviceController:
        try:
            return self.live[name]
        except KeyError:
            raise UsageError(f"device {name} is not instantiated") from None

    def resolve(self, name: str) -> DeviceHandle:
        spec = self.registry.device(name)
        if name not in self.live:
            self._instantiate(spec.name)
        self.refcounts[name] = self.refcounts.get(name, 0) + 1
        return DeviceHandle(self, name)

    def release(self, handle: DeviceHandle) -> None:
        if handle.released:
            raise UsageError(f"handle {handle.id} on {handle.name} released twice")
        handle.released = True
        self.refcounts[handle.name] -= 1
        spec = self.registry.device(handle.name)
        if self.refcounts[handle.name] == 0 and spec.lifecycle != PERSISTENT:
            self._destroy(handle.name)

    def _instantiate(self, name: str) -> None:
        spec = self.registry.device(name)
        abm = self.abms.get(name)
        ctl = make_controller(spec, abm.port(spec) if abm else None)
        self.live[name] = ctl
        self.instantiations[name] = self.instantiations.get(name, 0) + 1
        if abm is not None:
            abm.controllers[name] = ctl
        self._children[name] = [self.resolve(c.name) for c in self.registry.children(name)]
        ctl.on_instantiate()
        for prop in spec.properties:
            if prop.monitor_period_events:
                self.attach_monitor(MonitorSpec(name, prop.name, prop.monitor_period_events))
                if prop.alarm is not None:
                    a = prop.alarm
                    self.attach_alarm(AlarmSpec(name, prop.name, a.lo, a.hi, a.hysteresis))

    def _destroy(self, name: str) -> None:
        for mid in self._device_monitors.pop(name, []):
            self.detach_monitor(mid)
        ctl = self.live.pop(name)
        ctl.on_destroy()
        abm = self.abms.get(name)
        if abm is not None:
            abm.controllers.pop(name, None)
        for child in self._children.pop(name, []):
            self.release(child)

    # property access
    def _check(self, handle: DeviceHandle, prop: str):
        if handle.released:
            raise UsageError(f"handle {handle.id} on {handle.name} was released")
        spec = self.registry.device(handle.name)
        if not spec.has_prop(prop):
            raise NameNotFound(f"{handle.name} has no property {prop!r}")
        return spec, spec.prop(prop)

    def get_property(self, handle: DeviceHandle, prop: str, at: Optional[ArrayTime] = None) -> Reading:
        spec, p = self._check(handle, prop)
        tx = self.abms[spec.name].read(NodeAddress(spec.node, p.rca), at or self.time_source())
        value = p.codec_obj.decode(tx.response.payload)
        return Reading(value, tx.end, OK if p.in_range(value) else RANGE)

    def set_property(self, handle: DeviceHandle, prop: str, value, at_event: Optional[int] = None,
                     client: int = 0):
        spec, p = self._check(handle, prop)
        if not p.writable:
            raise UsageError(f"{spec.name}:{prop} is read-only")
        if not p.in_range(value):
            raise RangeError(f"{spec.name}:{prop} value {value} outside {list(p.range)}")
        payload = p.codec_obj.encode(value)
        if at_event is None:
            tx = self.abms[spec.name].transact(NodeAddress(spec.node, p.rca), payload, self.time_source())
            if tx.timed_out:
                raise BusTimeout(f"{spec.name}:{prop} write not acknowledged", tx)
            return tx
        return self._submit(TimedCommand(spec.name, prop, payload, at_event, spec.slot, client))

    def call(self, handle: DeviceHandle, method: str, argument, at_event: int, client: int = 0) -> SubmitResult:
        """Time-tagged method invocation, e.g. ``set_phase_function`` on an FTS."""
        ctl = handle.device
        if method not in ctl.methods:
            raise NameNotFound(f"{handle.name} has no method {method!r}")
        ctl.validate_call(method, argument)
        spec = self.registry.device(handle.name)
        return self._submit(TimedCommand(spec.name, method, argument, at_event, spec.slot, client))

    def _submit(self, cmd: TimedCommand) -> SubmitResult:
        result = self.executive.submit(cmd, self.executive.now_event(self.time_source()))
        if not result.accepted:
            exc = Late if result.reason is Rejection.LATE else Past
            raise exc(result.reason.value, cmd)
        return result

    # monitors and alarms
    def attach_monitor(self, mspec: MonitorSpec) -> int:
        spec = self.registry.device(mspec.device)
        p = spec.prop(mspec.property)
        if mspec.period_events < 1:
            raise UsageError("monitor period must be at least one event")
        if mspec.device not in self.live:
            raise UsageError(f"device {mspec.device} is not instantiated")
        abm = self.abms[spec.name]
        start = abm.slave.seq if abm.slave.synchronized else 0
        pm = PolledMonitor(spec.name, p, spec.node, mspec.period_events, start, mspec.channel)
        local_id = abm.add_monitor(pm)
        mid = next(self._monitor_ids)
        self._monitors[mid] = (abm, local_id, pm)
        self._device_monitors.setdefault(spec.name, []).append(mid)
        return mid

    def detach_monitor(self, monitor_id: int) -> None:
        abm, local_id, _ = self._monitors.pop(monitor_id)
        abm.remove_monitor(local_id)

    def monitor(self, monitor_id: int) -> PolledMonitor:
        return self._monitors[monitor_id][2]

    def attach_alarm(self, aspec: AlarmSpec) -> int:
        for abm, _, pm in self._monitors.values():
            if pm.device == aspec.device and pm.prop.name == aspec.property:
                break
        else:
            raise UsageError(f"no monitor on {aspec.device}:{aspec.property} to attach an alarm to")
        aid = next(self._alarm_ids)
        tracker = AlarmTracker(aspec, aid, self.alarm_events)
        self._alarms[aid] = tracker
        pm.listeners.append(tracker)
        return aid
