"""Hardware endpoints on the bus and the software controllers that drive them.

A hardware model is always present on its bus; a controller is the software
proxy the manager creates and destroys according to the device lifecycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..simbus import LATCH_FLAG, BusModel, frame_duration
from ..timebase import ArrayTime, TimingEvent
from .codecs import exact
from .config import DeviceSpec


@dataclass(frozen=True)
class LatchRecord:
    seq: int
    rca: int
    raw: int
    received_ns: int


class GenericHardware:
    """Register-file device. Read-only properties may follow a triangle waveform.

    ``params.waveforms`` maps a property name to ``{"base", "amplitude",
    "period_s"}`` in engineering units.
    """

    def __init__(self, spec: DeviceSpec):
        self.spec = spec
        self._props = {p.rca: p for p in spec.properties}
        self.registers = {}
        for p in spec.properties:
            default = p.default if p.default is not None else 0
            self.registers[p.rca] = p.codec_obj.to_raw(default)
        self._waves = {}
        for name, w in spec.params.get("waveforms", {}).items():
            p = spec.prop(name)
            codec = p.codec_obj
            self._waves[p.rca] = (
                codec.to_raw(w["base"]),
                codec.to_raw(w["amplitude"]),
                int(exact(w["period_s"]) * 1_000_000_000),
            )
        self.staged = []
        self.latch_log: list[LatchRecord] = []
        self.immediate_log = []
        self.reads = 0

    def raw_value(self, rca: int, at: ArrayTime) -> int:
        wave = self._waves.get(rca)
        if wave is None:
            return self.registers[rca]
        base, amp, period = wave
        phase = at.tai_ns % period
        # triangle in [-amp, amp], integer arithmetic only
        return base + (amp * (2 * abs(2 * phase - period) - period)) // period

    def handle(self, rca: int, payload: bytes, at: ArrayTime) -> Optional[bytes]:
        reg = rca & ~LATCH_FLAG
        p = self._props.get(reg)
        if p is None:
            return None
        codec = p.codec_obj
        if not payload:
            self.reads += 1
            raw = self.raw_value(reg, at)
            # a sensor may legitimately report outside its declared range
            raw = max(codec.raw_min, min(codec.raw_max, raw))
            return codec.pack(raw)
        if len(payload) != codec.nbytes or not p.writable:
            return None
        raw = codec.unpack(payload)
        if rca & LATCH_FLAG:
            self.staged.append((at.tai_ns, reg, raw))
        else:
            self.registers[reg] = raw
            self.immediate_log.append((at.tai_ns, reg, raw))
        return b""

    def on_pulse(self, event: TimingEvent) -> None:
        if not self.staged:
            return
        keep = []
        for received, reg, raw in self.staged:
            if received <= event.tai.tai_ns:
                self.registers[reg] = raw
                self.latch_log.append(LatchRecord(event.seq, reg, raw, received))
            else:
                keep.append((received, reg, raw))
        self.staged = keep

    def value_at_event(self, rca: int, seq: int) -> Optional[int]:
        """Latched register value in force right after pulse ``seq``."""
        value = None
        for rec in self.latch_log:
            if rec.rca == rca and rec.seq <= seq:
                value = rec.raw
        return value


class DeviceController:
    """Software proxy for one device, living on the computer that owns its bus."""

    methods: tuple = ()

    def __init__(self, spec: DeviceSpec, port):
        self.spec = spec
        self.port = port
        self.alive = True

    def on_instantiate(self) -> None:
        pass

    def on_destroy(self) -> None:
        self.alive = False

    def per_event(self, seq: int) -> list:
        """Register writes to latch at pulse ``seq``; computed one period ahead."""
        return []

    def expand(self, member: str, value, execute_event: int) -> list:
        p = self.spec.prop(member)
        return [(p.rca, value)]

    def validate_call(self, member: str, value) -> None:
        pass

    def control_budget_ns(self, model: BusModel) -> int:
        return 0


class GenericController(DeviceController):
    pass


class CompositeController(DeviceController):
    """Groups child devices; has no hardware of its own."""


def write_cost_ns(nbytes: int, model: BusModel) -> int:
    return frame_duration(nbytes, model) + frame_duration(0, model)


def make_hardware(spec: DeviceSpec):
    if spec.kind == "fts":
        from ..fts import FtsHardware

        return FtsHardware(spec)
    if spec.kind == "generic":
        return GenericHardware(spec)
    return None


def make_controller(spec: DeviceSpec, port) -> DeviceController:
    if spec.kind == "fts":
        from ..fts import FtsController

        return FtsController(spec, port)
    if spec.kind == "composite":
        return CompositeController(spec, port)
    return GenericController(spec, port)
