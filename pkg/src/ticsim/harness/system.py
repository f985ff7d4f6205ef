"""Array topology assembled from a configuration registry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..executive import Abm, Executive, LeadPolicy
from ..framework.config import Registry
from ..framework.devices import make_hardware
from ..framework.manager import Manager
from ..monitor_stream import Broker
from ..simbus import BusModel, CanBus
from ..timebase import ArrayTime, MasterClock, TimingEvent


@dataclass
class System:
    registry: Registry
    clock: MasterClock
    buses: dict
    abms: dict  # bus name -> Abm
    hardware: dict  # device name -> endpoint
    executive: Executive
    manager: Manager
    broker: Broker
    now: ArrayTime = field(default=ArrayTime(0))
    seq: int = -1

    def hardware_pulse(self, event: TimingEvent) -> None:
        for hw in self.hardware.values():
            hw.on_pulse(event)

    def start(self) -> None:
        """Pulse 0: latch hardware, sync every ABM, create persistent devices."""
        event = self.clock.event(0)
        self.now = event.tai
        self.seq = 0
        self.hardware_pulse(event)
        for abm in self.abms.values():
            abm.sync(0, event.tai)
        self.manager.start()
        for abm in self.abms.values():
            abm.cycle()

    def step(self) -> TimingEvent:
        """Advance one timing event with zero pulse-delivery jitter."""
        if self.seq < 0:
            self.start()
            return self.clock.event(0)
        event = self.clock.event(self.seq + 1)
        self.seq, self.now = event.seq, event.tai
        self.hardware_pulse(event)
        for abm in self.abms.values():
            abm.pulse(event.tai)
        return event

    def run_events(self, n: int) -> None:
        for _ in range(n):
            self.step()

    def abm_for(self, device: str) -> Abm:
        return self.abms[self.registry.device(device).bus]


def build_system(registry: Registry, lead: LeadPolicy = LeadPolicy(), transport=None,
                 broker: Optional[Broker] = None, keep_bus_log: bool = False) -> System:
    clock = MasterClock(ArrayTime(registry.epoch_ns))
    broker = broker or Broker()
    buses, abms = {}, {}
    masters = [b.master for b in registry.buses]
    for b in registry.buses:
        model = BusModel(b.bitrate_bps, response_timeout_ns=b.response_timeout_ns)
        bus = CanBus(b.name, model, keep_log=keep_bus_log, epoch_ns=registry.epoch_ns)
        bus.free_at = clock.epoch
        buses[b.name] = bus
        name = b.master if masters.count(b.master) == 1 else f"{b.master}:{b.name}"
        abms[b.name] = Abm(name, bus, clock, broker=broker)
    hardware = {}
    for spec in registry.devices:
        hw = make_hardware(spec)
        if hw is not None:
            buses[spec.bus].register(spec.node, hw)
            hardware[spec.name] = hw
    executive = Executive(lead, clock, transport)
    system = System(registry, clock, buses, abms, hardware, executive, None, broker, clock.epoch)
    system.manager = Manager(registry, abms, executive, time_source=lambda: system.now)
    return system
