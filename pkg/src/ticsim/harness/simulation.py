"""Deterministic discrete-event run of the whole array.

All randomness (ACC->ABM latency and pulse-delivery jitter) comes from one
``random.Random(seed)``; everything else is a pure function of the inputs.
"""

from __future__ import annotations

import heapq
import io
import json
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import CommandRejected, Overcommitted, TicsError
from ..executive import DispatchReport, LeadPolicy, TimedCommand
from ..fts import PhaseFunction
from ..framework.alarms import RAISED, AlarmSpec
from ..framework.config import Registry, default_config_path, load_config_file
from ..framework.manager import MonitorSpec
from ..monitor_stream import Archiver
from ..timebase import ArrayTime
from .scenario import Scenario
from .system import System, build_system

# same-instant ordering
HW_PULSE, ARRIVAL, INTAKE, ABM_PULSE = range(4)


@dataclass
class RunReport:
    events: int = 0
    accepted: int = 0
    rejected: int = 0
    rejected_late: int = 0
    rejected_past: int = 0
    client_errors: int = 0
    violations: int = 0
    late_arrivals: int = 0
    misapplied: int = 0
    period_overruns: int = 0
    command_timeouts: int = 0
    clock_faults: int = 0
    window_overruns: int = 0
    orphaned: int = 0
    max_occupancy_ns: int = 0
    samples_collected: int = 0
    records_archived: int = 0
    batches_contiguous: bool = True
    channel_samples: dict = field(default_factory=dict)
    alarms_raised: int = 0
    alarms_cleared: int = 0
    wall_runtime_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


class Simulation:
    def __init__(self, scenario: Scenario, registry: Optional[Registry] = None):
        if registry is None:
            registry = load_config_file(scenario.config or default_config_path())
        self.scenario = scenario
        self.rng = random.Random(scenario.seed)
        self.system: System = build_system(
            registry, LeadPolicy(scenario.min_lead_events), transport=self._send
        )
        self.clock = self.system.clock
        self.manager = self.system.manager
        self._heap: list = []
        self._tie = 0
        self.handles: dict = {}
        self.accepted: list[TimedCommand] = []
        self.rejected: list = []
        self.errors: list = []
        self.batch_seqs: dict = {}
        self.batches_contiguous = True
        self.system.broker.channel("monitor")
        self._taps = []
        self._now = 0

    # event queue
    def _push(self, t: ArrayTime, prio: int, fn, *args) -> None:
        heapq.heappush(self._heap, (t.tai_ns, prio, self._tie, fn, args))
        self._tie += 1

    def _send(self, cmd: TimedCommand, abm, send_time: ArrayTime) -> None:
        lo, hi = self.scenario.latency_ns
        arrival = send_time + self.rng.randrange(lo, hi)
        self._push(arrival, ARRIVAL, abm.enqueue, cmd, arrival)

    def _hardware_pulse(self, seq: int) -> None:
        event = self.clock.event(seq)
        self.system.now = event.tai
        self.system.seq = seq
        self.system.hardware_pulse(event)
        if seq == 0:
            for abm in self.system.abms.values():
                abm.sync(0, event.tai)
            self.manager.start()
        lo, hi = self.scenario.pulse_jitter_ns
        for abm in self.system.abms.values():
            jitter = 0 if seq == 0 else self.rng.randrange(lo, hi)
            self._push(event.tai + jitter, ABM_PULSE, self._abm_pulse, abm, seq)
        if seq + 1 < self.scenario.events:
            self._push(self.clock.event_time(seq + 1), HW_PULSE, self._hardware_pulse, seq + 1)

    def _abm_pulse(self, abm, seq: int) -> None:
        if seq == 0:
            abm.cycle()
        else:
            abm.pulse(ArrayTime(self._now))
        for archiver in self._taps:
            archiver.pump()

    # client script
    def _handle(self, device: str):
        if device not in self.handles:
            self.handles[device] = self.manager.resolve(device)
        return self.handles[device]

    def _intake(self, step: dict) -> None:
        now_event = self.clock.event_at_or_after(ArrayTime(step["at_ns"]))
        op, device = step["op"], step["device"]
        client = step.get("client", 0)
        at_event = step.get("at_event")
        if at_event is None and "lead_events" in step:
            at_event = now_event + step["lead_events"]
        try:
            h = self._handle(device)
            if op == "set":
                res = self.manager.set_property(h, step["property"], step["value"], at_event, client)
                if at_event is not None:
                    self.accepted.append(res.command)
            elif op == "phase_function":
                pf = PhaseFunction(step.get("phi0", 0.0), step.get("f", 0.0), step.get("fdot", 0.0))
                res = self.manager.call(h, "set_phase_function", pf, at_event, client)
                self.accepted.append(res.command)
            elif op == "monitor":
                self.manager.attach_monitor(MonitorSpec(device, step["property"], step["period_events"],
                                                        step.get("channel", "monitor")))
            elif op == "alarm":
                self.manager.attach_alarm(AlarmSpec(device, step["property"], step["lo"], step["hi"],
                                                    step.get("hysteresis", 0.0)))
        except CommandRejected as exc:
            self.rejected.append((exc.command, exc.reason))
        except Overcommitted:
            # the run cannot keep its timing guarantees; stop it
            raise
        except TicsError as exc:
            self.errors.append((step, exc))

    # run
    def run(self, archive_sink=None) -> RunReport:
        wall = time.perf_counter()
        sink = archive_sink if archive_sink is not None else io.StringIO()
        archivers = {}
        # channels share one archive file, so only the first writes the header
        for i, name in enumerate(sorted(self._channels())):
            archivers[name] = Archiver(self.system.broker.subscribe(name), sink, header=i == 0)
        self._taps = list(archivers.values())
        tap = self.system.broker.subscribe("monitor")

        if self.scenario.events > 0:
            self._push(self.clock.event_time(0), HW_PULSE, self._hardware_pulse, 0)
        for i, step in enumerate(sorted(self.scenario.script,
                                        key=lambda s: (s["at_ns"], s.get("client", 0)))):
            t = self.clock.event_time(self.clock.event_at_or_after(ArrayTime(step["at_ns"])))
            self._push(t, INTAKE, self._intake, step)

        end_ns = self.clock.event_time(self.scenario.events).tai_ns
        while self._heap and self._heap[0][0] < end_ns:
            t, _, _, fn, args = heapq.heappop(self._heap)
            self._now = t
            self.system.now = ArrayTime(t)
            fn(*args)

        final = self.clock.event(self.scenario.events)
        for abm in self.system.abms.values():
            for collector in abm.collectors.values():
                collector.flush(final)
        for archiver in self._taps:
            archiver.pump()
        for batch in tap.drain():
            self._check_batch(batch)

        report = self._report()
        report.records_archived = sum(a.records for a in archivers.values())
        report.batches_contiguous = self.batches_contiguous
        report.wall_runtime_s = round(time.perf_counter() - wall, 3)
        self.report = report
        return report

    def _channels(self) -> set:
        names = {"monitor"}
        for step in self.scenario.script:
            if step["op"] == "monitor":
                names.add(step.get("channel", "monitor"))
        return names

    def _check_batch(self, batch) -> None:
        expected = self.batch_seqs.get(batch.source, 0)
        if batch.batch_seq != expected:
            self.batches_contiguous = False
        self.batch_seqs[batch.source] = batch.batch_seq + 1

    def misapplied(self) -> int:
        """Dispatched writes that did not latch exactly at their tagged event."""
        bad = 0
        for abm in self.system.abms.values():
            latched = {}
            for exp in abm.expectations:
                if exp.device not in latched:
                    hw = self.system.hardware[exp.device]
                    latched[exp.device] = {(r.rca, r.received_ns): r.seq for r in hw.latch_log}
                if latched[exp.device].get((exp.rca, exp.received_ns)) != exp.execute_event:
                    # writes for the final event are still staged when the run stops
                    if exp.execute_event < self.scenario.events:
                        bad += 1
        return bad

    def _report(self) -> RunReport:
        d = DispatchReport()
        for abm in self.system.abms.values():
            d = d.merge(abm.report)
        ex = self.system.executive.report
        r = RunReport(events=self.scenario.events)
        r.accepted, r.rejected_late, r.rejected_past = ex.accepted, ex.rejected_late, ex.rejected_past
        r.rejected = ex.rejected
        r.client_errors = len(self.errors)
        r.late_arrivals = d.late_arrivals
        r.period_overruns = d.period_overruns
        r.command_timeouts = d.command_timeouts
        r.window_overruns = d.window_overruns
        r.orphaned = d.orphaned
        r.misapplied = self.misapplied()
        r.clock_faults = sum(a.clock_faults for a in self.system.abms.values())
        r.violations = (r.late_arrivals + r.period_overruns + r.command_timeouts
                        + r.misapplied + r.clock_faults)
        r.max_occupancy_ns = max((b.max_occupancy() for b in self.system.buses.values()), default=0)
        r.samples_collected = sum(c.collected for a in self.system.abms.values()
                                  for c in a.collectors.values())
        r.channel_samples = {n: c.samples for n, c in sorted(self.system.broker.channels.items())}
        r.alarms_raised = sum(1 for e in self.manager.alarm_events if e.kind == RAISED)
        r.alarms_cleared = len(self.manager.alarm_events) - r.alarms_raised
        return r


def run(scenario: Scenario, out_dir=None, registry: Optional[Registry] = None):
    """Run ``scenario``; with ``out_dir`` write archive.csv and report.json there."""
    sim = Simulation(scenario, registry)
    if out_dir is None:
        report = sim.run()
        return sim, report
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    archive_path = out / "archive.csv"
    try:
        with open(archive_path, "w", encoding="utf-8", newline="\n") as fh:
            report = sim.run(fh)
    except OSError:
        (out / "archive.csv.partial").write_text("archive write failed; file is incomplete\n")
        raise
    (out / "report.json").write_text(report.to_json() + "\n")
    return sim, report
