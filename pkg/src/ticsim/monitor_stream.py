"""Monitor sample collection, per-event batching, publish/subscribe and archiving."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional, TextIO

from .errors import ArchiveIoError
from .timebase import TimingEvent

OK = "ok"
RANGE = "range"
TIMEOUT = "timeout"

ARCHIVE_HEADER = "event_seq,offset_ns,device,property,value,quality"


@dataclass(frozen=True)
class Sample:
    device: str
    property: str
    value: object
    quality: str
    event_seq: int
    offset_ns: int

    @property
    def key(self) -> tuple:
        return (self.event_seq, self.offset_ns)

    def record(self) -> str:
        value = "" if self.value is None else repr(self.value)
        return f"{self.event_seq},{self.offset_ns},{self.device},{self.property},{value},{self.quality}"


@dataclass(frozen=True)
class Batch:
    source: str
    batch_seq: int
    event_seq: int
    samples: tuple


class Collector:
    """Per-computer buffer; one flush per timing event."""

    def __init__(self, source: str, broker: Optional["Broker"] = None, channel: str = "monitor"):
        self.source = source
        self.broker = broker
        self.channel = channel
        self.buffer: list[Sample] = []
        self.next_batch_seq = 0
        self.collected = 0

    def collect(self, sample: Sample) -> None:
        self.buffer.append(sample)
        self.collected += 1

    def flush(self, event: TimingEvent) -> Optional[Batch]:
        if not self.buffer:
            return None
        batch = Batch(self.source, self.next_batch_seq, event.seq, tuple(self.buffer))
        self.next_batch_seq += 1
        self.buffer = []
        if self.broker is not None:
            self.broker.publish(self.channel, batch)
        return batch


class Subscription:
    def __init__(self, channel: "Channel"):
        self.channel = channel
        self._queue: deque = deque()
        self.received = 0

    def _deliver(self, batch: Batch) -> None:
        self._queue.append(batch)
        self.received += 1

    def pending(self) -> int:
        return len(self._queue)

    def drain(self) -> Iterator[Batch]:
        while self._queue:
            yield self._queue.popleft()

    def close(self) -> None:
        self.channel.subscribers.discard(self)


@dataclass(eq=False)
class Channel:
    name: str
    subscribers: set = field(default_factory=set)
    published: int = 0
    samples: int = 0
    # subscription order, so fan-out is deterministic
    _order: list = field(default_factory=list)

    def publish(self, batch: Batch) -> None:
        self.published += 1
        self.samples += len(batch.samples)
        for sub in self._order:
            if sub in self.subscribers:
                sub._deliver(batch)

    def subscribe(self) -> Subscription:
        sub = Subscription(self)
        self.subscribers.add(sub)
        self._order.append(sub)
        return sub


class Broker:
    """Named channels created on first use."""

    def __init__(self):
        self.channels: dict[str, Channel] = {}

    def channel(self, name: str) -> Channel:
        if name not in self.channels:
            self.channels[name] = Channel(name)
        return self.channels[name]

    def subscribe(self, name: str) -> Subscription:
        return self.channel(name).subscribe()

    def publish(self, name: str, batch: Batch) -> None:
        self.channel(name).publish(batch)


class Archiver:
    """Archiving consumer: one CSV line per sample, header first."""

    def __init__(self, subscription: Subscription, sink: TextIO, header: bool = True):
        self.subscription = subscription
        self.sink = sink
        self.records = 0
        self._header = not header

    def _write(self, text: str) -> None:
        try:
            self.sink.write(text)
        except OSError as exc:
            raise ArchiveIoError(f"archive write failed: {exc}", self.records) from exc

    def pump(self) -> int:
        if not self._header:
            self._write(ARCHIVE_HEADER + "\n")
            self._header = True
        n = 0
        for batch in self.subscription.drain():
            if batch.samples:
                self._write("".join(s.record() + "\n" for s in batch.samples))
            n += len(batch.samples)
            self.records += len(batch.samples)
        return n


def archive(subscription: Subscription, sink: TextIO) -> int:
    """Write every pending batch of ``subscription`` to ``sink``; returns records written."""
    return Archiver(subscription, sink).pump()


def read_archive(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
