"""Polled CAN bus at 1 Mbps with a fixed per-frame cost model.

The master sends a request frame to ``(node, rca)``; the endpoint answers
with one response frame. A request with no payload is a monitor read, a
request carrying data is a control write answered by an empty ack frame.
Frame timing is exact integer nanoseconds.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Protocol

from .errors import BusBusy, DomainError
from .timebase import NS_PER_MS, NS_PER_S, PERIOD_NS, ArrayTime

NODE_BITS = 11
RCA_BITS = 18
ID_BITS = NODE_BITS + RCA_BITS
MAX_NODE = (1 << NODE_BITS) - 1
MAX_RCA = (1 << RCA_BITS) - 1

# Writes to rca | LATCH_FLAG are staged in the device and take effect on the
# next timing pulse instead of immediately.
LATCH_FLAG = 1 << (RCA_BITS - 1)

EXTENDED_FRAME_OVERHEAD_BITS = 67


@dataclass(frozen=True)
class NodeAddress:
    node: int
    rca: int

    def __post_init__(self):
        if not 0 <= self.node <= MAX_NODE:
            raise DomainError(f"node {self.node} outside 0..{MAX_NODE}")
        if not 0 <= self.rca <= MAX_RCA:
            raise DomainError(f"rca {self.rca:#x} outside 0..{MAX_RCA:#x}")


def encode_id(addr: NodeAddress) -> int:
    return (addr.node << RCA_BITS) | addr.rca


def decode_id(can_id: int) -> NodeAddress:
    if not 0 <= can_id < (1 << ID_BITS):
        raise DomainError(f"CAN id {can_id:#x} is not a 29-bit identifier")
    return NodeAddress(can_id >> RCA_BITS, can_id & MAX_RCA)


@dataclass(frozen=True)
class CanFrame:
    id: int
    payload: bytes = b""

    def __post_init__(self):
        if not 0 <= self.id < (1 << ID_BITS):
            raise DomainError(f"CAN id {self.id:#x} is not a 29-bit identifier")
        if len(self.payload) > 8:
            raise DomainError(f"CAN payload of {len(self.payload)} bytes exceeds 8")

    @property
    def dlc(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class BusModel:
    bitrate_bps: int = 1_000_000
    frame_overhead_bits: int = EXTENDED_FRAME_OVERHEAD_BITS
    response_timeout_ns: int = 1 * NS_PER_MS

    def __post_init__(self):
        if self.bitrate_bps <= 0:
            raise DomainError(f"bitrate must be positive, got {self.bitrate_bps}")

    def bits_to_ns(self, bits: int) -> int:
        ns, rem = divmod(bits * NS_PER_S, self.bitrate_bps)
        if rem:
            # Only exact bitrates are supported; the nanosecond grid must hold.
            raise DomainError(f"{bits} bits at {self.bitrate_bps} bps is not whole ns")
        return ns


def frame_duration(frame_or_dlc, model: BusModel = BusModel()) -> int:
    dlc = frame_or_dlc.dlc if isinstance(frame_or_dlc, CanFrame) else frame_or_dlc
    if not 0 <= dlc <= 8:
        raise DomainError(f"dlc {dlc} outside 0..8")
    return model.bits_to_ns(model.frame_overhead_bits + 8 * dlc)


def round_trip_ns(request_dlc: int, response_dlc: int, model: BusModel = BusModel()) -> int:
    return frame_duration(request_dlc, model) + frame_duration(response_dlc, model)


def max_polled_ops_per_second(model: BusModel = BusModel(), dlc: int = 8) -> Fraction:
    """Upper bound on request+response pairs per second with ``dlc`` bytes each way."""
    if not 0 <= dlc <= 8:
        raise DomainError(f"dlc {dlc} outside 0..8")
    return Fraction(model.bitrate_bps, 2 * (model.frame_overhead_bits + 8 * dlc))


class Endpoint(Protocol):
    def handle(self, rca: int, payload: bytes, at: ArrayTime) -> Optional[bytes]:
        """Answer a request; ``None`` means the device stays silent."""


@dataclass(frozen=True)
class BusTransaction:
    request: CanFrame
    response: Optional[CanFrame]
    start: ArrayTime
    end: ArrayTime

    @property
    def timed_out(self) -> bool:
        return self.response is None

    @property
    def duration_ns(self) -> int:
        return self.end - self.start


@dataclass
class CanBus:
    """One serialized master/slave bus with its transaction log."""

    name: str
    model: BusModel = field(default_factory=BusModel)
    keep_log: bool = True
    epoch_ns: int = 0

    def __post_init__(self):
        self._endpoints: dict[int, Endpoint] = {}
        self.free_at = ArrayTime(0)
        self.log: list[BusTransaction] = []
        self.transactions = 0
        self.timeouts = 0
        self._occupancy: dict[int, int] = defaultdict(int)

    def register(self, node: int, endpoint: Endpoint) -> None:
        NodeAddress(node, 0)
        if node in self._endpoints:
            raise DomainError(f"node {node} already registered on {self.name}")
        self._endpoints[node] = endpoint

    def endpoint(self, node: int) -> Optional[Endpoint]:
        return self._endpoints.get(node)

    def poll(self, addr: NodeAddress, request_payload: bytes, at: ArrayTime) -> BusTransaction:
        if at < self.free_at:
            raise BusBusy(f"{self.name}: start {at} before previous end {self.free_at}")
        request = CanFrame(encode_id(addr), bytes(request_payload))
        req_end = at + frame_duration(request, self.model)
        endpoint = self._endpoints.get(addr.node)
        reply = endpoint.handle(addr.rca, request.payload, req_end) if endpoint else None
        if reply is None:
            tx = BusTransaction(request, None, at, at + self.model.response_timeout_ns)
            self.timeouts += 1
        else:
            response = CanFrame(request.id, bytes(reply))
            tx = BusTransaction(request, response, at, req_end + frame_duration(response, self.model))
        self._record(tx)
        return tx

    def _record(self, tx: BusTransaction) -> None:
        self.free_at = tx.end
        self.transactions += 1
        if self.keep_log:
            self.log.append(tx)
        start, end = tx.start.tai_ns - self.epoch_ns, tx.end.tai_ns - self.epoch_ns
        while start < end:
            period = start // PERIOD_NS
            edge = min(end, (period + 1) * PERIOD_NS)
            self._occupancy[period] += edge - start
            start = edge

    def occupancy(self, period: int) -> int:
        """Bus-busy nanoseconds inside period ``period`` (epoch-relative)."""
        return self._occupancy.get(period, 0)

    def max_occupancy(self) -> int:
        return max(self._occupancy.values(), default=0)
