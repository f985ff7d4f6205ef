"""Fine Tuning Synthesizer: fringe-tracking phase generator and phase switching.

Hardware model
--------------
* A 48-bit phase accumulator (fraction of a turn) is stepped every 250 us,
  192 steps per timing event. The top 32 bits are the output phase word.
* The frequency word is the per-step increment in units of 2**-48 turn
  (signed, 48 bits). The chirp word (signed, 32 bits) is added to the
  frequency word after every step, giving a piecewise-quadratic phase.
* Every register write is staged and takes effect on a timing pulse.
* Phase switching adds a quadrant (0..3 times 90 deg) taken from a
  4096-slot pattern of 250 us slots. A new pattern only becomes active on
  an event whose seq is a multiple of 64 (3.072 s = three 1.024 s cycles).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, RangeError
from .framework.codecs import exact
from .framework.devices import DeviceController, LatchRecord, write_cost_ns
from .simbus import LATCH_FLAG, BusModel
from .timebase import NS_PER_S, NS_PER_US, PERIOD_NS, ArrayTime, TimingEvent

SLOT_NS = 250 * NS_PER_US
FAST_SLOTS = 64
PATTERN_SLOTS = FAST_SLOTS * FAST_SLOTS
PATTERN_PERIOD_NS = PATTERN_SLOTS * SLOT_NS
STEPS_PER_EVENT = PERIOD_NS // SLOT_NS
PATTERN_EPOCH_EVENTS = 64

FTS_TIME_SCALES = {
    "shortest_switch_interval": SLOT_NS,
    "fast_switch_period": FAST_SLOTS * SLOT_NS,
    "chirp_update": PERIOD_NS,
    "slow_switch_period": PATTERN_PERIOD_NS,
    "fast_switch_calibration": 10 * NS_PER_S,
    "fringe_frequency_update": 100 * NS_PER_S,
}

ACC_BITS = 48
ACC_MOD = 1 << ACC_BITS
PHASE_WORD_BITS = 32
GUARD_BITS = ACC_BITS - PHASE_WORD_BITS
FREQ_BITS = 48
CHIRP_BITS = 32

# CAN map
RCA_PHASE = 0x01
RCA_FREQ = 0x02
RCA_CHIRP = 0x03
RCA_PATTERN = 0x04
RCA_STATUS = 0x10

REGISTER_WIDTH = {RCA_PHASE: 4, RCA_FREQ: 6, RCA_CHIRP: 4, RCA_PATTERN: 1, RCA_STATUS: 8}

STEP_S = Fraction(SLOT_NS, NS_PER_S)


def _signed(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >> (bits - 1) else value


# -- phase switching -------------------------------------------------------


def walsh(k: int, n: int) -> tuple:
    """Walsh function ``k`` of length ``n`` in natural (Hadamard) order."""
    if n < 1 or n & (n - 1):
        raise DomainError(f"length {n} is not a power of two")
    if not 0 <= k < n:
        raise DomainError(f"walsh index {k} outside 0..{n - 1}")
    return tuple(-1 if (k & i).bit_count() & 1 else 1 for i in range(n))


@dataclass(frozen=True)
class PhaseSwitchPattern:
    walsh_index: int
    slots: tuple  # quadrant 0..3 per 250 us slot

    @property
    def fast_bits(self) -> tuple:
        return tuple(q >> 1 for q in self.slots[:FAST_SLOTS])

    @property
    def slow_bits(self) -> tuple:
        return tuple(self.slots[j * FAST_SLOTS] & 1 for j in range(FAST_SLOTS))

    def quadrant(self, slot: int) -> int:
        return self.slots[slot % PATTERN_SLOTS]


@lru_cache(maxsize=64)
def build_pattern(k: int) -> PhaseSwitchPattern:
    """Four-valued switching sequence: 180 deg from the fast cycle, 90 deg from the slow one."""
    if not 1 <= k <= 63:
        raise DomainError(f"walsh index {k} outside 1..63")
    bits = [0 if w > 0 else 1 for w in walsh(k, FAST_SLOTS)]
    slots = tuple(2 * bits[s % FAST_SLOTS] + bits[s // FAST_SLOTS] for s in range(PATTERN_SLOTS))
    return PhaseSwitchPattern(k, slots)


def cross_demod(a: PhaseSwitchPattern, b: PhaseSwitchPattern) -> complex:
    """Sum of exp(i(phi_a - phi_b)) over all slots, counted exactly on the quadrant lattice."""
    if len(a.slots) != len(b.slots):
        raise DomainError("patterns differ in length")
    counts = np.bincount(
        (np.asarray(a.slots) - np.asarray(b.slots)) % 4, minlength=4
    ).tolist()
    return complex(counts[0] - counts[2], counts[1] - counts[3])


def demod_matrix(indices: Sequence[int]) -> tuple:
    """Exact (real, imag) integer matrices of cross_demod over ``indices``."""
    q = np.array([build_pattern(k).slots for k in indices], dtype=np.int64)
    n = len(indices)
    re = np.zeros((n, n), dtype=np.int64)
    im = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        d = (q[i] - q) % 4
        re[i] = (d == 0).sum(axis=1) - (d == 2).sum(axis=1)
        im[i] = (d == 1).sum(axis=1) - (d == 3).sum(axis=1)
    return re, im


# -- fringe tracking -------------------------------------------------------


@dataclass(frozen=True)
class PhaseFunction:
    """phase(t) = phi0 + f (t - t0) + fdot (t - t0)**2 / 2, with t0 the epoch event's pulse."""

    phi0: float = 0.0
    f: float = 0.0
    fdot: float = 0.0
    epoch_event: int = 0

    def turns_at(self, dt_s: Fraction) -> Fraction:
        """Exact phase in turns ``dt_s`` seconds after the epoch event."""
        return exact(self.phi0) + exact(self.f) * dt_s + exact(self.fdot) * dt_s * dt_s / 2

    def frequency_at(self, dt_s: Fraction) -> Fraction:
        return exact(self.f) + exact(self.fdot) * dt_s

    def turns_at_event(self, seq: int) -> Fraction:
        return self.turns_at(Fraction((seq - self.epoch_event) * PERIOD_NS, NS_PER_S))


def quantize_phase(turns) -> int:
    """Nearest 32-bit phase word for a phase in turns (wrapped modulo one turn)."""
    return round(exact(turns) * (1 << PHASE_WORD_BITS)) % (1 << PHASE_WORD_BITS)


def chirp_word_for(fdot) -> int:
    c = round(exact(fdot) * STEP_S * STEP_S * ACC_MOD)
    if not -(1 << (CHIRP_BITS - 1)) <= c < (1 << (CHIRP_BITS - 1)):
        raise RangeError(f"fdot {fdot} turns/s^2 overflows the chirp word")
    return c


def _check_freq(word: int) -> int:
    if not -(1 << (FREQ_BITS - 1)) <= word < (1 << (FREQ_BITS - 1)):
        raise RangeError(f"frequency word {word} overflows {FREQ_BITS} bits")
    return word


@dataclass(frozen=True)
class TrackingState:
    """Accumulator registers at an anchor pulse; advances in closed form."""

    acc: int = 0
    freq: int = 0
    chirp: int = 0

    def acc_after(self, steps: int) -> int:
        return (self.acc + steps * self.freq + self.chirp * (steps * (steps - 1) // 2)) % ACC_MOD

    def freq_after(self, steps: int) -> int:
        return _signed(self.freq + steps * self.chirp, FREQ_BITS)

    def advance(self, steps: int) -> "TrackingState":
        return TrackingState(self.acc_after(steps), self.freq_after(steps), self.chirp)


@dataclass(frozen=True)
class TrackingWords:
    freq_word: int
    chirp_word: int
    phase_word: Optional[int] = None


@dataclass(frozen=True)
class FtsLatch:
    """Register state across one pulse that carried writes."""

    seq: int
    pre_acc: int
    state: TrackingState


class FtsHardware:
    """The FTS as seen from the bus: staged registers, latched on the precise pulse."""

    def __init__(self, spec=None):
        self.spec = spec
        self.state = TrackingState()
        self.anchor_seq = 0
        self.anchor_ns = 0
        self.pattern_register = 0
        self.pending_pattern: Optional[int] = None
        self.pattern: Optional[PhaseSwitchPattern] = None
        self.pattern_epoch_seq: Optional[int] = None
        self.pattern_epoch_ns = 0
        self.staged = []
        self.latch_log: list[LatchRecord] = []
        self.latches: list[FtsLatch] = []
        self.pulses = 0

    # register access over the bus
    def handle(self, rca: int, payload: bytes, at: ArrayTime) -> Optional[bytes]:
        reg = rca & ~LATCH_FLAG
        width = REGISTER_WIDTH.get(reg)
        if width is None:
            return None
        if not payload:
            return self._read(reg, at)
        if reg == RCA_STATUS or len(payload) != width:
            return None
        signed = reg in (RCA_FREQ, RCA_CHIRP)
        # every FTS register latches on a pulse, whatever the latch flag says
        self.staged.append((at.tai_ns, reg, int.from_bytes(payload, "big", signed=signed)))
        return b""

    def _read(self, reg: int, at: ArrayTime) -> bytes:
        if reg == RCA_PHASE:
            return self.phase_word(at).to_bytes(4, "big")
        if reg == RCA_FREQ:
            return self.state.freq_after(self._steps(at)).to_bytes(6, "big", signed=True)
        if reg == RCA_CHIRP:
            return self.state.chirp.to_bytes(4, "big", signed=True)
        if reg == RCA_PATTERN:
            return self.pattern_register.to_bytes(1, "big")
        status = (
            (self.pattern.walsh_index if self.pattern else 0) << 56
            | self.quadrant_at(at) << 48
            | self.phase_word(at) << 16
            | (self.pulses & 0xFFFF)
        )
        return status.to_bytes(8, "big")

    def on_pulse(self, event: TimingEvent) -> None:
        """Latch staged writes received by this pulse edge."""
        self.pulses += 1
        t = event.tai.tai_ns
        due = [w for w in self.staged if w[0] <= t]
        if due:
            self.staged = [w for w in self.staged if w[0] > t]
            pre = self.state.advance((event.seq - self.anchor_seq) * STEPS_PER_EVENT)
            acc, freq, chirp = pre.acc, pre.freq, pre.chirp
            for received, reg, raw in due:
                if reg == RCA_PHASE:
                    acc = raw << GUARD_BITS
                elif reg == RCA_FREQ:
                    freq = raw
                elif reg == RCA_CHIRP:
                    chirp = raw
                elif reg == RCA_PATTERN:
                    self.pattern_register = raw
                    self.pending_pattern = raw
                self.latch_log.append(LatchRecord(event.seq, reg, raw, received))
            self.state = TrackingState(acc, freq, chirp)
            self.anchor_seq, self.anchor_ns = event.seq, t
            self.latches.append(FtsLatch(event.seq, pre.acc, self.state))
        if self.pending_pattern is not None and event.seq % PATTERN_EPOCH_EVENTS == 0:
            k = self.pending_pattern
            self.pattern = build_pattern(k) if 1 <= k <= 63 else None
            self.pattern_epoch_seq, self.pattern_epoch_ns = event.seq, t
            self.pending_pattern = None

    # pure reads at an instant
    def _steps(self, at: ArrayTime) -> int:
        return (at.tai_ns - self.anchor_ns) // SLOT_NS

    def acc_at(self, at: ArrayTime) -> int:
        return self.state.acc_after(self._steps(at))

    def phase_word(self, at: ArrayTime) -> int:
        return self.acc_at(at) >> GUARD_BITS

    def tracking_phase(self, at: ArrayTime) -> Fraction:
        return Fraction(self.phase_word(at), 1 << PHASE_WORD_BITS)

    def quadrant_at(self, at: ArrayTime) -> int:
        if self.pattern is None or at.tai_ns < self.pattern_epoch_ns:
            return 0
        return self.pattern.quadrant((at.tai_ns - self.pattern_epoch_ns) // SLOT_NS)

    def sample_phase(self, at: ArrayTime) -> Fraction:
        """Output phase in turns (mod 1): tracking phase plus the switching quadrant."""
        return (self.tracking_phase(at) + Fraction(self.quadrant_at(at), 4)) % 1


class FtsController(DeviceController):
    """Device controller: programs the phase function and keeps the chirp current.

    With ``chirp`` enabled the controller only writes the frequency and chirp
    words each event and closes the loop on its own mirror of the hardware
    accumulator. With it disabled the tracking is piecewise linear: phase and
    instantaneous frequency are re-programmed at every event.
    """

    methods = ("set_phase_function",)

    def __init__(self, spec, port):
        super().__init__(spec, port)
        params = spec.params if spec is not None else {}
        self.walsh_index = params.get("walsh_index")
        self.chirp_enabled = params.get("chirp", True)
        self.function: Optional[PhaseFunction] = None
        self.mirror: Optional[TrackingState] = None
        self.mirror_seq = 0

    def on_instantiate(self) -> None:
        if self.walsh_index is not None and self.port is not None:
            self.port.transact(RCA_PATTERN, bytes([self.walsh_index]))

    def control_budget_ns(self, model: BusModel) -> int:
        if self.chirp_enabled:
            return write_cost_ns(6, model) + write_cost_ns(4, model)
        return write_cost_ns(4, model) + write_cost_ns(6, model)

    def validate_call(self, member: str, value) -> None:
        if member != "set_phase_function":
            return
        chirp_word_for(value.fdot)
        _check_freq(round(exact(value.f) * STEP_S * ACC_MOD))

    def expand(self, member: str, value, execute_event: int) -> list:
        if member != "set_phase_function":
            return super().expand(member, value, execute_event)
        pf = PhaseFunction(value.phi0, value.f, value.fdot, execute_event)
        self.validate_call(member, pf)
        self.function = pf
        phase = quantize_phase(pf.phi0)
        words = self._words(execute_event, phase << GUARD_BITS)
        self.mirror = TrackingState(phase << GUARD_BITS, words.freq_word, words.chirp_word)
        self.mirror_seq = execute_event
        return [
            (RCA_PHASE, phase.to_bytes(4, "big")),
            (RCA_FREQ, words.freq_word.to_bytes(6, "big", signed=True)),
            (RCA_CHIRP, words.chirp_word.to_bytes(4, "big", signed=True)),
        ]

    def per_event(self, seq: int) -> list:
        if self.function is None or seq <= self.function.epoch_event:
            return []
        words = self.chirp_update(seq)
        writes = []
        if words.phase_word is not None:
            writes.append((RCA_PHASE, words.phase_word.to_bytes(4, "big")))
        writes.append((RCA_FREQ, words.freq_word.to_bytes(6, "big", signed=True)))
        if self.chirp_enabled:
            writes.append((RCA_CHIRP, words.chirp_word.to_bytes(4, "big", signed=True)))
        return writes

    def chirp_update(self, seq: int) -> TrackingWords:
        """Words to latch at pulse ``seq`` so the event [seq, seq+1) follows the quadratic."""
        predicted = self.mirror.advance((seq - self.mirror_seq) * STEPS_PER_EVENT)
        words = self._words(seq, predicted.acc)
        acc = predicted.acc if words.phase_word is None else words.phase_word << GUARD_BITS
        self.mirror = TrackingState(acc, words.freq_word, words.chirp_word)
        self.mirror_seq = seq
        return words

    def _words(self, seq: int, acc: int) -> TrackingWords:
        pf = self.function
        dt = Fraction((seq - pf.epoch_event) * PERIOD_NS, NS_PER_S)
        f_now = pf.frequency_at(dt)
        if not self.chirp_enabled:
            phase = quantize_phase(pf.turns_at(dt))
            return TrackingWords(_check_freq(round(f_now * STEP_S * ACC_MOD)), 0, phase)
        chirp = chirp_word_for(pf.fdot)
        nominal = f_now * STEP_S * ACC_MOD + Fraction(chirp, 2)
        n = STEPS_PER_EVENT
        predicted_end = acc + n * nominal + chirp * (n * (n - 1) // 2)
        target_end = pf.turns_at_event(seq + 1) * ACC_MOD
        miss = (target_end - predicted_end + ACC_MOD // 2) % ACC_MOD - ACC_MOD // 2
        return TrackingWords(_check_freq(round(nominal + miss / n)), chirp)


def event_phase_errors(latch: FtsLatch, pf: PhaseFunction, next_seq: int) -> list:
    """|hardware - exact| in turns at each step n = 0..192*(next_seq - seq) after a latch.

    Steps the accumulator one addition at a time (no closed form), so it can
    serve as an independent check of ``TrackingState``.
    """
    acc, freq = latch.state.acc, latch.state.freq
    base = Fraction((latch.seq - pf.epoch_event) * PERIOD_NS, NS_PER_S)
    out = []
    for n in range((next_seq - latch.seq) * STEPS_PER_EVENT + 1):
        hw = Fraction(acc >> GUARD_BITS, 1 << PHASE_WORD_BITS)
        err = (hw - pf.turns_at(base + n * STEP_S)) % 1
        out.append(min(err, 1 - err))
        acc = (acc + freq) % ACC_MOD
        freq = _signed(freq + latch.state.chirp, FREQ_BITS)
    return out

