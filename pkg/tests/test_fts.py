from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import hadamard

from ticsim.errors import DomainError, Late, RangeError
from ticsim.framework.config import load_config
from ticsim.fts import (
    ACC_MOD,
    FAST_SLOTS,
    GUARD_BITS,
    PATTERN_PERIOD_NS,
    PATTERN_SLOTS,
    RCA_FREQ,
    RCA_PATTERN,
    RCA_PHASE,
    SLOT_NS,
    STEPS_PER_EVENT,
    FtsHardware,
    PhaseFunction,
    TrackingState,
    build_pattern,
    chirp_word_for,
    cross_demod,
    demod_matrix,
    event_phase_errors,
    quantize_phase,
    walsh,
)
from ticsim.harness.system import build_system
from ticsim.timebase import NS_PER_S, PERIOD_NS, MasterClock

from conftest import minimal_doc

CLOCK = MasterClock()


# -- switching functions ---------------------------------------------------


def test_walsh_examples():
    assert walsh(0, 64) == (1,) * 64
    assert walsh(1, 4) == (1, -1, 1, -1)
    assert sum(a * b for a, b in zip(walsh(3, 64), walsh(5, 64))) == 0


def test_walsh_matches_sylvester_hadamard():
    h = hadamard(64)
    for k in range(64):
        assert walsh(k, 64) == tuple(h[k])


@pytest.mark.parametrize("k, n", [(4, 4), (-1, 4), (0, 6), (0, 0)])
def test_walsh_domain(k, n):
    with pytest.raises(DomainError):
        walsh(k, n)


@pytest.mark.parametrize("k", [0, 64])
def test_pattern_index_domain(k):
    with pytest.raises(DomainError):
        build_pattern(k)


def test_pattern_shape():
    p = build_pattern(1)
    assert p.quadrant(0) == 0
    assert len(p.slots) == PATTERN_SLOTS == 4096
    assert PATTERN_PERIOD_NS == 1_024_000_000
    assert FAST_SLOTS * SLOT_NS == 16_000_000


@pytest.mark.parametrize("k", [1, 2, 5, 37, 63])
def test_fast_component_repeats_every_16ms(k):
    fast = np.array([1 - 2 * (q >> 1) for q in build_pattern(k).slots])
    # circular autocorrelation reaches the full length at lag 64
    auto = np.array([int(fast @ np.roll(fast, lag)) for lag in range(PATTERN_SLOTS)])
    assert auto[FAST_SLOTS] == PATTERN_SLOTS
    assert all(auto[lag] == PATTERN_SLOTS for lag in range(0, PATTERN_SLOTS, FAST_SLOTS))


@pytest.mark.parametrize("k", range(1, 64))
def test_slow_component_is_stretched_fast(k):
    p = build_pattern(k)
    assert p.fast_bits == p.slow_bits
    bits = tuple(0 if w > 0 else 1 for w in walsh(k, 64))
    for s, q in enumerate(p.slots):
        assert q == 2 * bits[s % 64] + bits[s // 64]


@pytest.mark.parametrize("k", [1, 9, 63])
def test_minimum_dwell_is_one_slot(k):
    p = build_pattern(k)
    runs, current = [], 1
    for a, b in zip(p.slots, p.slots[1:]):
        if a == b:
            current += 1
        else:
            runs.append(current)
            current = 1
    assert min(runs + [current]) >= 1
    assert all(r * SLOT_NS >= 250_000 for r in runs)


def test_cross_demod_examples():
    assert cross_demod(build_pattern(1), build_pattern(1)) == 4096
    assert cross_demod(build_pattern(1), build_pattern(2)) == 0


def test_orthogonality_against_complex_matrix_oracle():
    z = np.array([[1j ** q for q in build_pattern(k).slots] for k in range(1, 64)])
    gram = z @ z.conj().T
    re, im = demod_matrix(range(1, 64))
    assert np.array_equal(np.rint(gram.real).astype(int), re)
    assert np.array_equal(np.rint(gram.imag).astype(int), im)
    assert np.array_equal(re, 4096 * np.eye(63, dtype=int))
    assert not im.any()


@given(st.integers(1, 63), st.integers(1, 63))
def test_cross_demod_brute_force(a, b):
    pa, pb = build_pattern(a), build_pattern(b)
    total = sum(1j ** ((x - y) % 4) for x, y in zip(pa.slots, pb.slots))
    assert cross_demod(pa, pb) == total
    assert total == (4096 if a == b else 0)


# -- accumulator model -----------------------------------------------------


def test_quantize_phase():
    assert quantize_phase(0.25) == 0x40000000
    assert quantize_phase(0) == 0
    assert quantize_phase(1.0) == 0
    assert quantize_phase(-0.25) == 0xC0000000


def test_chirp_word():
    assert chirp_word_for(0) == 0
    assert chirp_word_for(1.0) == round(Fraction(1, 4000) ** 2 * ACC_MOD)
    with pytest.raises(RangeError):
        chirp_word_for(1e6)


@given(
    acc=st.integers(0, ACC_MOD - 1),
    freq=st.integers(-(2**40), 2**40),
    chirp=st.integers(-(2**31), 2**31 - 1),
    steps=st.integers(0, 600),
)
def test_closed_form_matches_stepping(acc, freq, chirp, steps):
    s = TrackingState(acc, freq, chirp)
    a, f = acc, freq
    for _ in range(steps):
        a = (a + f) % ACC_MOD
        f += chirp
    assert s.acc_after(steps) == a
    assert s.freq_after(steps) == f


def test_no_staged_writes_leaves_state():
    hw = FtsHardware()
    hw.state = TrackingState(123 << GUARD_BITS, 1 << 30, 5)
    before = hw.state
    for seq in range(1, 4):
        hw.on_pulse(CLOCK.event(seq))
    assert hw.state == before
    assert hw.latches == []


def test_pattern_change_waits_for_epoch_event():
    hw = FtsHardware()
    hw.handle(RCA_PATTERN, bytes([7]), CLOCK.event_time(64) - 1000)
    hw.on_pulse(CLOCK.event(64))
    assert hw.pattern.walsh_index == 7
    hw.handle(RCA_PATTERN, bytes([9]), CLOCK.event_time(65) - 1000)
    for seq in range(65, 128):
        hw.on_pulse(CLOCK.event(seq))
        assert hw.pattern.walsh_index == 7
    assert hw.pattern_register == 9
    hw.on_pulse(CLOCK.event(128))
    assert hw.pattern.walsh_index == 9
    assert hw.pattern_epoch_ns == CLOCK.event_time(128).tai_ns


def test_writes_latch_only_on_pulse():
    hw = FtsHardware()
    t = CLOCK.event_time(3) + 5_000_000
    hw.handle(RCA_FREQ, (1000).to_bytes(6, "big", signed=True), t)
    assert hw.state.freq == 0
    hw.on_pulse(CLOCK.event(4))
    assert hw.state.freq == 1000


def test_sample_phase_zero_at_epoch():
    hw = FtsHardware()
    hw.handle(RCA_PATTERN, bytes([5]), CLOCK.event_time(0))
    hw.on_pulse(CLOCK.event(64))
    assert hw.sample_phase(CLOCK.event_time(64)) == 0


def test_sample_phase_quadrant_two():
    hw = FtsHardware()
    hw.handle(RCA_PATTERN, bytes([5]), CLOCK.event_time(0))
    hw.on_pulse(CLOCK.event(64))
    slot = build_pattern(5).slots.index(2)
    at = CLOCK.event_time(64) + slot * SLOT_NS + SLOT_NS // 2
    assert hw.quadrant_at(at) == 2
    assert hw.sample_phase(at) == Fraction(1, 2)


def test_sample_phase_without_pattern_is_tracking_phase():
    hw = FtsHardware()
    hw.handle(RCA_PHASE, quantize_phase(0.125).to_bytes(4, "big"), CLOCK.event_time(0))
    hw.on_pulse(CLOCK.event(1))
    assert hw.sample_phase(CLOCK.event_time(2)) == Fraction(1, 8)


# -- closed-loop tracking through the bus ----------------------------------


def _track(pf, chirp=True, events=40, epoch=2, run=True):
    doc = minimal_doc()
    doc["devices"][0]["params"]["chirp"] = chirp
    s = build_system(load_config(doc))
    s.start()
    m = s.manager
    m.call(m.resolve("ANT1/FTS"), "set_phase_function", pf, at_event=epoch)
    if run:
        s.run_events(epoch + events)
    return s, s.hardware["ANT1/FTS"]


def _event_errors(hw, pf_epoch, last_seq):
    pf = pf_epoch
    latches = [x for x in hw.latches if x.seq >= pf.epoch_event and x.seq < last_seq]
    return [max(event_phase_errors(a, pf, b.seq)) for a, b in zip(latches, latches[1:])]


def test_zero_function_holds_phase_zero():
    s, hw = _track(PhaseFunction(0, 0, 0), events=10)
    for seq in range(2, 12):
        for k in range(0, STEPS_PER_EVENT, 17):
            assert hw.tracking_phase(CLOCK.event_time(seq) + k * SLOT_NS) == 0


def test_phi0_quarter_latches_phase_word():
    s, hw = _track(PhaseFunction(0.25, 0, 0), events=0)
    rec = [r for r in hw.latch_log if r.rca == RCA_PHASE]
    assert (rec[0].seq, rec[0].raw) == (2, 0x40000000)
    assert hw.phase_word(CLOCK.event_time(2)) == 0x40000000


def test_set_phase_function_lead_rule():
    doc = minimal_doc()
    s = build_system(load_config(doc))
    s.start()
    s.run_events(5)
    m = s.manager
    with pytest.raises(Late):
        m.call(m.resolve("ANT1/FTS"), "set_phase_function", PhaseFunction(), at_event=s.seq + 1)


def test_set_phase_function_frequency_overflow():
    doc = minimal_doc()
    s = build_system(load_config(doc))
    s.start()
    m = s.manager
    with pytest.raises(RangeError):
        m.call(m.resolve("ANT1/FTS"), "set_phase_function", PhaseFunction(0, 1e9, 0), at_event=3)


def test_linear_phase_half_turn_after_half_second():
    s, hw = _track(PhaseFunction(0, 1.0, 0), events=15)
    at = CLOCK.event_time(2) + NS_PER_S // 2
    assert abs(hw.tracking_phase(at) - Fraction(1, 2)) <= Fraction(1, 2**31)


def test_controller_chirp_word_zero_without_fdot():
    s, hw = _track(PhaseFunction(0.1, 3.0, 0), events=5)
    assert hw.state.chirp == 0
    ctl = s.manager.live["ANT1/FTS"]
    assert ctl.mirror.chirp == 0


@pytest.mark.parametrize("fdot", [1.0, -2.5, 0.3])
def test_chirp_enabled_error_bound(fdot):
    pf = PhaseFunction(0.1, 0.7, fdot, epoch_event=2)
    s, hw = _track(pf, chirp=True, events=60)
    errs = _event_errors(hw, pf, 62)
    assert len(errs) >= 55
    assert max(errs) <= Fraction(1, 2**20)


def test_chirp_disabled_error_is_quadratic_remainder():
    pf = PhaseFunction(0, 0, 1.0, epoch_event=2)
    s, hw = _track(pf, chirp=False, events=40)
    errs = _event_errors(hw, pf, 42)
    expected = 0.5 * 1.0 * 0.048 ** 2
    assert expected == pytest.approx(1.152e-3)
    assert max(errs) == pytest.approx(expected, rel=0.01)
    assert min(errs) == pytest.approx(expected, rel=0.01)


def test_chirp_enabled_beats_disabled_by_100x():
    pf = PhaseFunction(0.2, 0.5, 1.0, epoch_event=2)
    on = max(_event_errors(_track(pf, True, 30)[1], pf, 32))
    off = max(_event_errors(_track(pf, False, 30)[1], pf, 32))
    assert off >= 100 * on


def test_latch_continuity_with_chirp():
    pf = PhaseFunction(0.3, 2.0, 1.0, epoch_event=2)
    s, hw = _track(pf, chirp=True, events=30)
    after_epoch = [x for x in hw.latches if x.seq > 2]
    assert after_epoch
    for latch in after_epoch:
        assert latch.pre_acc == latch.state.acc


def test_per_step_error_growth_bounded():
    pf = PhaseFunction(0.3, 2.0, 1.0, epoch_event=2)
    s, hw = _track(pf, chirp=True, events=6)
    latches = [x for x in hw.latches if x.seq >= 2]
    errs = event_phase_errors(latches[0], pf, latches[1].seq)
    lsb = Fraction(1, 2**32)
    assert all(abs(b - a) <= lsb for a, b in zip(errs, errs[1:]))


def test_controller_updates_every_event():
    pf = PhaseFunction(0, 0.5, 1.0, epoch_event=2)
    s, hw = _track(pf, chirp=True, events=20)
    seqs = [x.seq for x in hw.latches if x.seq >= 2]
    assert seqs == list(range(2, 23))
    assert 1 / (PERIOD_NS / NS_PER_S) == pytest.approx(20 + 5 / 6)
