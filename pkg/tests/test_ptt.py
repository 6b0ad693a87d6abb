import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wbwf.codec import BROADCAST
from wbwf.ptt import (
    VOICE_FRAME_INTERVAL_US,
    AlreadyActive,
    NotTalking,
    PttUserState,
    ReceiverLedger,
    TalkAction,
    UserPhase,
    bind_session,
    generate_frame,
    on_press,
    on_release,
    on_session_closed,
    on_session_established,
    on_session_failed,
    split_payload,
    synthetic_on_off,
    voice_payload,
)


def talking(sid=7, t=1000):
    u = PttUserState()
    on_press(u, BROADCAST, t)
    bind_session(u, sid)
    on_session_established(u, t)
    return u


class TestPress:
    def test_press_issues_request(self):
        u = PttUserState()
        prim = on_press(u, BROADCAST, 500)
        assert prim.destination == BROADCAST and prim.time == 500
        assert u.phase == UserPhase.PRESSED_WAITING

    def test_double_press(self):
        u = PttUserState()
        on_press(u, BROADCAST, 0)
        with pytest.raises(AlreadyActive):
            on_press(u, BROADCAST, 1)

    def test_release_when_silent(self):
        with pytest.raises(NotTalking):
            on_release(PttUserState(), 0)


class TestFrames:
    def test_first_frame_at_establishment(self):
        u = PttUserState()
        on_press(u, BROADCAST, 0)
        bind_session(u, 7)
        assert on_session_established(u, 40_000) == 40_000
        f0 = generate_frame(u, 40_000)
        f1 = generate_frame(u, 40_000 + VOICE_FRAME_INTERVAL_US)
        assert f0.generation_time == 40_000 and f1.generation_time == 62_500
        assert (f0.seq, f1.seq) == (0, 1)

    def test_rate(self):
        # 1 s of talk at 22.5 ms spacing
        u = talking(t=0)
        n = 0
        t = 0
        while t < 1_000_000:
            assert generate_frame(u, t) is not None
            n += 1
            t += VOICE_FRAME_INTERVAL_US
        assert n == 45 == u.frames_generated

    def test_no_frames_unless_talking(self):
        u = PttUserState()
        assert generate_frame(u, 0) is None
        on_press(u, BROADCAST, 0)
        assert generate_frame(u, 0) is None

    def test_establishment_after_release_is_ignored(self):
        u = PttUserState()
        on_press(u, BROADCAST, 0)
        on_release(u, 10)
        assert on_session_established(u, 20) is None
        assert u.phase == UserPhase.RELEASING

    def test_failure_goes_silent(self):
        u = PttUserState()
        on_press(u, BROADCAST, 0)
        bind_session(u, 3)
        on_session_failed(u, 5)
        assert u.phase == UserPhase.SILENT and u.active_session is None
        on_press(u, BROADCAST, 6)

    def test_zero_talk(self):
        u = talking()
        prim = on_release(u, 1000)
        assert prim.session_id == 7 and u.frames_generated == 0
        on_session_closed(u, 2000)
        assert u.phase == UserPhase.SILENT


class TestPayload:
    @given(st.integers(0, (1 << 15) - 1), st.integers(0, (1 << 24) - 1))
    def test_split(self, sid, seq):
        p = voice_payload(sid, seq)
        assert p < 1 << 54
        assert split_payload(p) == (sid, seq)

    def test_unique_per_session(self):
        assert voice_payload(1, 0) != voice_payload(2, 0)


class TestLedger:
    def test_latency_and_counts(self):
        led = ReceiverLedger()
        assert led.record_delivery(5, 2, 100, 350) == 250
        led.record_delivery(5, 2, 200, 300)
        led.record_loss(5, 3, 4)
        assert led.delivered == {(5, 2): 2}
        assert led.lost == {(5, 3): 4}
        assert led.latencies[5] == [250, 100]


class TestSynthetic:
    def test_reproducible_and_ordered(self):
        a = synthetic_on_off(np.random.default_rng(3), 60_000_000, 2000, 5000)
        b = synthetic_on_off(np.random.default_rng(3), 60_000_000, 2000, 5000)
        assert a == b and a
        for x, y in zip(a, a[1:]):
            assert x.release_us <= y.press_us
        assert all(isinstance(x, TalkAction) and x.synthetic for x in a)
        assert all(x.press_us < 60_000_000 for x in a)

    def test_mean_on_time(self):
        acts = synthetic_on_off(np.random.default_rng(11), 4_000_000_000, 3000, 3000)
        mean_ms = np.mean([x.talk_us for x in acts]) / 1000
        assert mean_ms == pytest.approx(3000, rel=0.05)
