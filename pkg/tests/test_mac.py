import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wbwf import mac
from wbwf.codec import (
    BROADCAST,
    Beacon,
    MgmtBody,
    PttResponse,
    RtDataBody,
    SessionRelease,
    SessionRequest,
    SlotBitmap,
    SlotCode,
    decode,
    encode,
    make_pdu,
)
from wbwf.mac import (
    SESSION_FSM,
    AllocState,
    FrameClock,
    MainState,
    NoFreeSlot,
    Phase,
    Role,
    SessionEvent,
    SessionLimitReached,
    UnknownSession,
    VoiceFrame,
)
from wbwf.planner import TABLE1, SlotKind

S3 = TABLE1[3]
CLOCK = FrameClock(S3)
FRAME = S3.frame_length_us
A, B, C = 0x020000000001, 0x020000000002, 0x020000000003
MGMT_US = S3.mgmt_slot_us


def node(addr=A, mgmt_slot=0, seed=0, index=0):
    return mac.new_node(addr, mgmt_slot, S3, np.random.default_rng(seed), node_index=index, clock=CLOCK)


def rt_ctx(slot, frame=0):
    return CLOCK.context(frame, S3.mgmt_slots + slot)


def mgmt_ctx(slot, frame=0):
    return CLOCK.context(frame, slot)


def over_air(pdu, kind):
    return decode(encode(pdu, S3), S3, kind)


def kinds(state):
    return [e.kind for e in state.drain()]


def beacon_from(addr, bitmap, piggyback=None, sequence=0):
    return make_pdu(MgmtBody(bitmap, piggyback or Beacon()), S3, transmitter=addr, sequence=sequence)


class TestClock:
    def test_rt_slot_context(self):
        ctx = rt_ctx(2, frame=3)
        assert ctx.kind == SlotKind.RT and ctx.slot_id_in_cycle == 2
        assert ctx.start_us == 3 * FRAME + 47_360 + 2 * 448
        assert ctx.end_us == ctx.start_us + 448

    def test_next_start(self):
        base = CLOCK.offset_us(SlotKind.RT, 0)
        assert CLOCK.next_start(SlotKind.RT, 0, 0) == base
        assert CLOCK.next_start(SlotKind.RT, 0, base) == base
        assert CLOCK.next_start(SlotKind.RT, 0, base + 1) == base + FRAME

    def test_bitmap_index(self):
        assert CLOCK.bitmap_index(SlotKind.RT, 35) == 35
        assert CLOCK.bitmap_index(SlotKind.BE, 0) == 36
        assert CLOCK.slot_of_index(56) == (SlotKind.BE, 20)
        with pytest.raises(ValueError):
            CLOCK.bitmap_index(SlotKind.MGMT, 0)

    def test_mgmt_slot_range(self):
        with pytest.raises(ValueError):
            node(mgmt_slot=148)


class TestSlotBoundary:
    def test_own_mgmt_slot_at_frame_start(self):
        s = node()
        tx = mac.on_slot_boundary(s, mgmt_ctx(0), 0)
        assert tx is not None and isinstance(tx.pdu.body, MgmtBody)
        assert tx.pdu.body.bitmap == SlotBitmap.idle(57)
        assert isinstance(tx.pdu.body.piggyback, Beacon)
        assert s.main_state == MainState.TX

    def test_other_slot_listens(self):
        s = node()
        assert mac.on_slot_boundary(s, mgmt_ctx(1), MGMT_US) is None
        assert mac.on_slot_boundary(s, rt_ctx(0), 47_360) is None
        assert s.main_state == MainState.RX

    def test_sleeping_node_is_silent(self):
        s = node()
        s.sleeping = True
        assert mac.on_slot_boundary(s, mgmt_ctx(0), 0) is None
        assert s.main_state == MainState.SLEEP

    def test_six_queued_frames_go_in_one_pdu(self):
        s = node()
        sid = mac.ptt_request(s, BROADCAST, 0)
        sess = s.ptt_sessions[sid]
        slot = sess.rt_slot
        owned = s.owned_slots[(SlotKind.RT, slot)]
        owned.state = AllocState.IN_USE
        sess.phase = Phase.SPEECH
        sess.need_request = False
        for i in range(8):
            assert mac.enqueue_voice(s, VoiceFrame(i, 0, sid, i), 0)
        ctx = rt_ctx(slot)
        tx = mac.on_slot_boundary(s, ctx, ctx.start_us)
        assert isinstance(tx.pdu.body, RtDataBody)
        assert tx.pdu.header.frame_control.encapsulated_sdus == 6
        assert [f.seq for f in tx.voice] == list(range(6))
        assert len(s.voice_queue) == 2


class TestMgmtPdu:
    def test_pending_response_piggybacked(self):
        s = node()
        s.pending_responses.append((5, True))
        pdu = mac.build_mgmt_pdu(s, mgmt_ctx(0), 0)
        assert pdu.body.piggyback == PttResponse(5, True)
        assert over_air(pdu, SlotKind.MGMT).body.piggyback == PttResponse(5, True)
        bits = str(encode(pdu, S3))
        assert bits[144 + 114 : 144 + 130] == "1000000000000101"

    def test_response_dropped_when_padding_too_small(self):
        s2 = TABLE1[2]
        s = mac.new_node(A, 0, s2, np.random.default_rng(0))
        s.pending_responses.append((5, True))
        pdu = mac.build_mgmt_pdu(s, FrameClock(s2).context(0, 0), 0)
        assert isinstance(pdu.body.piggyback, Beacon)
        assert "ptt_res_unsent" in kinds(s)
        assert s.counters["ptt_res_unsent"] == 1

    def test_own_slot_marked_transmitting(self):
        s = node()
        mac.ptt_request(s, BROADCAST, 0)
        k = s.ptt_sessions[next(iter(s.ptt_sessions))].rt_slot
        bm = mac.build_mgmt_pdu(s, mgmt_ctx(0), 0).body.bitmap
        assert bm[k] == SlotCode.TRANSMITTING
        assert sum(1 for c in bm.entries if c != SlotCode.IDLE) == 1


class TestMerge:
    def test_all_idle(self):
        assert mac.merge_views(node(), 0) == SlotBitmap.idle(57)

    def test_hidden_node(self):
        s = node()
        mac.on_mgmt_received(s, beacon_from(B, SlotBitmap.idle(57).with_entry(7, SlotCode.TRANSMITTING)), 10)
        assert mac.merge_views(s, 10)[7] == SlotCode.NEIGHBOUR_TRANSMITTING
        assert mac.own_view(s, 10)[7] == SlotCode.NEIGHBOUR_TRANSMITTING

    def test_collision_dominates(self):
        s = node()
        mac.observe_slot(s, SlotKind.RT, 3, SlotCode.NEIGHBOUR_TRANSMITTING)
        mac.on_mgmt_received(s, beacon_from(B, SlotBitmap.idle(57).with_entry(3, SlotCode.COLLISION)), 10)
        assert mac.merge_views(s, 10)[3] == SlotCode.COLLISION

    def test_two_claims_seen_as_collision(self):
        s = node()
        bm = SlotBitmap.idle(57).with_entry(4, SlotCode.TRANSMITTING)
        mac.on_mgmt_received(s, beacon_from(B, bm), 10)
        mac.on_mgmt_received(s, beacon_from(C, bm), 20)
        assert mac.own_view(s, 20)[4] == SlotCode.COLLISION

    def test_stale_views_forgotten(self):
        s = node()
        mac.on_mgmt_received(s, beacon_from(B, SlotBitmap.idle(57).with_entry(7, SlotCode.TRANSMITTING)), 0)
        assert mac.merge_views(s, FRAME)[7] == SlotCode.NEIGHBOUR_TRANSMITTING
        assert mac.merge_views(s, FRAME + 1)[7] == SlotCode.IDLE

    @given(
        st.lists(st.sampled_from(list(SlotCode)), min_size=57, max_size=57),
        st.lists(st.sampled_from(list(SlotCode)), min_size=57, max_size=57),
        st.sets(st.integers(0, 35), max_size=3),
    )
    def test_owned_never_idle(self, obs, theirs, owned):
        s = node()
        for i, c in enumerate(obs):
            kind, sid = CLOCK.slot_of_index(i)
            mac.observe_slot(s, kind, sid, c)
        s.neighbor_views[B] = mac.NeighborView(SlotBitmap(tuple(theirs)), 0)
        for k in owned:
            s.owned_slots[(SlotKind.RT, k)] = mac.OwnedSlot(SlotKind.RT, k, AllocState.IN_USE, 0, 0)
        view = mac.own_view(s, 0)
        merged = mac.merge_views(s, 0)
        for k in owned:
            assert view[k] == SlotCode.TRANSMITTING
            assert merged[k] != SlotCode.IDLE


class TestSelectTsa:
    def test_seeded_choice_reproducible(self):
        a = mac.select_tsa(node(), SlotKind.RT, 0.37, 0)
        b = mac.select_tsa(node(), SlotKind.RT, 0.37, 0)
        assert a == b == int(0.37 * 36)

    def test_uniform_over_candidates(self):
        picks = {mac.select_tsa(node(), SlotKind.RT, d, 0) for d in np.linspace(0, 0.999, 200)}
        assert picks == set(range(36))

    def test_single_idle_slot(self):
        s = node()
        for k in range(36):
            if k != 17:
                mac.observe_slot(s, SlotKind.RT, k, SlotCode.NEIGHBOUR_TRANSMITTING)
        assert mac.select_tsa(s, SlotKind.RT, 0.99, 0) == 17
        owned = s.owned_slots[(SlotKind.RT, 17)]
        assert owned.state == AllocState.ALLOCATING
        assert mac.own_view(s, 0)[17] == SlotCode.TRANSMITTING

    def test_all_busy(self):
        s = node()
        for k in range(36):
            mac.observe_slot(s, SlotKind.RT, k, SlotCode.NEIGHBOUR_TRANSMITTING)
        with pytest.raises(NoFreeSlot):
            mac.select_tsa(s, SlotKind.RT, 0.5, 0)
        assert s.counters["tsa_no_free_slot"] == 1

    def test_running_slot_not_a_candidate(self):
        # mid-way through RT slot 0 its next use is a full frame away
        now = CLOCK.offset_us(SlotKind.RT, 0) + 100
        picks = {mac.select_tsa(node(), SlotKind.RT, d, now) for d in np.linspace(0, 0.999, 300)}
        assert 0 not in picks and len(picks) == 35

    def test_be_slots(self):
        s = node()
        k = mac.select_tsa(s, SlotKind.BE, 0.0, 0)
        assert k == 0 and mac.own_view(s, 0)[36] == SlotCode.TRANSMITTING


def established_broadcast(seed=0):
    s = node(seed=seed)
    sid = mac.ptt_request(s, BROADCAST, 0)
    sess = s.ptt_sessions[sid]
    ctx = rt_ctx(sess.rt_slot)
    tx = mac.on_slot_boundary(s, ctx, ctx.start_us)
    mac.on_transmit_complete(s, tx, ctx.end_us)
    return s, sess, tx


class TestBroadcastSession:
    def test_request_then_speech_within_one_frame(self):
        s, sess, tx = established_broadcast()
        assert isinstance(tx.pdu.body, SessionRequest)
        assert tx.pdu.header.receiver == BROADCAST
        assert sess.phase == Phase.SPEECH
        assert sess.established_at <= FRAME
        ev = kinds(s)
        assert ev.index("ptt_request") < ev.index("tsa_select") < ev.index("session_established")

    def test_session_limit(self):
        s = node()
        mac.ptt_request(s, BROADCAST, 0)
        with pytest.raises(SessionLimitReached):
            mac.ptt_request(s, BROADCAST, 1)

    def test_session_id_layout(self):
        s = node(index=3)
        assert mac.ptt_request(s, BROADCAST, 0) == (3 << 7) | 0

    def test_release(self):
        s, sess, _ = established_broadcast()
        mac.ptt_release(s, sess.session_id, FRAME)
        assert sess.phase == Phase.RELEASING
        ctx = rt_ctx(sess.rt_slot, frame=1)
        tx = mac.on_slot_boundary(s, ctx, ctx.start_us)
        assert isinstance(tx.pdu.body, SessionRelease)
        mac.on_transmit_complete(s, tx, ctx.end_us)
        assert sess.session_id not in s.ptt_sessions
        assert s.owned_slots == {}
        assert mac.own_view(s, ctx.end_us) == SlotBitmap.idle(57)

    def test_release_unknown(self):
        with pytest.raises(UnknownSession):
            mac.ptt_release(node(), 99, 0)

    def test_release_sends_queued_voice_first(self):
        s, sess, _ = established_broadcast()
        for i in range(8):
            mac.enqueue_voice(s, VoiceFrame(i, 0, sess.session_id, i), FRAME)
        s.drain()
        mac.ptt_release(s, sess.session_id, FRAME)
        assert not mac.enqueue_voice(s, VoiceFrame(9, 0, sess.session_id, 9), FRAME)
        sent = []
        for frame in (1, 2, 3):
            ctx = rt_ctx(sess.rt_slot, frame=frame)
            tx = mac.on_slot_boundary(s, ctx, ctx.start_us)
            sent.append(type(tx.pdu.body))
            mac.on_transmit_complete(s, tx, ctx.end_us)
        assert sent == [RtDataBody, RtDataBody, SessionRelease]
        assert sess.session_id not in s.ptt_sessions
        drops = [e for e in s.drain() if e.kind == "voice_drop"]
        assert [e.fields["seqs"] for e in drops] == [[9]]

    def test_release_while_requesting_aborts(self):
        s = node()
        sid = mac.ptt_request(s, BROADCAST, 0)
        mac.ptt_release(s, sid, 5)
        assert sid not in s.ptt_sessions and s.owned_slots == {}

    def test_voice_refused_outside_speech(self):
        s = node()
        sid = mac.ptt_request(s, BROADCAST, 0)
        assert not mac.enqueue_voice(s, VoiceFrame(0, 0, sid, 0), 0)


class TestAllocationPhase:
    def test_confirmed_after_one_mgmt_cycle(self):
        s, sess, _ = established_broadcast()
        owned = s.owned_slots[(SlotKind.RT, sess.rt_slot)]
        mac.on_slot_boundary(s, mgmt_ctx(0, frame=1), FRAME)
        assert owned.announced_at == FRAME and owned.state == AllocState.ALLOCATING
        mac.on_slot_boundary(s, mgmt_ctx(0, frame=2), 2 * FRAME)
        assert owned.state == AllocState.IN_USE
        assert "tsa_confirm" in kinds(s)

    def test_collision_on_allocating_slot_reselects(self):
        s, sess, _ = established_broadcast()
        old = sess.rt_slot
        s.drain()
        bm = SlotBitmap.idle(57).with_entry(old, SlotCode.COLLISION)
        now = FRAME - 1000
        mac.on_mgmt_received(s, beacon_from(B, bm), now)
        ev = kinds(s)
        assert "tsa_collision" in ev and "tsa_reselect" in ev
        assert sess.rt_slot is not None and sess.rt_slot != old
        new = s.owned_slots[(SlotKind.RT, sess.rt_slot)]
        # delayed until our next MGMT slot has announced the new choice
        assert new.usable_from == FRAME + MGMT_US
        assert sess.need_request
        assert s.counters["tsa_collisions"] == 1 and s.counters["tsa_reselections"] == 1

    def test_neighbour_claiming_our_allocating_slot(self):
        s, sess, _ = established_broadcast()
        old = sess.rt_slot
        bm = SlotBitmap.idle(57).with_entry(old, SlotCode.TRANSMITTING)
        mac.on_mgmt_received(s, beacon_from(B, bm), FRAME - 1000)
        assert sess.rt_slot != old

    def test_collision_on_in_use_slot_ignored(self):
        s, sess, _ = established_broadcast()
        owned = s.owned_slots[(SlotKind.RT, sess.rt_slot)]
        owned.state = AllocState.IN_USE
        sess.need_request = False
        s.drain()
        bm = SlotBitmap.idle(57).with_entry(sess.rt_slot, SlotCode.COLLISION)
        mac.on_mgmt_received(s, beacon_from(B, bm), 3 * FRAME)
        assert kinds(s) == ["tsa_collision_ignored"]
        assert (SlotKind.RT, owned.slot_id) in s.owned_slots
        assert sess.need_request
        assert s.counters["tsa_collisions"] == 0

    def test_no_free_slot_backs_off(self):
        s = node()
        for k in range(36):
            mac.observe_slot(s, SlotKind.RT, k, SlotCode.NEIGHBOUR_TRANSMITTING)
        sid = mac.ptt_request(s, BROADCAST, 0)
        sess = s.ptt_sessions[sid]
        assert sess.rt_slot is None and sess.retry_at == FRAME
        assert s.main_state == MainState.SEARCH_RT
        s.observations.clear()
        mac.poll(s, FRAME - 1)
        assert sess.rt_slot is None
        mac.poll(s, FRAME)
        assert sess.rt_slot is not None


class TestUnicast:
    def _requested(self):
        s = node()
        sid = mac.ptt_request(s, B, 0)
        sess = s.ptt_sessions[sid]
        ctx = rt_ctx(sess.rt_slot)
        tx = mac.on_slot_boundary(s, ctx, ctx.start_us)
        assert tx.pdu.header.receiver == B
        mac.on_transmit_complete(s, tx, ctx.end_us)
        return s, sess, ctx

    def test_wait_responses_with_deadline(self):
        s, sess, ctx = self._requested()
        assert sess.phase == Phase.WAIT_RESPONSES
        assert sess.deadline == ctx.end_us + FRAME

    def test_positive_response(self):
        s, sess, ctx = self._requested()
        s.drain()
        pdu = beacon_from(B, SlotBitmap.idle(57), PttResponse(sess.session_id, True))
        mac.on_mgmt_received(s, over_air(pdu, SlotKind.MGMT), ctx.end_us + 1000)
        assert sess.phase == Phase.SPEECH
        assert "session_established" in kinds(s)

    def test_negative_response(self):
        s, sess, ctx = self._requested()
        pdu = beacon_from(B, SlotBitmap.idle(57), PttResponse(sess.session_id, False))
        mac.on_mgmt_received(s, pdu, ctx.end_us + 1000)
        assert sess.session_id not in s.ptt_sessions
        assert "session_failed" in kinds(s)

    def test_timeout(self):
        s, sess, ctx = self._requested()
        mac.poll(s, sess.deadline - 1)
        assert sess.phase == Phase.WAIT_RESPONSES
        mac.poll(s, sess.deadline)
        assert sess.phase == Phase.CLOSED
        assert sess.session_id not in s.ptt_sessions and s.owned_slots == {}
        ev = s.drain()
        failed = [e for e in ev if e.kind == "session_failed"]
        assert failed and failed[0].fields["reason"] == "no_response"

    def test_response_from_wrong_node_ignored(self):
        s, sess, ctx = self._requested()
        mac.on_mgmt_received(s, beacon_from(C, SlotBitmap.idle(57), PttResponse(sess.session_id)), ctx.end_us)
        assert sess.phase == Phase.WAIT_RESPONSES
        assert s.counters["ptt_res_ignored"] == 1

    def test_unknown_session_response_ignored(self):
        s = node()
        mac.on_mgmt_received(s, beacon_from(B, SlotBitmap.idle(57), PttResponse(1234)), 0)
        assert s.counters["ptt_res_ignored"] == 1
        assert "ptt_res_ignored" in kinds(s)


class TestReceiver:
    def _joined(self, unicast=False):
        r = node(B, mgmt_slot=1)
        req = make_pdu(SessionRequest(42), S3, transmitter=A, receiver=B if unicast else BROADCAST,
                       slot_id_in_cycle=9, sequence=1)
        mac.on_pdu_received(r, over_air(req, SlotKind.RT), 1000)
        return r, r.ptt_sessions[42]

    def test_join_on_request(self):
        r, sess = self._joined()
        assert sess.role == Role.RESPONDER and sess.phase == Phase.SPEECH
        assert sess.peer == A and sess.rt_slot == 9
        assert not r.pending_responses

    def test_unicast_join_queues_response(self):
        r, _ = self._joined(unicast=True)
        assert list(r.pending_responses) == [(42, True)]

    def test_request_for_someone_else_ignored(self):
        r = node(B, mgmt_slot=1)
        req = make_pdu(SessionRequest(42), S3, transmitter=A, receiver=C)
        mac.on_pdu_received(r, req, 0)
        assert r.ptt_sessions == {}

    def test_six_frames_from_peer(self):
        r, _ = self._joined()
        pdu = make_pdu(RtDataBody(tuple(range(6))), S3, transmitter=A, sequence=2)
        assert mac.on_rt_data_received(r, over_air(pdu, SlotKind.RT), 2000) == tuple(range(6))

    def test_non_session_transmitter_dropped(self):
        r, _ = self._joined()
        pdu = make_pdu(RtDataBody((1,)), S3, transmitter=C, sequence=2)
        assert mac.on_rt_data_received(r, pdu, 2000) == ()
        assert r.counters["rt_dropped_no_session"] == 1

    def test_duplicate_dropped(self):
        r, _ = self._joined()
        pdu = make_pdu(RtDataBody((1,)), S3, transmitter=A, sequence=2)
        assert mac.on_rt_data_received(r, pdu, 2000) == (1,)
        assert mac.on_rt_data_received(r, pdu, 3000) == ()
        assert r.counters["rt_dropped_duplicate"] == 1

    def test_release_frees_session(self):
        r, _ = self._joined()
        rel = make_pdu(SessionRelease(42), S3, transmitter=A, sequence=5)
        mac.on_pdu_received(r, rel, 5000)
        assert 42 not in r.ptt_sessions

    def test_inactivity_gc(self):
        r, sess = self._joined()
        mac.poll(r, 1000 + 4 * FRAME)
        assert 42 in r.ptt_sessions
        mac.poll(r, 1000 + 4 * FRAME + 1)
        assert 42 not in r.ptt_sessions
        assert any(e.kind == "session_closed" and e.fields["reason"] == "inactivity" for e in r.drain())


class TestFsm:
    def test_total(self):
        for phase in Phase:
            for event in SessionEvent:
                assert (phase, event) in SESSION_FSM
        assert len(SESSION_FSM) == len(Phase) * len(SessionEvent)

    def test_targets_are_phases_or_ignore(self):
        assert set(SESSION_FSM.values()) <= set(Phase) | {mac.IGNORE}

    def test_closed_absorbs(self):
        assert all(SESSION_FSM[(Phase.CLOSED, e)] is mac.IGNORE for e in SessionEvent)
