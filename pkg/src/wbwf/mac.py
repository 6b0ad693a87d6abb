"""Per-node MAC protocol machine.

One :class:`NodeMacState` per node, mutated only through the functions in
this module. The functions never touch other nodes; everything a node
learns arrives as a decoded PDU or a slot observation handed in by the
simulator. Protocol events are appended to ``state.outbox`` as
:class:`MacEvent` records for the trace and for the PTT layer.

Slot allocation is unconfirmed: a node claims an idle slot, uses it at
once, and announces it in its next MGMT PDU. The claim stays ALLOCATING
until the node has been through one full MGMT cycle after the announcement
without a COLLISION report; then it is IN_USE and reports no longer move it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .codec import (
    BROADCAST,
    MAX_SESSION_ID,
    PTT_RES_BITS,
    Beacon,
    MacPdu,
    MgmtBody,
    PttResponse,
    RtDataBody,
    SessionRelay,
    SessionRelease,
    SessionRequest,
    SlotBitmap,
    SlotCode,
    make_pdu,
)
from .planner import SlotKind, TdmaConfig, slot_schedule

INACTIVITY_FRAMES = 4
ALLOCATION_CYCLES = 1


class MacError(RuntimeError):
    pass


class NoFreeSlot(MacError):
    pass


class SessionLimitReached(MacError):
    pass


class UnknownSession(MacError):
    pass


class MainState(Enum):
    IDLE = "IDLE"
    TX = "TX"
    RX = "RX"
    SLEEP = "SLEEP"
    SEARCH_RT = "SEARCH_RT"
    SEARCH_BE = "SEARCH_BE"
    SEARCH_BOTH = "SEARCH_BOTH"


class AllocState(Enum):
    ALLOCATING = "ALLOCATING"
    IN_USE = "IN_USE"


class Role(Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


class Phase(Enum):
    REQUESTING = "REQUESTING"
    WAIT_RESPONSES = "WAIT_RESPONSES"
    SPEECH = "SPEECH"
    RELEASING = "RELEASING"
    CLOSED = "CLOSED"


class SessionEvent(Enum):
    REQUEST_SENT = "request_sent"
    RESPONSE_POSITIVE = "response_positive"
    RESPONSE_NEGATIVE = "response_negative"
    DEADLINE_EXPIRED = "deadline_expired"
    RELEASE_PRESSED = "release_pressed"
    RELEASE_SENT = "release_sent"
    RELEASE_RECEIVED = "release_received"
    INACTIVITY = "inactivity"


IGNORE = None

# (phase, event) -> next phase, or IGNORE. Every pair is listed.
# REQUEST_SENT out of REQUESTING goes straight to SPEECH for broadcast (on_transmit_complete).
SESSION_FSM: dict[tuple[Phase, SessionEvent], Phase | None] = {
    (Phase.REQUESTING, SessionEvent.REQUEST_SENT): Phase.WAIT_RESPONSES,
    (Phase.REQUESTING, SessionEvent.RESPONSE_POSITIVE): IGNORE,
    (Phase.REQUESTING, SessionEvent.RESPONSE_NEGATIVE): IGNORE,
    (Phase.REQUESTING, SessionEvent.DEADLINE_EXPIRED): IGNORE,
    (Phase.REQUESTING, SessionEvent.RELEASE_PRESSED): Phase.CLOSED,
    (Phase.REQUESTING, SessionEvent.RELEASE_SENT): IGNORE,
    (Phase.REQUESTING, SessionEvent.RELEASE_RECEIVED): IGNORE,
    (Phase.REQUESTING, SessionEvent.INACTIVITY): IGNORE,
    (Phase.WAIT_RESPONSES, SessionEvent.REQUEST_SENT): IGNORE,
    (Phase.WAIT_RESPONSES, SessionEvent.RESPONSE_POSITIVE): Phase.SPEECH,
    (Phase.WAIT_RESPONSES, SessionEvent.RESPONSE_NEGATIVE): Phase.CLOSED,
    (Phase.WAIT_RESPONSES, SessionEvent.DEADLINE_EXPIRED): Phase.CLOSED,
    (Phase.WAIT_RESPONSES, SessionEvent.RELEASE_PRESSED): Phase.RELEASING,
    (Phase.WAIT_RESPONSES, SessionEvent.RELEASE_SENT): IGNORE,
    (Phase.WAIT_RESPONSES, SessionEvent.RELEASE_RECEIVED): IGNORE,
    (Phase.WAIT_RESPONSES, SessionEvent.INACTIVITY): IGNORE,
    (Phase.SPEECH, SessionEvent.REQUEST_SENT): IGNORE,
    (Phase.SPEECH, SessionEvent.RESPONSE_POSITIVE): IGNORE,
    (Phase.SPEECH, SessionEvent.RESPONSE_NEGATIVE): IGNORE,
    (Phase.SPEECH, SessionEvent.DEADLINE_EXPIRED): IGNORE,
    (Phase.SPEECH, SessionEvent.RELEASE_PRESSED): Phase.RELEASING,
    (Phase.SPEECH, SessionEvent.RELEASE_SENT): IGNORE,
    (Phase.SPEECH, SessionEvent.RELEASE_RECEIVED): Phase.CLOSED,
    (Phase.SPEECH, SessionEvent.INACTIVITY): Phase.CLOSED,
    (Phase.RELEASING, SessionEvent.REQUEST_SENT): IGNORE,
    (Phase.RELEASING, SessionEvent.RESPONSE_POSITIVE): IGNORE,
    (Phase.RELEASING, SessionEvent.RESPONSE_NEGATIVE): IGNORE,
    (Phase.RELEASING, SessionEvent.DEADLINE_EXPIRED): IGNORE,
    (Phase.RELEASING, SessionEvent.RELEASE_PRESSED): IGNORE,
    (Phase.RELEASING, SessionEvent.RELEASE_SENT): Phase.CLOSED,
    (Phase.RELEASING, SessionEvent.RELEASE_RECEIVED): IGNORE,
    (Phase.RELEASING, SessionEvent.INACTIVITY): IGNORE,
    **{(Phase.CLOSED, ev): IGNORE for ev in SessionEvent},
}


@dataclass(frozen=True)
class SlotContext:
    kind: SlotKind
    slot_id_in_cycle: int
    slot_id_in_frame: int
    frame_index: int
    frame_number: int
    start_us: int
    duration_us: int

    @property
    def end_us(self) -> int:
        return self.start_us + self.duration_us


class FrameClock:
    """Slot timing derived from a configuration; every node runs its own copy."""

    def __init__(self, cfg: TdmaConfig):
        self.cfg = cfg
        self.schedule = slot_schedule(cfg)
        self.frame_us = cfg.frame_length_us
        self._first = {}
        for entry in self.schedule:
            self._first.setdefault(entry.kind, entry.slot_id_in_frame)

    def cycle_us(self, kind: SlotKind) -> int:
        return self.cfg.cycle_frames(kind) * self.frame_us

    def offset_us(self, kind: SlotKind, slot_id: int) -> int:
        per_frame = self.cfg.slots_per_frame(kind)
        frame, pos = divmod(slot_id, per_frame)
        return frame * self.frame_us + self.schedule[self._first[kind] + pos].start_us

    def next_start(self, kind: SlotKind, slot_id: int, t: int) -> int:
        """First start of the slot at or after ``t``."""
        base = self.offset_us(kind, slot_id)
        cycle = self.cycle_us(kind)
        k = max(0, -(-(t - base) // cycle))
        return base + k * cycle

    def context(self, frame_number: int, slot_id_in_frame: int) -> SlotContext:
        entry = self.schedule[slot_id_in_frame]
        kind = entry.kind
        frame_index = frame_number % self.cfg.cycle_frames(kind)
        pos = slot_id_in_frame - self._first[kind]
        return SlotContext(
            kind=kind,
            slot_id_in_cycle=frame_index * self.cfg.slots_per_frame(kind) + pos,
            slot_id_in_frame=slot_id_in_frame,
            frame_index=frame_index,
            frame_number=frame_number,
            start_us=frame_number * self.frame_us + entry.start_us,
            duration_us=entry.duration_us,
        )

    def bitmap_index(self, kind: SlotKind, slot_id: int) -> int:
        if kind == SlotKind.RT:
            return slot_id
        if kind == SlotKind.BE:
            return self.cfg.slots_per_cycle(SlotKind.RT) + slot_id
        raise ValueError("MGMT slots have no bitmap entry")

    def slot_of_index(self, index: int) -> tuple[SlotKind, int]:
        rt = self.cfg.slots_per_cycle(SlotKind.RT)
        return (SlotKind.RT, index) if index < rt else (SlotKind.BE, index - rt)


@dataclass
class OwnedSlot:
    kind: SlotKind
    slot_id: int
    state: AllocState
    selected_at: int
    usable_from: int
    announced_at: int | None = None
    used: bool = False
    session_id: int | None = None


@dataclass
class PttSessionState:
    session_id: int
    role: Role
    phase: Phase
    destination: int
    peer: int
    requested_at: int
    rt_slot: int | None = None
    responses: dict[int, bool] = field(default_factory=dict)
    deadline: int | None = None
    established_at: int | None = None
    need_request: bool = True
    retry_at: int | None = None
    last_activity: int = 0
    receivers: tuple[int, ...] = ()


@dataclass(frozen=True)
class VoiceFrame:
    payload: int
    generation_time: int
    session_id: int
    seq: int


@dataclass
class NeighborView:
    bitmap: SlotBitmap
    last_heard: int


@dataclass
class MacEvent:
    time: int
    kind: str
    fields: dict


@dataclass(frozen=True)
class Transmission:
    node: int
    ctx: SlotContext
    pdu: MacPdu
    voice: tuple[VoiceFrame, ...] = ()
    session_id: int | None = None


@dataclass
class NodeMacState:
    node_id: int
    mgmt_slot: int
    clock: FrameClock
    rng: object  # numpy Generator; only .random() is used
    main_state: MainState = MainState.IDLE
    neighbor_views: dict[int, NeighborView] = field(default_factory=dict)
    observations: dict[int, SlotCode] = field(default_factory=dict)
    owned_slots: dict[tuple[SlotKind, int], OwnedSlot] = field(default_factory=dict)
    ptt_sessions: dict[int, PttSessionState] = field(default_factory=dict)
    voice_queue: deque = field(default_factory=deque)
    sequence_counter: int = 0
    pending_responses: deque = field(default_factory=deque)
    last_rx_seq: dict[int, int] = field(default_factory=dict)
    session_counter: int = 0
    session_limit: int = 1
    node_index: int = 0
    sleeping: bool = False
    outbox: list[MacEvent] = field(default_factory=list)
    counters: dict[str, int] = field(
        default_factory=lambda: {
            "tsa_attempts": 0,
            "tsa_collisions": 0,
            "tsa_reselections": 0,
            "tsa_no_free_slot": 0,
            "ptt_res_ignored": 0,
            "ptt_res_unsent": 0,
            "rt_dropped_no_session": 0,
            "rt_dropped_duplicate": 0,
        }
    )

    @property
    def cfg(self) -> TdmaConfig:
        return self.clock.cfg

    def emit(self, time: int, kind: str, **fields) -> None:
        self.outbox.append(MacEvent(time, kind, fields))

    def drain(self) -> list[MacEvent]:
        out, self.outbox = self.outbox, []
        return out


def new_node(
    node_id: int, mgmt_slot: int, cfg: TdmaConfig, rng, *, node_index: int = 0, clock: FrameClock | None = None
) -> NodeMacState:
    if not 0 <= mgmt_slot < cfg.slots_per_cycle(SlotKind.MGMT):
        raise ValueError(f"mgmt_slot {mgmt_slot} outside the MGMT cycle")
    return NodeMacState(node_id, mgmt_slot, clock or FrameClock(cfg), rng, node_index=node_index)


# bitmaps


def _fresh_neighbors(state: NodeMacState, now: int):
    window = state.clock.cycle_us(SlotKind.MGMT)
    for addr, nv in state.neighbor_views.items():
        if now - nv.last_heard <= window:
            yield addr, nv


def own_view(state: NodeMacState, now: int) -> SlotBitmap:
    """This node's local perception of every data slot."""
    n = state.cfg.data_slots
    entries = [SlotCode.IDLE] * n
    fresh = [nv.bitmap for _, nv in _fresh_neighbors(state, now)]
    for i in range(n):
        claims = sum(1 for bm in fresh if bm.entries[i] == SlotCode.TRANSMITTING)
        obs = state.observations.get(i, SlotCode.IDLE)
        if obs == SlotCode.COLLISION or claims >= 2:
            entries[i] = SlotCode.COLLISION
        elif claims or obs == SlotCode.NEIGHBOUR_TRANSMITTING:
            entries[i] = SlotCode.NEIGHBOUR_TRANSMITTING
    for slot in state.owned_slots.values():
        entries[state.clock.bitmap_index(slot.kind, slot.slot_id)] = SlotCode.TRANSMITTING
    return SlotBitmap(tuple(entries))


def merge_views(state: NodeMacState, now: int) -> SlotBitmap:
    """Fuse the own view with fresh neighbour bitmaps.

    COLLISION anywhere wins, then our own TRANSMITTING, then any neighbour
    usage (theirs or one they hear) becomes NEIGHBOUR_TRANSMITTING.
    """
    own = own_view(state, now).entries
    fresh = [nv.bitmap.entries for _, nv in _fresh_neighbors(state, now)]
    merged = []
    for i, mine in enumerate(own):
        theirs = [bm[i] for bm in fresh]
        if mine == SlotCode.COLLISION or SlotCode.COLLISION in theirs:
            merged.append(SlotCode.COLLISION)
        elif mine == SlotCode.TRANSMITTING:
            merged.append(SlotCode.TRANSMITTING)
        elif mine == SlotCode.NEIGHBOUR_TRANSMITTING or any(c != SlotCode.IDLE for c in theirs):
            merged.append(SlotCode.NEIGHBOUR_TRANSMITTING)
        else:
            merged.append(SlotCode.IDLE)
    return SlotBitmap(tuple(merged))


def observe_slot(state: NodeMacState, kind: SlotKind, slot_id: int, code: SlotCode) -> None:
    """Record what was sensed during the latest occurrence of a data slot."""
    state.observations[state.clock.bitmap_index(kind, slot_id)] = SlotCode(code)


# slot allocation


def select_tsa(
    state: NodeMacState,
    kind: SlotKind,
    draw: float,
    now: int,
    *,
    usable_from: int | None = None,
    session_id: int | None = None,
) -> int:
    """Claim a uniformly chosen idle slot of ``kind``.

    Only slots whose next occurrence ends within one cycle of ``now`` are
    candidates, so a fresh claim can always be used within one cycle.
    """
    clock = state.clock
    merged = merge_views(state, now)
    cycle = clock.cycle_us(kind)
    dur = state.cfg.slot_us(kind)
    start_floor = now + 1 if usable_from is None else max(usable_from, now + 1)
    candidates = []
    for sid in range(state.cfg.slots_per_cycle(kind)):
        if merged[clock.bitmap_index(kind, sid)] != SlotCode.IDLE:
            continue
        if usable_from is None and clock.next_start(kind, sid, start_floor) + dur - now > cycle:
            continue
        candidates.append(sid)
    state.counters["tsa_attempts"] += 1
    if not candidates:
        state.counters["tsa_no_free_slot"] += 1
        state.emit(now, "tsa_no_free_slot", slot_kind=kind.value)
        raise NoFreeSlot(f"no idle {kind.value} slot")
    choice = candidates[min(int(draw * len(candidates)), len(candidates) - 1)]
    state.owned_slots[(kind, choice)] = OwnedSlot(
        kind=kind,
        slot_id=choice,
        state=AllocState.ALLOCATING,
        selected_at=now,
        usable_from=now if usable_from is None else usable_from,
        session_id=session_id,
    )
    state.emit(now, "tsa_select", slot_kind=kind.value, slot=choice, candidates=len(candidates))
    return choice


def _release_slot(state: NodeMacState, kind: SlotKind, slot_id: int, now: int, reason: str) -> None:
    if state.owned_slots.pop((kind, slot_id), None) is not None:
        state.emit(now, "tsa_release", slot_kind=kind.value, slot=slot_id, reason=reason)


def _next_own_mgmt_end(state: NodeMacState, now: int) -> int:
    # reception handling at t precedes any slot that starts at t
    start = state.clock.next_start(SlotKind.MGMT, state.mgmt_slot, now)
    return start + state.cfg.mgmt_slot_us


def _acquire_rt(state: NodeMacState, sess: PttSessionState, now: int, delayed: bool) -> None:
    usable = _next_own_mgmt_end(state, now) if delayed else None
    try:
        sess.rt_slot = select_tsa(
            state, SlotKind.RT, float(state.rng.random()), now, usable_from=usable, session_id=sess.session_id
        )
        sess.retry_at = None
        sess.need_request = True
    except NoFreeSlot:
        sess.rt_slot = None
        sess.retry_at = now + state.clock.cycle_us(SlotKind.MGMT)
        state.main_state = MainState.SEARCH_RT


def _collision_on_own(state: NodeMacState, slot: OwnedSlot, reporter: int, now: int, how: str) -> None:
    if slot.state == AllocState.IN_USE:
        # Allocation is settled; only an unstarted reservation is given up.
        if slot.used:
            sess = state.ptt_sessions.get(slot.session_id)
            if sess is not None and sess.role == Role.INITIATOR and sess.phase == Phase.SPEECH:
                sess.need_request = True
            state.emit(now, "tsa_collision_ignored", slot_kind=slot.kind.value, slot=slot.slot_id, reporter=reporter)
            return
    state.counters["tsa_collisions"] += 1
    state.emit(
        now, "tsa_collision", slot_kind=slot.kind.value, slot=slot.slot_id, reporter=reporter, how=how,
        alloc=slot.state.value,
    )
    _release_slot(state, slot.kind, slot.slot_id, now, "collision")
    sess = state.ptt_sessions.get(slot.session_id)
    if sess is None or sess.phase == Phase.CLOSED:
        return
    state.counters["tsa_reselections"] += 1
    state.emit(now, "tsa_reselect", session=sess.session_id, old_slot=slot.slot_id)
    _acquire_rt(state, sess, now, delayed=True)


# sessions


def _set_phase(state: NodeMacState, sess: PttSessionState, event: SessionEvent, now: int, to: Phase | None = None):
    nxt = SESSION_FSM[(sess.phase, event)] if to is None else to
    if nxt is IGNORE:
        state.emit(now, "ptt_ignored", session=sess.session_id, phase=sess.phase.value, event=event.value)
        return False
    old = sess.phase
    sess.phase = nxt
    state.emit(
        now, "ptt_phase", session=sess.session_id, role=sess.role.value, old=old.value, new=nxt.value,
        event=event.value,
    )
    return True


def _close_session(state: NodeMacState, sess: PttSessionState, now: int, reason: str) -> None:
    if sess.role == Role.INITIATOR:
        if sess.rt_slot is not None:
            _release_slot(state, SlotKind.RT, sess.rt_slot, now, reason)
        _flush_queue(state, sess, now, reason)
    sess.rt_slot = None
    sess.retry_at = None
    state.ptt_sessions.pop(sess.session_id, None)
    state.emit(now, "session_closed", session=sess.session_id, role=sess.role.value, reason=reason)


def _flush_queue(state: NodeMacState, sess: PttSessionState, now: int, reason: str) -> None:
    kept = deque()
    dropped = []
    while state.voice_queue:
        f = state.voice_queue.popleft()
        (dropped if f.session_id == sess.session_id else kept).append(f)
    state.voice_queue = kept
    if dropped:
        state.emit(now, "voice_drop", session=sess.session_id, seqs=[f.seq for f in dropped], reason=reason)


def _new_session_id(state: NodeMacState) -> int:
    sid = ((state.node_index & 0xFF) << 7) | (state.session_counter & 0x7F)
    state.session_counter += 1
    return sid & MAX_SESSION_ID


def active_initiated(state: NodeMacState) -> list[PttSessionState]:
    return [s for s in state.ptt_sessions.values() if s.role == Role.INITIATOR and s.phase != Phase.CLOSED]


def ptt_request(state: NodeMacState, destination: int, now: int) -> int:
    if len(active_initiated(state)) >= state.session_limit:
        raise SessionLimitReached(f"node {state.node_id:#x} already runs {state.session_limit} session(s)")
    sid = _new_session_id(state)
    while sid in state.ptt_sessions:
        sid = _new_session_id(state)
    sess = PttSessionState(
        session_id=sid,
        role=Role.INITIATOR,
        phase=Phase.REQUESTING,
        destination=destination,
        peer=destination,
        requested_at=now,
        last_activity=now,
    )
    state.ptt_sessions[sid] = sess
    state.emit(now, "ptt_request", session=sid, destination=destination)
    state.main_state = MainState.SEARCH_RT
    _acquire_rt(state, sess, now, delayed=False)
    return sid


def ptt_release(state: NodeMacState, session_id: int, now: int) -> None:
    sess = state.ptt_sessions.get(session_id)
    if sess is None or sess.role != Role.INITIATOR:
        raise UnknownSession(f"unknown session {session_id}")
    if sess.phase == Phase.REQUESTING:
        _set_phase(state, sess, SessionEvent.RELEASE_PRESSED, now)
        _close_session(state, sess, now, "aborted")
        return
    # queued speech still goes out; the release PDU follows once the queue is empty
    _set_phase(state, sess, SessionEvent.RELEASE_PRESSED, now)


def enqueue_voice(state: NodeMacState, frame: VoiceFrame, now: int) -> bool:
    sess = state.ptt_sessions.get(frame.session_id)
    if sess is None or sess.phase != Phase.SPEECH or sess.role != Role.INITIATOR:
        state.emit(now, "voice_drop", session=frame.session_id, seqs=[frame.seq], reason="not_in_speech")
        return False
    state.voice_queue.append(frame)
    return True


def poll(state: NodeMacState, now: int) -> None:
    """Timers: response deadlines, allocation retries, receiver inactivity."""
    for sess in list(state.ptt_sessions.values()):
        if sess.role == Role.INITIATOR:
            if sess.phase == Phase.WAIT_RESPONSES and sess.deadline is not None and now >= sess.deadline:
                _set_phase(state, sess, SessionEvent.DEADLINE_EXPIRED, now)
                state.emit(now, "session_failed", session=sess.session_id, reason="no_response")
                _close_session(state, sess, now, "timeout")
            elif sess.rt_slot is None and sess.retry_at is not None and now >= sess.retry_at:
                _acquire_rt(state, sess, now, delayed=False)
        else:
            idle_for = now - sess.last_activity
            if idle_for > INACTIVITY_FRAMES * state.cfg.frame_length_us:
                _set_phase(state, sess, SessionEvent.INACTIVITY, now)
                _close_session(state, sess, now, "inactivity")


def _session_for_slot(state: NodeMacState, kind: SlotKind, slot_id: int) -> PttSessionState | None:
    owned = state.owned_slots.get((kind, slot_id))
    if owned is None or owned.session_id is None:
        return None
    return state.ptt_sessions.get(owned.session_id)


def _next_seq(state: NodeMacState) -> int:
    seq = state.sequence_counter
    state.sequence_counter = (seq + 1) & 0xFFF
    return seq


def build_mgmt_pdu(state: NodeMacState, ctx: SlotContext, now: int) -> MacPdu:
    piggyback = Beacon()
    if state.pending_responses:
        if state.cfg.mgmt_padded_bits >= PTT_RES_BITS:
            sid, positive = state.pending_responses.popleft()
            piggyback = PttResponse(sid, positive)
        else:
            state.counters["ptt_res_unsent"] += len(state.pending_responses)
            for sid, _ in state.pending_responses:
                state.emit(now, "ptt_res_unsent", session=sid)
            state.pending_responses.clear()
    return make_pdu(
        MgmtBody(own_view(state, now), piggyback),
        state.cfg,
        transmitter=state.node_id,
        slot_id_in_cycle=ctx.slot_id_in_cycle,
        frame_index=ctx.frame_index,
        slot_id_in_frame=ctx.slot_id_in_frame,
        sequence=_next_seq(state),
    )


def _on_own_mgmt_slot(state: NodeMacState, ctx: SlotContext, now: int) -> Transmission:
    cycle = state.clock.cycle_us(SlotKind.MGMT)
    for slot in state.owned_slots.values():
        if (
            slot.state == AllocState.ALLOCATING
            and slot.announced_at is not None
            and now - slot.announced_at >= ALLOCATION_CYCLES * cycle
        ):
            slot.state = AllocState.IN_USE
            state.emit(now, "tsa_confirm", slot_kind=slot.kind.value, slot=slot.slot_id)
    pdu = build_mgmt_pdu(state, ctx, now)
    for slot in state.owned_slots.values():
        if slot.announced_at is None:
            slot.announced_at = now
    return Transmission(state.node_id, ctx, pdu)


def _data_pdu(state: NodeMacState, ctx: SlotContext, body, receiver: int = BROADCAST) -> MacPdu:
    return make_pdu(
        body,
        state.cfg,
        transmitter=state.node_id,
        receiver=receiver,
        slot_id_in_cycle=ctx.slot_id_in_cycle,
        frame_index=ctx.frame_index,
        slot_id_in_frame=ctx.slot_id_in_frame,
        sequence=_next_seq(state),
    )


def _on_own_rt_slot(state: NodeMacState, ctx: SlotContext, owned: OwnedSlot, now: int) -> Transmission | None:
    if now < owned.usable_from:
        return None
    sess = _session_for_slot(state, ctx.kind, ctx.slot_id_in_cycle)
    if sess is None:
        return None
    if sess.phase in (Phase.REQUESTING, Phase.SPEECH) and sess.need_request:
        body = SessionRequest(sess.session_id)
        return Transmission(
            state.node_id, ctx, _data_pdu(state, ctx, body, sess.destination), session_id=sess.session_id
        )
    if sess.phase in (Phase.SPEECH, Phase.RELEASING):
        voice = _voice_transmission(state, ctx, sess)
        if voice is not None:
            return voice
    if sess.phase == Phase.RELEASING:
        return Transmission(
            state.node_id, ctx, _data_pdu(state, ctx, SessionRelease(sess.session_id), sess.destination),
            session_id=sess.session_id,
        )
    return None


def _voice_transmission(state: NodeMacState, ctx: SlotContext, sess: PttSessionState) -> Transmission | None:
    n = state.cfg.rt_voice_frames_per_slot
    frames = []
    while state.voice_queue and len(frames) < n and state.voice_queue[0].session_id == sess.session_id:
        frames.append(state.voice_queue.popleft())
    if not frames:
        return None
    body = RtDataBody(tuple(f.payload for f in frames))
    return Transmission(
        state.node_id, ctx, _data_pdu(state, ctx, body, sess.destination), tuple(frames), sess.session_id
    )


def on_slot_boundary(state: NodeMacState, ctx: SlotContext, now: int) -> Transmission | None:
    """Decide what to do in the slot starting now: transmit or listen."""
    if state.sleeping:
        state.main_state = MainState.SLEEP
        return None
    tx = None
    if ctx.kind == SlotKind.MGMT:
        if ctx.slot_id_in_cycle == state.mgmt_slot:
            tx = _on_own_mgmt_slot(state, ctx, now)
    else:
        owned = state.owned_slots.get((ctx.kind, ctx.slot_id_in_cycle))
        if owned is not None:
            tx = _on_own_rt_slot(state, ctx, owned, now)
            if tx is not None:
                owned.used = True
    if tx is not None:
        state.main_state = MainState.TX
    elif any(s.rt_slot is None and s.retry_at is not None for s in active_initiated(state)):
        state.main_state = MainState.SEARCH_RT
    else:
        state.main_state = MainState.RX
    return tx


def on_transmit_complete(state: NodeMacState, tx: Transmission, now: int) -> None:
    body = tx.pdu.body
    sess = state.ptt_sessions.get(tx.session_id) if tx.session_id is not None else None
    if sess is None:
        return
    if isinstance(body, SessionRequest):
        sess.need_request = False
        if sess.phase == Phase.REQUESTING:
            sess.receivers = tuple(sorted(_request_receivers(state, sess, now)))
            if sess.destination == BROADCAST:
                _set_phase(state, sess, SessionEvent.REQUEST_SENT, now, to=Phase.SPEECH)
                sess.established_at = now
                state.emit(now, "session_established", session=sess.session_id, receivers=list(sess.receivers))
            else:
                _set_phase(state, sess, SessionEvent.REQUEST_SENT, now)
                sess.deadline = now + state.clock.cycle_us(SlotKind.MGMT)
        else:
            _set_phase(state, sess, SessionEvent.REQUEST_SENT, now)
    elif isinstance(body, SessionRelease):
        _set_phase(state, sess, SessionEvent.RELEASE_SENT, now)
        _close_session(state, sess, now, "released")


def _request_receivers(state: NodeMacState, sess: PttSessionState, now: int) -> list[int]:
    if sess.destination != BROADCAST:
        return [sess.destination]
    return [addr for addr, _ in _fresh_neighbors(state, now)]


# reception


def on_mgmt_received(state: NodeMacState, pdu: MacPdu, now: int) -> None:
    tx = pdu.header.transmitter
    body: MgmtBody = pdu.body
    state.neighbor_views[tx] = NeighborView(body.bitmap, now)
    for slot in list(state.owned_slots.values()):
        code = body.bitmap[state.clock.bitmap_index(slot.kind, slot.slot_id)]
        if code == SlotCode.COLLISION:
            _collision_on_own(state, slot, tx, now, "reported")
        elif code == SlotCode.TRANSMITTING and slot.state == AllocState.ALLOCATING:
            # the neighbour itself claims our slot
            _collision_on_own(state, slot, tx, now, "claimed")
    pb = body.piggyback
    if isinstance(pb, PttResponse):
        sess = state.ptt_sessions.get(pb.session_id)
        if (
            sess is None
            or sess.role != Role.INITIATOR
            or sess.destination != tx
            or sess.phase != Phase.WAIT_RESPONSES
        ):
            state.counters["ptt_res_ignored"] += 1
            state.emit(now, "ptt_res_ignored", session=pb.session_id, peer=tx)
            return
        sess.responses[tx] = pb.positive
        if pb.positive:
            _set_phase(state, sess, SessionEvent.RESPONSE_POSITIVE, now)
            sess.established_at = now
            state.emit(now, "session_established", session=sess.session_id, receivers=list(sess.receivers))
        else:
            _set_phase(state, sess, SessionEvent.RESPONSE_NEGATIVE, now)
            state.emit(now, "session_failed", session=sess.session_id, reason="rejected")
            _close_session(state, sess, now, "rejected")


def on_ptt_sig_received(state: NodeMacState, pdu: MacPdu, now: int) -> None:
    tx = pdu.header.transmitter
    body = pdu.body
    addressed = pdu.header.receiver in (BROADCAST, state.node_id)
    if isinstance(body, SessionRequest):
        if not addressed:
            return
        sess = state.ptt_sessions.get(body.session_id)
        if sess is not None and sess.role == Role.RESPONDER and sess.peer == tx:
            sess.rt_slot = pdu.header.frame_control.slot_id_in_cycle
            sess.last_activity = now
            return
        if sess is not None:
            state.emit(now, "ptt_ignored", session=body.session_id, phase=sess.phase.value, event="session_id_clash")
            return
        responders = [s for s in state.ptt_sessions.values() if s.role == Role.RESPONDER]
        unicast = pdu.header.receiver == state.node_id
        if unicast and len(responders) >= 8:
            state.pending_responses.append((body.session_id, False))
            return
        sess = PttSessionState(
            session_id=body.session_id,
            role=Role.RESPONDER,
            phase=Phase.SPEECH,
            destination=pdu.header.receiver,
            peer=tx,
            requested_at=now,
            rt_slot=pdu.header.frame_control.slot_id_in_cycle,
            established_at=now,
            need_request=False,
            last_activity=now,
        )
        state.ptt_sessions[body.session_id] = sess
        state.emit(now, "session_joined", session=body.session_id, peer=tx)
        if unicast:
            state.pending_responses.append((body.session_id, True))
    elif isinstance(body, SessionRelease):
        sess = state.ptt_sessions.get(body.session_id)
        if sess is None or sess.role != Role.RESPONDER or sess.peer != tx:
            return
        _set_phase(state, sess, SessionEvent.RELEASE_RECEIVED, now)
        _close_session(state, sess, now, "released")
    elif isinstance(body, SessionRelay):
        state.emit(now, "ptt_ignored", session=None, phase=None, event="relay")


def on_rt_data_received(state: NodeMacState, pdu: MacPdu, now: int) -> tuple[int, ...]:
    """Voice payloads accepted from a session peer; empty when filtered."""
    tx = pdu.header.transmitter
    if state.last_rx_seq.get(tx) == pdu.header.sequence:
        state.counters["rt_dropped_duplicate"] += 1
        state.emit(now, "rt_drop", peer=tx, reason="duplicate")
        return ()
    state.last_rx_seq[tx] = pdu.header.sequence
    for sess in state.ptt_sessions.values():
        if sess.role == Role.RESPONDER and sess.peer == tx and sess.phase == Phase.SPEECH:
            sess.last_activity = now
            return tuple(pdu.body.voice_frames)
    state.counters["rt_dropped_no_session"] += 1
    state.emit(now, "rt_drop", peer=tx, reason="no_session")
    return ()


def on_pdu_received(state: NodeMacState, pdu: MacPdu, now: int) -> tuple[int, ...]:
    body = pdu.body
    if isinstance(body, MgmtBody):
        on_mgmt_received(state, pdu, now)
    elif isinstance(body, (SessionRequest, SessionRelease, SessionRelay)):
        if state.last_rx_seq.get(pdu.header.transmitter) == pdu.header.sequence:
            return ()
        state.last_rx_seq[pdu.header.transmitter] = pdu.header.sequence
        on_ptt_sig_received(state, pdu, now)
    elif isinstance(body, RtDataBody):
        return on_rt_data_received(state, pdu, now)
    return ()
