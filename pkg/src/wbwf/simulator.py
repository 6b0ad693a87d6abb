"""Discrete-event simulation of a network of MAC nodes.

Timing: nodes decide at slot start, the medium resolves at slot end and the
next slot starts only after that. All randomness comes from one root seed
split by ``numpy.random.SeedSequence`` spawn keys:

    (1, address)  node MAC draws (TSA choice)
    (2, address)  reception draws at that node
    (3,)          tie shuffling in fuzz mode
    (4, address)  synthetic talk spurts

so adding a node never perturbs the streams of the others.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import mac, ptt
from .codec import (
    BROADCAST,
    MgmtBody,
    PttResponse,
    RtDataBody,
    SessionRelay,
    SessionRelease,
    SessionRequest,
    decode,
    encode,
    format_address,
)
from .events import EventQueue
from .mac import FrameClock, SlotContext, Transmission
from .medium import OnAir, ProtocolViolation, Reception, medium_deliver
from .metrics import MetricsCollector, MetricsReport
from .planner import SlotKind
from .ptt import PttUserState, TalkAction
from .scenario import NodeSpec, Scenario

ADDRESS_FIELDS = ("destination", "reporter", "peer", "src", "receiver")


_PTT_LABELS = {SessionRequest: "PTT_REQUEST", SessionRelease: "PTT_RELEASE", SessionRelay: "PTT_RELAY"}


def pdu_label(pdu) -> str:
    return _PTT_LABELS.get(type(pdu.body)) or pdu.header.frame_control.pdu_type.name


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass
class SimNode:
    spec: NodeSpec
    mac: mac.NodeMacState
    user: PttUserState
    rx_rng: np.random.Generator

    @property
    def address(self) -> int:
        return self.spec.address

    @property
    def position(self) -> tuple[float, float]:
        return (self.spec.x, self.spec.y)


@dataclass
class SimResult:
    report: MetricsReport
    trace: list[dict]
    events_executed: int


class Simulator:
    def __init__(self, scenario: Scenario, *, shuffle_seed: int | None = None):
        self.sc = scenario
        self.cfg = scenario.tdma
        self.clock = FrameClock(self.cfg)
        self.shuffle = substream(shuffle_seed, 3) if shuffle_seed is not None else None
        self.queue = EventQueue(self.shuffle)
        self.nodes: list[SimNode] = []
        for i, spec in enumerate(scenario.nodes):
            state = mac.new_node(
                spec.address, spec.mgmt_slot, self.cfg, substream(scenario.seed, 1, spec.address),
                node_index=i, clock=self.clock,
            )
            self.nodes.append(SimNode(spec, state, PttUserState(), substream(scenario.seed, 2, spec.address)))
        self.by_addr = {n.address: n for n in self.nodes}
        self.names = {n.address: n.spec.name for n in self.nodes}
        self.trace: list[dict] = []
        self.metrics = MetricsCollector()
        self.gen_times: dict[tuple[int, int], int] = {}
        self.session_receivers: dict[int, tuple[int, ...]] = {}
        self.guard_us = self.cfg.slot_overhead_symbols * self.cfg.ofdm_symbol_us
        mgmt_owners = {n.spec.mgmt_slot for n in self.nodes}
        per_mgmt = self.cfg.slots_per_frame(SlotKind.MGMT)
        self._active = []
        for fi in range(self.cfg.cycle_frames(SlotKind.MGMT)):
            ids = [e.slot_id_in_frame for e in self.clock.schedule
                   if (e.kind == SlotKind.MGMT and fi * per_mgmt + e.slot_id_in_frame in mgmt_owners)
                   or e.kind == SlotKind.RT]
            self._active.append(ids)

    # trace

    def _name(self, addr):
        if addr is None:
            return None
        if addr == BROADCAST:
            return "broadcast"
        return self.names.get(addr, format_address(addr))

    def record(self, t: int, node: str | None, kind: str, **fields) -> None:
        rec = {"t": t, "node": node, "kind": kind}
        for k, v in fields.items():
            if k in ADDRESS_FIELDS:
                v = self._name(v)
            elif k == "receivers":
                v = [self._name(a) for a in v]
            rec[k] = v
        self.trace.append(rec)
        self.metrics.consume(rec)

    def _drain(self, node: SimNode) -> None:
        for ev in node.mac.drain():
            self.record(ev.time, node.spec.name, ev.kind, **ev.fields)
            self._dispatch(node, ev)

    def _dispatch(self, node: SimNode, ev: mac.MacEvent) -> None:
        sid = ev.fields.get("session")
        user = node.user
        if ev.kind == "session_established":
            self.session_receivers[sid] = tuple(ev.fields["receivers"])
            if user.active_session == sid and ptt.on_session_established(user, ev.time) is not None:
                self.queue.push(ev.time, self._voice, node, sid)
        elif ev.kind == "session_failed" and user.active_session == sid:
            ptt.on_session_failed(user, ev.time)
        elif ev.kind == "session_closed" and ev.fields["role"] == "initiator" and user.active_session == sid:
            ptt.on_session_closed(user, ev.time)

    # scripted user actions

    def _press(self, node: SimNode, action: TalkAction) -> None:
        now = self.now
        try:
            prim = ptt.on_press(node.user, action.destination, now)
        except ptt.AlreadyActive as exc:
            self.record(now, node.spec.name, "press_rejected", reason=str(exc))
            return
        try:
            sid = mac.ptt_request(node.mac, prim.destination, now)
        except mac.SessionLimitReached as exc:
            ptt.on_session_failed(node.user, now)
            self.record(now, node.spec.name, "press_rejected", reason=str(exc))
            return
        ptt.bind_session(node.user, sid)
        self.record(now, node.spec.name, "press", session=sid, destination=prim.destination,
                    synthetic=action.synthetic)
        self._drain(node)

    def _release(self, node: SimNode, action: TalkAction) -> None:
        now = self.now
        user = node.user
        sid = user.active_session
        if sid is None or user.phase not in (ptt.UserPhase.PRESSED_WAITING, ptt.UserPhase.TALKING):
            self.record(now, node.spec.name, "release_ignored", phase=user.phase.value)
            return
        ptt.on_release(user, now)
        self.record(now, node.spec.name, "release", session=sid)
        try:
            mac.ptt_release(node.mac, sid, now)
        except mac.UnknownSession:
            ptt.on_session_closed(user, now)
        self._drain(node)
        if sid not in node.mac.ptt_sessions:
            ptt.on_session_closed(user, now)

    def _voice(self, node: SimNode, sid: int) -> None:
        now = self.now
        if node.user.active_session != sid:
            return
        frame = ptt.generate_frame(node.user, now)
        if frame is None:
            return
        self.gen_times[(sid, frame.seq)] = now
        self.record(now, node.spec.name, "voice_gen", session=sid, seq=frame.seq)
        mac.enqueue_voice(node.mac, frame, now)
        self._drain(node)
        self.queue.push(now + ptt.VOICE_FRAME_INTERVAL_US, self._voice, node, sid)

    def _sleep(self, node: SimNode, asleep: bool) -> None:
        node.mac.sleeping = asleep
        node.mac.main_state = mac.MainState.SLEEP if asleep else mac.MainState.IDLE
        self.record(self.now, node.spec.name, "sleep" if asleep else "wake")

    # slots

    def _order(self) -> list[SimNode]:
        if self.shuffle is None:
            return self.nodes
        idx = self.shuffle.permutation(len(self.nodes))
        return [self.nodes[i] for i in idx]

    def _check_discipline(self, node: SimNode, tx: Transmission) -> None:
        ctx = tx.ctx
        if node.mac.sleeping:
            raise ProtocolViolation(f"{node.spec.name} transmitted while asleep at {ctx.start_us} us")
        if ctx.kind == SlotKind.MGMT:
            ok = ctx.slot_id_in_cycle == node.spec.mgmt_slot
        else:
            ok = (ctx.kind, ctx.slot_id_in_cycle) in node.mac.owned_slots
        if not ok or tx.node != node.address:
            raise ProtocolViolation(
                f"{node.spec.name} transmitted in {ctx.kind.value} slot {ctx.slot_id_in_cycle} "
                f"(frame {ctx.frame_number}) which it does not own"
            )

    def _slot_start(self, frame: int, pos: int) -> None:
        slot_in_frame = self._active[frame % len(self._active)][pos]
        ctx = self.clock.context(frame, slot_in_frame)
        now = ctx.start_us
        order = self._order()
        for node in order:
            mac.poll(node.mac, now)
            self._drain(node)
        on_air = []
        for node in order:
            tx = mac.on_slot_boundary(node.mac, ctx, now)
            self._drain(node)
            if tx is None:
                continue
            self._check_discipline(node, tx)
            bits = encode(tx.pdu, self.cfg)
            on_air.append((node, tx, bits))
            self._trace_tx(node, tx)
        self.queue.push(ctx.end_us, self._slot_end, frame, pos, ctx, on_air)

    def _trace_tx(self, node: SimNode, tx: Transmission) -> None:
        ctx = tx.ctx
        extra = {}
        body = tx.pdu.body
        if isinstance(body, MgmtBody):
            extra["bitmap"] = "".join(str(int(c)) for c in body.bitmap.entries)
            if isinstance(body.piggyback, PttResponse):
                extra["ptt_res"] = [body.piggyback.session_id, int(body.piggyback.positive)]
        if isinstance(body, RtDataBody):
            extra["seqs"] = [f.seq for f in tx.voice]
        if tx.session_id is not None:
            extra["session"] = tx.session_id
        self.record(
            ctx.start_us, node.spec.name, "tx", slot_kind=ctx.kind.value, slot=ctx.slot_id_in_cycle,
            slot_in_frame=ctx.slot_id_in_frame, frame=ctx.frame_number, pdu=pdu_label(tx.pdu),
            seq=tx.pdu.header.sequence, receiver=tx.pdu.header.receiver, **extra,
        )

    def _slot_end(self, frame: int, pos: int, ctx: SlotContext, on_air) -> None:
        now = ctx.end_us
        frame_bits = self.cfg.capacity_bits(ctx.kind)
        for node, tx, _ in on_air:
            mac.on_transmit_complete(node.mac, tx, now)
            self._drain(node)
        senders = {node.address for node, _, _ in on_air}
        air = [OnAir(node.address, node.position, frame_bits) for node, _, _ in on_air]
        bits_of = {node.address: [tx, bits, None] for node, tx, bits in on_air}
        accepted: dict[int, set[int]] = defaultdict(set)
        for node in self.nodes:
            if node.address in senders or node.mac.sleeping:
                continue
            rec = medium_deliver(air, node.address, node.position, self.sc.channel, node.rx_rng, self.guard_us)
            if ctx.kind != SlotKind.MGMT:
                mac.observe_slot(node.mac, ctx.kind, ctx.slot_id_in_cycle, rec.observation)
            if rec.source is None:
                continue
            self._receive(node, rec, ctx, now, bits_of, accepted)
        for node, tx, _ in on_air:
            if isinstance(tx.pdu.body, RtDataBody) and tx.session_id is not None:
                for r in self.session_receivers.get(tx.session_id, ()):
                    if r not in accepted[node.address] and r in self.by_addr:
                        self.record(now, self._name(r), "voice_lost", session=tx.session_id,
                                    seqs=[f.seq for f in tx.voice])
        self._schedule_next(frame, pos)

    def _receive(self, node: SimNode, rec: Reception, ctx: SlotContext, now: int, bits_of, accepted) -> None:
        entry = bits_of[rec.source]
        base = dict(src=rec.source, slot_kind=ctx.kind.value, slot=ctx.slot_id_in_cycle, frame=ctx.frame_number,
                    sensed=rec.sensed, sinr_db=rec.sinr_db, per=rec.per)
        if not rec.delivered:
            self.record(now, node.spec.name, "rx_lost", reason=rec.reason, **base)
            return
        if entry[2] is None:
            # every receiver gets the same bits; decode them once
            entry[2] = decode(entry[1], self.cfg, ctx.kind)
        pdu = entry[2]
        self.record(now, node.spec.name, "rx", pdu=pdu_label(pdu), **base)
        payloads = mac.on_pdu_received(node.mac, pdu, now)
        self._drain(node)
        if payloads:
            accepted[rec.source].add(node.address)
        for payload in payloads:
            sid, seq = ptt.split_payload(payload)
            gen = self.gen_times[(sid, seq)]
            self.record(now, node.spec.name, "voice_rx", session=sid, seq=seq, latency_us=now - gen)

    def _schedule_next(self, frame: int, pos: int) -> None:
        pos += 1
        while pos >= len(self._active[frame % len(self._active)]):
            frame, pos = frame + 1, 0
            if frame * self.cfg.frame_length_us >= self.sc.duration_us:
                return
        ctx = self.clock.context(frame, self._active[frame % len(self._active)][pos])
        if ctx.end_us <= self.sc.duration_us:
            self.queue.push(ctx.start_us, self._slot_start, frame, pos)

    # driver

    def _occurrences(self) -> dict[str, int]:
        out = {k.value: 0 for k in SlotKind}
        F, T = self.cfg.frame_length_us, self.sc.duration_us
        for e in self.clock.schedule:
            if T >= e.end_us:
                out[e.kind.value] += (T - e.end_us) // F + 1
        return out

    def _talk_actions(self) -> list[tuple[SimNode, TalkAction]]:
        acts = [(self.by_addr[self.sc.node(a.node).address], a.action) for a in self.sc.actions]
        syn = self.sc.synthetic
        if syn is not None:
            for name in syn.nodes:
                node = self.by_addr[self.sc.node(name).address]
                rng = substream(self.sc.seed, 4, node.address)
                for a in ptt.synthetic_on_off(rng, self.sc.duration_us, syn.mean_on_ms, syn.mean_off_ms,
                                              syn.destination):
                    acts.append((node, a))
        return acts

    def run(self) -> SimResult:
        self.now = 0
        for node, action in self._talk_actions():
            self.queue.push(action.press_us, self._press, node, action)
            self.queue.push(action.release_us, self._release, node, action)
        for node in self.nodes:
            for a, b in node.spec.sleep_us:
                self.queue.push(a, self._sleep, node, True)
                self.queue.push(b, self._sleep, node, False)
        if self._active[0]:
            first = self.clock.context(0, self._active[0][0])
            if first.end_us <= self.sc.duration_us:
                self.queue.push(first.start_us, self._slot_start, 0, 0)
        T = self.sc.duration_us
        while self.queue:
            t, fn, args = self.queue.pop()
            if t > T:
                break
            if t == T and fn != self._slot_end:
                continue
            self.now = t
            fn(*args)
        self.now = T
        for node in self.nodes:
            pending = defaultdict(list)
            for f in node.mac.voice_queue:
                pending[f.session_id].append(f.seq)
            for sid in sorted(pending):
                self.record(T, node.spec.name, "voice_pending", session=sid, seqs=pending[sid])
        self.record(T, None, "end", occurrences=self._occurrences(), seed=self.sc.seed)
        return SimResult(self.metrics.report(), self.trace, self.queue.executed)


def run(scenario: Scenario, *, shuffle_seed: int | None = None) -> SimResult:
    return Simulator(scenario, shuffle_seed=shuffle_seed).run()
