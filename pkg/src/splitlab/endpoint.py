"""Client and server TCP behaviour for the simulator.

Slow start is slot-synchronous: a sender's slot ``k`` lasts one round trip of
its own connection and admits ``2**k * IW`` segments, whether or not earlier
slots were filled. Without loss this gives the same send times as ACK
clocking, and it lines up directly with the per-slot volumes in the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .model import DEFAULT_IW, DEFAULT_MSS, Duration
from .netsim import Kind, Message, Note, Timer
from .option import EsfOption


class Role(str, Enum):
    CLIENT = "client"
    SERVER = "server"


class Phase(str, Enum):
    CLOSED = "closed"
    SYN_SENT = "syn_sent"
    SYN_RECEIVED = "syn_received"
    ESTABLISHED = "established"


class ProtocolError(RuntimeError):
    pass


class SlowStartSender:
    """Byte buffer drained in per-slot windows of ``2**k * iw`` segments.

    Slot 0 begins at the first :meth:`pump` call, i.e. when the connection
    first has something to send.
    """

    def __init__(self, iw: int, mss: int, rtt: Duration):
        if rtt <= 0:
            raise ValueError("sender rtt must be > 0")
        self.iw = iw
        self.mss = mss
        self.rtt = rtt
        self.started_at: Optional[Duration] = None
        self.slot = -1
        self.sent_in_slot = 0
        self.buffered = 0
        self.bytes_sent = 0
        self.segments_per_slot: dict[int, int] = {}

    def offer(self, nbytes: int) -> None:
        self.buffered += nbytes

    @property
    def window(self) -> int:
        return 2 ** max(self.slot, 0) * self.iw

    def pump(self, now: Duration) -> list[int]:
        """Segment sizes that may leave at ``now``."""
        if self.started_at is None:
            self.started_at = now
        slot = int((now - self.started_at) // self.rtt)
        if slot != self.slot:
            self.slot = slot
            self.sent_in_slot = 0
        window = self.window
        out = []
        while self.buffered > 0 and self.sent_in_slot < window:
            size = min(self.mss, self.buffered)
            self.buffered -= size
            self.bytes_sent += size
            self.sent_in_slot += 1
            out.append(size)
        if out:
            self.segments_per_slot[slot] = self.segments_per_slot.get(slot, 0) + len(out)
        return out

    def next_boundary(self) -> Duration:
        return self.started_at + (self.slot + 1) * self.rtt


@dataclass
class EndpointState:
    role: Role
    flow_id: str
    node: str
    peer: str
    phase: Phase = Phase.CLOSED
    bytes_to_send: int = 0
    bytes_received: int = 0
    expected_bytes: int = 0
    iw: int = DEFAULT_IW
    mss: int = DEFAULT_MSS
    rtt: Duration = 0
    request_bytes: int = 0
    request_target: Optional[EsfOption] = None
    opened_at: Optional[Duration] = None
    first_byte_at: Optional[Duration] = None
    last_byte_at: Optional[Duration] = None
    sender: Optional[SlowStartSender] = field(default=None, repr=False)

    @property
    def cwnd_segments(self) -> int:
        return self.sender.window if self.sender is not None else self.iw


def open_connection(state: EndpointState, dst: str, esf_option: EsfOption | None = None,
                    now: Duration = 0) -> Message:
    if state.phase is not Phase.CLOSED:
        raise ProtocolError(f"flow {state.flow_id}: connection already {state.phase.value}")
    state.phase = Phase.SYN_SENT
    state.peer = dst
    state.opened_at = now
    return Message(Kind.SYN, state.flow_id, state.node, dst, esf_option=esf_option)


def _violation(state: EndpointState, msg: Message) -> list:
    return [Note(state.flow_id, "protocol-violation",
                 f"{state.role.value} in {state.phase.value} got {msg.kind.value}; dropped")]


def _send_data(state: EndpointState, now: Duration) -> list:
    sender = state.sender
    out: list = [Message(Kind.DATA, state.flow_id, state.node, state.peer, payload_bytes=size)
                 for size in sender.pump(now)]
    if sender.buffered:
        out.append(Timer(sender.next_boundary(), state.flow_id))
    return out


def on_message(state: EndpointState, msg: Message | Timer, now: Duration) -> list:
    """Advance ``state`` for one delivery and return the resulting outputs."""
    if isinstance(msg, Timer):
        if state.role is Role.SERVER and state.phase is Phase.ESTABLISHED:
            return _send_data(state, now)
        return []

    if state.role is Role.CLIENT:
        if msg.kind is Kind.SYN_ACK and state.phase is Phase.SYN_SENT:
            state.phase = Phase.ESTABLISHED
            return [Message(Kind.ACK, state.flow_id, state.node, state.peer,
                            payload_bytes=state.request_bytes, piggyback_ack=True,
                            request_target=state.request_target)]
        if msg.kind is Kind.DATA and state.phase is Phase.ESTABLISHED:
            if msg.payload_bytes:
                state.bytes_received += msg.payload_bytes
                if state.first_byte_at is None:
                    state.first_byte_at = now
                state.last_byte_at = now
            return []
        return _violation(state, msg)

    if msg.kind is Kind.SYN and state.phase is Phase.CLOSED:
        state.phase = Phase.SYN_RECEIVED
        state.peer = msg.src_node
        return [Message(Kind.SYN_ACK, state.flow_id, state.node, msg.src_node)]
    if msg.kind is Kind.ACK and state.phase is Phase.SYN_RECEIVED:
        state.phase = Phase.ESTABLISHED
        state.bytes_received += msg.payload_bytes
        state.sender = SlowStartSender(state.iw, state.mss, state.rtt)
        state.sender.offer(state.bytes_to_send)
        return _send_data(state, now)
    return _violation(state, msg)


class EndpointNode:
    """A client or server host holding one :class:`EndpointState` per flow."""

    def __init__(self, name: str, role: Role, processing_delay: Duration = 0):
        self.name = name
        self.role = role
        self.processing_delay = processing_delay
        self.flows: dict[str, EndpointState] = {}
        self.pending_opens: dict[str, tuple[str, Optional[EsfOption]]] = {}

    def add_flow(self, state: EndpointState, open_to: str | None = None,
                 esf_option: EsfOption | None = None) -> None:
        self.flows[state.flow_id] = state
        if open_to is not None:
            self.pending_opens[state.flow_id] = (open_to, esf_option)

    def handle(self, item: Message | Timer, now: Duration) -> list:
        state = self.flows.get(item.flow_id)
        if state is None:
            return [Note(item.flow_id, "unknown-flow", f"{self.name} has no state; dropped")]
        if isinstance(item, Timer) and item.tag == "open":
            dst, opt = self.pending_opens.pop(item.flow_id)
            return [open_connection(state, dst, opt, now)]
        return on_message(state, item, now)
