"""Deterministic discrete-event engine for message exchange over delay links.

One global heap ordered by ``(deliver_at, seq)``. Nodes are plain objects
with a ``handle(item, now)`` method returning a list of outputs:
:class:`Message` (sent after the node's processing delay), :class:`Timer`
(fires back at the same node) or :class:`Note` (trace-only annotation).

Time is exact: ``int`` microseconds, or ``Fraction`` when a scenario splits a
delay unevenly (e.g. 50 ms over three hops).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Optional, Protocol, Union

from .model import Duration, round_half_up
from .option import EsfOption


DEFAULT_MAX_EVENTS = 10**7


class Kind(str, Enum):
    SYN = "SYN"
    SYN_ACK = "SYN_ACK"
    ACK = "ACK"
    DATA = "DATA"


@dataclass
class Message:
    kind: Kind
    flow_id: str
    src_node: str
    dst_node: str
    payload_bytes: int = 0
    piggyback_ack: bool = False
    esf_option: Optional[EsfOption] = None
    # destination named by the application request riding on the ACK (what an
    # explicit proxy parses when no option was present in the SYN)
    request_target: Optional[EsfOption] = None
    # extra hold before the message leaves the node, e.g. a just-in-time boot
    send_delay: Duration = 0

    def describe(self) -> str:
        parts = [self.kind.value, f"bytes={self.payload_bytes}"]
        if self.piggyback_ack:
            parts.append("piggyback")
        if self.esf_option is not None:
            parts.append(f"opt={self.esf_option}")
        return " ".join(parts)


@dataclass
class Timer:
    at: Duration
    flow_id: str
    tag: str = "slot"


@dataclass
class Note:
    flow_id: str
    event: str
    detail: str = ""


@dataclass(order=True)
class SimEvent:
    deliver_at: Duration
    seq: int
    target_node: str = field(compare=False)
    message: Union[Message, Timer] = field(compare=False)


@dataclass
class Link:
    src: str
    dst: str
    one_way_delay: Duration
    bandwidth_bps: Optional[int] = None
    free_at: Duration = 0  # when the sender finishes serializing the previous message

    def serialization(self, payload_bytes: int) -> Duration:
        if not self.bandwidth_bps or not payload_bytes:
            return 0
        value = Fraction(payload_bytes * 8 * 1_000_000, self.bandwidth_bps)
        return value.numerator if value.denominator == 1 else value


class Node(Protocol):
    name: str
    processing_delay: Duration

    def handle(self, item: Union[Message, Timer], now: Duration) -> list: ...


@dataclass(frozen=True)
class TraceEntry:
    time: Duration
    node: str
    event: str
    flow_id: str
    detail: str = ""

    def line(self) -> str:
        return f"{format_us(self.time)} {self.node} {self.event} {self.flow_id} {self.detail}".rstrip()


@dataclass(frozen=True)
class Transmission:
    src: str
    dst: str
    kind: Kind
    flow_id: str
    payload_bytes: int
    sent_at: Duration
    deliver_at: Duration


@dataclass
class FlowResult:
    flow_id: str
    started_at: Duration
    expected_bytes: int
    bytes_received: int = 0
    first_byte_at: Optional[Duration] = None
    last_byte_at: Optional[Duration] = None

    @property
    def complete(self) -> bool:
        return self.bytes_received >= self.expected_bytes and self.last_byte_at is not None

    @property
    def ttfb(self) -> Optional[Duration]:
        return None if self.first_byte_at is None else self.first_byte_at - self.started_at

    @property
    def ttc(self) -> Optional[Duration]:
        return None if self.last_byte_at is None else self.last_byte_at - self.started_at

    @property
    def ttfb_us(self) -> Optional[int]:
        return None if self.ttfb is None else round_half_up(self.ttfb)

    @property
    def ttc_us(self) -> Optional[int]:
        return None if self.ttc is None else round_half_up(self.ttc)


@dataclass
class TraceLog:
    entries: list[TraceEntry] = field(default_factory=list)
    transmissions: list[Transmission] = field(default_factory=list)
    flows: dict[str, FlowResult] = field(default_factory=dict)

    def to_text(self) -> str:
        return "".join(e.line() + "\n" for e in self.entries)

    def events(self, event: str, node: str | None = None) -> list[TraceEntry]:
        return [e for e in self.entries if e.event == event and (node is None or e.node == node)]


def format_us(t: Duration) -> str:
    if isinstance(t, Fraction) and t.denominator != 1:
        return f"{float(t):.3f}"
    return str(int(t))


class SimulationError(RuntimeError):
    pass


class Engine:
    """Single-threaded event loop. One instance per scenario run."""

    def __init__(self, max_events: int = DEFAULT_MAX_EVENTS):
        self.now: Duration = 0
        self.max_events = max_events
        self.nodes: dict[str, Any] = {}
        self.links: dict[tuple[str, str], Link] = {}
        self.trace = TraceLog()
        self._queue: list[SimEvent] = []
        self._seq = 0
        self.processed = 0

    def add_node(self, node) -> None:
        if node.name in self.nodes:
            raise ValueError(f"duplicate node {node.name!r}")
        self.nodes[node.name] = node

    def connect(self, a: str, b: str, one_way_delay: Duration, bandwidth_bps: int | None = None) -> None:
        """Add a pair of directed links with identical parameters."""
        if one_way_delay < 0:
            raise ValueError("link delay must be >= 0")
        self.links[(a, b)] = Link(a, b, one_way_delay, bandwidth_bps)
        self.links[(b, a)] = Link(b, a, one_way_delay, bandwidth_bps)

    def schedule(self, event: SimEvent) -> SimEvent:
        """Enqueue ``event``; its ``seq`` is (re)assigned here to fix the tie-break order."""
        if event.deliver_at < self.now:
            raise SimulationError(f"cannot schedule at {event.deliver_at} before now={self.now}")
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def schedule_at(self, at: Duration, target: str, item: Union[Message, Timer]) -> SimEvent:
        return self.schedule(SimEvent(at, 0, target, item))

    def pop(self) -> SimEvent:
        event = heapq.heappop(self._queue)
        self.now = event.deliver_at
        return event

    def __len__(self) -> int:
        return len(self._queue)

    def note(self, node: str, flow_id: str, event: str, detail: str = "", at: Duration | None = None) -> None:
        self.trace.entries.append(TraceEntry(self.now if at is None else at, node, event, flow_id, detail))

    def transmit(self, msg: Message, sent_at: Duration) -> Duration:
        try:
            link = self.links[(msg.src_node, msg.dst_node)]
        except KeyError:
            raise SimulationError(f"no link {msg.src_node} -> {msg.dst_node}") from None
        depart = max(sent_at, link.free_at)
        ser = link.serialization(msg.payload_bytes)
        link.free_at = depart + ser
        arrive = depart + ser + link.one_way_delay
        self.trace.transmissions.append(
            Transmission(msg.src_node, msg.dst_node, msg.kind, msg.flow_id, msg.payload_bytes, sent_at, arrive))
        self.note(msg.src_node, msg.flow_id, "tx", f"{msg.describe()} to={msg.dst_node}", at=sent_at)
        self.schedule_at(arrive, msg.dst_node, msg)
        return arrive

    def emit(self, node, outputs: Iterable) -> None:
        for out in outputs:
            if isinstance(out, Message):
                self.transmit(out, self.now + node.processing_delay + out.send_delay)
            elif isinstance(out, Timer):
                self.schedule_at(out.at, node.name, out)
            elif isinstance(out, Note):
                self.note(node.name, out.flow_id, out.event, out.detail)
            else:
                raise TypeError(f"unexpected node output {out!r}")

    def run(self) -> TraceLog:
        while self._queue:
            if self.processed >= self.max_events:
                raise SimulationError(
                    f"event cap {self.max_events} reached at t={format_us(self.now)} with "
                    f"{len(self._queue)} events pending; likely livelock")
            event = self.pop()
            self.processed += 1
            node = self.nodes[event.target_node]
            item = event.message
            if isinstance(item, Message):
                self.note(node.name, item.flow_id, "rx", f"{item.describe()} from={item.src_node}")
            self.emit(node, node.handle(item, self.now))
        return self.trace
