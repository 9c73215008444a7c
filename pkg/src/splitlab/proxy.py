"""Split-TCP proxy node: one PCB pair per flow, with optional early SYN forwarding.

The listening side terminates the upstream (client-facing) connection; the
outgoing side starts in ``outgoing_idle`` and dials the next hop either as
soon as the SYN arrives (ESF) or once the upstream handshake completes
(sequential). The downstream ACK, carrying any buffered request bytes, goes
out only when both the upstream ACK and the downstream SYN-ACK are in.

Server-to-client data is re-sent upstream through the proxy's own
slow-start sender, so every split hop runs its own slot clock.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .endpoint import SlowStartSender
from .model import DEFAULT_IW, DEFAULT_MSS, Duration
from .netsim import Kind, Message, Note, Timer
from .option import EsfOption


class Mode(str, Enum):
    IMPLICIT = "implicit"
    EXPLICIT = "explicit"


class NextHopPolicy(str, Enum):
    STATIC = "static"
    OPTION = "option"


class ListenPhase(str, Enum):
    LISTEN = "listen"
    SYN_RECEIVED = "syn_received"
    ESTABLISHED = "established"


class OutgoingPhase(str, Enum):
    IDLE = "outgoing_idle"
    SYN_FORWARDED = "syn_forwarded"
    ESTABLISHED = "established"


@dataclass
class ProxyConfig:
    mode: Mode = Mode.IMPLICIT
    esf_enabled: bool = True
    boot_delay: Duration = 0
    next_hop: Optional[str] = None
    next_hop_policy: NextHopPolicy = NextHopPolicy.STATIC

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.next_hop_policy = NextHopPolicy(self.next_hop_policy)
        if self.boot_delay < 0:
            raise ValueError("boot_delay must be >= 0")


@dataclass
class PcbPair:
    flow_id: str
    upstream: str
    downstream: Optional[str] = None
    listening: ListenPhase = ListenPhase.LISTEN
    outgoing: OutgoingPhase = OutgoingPhase.IDLE
    esf: bool = False
    option: Optional[EsfOption] = None
    request_target: Optional[EsfOption] = None
    buffered_payload: int = 0
    ack_sent: bool = False
    upstream_ack_at: Optional[Duration] = None
    downstream_synack_at: Optional[Duration] = None
    downstream_ack_at: Optional[Duration] = None
    sender: Optional[SlowStartSender] = field(default=None, repr=False)
    timer_at: Optional[Duration] = None
    # per-direction byte accounting (conservation check)
    down_in: int = 0
    up_out: int = 0
    up_in: int = 0
    down_out: int = 0


Resolver = Callable[[str, str], Optional[str]]


class ProxyNode:
    """Simulator node for one proxy instance.

    ``resolve(node, dst_ip)`` maps a destination address to this node's next
    hop; it backs the option-derived next-hop policy.
    """

    def __init__(self, name: str, config: ProxyConfig, upstream_rtt: Duration,
                 resolve: Resolver | None = None, iw: int = DEFAULT_IW, mss: int = DEFAULT_MSS,
                 processing_delay: Duration = 0):
        self.name = name
        self.config = config
        self.upstream_rtt = upstream_rtt
        self.resolve = resolve
        self.iw = iw
        self.mss = mss
        self.processing_delay = processing_delay
        self.booted = config.boot_delay == 0
        self.pairs: dict[str, PcbPair] = {}

    def handle(self, item: Message | Timer, now: Duration) -> list:
        if isinstance(item, Timer):
            pair = self.pairs.get(item.flow_id)
            if pair is None or pair.timer_at != now:
                return []
            pair.timer_at = None
            return self._pump(pair, now)

        pair = self.pairs.get(item.flow_id)
        if item.kind is Kind.SYN:
            if pair is not None:
                return [Note(item.flow_id, "duplicate", "SYN for existing pair ignored")]
            pair = PcbPair(item.flow_id, upstream=item.src_node)
            self.pairs[item.flow_id] = pair
            return self.on_syn(pair, item, now)
        if pair is None:
            return [Note(item.flow_id, "protocol-violation", f"{item.kind.value} without pair; dropped")]
        if item.kind in (Kind.ACK, Kind.SYN_ACK):
            return self.on_handshake_progress(pair, item, now)
        return self.on_data(pair, item, now)

    # -- connection establishment -------------------------------------------------

    def _choose_next_hop(self, pair: PcbPair, target: Optional[EsfOption]) -> list:
        if self.config.next_hop_policy is NextHopPolicy.OPTION and target is not None:
            hop = self.resolve(self.name, target.dst_ip) if self.resolve else None
            if hop is None:
                return [Note(pair.flow_id, "no-route", f"no next hop toward {target.dst_ip}")]
            pair.downstream = hop
        else:
            if self.config.next_hop is None:
                return [Note(pair.flow_id, "no-route", "no static next hop configured")]
            pair.downstream = self.config.next_hop
        return []

    def _downstream_syn(self, pair: PcbPair, send_delay: Duration = 0) -> Message:
        pair.outgoing = OutgoingPhase.SYN_FORWARDED
        return Message(Kind.SYN, pair.flow_id, self.name, pair.downstream,
                       esf_option=pair.option, send_delay=send_delay)

    def on_syn(self, pair: PcbPair, syn: Message, now: Duration) -> list:
        """Answer the upstream SYN and, with ESF, dial downstream at the same instant."""
        out: list = []
        boot = 0
        if not self.booted:
            boot = self.config.boot_delay
            self.booted = True
            out.append(Note(pair.flow_id, "boot", f"instance boots for {boot}us"))

        pair.listening = ListenPhase.SYN_RECEIVED
        pair.option = syn.esf_option
        cfg = self.config
        if cfg.mode is Mode.IMPLICIT:
            pair.esf = cfg.esf_enabled
        else:
            pair.esf = cfg.esf_enabled and syn.esf_option is not None
            if cfg.esf_enabled and syn.esf_option is None:
                out.append(Note(pair.flow_id, "esf-fallback", "explicit proxy without option: sequential handshake"))

        out.append(Message(Kind.SYN_ACK, pair.flow_id, self.name, pair.upstream, send_delay=boot))
        if pair.esf:
            route_notes = self._choose_next_hop(pair, pair.option)
            out.extend(route_notes)
            if not route_notes:
                out.append(self._downstream_syn(pair, send_delay=boot))
        return out

    def on_handshake_progress(self, pair: PcbPair, msg: Message, now: Duration) -> list:
        out: list = []
        if msg.kind is Kind.ACK and msg.src_node == pair.upstream:
            if pair.listening is ListenPhase.ESTABLISHED:
                return [Note(pair.flow_id, "duplicate", "upstream ACK ignored")]
            pair.listening = ListenPhase.ESTABLISHED
            pair.upstream_ack_at = now
            pair.buffered_payload += msg.payload_bytes
            pair.up_in += msg.payload_bytes
            pair.request_target = msg.request_target
            if pair.sender is not None and pair.sender.buffered:
                out.extend(self._pump(pair, now))
            if pair.outgoing is OutgoingPhase.IDLE:
                # sequential dial; an explicit proxy learned the target from the
                # request and inserts it as an option for the hops behind it
                if self.config.mode is Mode.EXPLICIT and pair.option is None:
                    pair.option = msg.request_target
                route_notes = self._choose_next_hop(pair, pair.option or msg.request_target)
                out.extend(route_notes)
                if not route_notes:
                    out.append(self._downstream_syn(pair))
        elif msg.kind is Kind.SYN_ACK and msg.src_node == pair.downstream:
            if pair.outgoing is OutgoingPhase.ESTABLISHED:
                return [Note(pair.flow_id, "duplicate", "downstream SYN_ACK ignored")]
            pair.outgoing = OutgoingPhase.ESTABLISHED
            pair.downstream_synack_at = now
        else:
            return [Note(pair.flow_id, "protocol-violation", f"unexpected {msg.kind.value} from {msg.src_node}")]

        if (not pair.ack_sent and pair.listening is ListenPhase.ESTABLISHED
                and pair.outgoing is OutgoingPhase.ESTABLISHED):
            pair.ack_sent = True
            pair.downstream_ack_at = now
            payload, pair.buffered_payload = pair.buffered_payload, 0
            pair.down_out += payload
            out.append(Message(Kind.ACK, pair.flow_id, self.name, pair.downstream, payload_bytes=payload,
                               piggyback_ack=True, request_target=pair.request_target))
        return out

    # -- data ---------------------------------------------------------------------

    def on_data(self, pair: PcbPair, msg: Message, now: Duration) -> list:
        if msg.src_node == pair.upstream:
            # client-to-server bytes ride behind the downstream ACK
            pair.up_in += msg.payload_bytes
            if not pair.ack_sent:
                pair.buffered_payload += msg.payload_bytes
                return []
            pair.down_out += msg.payload_bytes
            return [Message(Kind.DATA, pair.flow_id, self.name, pair.downstream, payload_bytes=msg.payload_bytes)]

        if msg.payload_bytes == 0:
            return [Message(Kind.DATA, pair.flow_id, self.name, pair.upstream, payload_bytes=0)]
        pair.down_in += msg.payload_bytes
        if pair.sender is None:
            pair.sender = SlowStartSender(self.iw, self.mss, self.upstream_rtt)
        pair.sender.offer(msg.payload_bytes)
        if pair.listening is not ListenPhase.ESTABLISHED:
            return [Note(pair.flow_id, "buffered", "data before upstream handshake completed")]
        return self._pump(pair, now)

    def _pump(self, pair: PcbPair, now: Duration) -> list:
        sender = pair.sender
        out: list = []
        for size in sender.pump(now):
            pair.up_out += size
            out.append(Message(Kind.DATA, pair.flow_id, self.name, pair.upstream, payload_bytes=size))
        if sender.buffered and pair.timer_at is None:
            pair.timer_at = sender.next_boundary()
            out.append(Timer(pair.timer_at, pair.flow_id))
        return out
