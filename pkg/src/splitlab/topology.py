"""Build and run a linear client - proxies - server chain in the simulator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .endpoint import EndpointNode, EndpointState, Role
from .model import DEFAULT_IW, DEFAULT_MSS, Duration
from .netsim import DEFAULT_MAX_EVENTS, Engine, FlowResult, Timer, TraceLog
from .option import EsfOption
from .proxy import Mode, NextHopPolicy, ProxyConfig, ProxyNode

CLIENT = "client"
SERVER = "server"
SERVER_PORT = 80
CLIENT_PORT_BASE = 40000


def proxy_name(i: int) -> str:
    return f"p{i + 1}"


def node_address(index: int) -> str:
    """Chain position 0 is the client, the last position is the server."""
    return f"10.0.0.{index + 1}"


@dataclass
class FlowSpec:
    flow_id: str
    size: int
    start_at: Duration = 0
    client_option: bool = False  # client inserts the 4-tuple option into its SYN
    request_bytes: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"flow {self.flow_id}: size must be >= 1")
        if self.start_at < 0 or self.request_bytes < 0:
            raise ValueError(f"flow {self.flow_id}: negative start or request size")


@dataclass
class ChainSpec:
    """One chain of ``len(hop_delays) - 1`` proxies carrying ``flows``.

    ``esf`` and ``boot_delays`` may be a single value or one entry per proxy.
    ``processing_delay`` is either one value for every node or a mapping
    from node name (``client``, ``p1``..., ``server``) to delay.
    """

    hop_delays: Sequence[Duration]
    flows: Sequence[FlowSpec]
    esf: Union[bool, Sequence[bool]] = True
    mode: Mode = Mode.IMPLICIT
    next_hop_policy: NextHopPolicy = NextHopPolicy.STATIC
    boot_delays: Union[Duration, Sequence[Duration]] = 0
    bandwidth_bps: Optional[int] = None
    processing_delay: Union[Duration, dict] = 0
    iw: int = DEFAULT_IW
    mss: int = DEFAULT_MSS
    max_events: int = DEFAULT_MAX_EVENTS
    _names: list[str] = field(init=False, repr=False, default_factory=list)

    def __post_init__(self):
        if not self.hop_delays or any(x <= 0 for x in self.hop_delays):
            raise ValueError(f"hop delays must be non-empty and > 0: {list(self.hop_delays)}")
        ids = [f.flow_id for f in self.flows]
        if len(set(ids)) != len(ids):
            raise ValueError("flow ids must be unique")
        self._names = [CLIENT] + [proxy_name(i) for i in range(self.n_proxies)] + [SERVER]

    @property
    def n_proxies(self) -> int:
        return len(self.hop_delays) - 1

    @property
    def node_names(self) -> list[str]:
        return list(self._names)

    def per_proxy(self, value, what: str) -> list:
        if isinstance(value, (list, tuple)):
            if len(value) != self.n_proxies:
                raise ValueError(f"{what}: need {self.n_proxies} entries, got {len(value)}")
            return list(value)
        return [value] * self.n_proxies

    def processing_for(self, name: str) -> Duration:
        if isinstance(self.processing_delay, dict):
            return self.processing_delay.get(name, 0)
        return self.processing_delay

    def four_tuple(self, flow_index: int) -> EsfOption:
        return EsfOption(node_address(0), node_address(self.n_proxies + 1),
                         CLIENT_PORT_BASE + flow_index, SERVER_PORT)


def build(chain: ChainSpec) -> Engine:
    engine = Engine(max_events=chain.max_events)
    names = chain.node_names
    addresses = {node_address(i): name for i, name in enumerate(names)}

    def resolve(node: str, dst_ip: str) -> Optional[str]:
        # linear chain: every destination further along lies behind the next node
        target = addresses.get(dst_ip)
        if target is None:
            return None
        here, there = names.index(node), names.index(target)
        return names[here + 1] if there > here else None

    esf = chain.per_proxy(chain.esf, "esf")
    boots = chain.per_proxy(chain.boot_delays, "boot_delays")

    client = EndpointNode(CLIENT, Role.CLIENT, chain.processing_for(CLIENT))
    server = EndpointNode(SERVER, Role.SERVER, chain.processing_for(SERVER))
    engine.add_node(client)
    for i in range(chain.n_proxies):
        cfg = ProxyConfig(mode=chain.mode, esf_enabled=esf[i], boot_delay=boots[i],
                          next_hop=names[i + 2], next_hop_policy=chain.next_hop_policy)
        engine.add_node(ProxyNode(proxy_name(i), cfg, upstream_rtt=2 * chain.hop_delays[i], resolve=resolve,
                                  iw=chain.iw, mss=chain.mss, processing_delay=chain.processing_for(proxy_name(i))))
    engine.add_node(server)
    for i, delay in enumerate(chain.hop_delays):
        engine.connect(names[i], names[i + 1], delay, chain.bandwidth_bps)

    for index, flow in enumerate(chain.flows):
        target = chain.four_tuple(index)
        client.add_flow(
            EndpointState(Role.CLIENT, flow.flow_id, CLIENT, names[1], expected_bytes=flow.size, iw=chain.iw,
                          mss=chain.mss, rtt=2 * chain.hop_delays[0], request_bytes=flow.request_bytes,
                          request_target=target),
            open_to=names[1], esf_option=target if flow.client_option else None)
        server.add_flow(
            EndpointState(Role.SERVER, flow.flow_id, SERVER, names[-2], bytes_to_send=flow.size, iw=chain.iw,
                          mss=chain.mss, rtt=2 * chain.hop_delays[-1]))
        engine.trace.flows[flow.flow_id] = FlowResult(flow.flow_id, flow.start_at, flow.size)
        engine.schedule_at(flow.start_at, CLIENT, Timer(flow.start_at, flow.flow_id, "open"))
    return engine


def run(chain: ChainSpec) -> TraceLog:
    """Simulate every flow of ``chain`` and return the trace with per-flow results."""
    engine = build(chain)
    trace = engine.run()
    client = engine.nodes[CLIENT]
    for flow_id, result in trace.flows.items():
        state = client.flows[flow_id]
        result.bytes_received = state.bytes_received
        result.first_byte_at = state.first_byte_at
        result.last_byte_at = state.last_byte_at
    return trace
