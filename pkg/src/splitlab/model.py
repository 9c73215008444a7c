"""Closed-form latency model for TCP connections split by a chain of proxies.

All durations are microseconds. Inputs may be ``int`` or ``Fraction`` so that
even splits such as ``50 ms / 3`` stay exact; every public duration function
returns an ``int``, rounded half-up once at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

Duration = Union[int, Fraction]

DEFAULT_IW = 10
DEFAULT_MSS = 1460


def round_half_up(value: Duration) -> int:
    """Round an exact (int or Fraction) non-negative quantity to integer µs."""
    return math.floor(Fraction(value) + Fraction(1, 2))


def ms(value: float | int | str | Fraction) -> Fraction:
    """Convert a millisecond quantity to exact microseconds.

    Floats go through ``str`` first so that ``37.5`` maps to ``37500``
    rather than a binary approximation.
    """
    if isinstance(value, float):
        value = repr(value)
    return Fraction(value) * 1000


def as_duration(value: Duration) -> Duration:
    """Collapse integral Fractions to int so the fast integer path is used."""
    if isinstance(value, Fraction) and value.denominator == 1:
        return int(value)
    return value


@dataclass(frozen=True)
class ModelParams:
    """Inputs shared by every closed form.

    ``one_way_delay`` is the direct client-server delay D used for no-proxy
    baselines. ``hop_delays`` holds one entry per TCP hop (N+1 entries for N
    proxies); its sum equals D for on-path chains and may exceed it when the
    proxies sit off the direct path.
    """

    one_way_delay: Duration
    hop_delays: tuple[Duration, ...] = field(default=())
    iw: int = DEFAULT_IW
    mss: int = DEFAULT_MSS

    def __post_init__(self):
        hops = tuple(as_duration(Fraction(x)) for x in self.hop_delays)
        if not hops:
            hops = (as_duration(Fraction(self.one_way_delay)),)
        object.__setattr__(self, "hop_delays", hops)
        object.__setattr__(self, "one_way_delay", as_duration(Fraction(self.one_way_delay)))
        if self.one_way_delay < 0:
            raise ValueError("one_way_delay must be >= 0")
        if any(x <= 0 for x in hops) and not (len(hops) == 1 and hops[0] == 0):
            raise ValueError(f"hop delays must be > 0, got {hops}")
        if self.iw < 1:
            raise ValueError("iw must be >= 1")
        if self.mss < 1:
            raise ValueError("mss must be >= 1")

    @classmethod
    def even_split(cls, one_way_delay: Duration, n_proxies: int, iw: int = DEFAULT_IW,
                   mss: int = DEFAULT_MSS) -> "ModelParams":
        if n_proxies < 0:
            raise ValueError("n_proxies must be >= 0")
        hop = Fraction(one_way_delay) / (n_proxies + 1)
        return cls(one_way_delay, (hop,) * (n_proxies + 1), iw=iw, mss=mss)

    @property
    def n_proxies(self) -> int:
        return len(self.hop_delays) - 1

    @property
    def path_delay(self) -> Duration:
        return sum(self.hop_delays)

    @property
    def max_hop(self) -> Duration:
        return max(self.hop_delays)

    @property
    def rtt(self) -> Duration:
        return 2 * self.one_way_delay


@dataclass(frozen=True)
class SlowStartMetrics:
    k: int
    segments: int
    bytes: int
    rate_bps: float
    cumulative_bytes: int
    avg_rate_bps: float


def ttfb_no_proxy(params: ModelParams) -> int:
    """Two RTTs: handshake (3D) plus the first data segment (D)."""
    return round_half_up(4 * Fraction(params.one_way_delay))


def ttfb_sequential_proxies(params: ModelParams) -> int:
    # one full 3-way handshake per hop, back to back, then data crosses the path
    path = Fraction(params.path_delay)
    return round_half_up(3 * path + path)


def _handshake_esf(params: ModelParams) -> Fraction:
    return Fraction(params.path_delay) + 2 * Fraction(params.max_hop)


def handshake_time_esf(params: ModelParams) -> int:
    """Time at which the server sees the final ACK under early SYN forwarding."""
    return round_half_up(_handshake_esf(params))


def ttfb_esf(params: ModelParams) -> int:
    return round_half_up(_handshake_esf(params) + Fraction(params.path_delay))


def slow_start_metrics(params: ModelParams, k: int, rtt: Duration) -> SlowStartMetrics:
    """Per-slot slow-start quantities for slot ``k`` of a connection with round trip ``rtt`` µs."""
    if k < 0:
        raise ValueError(f"slot index must be >= 0, got {k}")
    if rtt <= 0:
        raise ValueError(f"rtt must be > 0, got {rtt}")
    rtt_s = Fraction(rtt) / 1_000_000
    segments = 2**k * params.iw
    nbytes = segments * params.mss
    rate = Fraction(nbytes * 8) / rtt_s
    cumulative = (2 ** (k + 1) - 1) * params.iw * params.mss
    avg_rate = Fraction(params.iw * params.mss * 8) / rtt_s * Fraction(2 ** (k + 1) - 1, k + 1)
    return SlowStartMetrics(k, segments, nbytes, float(rate), cumulative, float(avg_rate))


def slots_needed(flow_bytes: int, params: ModelParams) -> int:
    """Smallest slot index whose cumulative volume covers ``flow_bytes``."""
    if flow_bytes < 1:
        raise ValueError("flow_bytes must be >= 1")
    per_slot0 = params.iw * params.mss
    k = 0
    while (2 ** (k + 1) - 1) * per_slot0 < flow_bytes:
        k += 1
    return k


def _ttc_exact(params: ModelParams, flow_bytes: int, esf: bool, handshake: Fraction | None = None) -> Fraction:
    k = slots_needed(flow_bytes, params)
    path = Fraction(params.path_delay)
    slot = 2 * Fraction(params.max_hop)
    if handshake is None:
        handshake = _handshake_esf(params) if esf else 3 * path
    return handshake + path + k * slot


def ttc(params: ModelParams, flow_bytes: int, esf: bool = True) -> int:
    """Time until the client holds the last payload byte.

    The first part is TTFB (ESF or sequential handshakes). After that, slow
    start runs in parallel on every split hop, so each extra slot costs one
    round trip of the slowest hop. With no proxies this is ``4D + k*2D``.
    """
    return round_half_up(_ttc_exact(params, flow_bytes, esf))


def ttc_even_split(params: ModelParams, flow_bytes: int, n_proxies: int) -> int:
    """ESF chain with ``n_proxies`` evenly splitting ``params.one_way_delay``."""
    split = ModelParams.even_split(params.one_way_delay, n_proxies, iw=params.iw, mss=params.mss)
    return ttc(split, flow_bytes, esf=True)


def baseline_ttc(params: ModelParams, flow_bytes: int) -> int:
    """TTC of the direct client-server connection (no proxies)."""
    k = slots_needed(flow_bytes, params)
    d = Fraction(params.one_way_delay)
    return round_half_up(4 * d + k * 2 * d)


def chain_handshake_time(hop_delays: Sequence[Duration], esf: Sequence[bool] | bool = True,
                         boot_delays: Sequence[Duration] | None = None) -> Fraction:
    """Handshake completion at the server for an arbitrary chain, as an exact Fraction.

    Walks the chain hop by hop: each proxy answers the upstream SYN after its
    boot delay, forwards its own SYN either at once (ESF) or after its
    upstream handshake finished (sequential), and releases the downstream ACK
    once both its upstream ACK and downstream SYN-ACK are in. This covers
    mixed chains and just-in-time boot delays, which the closed forms do not.
    """
    hops = [Fraction(x) for x in hop_delays]
    n = len(hops) - 1
    if isinstance(esf, bool):
        esf = [esf] * n
    boots = [Fraction(b) for b in (boot_delays or [0] * n)]
    if len(esf) != n or len(boots) != n:
        raise ValueError("need one esf flag and one boot delay per proxy")

    syn_in = hops[0]  # SYN reaches node 1 (first proxy, or the server when n == 0)
    listen_done = Fraction(0)
    for i in range(n):
        reply = syn_in + boots[i]  # proxy answers upstream and may forward downstream
        synack_upstream = reply + hops[i]
        # the upstream node ACKs once its SYN-ACK is in and, for a proxy, its own upstream ACK too
        ack_upstream = synack_upstream if i == 0 else max(listen_done, synack_upstream)
        listen_done = ack_upstream + hops[i]
        syn_out = reply if esf[i] else listen_done
        syn_in = syn_out + hops[i + 1]
    synack_upstream = syn_in + hops[n]
    final_ack = synack_upstream if n == 0 else max(listen_done, synack_upstream)
    return final_ack + hops[n]
