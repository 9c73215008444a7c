"""Chain preamble: the first bytes an explicit proxy reads to learn where to dial.

``b"MPX1" | hop_count (u8) | hop_count x (ipv4[4] | port u16 BE)``; the last
hop is the final destination.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass

MAGIC = b"MPX1"
HEADER_LEN = 5
HOP_LEN = 6
MAX_HOPS = 255

Hop = tuple[str, int]


class PreambleError(ValueError):
    pass


@dataclass(frozen=True)
class ChainPreamble:
    hops: tuple[Hop, ...]

    def __post_init__(self):
        hops = tuple((str(ipaddress.IPv4Address(ip)), int(port)) for ip, port in self.hops)
        if not 1 <= len(hops) <= MAX_HOPS:
            raise PreambleError(f"hop count must be 1..{MAX_HOPS}, got {len(hops)}")
        for _, port in hops:
            if not 0 <= port <= 0xFFFF:
                raise PreambleError(f"port out of range: {port}")
        object.__setattr__(self, "hops", hops)

    @property
    def wire_length(self) -> int:
        return HEADER_LEN + HOP_LEN * len(self.hops)

    def pop(self) -> tuple[Hop, "ChainPreamble | None"]:
        """Split off the next hop; the remainder is None when that hop is the destination."""
        head, tail = self.hops[0], self.hops[1:]
        return head, (ChainPreamble(tail) if tail else None)

    def encode(self) -> bytes:
        out = bytearray(MAGIC)
        out.append(len(self.hops))
        for ip, port in self.hops:
            out += ipaddress.IPv4Address(ip).packed + struct.pack("!H", port)
        return bytes(out)

    @classmethod
    def decode(cls, data: bytes) -> "ChainPreamble":
        if len(data) < HEADER_LEN:
            raise PreambleError(f"preamble truncated: {len(data)} bytes")
        hop_count = parse_header(data[:HEADER_LEN])
        body = data[HEADER_LEN:]
        if len(body) != HOP_LEN * hop_count:
            raise PreambleError(f"expected {HOP_LEN * hop_count} hop bytes, got {len(body)}")
        return cls(tuple(_parse_hop(body[i:i + HOP_LEN]) for i in range(0, len(body), HOP_LEN)))


def parse_header(header: bytes) -> int:
    """Validate the 5-byte header and return the hop count."""
    if header[:4] != MAGIC:
        raise PreambleError(f"bad magic {header[:4]!r}")
    hop_count = header[4]
    if hop_count < 1:
        raise PreambleError("hop count must be >= 1")
    return hop_count


def _parse_hop(raw: bytes) -> Hop:
    (port,) = struct.unpack("!H", raw[4:])
    return str(ipaddress.IPv4Address(raw[:4])), port
