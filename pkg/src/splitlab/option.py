"""The 4-tuple TCP option carried in a SYN so explicit proxies can forward early.

Wire layout (16 bytes, network byte order)::

    kind=253 | len=16 | ExID=0x4D50 | src_ip(4) | dst_ip(4) | src_port(2) | dst_port(2)

Kind 253 is the shared experimental option kind; the ExID tells this option
apart from other experiments using the same kind.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass

OPTION_KIND = 253
OPTION_LENGTH = 16
OPTION_EXID = 0x4D50

_LAYOUT = struct.Struct("!BBH4s4sHH")


class OptionDecodeError(ValueError):
    """Raised for malformed option bytes; ``code`` is one of ``length``, ``kind``, ``exid``."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class EsfOption:
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int

    def __post_init__(self):
        # normalise and validate; raises ValueError on anything but dotted IPv4
        object.__setattr__(self, "src_ip", str(ipaddress.IPv4Address(self.src_ip)))
        object.__setattr__(self, "dst_ip", str(ipaddress.IPv4Address(self.dst_ip)))
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 0xFFFF:
                raise ValueError(f"port out of range: {port}")

    def __str__(self):
        return f"{self.src_ip}:{self.src_port}->{self.dst_ip}:{self.dst_port}"


def encode_option(opt: EsfOption) -> bytes:
    return _LAYOUT.pack(
        OPTION_KIND,
        OPTION_LENGTH,
        OPTION_EXID,
        ipaddress.IPv4Address(opt.src_ip).packed,
        ipaddress.IPv4Address(opt.dst_ip).packed,
        opt.src_port,
        opt.dst_port,
    )


def decode_option(data: bytes) -> EsfOption:
    if len(data) != OPTION_LENGTH:
        raise OptionDecodeError("length", f"option must be {OPTION_LENGTH} bytes, got {len(data)}")
    kind, length, exid, src, dst, sport, dport = _LAYOUT.unpack(data)
    if kind != OPTION_KIND:
        raise OptionDecodeError("kind", f"unexpected option kind {kind}")
    if length != OPTION_LENGTH:
        raise OptionDecodeError("length", f"option length field is {length}, expected {OPTION_LENGTH}")
    if exid != OPTION_EXID:
        raise OptionDecodeError("exid", f"unexpected ExID 0x{exid:04X}")
    return EsfOption(str(ipaddress.IPv4Address(src)), str(ipaddress.IPv4Address(dst)), sport, dport)
