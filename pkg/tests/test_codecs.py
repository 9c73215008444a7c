import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from splitlab.option import EsfOption, OptionDecodeError, decode_option, encode_option
from splitlab.preamble import ChainPreamble, PreambleError


def hand_encode_option(src_ip, dst_ip, sport, dport):
    """Independent byte-by-byte construction, no struct or ipaddress."""
    out = [253, 16, 0x4D, 0x50]
    for ip in (src_ip, dst_ip):
        out += [int(part) for part in ip.split(".")]
    for port in (sport, dport):
        out += [port >> 8, port & 0xFF]
    return bytes(out)


EXAMPLE = EsfOption("10.0.0.1", "93.184.216.34", 34567, 80)
EXAMPLE_HEX = "FD 10 4D 50 0A 00 00 01 5D B8 D8 22 87 07 00 50"


def test_hand_encoder_reproduces_reference_example():
    assert hand_encode_option("10.0.0.1", "93.184.216.34", 34567, 80) == bytes.fromhex(EXAMPLE_HEX)


def test_encode_example_bytes():
    assert encode_option(EXAMPLE) == bytes.fromhex(EXAMPLE_HEX)
    assert len(encode_option(EXAMPLE)) == 16


def test_roundtrip_random_tuples():
    rng = random.Random(7)
    for _ in range(1000):
        ips = [".".join(str(rng.randrange(256)) for _ in range(4)) for _ in range(2)]
        opt = EsfOption(ips[0], ips[1], rng.randrange(65536), rng.randrange(65536))
        wire = encode_option(opt)
        assert wire == hand_encode_option(opt.src_ip, opt.dst_ip, opt.src_port, opt.dst_port)
        assert decode_option(wire) == opt


@pytest.mark.parametrize("data, code", [
    (bytes.fromhex(EXAMPLE_HEX)[:15], "length"),
    (bytes.fromhex(EXAMPLE_HEX) + b"\x00", "length"),
    (b"\xfe" + bytes.fromhex(EXAMPLE_HEX)[1:], "kind"),
    (b"\xfd\x0c" + bytes.fromhex(EXAMPLE_HEX)[2:], "length"),
    (bytes.fromhex(EXAMPLE_HEX)[:2] + b"\x12\x34" + bytes.fromhex(EXAMPLE_HEX)[4:], "exid"),
])
def test_decode_rejects(data, code):
    with pytest.raises(OptionDecodeError) as info:
        decode_option(data)
    assert info.value.code == code


def test_option_validates_fields():
    with pytest.raises(ValueError):
        EsfOption("10.0.0.1", "::1", 1, 2)
    with pytest.raises(ValueError):
        EsfOption("10.0.0.1", "10.0.0.2", 70000, 2)


# -- chain preamble --------------------------------------------------------------

ipv4 = st.tuples(*[st.integers(0, 255)] * 4).map(lambda t: ".".join(map(str, t)))
hop = st.tuples(ipv4, st.integers(0, 65535))


@given(st.lists(hop, min_size=1, max_size=20))
def test_preamble_roundtrip_and_length(hops):
    p = ChainPreamble(tuple(hops))
    wire = p.encode()
    assert len(wire) == 5 + 6 * len(hops) == p.wire_length
    assert ChainPreamble.decode(wire) == p


def test_preamble_hand_encoding():
    p = ChainPreamble((("127.0.0.1", 8080),))
    assert p.encode() == b"MPX1\x01\x7f\x00\x00\x01\x1f\x90"


def test_preamble_pop():
    p = ChainPreamble((("10.0.0.2", 1000), ("10.0.0.3", 80)))
    head, rest = p.pop()
    assert head == ("10.0.0.2", 1000)
    assert rest == ChainPreamble((("10.0.0.3", 80),))
    head, rest = rest.pop()
    assert head == ("10.0.0.3", 80) and rest is None


@pytest.mark.parametrize("data", [b"XXXX\x01" + b"\x00" * 6, b"MPX1\x00", b"MPX1\x02" + b"\x00" * 6, b"MPX"])
def test_preamble_rejects(data):
    with pytest.raises(PreambleError):
        ChainPreamble.decode(data)


def test_preamble_rejects_empty_chain():
    with pytest.raises(PreambleError):
        ChainPreamble(())
