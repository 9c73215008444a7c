import pytest

from splitlab import model
from splitlab.endpoint import (
    EndpointState,
    Phase,
    ProtocolError,
    Role,
    SlowStartSender,
    on_message,
    open_connection,
)
from splitlab.model import ModelParams
from splitlab.netsim import Kind, Message, Note, Timer
from splitlab.option import EsfOption
from splitlab.topology import ChainSpec, FlowSpec, run


def server_state(size, rtt=100_000):
    return EndpointState(Role.SERVER, "f", "server", "client", bytes_to_send=size, rtt=rtt)


def client_state():
    return EndpointState(Role.CLIENT, "f", "client", "server", expected_bytes=1)


def data_of(outputs):
    return [m.payload_bytes for m in outputs if isinstance(m, Message) and m.kind is Kind.DATA]


def test_server_slot_emission_25kb():
    s = server_state(25_000)
    on_message(s, Message(Kind.SYN, "f", "client", "server"), 0)
    out = on_message(s, Message(Kind.ACK, "f", "client", "server"), 100_000)
    assert s.phase is Phase.ESTABLISHED
    assert data_of(out) == [1460] * 10
    timers = [t for t in out if isinstance(t, Timer)]
    assert [t.at for t in timers] == [200_000]
    out = on_message(s, timers[0], 200_000)
    # 10,400 B remain: 7 full segments and a 180 B tail
    assert data_of(out) == [1460] * 7 + [180]
    assert not [t for t in out if isinstance(t, Timer)]


def test_client_acks_synack_immediately():
    c = client_state()
    syn = open_connection(c, "server")
    assert syn.kind is Kind.SYN and syn.esf_option is None and c.phase is Phase.SYN_SENT
    out = on_message(c, Message(Kind.SYN_ACK, "f", "server", "client"), 100_000)
    assert len(out) == 1 and out[0].kind is Kind.ACK and out[0].payload_bytes == 0 and out[0].piggyback_ack


def test_open_with_option_and_twice():
    c = client_state()
    opt = EsfOption("10.0.0.1", "10.0.0.3", 40000, 80)
    assert open_connection(c, "p1", opt).esf_option == opt
    with pytest.raises(ProtocolError):
        open_connection(c, "p1")


def test_syn_at_client_dropped_with_diagnostic():
    c = client_state()
    open_connection(c, "server")
    out = on_message(c, Message(Kind.SYN, "f", "server", "client"), 5)
    assert len(out) == 1 and isinstance(out[0], Note) and out[0].event == "protocol-violation"
    assert c.phase is Phase.SYN_SENT


def test_wrong_phase_in_simulation_is_traced():
    # a second SYN for a flow the server already answered is a protocol violation
    s = server_state(10)
    on_message(s, Message(Kind.SYN, "f", "client", "server"), 0)
    out = on_message(s, Message(Kind.SYN, "f", "client", "server"), 1)
    assert out[0].event == "protocol-violation"


def test_sender_window_doubles_per_slot_even_when_idle():
    sender = SlowStartSender(iw=2, mss=10, rtt=100)
    sender.offer(20)
    assert sender.pump(0) == [10, 10]
    sender.offer(1000)
    assert sender.pump(50) == []  # slot 0 window used up
    assert len(sender.pump(100)) == 4
    assert len(sender.pump(350)) == 16  # slot 3


def _grid():
    iw, mss = 10, 1460
    sizes = {1, 500_000}
    k = 0
    while (2 ** (k + 1) - 1) * iw * mss <= 500_000:
        b = (2 ** (k + 1) - 1) * iw * mss
        sizes |= {b - 1, b, b + 1}
        k += 1
    for n in range(1, 500_000 // mss + 1, 37):
        sizes |= {n * mss - 1, n * mss, n * mss + 1}
    return sorted(s for s in sizes if 1 <= s <= 500_000)


def test_last_slot_and_byte_conservation_grid():
    p = ModelParams(50_000)
    for size in _grid():
        s = server_state(size)
        on_message(s, Message(Kind.SYN, "f", "client", "server"), 0)
        out = on_message(s, Message(Kind.ACK, "f", "client", "server"), 0)
        sent = sum(data_of(out))
        while timers := [t for t in out if isinstance(t, Timer)]:
            out = on_message(s, timers[0], timers[0].at)
            sent += sum(data_of(out))
        assert sent == size
        assert max(s.sender.segments_per_slot) == model.slots_needed(size, p)


def test_first_data_at_handshake_completion():
    trace = run(ChainSpec([50_000], [FlowSpec("f", 30_000)]))
    first = next(t for t in trace.transmissions if t.kind is Kind.DATA)
    ack = next(t for t in trace.transmissions if t.kind is Kind.ACK)
    assert first.sent_at == ack.deliver_at == 150_000
    assert trace.flows["f"].bytes_received == 30_000
