"""Explicit chain proxy over real TCP streams (asyncio).

A client connects to the first proxy and sends a :class:`ChainPreamble`
listing the remaining proxies and the destination. Each proxy pops the head
hop, dials it, forwards the shortened preamble (none when the head was the
destination) and then splices bytes in both directions, propagating
half-closes.

Stream sockets cannot forward a SYN before ``accept`` returns, so every hop
here performs its handshake sequentially; this is the non-ESF chain.
"""

from __future__ import annotations

import asyncio
import contextlib
import itertools
import logging
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TextIO

from .preamble import HEADER_LEN, HOP_LEN, ChainPreamble, Hop, PreambleError, parse_header

log = logging.getLogger(__name__)

CHUNK = 64 * 1024
DEFAULT_IDLE_TIMEOUT = 30.0
DEFAULT_CONNECT_TIMEOUT = 10.0


class ChainDialError(ConnectionError):
    """Connecting to a hop failed; ``hop_index`` is 0 for the first hop dialled."""

    def __init__(self, hop_index: int, addr: Hop, cause: BaseException):
        super().__init__(f"hop {hop_index} {addr[0]}:{addr[1]} unreachable: {cause}")
        self.hop_index = hop_index
        self.addr = addr


def _now_ns() -> int:
    return time.monotonic_ns()


@dataclass
class RelaySession:
    flow_id: str
    t_accept: int = field(default_factory=_now_ns)
    t_first_byte_down: Optional[int] = None
    t_close: Optional[int] = None
    bytes_up: int = 0
    bytes_down: int = 0
    received_up: int = 0
    received_down: int = 0
    last_activity: int = field(default_factory=_now_ns)
    error: Optional[str] = None

    def metrics_line(self) -> str:
        ttfb = -1 if self.t_first_byte_down is None else (self.t_first_byte_down - self.t_accept) // 1000
        ttc = -1 if self.t_close is None else (self.t_close - self.t_accept) // 1000
        return f"flow={self.flow_id} ttfb_us={ttfb} ttc_us={ttc} up={self.bytes_up} down={self.bytes_down}"


async def read_preamble(reader: asyncio.StreamReader) -> ChainPreamble:
    header = await reader.readexactly(HEADER_LEN)
    hop_count = parse_header(header)
    body = await reader.readexactly(HOP_LEN * hop_count)
    return ChainPreamble.decode(header + body)


async def _open(addr: Hop, hop_index: int, timeout: float):
    try:
        return await asyncio.wait_for(asyncio.open_connection(addr[0], addr[1]), timeout)
    except (OSError, asyncio.TimeoutError) as exc:
        raise ChainDialError(hop_index, addr, exc) from exc


async def dial_chain(hops: Sequence[Hop], dest: Hop, connect_timeout: float = DEFAULT_CONNECT_TIMEOUT):
    """Connect through ``hops`` to ``dest`` and return ``(reader, writer)``.

    With no hops this is a plain connection to ``dest``. Otherwise the first
    proxy receives a preamble naming ``hops[1:]`` followed by ``dest``.
    """
    if not hops:
        return await _open(tuple(dest), 0, connect_timeout)
    reader, writer = await _open(tuple(hops[0]), 0, connect_timeout)
    writer.write(ChainPreamble(tuple(hops[1:]) + (tuple(dest),)).encode())
    await writer.drain()
    return reader, writer


class ChainProxy:
    """One listening proxy instance; sessions run concurrently on the event loop."""

    def __init__(self, idle_timeout: float = DEFAULT_IDLE_TIMEOUT,
                 metrics: TextIO | Callable[[str], None] | None = None,
                 connect_timeout: float = DEFAULT_CONNECT_TIMEOUT, name: str = "proxy"):
        self.idle_timeout = idle_timeout
        self.connect_timeout = connect_timeout
        self.name = name
        self._metrics = metrics
        self._ids = itertools.count(1)
        self.sessions: list[RelaySession] = []
        self.active = 0
        self.server: Optional[asyncio.base_events.Server] = None

    def _emit(self, line: str) -> None:
        if self._metrics is None:
            return
        if callable(self._metrics):
            self._metrics(line)
        else:
            self._metrics.write(line + "\n")
            self._metrics.flush()

    async def start(self, host: str = "127.0.0.1", port: int = 0) -> tuple[str, int]:
        self.server = await asyncio.start_server(self.handle, host, port, backlog=1024)
        sock_host, sock_port = self.server.sockets[0].getsockname()[:2]
        return sock_host, sock_port

    async def close(self) -> None:
        if self.server is not None:
            self.server.close()
            await self.server.wait_closed()

    async def handle(self, up_reader: asyncio.StreamReader, up_writer: asyncio.StreamWriter) -> None:
        session = RelaySession(f"{self.name}-{next(self._ids)}")
        self.sessions.append(session)
        self.active += 1
        down_writer = None
        try:
            try:
                preamble = await asyncio.wait_for(read_preamble(up_reader), self.idle_timeout)
            except (PreambleError, asyncio.IncompleteReadError, asyncio.TimeoutError, ValueError) as exc:
                session.error = f"bad preamble: {exc or type(exc).__name__}"
                log.warning("%s: %s", session.flow_id, session.error)
                return
            head, rest = preamble.pop()
            try:
                down_reader, down_writer = await _open(head, 0, self.connect_timeout)
            except ChainDialError as exc:
                session.error = str(exc)
                log.warning("%s: %s", session.flow_id, exc)
                return
            if rest is not None:
                down_writer.write(rest.encode())
            await self._splice(session, up_reader, up_writer, down_reader, down_writer)
        finally:
            for w in (down_writer, up_writer):
                if w is not None:
                    w.close()
            for w in (down_writer, up_writer):
                if w is not None:
                    with contextlib.suppress(Exception):
                        await w.wait_closed()
            session.t_close = _now_ns()
            self.active -= 1
            self._emit(session.metrics_line())

    async def _splice(self, session, up_reader, up_writer, down_reader, down_writer) -> None:
        async def pipe(reader, writer, upstream_to_downstream: bool):
            while True:
                data = await reader.read(CHUNK)
                session.last_activity = _now_ns()
                if not data:
                    if writer.can_write_eof():
                        with contextlib.suppress(OSError):
                            writer.write_eof()
                    return
                if upstream_to_downstream:
                    session.received_up += len(data)
                else:
                    session.received_down += len(data)
                    if session.t_first_byte_down is None:
                        session.t_first_byte_down = _now_ns()
                writer.write(data)
                await writer.drain()
                if upstream_to_downstream:
                    session.bytes_up += len(data)
                else:
                    session.bytes_down += len(data)

        tasks = [asyncio.ensure_future(pipe(up_reader, down_writer, True)),
                 asyncio.ensure_future(pipe(down_reader, up_writer, False))]
        idle_ns = int(self.idle_timeout * 1e9)
        try:
            pending = set(tasks)
            while pending:
                done, pending = await asyncio.wait(pending, timeout=min(self.idle_timeout, 1.0),
                                                   return_when=asyncio.FIRST_EXCEPTION)
                for t in done:
                    if t.exception() is not None:
                        session.error = f"relay error: {t.exception()}"
                        return
                if pending and _now_ns() - session.last_activity > idle_ns:
                    session.error = "idle timeout"
                    log.info("%s: idle timeout", session.flow_id)
                    return
        finally:
            for t in tasks:
                t.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)


def parse_addr(text: str) -> Hop:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


async def serve(listen_addr: Hop, idle_timeout: float = DEFAULT_IDLE_TIMEOUT,
                metrics: TextIO | None = None) -> None:
    proxy = ChainProxy(idle_timeout=idle_timeout, metrics=metrics if metrics is not None else sys.stdout)
    host, port = await proxy.start(*listen_addr)
    log.info("listening on %s:%d", host, port)
    async with proxy.server:
        await proxy.server.serve_forever()
