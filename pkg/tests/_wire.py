"""Loopback fixtures shared by the wire proxy tests."""

import asyncio
import hashlib
import os

from splitlab.wireproxy import ChainProxy, dial_chain


class Sink:
    """Destination server: reads until EOF, then replies with its own payload."""

    def __init__(self, reply_bytes: int):
        self.reply_bytes = reply_bytes
        self.received: list[str] = []
        self.sent: list[str] = []
        self.server = None

    async def start(self):
        self.server = await asyncio.start_server(self._handle, "127.0.0.1", 0, backlog=1024)
        return self.server.sockets[0].getsockname()[:2]

    async def _handle(self, reader, writer):
        digest = hashlib.sha256()
        while chunk := await reader.read(65536):
            digest.update(chunk)
        self.received.append(digest.hexdigest())
        reply = os.urandom(self.reply_bytes)
        self.sent.append(hashlib.sha256(reply).hexdigest())
        writer.write(reply)
        await writer.drain()
        writer.close()
        await writer.wait_closed()

    async def close(self):
        self.server.close()
        await self.server.wait_closed()


async def exchange(hops, dest, payload: bytes):
    """Send ``payload`` through the chain, half-close, return (sent sha, received sha)."""
    reader, writer = await dial_chain(hops, dest)
    writer.write(payload)
    await writer.drain()
    writer.write_eof()
    digest = hashlib.sha256()
    while chunk := await reader.read(65536):
        digest.update(chunk)
    writer.close()
    await writer.wait_closed()
    return hashlib.sha256(payload).hexdigest(), digest.hexdigest()


async def start_chain(n: int, **kwargs):
    proxies = [ChainProxy(name=f"p{i + 1}", **kwargs) for i in range(n)]
    addrs = [await p.start() for p in proxies]
    return proxies, addrs
