"""The serving loop: one session at a time over TCP or stdio."""

from __future__ import annotations

import socket
import sys
from dataclasses import dataclass

import numpy as np

from .backends import Denoise
from .protocol import VERSION, FrameError, PeerClosed, read_frame, write_error, write_frame


@dataclass
class ServerConfig:
    backend: Denoise
    listen: str | None = None  # "host:port", or None for stdio
    version: int = VERSION


def serve_session(stream, backend: Denoise) -> None:
    """Answer one connection until the peer hangs up.

    Requests are handled strictly in arrival order, one in flight.
    """
    try:
        header, _ = read_frame(stream)
    except PeerClosed:
        return
    except FrameError as exc:
        write_error(stream, exc.code, str(exc))
        return
    if header.get("op") != "hello":
        write_error(stream, "bad-op", "session must open with hello")
        return
    if header.get("version") != VERSION:
        write_error(stream, "bad-version", f"server speaks version {VERSION}")
        return
    write_frame(stream, {"op": "hello", "version": VERSION})

    while True:
        try:
            header, payload = read_frame(stream)
        except PeerClosed:
            return
        except FrameError as exc:
            write_error(stream, exc.code, str(exc))
            return
        op = header.get("op")
        if op != "denoise":
            write_error(stream, "bad-op", f"unsupported op {op!r}")
            return
        if payload is None:
            write_error(stream, "bad-frame", "denoise needs a payload")
            return
        try:
            t = int(header["t"])
            alpha_bar = float(header["alpha_bar"])
        except (KeyError, TypeError, ValueError):
            write_error(stream, "bad-frame", "denoise needs integer t and float alpha_bar")
            return
        try:
            estimate = np.asarray(backend(payload, t, alpha_bar))
        except Exception as exc:  # noqa: BLE001 - backend faults become frames
            write_error(stream, "backend-failure", str(exc))
            return
        if estimate.shape != payload.shape:
            write_error(
                stream,
                "backend-failure",
                f"backend returned shape {estimate.shape}, expected {payload.shape}",
            )
            return
        write_frame(
            stream,
            {
                "op": "result",
                "t": t,
                "alpha_bar": alpha_bar,
                "shape": list(payload.shape),
            },
            estimate,
        )


class DenoiserServer:
    """TCP server answering one connection at a time."""

    def __init__(self, config: ServerConfig):
        if config.listen is None:
            raise ValueError("TCP server needs a listen address")
        host, port = config.listen.rsplit(":", 1)
        self._config = config
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, int(port)))
        self._sock.listen(1)
        self._running = True

    @property
    def port(self) -> int:
        return self._sock.getsockname()[1]

    def serve_forever(self) -> None:
        while self._running:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return  # socket closed by shutdown()
            with conn:
                stream = conn.makefile("rwb")
                try:
                    serve_session(stream, self._config.backend)
                except (BrokenPipeError, ConnectionResetError):
                    pass
                finally:
                    stream.close()

    def shutdown(self) -> None:
        self._running = False
        try:
            self._sock.close()
        except OSError:
            pass


class _StdStream:
    def __init__(self):
        self._in = sys.stdin.buffer
        self._out = sys.stdout.buffer

    def read(self, n):
        return self._in.read(n)

    def write(self, data):
        return self._out.write(data)

    def flush(self):
        self._out.flush()


def serve(config: ServerConfig) -> None:
    """Run until shutdown: TCP accept loop, or a single stdio session."""
    if config.listen is None:
        serve_session(_StdStream(), config.backend)
    else:
        DenoiserServer(config).serve_forever()
