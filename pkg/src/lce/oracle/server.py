"""Serve any backend object over the wire protocol.

A backend is anything exposing a subset of the five capability methods plus a
``capabilities`` tuple. The server enforces the handshake before the first
capability call, answers unknown methods and bad requests with error frames,
and never lets a malformed frame kill the process.
"""

from __future__ import annotations

import socket
import sys
import threading

from ..validation import ContractViolationError
from . import wire

__all__ = ["serve_stream", "serve_stdio", "serve_tcp"]

_ERR_HANDSHAKE = "handshake-required"
_ERR_VERSION = "version-mismatch"
_ERR_UNKNOWN = "unknown-method"
_ERR_BAD_REQUEST = "bad-request"
_ERR_UNSUPPORTED = "unsupported-capability"
_ERR_INTERNAL = "internal"


def _error(request_id, code: str, message: str) -> dict:
    return {"id": request_id, "error": {"code": code, "message": message}}


def _handle(backend, request: dict, shaken: bool):
    """Returns (response_frame, handshake_done)."""
    request_id = request.get("id")
    method = request.get("method")
    params = request.get("params") or {}

    if method == "handshake":
        version = params.get("protocol_version")
        if version != wire.PROTOCOL_VERSION:
            return (
                _error(
                    request_id,
                    _ERR_VERSION,
                    f"server speaks protocol {wire.PROTOCOL_VERSION}, client sent {version}",
                ),
                shaken,
            )
        result = {
            "protocol_version": wire.PROTOCOL_VERSION,
            "capabilities": sorted(backend.capabilities),
        }
        return {"id": request_id, "result": result}, True

    if not shaken:
        return _error(request_id, _ERR_HANDSHAKE, "handshake must precede calls"), shaken
    if method not in wire.ALL_CAPABILITIES:
        return _error(request_id, _ERR_UNKNOWN, f"unknown method {method!r}"), shaken
    if method not in backend.capabilities:
        return (
            _error(request_id, _ERR_UNSUPPORTED, f"backend does not serve {method!r}"),
            shaken,
        )

    try:
        if method == "predict":
            images = [wire.decode_image(p) for p in params["images"]]
            result = {"probabilities": backend.predict(images)}
        elif method == "segment_points":
            image = wire.decode_image(params["image"])
            points = [tuple(p) for p in params["points"]]
            masks = backend.segment_points(image, points)
            result = {"masks": [wire.encode_mask(m) for m in masks]}
        elif method == "segment_boxes":
            image = wire.decode_image(params["image"])
            boxes = [tuple(b) for b in params["boxes"]]
            masks = backend.segment_boxes(image, boxes)
            result = {"masks": [wire.encode_mask(m) for m in masks]}
        elif method == "heatmap":
            image = wire.decode_image(params["image"])
            heatmap = backend.heatmap(image, int(params["target_class"]))
            result = {"heatmap": wire.encode_heatmap(heatmap)}
        else:  # superpixels
            image = wire.decode_image(params["image"])
            sp = backend.superpixels(image, int(params["k"]))
            result = {"superpixels": wire.encode_superpixels(sp)}
    except (KeyError, TypeError, ValueError, ContractViolationError) as exc:
        return _error(request_id, _ERR_BAD_REQUEST, str(exc)), shaken
    except Exception as exc:  # pragma: no cover - backend bug surface
        return _error(request_id, _ERR_INTERNAL, f"{type(exc).__name__}: {exc}"), shaken
    return {"id": request_id, "result": result}, shaken


def serve_stream(backend, reader, writer) -> None:
    """Answer frames from ``reader`` on ``writer`` until EOF."""
    shaken = False
    for line in iter(reader.readline, b""):
        if not line.strip():
            continue
        try:
            request = wire.parse_frame(line)
        except Exception as exc:
            writer.write(wire.dump_frame(_error(None, _ERR_BAD_REQUEST, str(exc))))
            writer.flush()
            continue
        response, shaken = _handle(backend, request, shaken)
        writer.write(wire.dump_frame(response))
        writer.flush()


def serve_stdio(backend) -> None:
    serve_stream(backend, sys.stdin.buffer, sys.stdout.buffer)


def serve_tcp(backend, host: str = "127.0.0.1", port: int = 0, ready_callback=None):
    """Accept connections forever, one handler thread per connection.

    Returns never; ``ready_callback(port)`` fires once the socket listens,
    which is how tests and the CLI learn an ephemeral port.
    """
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    sock.listen()
    if ready_callback is not None:
        ready_callback(sock.getsockname()[1])
    while True:
        conn, _ = sock.accept()
        thread = threading.Thread(target=_serve_conn, args=(backend, conn), daemon=True)
        thread.start()


def _serve_conn(backend, conn: socket.socket) -> None:
    with conn:
        reader = conn.makefile("rb")
        writer = conn.makefile("wb")
        try:
            serve_stream(backend, reader, writer)
        except (BrokenPipeError, ConnectionResetError):
            pass
