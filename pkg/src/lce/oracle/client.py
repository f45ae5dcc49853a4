"""Client-side endpoints: in-process, subprocess-stdio, and TCP.

An endpoint owns one connection and is used by one pipeline stage at a time.
Wire endpoints perform the handshake on construction, send requests with
monotonically increasing ids, and re-associate responses by id, so servers
may stream results in any order. Transport failures surface as typed errors
carrying the failing method; they never crash the engine.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import time

from ..discovery import HeatMap, SuperpixelSet
from ..masks import BinaryMask, Image
from . import wire
from .errors import (
    CapabilityError,
    OracleProtocolError,
    OracleRemoteError,
    OracleTimeoutError,
)
from .synthetic import BackendParams, SyntheticBackend

DEFAULT_TIMEOUT_MS = 30_000
DEFAULT_MAX_BATCH = 64
TIMEOUT_ENV_VAR = "LCE_ORACLE_TIMEOUT_MS"

__all__ = [
    "OracleEndpoint",
    "InProcessEndpoint",
    "SubprocessEndpoint",
    "TcpEndpoint",
    "open_endpoint",
    "require_capabilities",
    "predict_batched",
    "DEFAULT_TIMEOUT_MS",
    "DEFAULT_MAX_BATCH",
]


def _effective_timeout_ms(configured: int | None) -> int:
    env = os.environ.get(TIMEOUT_ENV_VAR)
    if env is not None:
        return int(env)
    return DEFAULT_TIMEOUT_MS if configured is None else int(configured)


class OracleEndpoint:
    """Interface shared by every transport."""

    transport = "abstract"
    address: str = ""
    capabilities: tuple = ()
    max_batch: int = DEFAULT_MAX_BATCH

    def predict(self, images) -> list:
        raise NotImplementedError

    def segment_points(self, image: Image, points) -> list:
        raise NotImplementedError

    def segment_boxes(self, image: Image, boxes) -> list:
        raise NotImplementedError

    def heatmap(self, image: Image, target_class: int) -> HeatMap:
        raise NotImplementedError

    def superpixels(self, image: Image, k: int) -> SuperpixelSet:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class InProcessEndpoint(OracleEndpoint):
    """Direct calls into a backend object, no serialization.

    Payload codecs are lossless (float32 raw bytes, exact JSON float
    round-trip, RLE), so results match the wire transports bit for bit.
    """

    transport = "in-process"

    def __init__(self, backend, max_batch: int = DEFAULT_MAX_BATCH):
        self.backend = backend
        self.capabilities = tuple(sorted(backend.capabilities))
        self.max_batch = int(max_batch)
        self.address = type(backend).__name__

    def predict(self, images):
        return self.backend.predict(list(images))

    def segment_points(self, image, points):
        return self.backend.segment_points(image, list(points))

    def segment_boxes(self, image, boxes):
        return self.backend.segment_boxes(image, list(boxes))

    def heatmap(self, image, target_class):
        return self.backend.heatmap(image, int(target_class))

    def superpixels(self, image, k):
        return self.backend.superpixels(image, int(k))


class _WireEndpoint(OracleEndpoint):
    """Framing, handshake and id bookkeeping shared by stdio and TCP."""

    def __init__(self, timeout_ms: int | None, max_batch: int):
        self.timeout_ms = _effective_timeout_ms(timeout_ms)
        self.max_batch = int(max_batch)
        self._next_id = 0
        self._buffer = bytearray()
        self._handshake()

    # Transport primitives supplied by subclasses.
    def _send_bytes(self, payload: bytes) -> None:
        raise NotImplementedError

    def _read_some(self, timeout_s: float) -> bytes:
        """Return some bytes, b"" on EOF; raise OracleTimeoutError on timeout."""
        raise NotImplementedError

    def _read_frame(self, deadline: float, method: str) -> dict:
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                line = bytes(self._buffer[: newline + 1])
                del self._buffer[: newline + 1]
                if not line.strip():
                    continue
                return wire.parse_frame(line)
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise OracleTimeoutError(
                    f"no response within {self.timeout_ms} ms", method
                )
            chunk = self._read_some(remaining)
            if chunk == b"":
                raise OracleProtocolError("endpoint closed the connection", method)
            self._buffer.extend(chunk)

    def _call_many(self, method: str, params_list) -> list:
        """Send one request per params dict, collect results by id."""
        ids = []
        try:
            for params in params_list:
                request_id = self._next_id
                self._next_id += 1
                ids.append(request_id)
                self._send_bytes(
                    wire.dump_frame({"id": request_id, "method": method, "params": params})
                )
        except OSError as exc:
            raise OracleProtocolError(f"transport write failed: {exc}", method) from exc

        pending = set(ids)
        results: dict = {}
        deadline = time.monotonic() + self.timeout_ms / 1000.0
        while pending:
            frame = self._read_frame(deadline, method)
            frame_id = frame.get("id")
            if frame_id not in pending:
                raise OracleProtocolError(
                    f"response for unexpected id {frame_id!r}", method
                )
            pending.discard(frame_id)
            if "error" in frame:
                err = frame["error"] or {}
                raise OracleRemoteError(
                    str(err.get("code", "unknown")), str(err.get("message", "")), method
                )
            if "result" not in frame:
                raise OracleProtocolError("response carries neither result nor error", method)
            results[frame_id] = frame["result"]
        return [results[i] for i in ids]

    def _call(self, method: str, params: dict) -> dict:
        return self._call_many(method, [params])[0]

    def _handshake(self) -> None:
        result = self._call("handshake", {"protocol_version": wire.PROTOCOL_VERSION})
        version = result.get("protocol_version")
        if version != wire.PROTOCOL_VERSION:
            raise OracleProtocolError(
                f"protocol version mismatch: engine {wire.PROTOCOL_VERSION}, endpoint {version}",
                "handshake",
            )
        self.capabilities = tuple(sorted(result.get("capabilities", ())))

    # Typed calls.
    def predict(self, images):
        images = list(images)
        chunks = [
            images[start : start + self.max_batch]
            for start in range(0, len(images), self.max_batch)
        ]
        requests = [
            {"images": [wire.encode_image(i) for i in chunk]} for chunk in chunks
        ]
        out = []
        for chunk, result in zip(chunks, self._call_many("predict", requests)):
            vectors = result["probabilities"]
            if len(vectors) != len(chunk):
                raise OracleProtocolError(
                    f"predict returned {len(vectors)} vectors for {len(chunk)} images",
                    "predict",
                )
            out.extend([float(v) for v in vec] for vec in vectors)
        return out

    def segment_points(self, image, points):
        result = self._call(
            "segment_points",
            {"image": wire.encode_image(image), "points": [list(p) for p in points]},
        )
        return [wire.decode_mask(m) for m in result["masks"]]

    def segment_boxes(self, image, boxes):
        result = self._call(
            "segment_boxes",
            {"image": wire.encode_image(image), "boxes": [list(b) for b in boxes]},
        )
        return [wire.decode_mask(m) for m in result["masks"]]

    def heatmap(self, image, target_class):
        result = self._call(
            "heatmap",
            {"image": wire.encode_image(image), "target_class": int(target_class)},
        )
        return wire.decode_heatmap(result["heatmap"])

    def superpixels(self, image, k):
        result = self._call(
            "superpixels", {"image": wire.encode_image(image), "k": int(k)}
        )
        return wire.decode_superpixels(result["superpixels"])


class SubprocessEndpoint(_WireEndpoint):
    """Launch a command and speak frames over its standard input/output."""

    transport = "subprocess-stdio"

    def __init__(
        self,
        command,
        timeout_ms: int | None = None,
        max_batch: int = DEFAULT_MAX_BATCH,
    ):
        if isinstance(command, str):
            command = shlex.split(command)
        self.address = " ".join(command)
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
        )
        super().__init__(timeout_ms, max_batch)

    def _send_bytes(self, payload: bytes) -> None:
        if self._proc.poll() is not None:
            raise OracleProtocolError(
                f"oracle process exited with code {self._proc.returncode}"
            )
        self._proc.stdin.write(payload)
        self._proc.stdin.flush()

    def _read_some(self, timeout_s: float) -> bytes:
        fd = self._proc.stdout.fileno()
        ready, _, _ = select.select([fd], [], [], timeout_s)
        if not ready:
            raise OracleTimeoutError(f"no response within {self.timeout_ms} ms")
        return os.read(fd, 1 << 16)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=3)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
                self._proc.wait()


class TcpEndpoint(_WireEndpoint):
    """Frames over a TCP socket."""

    transport = "tcp"

    def __init__(
        self,
        host: str,
        port: int,
        timeout_ms: int | None = None,
        max_batch: int = DEFAULT_MAX_BATCH,
    ):
        import socket as socket_module

        self.address = f"{host}:{port}"
        self._sock = socket_module.create_connection((host, port))
        super().__init__(timeout_ms, max_batch)

    def _send_bytes(self, payload: bytes) -> None:
        self._sock.sendall(payload)

    def _read_some(self, timeout_s: float) -> bytes:
        ready, _, _ = select.select([self._sock], [], [], timeout_s)
        if not ready:
            raise OracleTimeoutError(f"no response within {self.timeout_ms} ms")
        return self._sock.recv(1 << 16)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def open_endpoint(
    spec: str,
    timeout_ms: int | None = None,
    max_batch: int = DEFAULT_MAX_BATCH,
) -> OracleEndpoint:
    """Open an endpoint from a spec string.

    Supported forms: ``cmd:<command line>`` (subprocess over stdio),
    ``tcp:<host>:<port>``, and ``synthetic[:{json params}]`` for the built-in
    in-process backend.
    """
    if spec.startswith("cmd:"):
        return SubprocessEndpoint(spec[4:], timeout_ms, max_batch)
    if spec.startswith("tcp:"):
        host, _, port = spec[4:].rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"tcp endpoint spec must be tcp:<host>:<port>, got {spec!r}")
        return TcpEndpoint(host, int(port), timeout_ms, max_batch)
    if spec == "synthetic" or spec.startswith("synthetic:"):
        _, _, raw = spec.partition(":")
        params = BackendParams.from_dict(json.loads(raw)) if raw else BackendParams()
        return InProcessEndpoint(SyntheticBackend(params), max_batch)
    raise ValueError(f"unknown endpoint spec {spec!r}")


def require_capabilities(endpoint: OracleEndpoint, needed) -> OracleEndpoint:
    missing = sorted(set(needed) - set(endpoint.capabilities))
    if missing:
        raise CapabilityError(
            f"endpoint {endpoint.address!r} lacks capabilities: {', '.join(missing)}"
        )
    return endpoint


def predict_batched(endpoint: OracleEndpoint, images) -> list:
    """Predict helper honouring the endpoint's max_batch."""
    images = list(images)
    out = []
    for start in range(0, len(images), endpoint.max_batch):
        out.extend(endpoint.predict(images[start : start + endpoint.max_batch]))
    return out
