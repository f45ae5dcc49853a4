"""Wire protocol frames and payload codecs.

Frames are single UTF-8 JSON objects terminated by LF, no length prefix.
Requests are ``{id, method, params}``; responses are ``{id, result}`` or
``{id, error: {code, message}}``. JSON is emitted canonically (sorted keys,
compact separators) so identical payloads are identical bytes.

Images travel as base64 of row-major, channel-last, little-endian float32;
masks travel as the run-length string from :mod:`lce.masks`; superpixel label
maps as base64 little-endian int32. Floats embedded directly in JSON (for
example probability vectors) round-trip exactly, so transported results are
bit-identical to in-process ones.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from ..discovery import HeatMap, SuperpixelSet
from ..masks import BinaryMask, Image, decode_rle, encode_rle
from .errors import OracleProtocolError

PROTOCOL_VERSION = 1
ALL_CAPABILITIES = (
    "heatmap",
    "predict",
    "segment_boxes",
    "segment_points",
    "superpixels",
)

__all__ = [
    "PROTOCOL_VERSION",
    "ALL_CAPABILITIES",
    "dump_frame",
    "parse_frame",
    "encode_image",
    "decode_image",
    "encode_mask",
    "decode_mask",
    "encode_heatmap",
    "decode_heatmap",
    "encode_superpixels",
    "decode_superpixels",
]


def dump_frame(obj: dict) -> bytes:
    """Canonical frame bytes: compact sorted-key JSON plus a trailing LF."""
    return (
        json.dumps(obj, separators=(",", ":"), sort_keys=True, allow_nan=False).encode(
            "utf-8"
        )
        + b"\n"
    )


def parse_frame(line: bytes) -> dict:
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise OracleProtocolError(f"malformed frame: {exc}") from exc
    if not isinstance(obj, dict):
        raise OracleProtocolError("frame must be a JSON object")
    return obj


def _b64(arr: np.ndarray, dtype: str) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype=dtype).tobytes()).decode(
        "ascii"
    )


def _unb64(text: str, dtype: str, count: int) -> np.ndarray:
    try:
        raw = base64.b64decode(text, validate=True)
    except Exception as exc:
        raise OracleProtocolError(f"bad base64 payload: {exc}") from exc
    arr = np.frombuffer(raw, dtype=dtype)
    if arr.size != count:
        raise OracleProtocolError(f"payload has {arr.size} values, expected {count}")
    return arr


def encode_image(image: Image) -> dict:
    return {
        "width": image.width,
        "height": image.height,
        "channels": image.channels,
        "data": _b64(image.data, "<f4"),
    }


def decode_image(payload: dict) -> Image:
    w, h, c = int(payload["width"]), int(payload["height"]), int(payload["channels"])
    data = _unb64(payload["data"], "<f4", w * h * c)
    return Image(data.reshape(h, w, c))


def encode_mask(mask: BinaryMask) -> dict:
    return {"width": mask.width, "height": mask.height, "rle": encode_rle(mask)}


def decode_mask(payload: dict) -> BinaryMask:
    return decode_rle(payload["rle"], int(payload["width"]), int(payload["height"]))


def encode_heatmap(heatmap: HeatMap) -> dict:
    return {
        "width": heatmap.width,
        "height": heatmap.height,
        "scores": _b64(heatmap.scores, "<f4"),
    }


def decode_heatmap(payload: dict) -> HeatMap:
    w, h = int(payload["width"]), int(payload["height"])
    scores = _unb64(payload["scores"], "<f4", w * h)
    return HeatMap(scores.reshape(h, w))


def encode_superpixels(s: SuperpixelSet) -> dict:
    return {
        "width": s.width,
        "height": s.height,
        "labels": _b64(s.labels, "<i4"),
        "region_ids": list(s.region_ids),
        "ranking": None if s.ranking is None else list(s.ranking),
    }


def decode_superpixels(payload: dict) -> SuperpixelSet:
    w, h = int(payload["width"]), int(payload["height"])
    labels = _unb64(payload["labels"], "<i4", w * h).reshape(h, w)
    return SuperpixelSet(labels, payload["region_ids"], payload.get("ranking"))
