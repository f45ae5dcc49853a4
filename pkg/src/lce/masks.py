"""Pixel-level primitives: images, binary masks, mask algebra and compositing.

Images are float32, intensities in [0, 1], row-major with a trailing channel
axis. Masks are boolean, row-major. All values are frozen after construction
so they can be shared freely between threads; every operation is a pure
function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import (
    ContractViolationError,
    EmptyMaskError,
    IngestionError,
    check_same_shape,
)

__all__ = [
    "Image",
    "BinaryMask",
    "DatasetStats",
    "area",
    "overlap_ratio",
    "composite",
    "union",
    "bounding_box",
    "encode_rle",
    "decode_rle",
]


class Image:
    """Immutable image with shape (height, width, channels), float32 in [0, 1]."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ContractViolationError(
                f"image must have shape (h, w) or (h, w, 1|3), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise IngestionError("image contains non-finite intensities")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ContractViolationError("image intensities must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Image is immutable")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        """Build from float arrays in [0, 1] or uint8 arrays in [0, 255]."""
        arr = np.asarray(arr)
        if arr.dtype == np.uint8:
            arr = arr.astype(np.float32) / 255.0
        return cls(arr)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Image)
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"Image({self.width}x{self.height}x{self.channels})"


class BinaryMask:
    """Immutable boolean mask with a cached population count."""

    __slots__ = ("bits", "pixel_count")

    def __init__(self, bits: np.ndarray):
        arr = np.ascontiguousarray(np.asarray(bits, dtype=bool))
        if arr.ndim != 2:
            raise ContractViolationError(f"mask must be 2-D, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)
        object.__setattr__(self, "pixel_count", int(arr.sum()))

    def __setattr__(self, name, value):
        raise AttributeError("BinaryMask is immutable")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def ones(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BinaryMask)
            and self.bits.shape == other.bits.shape
            and np.array_equal(self.bits, other.bits)
        )

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, {self.pixel_count} px)"


@dataclass(frozen=True)
class DatasetStats:
    """Per-channel intensity mean and standard deviation of a dataset.

    Standard deviations are strictly positive; degenerate (constant) channels
    are floored at 1e-9.
    """

    mean: tuple = field()
    std: tuple = field()

    def __post_init__(self):
        mean = tuple(float(m) for m in np.atleast_1d(self.mean))
        std = tuple(float(s) for s in np.atleast_1d(self.std))
        if len(mean) != len(std) or not mean:
            raise ContractViolationError("stats need one (mean, std) pair per channel")
        if any(s <= 0.0 for s in std):
            raise ContractViolationError("std must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def channels(self) -> int:
        return len(self.mean)


def area(mask: BinaryMask) -> int:
    """Number of set bits in the mask."""
    return mask.pixel_count


def overlap_ratio(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection area over the smaller mask's area.

    The denominator is the smaller operand because the dedup rule downstream
    discards the smaller mask (containment semantics). Returns 0.0 when both
    masks are empty.
    """
    check_same_shape(a, b, "masks")
    smaller = min(a.pixel_count, b.pixel_count)
    if smaller == 0:
        return 0.0
    inter = int(np.count_nonzero(a.bits & b.bits))
    return inter / smaller


def composite(original: Image, keep: BinaryMask, fill: Image) -> Image:
    """Keep original pixels where the mask is set, fill pixels elsewhere."""
    check_same_shape(original, keep, "image and mask")
    check_same_shape(original, fill, "image and fill")
    if original.channels != fill.channels:
        raise ContractViolationError(
            f"fill must have {original.channels} channels, got {fill.channels}"
        )
    out = np.where(keep.bits[:, :, np.newaxis], original.data, fill.data)
    return Image(out)


def union(masks, width: int | None = None, height: int | None = None) -> BinaryMask:
    """Bitwise OR of the masks; an empty list needs explicit dimensions."""
    masks = list(masks)
    if not masks:
        if width is None or height is None:
            raise ContractViolationError("union of no masks needs width and height")
        return BinaryMask.zeros(width, height)
    acc = masks[0].bits.copy()
    for m in masks[1:]:
        check_same_shape(masks[0], m, "masks")
        acc |= m.bits
    return BinaryMask(acc)


def bounding_box(mask: BinaryMask) -> tuple:
    """Tightest (x1, y1, x2, y2) box containing all set bits, inclusive."""
    if mask.pixel_count == 0:
        raise EmptyMaskError("bounding_box of an empty mask")
    rows = np.any(mask.bits, axis=1)
    cols = np.any(mask.bits, axis=0)
    y1, y2 = np.flatnonzero(rows)[[0, -1]]
    x1, x2 = np.flatnonzero(cols)[[0, -1]]
    return int(x1), int(y1), int(x2), int(y2)


def encode_rle(mask: BinaryMask) -> str:
    """Canonical row-major run-length encoding.

    Alternating run counts as decimal integers, starting with a zero-run
    (which may be 0 when the mask begins with a set bit). Runs are maximal,
    so every mask has exactly one encoding.
    """
    flat = mask.bits.ravel()
    n = flat.size
    if n == 0:
        return ""
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [n]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return " ".join(str(r) for r in runs)


def decode_rle(text: str, width: int, height: int) -> BinaryMask:
    """Inverse of :func:`encode_rle`; validates the total pixel count."""
    total = width * height
    text = text.strip()
    counts = [int(tok) for tok in text.split()] if text else []
    if any(c < 0 for c in counts):
        raise IngestionError("negative run length in RLE string")
    if sum(counts) != total:
        raise IngestionError(
            f"RLE covers {sum(counts)} pixels, expected {total} for {width}x{height}"
        )
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for count in counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return BinaryMask(flat.reshape(height, width))
