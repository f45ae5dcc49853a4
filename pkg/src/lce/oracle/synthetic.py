"""Deterministic in-process backends: scene generator, classifier, segmenter,
heatmap guide, and superpixel guide.

The scene is an ultrasound-like speckle field with one darker ellipse. The
classifier depends only on the fraction of dark pixels, so its behaviour on
any composite is known in closed form:

    p(malignant) = sigmoid(steepness * (dark_fraction - midpoint))
    dark_fraction = share of pixels whose channel-mean intensity < threshold

which is what makes desk-scale verification of the whole pipeline possible.
Every operation is a pure function of its inputs plus the configured
parameters; there is no hidden state, so the backend is safe to share across
connections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from scipy.special import expit

from ..discovery import HeatMap, SuperpixelSet
from ..masks import BinaryMask, Image
from ..validation import ContractViolationError

CLASS_NAMES = ("benign", "malignant")

__all__ = [
    "CLASS_NAMES",
    "SceneConfig",
    "SyntheticScene",
    "generate_scene",
    "BackendParams",
    "SyntheticBackend",
]


@dataclass(frozen=True)
class SceneConfig:
    """Knobs of the scene generator; defaults target 64x64 desk-scale scenes."""

    background_mean: float = 0.55
    background_noise: float = 0.12
    lesion_factor: float = 0.33
    lesion_noise: float = 0.10
    semi_axis_range: tuple = (0.14, 0.24)  # fraction of min(width, height)
    axis_ratio_range: tuple = (0.45, 1.0)
    eccentricity_threshold: float = 0.7
    channels: int = 1
    # Testing overrides; None means "draw from the seeded generator".
    center: tuple | None = None
    semi_axes: tuple | None = None
    rotation: float | None = None


@dataclass(frozen=True)
class SyntheticScene:
    """A generated scene with its ground-truth ellipse and label."""

    image: Image
    ellipse: tuple  # (cx, cy, semi_major, semi_minor, rotation)
    label: str
    seed: int

    def ellipse_mask(self) -> BinaryMask:
        """Analytic rasterization of the ground-truth ellipse."""
        cx, cy, a, b, theta = self.ellipse
        return BinaryMask(
            _ellipse_field(self.image.width, self.image.height, cx, cy, a, b, theta)
            <= 1.0
        )


def _ellipse_field(width, height, cx, cy, a, b, theta):
    ys, xs = np.mgrid[0:height, 0:width]
    dx = xs - cx
    dy = ys - cy
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    u = (dx * cos_t + dy * sin_t) / a
    v = (-dx * sin_t + dy * cos_t) / b
    return u * u + v * v


def generate_scene(
    seed: int, width: int = 64, height: int = 64, config: SceneConfig | None = None
) -> SyntheticScene:
    """Seeded speckle background with one darker ellipse, fully in bounds.

    The label is malignant iff the ellipse eccentricity exceeds the configured
    threshold. Identical (seed, dimensions, config) yield bit-identical
    scenes; the draw order below is part of the contract.
    """
    if width < 32 or height < 32:
        raise ContractViolationError("scene dimensions must be at least 32 pixels")
    cfg = config or SceneConfig()
    rng = np.random.default_rng(seed)

    # Draw order: background noise, ellipse geometry, lesion noise.
    background_eps = rng.standard_normal((height, width))
    min_dim = min(width, height)
    lo, hi = cfg.semi_axis_range
    a = rng.uniform(lo, hi) * min_dim
    ratio = rng.uniform(*cfg.axis_ratio_range)
    b = a * ratio
    theta = rng.uniform(0.0, math.pi)
    margin = a + 1.0
    cx = rng.uniform(margin, width - 1 - margin)
    cy = rng.uniform(margin, height - 1 - margin)
    lesion_eps = rng.standard_normal((height, width))

    if cfg.semi_axes is not None:
        a, b = cfg.semi_axes
        ratio = b / a
    if cfg.center is not None:
        cx, cy = cfg.center
    if cfg.rotation is not None:
        theta = cfg.rotation

    background = cfg.background_mean * (1.0 + cfg.background_noise * background_eps)
    lesion_mean = cfg.background_mean * cfg.lesion_factor
    lesion = lesion_mean * (1.0 + cfg.lesion_noise * lesion_eps)
    inside = _ellipse_field(width, height, cx, cy, a, b, theta) <= 1.0
    field = np.where(inside, lesion, background)
    data = np.clip(field, 0.0, 1.0).astype(np.float32)
    if cfg.channels == 3:
        data = np.repeat(data[:, :, np.newaxis], 3, axis=2)

    eccentricity = math.sqrt(max(0.0, 1.0 - ratio * ratio))
    label = CLASS_NAMES[1] if eccentricity > cfg.eccentricity_threshold else CLASS_NAMES[0]
    return SyntheticScene(
        image=Image(data),
        ellipse=(float(cx), float(cy), float(a), float(b), float(theta)),
        label=label,
        seed=int(seed),
    )


@dataclass(frozen=True)
class BackendParams:
    """Parameters of the synthetic classifier, segmenter and guides."""

    dark_threshold: float = 0.25  # classifier: pixel counts as dark below this
    steepness: float = 150.0
    midpoint: float = 0.02
    segment_threshold: float = 0.35  # segmenter and guides: dark-region cut
    smooth_size: int = 5
    grid: int = 4

    def to_dict(self) -> dict:
        return {
            "dark_threshold": self.dark_threshold,
            "steepness": self.steepness,
            "midpoint": self.midpoint,
            "segment_threshold": self.segment_threshold,
            "smooth_size": self.smooth_size,
            "grid": self.grid,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BackendParams":
        return replace(cls(), **payload)


def _gray(image: Image) -> np.ndarray:
    if image.channels == 1:
        return image.data[:, :, 0]
    return image.data.mean(axis=2, dtype=np.float64).astype(np.float32)


class SyntheticBackend:
    """All five oracle capabilities behind one deterministic object."""

    capabilities = (
        "heatmap",
        "predict",
        "segment_boxes",
        "segment_points",
        "superpixels",
    )

    def __init__(self, params: BackendParams | None = None):
        self.params = params or BackendParams()

    # -- classifier ---------------------------------------------------------

    def predict(self, images) -> list:
        """Probability vectors [p(benign), p(malignant)] per the closed form."""
        out = []
        p = self.params
        for image in images:
            dark = float(np.mean(_gray(image) < p.dark_threshold))
            p_mal = float(expit(p.steepness * (dark - p.midpoint)))
            out.append([1.0 - p_mal, p_mal])
        return out

    # -- segmenter ----------------------------------------------------------

    def _dark_labels(self, image: Image):
        dark = _gray(image) < self.params.segment_threshold
        labels, count = ndimage.label(dark)  # 4-connectivity
        return dark, labels, count

    def segment_points(self, image: Image, points) -> list:
        """The dark connected component containing each prompt; empty if the
        prompt lands on a bright pixel."""
        dark, labels, _ = self._dark_labels(image)
        masks = []
        for x, y in points:
            x, y = int(x), int(y)
            if not (0 <= x < image.width and 0 <= y < image.height):
                raise ContractViolationError(f"point {(x, y)} outside image bounds")
            if dark[y, x]:
                masks.append(BinaryMask(labels == labels[y, x]))
            else:
                masks.append(BinaryMask.zeros(image.width, image.height))
        return masks

    def segment_boxes(self, image: Image, boxes) -> list:
        """The largest dark component intersecting each box, clipped to it."""
        _, labels, count = self._dark_labels(image)
        sizes = np.bincount(labels.ravel(), minlength=count + 1)
        masks = []
        for x1, y1, x2, y2 in boxes:
            x1, y1, x2, y2 = int(x1), int(y1), int(x2), int(y2)
            if not (0 <= x1 <= x2 < image.width and 0 <= y1 <= y2 < image.height):
                raise ContractViolationError(f"box {(x1, y1, x2, y2)} out of bounds")
            window = labels[y1 : y2 + 1, x1 : x2 + 1]
            present = np.unique(window)
            present = present[present > 0]
            if present.size == 0:
                masks.append(BinaryMask.zeros(image.width, image.height))
                continue
            # Largest by total component size; ties fall to the lowest label.
            largest = int(present[np.argmax(sizes[present])])
            bits = np.zeros((image.height, image.width), dtype=bool)
            bits[y1 : y2 + 1, x1 : x2 + 1] = window == largest
            masks.append(BinaryMask(bits))
        return masks

    # -- guides -------------------------------------------------------------

    def _darkness(self, image: Image) -> np.ndarray:
        t = self.params.segment_threshold
        return np.clip((t - _gray(image)) / t, 0.0, 1.0).astype(np.float32)

    def heatmap(self, image: Image, target_class: int) -> HeatMap:
        """Smoothed darkness map; the target class does not change the shape
        of the synthetic signal (dark regions drive the malignant score)."""
        if target_class not in (0, 1):
            raise ContractViolationError(f"target_class must be 0 or 1, got {target_class}")
        smooth = ndimage.uniform_filter(
            self._darkness(image), size=self.params.smooth_size, mode="nearest"
        )
        return HeatMap(smooth.astype(np.float32))

    def superpixels(self, image: Image, k: int) -> SuperpixelSet:
        """Grid cells ranked by mean darkness, ranking truncated to top-k."""
        if k < 1:
            raise ContractViolationError(f"k must be >= 1, got {k}")
        g = self.params.grid
        ys = (np.arange(image.height) * g) // image.height
        xs = (np.arange(image.width) * g) // image.width
        labels = (ys[:, np.newaxis] * g + xs[np.newaxis, :]).astype(np.int32)
        darkness = self._darkness(image).astype(np.float64)
        region_ids = list(range(g * g))
        means = ndimage.mean(darkness, labels=labels, index=region_ids)
        order = sorted(region_ids, key=lambda r: (-means[r], r))
        return SuperpixelSet(labels, region_ids, tuple(order[: int(k)]))
