"""Attribution-guided concept discovery.

Turns attribution signals (a score heatmap and a superpixel partition) into
segmenter prompts, collects candidate concept masks from both guide paths,
and post-processes them into the final concept set: empty masks are dropped,
near-duplicate masks are deduplicated by discarding the smaller of any pair
overlapping above the threshold, and the survivors are capped to keep exact
coalition enumeration tractable.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .masks import BinaryMask, Image, decode_rle, encode_rle, overlap_ratio
from .validation import (
    ContractViolationError,
    EmptyConceptSetError,
    IngestionError,
)

logger = logging.getLogger(__name__)

PROVENANCE_POINT = "heatmap-point"
PROVENANCE_BOX = "superpixel-box"

DEFAULT_SELECTION = (0.05, 0.15, 0.30)
DEFAULT_SUPERPIXEL_COUNT = 6
DEFAULT_MAX_CONCEPTS = 12
DEFAULT_OVERLAP_THRESHOLD = 0.9

__all__ = [
    "HeatMap",
    "GuideParams",
    "SelectionVector",
    "SuperpixelSet",
    "PromptSet",
    "ConceptMask",
    "ConceptSet",
    "extract_guide_params",
    "select_point_prompts",
    "superpixel_boxes",
    "dedup_concepts",
    "discover_concepts",
    "concept_set_to_dict",
    "concept_set_from_dict",
]


class HeatMap:
    """Per-pixel activation scores, same spatial dimensions as the image."""

    __slots__ = ("scores",)

    def __init__(self, scores: np.ndarray):
        arr = np.ascontiguousarray(np.asarray(scores, dtype=np.float32))
        if arr.ndim != 2 or arr.size == 0:
            raise ContractViolationError(f"heatmap must be 2-D and nonempty, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise IngestionError("heatmap contains non-finite scores")
        arr.flags.writeable = False
        object.__setattr__(self, "scores", arr)

    def __setattr__(self, name, value):
        raise AttributeError("HeatMap is immutable")

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]


class GuideParams:
    """Score/coordinate triplets sorted by score, ties in raster order.

    Stored as parallel arrays; item ``i`` is the triplet ``(score, x, y)`` of
    the i-th most important pixel. Equal scores keep (y, x) ascending order so
    the ranking is reproducible.
    """

    __slots__ = ("scores", "xs", "ys")

    def __init__(self, scores, xs, ys):
        scores = np.asarray(scores, dtype=np.float32)
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        if not (len(scores) == len(xs) == len(ys)) or len(scores) == 0:
            raise ContractViolationError("guide params need parallel nonempty arrays")
        if np.any(scores[1:] > scores[:-1]):
            raise ContractViolationError("guide params must be sorted non-increasing")
        for arr in (scores, xs, ys):
            arr.flags.writeable = False
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __setattr__(self, name, value):
        raise AttributeError("GuideParams is immutable")

    def __len__(self) -> int:
        return len(self.scores)

    def __getitem__(self, i: int):
        return float(self.scores[i]), int(self.xs[i]), int(self.ys[i])


class SelectionVector:
    """Fractions in (0, 1], strictly increasing; one point prompt per entry."""

    __slots__ = ("fractions",)

    def __init__(self, fractions):
        fr = tuple(float(f) for f in fractions)
        if not fr:
            raise ContractViolationError("selection vector must be nonempty")
        if any(not (0.0 < f <= 1.0) for f in fr):
            raise ContractViolationError("selection fractions must lie in (0, 1]")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise ContractViolationError("selection fractions must be strictly increasing")
        object.__setattr__(self, "fractions", fr)

    def __setattr__(self, name, value):
        raise AttributeError("SelectionVector is immutable")

    def __iter__(self):
        return iter(self.fractions)

    def __len__(self) -> int:
        return len(self.fractions)


class SuperpixelSet:
    """A partition of the image into regions, optionally importance-ranked."""

    __slots__ = ("labels", "region_ids", "ranking")

    def __init__(self, labels: np.ndarray, region_ids=None, ranking=None):
        arr = np.ascontiguousarray(np.asarray(labels, dtype=np.int32))
        if arr.ndim != 2 or arr.size == 0:
            raise ContractViolationError("superpixel labels must be a nonempty 2-D map")
        present = set(int(v) for v in np.unique(arr))
        if region_ids is None:
            region_ids = sorted(present)
        region_ids = tuple(int(r) for r in region_ids)
        if set(region_ids) != present:
            raise ContractViolationError(
                "region_ids must match the ids present in the label map"
            )
        if len(set(region_ids)) != len(region_ids):
            raise ContractViolationError("region_ids must be distinct")
        if ranking is not None:
            ranking = tuple(int(r) for r in ranking)
            if not set(ranking) <= present:
                raise ContractViolationError("ranking refers to unknown region ids")
        arr.flags.writeable = False
        object.__setattr__(self, "labels", arr)
        object.__setattr__(self, "region_ids", region_ids)
        object.__setattr__(self, "ranking", ranking)

    def __setattr__(self, name, value):
        raise AttributeError("SuperpixelSet is immutable")

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def region_mask(self, region_id: int) -> BinaryMask:
        return BinaryMask(self.labels == int(region_id))


@dataclass(frozen=True)
class PromptSet:
    """Point and box prompts, all within the image bounds."""

    width: int
    height: int
    points: tuple = ()
    boxes: tuple = ()

    def __post_init__(self):
        points = tuple((int(x), int(y)) for x, y in self.points)
        boxes = tuple(tuple(int(v) for v in b) for b in self.boxes)
        for x, y in points:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ContractViolationError(f"point {(x, y)} outside image bounds")
        for x1, y1, x2, y2 in boxes:
            if not (0 <= x1 <= x2 < self.width and 0 <= y1 <= y2 < self.height):
                raise ContractViolationError(f"box {(x1, y1, x2, y2)} invalid or out of bounds")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "boxes", boxes)


@dataclass(frozen=True)
class ConceptMask:
    """A discovered concept: a non-empty mask plus the prompt that produced it."""

    id: str
    mask: BinaryMask
    provenance: str
    prompt: tuple

    def __post_init__(self):
        if self.mask.pixel_count == 0:
            raise ContractViolationError(f"concept {self.id} has an empty mask")
        if self.provenance not in (PROVENANCE_POINT, PROVENANCE_BOX):
            raise ContractViolationError(f"unknown provenance {self.provenance!r}")


class ConceptSet:
    """An ordered collection of concepts over one image, with unique ids."""

    __slots__ = ("concepts",)

    def __init__(self, concepts):
        concepts = tuple(concepts)
        ids = [c.id for c in concepts]
        if len(set(ids)) != len(ids):
            raise ContractViolationError("concept ids must be unique")
        for c in concepts[1:]:
            if (c.mask.width, c.mask.height) != (
                concepts[0].mask.width,
                concepts[0].mask.height,
            ):
                raise ContractViolationError("concepts must share mask dimensions")
        object.__setattr__(self, "concepts", concepts)

    def __setattr__(self, name, value):
        raise AttributeError("ConceptSet is immutable")

    def __iter__(self):
        return iter(self.concepts)

    def __len__(self) -> int:
        return len(self.concepts)

    def __getitem__(self, i) -> ConceptMask:
        return self.concepts[i]

    def ids(self):
        return tuple(c.id for c in self.concepts)

    def masks(self):
        return tuple(c.mask for c in self.concepts)


def extract_guide_params(heatmap: HeatMap) -> GuideParams:
    """Sort activation scores non-increasing; ties keep (y, x) raster order."""
    flat = heatmap.scores.ravel()
    # Stable sort on the negated scores preserves raster order among ties.
    order = np.argsort(-flat, kind="stable")
    ys, xs = np.divmod(order, heatmap.width)
    return GuideParams(flat[order], xs, ys)


def select_point_prompts(params: GuideParams, q: SelectionVector) -> PromptSet:
    """One point per selection fraction, at the fraction's importance rank.

    Fraction ``f`` over ``n`` ranked triplets picks rank ``ceil(f * n) - 1``
    (0-based). Duplicate points are removed preserving order.
    """
    n = len(params)
    points = []
    seen = set()
    for f in q:
        rank = math.ceil(f * n) - 1
        _, x, y = params[rank]
        if (x, y) not in seen:
            seen.add((x, y))
            points.append((x, y))
    width = int(params.xs.max()) + 1
    height = int(params.ys.max()) + 1
    return PromptSet(width=width, height=height, points=tuple(points))


def superpixel_boxes(s: SuperpixelSet, k: int) -> PromptSet:
    """Tight bounding boxes of the top-k ranked regions, in ranking order.

    Falls back to ascending region-id order when the set carries no ranking.
    """
    if k < 1:
        raise ContractViolationError(f"k must be >= 1, got {k}")
    order = s.ranking if s.ranking is not None else s.region_ids
    boxes = []
    for region_id in order[: int(k)]:
        ys, xs = np.nonzero(s.labels == region_id)
        boxes.append((int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())))
    return PromptSet(width=s.width, height=s.height, boxes=tuple(boxes))


def dedup_concepts(candidates, threshold: float = DEFAULT_OVERLAP_THRESHOLD) -> ConceptSet:
    """Discard the smaller mask of any pair overlapping strictly above threshold.

    Pairs are resolved in descending area of the larger member (ties by id),
    which is equivalent to a greedy keep-largest-first scan: a mask survives
    iff it does not overlap a larger surviving mask above the threshold.
    Survivors keep their original order and bits.
    """
    candidates = list(candidates)
    for c in candidates[1:]:
        if (c.mask.width, c.mask.height) != (
            candidates[0].mask.width,
            candidates[0].mask.height,
        ):
            raise ContractViolationError("candidate masks must share dimensions")
    by_size = sorted(candidates, key=lambda c: (-c.mask.pixel_count, c.id))
    kept = []
    for cand in by_size:
        if all(overlap_ratio(cand.mask, survivor.mask) <= threshold for survivor in kept):
            kept.append(cand)
    kept_ids = {c.id for c in kept}
    return ConceptSet(c for c in candidates if c.id in kept_ids)


def discover_concepts(
    image: Image,
    model,
    segmenter,
    q=DEFAULT_SELECTION,
    k: int = DEFAULT_SUPERPIXEL_COUNT,
    *,
    max_concepts: int = DEFAULT_MAX_CONCEPTS,
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD,
) -> ConceptSet:
    """Run both guide paths and post-process the candidates.

    The model oracle supplies the prediction, the score heatmap for the
    predicted class, and the superpixel partition; the segmenter oracle turns
    point and box prompts into masks. Empty segmenter outputs are dropped
    with a warning. Raises :class:`EmptyConceptSetError` when nothing
    survives, and caps the deduplicated set at ``max_concepts`` keeping the
    largest-area concepts.
    """
    if not isinstance(q, SelectionVector):
        q = SelectionVector(q)

    probs = model.predict([image])[0]
    target_class = int(np.argmax(probs))

    heatmap = model.heatmap(image, target_class)
    params = extract_guide_params(heatmap)
    point_prompts = select_point_prompts(params, q)
    point_masks = (
        segmenter.segment_points(image, point_prompts.points)
        if point_prompts.points
        else []
    )

    superpixels = model.superpixels(image, k)
    box_prompts = superpixel_boxes(superpixels, k)
    box_masks = (
        segmenter.segment_boxes(image, box_prompts.boxes) if box_prompts.boxes else []
    )

    candidates = []
    index = 0
    for prompt, mask in zip(point_prompts.points, point_masks):
        if mask.pixel_count == 0:
            logger.warning("dropping empty mask for point prompt %s", prompt)
            continue
        candidates.append(
            ConceptMask(f"c{index:02d}-point", mask, PROVENANCE_POINT, prompt)
        )
        index += 1
    for prompt, mask in zip(box_prompts.boxes, box_masks):
        if mask.pixel_count == 0:
            logger.warning("dropping empty mask for box prompt %s", prompt)
            continue
        candidates.append(ConceptMask(f"c{index:02d}-box", mask, PROVENANCE_BOX, prompt))
        index += 1

    if not candidates:
        raise EmptyConceptSetError("segmenter returned no non-empty masks")

    deduped = dedup_concepts(candidates, overlap_threshold)
    if len(deduped) > max_concepts:
        largest = sorted(deduped, key=lambda c: (-c.mask.pixel_count, c.id))
        keep_ids = {c.id for c in largest[:max_concepts]}
        deduped = ConceptSet(c for c in deduped if c.id in keep_ids)
    return deduped


def concept_set_to_dict(concepts: ConceptSet, image_ref: str | None = None) -> dict:
    """Interchange form used between the explain and evaluate stages."""
    if len(concepts) == 0:
        raise ContractViolationError("cannot serialize an empty concept set")
    first = concepts[0].mask
    return {
        "image": image_ref,
        "width": first.width,
        "height": first.height,
        "concepts": [
            {
                "id": c.id,
                "provenance": c.provenance,
                "prompt": list(c.prompt),
                "rle_mask": encode_rle(c.mask),
                "pixel_count": c.mask.pixel_count,
            }
            for c in concepts
        ],
    }


def concept_set_from_dict(payload: dict) -> ConceptSet:
    width = int(payload["width"])
    height = int(payload["height"])
    concepts = []
    for entry in payload["concepts"]:
        mask = decode_rle(entry["rle_mask"], width, height)
        if mask.pixel_count != entry.get("pixel_count", mask.pixel_count):
            raise IngestionError(f"pixel_count mismatch for concept {entry['id']}")
        concepts.append(
            ConceptMask(
                entry["id"], mask, entry["provenance"], tuple(entry["prompt"])
            )
        )
    return ConceptSet(concepts)
