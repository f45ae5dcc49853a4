"""Insertion/Deletion curves and size-weighted faithfulness metrics.

Curves step one explanation unit at a time: insertion starts from the pure
fill image and progressively restores the accumulated units; deletion starts
from the original and progressively replaces them with fill. The x axis is
the fraction of units processed, the y axis the model probability of the
originally predicted class. AUCs are trapezoidal.

The size-weighted scores penalize large explanations through the factor
w = 1 - P_s / P_o, where P_s is the average pixel count of the accumulation
masks and P_o the image pixel count:

    weighted insertion = w * insertion_auc
    weighted deletion  = w * (1 - deletion_auc)
    effect score       = (weighted insertion + weighted deletion) / 2

A whole-image explanation gets weight 0 and therefore effect score 0, no
matter how well its curves score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import BinaryMask, Image, area, composite
from .oracle.client import predict_batched
from .validation import ContractViolationError, check_probability

IDENTITY_TOL = 1e-12

__all__ = [
    "ExplanationSequence",
    "FaithCurve",
    "FaithfulnessReport",
    "insertion_curve",
    "deletion_curve",
    "auc",
    "accumulation_pixel_average",
    "weighted_report",
    "evaluate_sequence",
]


@dataclass(frozen=True)
class ExplanationSequence:
    """Explanation units in importance-descending evaluation order."""

    units: tuple
    source_method: str = ""

    def __post_init__(self):
        units = tuple(self.units)
        if not units:
            raise ContractViolationError("explanation sequence must be nonempty")
        for unit in units[1:]:
            if (unit.width, unit.height) != (units[0].width, units[0].height):
                raise ContractViolationError("units must share dimensions")
        object.__setattr__(self, "units", units)

    def accumulations(self):
        """Union of units 1..i for i = 1..m."""
        acc = self.units[0].bits.copy()
        out = [BinaryMask(acc)]
        for unit in self.units[1:]:
            acc = acc | unit.bits
            out.append(BinaryMask(acc))
        return out


@dataclass(frozen=True)
class FaithCurve:
    """Probability as a function of the fraction of units processed."""

    points: tuple
    direction: str

    def __post_init__(self):
        if self.direction not in ("insertion", "deletion"):
            raise ContractViolationError(f"unknown curve direction {self.direction!r}")
        points = tuple((float(x), float(y)) for x, y in self.points)
        if len(points) < 2 or points[0][0] != 0.0 or points[-1][0] != 1.0:
            raise ContractViolationError("curve must run from fraction 0 to 1")
        xs = [x for x, _ in points]
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ContractViolationError("curve fractions must be non-decreasing")
        object.__setattr__(self, "points", points)


def _curve_composites(image, seq, fill, *, invert):
    masks = [BinaryMask.zeros(image.width, image.height)] + seq.accumulations()
    out = []
    for mask in masks:
        keep = BinaryMask(~mask.bits) if invert else mask
        out.append(composite(image, keep, fill))
    return out


def insertion_curve(image: Image, seq: ExplanationSequence, model, target_class: int, fill: Image) -> FaithCurve:
    """Step 0 is the pure fill; step i restores the union of units 1..i."""
    composites = _curve_composites(image, seq, fill, invert=False)
    probs = predict_batched(model, composites)
    m = len(seq.units)
    points = tuple((i / m, float(p[target_class])) for i, p in enumerate(probs))
    return FaithCurve(points=points, direction="insertion")


def deletion_curve(image: Image, seq: ExplanationSequence, model, target_class: int, fill: Image) -> FaithCurve:
    """Step 0 is the original; step i fills the union of units 1..i."""
    composites = _curve_composites(image, seq, fill, invert=True)
    probs = predict_batched(model, composites)
    m = len(seq.units)
    points = tuple((i / m, float(p[target_class])) for i, p in enumerate(probs))
    return FaithCurve(points=points, direction="deletion")


def auc(curve: FaithCurve) -> float:
    """Trapezoidal integral over the fraction axis."""
    xs = np.array([x for x, _ in curve.points])
    ys = np.array([y for _, y in curve.points])
    return float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)))


def accumulation_pixel_average(seq: ExplanationSequence) -> float:
    """Mean pixel count of the accumulation masks E_1..E_m."""
    accs = seq.accumulations()
    return float(sum(area(a) for a in accs) / len(accs))


def weighted_report(insertion: float, deletion: float, p_s: float, p_o: float):
    """The three size-weighted scores; see the module docstring for formulas."""
    check_probability(insertion, "insertion")
    check_probability(deletion, "deletion")
    if not (0 <= p_s <= p_o):
        raise ContractViolationError(f"need 0 <= p_s <= p_o, got p_s={p_s}, p_o={p_o}")
    weight = 1.0 - p_s / p_o
    insertion_w = weight * insertion
    deletion_w = weight * (1.0 - deletion)
    effect_score = (insertion_w + deletion_w) / 2.0
    return insertion_w, deletion_w, effect_score


@dataclass(frozen=True)
class FaithfulnessReport:
    """AUCs, size terms, weighted scores, and optionally the raw curves."""

    insertion: float
    deletion: float
    p_s: float
    p_o: float
    insertion_w: float
    deletion_w: float
    effect_score: float
    curves: tuple | None = None

    def __post_init__(self):
        expected = weighted_report(self.insertion, self.deletion, self.p_s, self.p_o)
        got = (self.insertion_w, self.deletion_w, self.effect_score)
        if any(abs(a - b) > IDENTITY_TOL for a, b in zip(expected, got)):
            raise ContractViolationError("weighted fields deviate from their formulas")

    @classmethod
    def build(cls, insertion, deletion, p_s, p_o, curves=None) -> "FaithfulnessReport":
        insertion_w, deletion_w, effect_score = weighted_report(insertion, deletion, p_s, p_o)
        return cls(
            insertion=float(insertion),
            deletion=float(deletion),
            p_s=float(p_s),
            p_o=float(p_o),
            insertion_w=insertion_w,
            deletion_w=deletion_w,
            effect_score=effect_score,
            curves=curves,
        )

    def to_dict(self) -> dict:
        payload = {
            "insertion": self.insertion,
            "deletion": self.deletion,
            "p_s": self.p_s,
            "p_o": self.p_o,
            "insertion_w": self.insertion_w,
            "deletion_w": self.deletion_w,
            "effect_score": self.effect_score,
        }
        if self.curves is not None:
            payload["curves"] = {
                c.direction: [[x, y] for x, y in c.points] for c in self.curves
            }
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "FaithfulnessReport":
        curves = None
        if "curves" in payload:
            curves = tuple(
                FaithCurve(points=tuple((x, y) for x, y in pts), direction=direction)
                for direction, pts in sorted(payload["curves"].items())
            )
        return cls(
            insertion=float(payload["insertion"]),
            deletion=float(payload["deletion"]),
            p_s=float(payload["p_s"]),
            p_o=float(payload["p_o"]),
            insertion_w=float(payload["insertion_w"]),
            deletion_w=float(payload["deletion_w"]),
            effect_score=float(payload["effect_score"]),
            curves=curves,
        )


def evaluate_sequence(
    image: Image,
    seq: ExplanationSequence,
    model,
    target_class: int,
    fill: Image,
    *,
    keep_curves: bool = True,
) -> FaithfulnessReport:
    """Both curves, their AUCs, the size terms, and the weighted scores."""
    ins = insertion_curve(image, seq, model, target_class, fill)
    dele = deletion_curve(image, seq, model, target_class, fill)
    p_s = accumulation_pixel_average(seq)
    p_o = image.width * image.height
    return FaithfulnessReport.build(
        insertion=auc(ins),
        deletion=auc(dele),
        p_s=p_s,
        p_o=p_o,
        curves=(ins, dele) if keep_curves else None,
    )
