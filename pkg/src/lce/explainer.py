"""Estimator-style facade over the explanation pipeline.

``LCEExplainer`` composes the pipeline stages behind a scikit-learn flavoured
surface: construction takes plain parameters (``get_params`` /
``set_params`` work as usual), ``fit`` learns the per-channel fill statistics
from reference images, and ``explain`` / ``evaluate`` run the per-image
pipeline against the configured oracle endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .discovery import (
    DEFAULT_MAX_CONCEPTS,
    DEFAULT_OVERLAP_THRESHOLD,
    DEFAULT_SELECTION,
    DEFAULT_SUPERPIXEL_COUNT,
    ConceptSet,
    discover_concepts,
)
from .masks import DatasetStats, Image
from .metrics import ExplanationSequence, FaithfulnessReport, evaluate_sequence
from .oracle.client import OracleEndpoint, open_endpoint, require_capabilities
from .shapley import Explanation, ShapleyResult, baseline_fill, exact_shapley, select_explanation

MODEL_CAPABILITIES = ("predict", "heatmap", "superpixels")
SEGMENTER_CAPABILITIES = ("segment_points", "segment_boxes")

__all__ = ["LCEExplainer", "ExplanationRun", "compute_stats", "MODEL_CAPABILITIES", "SEGMENTER_CAPABILITIES"]


def compute_stats(images) -> DatasetStats:
    """Per-channel mean and population std over all pixels of all images."""
    images = [img if isinstance(img, Image) else Image.from_array(img) for img in images]
    if not images:
        raise NotFittedError("need at least one image to compute statistics")
    channels = images[0].channels
    stacked = np.concatenate(
        [img.data.reshape(-1, channels).astype(np.float64) for img in images]
    )
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), 1e-9)
    return DatasetStats(tuple(mean), tuple(std))


@dataclass(frozen=True)
class ExplanationRun:
    """Everything one explain call produced, reused by evaluate."""

    concepts: ConceptSet
    shapley: ShapleyResult
    explanation: Explanation
    fill: Image
    target_class: int
    seed: int

    def sequence(self, method: str = "lce") -> ExplanationSequence:
        by_id = {c.id: c.mask for c in self.concepts}
        units = tuple(by_id[cid] for cid in self.explanation.ranked_concepts)
        return ExplanationSequence(units=units, source_method=method)


class LCEExplainer(BaseEstimator):
    """Concept discovery + exact Shapley attribution + faithfulness scoring.

    Parameters mirror the pipeline configuration: the two oracle endpoints
    (spec strings or endpoint objects), the point-selection fractions ``q``,
    the superpixel count ``k``, the concept cap, the dedup overlap threshold,
    and the fill seed. ``fit`` estimates the Gaussian fill statistics from
    reference images unless ``fill_stats`` is supplied directly.
    """

    def __init__(
        self,
        model="synthetic",
        segmenter="synthetic",
        q=DEFAULT_SELECTION,
        k=DEFAULT_SUPERPIXEL_COUNT,
        max_concepts=DEFAULT_MAX_CONCEPTS,
        overlap_threshold=DEFAULT_OVERLAP_THRESHOLD,
        seed=0,
        max_batch=64,
        timeout_ms=None,
        fill_stats=None,
    ):
        self.model = model
        self.segmenter = segmenter
        self.q = q
        self.k = k
        self.max_concepts = max_concepts
        self.overlap_threshold = overlap_threshold
        self.seed = seed
        self.max_batch = max_batch
        self.timeout_ms = timeout_ms
        self.fill_stats = fill_stats

    def fit(self, X, y=None):
        """Estimate fill statistics from an iterable of reference images."""
        self.stats_ = self.fill_stats if self.fill_stats is not None else compute_stats(X)
        return self

    def _stats(self) -> DatasetStats:
        if self.fill_stats is not None:
            return self.fill_stats
        if not hasattr(self, "stats_"):
            raise NotFittedError(
                "LCEExplainer needs fill statistics: call fit(images) or pass fill_stats"
            )
        return self.stats_

    def _endpoint(self, configured, needed) -> OracleEndpoint:
        if isinstance(configured, str):
            endpoint = open_endpoint(configured, self.timeout_ms, self.max_batch)
        else:
            endpoint = configured
        return require_capabilities(endpoint, needed)

    def explain(self, image, *, seed=None) -> ExplanationRun:
        """Discover concepts, attribute them exactly, rank them."""
        image = image if isinstance(image, Image) else Image.from_array(image)
        run_seed = self.seed if seed is None else int(seed)
        stats = self._stats()
        model = self._endpoint(self.model, MODEL_CAPABILITIES)
        segmenter = self._endpoint(self.segmenter, SEGMENTER_CAPABILITIES)

        concepts = discover_concepts(
            image,
            model,
            segmenter,
            q=self.q,
            k=self.k,
            max_concepts=self.max_concepts,
            overlap_threshold=self.overlap_threshold,
        )
        fill = baseline_fill(stats, image.width, image.height, image.channels, run_seed)
        result = exact_shapley(
            image,
            concepts,
            model,
            fill,
            max_batch=self.max_batch,
            seed=run_seed,
            fill_stats=stats,
        )
        explanation = select_explanation(result, concepts)
        return ExplanationRun(
            concepts=concepts,
            shapley=result,
            explanation=explanation,
            fill=fill,
            target_class=result.target_class,
            seed=run_seed,
        )

    def evaluate(self, image, run: ExplanationRun, *, keep_curves=True) -> FaithfulnessReport:
        """Faithfulness report for an explain run, reusing its fill."""
        image = image if isinstance(image, Image) else Image.from_array(image)
        model = self._endpoint(self.model, ("predict",))
        return evaluate_sequence(
            image,
            run.sequence(),
            model,
            run.target_class,
            run.fill,
            keep_curves=keep_curves,
        )
