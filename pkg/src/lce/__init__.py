"""Concept-based explanation engine: attribution-guided concept discovery,
exact Shapley attribution with distribution-matched baseline fill, and
size-weighted faithfulness metrics, with all learned components behind a
deterministic oracle protocol."""

from .discovery import (
    ConceptMask,
    ConceptSet,
    GuideParams,
    HeatMap,
    PromptSet,
    SelectionVector,
    SuperpixelSet,
    dedup_concepts,
    discover_concepts,
    extract_guide_params,
    select_point_prompts,
    superpixel_boxes,
)
from .explainer import ExplanationRun, LCEExplainer, compute_stats
from .masks import (
    BinaryMask,
    DatasetStats,
    Image,
    area,
    bounding_box,
    composite,
    decode_rle,
    encode_rle,
    overlap_ratio,
    union,
)
from .metrics import (
    ExplanationSequence,
    FaithCurve,
    FaithfulnessReport,
    accumulation_pixel_average,
    auc,
    deletion_curve,
    evaluate_sequence,
    insertion_curve,
    weighted_report,
)
from .shapley import (
    Coalition,
    Explanation,
    ShapleyResult,
    UtilityCache,
    baseline_fill,
    exact_shapley,
    select_explanation,
    shapley_from_utilities,
    utility,
)
from .validation import (
    ConceptCapError,
    ContractViolationError,
    EmptyConceptSetError,
    EmptyMaskError,
    IngestionError,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "DatasetStats",
    "Image",
    "area",
    "bounding_box",
    "composite",
    "decode_rle",
    "encode_rle",
    "overlap_ratio",
    "union",
    "ConceptMask",
    "ConceptSet",
    "GuideParams",
    "HeatMap",
    "PromptSet",
    "SelectionVector",
    "SuperpixelSet",
    "dedup_concepts",
    "discover_concepts",
    "extract_guide_params",
    "select_point_prompts",
    "superpixel_boxes",
    "Coalition",
    "Explanation",
    "ShapleyResult",
    "UtilityCache",
    "baseline_fill",
    "exact_shapley",
    "select_explanation",
    "shapley_from_utilities",
    "utility",
    "ExplanationSequence",
    "FaithCurve",
    "FaithfulnessReport",
    "accumulation_pixel_average",
    "auc",
    "deletion_curve",
    "evaluate_sequence",
    "insertion_curve",
    "weighted_report",
    "ExplanationRun",
    "LCEExplainer",
    "compute_stats",
    "ContractViolationError",
    "EmptyMaskError",
    "EmptyConceptSetError",
    "ConceptCapError",
    "IngestionError",
]
