"""Dataset manifests, benchmark runs, and the command line interface."""

from .manifest import (
    DatasetManifest,
    ManifestEntry,
    image_id,
    load_image,
    load_manifest,
    load_mask,
    save_image,
    save_manifest,
    save_mask,
)
from .runs import (
    CSV_COLUMNS,
    MethodRun,
    RunConfig,
    aggregate,
    compute_dataset_stats,
    derive_seed,
    import_units,
    run_evaluate,
    run_explain,
    run_lce,
    run_ranked_units,
    write_comparison,
)

__all__ = [
    "DatasetManifest",
    "ManifestEntry",
    "image_id",
    "load_image",
    "load_manifest",
    "load_mask",
    "save_image",
    "save_manifest",
    "save_mask",
    "CSV_COLUMNS",
    "MethodRun",
    "RunConfig",
    "aggregate",
    "compute_dataset_stats",
    "derive_seed",
    "import_units",
    "run_evaluate",
    "run_explain",
    "run_lce",
    "run_ranked_units",
    "write_comparison",
]
