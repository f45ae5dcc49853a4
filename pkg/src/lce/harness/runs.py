"""End-to-end benchmark runs: explanation, evaluation, aggregation.

A run lives in its own directory. The explain stage persists per-image
concept sets and Shapley results (the interchange JSON), the evaluate stage
turns them into faithfulness reports, curve CSVs and one flat CSV, and
``aggregate`` condenses several runs into a comparison table. Every output
byte is determined by (manifest, config, seed); nothing embeds timestamps or
absolute paths, so reruns are comparable bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..discovery import (
    DEFAULT_MAX_CONCEPTS,
    DEFAULT_OVERLAP_THRESHOLD,
    DEFAULT_SELECTION,
    DEFAULT_SUPERPIXEL_COUNT,
    concept_set_from_dict,
    concept_set_to_dict,
)
from ..explainer import LCEExplainer
from ..masks import DatasetStats, decode_rle, encode_rle
from ..metrics import ExplanationSequence, FaithfulnessReport, evaluate_sequence
from ..oracle.client import open_endpoint, require_capabilities
from ..shapley import ShapleyResult, baseline_fill
from ..validation import ContractViolationError, IngestionError
from .manifest import DatasetManifest, image_id, load_image, load_manifest

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "method",
    "image_id",
    "insertion",
    "deletion",
    "insertion_w",
    "deletion_w",
    "effect_score",
    "p_s",
    "p_o",
)

__all__ = [
    "RunConfig",
    "MethodRun",
    "compute_dataset_stats",
    "derive_seed",
    "run_explain",
    "run_evaluate",
    "run_lce",
    "run_ranked_units",
    "import_units",
    "aggregate",
    "CSV_COLUMNS",
]


@dataclass(frozen=True)
class RunConfig:
    """Pipeline configuration persisted into every run directory."""

    q: tuple = DEFAULT_SELECTION
    k: int = DEFAULT_SUPERPIXEL_COUNT
    max_concepts: int = DEFAULT_MAX_CONCEPTS
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD
    model: str = "synthetic"
    segmenter: str = "synthetic"
    max_batch: int = 64
    timeout_ms: int | None = None
    baseline_units: int = 16
    jobs: int = 1

    def to_dict(self) -> dict:
        return {
            "q": list(self.q),
            "k": self.k,
            "max_concepts": self.max_concepts,
            "overlap_threshold": self.overlap_threshold,
            "model": self.model,
            "segmenter": self.segmenter,
            "max_batch": self.max_batch,
            "timeout_ms": self.timeout_ms,
            "baseline_units": self.baseline_units,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        cfg = cls()
        known = {k: v for k, v in payload.items() if k in cfg.to_dict()}
        if "q" in known:
            known["q"] = tuple(known["q"])
        return replace(cfg, **known)


@dataclass
class MethodRun:
    """A completed run: one report or one recorded failure per image."""

    method: str
    run_dir: Path
    reports: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def derive_seed(global_seed: int, image_path: str, domain: str = "fill") -> int:
    """Per-image seed: global seed plus a stable hash of the image path."""
    digest = hashlib.sha256(f"{domain}:{image_path}".encode("utf-8")).digest()
    return int(global_seed) + int.from_bytes(digest[:8], "big") % (1 << 31)


def compute_dataset_stats(manifest: DatasetManifest) -> DatasetStats:
    """Per-channel mean and population std over all pixels of the dataset."""
    if not manifest.entries:
        raise ContractViolationError("manifest is empty")
    count = 0
    total = None
    total_sq = None
    channels = None
    for entry in manifest.entries:
        image = load_image(manifest.resolve(entry.image_path))
        if channels is None:
            channels = image.channels
            total = np.zeros(channels, dtype=np.float64)
            total_sq = np.zeros(channels, dtype=np.float64)
        elif image.channels != channels:
            raise IngestionError(
                f"{entry.image_path} has {image.channels} channels, dataset has {channels}"
            )
        flat = image.data.reshape(-1, channels).astype(np.float64)
        total += flat.sum(axis=0)
        total_sq += (flat * flat).sum(axis=0)
        count += flat.shape[0]
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    std = np.maximum(np.sqrt(var), 1e-9)
    return DatasetStats(tuple(mean), tuple(std))


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text())


def _write_run_header(run_dir: Path, method: str, manifest_path, config: RunConfig,
                      seed: int, stats: DatasetStats) -> None:
    _write_json(
        run_dir / "run.json",
        {
            "method": method,
            "manifest": str(manifest_path),
            "config": config.to_dict(),
            "seed": int(seed),
            "fill_stats": {"mean": list(stats.mean), "std": list(stats.std)},
        },
    )


def _failure(image_idx: str, image_path: str, stage: str, exc: Exception) -> dict:
    logger.warning("%s failed at %s: %s", image_idx, stage, exc)
    return {
        "image_id": image_idx,
        "image_path": image_path,
        "stage": stage,
        "error": f"{type(exc).__name__}: {exc}",
    }


def _write_failures(run_dir: Path, failures: list) -> None:
    if failures:
        _write_json(run_dir / "failures.json", {"failures": failures})


def _load_failures(run_dir: Path) -> list:
    path = run_dir / "failures.json"
    return _read_json(path)["failures"] if path.exists() else []


# -- explain stage -----------------------------------------------------------


def run_explain(
    manifest_path,
    config: RunConfig,
    seed: int,
    out_dir,
    *,
    stats: DatasetStats | None = None,
) -> Path:
    """Discover and attribute concepts for every manifest image.

    Writes run.json plus one interchange JSON per image; failures are
    recorded and do not abort the run. Returns the run directory.
    """
    manifest = load_manifest(manifest_path)
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if stats is None:
        stats = compute_dataset_stats(manifest)
    _write_run_header(run_dir, "lce", manifest_path, config, seed, stats)

    def explain_entry(task):
        index, entry, explainer = task
        img_id = image_id(index, entry.image_path)
        try:
            image = load_image(manifest.resolve(entry.image_path))
            run = explainer.explain(image, seed=derive_seed(seed, entry.image_path))
            doc = concept_set_to_dict(run.concepts, image_ref=entry.image_path)
            doc["image_id"] = img_id
            doc["shapley"] = run.shapley.to_dict()
            doc["ranking"] = list(run.explanation.ranked_concepts)
            doc["top_concept"] = run.explanation.top_concept
            return img_id, doc, None
        except Exception as exc:
            return img_id, None, _failure(img_id, entry.image_path, "explain", exc)

    def make_explainer():
        return LCEExplainer(
            model=open_endpoint(config.model, config.timeout_ms, config.max_batch),
            segmenter=open_endpoint(config.segmenter, config.timeout_ms, config.max_batch),
            q=config.q,
            k=config.k,
            max_concepts=config.max_concepts,
            overlap_threshold=config.overlap_threshold,
            max_batch=config.max_batch,
            fill_stats=stats,
        )

    results = _map_entries(manifest, config.jobs, make_explainer, explain_entry)

    failures = []
    for img_id, doc, failure in results:
        if failure is not None:
            failures.append(failure)
        else:
            _write_json(run_dir / "explanations" / f"{img_id}.json", doc)
    _write_failures(run_dir, failures)
    return run_dir


def _map_entries(manifest, jobs, make_context, work):
    """Run work(index, entry, context) over entries, results in manifest order.

    Each worker owns its context (and thus its oracle connections); with
    jobs=1 everything runs inline.
    """
    tasks = list(enumerate(manifest.entries))
    if jobs <= 1:
        context = make_context()
        return [work((i, e, context)) for i, e in tasks]
    results = [None] * len(tasks)
    chunks = [tasks[i::jobs] for i in range(jobs)]

    def run_chunk(chunk):
        context = make_context()
        return [(i, work((i, e, context))) for i, e in chunk]

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        for done in pool.map(run_chunk, chunks):
            for index, result in done:
                results[index] = result
    return results


# -- evaluate stage ----------------------------------------------------------


def run_evaluate(run_dir, *, model_spec: str | None = None) -> MethodRun:
    """Compute faithfulness reports for a prepared run directory.

    Works for both explanation runs (ranked concepts) and ranked-unit runs;
    writes per-image report JSONs, curve CSVs and the flat reports.csv.
    """
    run_dir = Path(run_dir)
    header = _read_json(run_dir / "run.json")
    method = header["method"]
    config = RunConfig.from_dict(header["config"])
    seed = int(header["seed"])
    stats = DatasetStats(
        tuple(header["fill_stats"]["mean"]), tuple(header["fill_stats"]["std"])
    )
    manifest = load_manifest(header["manifest"])
    model = open_endpoint(model_spec or config.model, config.timeout_ms, config.max_batch)
    require_capabilities(model, ("predict",))

    failures = {f["image_id"]: f for f in _load_failures(run_dir)}
    run = MethodRun(method=method, run_dir=run_dir)
    rows = []
    for index, entry in enumerate(manifest.entries):
        img_id = image_id(index, entry.image_path)
        if img_id in failures:
            continue
        try:
            image = load_image(manifest.resolve(entry.image_path))
            seq, target_class, fill = _load_sequence(
                run_dir, img_id, method, image, model, stats, seed, entry.image_path
            )
            report = evaluate_sequence(image, seq, model, target_class, fill)
        except Exception as exc:
            failures[img_id] = _failure(img_id, entry.image_path, "evaluate", exc)
            continue
        run.reports[img_id] = report
        _write_json(
            run_dir / "reports" / f"{img_id}.json",
            {"image_id": img_id, "method": method, **report.to_dict()},
        )
        _write_curves(run_dir, img_id, report)
        rows.append(_csv_row(method, img_id, report))

    _write_reports_csv(run_dir / "reports.csv", rows)
    run.failures = sorted(failures.values(), key=lambda f: f["image_id"])
    _write_failures(run_dir, run.failures)
    return run


def _load_sequence(run_dir, img_id, method, image, model, stats, seed, image_path):
    """Rebuild (sequence, target_class, fill) from the persisted stage files."""
    explanation_path = run_dir / "explanations" / f"{img_id}.json"
    if explanation_path.exists():
        doc = _read_json(explanation_path)
        concepts = concept_set_from_dict(doc)
        result = ShapleyResult.from_dict(doc["shapley"])
        by_id = {c.id: c.mask for c in concepts}
        units = tuple(by_id[cid] for cid in doc["ranking"])
        fill_stats = result.fill_stats or stats
        fill = baseline_fill(
            fill_stats, image.width, image.height, image.channels, result.seed
        )
        return ExplanationSequence(units, method), result.target_class, fill

    units_path = run_dir / "units" / f"{img_id}.json"
    doc = _read_json(units_path)
    units = tuple(
        decode_rle(rle, image.width, image.height) for rle in doc["units"]
    )
    seq = ExplanationSequence(units, method)
    target_class = int(np.argmax(model.predict([image])[0]))
    fill = baseline_fill(
        stats, image.width, image.height, image.channels, derive_seed(seed, image_path)
    )
    return seq, target_class, fill


def _fmt(value: float) -> str:
    return repr(float(value))


def _csv_row(method, img_id, report: FaithfulnessReport) -> list:
    return [
        method,
        img_id,
        _fmt(report.insertion),
        _fmt(report.deletion),
        _fmt(report.insertion_w),
        _fmt(report.deletion_w),
        _fmt(report.effect_score),
        _fmt(report.p_s),
        _fmt(report.p_o),
    ]


def _write_reports_csv(path: Path, rows: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)


def _write_curves(run_dir: Path, img_id: str, report: FaithfulnessReport) -> None:
    if report.curves is None:
        return
    curves_dir = run_dir / "curves"
    curves_dir.mkdir(parents=True, exist_ok=True)
    for curve in report.curves:
        with (curves_dir / f"{img_id}_{curve.direction}.csv").open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["fraction", "probability"])
            writer.writerows([[_fmt(x), _fmt(y)] for x, y in curve.points])


# -- whole-pipeline entry points ---------------------------------------------


def run_lce(manifest_path, config: RunConfig, seed: int, out_dir) -> MethodRun:
    """Explain then evaluate every manifest image (the full pipeline)."""
    run_dir = run_explain(manifest_path, config, seed, out_dir)
    return run_evaluate(run_dir)


def run_ranked_units(
    manifest_path,
    config: RunConfig,
    seed: int,
    out_dir,
    units_source: str = "random",
    method: str | None = None,
) -> MethodRun:
    """Evaluate a ranked-unit baseline over the manifest.

    ``units_source`` is either "random" (the built-in baseline: the oracle's
    superpixel partition shuffled with a per-image seed), "ranked" (the
    partition in the oracle's own importance order), or a directory of
    imported unit files.
    """
    if units_source not in ("random", "ranked"):
        run_dir = import_units(manifest_path, units_source, method or "imported", out_dir, seed=seed, config=config)
        return run_evaluate(run_dir)

    method = method or units_source
    manifest = load_manifest(manifest_path)
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    stats = compute_dataset_stats(manifest)
    _write_run_header(run_dir, method, manifest_path, config, seed, stats)

    model = open_endpoint(config.model, config.timeout_ms, config.max_batch)
    require_capabilities(model, ("predict", "superpixels"))

    failures = []
    for index, entry in enumerate(manifest.entries):
        img_id = image_id(index, entry.image_path)
        try:
            image = load_image(manifest.resolve(entry.image_path))
            superpixels = model.superpixels(image, config.baseline_units)
            if units_source == "random":
                order = list(superpixels.region_ids)
                rng = np.random.default_rng(derive_seed(seed, entry.image_path, "shuffle"))
                rng.shuffle(order)
            else:
                order = list(
                    superpixels.ranking
                    if superpixels.ranking is not None
                    else superpixels.region_ids
                )
            units = [superpixels.region_mask(r) for r in order]
            units = [u for u in units if u.pixel_count > 0]
            _write_json(
                run_dir / "units" / f"{img_id}.json",
                {
                    "image_path": entry.image_path,
                    "method": method,
                    "units": [encode_rle(u) for u in units],
                },
            )
        except Exception as exc:
            failures.append(_failure(img_id, entry.image_path, "units", exc))
    _write_failures(run_dir, failures)
    return run_evaluate(run_dir)


def import_units(
    manifest_path,
    units_dir,
    method: str,
    out_dir,
    *,
    seed: int = 0,
    config: RunConfig | None = None,
) -> Path:
    """Stage externally produced ranked-unit files into a run directory.

    Unit files are JSON ``{image_path, method, units: [rle, ...]}`` in
    importance-descending order; they are matched to manifest entries by
    image path (exact string, then unique basename) and copied verbatim.
    """
    manifest = load_manifest(manifest_path)
    units_dir = Path(units_dir)
    config = config or RunConfig()
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    stats = compute_dataset_stats(manifest)
    _write_run_header(run_dir, method, manifest_path, config, seed, stats)

    by_path: dict = {}
    by_name: dict = {}
    for file in sorted(units_dir.glob("*.json")):
        payload = _read_json(file)
        raw_path = payload["image_path"]
        by_path[raw_path] = file
        by_name.setdefault(Path(raw_path).name, []).append(file)

    failures = []
    for index, entry in enumerate(manifest.entries):
        img_id = image_id(index, entry.image_path)
        file = by_path.get(entry.image_path)
        if file is None:
            candidates = by_name.get(Path(entry.image_path).name, [])
            file = candidates[0] if len(candidates) == 1 else None
        if file is None:
            failures.append(
                _failure(
                    img_id,
                    entry.image_path,
                    "import",
                    FileNotFoundError(f"no unit file for {entry.image_path}"),
                )
            )
            continue
        target = run_dir / "units" / f"{img_id}.json"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(file.read_bytes())
    _write_failures(run_dir, failures)
    return run_dir


# -- aggregation -------------------------------------------------------------


def aggregate(run_dirs) -> tuple:
    """Per-method means plus all per-image rows, in the given run order.

    All runs must cover the same image set; violating that is a contract
    error rather than a silent partial table.
    """
    table_rows = []
    per_image_rows = []
    reference_ids = None
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        with (run_dir / "reports.csv").open(newline="") as handle:
            reader = csv.DictReader(handle)
            rows = list(reader)
        ids = sorted(r["image_id"] for r in rows)
        if reference_ids is None:
            reference_ids = ids
        elif ids != reference_ids:
            raise ContractViolationError(
                f"run {run_dir} covers a different image set than the first run"
            )
        if not rows:
            raise ContractViolationError(f"run {run_dir} has no reports")
        method = _read_json(run_dir / "run.json")["method"]
        means = {
            key: float(np.mean([float(r[key]) for r in rows]))
            for key in ("insertion", "deletion", "insertion_w", "deletion_w", "effect_score")
        }
        table_rows.append({"method": method, "images": len(rows), **means})
        per_image_rows.extend([r[c] for c in CSV_COLUMNS] for r in rows)
    return table_rows, per_image_rows


def write_comparison(run_dirs, out_csv) -> list:
    """Write the comparison table and the combined per-image CSV."""
    table_rows, per_image_rows = aggregate(run_dirs)
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with out_csv.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["method", "images", "insertion", "deletion", "insertion_w", "deletion_w", "effect_score"]
        )
        for row in table_rows:
            writer.writerow(
                [row["method"], row["images"]]
                + [_fmt(row[k]) for k in ("insertion", "deletion", "insertion_w", "deletion_w", "effect_score")]
            )
    per_image_path = out_csv.with_name(out_csv.stem + "_per_image.csv")
    _write_reports_csv(per_image_path, per_image_rows)
    return table_rows
