"""The ``lce`` command line interface.

Subcommands: synth, stats, explain, evaluate, import-units, compare.
Endpoint specs are ``cmd:<command line>``, ``tcp:<host>:<port>``, or
``synthetic[:{json}]`` for the built-in deterministic backend.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..oracle.synthetic import CLASS_NAMES, generate_scene
from .manifest import (
    DatasetManifest,
    ManifestEntry,
    image_id,
    save_image,
    save_manifest,
    save_mask,
)
from .runs import (
    RunConfig,
    compute_dataset_stats,
    import_units,
    run_evaluate,
    run_explain,
    run_ranked_units,
    write_comparison,
)
from .manifest import load_manifest


def _cmd_synth(args) -> int:
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    entries = []
    scene_index = []
    for i in range(args.n):
        scene = generate_scene(args.seed + i, args.width, args.height)
        image_rel = f"images/scene_{i:04d}.png"
        mask_rel = f"masks/scene_{i:04d}_gt.png"
        save_image(scene.image, out / image_rel)
        save_mask(scene.ellipse_mask(), out / mask_rel)
        entries.append(
            ManifestEntry(
                image_path=image_rel,
                class_label=CLASS_NAMES.index(scene.label),
                ground_truth_mask_path=mask_rel,
            )
        )
        scene_index.append(
            {
                "index": i,
                "seed": scene.seed,
                "label": scene.label,
                "ellipse": list(scene.ellipse),
                "image_path": image_rel,
                "ground_truth_mask_path": mask_rel,
            }
        )
    manifest = DatasetManifest(tuple(entries), CLASS_NAMES, out)
    save_manifest(manifest, out / "manifest.json")
    (out / "scenes.json").write_text(
        json.dumps({"scenes": scene_index}, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {args.n} scenes under {out}")
    return 0


def _cmd_stats(args) -> int:
    stats = compute_dataset_stats(load_manifest(args.manifest))
    payload = json.dumps(
        {"mean": list(stats.mean), "std": list(stats.std)}, indent=2, sort_keys=True
    )
    if args.out:
        Path(args.out).write_text(payload + "\n")
    print(payload)
    return 0


def _load_config(args) -> RunConfig:
    config = RunConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "model", None):
        overrides["model"] = args.model
    if getattr(args, "segmenter", None):
        overrides["segmenter"] = args.segmenter
    if overrides:
        config = RunConfig.from_dict({**config.to_dict(), **overrides})
    return config


def _cmd_explain(args) -> int:
    config = _load_config(args)
    run_dir = run_explain(args.manifest, config, args.seed, args.out)
    print(f"explanations written to {run_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    run = run_evaluate(args.run, model_spec=args.model)
    print(f"{run.method}: {len(run.reports)} reports, {len(run.failures)} failures")
    return 0 if not run.failures else 1


def _cmd_import_units(args) -> int:
    run_dir = import_units(
        args.manifest, args.units, args.method, args.out, seed=args.seed
    )
    print(f"imported units staged in {run_dir}")
    return 0


def _cmd_baseline(args) -> int:
    config = _load_config(args)
    run = run_ranked_units(
        args.manifest, config, args.seed, args.out, units_source=args.units_source
    )
    print(f"{run.method}: {len(run.reports)} reports, {len(run.failures)} failures")
    return 0 if not run.failures else 1


def _cmd_compare(args) -> int:
    rows = write_comparison(args.runs, args.out)
    for row in rows:
        print(
            f"{row['method']}: insertion={row['insertion']:.4f} "
            f"deletion={row['deletion']:.4f} effect_score={row['effect_score']:.4f}"
        )
    print(f"table written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lce")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("stats", help="per-channel dataset statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("explain", help="discover and attribute concepts per image")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", help="model endpoint spec")
    p.add_argument("--segmenter", help="segmenter endpoint spec")
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("evaluate", help="faithfulness reports for a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--model", help="override the model endpoint spec")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("import-units", help="stage external ranked-unit files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--units", required=True)
    p.add_argument("--method", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_import_units)

    p = sub.add_parser("baseline", help="run a built-in ranked-unit baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--units-source", choices=("random", "ranked"), default="random")
    p.add_argument("--model", help="model endpoint spec")
    p.add_argument("--config", help="pipeline config JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("compare", help="aggregate runs into a comparison table")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
