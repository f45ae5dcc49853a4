"""Dataset manifests and raster IO."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from ..masks import BinaryMask, Image
from ..validation import ContractViolationError, IngestionError

__all__ = [
    "ManifestEntry",
    "DatasetManifest",
    "load_manifest",
    "save_manifest",
    "load_image",
    "save_image",
    "load_mask",
    "save_mask",
    "image_id",
]


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    class_label: int
    ground_truth_mask_path: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    """Entries plus the ordered class names; paths resolve against base_dir."""

    entries: tuple
    class_names: tuple
    base_dir: Path

    def resolve(self, relative: str) -> Path:
        return (self.base_dir / relative).resolve()

    def __len__(self) -> int:
        return len(self.entries)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestionError(f"cannot read manifest {path}: {exc}") from exc
    class_names = tuple(payload["class_names"])
    entries = []
    for raw in payload["entries"]:
        entry = ManifestEntry(
            image_path=raw["image_path"],
            class_label=int(raw["class_label"]),
            ground_truth_mask_path=raw.get("ground_truth_mask_path"),
        )
        if not (0 <= entry.class_label < len(class_names)):
            raise ContractViolationError(
                f"label {entry.class_label} of {entry.image_path} does not index class_names"
            )
        entries.append(entry)
    manifest = DatasetManifest(tuple(entries), class_names, path.parent)
    for entry in manifest.entries:
        img = manifest.resolve(entry.image_path)
        if not img.is_file():
            raise IngestionError(f"manifest references missing image {img}")
        if entry.ground_truth_mask_path is not None:
            mask = manifest.resolve(entry.ground_truth_mask_path)
            if not mask.is_file():
                raise IngestionError(f"manifest references missing mask {mask}")
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    payload = {
        "class_names": list(manifest.class_names),
        "entries": [
            {
                "image_path": e.image_path,
                "class_label": e.class_label,
                **(
                    {"ground_truth_mask_path": e.ground_truth_mask_path}
                    if e.ground_truth_mask_path is not None
                    else {}
                ),
            }
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_image(path) -> Image:
    """Load a raster file as grayscale or RGB, normalized to [0, 1]."""
    path = Path(path)
    try:
        with PILImage.open(path) as img:
            if img.mode not in ("L", "RGB"):
                img = img.convert("RGB" if img.mode in ("RGBA", "P", "CMYK") else "L")
            arr = np.asarray(img, dtype=np.uint8)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise IngestionError(f"cannot read image {path}: {exc}") from exc
    return Image.from_array(arr)


def save_image(image: Image, path) -> None:
    """Write as 8-bit grayscale or RGB PNG (deterministic quantization)."""
    arr = np.clip(np.round(image.data * 255.0), 0, 255).astype(np.uint8)
    if image.channels == 1:
        PILImage.fromarray(arr[:, :, 0], mode="L").save(path)
    else:
        PILImage.fromarray(arr, mode="RGB").save(path)


def load_mask(path) -> BinaryMask:
    path = Path(path)
    try:
        with PILImage.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise IngestionError(f"cannot read mask {path}: {exc}") from exc
    return BinaryMask(arr > 127)


def save_mask(mask: BinaryMask, path) -> None:
    PILImage.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8), mode="L").save(path)


def image_id(index: int, image_path: str) -> str:
    """Stable per-entry identifier used in output file names."""
    return f"{index:04d}_{Path(image_path).stem}"
