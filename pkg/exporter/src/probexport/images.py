"""Image discovery, loading, resizing, and the two augmentation families.

Folder layout: one subdirectory per class under the image root; the class
index follows the sorted subdirectory names and the sample id is the file's
path relative to the root.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .config import RESIZE_TARGET, ExportConfigError

log = logging.getLogger("probexport")

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".gif"}


@dataclass(frozen=True)
class ImageEntry:
    sample_id: str
    path: Path
    label: int


def scan_image_folder(root) -> tuple[list[ImageEntry], list[str]]:
    """Walk the class subdirectories; returns (entries, class_names)."""
    root = Path(root)
    if not root.is_dir():
        raise ExportConfigError(f"image root {root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if len(class_dirs) < 2:
        raise ExportConfigError("image root needs at least two class subdirectories")
    entries = []
    for label, class_dir in enumerate(class_dirs):
        for path in sorted(class_dir.rglob("*")):
            if path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES:
                entries.append(
                    ImageEntry(path.relative_to(root).as_posix(), path, label)
                )
    if not entries:
        raise ExportConfigError(f"no images found under {root}")
    return entries, [d.name for d in class_dirs]


def load_resized(path: Path) -> np.ndarray | None:
    """Decode, convert to RGB, and resize to the fixed square target.

    Returns None (and logs) when the file cannot be decoded.
    """
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize(
                (RESIZE_TARGET, RESIZE_TARGET), Image.BILINEAR
            )
            return np.asarray(rgb, dtype=np.float32)
    except (OSError, UnidentifiedImageError) as exc:
        log.warning("skipping unreadable image %s: %s", path, exc)
        return None


def flip_copies(array: np.ndarray) -> list[np.ndarray]:
    """Offline augmentation: horizontal and vertical flips (size x3 in total)."""
    return [array[:, ::-1, :].copy(), array[::-1, :, :].copy()]


def online_augmented(
    array: np.ndarray, rng: np.random.Generator, zoom: float, shift: float, rotation_degrees: float
) -> np.ndarray:
    """One random zoom/shift/rotation variant of a training image."""
    img = Image.fromarray(array.astype(np.uint8))
    side = img.size[0]

    angle = float(rng.uniform(-rotation_degrees, rotation_degrees))
    img = img.rotate(angle, resample=Image.BILINEAR)

    dx = float(rng.uniform(-shift, shift)) * side
    dy = float(rng.uniform(-shift, shift)) * side
    img = img.transform(
        img.size, Image.AFFINE, (1.0, 0.0, dx, 0.0, 1.0, dy), resample=Image.BILINEAR
    )

    factor = 1.0 + float(rng.uniform(-zoom, zoom))
    zoomed = max(8, int(round(side * factor)))
    img = img.resize((zoomed, zoomed), Image.BILINEAR)
    if zoomed >= side:
        left = (zoomed - side) // 2
        img = img.crop((left, left, left + side, left + side))
    else:
        canvas = Image.new("RGB", (side, side))
        offset = (side - zoomed) // 2
        canvas.paste(img, (offset, offset))
        img = canvas
    return np.asarray(img, dtype=np.float32)


def minority_class_indices(
    class_counts: dict[int, int], explicit: tuple[int, ...] | None
) -> set[int]:
    """Classes eligible for offline flip expansion.

    Explicit configuration wins; otherwise any class at or below half the
    largest class count is treated as minority.
    """
    if explicit is not None:
        return set(explicit)
    if not class_counts:
        return set()
    biggest = max(class_counts.values())
    return {cls for cls, count in class_counts.items() if 2 * count <= biggest}
