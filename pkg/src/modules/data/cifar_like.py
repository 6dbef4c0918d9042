"""
Raw few-shot dataset directories.

Layout:
    layout.json       {"height": H, "width": W, "channels": C,
                       "counts": {"class_000.bin": 600, ...}}   (counts optional)
    class_*.bin       records of 1 label byte followed by H*W*C pixel bytes
                      in height, width, channel order

Pixels are scaled by 1/255 so byte 255 loads as exactly 1.0.
"""
import json
from pathlib import Path
from typing import Dict, List

import numpy as np

from core.exceptions import DatasetError
from modules.data.datasets import LabeledImages
from utils.logger import logger


LAYOUT_FILE = "layout.json"
RECORD_GLOB = "class_*.bin"


def _read_layout(root: Path) -> dict:
    path = root / LAYOUT_FILE
    if not path.is_file():
        raise DatasetError("missing layout.json", path=str(root))
    try:
        layout = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"invalid JSON: {e}", path=str(path)) from e
    for key in ("height", "width", "channels"):
        if not isinstance(layout.get(key), int) or layout[key] < 1:
            raise DatasetError(f"'{key}' must be a positive integer", path=str(path))
    return layout


def load_cifar_like(path: str) -> LabeledImages:
    """Load every class file of a raw dataset directory into [N, C, H, W] images."""
    root = Path(path)
    if not root.is_dir():
        raise DatasetError("not a directory", path=str(root))
    layout = _read_layout(root)
    h, w, c = layout["height"], layout["width"], layout["channels"]
    record_size = 1 + h * w * c
    counts: Dict[str, int] = layout.get("counts") or {}
    if not counts:
        logger.warning(f"[WARN] {root / LAYOUT_FILE} has no 'counts'; record counts are not checked")

    files = sorted(root.glob(RECORD_GLOB))
    if not files:
        raise DatasetError(f"no {RECORD_GLOB} files", path=str(root))

    images: List[np.ndarray] = []
    labels: List[np.ndarray] = []
    for file in files:
        data = np.frombuffer(file.read_bytes(), dtype=np.uint8)
        if data.size == 0 or data.size % record_size:
            raise DatasetError(
                f"size {data.size} is not a positive multiple of the record length {record_size}",
                path=str(file),
            )
        records = data.reshape(-1, record_size)
        expected = counts.get(file.name)
        if expected is not None and expected != len(records):
            raise DatasetError(f"layout declares {expected} records, file holds {len(records)}", path=str(file))
        labels.append(records[:, 0].astype(np.int64))
        pixels = records[:, 1:].reshape(-1, h, w, c).transpose(0, 3, 1, 2)
        images.append(pixels.astype(np.float64) / 255.0)

    dataset = LabeledImages(images=np.concatenate(images), labels=np.concatenate(labels))
    logger.info(f"[DATA] Loaded {len(dataset)} images in {len(dataset.classes())} classes from {root}")
    return dataset


def export_cifar_like(dataset: LabeledImages, path: str) -> None:
    """Write a dataset in the raw layout, one class file per label (labels 0..255)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    _, c, h, w = dataset.images.shape
    pixels = np.rint(np.clip(dataset.images, 0.0, 1.0) * 255.0).astype(np.uint8)

    counts = {}
    for label in dataset.classes():
        label = int(label)
        if not 0 <= label <= 255:
            raise DatasetError(f"label {label} does not fit in a byte", path=str(root))
        keep = dataset.labels == label
        body = pixels[keep].transpose(0, 2, 3, 1).reshape(int(keep.sum()), -1)
        records = np.concatenate([np.full((len(body), 1), label, dtype=np.uint8), body], axis=1)
        name = f"class_{label:03d}.bin"
        (root / name).write_bytes(records.tobytes())
        counts[name] = len(records)

    layout = {"height": h, "width": w, "channels": c, "counts": counts}
    (root / LAYOUT_FILE).write_text(json.dumps(layout, indent=2, sort_keys=True))
    logger.info(f"[DATA] Exported {len(dataset)} images to {root}")
