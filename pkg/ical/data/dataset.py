"""On-disk datasets.

Two layouts are accepted:

- an image directory: ``images/<id>.pgm`` plus ``labels.txt`` with lines
  ``<id>\\t<space-separated tokens>`` (what ``ical synth`` writes);
- a directory of ``.inkml`` files, rasterized on load.
"""

from __future__ import annotations

import logging
import pathlib
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from ical.data.inkml import load_inkml
from ical.data.raster import rasterize
from ical.errors import DataError
from ical.vocab import tokenize

logger = logging.getLogger(__name__)

LABELS = "labels.txt"
MANIFEST = "manifest.yaml"
IMAGES = "images"


@dataclass
class Sample:
    id: str
    image: np.ndarray
    tokens: list[str] = field(default_factory=list)

    @property
    def label(self) -> str:
        return " ".join(self.tokens)


def write_pgm(path: pathlib.Path, image: np.ndarray) -> None:
    """Writes a binary (P5) 8-bit graymap; 1.0 ink maps to 255."""
    pixels = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())


def read_pgm(path: pathlib.Path) -> np.ndarray:
    data = path.read_bytes()
    fields: list[bytes] = []
    offset = 0
    while len(fields) < 4:
        while offset < len(data) and data[offset : offset + 1].isspace():
            offset += 1
        if data[offset : offset + 1] == b"#":
            offset = data.index(b"\n", offset) + 1
            continue
        end = offset
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        if end == offset:
            raise DataError(f"{path}: truncated PGM header")
        fields.append(data[offset:end])
        offset = end
    if fields[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    width, height, maxval = (int(f) for f in fields[1:])
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset + 1)
    return (pixels.reshape(height, width) / float(maxval)).astype(np.float32)


def write_labels(path: pathlib.Path, labels: Iterable[tuple[str, str]]) -> None:
    path.write_text("".join(f"{sample_id}\t{label}\n" for sample_id, label in labels), encoding="utf-8")


def read_labels(path: pathlib.Path) -> dict[str, str]:
    """Reads ``<id>\\t<tokens>`` lines.

    Raises:
        DataError: if the file is missing or a line has no tab.
    """
    if not path.is_file():
        logger.error(f"Label file not found: {path}")
        raise DataError(f"No such label file: {path}")
    labels: dict[str, str] = {}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if "\t" not in line:
            logger.error(f"{path}:{number}: expected '<id>\\t<tokens>'")
            raise DataError(f"{path}:{number}: malformed label line {line!r}")
        sample_id, label = line.split("\t", 1)
        labels[sample_id] = label.strip()
    return labels


def write_image_dataset(out_dir: pathlib.Path, samples: list[Sample], manifest: dict) -> pathlib.Path:
    out_dir = pathlib.Path(out_dir)
    (out_dir / IMAGES).mkdir(parents=True, exist_ok=True)
    for sample in samples:
        write_pgm(out_dir / IMAGES / f"{sample.id}.pgm", sample.image)
    write_labels(out_dir / LABELS, ((s.id, s.label) for s in samples))
    (out_dir / MANIFEST).write_text(yaml.safe_dump({**manifest, "samples": len(samples)}, sort_keys=False))
    return out_dir


def _load_images(root: pathlib.Path, workers: int, require_label: bool) -> list[Sample]:
    labels_path = root / LABELS
    labels = read_labels(labels_path) if labels_path.is_file() or require_label else {}
    paths = sorted((root / IMAGES).glob("*.pgm"))
    if require_label:
        missing = [sample_id for sample_id in labels if not (root / IMAGES / f"{sample_id}.pgm").is_file()]
        if missing:
            raise DataError(f"{root}: {len(missing)} labeled image(s) missing, e.g. {missing[0]}")
        paths = [root / IMAGES / f"{sample_id}.pgm" for sample_id in labels]

    def load(path: pathlib.Path) -> Sample:
        return Sample(path.stem, read_pgm(path), tokenize(labels.get(path.stem, "")))

    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(load, paths))


def _load_inkml(root: pathlib.Path, image_height: int, workers: int, require_label: bool) -> list[Sample]:
    def load(path: pathlib.Path) -> Sample:
        ink = load_inkml(path, require_label=require_label)
        return Sample(ink.id, rasterize(ink, image_height), tokenize(ink.label or ""))

    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(load, sorted(root.glob("*.inkml"))))


def load_dataset(
    root: str | pathlib.Path,
    image_height: int = 128,
    workers: int = 1,
    require_label: bool = True,
) -> list[Sample]:
    """Loads every sample under ``root`` in a reproducible order.

    Args:
        root: dataset directory in either supported layout.
        image_height: raster height for InkML input.
        workers: parsing threads; output order never depends on it.
        require_label: fail on unlabeled samples (off for ``predict``).

    Raises:
        DataError: missing directory, missing files or an empty dataset.
    """
    root = pathlib.Path(root)
    if not root.is_dir():
        logger.error(f"Dataset directory not found: {root}")
        raise DataError(f"No such dataset directory: {root}")
    if (root / IMAGES).is_dir():
        samples = _load_images(root, workers, require_label)
    else:
        samples = _load_inkml(root, image_height, workers, require_label)
    if not samples:
        raise DataError(f"{root}: no samples found")
    logger.info(f"Loaded {len(samples)} samples from {root}")
    return samples
