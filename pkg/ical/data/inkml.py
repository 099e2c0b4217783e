"""InkML reader.

Only the parts HMER datasets use are read: ``<trace>`` elements holding
comma-separated points (``x y`` with optional extra channels such as time) and the
``<annotation type="truth">`` label. Namespaces are ignored.
"""

from __future__ import annotations

import logging
import pathlib
import xml.etree.ElementTree as etree
from dataclasses import dataclass, field

import numpy as np

from ical.errors import InkmlParseError, LabelMissingError

logger = logging.getLogger(__name__)


@dataclass
class InkSample:
    id: str
    strokes: list[np.ndarray] = field(default_factory=list)
    label: str | None = None

    @property
    def num_points(self) -> int:
        return sum(len(s) for s in self.strokes)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _byte_offset(data: bytes, line: int, column: int) -> int:
    lines = data.split(b"\n")
    return sum(len(lines[i]) + 1 for i in range(min(line - 1, len(lines)))) + column


def _parse_trace(text: str) -> np.ndarray:
    points = []
    for chunk in text.strip().split(","):
        values = chunk.split()
        if len(values) < 2:
            raise ValueError(f"point {chunk.strip()!r} has fewer than two coordinates")
        points.append((float(values[0]), float(values[1])))
    stroke = np.asarray(points, dtype=np.float64)
    if not np.isfinite(stroke).all():
        raise ValueError("non-finite coordinate")
    return stroke


def parse_inkml(data: bytes, sample_id: str = "", require_label: bool = True) -> InkSample:
    """Parses one InkML document.

    Args:
        data: raw document bytes.
        sample_id: fallback id when the document carries no ``UI`` annotation.
        require_label: raise when the truth annotation is missing.

    Raises:
        InkmlParseError: malformed XML, a malformed trace or no traces at all.
        LabelMissingError: no truth annotation and ``require_label`` is set.
    """
    try:
        root = etree.fromstring(data)
    except etree.ParseError as e:
        line, column = e.position
        raise InkmlParseError(f"malformed InkML: {e}", _byte_offset(data, line, column)) from None

    sample = InkSample(id=sample_id)
    for element in root.iter():
        tag = _local(element.tag)
        if tag == "trace":
            try:
                sample.strokes.append(_parse_trace(element.text or ""))
            except ValueError as e:
                offset = data.find(b"<trace")
                raise InkmlParseError(f"bad trace {len(sample.strokes)}: {e}", offset) from None
        elif tag == "annotation":
            kind = element.get("type", "")
            if kind == "truth" and sample.label is None:
                sample.label = (element.text or "").strip()
            elif kind == "UI" and element.text:
                sample.id = element.text.strip()

    if not sample.strokes:
        raise InkmlParseError("document has no trace elements", len(data))
    if sample.label is None and require_label:
        raise LabelMissingError(f"{sample.id or 'document'} has no truth annotation")
    return sample


def load_inkml(path: str | pathlib.Path, require_label: bool = True) -> InkSample:
    path = pathlib.Path(path)
    try:
        return parse_inkml(path.read_bytes(), sample_id=path.stem, require_label=require_label)
    except (InkmlParseError, LabelMissingError) as e:
        logger.error(f"{path}: {e}")
        raise
