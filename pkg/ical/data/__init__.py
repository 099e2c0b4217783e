"""InkML ingestion, rasterization, synthetic data and batching."""

from ical.data.batch import Batch, iter_batches, make_batch
from ical.data.dataset import Sample, load_dataset
from ical.data.inkml import InkSample, parse_inkml
from ical.data.raster import rasterize
from ical.data.synth import synth_generate

__all__ = [
    "Batch",
    "InkSample",
    "Sample",
    "iter_batches",
    "load_dataset",
    "make_batch",
    "parse_inkml",
    "rasterize",
    "synth_generate",
]
