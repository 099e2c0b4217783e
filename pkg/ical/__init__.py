"""ICAL handwritten mathematical expression recognizer."""

from ical import presets
from ical.config import PATH
from ical.models.ical import ICALModel
from ical.presets import BASE, TOY, get_preset
from ical.vocab import Vocab, default_vocab

__version__ = "0.1.0"
__all__ = [
    "BASE",
    "PATH",
    "TOY",
    "ICALModel",
    "Vocab",
    "__version__",
    "default_vocab",
    "get_preset",
    "presets",
]
