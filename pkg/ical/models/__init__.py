"""Encoder, decoder, ICCM and the assembled recognizer."""

from ical.models.decoder import Decoder, DecoderState
from ical.models.encoder import DenseEncoder, FeatureGrid
from ical.models.iccm import FusionGate, ImplicitConstructor
from ical.models.ical import ICALModel, ModelOutput

__all__ = [
    "Decoder",
    "DecoderState",
    "DenseEncoder",
    "FeatureGrid",
    "FusionGate",
    "ICALModel",
    "ImplicitConstructor",
    "ModelOutput",
]
