"""Causal complex-valued sub-band/full-band speech enhancement at 32 kHz."""

from .frontend import AnalysisConfig, istft, stft
from .model import ModelSpec, SDCCRN, build_model, parameter_breakdown, parameter_count

__all__ = [
    "AnalysisConfig",
    "ModelSpec",
    "SDCCRN",
    "build_model",
    "istft",
    "parameter_breakdown",
    "parameter_count",
    "stft",
]
