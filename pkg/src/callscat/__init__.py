"""Animal call detection and classification with joint time-frequency scattering."""

__version__ = "0.1.0"

from .config import PipelineConfig, load_config
from .detection import DetectionParams, detect
from .scattering import Scattering, ScatteringParams
from .signal_io import AnnotationSet, AudioClip, CallEvent, Label, load_annotations, load_audio

__all__ = [
    "AnnotationSet", "AudioClip", "CallEvent", "DetectionParams", "Label", "PipelineConfig",
    "Scattering", "ScatteringParams", "detect", "load_annotations", "load_audio", "load_config",
]
