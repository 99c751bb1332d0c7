"""Eye-tracker data quality: accuracy, precision, timing, linearity, crosstalk,
recalibration and binocular filter identification."""
from .core import (Device, Eye, GazeChannel, GazeRecording, GazeSample, TargetStep, UnitGazeVector,
                   angles_to_unit_vector, correct_target_for_eye, unit_vector_to_angles)
from .errors import GazeQCError
from .ingest import load_manifest, load_recording, save_recording
from .kernels import BACKEND
from .pipeline import AssessConfig, assess_recording
from .synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Device",
    "Eye",
    "GazeChannel",
    "GazeRecording",
    "GazeSample",
    "GazeQCError",
    "TargetStep",
    "UnitGazeVector",
    "AssessConfig",
    "SynthConfig",
    "angles_to_unit_vector",
    "assess_recording",
    "correct_target_for_eye",
    "generate",
    "load_manifest",
    "load_recording",
    "save_recording",
    "unit_vector_to_angles",
    "__version__",
]
