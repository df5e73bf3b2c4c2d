"""System model, condition builders, certification and grid checking."""

from .builders import (
    BuildInfo,
    MinDwell,
    Quadratic,
    RangeDwell,
    Robust,
    SynthCt,
    SynthSd,
    augmented_matrices,
    build_analysis_program,
    build_program,
    build_synthesis_program,
    mode_name,
)
from .certify import (
    BisectionResult,
    Certificate,
    CertifyResult,
    CheckReport,
    ControllerGain,
    GridSpec,
    bisect_dwell_time,
    certify,
    check_certificate,
    recover_gain,
)
from .system import LpvSystem, RateBox, RateVertices

__all__ = [
    "BuildInfo",
    "MinDwell",
    "Quadratic",
    "RangeDwell",
    "Robust",
    "SynthCt",
    "SynthSd",
    "augmented_matrices",
    "build_analysis_program",
    "build_program",
    "build_synthesis_program",
    "mode_name",
    "BisectionResult",
    "Certificate",
    "CertifyResult",
    "CheckReport",
    "ControllerGain",
    "GridSpec",
    "bisect_dwell_time",
    "certify",
    "check_certificate",
    "recover_gain",
    "LpvSystem",
    "RateBox",
    "RateVertices",
]
