"""Security analysis and simulation of BB84 with weak coherent pulses and a phase reference."""

from .attack import conclusive_prob, resend_error_rate, secure_mu_threshold, ukd_povm
from .detection import GYS_LIKE, ChannelParams, DetectorParams, SystemParams
from .postproc import Gf2Matrix, extract_key, pa_output_length, sample_pa_matrices
from .rates import (
    RateModel,
    RatePoint,
    max_secure_distance,
    optimize_mu,
    phase_error_closed,
    phase_error_numeric,
    sweep_distance,
    zero_error_threshold,
)
from .source import SourceKind, SourceVariant, coin_imbalance, purification_overlap

__version__ = "0.1.0"

__all__ = [
    "GYS_LIKE",
    "ChannelParams",
    "DetectorParams",
    "Gf2Matrix",
    "RateModel",
    "RatePoint",
    "SourceKind",
    "SourceVariant",
    "SystemParams",
    "coin_imbalance",
    "conclusive_prob",
    "extract_key",
    "max_secure_distance",
    "optimize_mu",
    "pa_output_length",
    "phase_error_closed",
    "phase_error_numeric",
    "purification_overlap",
    "resend_error_rate",
    "sample_pa_matrices",
    "secure_mu_threshold",
    "sweep_distance",
    "ukd_povm",
    "zero_error_threshold",
]
