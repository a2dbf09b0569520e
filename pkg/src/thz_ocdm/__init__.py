"""Multi-band OCDM radar simulation at THz frequencies.

Waveform synthesis, THz channel, per-subband delay/Doppler estimation and
inverse-variance fusion of the per-subband estimates.
"""

__version__ = "0.1.0"

from .constants import SPEED_OF_LIGHT
from .errors import InvalidParameterError, PreconditionError
from .waveform import (
    FresnelBasis,
    OcdmFrame,
    SubbandParams,
    SymbolMatrix,
    build_fresnel_basis,
    generate_payload,
    modulate_direct,
    modulate_fft,
)
from .channel import (
    ReceivedCube,
    SceneConfig,
    TargetTruth,
    active_subbands,
    apply_radar_channel,
    calibrate_tx_power,
    path_loss,
)
from .sensing import (
    PeriodogramMap,
    RadarCube,
    SensingOptions,
    SubbandEstimate,
    bins_to_params,
    crlb,
    dfnt_filter,
    estimate_amplitude,
    peak_search,
    periodogram,
    process_subband,
    remove_payload,
)
from .fusion import FusedEstimate, combine, fuse_subband_estimates, optimal_weights

__all__ = [
    "SPEED_OF_LIGHT",
    "InvalidParameterError",
    "PreconditionError",
    "FresnelBasis",
    "OcdmFrame",
    "SubbandParams",
    "SymbolMatrix",
    "build_fresnel_basis",
    "generate_payload",
    "modulate_direct",
    "modulate_fft",
    "ReceivedCube",
    "SceneConfig",
    "TargetTruth",
    "active_subbands",
    "apply_radar_channel",
    "calibrate_tx_power",
    "path_loss",
    "PeriodogramMap",
    "RadarCube",
    "SensingOptions",
    "SubbandEstimate",
    "bins_to_params",
    "crlb",
    "dfnt_filter",
    "estimate_amplitude",
    "peak_search",
    "periodogram",
    "process_subband",
    "remove_payload",
    "FusedEstimate",
    "combine",
    "fuse_subband_estimates",
    "optimal_weights",
]
