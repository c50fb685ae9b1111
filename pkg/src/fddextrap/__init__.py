"""
FDD massive-MIMO channel extrapolation.

Synthesize multipath SIMO channels against an array pattern, estimate path
parameters from a narrow training band with SAGE, rebuild the channel over
a wider band and score the extrapolation with MSE and reduction of
beamforming gain.
"""

from .array_model import (ArrayPattern, CylindricalArraySpec, EadfPattern, ElementSpec,
                          ExplicitArraySpec, eadf_from_pattern, evaluate_pattern,
                          make_synthetic_pattern, read_patx1, write_patx1)
from .channel_synth import (ChannelMatrix, ImpairmentSpec, PathParams, PathSet, PortGainMask,
                            SphericalWavefront, add_awgn, make_scenario, normalize_to_band,
                            perturb_pattern, read_chx1, synthesize_channel, write_chx1)
from .errors import ConfigError, NumericalError, OutOfRangeError
from .grids import AngleGrid, BandSelection, FrequencyGrid
from .harness import ExperimentConfig, ExperimentResult, run_experiment, validate_config
from .metrics import MetricSeries, array_gain, mse_at, rbg_at, sweep
from .plots import emit_plots
from .preprocess import B2bResponse, apply_b2b, compensate_b2b, select_band
from .sage import (AngleSearch, DelaySearch, EstimationReport, EstimatorConfig, estimate,
                   single_path_ml_oracle)

__version__ = "0.1.0"
