"""Bi-static mmWave uplink sensing at a hybrid array.

Library layout:

* :mod:`upsense.scenario` -- multipath/clock/symbol synthesis (pure functions
  of config + seed).
* :mod:`upsense.arrays`   -- ULA steering vectors, DFT scanning codebook,
  virtual-array reconstruction.
* :mod:`upsense.aoa`      -- frequency-smoothed MUSIC AoA estimation and LoS
  detection from beam-scan snapshots.
* :mod:`upsense.beams`    -- reference-beam designs (Bartlett, null-space,
  hybrid, SINR-optimal, MVDR) plus gain/noise estimation.
* :mod:`upsense.ddest`    -- signal-ratio clock-offset cancellation and joint
  Doppler/relative-delay MUSIC (FFT-accelerated and direct forms).
* :mod:`upsense.metrics`  -- NMSE, CCDF, detection accuracy, truth matching.
* :mod:`upsense.pipeline` -- one full sensing trial.
* :mod:`upsense.harness`  -- seeded Monte Carlo sweeps, CSV persistence.
"""

from .arrays import Codebook, build_codebook, steering_vector
from .scenario import (
    ClockRealization,
    ConfigError,
    PathParams,
    PathSet,
    ScenarioConfig,
    sample_clock,
    sample_scenario,
)
from .aoa import AoaEstimate, EstimationFailure
from .ddest import DdEstimate, RatioSnapshot, SnapshotRejected
from .harness import ExperimentSpec, load_config, run_experiment
from .pipeline import TrialResult, run_trial

__all__ = [
    "AoaEstimate",
    "ClockRealization",
    "Codebook",
    "ConfigError",
    "DdEstimate",
    "EstimationFailure",
    "ExperimentSpec",
    "PathParams",
    "PathSet",
    "RatioSnapshot",
    "ScenarioConfig",
    "SnapshotRejected",
    "TrialResult",
    "build_codebook",
    "load_config",
    "run_experiment",
    "run_trial",
    "sample_clock",
    "sample_scenario",
    "steering_vector",
]

__version__ = "0.1.0"
