"""winophot: analytical models of a Winograd-filtering photonic CNN accelerator.

The package splits into five layers:

* :mod:`winophot.winograd` -- exact Winograd convolution (F(2,3), F(4,3)),
  tile streaming, and randomized equivalence checks against direct
  convolution.
* :mod:`winophot.photonics` -- photodetector and microring behavioral models:
  responsivity, shot/thermal noise, quantization, crosstalk, and an
  impairment-aware element-wise matrix multiply.
* :mod:`winophot.perf` -- pipeline timing, throughput conventions, and
  component power/efficiency accounting.
* :mod:`winophot.nn` -- a small Winograd-based CNN with hardware noise
  injection for train/inference robustness sweeps.
* :mod:`winophot.resources` -- wavelength, ring-count, and analog weight
  storage budgets.

:mod:`winophot.config` parses JSON run configs and :mod:`winophot.cli`
exposes everything as the ``winophot`` command.
"""

from .config import (Config, ConfigError, DatasetSettings, SweepSettings,
                     default_component_powers, default_config_dict,
                     load_config, parse_config, serialize_config)
from .nn import (Dataset, EvalResult, NoiseSpec, SmallCNN, SweepResult,
                 TrainingDivergedError, bundled_digits, calibrate, evaluate,
                 forward, load_dataset, loss_and_grads, noise_sweep,
                 save_dataset, split_dataset, train)
from .perf import (COMPONENT_NAMES, CONVENTIONS, CORE_COMPONENTS, Baseline,
                   ComponentPower, LayerSpec, LayerTiming, PowerReport,
                   TimingParams, TimingReport, compute_time, io_time,
                   layer_time, max_clock, network_time, power_report,
                   throughput_gops, tile_filter_time, vgg16_3x3_layers)
from .photonics import (BOLTZMANN_J_K, ELEMENTARY_CHARGE_C, LIGHT_SPEED_M_S,
                        PLANCK_J_S, CapacityError, DeviceParams, Impairments,
                        NoiseSample, analog_ewmm, apply_crosstalk,
                        clip_dynamic_range, derived_rng, eta_for_responsivity,
                        mrr_weight, pd_electrical_power, photodiode_sum,
                        quantize, responsivity, sample_noise, shot_noise_rms,
                        thermal_noise_rms)
from .resources import (CONNECTION_LIMIT, FILTER_SIZE_NOTE,
                        MEMRISTOR_AREA_NOTE, ChannelVerdict, LayerResources,
                        MrrCount, ResourceReport, channel_budget, feasibility,
                        memristor_area_cm2, mrr_count,
                        required_dynamic_range_db)
from .winograd import (CheckResult, FeatureMap, FilterBank, TileStream,
                       WinogradPlan, complexity_reduction, conv2d_direct,
                       ewmm, inverse_transform, make_plan, oracle_check,
                       plan_identity_error, tile_stream, transform_filter,
                       transform_input, winograd_conv2d)

__version__ = "0.1.0"

__all__ = [
    # winograd
    "WinogradPlan", "make_plan", "plan_identity_error", "FeatureMap",
    "FilterBank", "transform_filter", "transform_input", "ewmm",
    "inverse_transform", "complexity_reduction", "conv2d_direct",
    "winograd_conv2d", "TileStream", "tile_stream", "CheckResult",
    "oracle_check",
    # photonics
    "ELEMENTARY_CHARGE_C", "PLANCK_J_S", "LIGHT_SPEED_M_S", "BOLTZMANN_J_K",
    "CapacityError", "responsivity", "eta_for_responsivity", "shot_noise_rms",
    "thermal_noise_rms", "DeviceParams", "NoiseSample", "sample_noise",
    "quantize", "clip_dynamic_range", "mrr_weight", "apply_crosstalk",
    "photodiode_sum", "pd_electrical_power", "derived_rng", "Impairments",
    "analog_ewmm",
    # perf
    "LayerSpec", "TimingParams", "io_time", "compute_time", "max_clock",
    "tile_filter_time", "CONVENTIONS", "throughput_gops", "LayerTiming",
    "TimingReport", "layer_time", "network_time", "COMPONENT_NAMES",
    "CORE_COMPONENTS", "ComponentPower", "Baseline", "PowerReport",
    "power_report", "vgg16_3x3_layers",
    # nn
    "TrainingDivergedError", "Dataset", "load_dataset", "save_dataset",
    "split_dataset", "bundled_digits", "NoiseSpec", "SmallCNN", "calibrate",
    "forward", "loss_and_grads", "train", "EvalResult", "evaluate",
    "SweepResult", "noise_sweep",
    # resources
    "CONNECTION_LIMIT", "FILTER_SIZE_NOTE", "MEMRISTOR_AREA_NOTE",
    "ChannelVerdict", "channel_budget", "MrrCount", "mrr_count",
    "memristor_area_cm2", "required_dynamic_range_db", "LayerResources",
    "ResourceReport", "feasibility",
    # config
    "Config", "ConfigError", "SweepSettings", "DatasetSettings",
    "parse_config", "serialize_config", "load_config", "default_config_dict",
    "default_component_powers",
]
