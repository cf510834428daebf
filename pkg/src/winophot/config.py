"""Config file handling for the command-line tools.

One JSON document configures everything; keys carry explicit unit suffixes
(_hz, _s, _db, _w, _m).  Parsing is strict: unknown keys anywhere are an
error, so typos cannot silently fall back to defaults.  Power-table entries
and accelerator baselines must carry provenance notes; the tools never invent
comparison numbers.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from .perf import (COMPONENT_NAMES, Baseline, ComponentPower, LayerSpec,
                   TimingParams, vgg16_3x3_layers)
from .photonics import DeviceParams

__all__ = [
    "ConfigError",
    "SweepSettings",
    "DatasetSettings",
    "Config",
    "load_config",
    "parse_config",
    "serialize_config",
    "default_config_dict",
]


class ConfigError(Exception):
    """Malformed, inconsistent, or incomplete configuration."""


def _check_keys(d: dict, allowed, where: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where} "
                          f"(allowed: {', '.join(sorted(allowed))})")


def _build(cls, d: dict, where: str):
    """Construct a dataclass from a dict with strict key checking."""
    names = [f.name for f in fields(cls)]
    _check_keys(d, names, where)
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class SweepSettings:
    """Noise-sweep grids and training hyperparameters."""

    train_fracs: tuple[float, ...] = (0.0, 1e-3, 5e-3)
    infer_fracs: tuple[float, ...] = (1e-4, 3.162e-4, 1e-3, 3.162e-3, 1e-2)
    repeats: int = 5
    epochs: int = 10
    lr: float = 0.1
    batch_size: int = 32

    def __post_init__(self):
        object.__setattr__(self, "train_fracs", tuple(float(f) for f in self.train_fracs))
        object.__setattr__(self, "infer_fracs", tuple(float(f) for f in self.infer_fracs))
        if self.repeats < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("repeats, epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass(frozen=True)
class DatasetSettings:
    """Which image set to use and how to split it.

    source is either the builtin name 'digits8x8' or a path to a dataset CSV
    (see nn.load_dataset for the format).
    """

    source: str = "digits8x8"
    test_count: int = 500
    shuffle_seed: int = 0
    max_train: int | None = None
    max_test: int | None = None


@dataclass(frozen=True)
class Config:
    """Fully resolved tool configuration."""

    seed: int = 0
    out_dir: str = "out"
    plan_m: int = 4
    plan_r: int = 3
    convention: str = "paper"
    device: DeviceParams = field(default_factory=DeviceParams)
    timing: TimingParams = field(default_factory=TimingParams)
    layers: tuple[LayerSpec, ...] = ()
    layers_source: str = "vgg16_3x3"
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    noise: SweepSettings = field(default_factory=SweepSettings)
    component_powers: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)


_TOP_KEYS = ("seed", "out_dir", "plan", "convention", "device", "timing",
             "layers", "dataset", "noise", "component_powers", "baselines")


def default_component_powers() -> dict[str, ComponentPower]:
    """Editable starting power table; every value is a labelled estimate."""
    return {
        "laser": ComponentPower(
            watts=0.05, note="estimate: 50 WDM channels x 1 mW drive each"),
        "dac_array": ComponentPower(
            watts=0.48, note="estimate: 16 DACs x 30 mW (8-bit, multi-GS/s class)"),
        "adc_array": ComponentPower(
            watts=0.80, note="estimate: 16 ADCs x 50 mW (8-bit, multi-GS/s class)"),
        "photodiodes": ComponentPower(
            watts=0.0432, note="36 detectors x 2 V bias x 0.6 A/W x 1 mW received"),
        "mrr_tuning": ComponentPower(
            watts=0.072, note="estimate: 72 rings x 1 mW thermal tuning"),
        "memory_io": ComponentPower(
            watts=2.56, note="estimate: 512 Gbit/s x 5 pJ/bit memory interface"),
        "filter_transform_dsp": ComponentPower(
            watts=0.5, note="estimate: electronic filter-transform engine"),
    }


def parse_config(raw: dict) -> Config:
    """Validate a raw config dict and resolve it into typed settings."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config root")

    plan_d = dict(raw.get("plan", {}))
    _check_keys(plan_d, ("m", "r"), "plan")
    plan_m = int(plan_d.get("m", 4))
    plan_r = int(plan_d.get("r", 3))

    convention = raw.get("convention", "paper")
    if convention not in ("paper", "outputs", "macs"):
        raise ConfigError(f"unknown throughput convention {convention!r}")

    device = _build(DeviceParams, dict(raw.get("device", {})), "device")
    timing = _build(TimingParams, dict(raw.get("timing", {})), "timing")

    layers_raw = raw.get("layers", "vgg16_3x3")
    if isinstance(layers_raw, str):
        if layers_raw != "vgg16_3x3":
            raise ConfigError(f"unknown layer table {layers_raw!r}; use "
                              "'vgg16_3x3' or an inline list")
        layers = tuple(vgg16_3x3_layers())
        layers_source = layers_raw
    elif isinstance(layers_raw, list):
        layers = tuple(_build(LayerSpec, dict(l), f"layers[{i}]")
                       for i, l in enumerate(layers_raw))
        layers_source = "inline"
    else:
        raise ConfigError("layers must be a table name or a list of layer objects")

    dataset = _build(DatasetSettings, dict(raw.get("dataset", {})), "dataset")
    noise = _build(SweepSettings, dict(raw.get("noise", {})), "noise")

    comp_raw = raw.get("component_powers")
    if comp_raw is None:
        components = default_component_powers()
    else:
        if not isinstance(comp_raw, dict):
            raise ConfigError("component_powers must be an object")
        _check_keys(comp_raw, COMPONENT_NAMES, "component_powers")
        components = {name: _build(ComponentPower, dict(entry),
                                   f"component_powers.{name}")
                      for name, entry in comp_raw.items()}

    base_raw = raw.get("baselines", {})
    if not isinstance(base_raw, dict):
        raise ConfigError("baselines must be an object keyed by name")
    baselines = {}
    for name, entry in base_raw.items():
        d = dict(entry)
        _check_keys(d, ("speed_gops", "power_w", "source_note"), f"baselines.{name}")
        try:
            baselines[name] = Baseline(name=name, **d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"baselines.{name}: {exc}") from exc

    return Config(seed=int(raw.get("seed", 0)), out_dir=str(raw.get("out_dir", "out")),
                  plan_m=plan_m, plan_r=plan_r, convention=convention,
                  device=device, timing=timing, layers=layers,
                  layers_source=layers_source, dataset=dataset, noise=noise,
                  component_powers=components, baselines=baselines)


def serialize_config(cfg: Config) -> dict:
    """Full normalized dict for a Config (parse(serialize(c)) == c)."""
    def as_dict(obj):
        return {f.name: getattr(obj, f.name) for f in fields(obj)}

    out = {
        "seed": cfg.seed,
        "out_dir": cfg.out_dir,
        "plan": {"m": cfg.plan_m, "r": cfg.plan_r},
        "convention": cfg.convention,
        "device": as_dict(cfg.device),
        "timing": as_dict(cfg.timing),
        "layers": (cfg.layers_source if cfg.layers_source == "vgg16_3x3"
                   else [as_dict(l) for l in cfg.layers]),
        "dataset": as_dict(cfg.dataset),
        "noise": {**as_dict(cfg.noise),
                  "train_fracs": list(cfg.noise.train_fracs),
                  "infer_fracs": list(cfg.noise.infer_fracs)},
        "component_powers": {
            name: {k: v for k, v in as_dict(entry).items() if v is not None and k != "name"}
            for name, entry in cfg.component_powers.items()},
        "baselines": {
            name: {"speed_gops": b.speed_gops, "power_w": b.power_w,
                   "source_note": b.source_note}
            for name, b in cfg.baselines.items()},
    }
    return out


def default_config_dict() -> dict:
    return serialize_config(parse_config({}))


def load_config(path) -> Config:
    """Read and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw)
