"""Pipeline timing and power bookkeeping for the accelerator model.

The datapath is a four-stage compute pipeline (laser drive, input transform,
element-wise multiply, inverse transform) fed by a load stage and drained by
an offload stage.  The clock can run no faster than the slowest stage; with
the default 200 ps stage budget that is 5 GHz, one tile-filter pair per cycle
per parallel path.

Power is strictly config-driven: every component entry carries a value and a
provenance note, and comparisons against external baselines are only made
with user-supplied, source-annotated numbers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources as importlib_resources

import numpy as np

from .winograd import WinogradPlan, make_plan

__all__ = [
    "LayerSpec",
    "TimingParams",
    "LayerTiming",
    "TimingReport",
    "ComponentPower",
    "PowerReport",
    "Baseline",
    "COMPONENT_NAMES",
    "CORE_COMPONENTS",
    "CONVENTIONS",
    "io_time",
    "compute_time",
    "max_clock",
    "tile_filter_time",
    "throughput_gops",
    "layer_time",
    "network_time",
    "power_report",
    "vgg16_3x3_layers",
]


@dataclass(frozen=True)
class LayerSpec:
    """Geometry of one convolutional layer instance.

    h and w are the input extents; padding 'same' keeps them at the output,
    'valid' shrinks them by r - 1.  m is the Winograd output tile edge used
    to schedule the layer.
    """

    name: str
    h: int
    w: int
    c: int
    n_filters: int
    r: int = 3
    m: int = 4
    padding: str = "same"

    def __post_init__(self):
        for f in ("h", "w", "c", "n_filters", "r", "m"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1 in layer {self.name!r}")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if self.padding == "valid" and (self.h < self.r or self.w < self.r):
            raise ValueError(f"layer {self.name!r}: input smaller than filter")

    @property
    def out_h(self) -> int:
        return self.h if self.padding == "same" else self.h - self.r + 1

    @property
    def out_w(self) -> int:
        return self.w if self.padding == "same" else self.w - self.r + 1

    @property
    def tiles(self) -> int:
        return (-(-self.out_h // self.m)) * (-(-self.out_w // self.m))

    @property
    def weight_count(self) -> int:
        return self.n_filters * self.c * self.r * self.r


@dataclass(frozen=True)
class TimingParams:
    """Stage latencies and parallelism of the pipeline.

    The four compute-stage latencies default to an even split of the 200 ps
    cycle; they are independent knobs because real stage delays need not be
    equal.  parallel_paths is the number of tile-filter pairs processed per
    cycle; dac_count is the width of the input-side converter array.
    """

    f_clock_hz: float = 5e9
    t_load_s: float = 200e-12
    t_offload_s: float = 200e-12
    t_laser_s: float = 50e-12
    t_winograd_s: float = 50e-12
    t_ewmm_s: float = 50e-12
    t_inverse_winograd_s: float = 50e-12
    dac_count: int = 16
    parallel_paths: int = 100
    mem_bandwidth_bits_per_s: float = 512e9
    mem_access_s: float = 200e-12

    def __post_init__(self):
        for f in ("f_clock_hz", "t_load_s", "t_offload_s", "t_laser_s",
                  "t_winograd_s", "t_ewmm_s", "t_inverse_winograd_s",
                  "mem_bandwidth_bits_per_s", "mem_access_s"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        for f in ("dac_count", "parallel_paths"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")
        limit = max_clock(self)
        if self.f_clock_hz > limit * (1 + 1e-9):
            raise ValueError(
                f"f_clock {self.f_clock_hz:.3e} Hz exceeds the slowest-stage "
                f"limit {limit:.3e} Hz")


def io_time(p: TimingParams) -> float:
    """Per-cycle I/O latency: load and offload overlap, the slower one wins."""
    return max(p.t_load_s, p.t_offload_s)


def compute_time(p: TimingParams) -> float:
    """Sum of the four compute-stage latencies for one tile-filter pair."""
    return p.t_laser_s + p.t_winograd_s + p.t_ewmm_s + p.t_inverse_winograd_s


def max_clock(p: TimingParams) -> float:
    """Highest sustainable clock: the pipeline is bound by its slowest stage."""
    return 1.0 / max(p.t_load_s, p.t_offload_s, compute_time(p))


def tile_filter_time(f_clock_hz: float) -> float:
    """Seconds to process one tile-filter pair: one clock period."""
    if f_clock_hz <= 0:
        raise ValueError("clock must be positive")
    return 1.0 / f_clock_hz


CONVENTIONS = ("paper", "outputs", "macs")


def _ops_per_cycle(plan: WinogradPlan, convention: str) -> float:
    if convention == "paper":
        # Headline count: r^2 "convolution operations" per tile per cycle
        # (9 for a 3-tap plan), the convention used by the published
        # throughput figures this model is compared against.
        return float(plan.r ** 2)
    if convention == "outputs":
        return float(plan.m ** 2)
    if convention == "macs":
        return float(2 * plan.m ** 2 * plan.r ** 2)
    raise ValueError(f"unknown throughput convention {convention!r}; "
                     f"choose from {CONVENTIONS}")


def throughput_gops(plan: WinogradPlan, f_clock_hz: float,
                    convention: str = "paper") -> float:
    """Single-path throughput in GOP/s under a stated op-count convention.

    'paper' counts r^2 ops per cycle (the headline convention), 'outputs'
    counts finished output pixels (m^2), 'macs' counts multiply-accumulates
    as two ops each (2 m^2 r^2).
    """
    if f_clock_hz <= 0:
        raise ValueError("clock must be positive")
    return _ops_per_cycle(plan, convention) * f_clock_hz / 1e9


@dataclass(frozen=True)
class LayerTiming:
    """Scheduled cost of one layer."""

    name: str
    tiles: int
    work_items: int  # tile-filter-channel triples
    cycles: int
    time_s: float


@dataclass(frozen=True)
class TimingReport:
    """Per-layer schedule plus network totals and headline throughput."""

    layers: tuple[LayerTiming, ...]
    f_clock_hz: float
    parallel_paths: int
    total_cycles: int
    total_time_s: float
    throughput: dict[str, float] = field(default_factory=dict)


def layer_time(layer: LayerSpec, p: TimingParams) -> LayerTiming:
    """Cycle count and wall time for one layer.

    Work is tiles * channels * filters tile-pair evaluations, spread over
    parallel_paths paths at one evaluation per path per cycle.
    """
    work = layer.tiles * layer.c * layer.n_filters
    cycles = -(-work // p.parallel_paths)
    return LayerTiming(name=layer.name, tiles=layer.tiles, work_items=work,
                       cycles=cycles, time_s=cycles / p.f_clock_hz)


def network_time(layers, p: TimingParams) -> TimingReport:
    """Schedule a whole network: per-layer timings plus totals.

    Throughput figures are attached when all layers share one (m, r) plan
    with transform matrices available; otherwise the dict is left empty.
    """
    layers = list(layers)
    if not layers:
        raise ValueError("need at least one layer")
    rows = tuple(layer_time(l, p) for l in layers)
    total_cycles = sum(r.cycles for r in rows)
    total_time = sum(r.time_s for r in rows)
    throughput: dict[str, float] = {}
    plans = {(l.m, l.r) for l in layers}
    if len(plans) == 1:
        m, r = plans.pop()
        try:
            plan = make_plan(m, r)
        except ValueError:
            plan = None
        if plan is not None:
            throughput = {conv: throughput_gops(plan, p.f_clock_hz, conv)
                          for conv in CONVENTIONS}
    return TimingReport(layers=rows, f_clock_hz=p.f_clock_hz,
                        parallel_paths=p.parallel_paths,
                        total_cycles=total_cycles, total_time_s=total_time,
                        throughput=throughput)


# ---------------------------------------------------------------------------
# power


COMPONENT_NAMES = ("laser", "dac_array", "adc_array", "photodiodes",
                   "mrr_tuning", "memory_io", "filter_transform_dsp")
# The photonic core is the optical datapath itself; converters, memory
# traffic and the electronic transform engine are support electronics.
CORE_COMPONENTS = frozenset({"laser", "photodiodes", "mrr_tuning"})


@dataclass(frozen=True)
class ComponentPower:
    """One power-table entry: steady watts or per-layer energy, plus its source.

    Exactly one of watts / energy_j_per_layer must be set.  Energy entries
    (used for work amortized once per layer, e.g. filter transforms) are
    converted to average watts over the network wall time.  The note is
    mandatory: every number in a power report must say where it came from.
    """

    watts: float | None = None
    energy_j_per_layer: float | None = None
    note: str = ""

    def __post_init__(self):
        if (self.watts is None) == (self.energy_j_per_layer is None):
            raise ValueError("set exactly one of watts / energy_j_per_layer")
        value = self.watts if self.watts is not None else self.energy_j_per_layer
        if value < 0:
            raise ValueError("power/energy must be non-negative")
        if not self.note.strip():
            raise ValueError("every power entry needs a provenance note")


@dataclass(frozen=True)
class Baseline:
    """User-supplied reference accelerator figures; never fabricated here."""

    name: str
    speed_gops: float
    power_w: float
    source_note: str

    def __post_init__(self):
        if self.speed_gops <= 0 or self.power_w <= 0:
            raise ValueError(f"baseline {self.name!r} needs positive speed and power")
        if not self.source_note.strip():
            raise ValueError(f"baseline {self.name!r} is missing a source note")


@dataclass(frozen=True)
class PowerReport:
    """Resolved component powers, totals, and efficiency figures."""

    component_watts: dict[str, float]
    notes: dict[str, str]
    total_w: float
    core_w: float
    throughput_gops: float
    convention: str
    efficiency_gops_per_w: float
    core_efficiency_gops_per_w: float


def power_report(dev, p: TimingParams, components: dict[str, ComponentPower],
                 plan: WinogradPlan | None = None, convention: str = "paper",
                 layer_count: int | None = None,
                 total_time_s: float | None = None) -> PowerReport:
    """Aggregate the component power table into totals and efficiencies.

    Every name in COMPONENT_NAMES must be present (missing entries are a
    config error naming the component).  Efficiency divides the headline
    per-path throughput times parallel_paths by the full and core totals.
    """
    missing = [n for n in COMPONENT_NAMES if n not in components]
    if missing:
        raise KeyError(f"missing component power entry: {missing[0]!r}")
    unknown = [n for n in components if n not in COMPONENT_NAMES]
    if unknown:
        raise KeyError(f"unknown power component {unknown[0]!r}; "
                       f"expected one of {COMPONENT_NAMES}")
    if plan is None:
        plan = make_plan(4, 3)

    watts: dict[str, float] = {}
    notes: dict[str, str] = {}
    for name in COMPONENT_NAMES:
        entry = components[name]
        if entry.watts is not None:
            watts[name] = entry.watts
        else:
            if layer_count is None or total_time_s is None or total_time_s <= 0:
                raise ValueError(
                    f"component {name!r} is specified as energy per layer; "
                    "amortizing it needs layer_count and total_time_s")
            watts[name] = entry.energy_j_per_layer * layer_count / total_time_s
        notes[name] = entry.note

    total = sum(watts.values())
    core = sum(v for k, v in watts.items() if k in CORE_COMPONENTS)
    gops = throughput_gops(plan, p.f_clock_hz, convention) * p.parallel_paths
    eff = gops / total if total > 0 else math.inf
    core_eff = gops / core if core > 0 else math.inf
    return PowerReport(component_watts=watts, notes=notes, total_w=total,
                       core_w=core, throughput_gops=gops, convention=convention,
                       efficiency_gops_per_w=eff,
                       core_efficiency_gops_per_w=core_eff)


def vgg16_3x3_layers() -> list[LayerSpec]:
    """The bundled editable VGG16 convolutional-layer table (all 3x3, same pad)."""
    path = importlib_resources.files("winophot.data") / "vgg16_3x3_layers.csv"
    layers = []
    with path.open("r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            layers.append(LayerSpec(name=row["name"], h=int(row["h"]),
                                    w=int(row["w"]), c=int(row["c"]),
                                    n_filters=int(row["n_filters"]),
                                    r=int(row["r"]), m=int(row["m"]),
                                    padding=row["padding"]))
    return layers
