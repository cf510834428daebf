"""Hardware resource budgeting: wavelengths, rings, analog weight storage.

Maps network layers onto the device's wavelength budget, the ring-resonator
count of the multiply fabric, the connection ceiling of a broadcast-and-weight
bank, and the silicon area of analog (memristive) weight storage, flagging
whatever does not fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .photonics import DeviceParams
from .winograd import WinogradPlan

__all__ = [
    "ChannelVerdict",
    "MrrCount",
    "LayerResources",
    "ResourceReport",
    "CONNECTION_LIMIT",
    "FILTER_SIZE_NOTE",
    "MEMRISTOR_AREA_NOTE",
    "channel_budget",
    "mrr_count",
    "memristor_area_cm2",
    "required_dynamic_range_db",
    "feasibility",
]

# Demonstrated weight-bank scale: ~108 wavelengths, giving on the order of
# 108^2 ~ 10k independent source-to-detector connections per bank.
CONNECTION_LIMIT = 108 ** 2

FILTER_SIZE_NOTE = ("Targeting 3x3 kernels covers the dominant workload: in "
                    "VGG16 every one of the 13 convolutional layers is 3x3 "
                    "(100% of its convolutions).")

MEMRISTOR_AREA_NOTE = (
    "Known discrepancy: storing 884,736 weights in 50 um x 50 um analog cells "
    "occupies 22.12 cm^2, not the published claim of \"less than 0.25 cm^2\". "
    "The claim would hold at roughly a 5 um cell edge (0.22 cm^2), so it "
    "appears to assume an order-of-magnitude smaller cell than stated. This "
    "report uses the computed value.")


@dataclass(frozen=True)
class ChannelVerdict:
    """Wavelength-count check for one layer's input channels."""

    channels_required: int
    budget: int
    feasible: bool
    batching_factor: int  # serial passes needed when over budget

    def __str__(self) -> str:
        if self.feasible:
            return f"{self.channels_required}/{self.budget} wavelengths: ok"
        return (f"{self.channels_required}/{self.budget} wavelengths: over "
                f"budget, needs x{self.batching_factor} channel batching")


def channel_budget(c: int, dev: DeviceParams) -> ChannelVerdict:
    """Check one-wavelength-per-input-channel against the device budget."""
    if c < 1:
        raise ValueError("channel count must be >= 1")
    return ChannelVerdict(channels_required=c, budget=dev.channel_count_max,
                          feasible=c <= dev.channel_count_max,
                          batching_factor=-(-c // dev.channel_count_max))


@dataclass(frozen=True)
class MrrCount:
    """Ring-resonator tally for the multiply fabric.

    ewmm rings implement the n^2 element-wise multiplies per parallel path;
    input_transform rings are the weighting rings of the optical input
    transform stage, reported separately because that stage's exact ring
    budget is a lower bound (routing and trim rings excluded).
    """

    ewmm: int
    input_transform: int

    @property
    def total(self) -> int:
        return self.ewmm + self.input_transform


def mrr_count(plan: WinogradPlan, paths: int = 1) -> MrrCount:
    """Rings needed for `paths` parallel tile-filter pipelines."""
    if paths < 1:
        raise ValueError("paths must be >= 1")
    n_sq = plan.n ** 2
    return MrrCount(ewmm=n_sq * paths, input_transform=n_sq * paths)


def memristor_area_cm2(weight_count: int, cell_edge_m: float) -> float:
    """Die area of analog weight storage: count * edge^2, in cm^2."""
    if weight_count < 1:
        raise ValueError("weight count must be >= 1")
    if cell_edge_m <= 0:
        raise ValueError("cell edge must be positive")
    return weight_count * (cell_edge_m ** 2) * 1e4  # m^2 -> cm^2


def required_dynamic_range_db(dev: DeviceParams) -> float:
    """Detector dynamic range needed to resolve one weight step.

    The smallest nonzero stored weight is 1/(2^bits - 1) of full scale, so
    the detector must span 10 log10(2^bits - 1) dB of optical power.
    """
    return 10.0 * math.log10((1 << dev.memristor_bits) - 1)


@dataclass(frozen=True)
class LayerResources:
    """Per-layer feasibility row."""

    name: str
    c: int
    n_filters: int
    channels: ChannelVerdict
    connections_required: int
    connections_ok: bool
    dynamic_range_required_db: float
    dynamic_range_ok: bool
    weight_count: int

    @property
    def feasible(self) -> bool:
        return self.channels.feasible and self.connections_ok and self.dynamic_range_ok


@dataclass(frozen=True)
class ResourceReport:
    """Network-level resource summary."""

    layers: tuple[LayerResources, ...]
    rings: MrrCount
    paths: int
    weight_count: int
    memristor_area_cm2_at_50um: float
    notes: tuple[str, ...]

    @property
    def feasible(self) -> bool:
        return all(l.feasible for l in self.layers)


def feasibility(layers, plan: WinogradPlan, dev: DeviceParams,
                paths: int = 1, cell_edge_m: float = 50e-6) -> ResourceReport:
    """Check every layer against wavelength, connection, and range budgets.

    Connections are counted as input-channel x filter pairs routed through
    one weight bank; the per-bank ceiling is CONNECTION_LIMIT.  A layer is
    infeasible if any constraint fails; channel-starved layers report the
    serial batching factor that would make them fit.
    """
    layers = list(layers)
    if not layers:
        raise ValueError("need at least one layer")
    dr_needed = required_dynamic_range_db(dev)
    rows = []
    for layer in layers:
        conns = layer.c * layer.n_filters
        rows.append(LayerResources(
            name=layer.name, c=layer.c, n_filters=layer.n_filters,
            channels=channel_budget(layer.c, dev),
            connections_required=conns,
            connections_ok=conns <= CONNECTION_LIMIT,
            dynamic_range_required_db=dr_needed,
            dynamic_range_ok=dr_needed <= dev.dynamic_range_db,
            weight_count=layer.weight_count,
        ))
    total_weights = sum(r.weight_count for r in rows)
    return ResourceReport(
        layers=tuple(rows),
        rings=mrr_count(plan, paths),
        paths=paths,
        weight_count=total_weights,
        memristor_area_cm2_at_50um=memristor_area_cm2(total_weights, cell_edge_m),
        notes=(FILTER_SIZE_NOTE, MEMRISTOR_AREA_NOTE),
    )
