"""Photonic device models for the analog element-wise multiply datapath.

Models the broadcast-and-weight scheme: inputs modulate per-wavelength laser
power, microring resonators (MRRs) apply magnitude weights, and balanced
photodiode pairs recover signed MACs as photocurrent.  Signed quantities are
carried as signed floats; the sign physically lives in which arm of the
balanced pair receives the light.

All functions are pure; anything stochastic takes an explicit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ELEMENTARY_CHARGE_C",
    "PLANCK_J_S",
    "LIGHT_SPEED_M_S",
    "BOLTZMANN_J_K",
    "DeviceParams",
    "NoiseSample",
    "Impairments",
    "CapacityError",
    "responsivity",
    "eta_for_responsivity",
    "shot_noise_rms",
    "thermal_noise_rms",
    "sample_noise",
    "quantize",
    "clip_dynamic_range",
    "mrr_weight",
    "apply_crosstalk",
    "photodiode_sum",
    "pd_electrical_power",
    "analog_ewmm",
    "derived_rng",
]

# 2019 SI exact values.
ELEMENTARY_CHARGE_C = 1.602176634e-19
PLANCK_J_S = 6.62607015e-34
LIGHT_SPEED_M_S = 299792458.0
BOLTZMANN_J_K = 1.380649e-23


class CapacityError(ValueError):
    """A hardware budget (e.g. wavelength channel count) was exceeded."""


def responsivity(wavelength_m: float, quantum_efficiency: float) -> float:
    """Photodiode responsivity R = lambda * q * eta / (h * c), in A/W."""
    if wavelength_m <= 0:
        raise ValueError("wavelength must be positive")
    if not 0.0 <= quantum_efficiency <= 1.0:
        raise ValueError("quantum efficiency must lie in [0, 1]")
    return (wavelength_m * ELEMENTARY_CHARGE_C * quantum_efficiency
            / (PLANCK_J_S * LIGHT_SPEED_M_S))


def eta_for_responsivity(r_a_per_w: float, wavelength_m: float) -> float:
    """Quantum efficiency that yields a target responsivity at a wavelength."""
    if r_a_per_w < 0:
        raise ValueError("responsivity must be non-negative")
    eta = r_a_per_w * PLANCK_J_S * LIGHT_SPEED_M_S / (wavelength_m * ELEMENTARY_CHARGE_C)
    if eta > 1.0 + 1e-12:
        raise ValueError(f"responsivity {r_a_per_w} A/W unreachable at "
                         f"{wavelength_m * 1e9:.0f} nm (needs eta={eta:.3f})")
    return min(eta, 1.0)


def shot_noise_rms(i_photo_a: float, i_dark_a: float, bandwidth_hz: float) -> float:
    """RMS shot-noise current sqrt(2 q (I_ph + I_d) df), in A."""
    if i_photo_a < 0 or i_dark_a < 0 or bandwidth_hz < 0:
        raise ValueError("currents and bandwidth must be non-negative")
    return math.sqrt(2.0 * ELEMENTARY_CHARGE_C * (i_photo_a + i_dark_a) * bandwidth_hz)


def thermal_noise_rms(temperature_k: float, shunt_ohm: float, bandwidth_hz: float) -> float:
    """RMS Johnson noise current sqrt(4 k_B T df / R_sh), in A."""
    if temperature_k < 0 or bandwidth_hz < 0:
        raise ValueError("temperature and bandwidth must be non-negative")
    if shunt_ohm <= 0:
        raise ValueError("shunt resistance must be positive")
    return math.sqrt(4.0 * BOLTZMANN_J_K * temperature_k * bandwidth_hz / shunt_ohm)


@dataclass(frozen=True)
class DeviceParams:
    """Device constants for the photonic datapath.

    Defaults describe a C-band link: 0.6 A/W-class photodiodes at 1550 nm,
    6-bit analog weight storage, 8-bit converters, 50 wavelength channels at
    0.8 nm spacing, -10 dB adjacent-channel crosstalk, 2 dB per-MRR insertion
    loss, and a 5 GHz detection bandwidth matched to the pipeline clock.
    shunt_resistance_ohm and dark_current_a are modelling choices, not device
    data; nep_w_per_sqrt_hz is carried for reporting only.
    """

    wavelength_m: float = 1550e-9
    quantum_efficiency: float = 0.48  # ~0.6 A/W at 1550 nm
    dark_current_a: float = 0.0
    bandwidth_hz: float = 5e9
    temperature_k: float = 300.0
    shunt_resistance_ohm: float = 50.0
    memristor_bits: int = 6
    dac_bits: int = 8
    adc_bits: int = 8
    dynamic_range_db: float = 20.0
    insertion_loss_db: float = 2.0
    propagation_loss_db_per_cm: float = 2.0
    channel_count_max: int = 50
    channel_spacing_m: float = 0.8e-9
    crosstalk_db: float = -10.0
    laser_power_per_channel_w: float = 1e-3
    pd_bias_voltage_v: float = -2.0
    nep_w_per_sqrt_hz: float = 1e-12

    def __post_init__(self):
        positives = ("wavelength_m", "shunt_resistance_ohm", "channel_spacing_m",
                     "laser_power_per_channel_w")
        for name in positives:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        non_negative = ("dark_current_a", "bandwidth_hz", "temperature_k",
                        "dynamic_range_db", "insertion_loss_db",
                        "propagation_loss_db_per_cm", "nep_w_per_sqrt_hz")
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.quantum_efficiency <= 1.0:
            raise ValueError("quantum_efficiency must lie in [0, 1]")
        for name in ("memristor_bits", "dac_bits", "adc_bits"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.channel_count_max < 1:
            raise ValueError("channel_count_max must be >= 1")

    @property
    def responsivity_a_per_w(self) -> float:
        return responsivity(self.wavelength_m, self.quantum_efficiency)


@dataclass(frozen=True)
class NoiseSample:
    """One photodiode noise evaluation: RMS components plus a seeded draw."""

    shot_rms_a: float
    thermal_rms_a: float
    total_rms_a: float
    draw_a: float


def sample_noise(i_signal_a: float, dev: DeviceParams,
                 rng: np.random.Generator) -> NoiseSample:
    """Evaluate shot + thermal noise at a signal current and draw once.

    Shot noise uses the instantaneous |I| plus dark current; the two RMS
    contributions add in quadrature.
    """
    shot = shot_noise_rms(abs(i_signal_a), dev.dark_current_a, dev.bandwidth_hz)
    thermal = thermal_noise_rms(dev.temperature_k, dev.shunt_resistance_ohm,
                                dev.bandwidth_hz)
    total = math.hypot(shot, thermal)
    draw = float(rng.standard_normal()) * total
    return NoiseSample(shot, thermal, total, draw)


def quantize(x, bits: int, lo: float, hi: float):
    """Snap x to 2^bits uniformly spaced levels spanning [lo, hi].

    Values are clamped to the range first; ties round toward the higher
    level.  Works element-wise on arrays; scalars come back as floats.
    """
    if bits < 1:
        raise ValueError("bits must be >= 1")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    levels = (1 << bits) - 1
    xa = np.asarray(x, dtype=np.float64)
    idx = np.floor((np.clip(xa, lo, hi) - lo) / (hi - lo) * levels + 0.5)
    out = lo + idx * (hi - lo) / levels
    return float(out) if np.isscalar(x) or xa.ndim == 0 else out


def clip_dynamic_range(p_w: float, p_max_w: float, dynamic_range_db: float) -> float:
    """Confine an optical power reading to the detector's resolvable window.

    The ceiling is p_max; the floor p_max * 10^(-DR/10) marks the SNR = 1
    boundary, below which a reading is reported as floor-clipped.
    """
    if p_w < 0:
        raise ValueError("optical power must be non-negative")
    if p_max_w <= 0:
        raise ValueError("p_max must be positive")
    floor = p_max_w * 10.0 ** (-dynamic_range_db / 10.0)
    return min(max(p_w, floor), p_max_w)


def mrr_weight(w: float, p_in_w: float, insertion_loss_db: float = 0.0):
    """Weight optical power by |w| through an MRR pair, keeping w's sign.

    Returns sign(w) * |w| * p_in * 10^(-IL/10); the sign selects which arm of
    the balanced photodiode pair the dropped light lands on.  Weights must be
    pre-normalized to |w| <= 1.
    """
    wa = np.asarray(w, dtype=np.float64)
    if np.any(np.abs(wa) > 1.0 + 1e-12):
        raise ValueError("weights must be normalized to |w| <= 1")
    pa = np.asarray(p_in_w, dtype=np.float64)
    if np.any(pa < 0):
        raise ValueError("input power must be non-negative")
    if insertion_loss_db < 0:
        raise ValueError("insertion loss must be non-negative")
    out = wa * pa * 10.0 ** (-insertion_loss_db / 10.0)
    return float(out) if out.ndim == 0 else out


def apply_crosstalk(signed_powers_w, crosstalk_db: float) -> np.ndarray:
    """Leak a fixed fraction of each channel's power onto its neighbors.

    Each channel additionally receives 10^(xt_db/10) of each adjacent
    channel's (signed) detected power; the donor keeps its own signal, since
    leakage is filter bleed-through at the detector rather than power
    transfer.
    """
    s = np.asarray(signed_powers_w, dtype=np.float64).copy()
    if s.ndim != 1:
        raise ValueError("expected a 1D channel power vector")
    frac = 10.0 ** (crosstalk_db / 10.0)
    out = s.copy()
    out[1:] += frac * s[:-1]
    out[:-1] += frac * s[1:]
    return out


def photodiode_sum(channel_powers_w, dev: DeviceParams,
                   rng_seed: int | None = None) -> float:
    """Sum per-wavelength signed powers on one balanced detector, in amperes.

    The incoherent optical sum is the MAC primitive: I = R * sum(p).  With
    rng_seed given, one Gaussian noise draw at the shot+thermal RMS is added;
    with rng_seed=None the detection is noiseless.  Raises CapacityError when
    more channels are presented than the device supports.
    """
    powers = np.asarray(channel_powers_w, dtype=np.float64).reshape(-1)
    if powers.size > dev.channel_count_max:
        raise CapacityError(
            f"{powers.size} wavelength channels exceed the device budget "
            f"of {dev.channel_count_max}")
    i_signal = dev.responsivity_a_per_w * float(powers.sum())
    if rng_seed is None:
        return i_signal
    noise = sample_noise(i_signal, dev, np.random.default_rng(rng_seed))
    return i_signal + noise.draw_a


def pd_electrical_power(p_optical_w: float, dev: DeviceParams) -> float:
    """Electrical power drawn by one reverse-biased photodiode, |V_bias| * R * P."""
    if p_optical_w < 0:
        raise ValueError("optical power must be non-negative")
    return abs(dev.pd_bias_voltage_v) * dev.responsivity_a_per_w * p_optical_w


def derived_rng(*parts) -> np.random.Generator:
    """Deterministic generator for a (seed, index...) tuple.

    Lets independent elements draw noise independently of evaluation order:
    derive one stream per element instead of sharing a sequential stream.
    """
    ints = []
    for p in parts:
        if isinstance(p, str):
            ints.append(int.from_bytes(p.encode("utf-8"), "little") % (1 << 63))
        else:
            ints.append(int(p) & ((1 << 63) - 1))
    return np.random.default_rng(np.random.SeedSequence(ints))


# ---------------------------------------------------------------------------
# end-to-end analog element-wise multiply


@dataclass(frozen=True)
class Impairments:
    """Which stages of the analog chain are active.

    bits=None disables a quantizer.  `none()` is the ideal chain (must match
    the digital multiply exactly); `full(dev)` enables the converter/storage
    quantizers and detection noise, with crosstalk and dynamic-range clipping
    as opt-ins since they model layout-dependent effects.
    """

    weight_bits: int | None = None
    input_bits: int | None = None
    output_bits: int | None = None
    noise: bool = False
    crosstalk: bool = False
    dynamic_range_clip: bool = False

    @classmethod
    def none(cls) -> "Impairments":
        return cls()

    @classmethod
    def full(cls, dev: DeviceParams, crosstalk: bool = False,
             dynamic_range_clip: bool = False) -> "Impairments":
        return cls(weight_bits=dev.memristor_bits, input_bits=dev.dac_bits,
                   output_bits=dev.adc_bits, noise=True, crosstalk=crosstalk,
                   dynamic_range_clip=dynamic_range_clip)

    @property
    def any_optical(self) -> bool:
        return self.noise or self.crosstalk or self.dynamic_range_clip


def analog_ewmm(u, v, dev: DeviceParams, seed: int | None = 0,
                impairments: Impairments | None = None,
                u_scale: float | None = None,
                v_scale: float | None = None) -> np.ndarray:
    """Element-wise multiply u * v through the modelled analog chain.

    u plays the stored-weight role (analog memory quantization), v the
    streamed-input role (DAC quantization).  Both are scaled to [-1, 1] by
    u_scale / v_scale (their max-abs by default; pass per-layer scalars when
    tiles share a normalization), multiplied optically at laser power,
    detected with shot+thermal noise, ADC-quantized, and rescaled back.

    With impairments=Impairments.none() the result equals the digital
    element-wise product exactly.
    """
    ua = np.asarray(u, dtype=np.float64)
    va = np.asarray(v, dtype=np.float64)
    if ua.shape != va.shape:
        raise ValueError(f"operands must match, got {ua.shape} vs {va.shape}")
    imp = Impairments.full(dev) if impairments is None else impairments

    if u_scale is None:
        u_scale = float(np.max(np.abs(ua))) or 1.0
    if v_scale is None:
        v_scale = float(np.max(np.abs(va))) or 1.0
    if u_scale <= 0 or v_scale <= 0:
        raise ValueError("normalization scalars must be positive")

    wn = ua / u_scale if u_scale != 1.0 else ua
    xn = va / v_scale if v_scale != 1.0 else va
    if np.max(np.abs(wn)) > 1 + 1e-12 or np.max(np.abs(xn)) > 1 + 1e-12:
        raise ValueError("normalization scalars do not cover the operand range")

    if imp.weight_bits is not None:
        wn = quantize(wn, imp.weight_bits, -1.0, 1.0)
    if imp.input_bits is not None:
        xn = quantize(xn, imp.input_bits, -1.0, 1.0)

    # Normalized signed product; == the detected power as a fraction of the
    # per-channel full scale, so the ideal chain needs no power round-trip.
    frac = wn * xn

    if imp.any_optical:
        loss_lin = 10.0 ** (-dev.insertion_loss_db / 10.0)
        p_full = dev.laser_power_per_channel_w * loss_lin
        p = frac * p_full
        if imp.crosstalk:
            # Tile elements sit on adjacent wavelengths in row-major order.
            p = apply_crosstalk(p.reshape(-1), dev.crosstalk_db).reshape(p.shape)
        if imp.dynamic_range_clip:
            mag = np.vectorize(clip_dynamic_range)(np.abs(p), p_full,
                                                   dev.dynamic_range_db)
            p = np.sign(p) * mag
        resp = dev.responsivity_a_per_w
        i = resp * p
        if imp.noise:
            shot_var = (2.0 * ELEMENTARY_CHARGE_C
                        * (np.abs(i) + dev.dark_current_a) * dev.bandwidth_hz)
            thermal = thermal_noise_rms(dev.temperature_k,
                                        dev.shunt_resistance_ohm, dev.bandwidth_hz)
            sigma = np.sqrt(shot_var + thermal ** 2)
            rng = np.random.default_rng(seed)
            i = i + rng.standard_normal(i.shape) * sigma
        frac = i / (resp * p_full)

    if imp.output_bits is not None:
        frac = quantize(frac, imp.output_bits, -1.0, 1.0)
    return frac * (u_scale * v_scale)
