"""Uniform mid-rise ADC quantization and its Gaussian noise model.

A b-bit mid-rise quantizer maps a real input to the nearest of 2^b levels
at odd multiples of step/2, saturating at the outermost level.  For inputs
that stay inside the non-clipping range the quantization error is well
approximated as zero-mean with variance step^2 / 12; the closed-form noise
model below builds the per-antenna complex noise variance and the diagonal
covariance D used by the detectors from that approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bibc.scene import ChannelSet


def quantize(y, step: float, bits: int):
    """Mid-rise quantization of real input(s): levels step*(k + 1/2), clipped
    to 2^bits levels centered at zero.  Q(0) = +step/2."""
    if step <= 0:
        raise ValueError("quantization step must be positive")
    if bits < 1:
        raise ValueError("bits must be >= 1")
    y = np.asarray(y, dtype=float)
    k = np.floor(y / step)
    half = 2 ** (bits - 1)
    k = np.clip(k, -half, half - 1)
    out = step * (k + 0.5)
    if out.ndim == 0:
        return float(out)
    return out


def quantize_complex(y, step: float, bits: int) -> np.ndarray:
    """Apply the mid-rise quantizer separately to real and imaginary parts."""
    y = np.asarray(y)
    return quantize(y.real, step, bits) + 1j * quantize(y.imag, step, bits)


def step_size(input_power: float, bits: int) -> float:
    """Step adapted to the input scale: sqrt(E[y^2]) / 2^(b-1)."""
    if input_power < 0:
        raise ValueError("input power must be nonnegative")
    return float(np.sqrt(input_power)) / 2 ** (bits - 1)


def noise_variance(signal_power, dli_power, bits):
    """Per-antenna complex quantization-noise variance
    (P_dli + P_signal + 1) / (3 * 2^(2b)); unit additive noise included."""
    signal_power = np.asarray(signal_power, dtype=float)
    dli_power = np.asarray(dli_power, dtype=float)
    bits = np.asarray(bits)
    if np.any(signal_power < 0) or np.any(dli_power < 0):
        raise ValueError("powers must be nonnegative")
    if np.any(bits < 1):
        raise ValueError("bits must be >= 1")
    return (dli_power + signal_power + 1.0) / (3.0 * 4.0 ** bits.astype(float))


def sqnr_db(signal_power: float, total_power: float, bits: int) -> float:
    """Signal-to-quantization-noise ratio 3 * 2^(2b) * E[x^2] / E[y^2], in dB."""
    if total_power <= 0 or signal_power <= 0:
        raise ValueError("powers must be positive")
    return 10.0 * np.log10(3.0 * 4.0**bits * signal_power / total_power)


@dataclass
class QuantizerSpec:
    """Per-reader-antenna ADC bit depths; reference antennas stay high-res."""

    bits: np.ndarray          # (N_R,) int
    ref_rows: np.ndarray      # indices exempt from the bit override

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=int)
        self.ref_rows = np.asarray(self.ref_rows, dtype=int)
        if np.any(self.bits < 1):
            raise ValueError("every antenna needs adc_bits >= 1")


def quantizer_for(channels: ChannelSet, scene, bits_override: int | None = None) -> QuantizerSpec:
    """Per-antenna bit depths from the scene's AP specs; `bits_override`
    replaces the depth of every non-reference reader antenna."""
    bits = np.array([scene.ap(i).adc_bits for i in channels.reader_ant_ap], dtype=int)
    if bits_override is not None:
        mask = np.ones(channels.n_r, dtype=bool)
        mask[channels.ref_rows] = False
        bits[mask] = int(bits_override)
    return QuantizerSpec(bits=bits, ref_rows=channels.ref_rows.copy())


@dataclass
class NoiseCovariance:
    """Diagonal covariance of additive-plus-quantization noise per antenna."""

    diag: np.ndarray          # (N_R,) entries sigma_r^2 + 1

    def __post_init__(self) -> None:
        self.diag = np.asarray(self.diag, dtype=float)
        if np.any(self.diag < 1.0 - 1e-12):
            raise ValueError("covariance entries must be >= 1")

    @property
    def inv_diag(self) -> np.ndarray:
        return 1.0 / self.diag

    @property
    def inv_sqrt_diag(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.diag)


def antenna_input_powers(x, H_DL: np.ndarray, H_BL: np.ndarray, delta: float = 1.0):
    """Deterministic per-antenna powers (|h_dl^T x|^2, delta |h_bl^T x|^2)."""
    x = np.asarray(x)
    dli = np.abs(H_DL @ x) ** 2
    sig = delta * np.abs(H_BL @ x) ** 2
    return dli, sig


def noise_covariance(
    x, H_DL: np.ndarray, H_BL: np.ndarray, quantizer: QuantizerSpec, delta: float = 1.0
) -> NoiseCovariance:
    """D = diag(sigma_r^2 + 1) for a fixed beamformer and bit allocation."""
    dli, sig = antenna_input_powers(x, H_DL, H_BL, delta)
    sigma2 = noise_variance(sig, dli, quantizer.bits)
    return NoiseCovariance(diag=sigma2 + 1.0)
