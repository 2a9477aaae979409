"""Antenna-array geometry, single-path channel, measurement synthesis, quantization.

The measurement model is y = alpha sqrt(P) w^H a(phi) + n with n circularly
symmetric complex Gaussian of variance noise_var (noise_var/2 per real
component).  The 1-bit channel thresholds |y|^2; its minimax threshold comes
from equalizing the two Rician error integrals (amplitude-domain Rician with
nu = sqrt(P * power_gain) * |alpha| and s = sigma/sqrt(2), threshold solved on
amplitude and stored on power).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import RicianParams, rice_cdf, solve_root_monotone

__all__ = [
    "ArrayGeometry",
    "AngleGrid",
    "ChannelState",
    "Observation",
    "ThresholdResult",
    "steering",
    "steering_matrix",
    "beam_gain",
    "measure",
    "onebit_quantize",
    "optimal_threshold",
    "threshold_residual",
]

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: element count and spacing in wavelengths."""

    num_antennas: int
    spacing: float = 0.5

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be >= 1")
        if self.spacing <= 0:
            raise ValueError("spacing must be > 0")


@dataclass(frozen=True)
class AngleGrid:
    """Discretized sector [theta_lo, theta_hi] (radians) with 2^S points.

    Point i (0-based) sits at theta_lo + i * delta * (theta_hi - theta_lo),
    matching a left-aligned partition of the sector into ``resolution`` cells.
    """

    theta_lo: float
    theta_hi: float
    resolution: int

    def __post_init__(self):
        if not self.theta_lo < self.theta_hi:
            raise ValueError("require theta_lo < theta_hi")
        r = self.resolution
        if r < 2 or (r & (r - 1)) != 0:
            raise ValueError(f"resolution {r} is not a power of two >= 2")

    @property
    def delta(self) -> float:
        return 1.0 / self.resolution

    @property
    def width(self) -> float:
        return self.theta_hi - self.theta_lo

    @property
    def levels(self) -> int:
        """S = log2(resolution)."""
        return self.resolution.bit_length() - 1

    def angles(self) -> np.ndarray:
        return self.theta_lo + np.arange(self.resolution) * self.delta * self.width


@dataclass(frozen=True)
class ChannelState:
    """Ground truth driving measurement synthesis.

    alpha: complex fading coefficient; aoa_index: 0-based grid index of the
    true AoA; power: combined transmit power / large-scale factor (linear);
    noise_var: linear noise variance.  Raw SNR is power/noise_var.
    """

    alpha: complex
    aoa_index: int
    power: float
    noise_var: float

    def __post_init__(self):
        if self.power <= 0 or self.noise_var <= 0:
            raise ValueError("power and noise_var must be > 0")
        if self.aoa_index < 0:
            raise ValueError("aoa_index must be >= 0")

    @property
    def raw_snr(self) -> float:
        return self.power / self.noise_var


@dataclass(frozen=True)
class Observation:
    """One probe: raw complex sample and its quantized form (bit or the sample)."""

    raw: complex
    quantized: object


def steering(geometry: ArrayGeometry, phi: float) -> np.ndarray:
    """Array response a(phi): entry n is exp(j 2 pi (d/lambda) n sin phi)."""
    n = np.arange(geometry.num_antennas)
    return np.exp(1j * 2.0 * np.pi * geometry.spacing * n * np.sin(phi))


def steering_matrix(geometry: ArrayGeometry, phis: np.ndarray) -> np.ndarray:
    """Stacked steering vectors, shape (num_antennas, len(phis))."""
    n = np.arange(geometry.num_antennas)[:, None]
    return np.exp(1j * 2.0 * np.pi * geometry.spacing * n * np.sin(np.asarray(phis))[None, :])


def _check_unit_norm(w: np.ndarray):
    nrm = np.linalg.norm(w)
    if abs(nrm - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"beamforming vector must be unit norm (got ||w|| = {nrm})")


def beam_gain(w: np.ndarray, geometry: ArrayGeometry, phi: float) -> float:
    """|w^H a(phi)| for a unit-norm w; bounded by sqrt(N) (Cauchy-Schwarz)."""
    _check_unit_norm(w)
    return float(abs(np.vdot(w, steering(geometry, phi))))


def measure(channel: ChannelState, w: np.ndarray, grid: AngleGrid,
            geometry: ArrayGeometry, rng: np.random.Generator) -> complex:
    """One noisy probe y = alpha sqrt(P) w^H a(theta_i) + CN(0, noise_var)."""
    _check_unit_norm(w)
    phi = grid.angles()[channel.aoa_index]
    mean = channel.alpha * math.sqrt(channel.power) * np.vdot(w, steering(geometry, phi))
    scale = math.sqrt(channel.noise_var / 2.0)
    g = rng.standard_normal(2)
    return complex(mean + scale * (g[0] + 1j * g[1]))


def onebit_quantize(y: complex, threshold: float) -> int:
    """Hard detection z = 1{|y|^2 > threshold}."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    return int((y.real * y.real + y.imag * y.imag) > threshold)


@dataclass(frozen=True)
class ThresholdResult:
    """Minimax 1-bit threshold: power threshold v, common flip probability p,
    and the residual of the defining balance equation at the solution."""

    v: float
    p: float
    residual: float


def threshold_residual(v: float, in_gain: float, out_gain: float, power: float,
                       noise_var: float, alpha_mag: float = 1.0) -> float:
    """Balance-equation residual F_in(sqrt(v)) - (1 - F_out(sqrt(v))).

    ``in_gain``/``out_gain`` are power gains (min in-beam, max out-of-beam).
    """
    s = math.sqrt(noise_var / 2.0)
    nu_in = math.sqrt(power * in_gain) * alpha_mag
    nu_out = math.sqrt(power * out_gain) * alpha_mag
    x = math.sqrt(v)
    f_in = rice_cdf(x, RicianParams(nu_in, s))
    f_out = rice_cdf(x, RicianParams(nu_out, s))
    return f_in + f_out - 1.0


def optimal_threshold(in_gain: float, out_gain: float, power: float,
                      noise_var: float, alpha_mag: float = 1.0) -> ThresholdResult:
    """Threshold minimizing the worst-case flipping probability of the 1-bit channel.

    Solves, on the amplitude axis, cdf(x; nu_in) = 1 - cdf(x; nu_out) with
    nu = sqrt(P * gain) * |alpha| and s = sigma/sqrt(2), then returns the
    power-domain threshold v = x^2 together with the common flip probability.
    """
    if not in_gain > out_gain:
        raise ValueError(
            f"in-beam power gain ({in_gain}) must exceed out-of-beam ({out_gain})")
    if out_gain < 0:
        raise ValueError("out-of-beam power gain must be >= 0")
    s = math.sqrt(noise_var / 2.0)
    nu_in = math.sqrt(power * in_gain) * alpha_mag
    nu_out = math.sqrt(power * out_gain) * alpha_mag
    p_in = RicianParams(nu_in, s)
    # RicianParams requires nu >= 0; out_gain = 0 degenerates to Rayleigh
    p_out = RicianParams(nu_out, s)

    def balance(x):
        return rice_cdf(x, p_in) + rice_cdf(x, p_out) - 1.0

    hi = nu_in + 40.0 * s
    x = solve_root_monotone(balance, 0.0, hi, tol=0.0, max_iter=120)
    return ThresholdResult(v=x * x, p=float(rice_cdf(x, p_in)), residual=float(balance(x)))
