"""First-order coherence, Voigt lineshape and coherence-time conversions.

Fringe visibility of a transition with both homogeneous (T2) and
inhomogeneous (TG) broadening follows a Voigt envelope
``exp[-(pi/2)(dt/TG)^2 - |dt|/T2]``; a spectral doublet multiplies it by
``|cos(omega_s * dt)|``.  Frequency-domain widths are carried in GHz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import voigt_profile

from .core import CoherenceModel, CorrelationCurve

__all__ = [
    "g1_fringe",
    "lorentzian_fwhm",
    "gaussian_fwhm",
    "voigt_fwhm",
    "coherence_time",
    "transform_limit_linewidth",
    "EtalonConfig",
    "etalon_transmission",
    "etalon_convolve",
    "spectrum_model",
]


def g1_fringe(coh: CoherenceModel, delay_p):
    """Fringe visibility at interferometer delay delay_p (ns); 1 at zero delay."""
    dt = np.asarray(delay_p, dtype=float)
    envelope = np.exp(-(np.pi / 2.0) * (dt / coh.t_g) ** 2 - np.abs(dt) / coh.t2)
    if coh.omega_s > 0:
        envelope = envelope * np.abs(np.cos(coh.omega_s * dt))
    return float(envelope) if envelope.ndim == 0 else envelope


def lorentzian_fwhm(t2: float) -> float:
    """Lorentzian linewidth contribution 1/(pi*T2), GHz for T2 in ns."""
    return 1.0 / (math.pi * t2)


def gaussian_fwhm(t_g: float) -> float:
    """Gaussian linewidth contribution sqrt(2 ln 2)/(sqrt(pi)*TG), GHz."""
    return math.sqrt(2.0 * math.log(2.0)) / (math.sqrt(math.pi) * t_g)


def voigt_fwhm(delta_l: float, delta_g: float) -> float:
    """Voigt FWHM from its Lorentzian and Gaussian component widths.

    Uses the standard accurate approximation
    ``0.535 dL + sqrt(0.217 dL^2 + dG^2)``.
    """
    if delta_l < 0 or delta_g < 0:
        raise ValueError("widths must be non-negative")
    if delta_l == 0 and delta_g == 0:
        raise ValueError("degenerate lineshape")
    return 0.535 * delta_l + math.sqrt(0.217 * delta_l ** 2 + delta_g ** 2)


def coherence_time(coh: CoherenceModel) -> float:
    """Coherence time of the Voigt envelope (its 1/e decay delay).

    Positive root of (pi/2)(tau_c/TG)^2 + tau_c/T2 = 1:
    ``tau_c = -TG^2/(pi T2) + sqrt((TG^2/(pi T2))^2 + 2 TG^2/pi)``.
    Reduces to T2 for TG -> inf and to TG*sqrt(2/pi) for T2 -> inf.
    """
    if coh.t2 <= 0 or coh.t_g <= 0:
        raise ValueError("t2 and t_g must be positive")
    x = coh.t_g ** 2 / (math.pi * coh.t2)
    return -x + math.sqrt(x * x + 2.0 * coh.t_g ** 2 / math.pi)


def transform_limit_linewidth(t1: float) -> float:
    """Transform-limited linewidth 1/(2 pi T1), GHz for T1 in ns."""
    if t1 <= 0:
        raise ValueError("t1 must be positive")
    return 1.0 / (2.0 * math.pi * t1)


@dataclass(frozen=True)
class EtalonConfig:
    bandwidth: float   # FWHM, GHz
    fsr: float         # free spectral range, GHz

    def __post_init__(self):
        if not (0 < self.bandwidth < self.fsr):
            raise ValueError("0 < bandwidth < fsr required")


def etalon_transmission(detuning, etalon: EtalonConfig):
    """Fabry-Perot transmission, unity at resonance and 0.5 at +-bandwidth/2.

    Airy function with the coefficient pinned so the configured bandwidth is
    the exact FWHM; periodic with the free spectral range.
    """
    detuning = np.asarray(detuning, dtype=float)
    coeff = 1.0 / math.sin(math.pi * etalon.bandwidth / (2.0 * etalon.fsr)) ** 2
    out = 1.0 / (1.0 + coeff * np.sin(np.pi * detuning / etalon.fsr) ** 2)
    return float(out) if out.ndim == 0 else out


def etalon_convolve(spectrum: CorrelationCurve, etalon: EtalonConfig) -> CorrelationCurve:
    """Convolve a spectrum (GHz grid) with a single etalon order.

    Valid only when the spectrum span is below one free spectral range;
    otherwise neighbouring orders would fold in.  The kernel is the Airy
    transmission truncated to a single order and to a quarter of the grid
    span, renormalized to unit mass, so the integral of a line contained
    away from the grid edges is preserved.
    """
    span = spectrum.delays[-1] - spectrum.delays[0]
    if span >= etalon.fsr:
        raise ValueError("order overlap")
    half_width = min(0.5 * etalon.fsr, 0.25 * span)
    half = max(int(np.floor(half_width / spectrum.bin_width)), 1)
    offsets = np.arange(-half, half + 1) * spectrum.bin_width
    kernel = etalon_transmission(offsets, etalon)
    kernel = kernel / kernel.sum()
    padded = np.pad(spectrum.values, half, mode="constant")
    out = np.convolve(padded, kernel, mode="same")[half:-half]
    return CorrelationCurve(spectrum.delays, out, spectrum.bin_width, spectrum.kind)


def spectrum_model(coh: CoherenceModel, grid, equal_weights: bool = True,
                   weight_ratio: float = 1.0) -> CorrelationCurve:
    """Voigt emission spectrum on a uniform GHz grid, unit peak height.

    A doublet with line separation omega_s/pi (GHz) is produced when
    omega_s > 0; both components share the same coherence parameters.  The
    ``weight_ratio`` knob (second/first component) relaxes the equal-weight
    assumption when needed.
    """
    grid = np.asarray(grid, dtype=float)
    steps = np.diff(grid)
    if grid.size < 2 or not np.allclose(steps, steps[0], rtol=0, atol=1e-9):
        raise ValueError("grid must be uniform")
    sigma = gaussian_fwhm(coh.t_g) / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    gamma = lorentzian_fwhm(coh.t2) / 2.0
    if coh.omega_s > 0:
        split = coh.omega_s / math.pi
        ratio = 1.0 if equal_weights else weight_ratio
        values = voigt_profile(grid + split / 2.0, sigma, gamma) \
            + ratio * voigt_profile(grid - split / 2.0, sigma, gamma)
    else:
        values = voigt_profile(grid, sigma, gamma)
    peak = values.max()
    if peak > 0:
        values = values / peak
    return CorrelationCurve(grid, values, float(steps[0]), "spectrum")
