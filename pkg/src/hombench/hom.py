"""Analytic Hong-Ou-Mandel coincidence models and visibility extraction.

The cross- and co-polarized coincidence curves are built from the emitter's
g2 and the interferometer coefficients:

  g_perp(tau) = 4 (T1b^2 + R1b^2) R2b T2b g2(tau)
              + 4 R1b T1b [T2b^2 g2(tau - dp) + R2b^2 g2(tau + dp)]

CW co-polarized curves multiply the different-arm term by
``1 - F exp(-2|tau|/tau_c')``; pulsed co-polarized curves subtract
``4 R1b T1b [T2b^2 g2(-dp) + R2b^2 g2(+dp)] F exp(-2|tau|/tau_c')`` instead,
where dp is the interferometer path delay (equal to the pulse period in the
pulsed measurements).
"""

from __future__ import annotations

import warnings

import numpy as np

from .core import (CorrelationCurve, DetectorModel, EmitterModel,
                   ExcitationConfig, Histogram, InterferometerModel)
from .dynamics import (DEFAULT_N_PEAKS, _side_peak_value, cw_g2,
                       profile_autocorrelation, pulsed_g2)

__all__ = [
    "cw_hom_pair",
    "pulsed_hom_pair",
    "visibility",
    "convolve_irf",
    "integrated_visibility",
    "hwp_visibility",
]


def _bs_terms(mzi: InterferometerModel):
    same_arm = 4.0 * (mzi.t_bs1 ** 2 + mzi.r_bs1 ** 2) * mzi.r_bs2 * mzi.t_bs2
    diff_arm = 4.0 * mzi.r_bs1 * mzi.t_bs1
    return same_arm, diff_arm


def cw_hom_pair(emitter: EmitterModel, mzi: InterferometerModel, tau,
                f_overlap: float | None = None):
    """CW cross- and co-polarized coincidence models at delay tau (ns)."""
    tau = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(tau)):
        raise ValueError("invalid delay")
    f = emitter.f_overlap if f_overlap is None else f_overlap
    same_arm, diff_arm = _bs_terms(mzi)
    dp = mzi.delay_p
    central = same_arm * cw_g2(emitter, tau)
    shifted = diff_arm * (mzi.t_bs2 ** 2 * cw_g2(emitter, tau - dp)
                          + mzi.r_bs2 ** 2 * cw_g2(emitter, tau + dp))
    envelope = f * np.exp(-2.0 * np.abs(tau) / emitter.tau_c_prime)
    g_perp = central + shifted
    g_par = central + shifted * (1.0 - envelope)
    return g_perp, g_par


def pulsed_hom_pair(emitter: EmitterModel, mzi: InterferometerModel,
                    excitation: ExcitationConfig, tau,
                    n_peaks: int = DEFAULT_N_PEAKS, f_overlap: float | None = None):
    """Pulsed cross- and co-polarized coincidence models at delay tau (ns).

    The co-polarized curve subtracts a bare exponential dip whose amplitude
    is pinned to the g2 values at the +-path-delay side peaks, so the curve
    cancels exactly against the shifted term at tau = 0.
    """
    tau = np.asarray(tau, dtype=float)
    f = emitter.f_overlap if f_overlap is None else f_overlap
    same_arm, diff_arm = _bs_terms(mzi)
    dp = mzi.delay_p

    def g2(x):
        return pulsed_g2(emitter, excitation, x, n_peaks=n_peaks)

    central = same_arm * g2(tau)
    shifted = diff_arm * (mzi.t_bs2 ** 2 * g2(tau - dp) + mzi.r_bs2 ** 2 * g2(tau + dp))
    g_perp = central + shifted
    dip_amplitude = diff_arm * (mzi.t_bs2 ** 2 * g2(np.float64(-dp))
                                + mzi.r_bs2 ** 2 * g2(np.float64(dp)))
    g_par = g_perp - dip_amplitude * f * np.exp(-2.0 * np.abs(tau) / emitter.tau_c_prime)
    return g_perp, g_par


def visibility(g_perp, g_parallel):
    """Two-photon interference visibility (g_perp - g_par) / g_perp.

    Points with g_perp <= 0 are undefined and marked NaN rather than raising;
    downstream consumers drop them.
    """
    gp = np.asarray(g_perp, dtype=float)
    gl = np.asarray(g_parallel, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(gp > 0, (gp - gl) / np.where(gp > 0, gp, 1.0), np.nan)
    return float(v) if v.ndim == 0 else v


def _gaussian_kernel(bin_width: float, fwhm_ns: float) -> np.ndarray:
    sigma = fwhm_ns / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    half = max(1, int(np.ceil(6.0 * sigma / bin_width)))
    x = np.arange(-half, half + 1) * bin_width
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def convolve_irf(curve: CorrelationCurve, detector: DetectorModel) -> CorrelationCurve:
    """Convolve a uniformly binned curve with the Gaussian detector response.

    The kernel is normalized so the integral is preserved; edges are padded
    with their end values so flat tails stay flat.  A zero-jitter detector
    returns the curve unchanged.
    """
    fwhm_ns = detector.jitter_fwhm_ns
    if fwhm_ns < 0:
        raise ValueError("jitter_fwhm >= 0")
    if fwhm_ns == 0:
        return curve
    if curve.bin_width > fwhm_ns / 2.0:
        warnings.warn("under-resolved kernel", RuntimeWarning, stacklevel=2)
    kernel = _gaussian_kernel(curve.bin_width, fwhm_ns)
    half = len(kernel) // 2
    padded = np.pad(curve.values, half, mode="edge")
    smoothed = np.convolve(padded, kernel, mode="same")[half:-half]
    return CorrelationCurve(curve.delays, smoothed, curve.bin_width, curve.kind)


def _central_peak_models(emitter: EmitterModel, mzi_perp: InterferometerModel,
                         mzi_par: InterferometerModel, excitation: ExcitationConfig,
                         tau, n_peaks: int = DEFAULT_N_PEAKS):
    """Zero-delay peak structure only (side-peak tails removed).

    With the path delay equal to the pulse period, the zero-delay HOM peak is
    made of the two shifted single-peak contributions; everything else in the
    window is side-peak leakage.
    """
    period = excitation.pulse_period
    tau = np.asarray(tau, dtype=float)
    # single-peak shape in the unit-side-peak normalization of pulsed_g2
    scale = _side_peak_value(emitter, period, n_peaks)
    q = profile_autocorrelation(emitter, tau) / (period * scale)

    _, diff_perp = _bs_terms(mzi_perp)
    _, diff_par = _bs_terms(mzi_par)
    perp0 = diff_perp * (mzi_perp.t_bs2 ** 2 + mzi_perp.r_bs2 ** 2) * q
    g2_side_m = pulsed_g2(emitter, excitation, np.float64(-period), n_peaks=n_peaks)
    g2_side_p = pulsed_g2(emitter, excitation, np.float64(period), n_peaks=n_peaks)
    dip = diff_par * (mzi_par.t_bs2 ** 2 * g2_side_m + mzi_par.r_bs2 ** 2 * g2_side_p)
    par0 = diff_par * (mzi_par.t_bs2 ** 2 + mzi_par.r_bs2 ** 2) * q \
        - dip * emitter.f_overlap * np.exp(-2.0 * np.abs(tau) / emitter.tau_c_prime)
    return perp0, par0


def integrated_visibility(g_perp: Histogram, g_parallel: Histogram,
                          excitation: ExcitationConfig, corrections: dict,
                          emitter: EmitterModel,
                          mzi_perp: InterferometerModel,
                          mzi_par: InterferometerModel | None = None,
                          n_peaks: int = DEFAULT_N_PEAKS) -> float:
    """Non-post-selected visibility from counts integrated over +-T/2.

    corrections:
      side_peak_removal - subtract the model tails of the +-T correlation
        peaks (scaled to each histogram) before integrating.
      rebalance_to_5050 - discard the measured curves and integrate model
        curves recomputed from the fitted parameters with nominal 50:50
        coefficients.
    """
    if excitation.mode != "pulsed" or not excitation.pulse_period:
        raise ValueError("integrated visibility requires pulsed excitation")
    if mzi_par is None:
        mzi_par = mzi_perp
    period = excitation.pulse_period
    half = period / 2.0
    for hist in (g_perp, g_parallel):
        if hist.delays[0] > -half or hist.delays[-1] < half:
            raise ValueError("integration window exceeds histogram support")
    if not np.allclose(g_perp.delays, g_parallel.delays):
        raise ValueError("histograms must share binning")

    side_removal = bool(corrections.get("side_peak_removal", False))
    rebalance = bool(corrections.get("rebalance_to_5050", False))

    sel = (g_perp.delays >= -half) & (g_perp.delays <= half)
    tau_w = g_perp.delays[sel]

    if rebalance:
        nominal_perp = InterferometerModel(delay_p=mzi_perp.delay_p)
        nominal_par = InterferometerModel(delay_p=mzi_par.delay_p)
        if side_removal:
            perp_w, par_w = _central_peak_models(
                emitter, nominal_perp, nominal_par, excitation, tau_w, n_peaks)
        else:
            perp_w, _ = pulsed_hom_pair(emitter, nominal_perp, excitation, tau_w, n_peaks)
            _, par_w = pulsed_hom_pair(emitter, nominal_par, excitation, tau_w, n_peaks)
    else:
        perp_w = g_perp.values[sel].astype(float)
        par_w = g_parallel.values[sel].astype(float)
        if side_removal:
            model_perp, _ = pulsed_hom_pair(emitter, mzi_perp, excitation, tau_w, n_peaks)
            _, model_par = pulsed_hom_pair(emitter, mzi_par, excitation, tau_w, n_peaks)
            central_perp, central_par = _central_peak_models(
                emitter, mzi_perp, mzi_par, excitation, tau_w, n_peaks)
            scale_perp = perp_w.sum() / model_perp.sum()
            scale_par = par_w.sum() / model_par.sum()
            perp_w = perp_w - scale_perp * (model_perp - central_perp)
            par_w = par_w - scale_par * (model_par - central_par)

    num = float(np.sum(perp_w) - np.sum(par_w))
    den = float(np.sum(perp_w))
    if den <= 0:
        raise ValueError("cross-polarized integral is not positive")
    return num / den


def hwp_visibility(emitter: EmitterModel, mzi: InterferometerModel,
                   detector: DetectorModel, phi: float,
                   span: float = 60.0, bin_width: float = 0.005) -> float:
    """CW zero-delay visibility versus half-wave-plate angle phi (degrees).

    The plate rotates the polarization by 2*phi, so the interference term is
    scaled by the squared overlap F(phi) = F cos^2(2*phi); the visibility is
    evaluated after detector-response convolution against the
    non-interfering reference, giving a 90-degree period.
    """
    f_eff = emitter.f_overlap * np.cos(np.deg2rad(2.0 * phi)) ** 2
    half_n = int(round(span / bin_width))
    delays = np.arange(-half_n, half_n + 1) * bin_width
    g_perp, _ = cw_hom_pair(emitter, mzi, delays)
    _, g_phi = cw_hom_pair(emitter, mzi, delays, f_overlap=f_eff)
    curve_ref = CorrelationCurve(delays, g_perp, bin_width, "g2_perp")
    curve_phi = CorrelationCurve(delays, g_phi, bin_width, "g2_parallel")
    ref = convolve_irf(curve_ref, detector)
    phi_c = convolve_irf(curve_phi, detector)
    i0 = int(np.argmin(np.abs(delays)))
    return float(visibility(ref.values[i0], phi_c.values[i0]))
