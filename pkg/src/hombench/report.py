"""Reproduction bundles for the headline figures.

Each bundle writes delimited curves, a rendered PNG, and a plain-text
summary (including target values and residual mismatch where published
numbers are being reconstructed) into the output directory.

The pulse-preparation times used in the pulsed reconstructions are not
published for the measured datasets; the values below are calibrated so the
corrected integrated visibility reproduces the reported numbers, and the
summaries state the calibration explicitly.  They are deliberately distinct
from the synthetic defaults used by the fitting round-trip tests.
"""

from __future__ import annotations

import os

import numpy as np

from .coherence import CoherenceModel, EtalonConfig, g1_fringe, spectrum_model
from .core import (CorrelationCurve, DetectorModel, EmitterModel,
                   ExcitationConfig, InterferometerModel)
from .dynamics import cw_g2, pulsed_g2
from .hom import (convolve_irf, cw_hom_pair, integrated_visibility,
                  pulsed_hom_pair, visibility)

__all__ = [
    "CW_REFERENCE",
    "PULSED_QUASI_RESONANT",
    "PULSED_ABOVE_BAND",
    "FRINGE_REFERENCE",
    "REPORT_NAMES",
    "run_report",
]

# CW reference dataset (above-band, quarter saturation, 22.9 ns delay)
CW_REFERENCE = {
    "emitter": EmitterModel(t1=1.75, r_cw=0.1, tau_c_prime=0.55, f_overlap=1.0),
    "mzi": InterferometerModel(delay_p=22.9, t_bs1=0.25, r_bs1=0.75,
                               t_bs2=0.48, r_bs2=0.52),
    "detector": DetectorModel(jitter_fwhm=100.0),
    "visibility_target": 0.85,
}

# Pulsed datasets at 80 MHz.  tau_e calibrated, see module docstring.
PULSED_QUASI_RESONANT = {
    "emitter": EmitterModel(t1=1.75, tau_e=1.55, tau_c_prime=0.95, f_overlap=1.0),
    "mzi_perp": InterferometerModel(delay_p=12.5, t_bs1=0.27, r_bs1=0.73,
                                    t_bs2=0.35, r_bs2=0.65),
    "mzi_par": InterferometerModel(delay_p=12.5, t_bs1=0.31, r_bs1=0.69,
                                   t_bs2=0.50, r_bs2=0.50),
    "excitation": ExcitationConfig(mode="pulsed", pulse_period=12.5),
    "raw_target": 0.171,
    "corrected_target": 0.192,
}

PULSED_ABOVE_BAND = {
    "emitter": EmitterModel(t1=1.75, tau_e=8.0, tau_c_prime=0.60, f_overlap=1.0),
    "mzi_perp": InterferometerModel(delay_p=12.5, t_bs1=0.27, r_bs1=0.73,
                                    t_bs2=0.35, r_bs2=0.65),
    "mzi_par": InterferometerModel(delay_p=12.5, t_bs1=0.31, r_bs1=0.69,
                                   t_bs2=0.50, r_bs2=0.50),
    "excitation": ExcitationConfig(mode="pulsed", pulse_period=12.5),
    "corrected_target": 0.092,
}

# Fringe-visibility example parameters: total Voigt width about four times
# the transform limit of a 1.75 ns lifetime, plus the 3.1 GHz doublet
# beating seen under quasi-resonant pumping.
FRINGE_REFERENCE = {
    "above_band": CoherenceModel(t2=1.592, t_g=2.657),
    "quasi_resonant": CoherenceModel(t2=1.592, t_g=2.657, omega_s=np.pi * 3.1),
    "etalon": EtalonConfig(bandwidth=0.25, fsr=40.75),
}

REPORT_NAMES = ("fig3", "fig5", "fig6", "fig7")


def _write_csv(path, header, columns):
    data = np.column_stack(columns)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(f"{x:.9g}" for x in row) + "\n")


def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def report_fig3(outdir: str) -> dict:
    """CW correlations, model and detector-convolved, plus the visibility."""
    em = CW_REFERENCE["emitter"]
    mzi = CW_REFERENCE["mzi"]
    det = CW_REFERENCE["detector"]
    bin_width = 0.01
    half = int(round(60.0 / bin_width))
    tau = np.arange(-half, half + 1) * bin_width

    g2 = cw_g2(em, tau)
    perp, par = cw_hom_pair(em, mzi, tau)
    conv = {}
    for name, values in (("g2", g2), ("perp", perp), ("par", par)):
        curve = CorrelationCurve(tau, values, bin_width, "g2")
        conv[name] = convolve_irf(curve, det).values
    vis_raw = visibility(perp, par)
    vis_conv = visibility(conv["perp"], conv["par"])
    i0 = int(np.argmin(np.abs(tau)))

    _write_csv(os.path.join(outdir, "fig3_curves.csv"),
               ["delay_ns", "g2", "g2_irf", "g_perp", "g_perp_irf",
                "g_parallel", "g_parallel_irf", "visibility", "visibility_irf"],
               [tau, g2, conv["g2"], perp, conv["perp"], par, conv["par"],
                vis_raw, vis_conv])

    plt = _figure()
    fig, axes = plt.subplots(3, 1, figsize=(7, 9), sharex=True)
    axes[0].plot(tau, g2, "b-", label="model")
    axes[0].plot(tau, conv["g2"], "r-", label="with detector response")
    axes[0].set_ylabel("$g^{(2)}(\\tau)$")
    axes[1].plot(tau, perp, "b-", tau, conv["perp"], "r-")
    axes[1].plot(tau, par, "b--", tau, conv["par"], "r--")
    axes[1].set_ylabel("$g_\\perp, g_\\parallel$ (dashed)")
    axes[2].plot(tau, vis_raw, "b-", tau, vis_conv, "r-")
    axes[2].set_ylabel("V($\\tau$)")
    axes[2].set_xlabel("delay (ns)")
    axes[0].legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, "fig3.png"), dpi=150)
    plt.close(fig)

    v0 = float(vis_conv[i0])
    summary = {
        "visibility_zero_delay_model": float(vis_raw[i0]),
        "visibility_zero_delay_irf": v0,
        "visibility_target": CW_REFERENCE["visibility_target"],
        "mismatch": v0 - CW_REFERENCE["visibility_target"],
    }
    _write_summary(os.path.join(outdir, "fig3_summary.txt"), "fig3", summary)
    return summary


def report_fig5(outdir: str) -> dict:
    """Pulsed quasi-resonant correlation triplet with the fitted ratios."""
    cfg = PULSED_QUASI_RESONANT
    em, exc = cfg["emitter"], cfg["excitation"]
    bin_width = 0.05
    half = int(round(32.0 / bin_width))
    tau = np.arange(-half, half + 1) * bin_width
    g2 = pulsed_g2(em, exc, tau)
    perp, _ = pulsed_hom_pair(em, cfg["mzi_perp"], exc, tau)
    _, par = pulsed_hom_pair(em, cfg["mzi_par"], exc, tau)

    _write_csv(os.path.join(outdir, "fig5_curves.csv"),
               ["delay_ns", "g2", "g_perp", "g_parallel"],
               [tau, g2, perp, par])

    plt = _figure()
    fig, axes = plt.subplots(3, 1, figsize=(7, 9), sharex=True)
    for ax, (label, values) in zip(
            axes, (("$g^{(2)}$", g2), ("$g_\\perp^{(2)}$", perp),
                   ("$g_\\parallel^{(2)}$", par))):
        ax.plot(tau, values, "r-")
        ax.set_ylabel(label)
    axes[2].set_xlabel("delay (ns)")
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, "fig5.png"), dpi=150)
    plt.close(fig)

    i_plus = int(np.argmin(np.abs(tau - 12.5)))
    i_minus = int(np.argmin(np.abs(tau + 12.5)))
    summary = {
        "perp_peak_ratio_plus_minus": float(perp[i_plus] / perp[i_minus]),
        "parallel_zero_delay": float(par[int(np.argmin(np.abs(tau)))]),
        "tau_c_prime": em.tau_c_prime,
    }
    _write_summary(os.path.join(outdir, "fig5_summary.txt"), "fig5", summary)
    return summary


def _fig6_histograms(cfg, bin_width=0.05, span=31.25):
    em, exc = cfg["emitter"], cfg["excitation"]
    half = int(round(span / bin_width))
    tau = np.arange(-half, half + 1) * bin_width
    perp, _ = pulsed_hom_pair(em, cfg["mzi_perp"], exc, tau)
    _, par = pulsed_hom_pair(em, cfg["mzi_par"], exc, tau)
    hp = CorrelationCurve(tau, perp, bin_width, "g2_perp")
    hl = CorrelationCurve(tau, par, bin_width, "g2_parallel")
    return hp, hl


def report_fig6(outdir: str) -> dict:
    """Integrated-visibility reconstruction with and without corrections."""
    summary = {}
    curves = {}
    for label, cfg in (("quasi_resonant", PULSED_QUASI_RESONANT),
                       ("above_band", PULSED_ABOVE_BAND)):
        hp, hl = _fig6_histograms(cfg)
        em, exc = cfg["emitter"], cfg["excitation"]
        raw = integrated_visibility(hp, hl, exc, {}, em,
                                    cfg["mzi_perp"], cfg["mzi_par"])
        corrected = integrated_visibility(
            hp, hl, exc,
            {"side_peak_removal": True, "rebalance_to_5050": True},
            em, cfg["mzi_perp"], cfg["mzi_par"])
        summary[f"{label}_raw"] = raw
        summary[f"{label}_corrected"] = corrected
        summary[f"{label}_tau_e_synthetic"] = em.tau_e
        summary[f"{label}_tau_c_prime"] = em.tau_c_prime
        if "raw_target" in cfg:
            summary[f"{label}_raw_target"] = cfg["raw_target"]
            summary[f"{label}_raw_mismatch"] = raw - cfg["raw_target"]
        summary[f"{label}_corrected_target"] = cfg["corrected_target"]
        summary[f"{label}_corrected_mismatch"] = corrected - cfg["corrected_target"]
        curves[label] = (hp, hl)
        _write_csv(os.path.join(outdir, f"fig6_{label}.csv"),
                   ["delay_ns", "g_perp", "g_parallel"],
                   [hp.delays, hp.values, hl.values])

    plt = _figure()
    fig, axes = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    for ax, label in zip(axes, ("quasi_resonant", "above_band")):
        hp, hl = curves[label]
        sel = np.abs(hp.delays) <= 6.25
        ax.plot(hp.delays[sel], hp.values[sel], "k-", label="$g_\\perp$")
        ax.plot(hl.delays[sel], hl.values[sel], "r-", label="$g_\\parallel$")
        ax.set_title(label.replace("_", " "))
        ax.set_ylabel("coincidences (norm.)")
    axes[1].set_xlabel("delay (ns)")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, "fig6.png"), dpi=150)
    plt.close(fig)

    notes = [
        "tau_e is not published for these datasets; the synthetic values",
        "above are calibrated so the corrected visibility reproduces the",
        "reported numbers, and differ from the fitting round-trip defaults",
        "(0.1 ns quasi-resonant-like, 0.3 ns above-band-like).",
        "The above-band reconstruction approaches the reported 9.2% only",
        "asymptotically in tau_e; the residual mismatch is listed above.",
    ]
    _write_summary(os.path.join(outdir, "fig6_summary.txt"), "fig6", summary, notes)
    return summary


def report_fig7(outdir: str) -> dict:
    """Fringe-visibility envelopes with and without doublet beating."""
    delays = np.linspace(0.0, 1.2, 241)
    plain = g1_fringe(FRINGE_REFERENCE["above_band"], delays)
    beating = g1_fringe(FRINGE_REFERENCE["quasi_resonant"], delays)
    _write_csv(os.path.join(outdir, "fig7_curves.csv"),
               ["delay_ns", "visibility_above_band", "visibility_quasi_resonant"],
               [delays, plain, beating])

    grid = np.linspace(-8.0, 8.0, 801)
    spec = spectrum_model(FRINGE_REFERENCE["quasi_resonant"], grid)
    _write_csv(os.path.join(outdir, "fig7_spectrum.csv"),
               ["frequency_ghz", "intensity"], [grid, spec.values])

    plt = _figure()
    fig, axes = plt.subplots(2, 1, figsize=(7, 7))
    axes[0].plot(delays, plain, "b-", label="single line")
    axes[0].plot(delays, beating, "r-", label="doublet beating")
    axes[0].set_xlabel("interferometer delay (ns)")
    axes[0].set_ylabel("fringe visibility")
    axes[0].legend()
    axes[1].plot(grid, spec.values, "r-")
    axes[1].set_xlabel("detuning (GHz)")
    axes[1].set_ylabel("spectrum (norm.)")
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, "fig7.png"), dpi=150)
    plt.close(fig)

    first_null = float(np.pi / (2 * FRINGE_REFERENCE["quasi_resonant"].omega_s))
    summary = {"beating_first_null_ns": first_null,
               "doublet_splitting_ghz": FRINGE_REFERENCE["quasi_resonant"].omega_s / np.pi}
    _write_summary(os.path.join(outdir, "fig7_summary.txt"), "fig7", summary)
    return summary


def _write_summary(path, name, summary, notes=()):
    with open(path, "w") as fh:
        fh.write(f"report: {name}\n")
        for key, value in summary.items():
            fh.write(f"{key} = {value:.6g}\n" if isinstance(value, float)
                     else f"{key} = {value}\n")
        for line in notes:
            fh.write(f"# {line}\n")


_DISPATCH = {"fig3": report_fig3, "fig5": report_fig5,
             "fig6": report_fig6, "fig7": report_fig7}


def run_report(name: str, outdir: str) -> dict:
    if name not in _DISPATCH:
        raise ValueError(f"unknown report {name!r}; choose from {REPORT_NAMES}")
    os.makedirs(outdir, exist_ok=True)
    return _DISPATCH[name](outdir)
