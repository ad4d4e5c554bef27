"""Nonlinear least-squares fits of the correlation, decay, fringe and
spectrum models.

All fits share one pipeline: an optional coarse grid scan over the poorly
known shape parameters, a derivative-free simplex refinement, and a damped
least-squares polish with finite-difference Jacobians (relative step 1e-6).
Histogram residuals carry Poisson weights, sigma^2 = max(counts, 1); each
curve's overall scale is profiled out analytically.  Uncertainties come from
the local quadratic approximation of the objective at the optimum.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.optimize import least_squares, minimize

from .coherence import (CoherenceModel, coherence_time, g1_fringe,
                        gaussian_fwhm, lorentzian_fwhm, spectrum_model,
                        voigt_fwhm, EtalonConfig, etalon_convolve)
from .core import (CorrelationCurve, DetectorModel, EmitterModel,
                   ExcitationConfig, FitResult, Histogram, InterferometerModel)
from .dynamics import DEFAULT_N_PEAKS, pulsed_emission_profile
from .hom import convolve_irf, cw_hom_pair, pulsed_hom_pair
from . import dynamics

__all__ = ["joint_hom_fit", "fit_lifetime", "fit_fringe", "fit_spectrum"]

_BOUNDS = {
    "t1": (1e-3, 1e3),
    "tau_e": (1e-4, 1e3),
    "r_cw": (0.0, 1e2),
    "tau_c_prime": (1e-3, 1e2),
    "f_overlap": (0.0, 1.0),
    "t_bs1_perp": (1e-3, 1.0 - 1e-3),
    "t_bs2_perp": (1e-3, 1.0 - 1e-3),
    "t_bs1_par": (1e-3, 1.0 - 1e-3),
    "t_bs2_par": (1e-3, 1.0 - 1e-3),
    "amplitude": (0.0, np.inf),
    "background": (0.0, np.inf),
    "t2": (1e-4, 1e4),
    "t_g": (1e-4, 1e4),
    "omega_s": (0.0, 1e3),
    "center": (-np.inf, np.inf),
    "delta_l": (0.0, 1e3),
    "delta_g": (0.0, 1e3),
    "splitting": (0.0, 1e3),
}

MAX_ITERATIONS = 500
FTOL = 1e-10


def _poisson_sigma(values: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(values, 1.0))


def _profiled_scale(data: np.ndarray, model: np.ndarray, sigma: np.ndarray) -> float:
    """Closed-form amplitude minimizing the weighted squared residuals."""
    w = 1.0 / sigma ** 2
    denom = float(np.sum(w * model * model))
    if denom <= 0:
        return 0.0
    return float(np.sum(w * data * model) / denom)


def _solve(residual_fn, names, start, grid_axes=None, use_simplex=True):
    """Shared optimizer pipeline; returns (values, cov, ls_result, iterations)."""
    if not names:
        raise ValueError("at least one free parameter is required")
    lower = np.array([_BOUNDS[n][0] for n in names])
    upper = np.array([_BOUNDS[n][1] for n in names])
    theta0 = np.clip(np.asarray(start, dtype=float), lower, upper)

    def objective(theta):
        r = residual_fn(theta)
        return float(np.dot(r, r))

    iterations = 0
    best = theta0.copy()
    best_obj = objective(best)

    if grid_axes:
        for idx, values in grid_axes:
            for v in values:
                trial = best.copy()
                trial[idx] = np.clip(v, lower[idx], upper[idx])
                obj = objective(trial)
                iterations += 1
                if obj < best_obj:
                    best_obj, best = obj, trial

    if use_simplex:
        nm = minimize(objective, best, method="Nelder-Mead",
                      options={"maxiter": MAX_ITERATIONS, "fatol": FTOL * max(best_obj, 1.0),
                               "xatol": 1e-12})
        iterations += nm.nit
        if nm.fun <= best_obj:
            best, best_obj = np.clip(nm.x, lower, upper), nm.fun

    ls = least_squares(residual_fn, best, bounds=(lower, upper),
                       diff_step=1e-6, xtol=1e-14, ftol=FTOL, gtol=1e-14,
                       max_nfev=MAX_ITERATIONS * max(len(names), 2))
    iterations += ls.nfev
    if objective(ls.x) <= best_obj:
        best = ls.x
    return best, ls, iterations


def _uncertainties(ls, names):
    """One-sigma estimates from J^T J; unbounded directions map to inf."""
    jac = ls.jac
    try:
        u, s, vt = np.linalg.svd(jac, full_matrices=False)
    except np.linalg.LinAlgError:
        return {n: float("inf") for n in names}
    sigmas = {}
    threshold = (s.max() if s.size else 0.0) * 1e-10
    for j, name in enumerate(names):
        total = 0.0
        unbounded = False
        for k in range(len(s)):
            load = vt[k, j]
            if s[k] <= threshold:
                if abs(load) > 1e-6:
                    unbounded = True
                continue
            total += (load / s[k]) ** 2
        sigmas[name] = float("inf") if unbounded else math.sqrt(total)
    return sigmas


def _result(names, values, ls, iterations, notes=()):
    params = {n: float(v) for n, v in zip(names, values)}
    sig = _uncertainties(ls, names)
    resid = float(np.sqrt(np.dot(ls.fun, ls.fun)))
    converged = bool(ls.status > 0)
    return FitResult(params=params, uncertainties=sig, residual_norm=resid,
                     converged=converged, iterations=int(iterations),
                     notes=tuple(notes))


# ---------------------------------------------------------------------------
# joint HOM fit

_EMITTER_PARAMS = ("t1", "tau_e", "r_cw", "tau_c_prime", "f_overlap")


def _apply_params(theta, names, emitter, mzi_perp, mzi_par):
    updates = dict(zip(names, theta))
    em_updates = {k: v for k, v in updates.items() if k in _EMITTER_PARAMS}
    if em_updates:
        emitter = replace(emitter, **em_updates)
    for prefix, which in (("perp", 0), ("par", 1)):
        for bs in ("t_bs1", "t_bs2"):
            key = f"{bs}_{prefix}"
            if key in updates:
                t = updates[key]
                kw = {bs: t, bs.replace("t_", "r_"): 1.0 - t}
                if which == 0:
                    mzi_perp = replace(mzi_perp, **kw)
                else:
                    mzi_par = replace(mzi_par, **kw)
    return emitter, mzi_perp, mzi_par


def _expand_free(free, same_bs2):
    """Map user-facing names to internal per-configuration names."""
    names = []
    for f in free:
        if f in ("t_bs1", "t_bs2"):
            names.append(f + "_perp")
            names.append(f + "_par")
        else:
            names.append(f)
    if same_bs2:
        names = [n for n in names if n != "t_bs2_par"]
    return names


def joint_hom_fit(g2: Histogram, g_perp: Histogram, g_parallel: Histogram,
                  excitation: ExcitationConfig,
                  emitter: EmitterModel, mzi_perp: InterferometerModel,
                  mzi_par: InterferometerModel | None = None,
                  detector: DetectorModel | None = None,
                  free=("r_cw", "tau_c_prime", "t_bs1", "t_bs2"),
                  tie_bs2: bool = False,
                  n_peaks: int = DEFAULT_N_PEAKS,
                  bin_average: int = 1) -> FitResult:
    """Simultaneous fit of g2 and both HOM correlations.

    T1 is normally fixed (independently measured); the overlap F defaults to
    fixed at 1 to break its degeneracy with tau_c_prime unless explicitly
    freed.  Separate beamsplitter coefficients are fitted for the cross- and
    co-polarized configurations; ``tie_bs2`` shares BS2 between them.

    ``bin_average`` sub-samples the model inside each bin before comparing.
    Counted histograms integrate over bins, so the zero-delay cusp of the
    co-polarized dip otherwise biases the coalescence time; curves sampled
    at bin centers (e.g. exported model CSVs) should keep the default of 1.
    """
    if mzi_par is None:
        mzi_par = mzi_perp
    detector = detector or DetectorModel()
    for other in (g_perp, g_parallel):
        if other.delays.shape != g2.delays.shape or not np.allclose(other.delays, g2.delays):
            raise ValueError("the three histograms must share binning")

    names = _expand_free(free, tie_bs2)
    start_map = {
        "t1": emitter.t1, "tau_e": emitter.tau_e, "r_cw": emitter.r_cw,
        "tau_c_prime": emitter.tau_c_prime, "f_overlap": emitter.f_overlap,
        "t_bs1_perp": mzi_perp.t_bs1, "t_bs2_perp": mzi_perp.t_bs2,
        "t_bs1_par": mzi_par.t_bs1, "t_bs2_par": mzi_par.t_bs2,
    }
    start = [start_map[n] for n in names]

    data = [g2.values, g_perp.values, g_parallel.values]
    sigmas = [_poisson_sigma(d) for d in data]
    centers = g2.delays
    k = max(1, int(bin_average))
    offsets = ((np.arange(k) + 0.5) / k - 0.5) * g2.bin_width

    def curves(theta):
        em, mp, ml = _apply_params(theta, names, emitter, mzi_perp, mzi_par)
        if tie_bs2:
            ml = replace(ml, t_bs2=mp.t_bs2, r_bs2=mp.r_bs2)
        base = np.zeros_like(centers)
        perp = np.zeros_like(centers)
        par = np.zeros_like(centers)
        for off in offsets:
            tau = centers + off
            if excitation.mode == "cw":
                base += dynamics.cw_g2(em, tau)
                perp += cw_hom_pair(em, mp, tau)[0]
                par += cw_hom_pair(em, ml, tau)[1]
            else:
                base += dynamics.pulsed_g2(em, excitation, tau, n_peaks=n_peaks)
                perp += pulsed_hom_pair(em, mp, excitation, tau, n_peaks=n_peaks)[0]
                par += pulsed_hom_pair(em, ml, excitation, tau, n_peaks=n_peaks)[1]
        models = []
        for values in (base, perp, par):
            curve = CorrelationCurve(centers, values / k, g2.bin_width, "g2")
            models.append(convolve_irf(curve, detector).values)
        return models

    def residuals(theta):
        out = []
        for d, s, m in zip(data, sigmas, curves(theta)):
            scale = _profiled_scale(d, m, s)
            out.append((d - scale * m) / s)
        return np.concatenate(out)

    grid_axes = []
    for shape_name in ("tau_c_prime", "r_cw", "tau_e"):
        if shape_name in names:
            idx = names.index(shape_name)
            center = max(start[idx], _BOUNDS[shape_name][0])
            grid_axes.append((idx, center * np.array([0.25, 0.5, 1.0, 2.0, 4.0])))

    values, ls, iterations = _solve(residuals, names, start, grid_axes)
    notes = []
    fitted = dict(zip(names, values))
    tcp = fitted.get("tau_c_prime", emitter.tau_c_prime)
    t1 = fitted.get("t1", emitter.t1)
    if tcp > 2 * t1:
        notes.append("tau_c_prime exceeds the transform bound 2*t1")
    return _result(names, values, ls, iterations, notes)


# ---------------------------------------------------------------------------
# lifetime fit

def fit_lifetime(decay: Histogram, t1_guess: float | None = None) -> FitResult:
    """Fit the biexponential emission profile plus a flat background.

    Parameters: t1, tau_e, amplitude, background.  tau_e is bounded below;
    degenerate rise times pin at the bound and are flagged.
    """
    t = decay.delays
    y = decay.values.astype(float)
    sigma = _poisson_sigma(y)
    peak_idx = int(np.argmax(y))
    amp0 = max(float(y.max()), 1.0)
    bkg0 = max(float(np.median(y[max(y.size - max(y.size // 10, 1), 0):])), 0.0)
    if t1_guess is None:
        # crude tail slope estimate
        tail = y > max(amp0 * 0.05, bkg0 * 2 + 1)
        if tail.sum() >= 3:
            coef = np.polyfit(t[tail], np.log(np.maximum(y[tail] - bkg0, 1e-12)), 1)
            t1_guess = abs(1.0 / coef[0]) if coef[0] != 0 else 1.0
        else:
            t1_guess = 1.0
    tau_e0 = max(float(t[peak_idx]) / 3.0, 2.0 * _BOUNDS["tau_e"][0])

    names = ["t1", "tau_e", "amplitude", "background"]
    start = [t1_guess, tau_e0, amp0, bkg0]

    def residuals(theta):
        em = EmitterModel(t1=max(theta[0], 1e-6), tau_e=max(theta[1], 0.0))
        model = theta[2] * pulsed_emission_profile(em, t) + theta[3]
        return (y - model) / sigma

    grid_axes = [(1, tau_e0 * np.array([0.2, 0.5, 1.0, 2.0, 5.0]))]
    values, ls, iterations = _solve(residuals, names, start, grid_axes)
    notes = []
    if values[1] < 0.25 * decay.bin_width:
        # a rise time far below the binning is unidentifiable: pin it
        bound = _BOUNDS["tau_e"][0]

        def residuals_pinned(theta):
            return residuals(np.insert(theta, 1, bound))

        sub_names = [n for n in names if n != "tau_e"]
        sub_start = [v for n, v in zip(names, values) if n != "tau_e"]
        sub_values, sub_ls, extra = _solve(residuals_pinned, sub_names,
                                           sub_start, use_simplex=False)
        result = _result(sub_names, sub_values, sub_ls, iterations + extra,
                         ["tau_e pinned at lower bound"])
        params = dict(result.params)
        sigmas = dict(result.uncertainties)
        params["tau_e"] = bound
        sigmas["tau_e"] = float("inf")
        return FitResult(params=params, uncertainties=sigmas,
                         residual_norm=result.residual_norm,
                         converged=result.converged,
                         iterations=result.iterations, notes=result.notes)
    return _result(names, values, ls, iterations, notes)


# ---------------------------------------------------------------------------
# fringe visibility fit

def fit_fringe(delays, visibilities=None, fit_omega_s: bool = False) -> FitResult:
    """Fit the Voigt fringe envelope, optionally with the beating term.

    Accepts an (N, 2) array or two arrays of delay (ns) and visibility.
    Derived quantities (linewidths via the Voigt-width formula and the
    coherence time) are included in the returned parameter map.
    """
    pts = np.asarray(delays, dtype=float)
    if visibilities is None:
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("expected an (N, 2) array of (delay, visibility)")
        x, y = pts[:, 0], pts[:, 1]
    else:
        x, y = pts, np.asarray(visibilities, dtype=float)
    if x.size < 5:
        raise ValueError("at least 5 fringe points are required")

    # moment-style starts: 1/e crossing for T2, twice that for TG
    above = y > math.exp(-1.0)
    t2_0 = float(np.max(np.abs(x[above]))) if above.any() else float(np.max(np.abs(x))) / 2
    t2_0 = max(t2_0, 1e-3)
    names = ["t2", "t_g"]
    start = [t2_0, 2.0 * t2_0]
    if fit_omega_s:
        names.append("omega_s")
        start.append(0.0)

    def residuals(theta):
        coh = CoherenceModel(t2=max(theta[0], 1e-9), t_g=max(theta[1], 1e-9),
                             omega_s=theta[2] if fit_omega_s else 0.0)
        return g1_fringe(coh, x) - y

    grid_axes = [(0, t2_0 * np.array([0.25, 0.5, 1.0, 2.0, 4.0])),
                 (1, t2_0 * np.array([0.5, 1.0, 2.0, 4.0, 8.0]))]
    if fit_omega_s:
        spacing = np.min(np.diff(np.sort(np.unique(np.abs(x)))))
        omega_max = math.pi / max(spacing, 1e-6)
        grid_axes.append((2, np.linspace(0.0, omega_max, 41)))

    values, ls, iterations = _solve(residuals, names, start, grid_axes)
    result = _result(names, values, ls, iterations)

    t2, t_g = result.params["t2"], result.params["t_g"]
    cov_names = names

    def derived(vec):
        d = dict(zip(cov_names, vec))
        dl = lorentzian_fwhm(d["t2"])
        dg = gaussian_fwhm(d["t_g"])
        return np.array([dl, dg, voigt_fwhm(dl, dg),
                         coherence_time(CoherenceModel(d["t2"], d["t_g"]))])

    base = derived(values)
    grad = np.zeros((4, len(values)))
    for j, v in enumerate(values):
        step = max(abs(v), 1e-6) * 1e-6
        plus, minus = values.copy(), values.copy()
        plus[j] += step
        minus[j] -= step
        grad[:, j] = (derived(plus) - derived(minus)) / (2 * step)
    var = np.array([result.uncertainties[n] ** 2 for n in cov_names])
    finite = np.isfinite(var)
    derived_sigma = np.sqrt(np.clip(grad[:, finite] ** 2 @ var[finite], 0.0, np.inf))
    derived_sigma[np.any((np.abs(grad[:, ~finite]) > 1e-12), axis=1)] = np.inf

    params = dict(result.params)
    sigmas = dict(result.uncertainties)
    for k, (name, value) in enumerate(zip(("delta_l", "delta_g", "delta_v", "tau_c"), base)):
        params[name] = float(value)
        sigmas[name] = float(derived_sigma[k])
    notes = list(result.notes)
    if any(math.isinf(sigmas[n]) for n in cov_names):
        notes.append("uninformative data: unbounded uncertainties")
    return FitResult(params=params, uncertainties=sigmas,
                     residual_norm=result.residual_norm,
                     converged=result.converged, iterations=result.iterations,
                     notes=tuple(notes))


# ---------------------------------------------------------------------------
# spectrum fit

def fit_spectrum(spectrum: CorrelationCurve, etalon: EtalonConfig | None = None,
                 doublet: bool = False) -> FitResult:
    """Fit a (possibly doublet) Voigt line, forward-convolved with the etalon.

    The model is convolved with the etalon response and compared with the
    raw scan, rather than deconvolving the data; this is numerically stabler
    and equivalent at the bandwidths of interest.  Returns the component
    widths delta_l, delta_g, the total Voigt width delta_v, and the doublet
    splitting when requested.
    """
    grid = spectrum.delays
    y = spectrum.values.astype(float)
    sigma = _poisson_sigma(y)

    peak = float(grid[np.argmax(y)])
    halfmax = y >= 0.5 * y.max()
    width0 = max(float(grid[halfmax][-1] - grid[halfmax][0]), 2 * spectrum.bin_width)
    names = ["center", "delta_l", "delta_g"]
    start = [peak, width0 / 2.0, width0 / 2.0]
    if doublet:
        names.append("splitting")
        start[0] = peak  # center of the doublet refined by the optimizer
        start.append(width0)

    def curves(theta):
        d = dict(zip(names, theta))
        dl = max(d["delta_l"], 0.0)
        dg = max(d["delta_g"], 1e-9)
        coh = CoherenceModel(t2=1.0 / (math.pi * max(dl, 1e-12)),
                             t_g=math.sqrt(2 * math.log(2)) / (math.sqrt(math.pi) * dg),
                             omega_s=math.pi * d.get("splitting", 0.0) if doublet else 0.0)
        model = spectrum_model(coh, grid - d["center"])
        if etalon is not None:
            model = etalon_convolve(model, etalon)
        return model.values

    def residuals(theta):
        m = curves(theta)
        scale = _profiled_scale(y, m, sigma)
        return (y - scale * m) / sigma

    grid_axes = [(1, width0 * np.array([0.05, 0.15, 0.3, 0.5, 0.8])),
                 (2, width0 * np.array([0.05, 0.15, 0.3, 0.5, 0.8]))]
    if doublet:
        # seed the splitting from the two highest separated samples
        grid_axes.append((3, width0 * np.array([0.3, 0.6, 1.0, 1.5, 2.5])))

    values, ls, iterations = _solve(residuals, names, start, grid_axes)
    result = _result(names, values, ls, iterations)
    params = dict(result.params)
    sigmas = dict(result.uncertainties)
    dl, dg = params["delta_l"], params["delta_g"]
    params["delta_v"] = voigt_fwhm(dl, dg) if (dl > 0 or dg > 0) else 0.0
    # simple quadrature propagation for the total width
    ddl = 0.535 + (0.217 * dl) / max(math.sqrt(0.217 * dl ** 2 + dg ** 2), 1e-12)
    ddg = dg / max(math.sqrt(0.217 * dl ** 2 + dg ** 2), 1e-12)
    sl, sg = sigmas.get("delta_l", 0.0), sigmas.get("delta_g", 0.0)
    sigmas["delta_v"] = math.hypot(ddl * sl, ddg * sg) if math.isfinite(sl + sg) else float("inf")
    return FitResult(params=params, uncertainties=sigmas,
                     residual_norm=result.residual_norm,
                     converged=result.converged, iterations=result.iterations,
                     notes=result.notes)
