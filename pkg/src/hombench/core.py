"""Shared domain types, units and validation.

All times are carried internally in nanoseconds.  The two documented
exceptions are the detector timing jitter, which enters in picoseconds and is
converted once at the boundary, and spectral quantities, which are in GHz.
Beamsplitter coefficients are intensity (probability) coefficients, not field
amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

__all__ = [
    "EmitterModel",
    "InterferometerModel",
    "DetectorModel",
    "ExcitationConfig",
    "CoherenceModel",
    "CorrelationCurve",
    "Histogram",
    "FitResult",
    "ConfigError",
    "validate",
    "transform_bound_flags",
    "parse_config",
    "format_config",
    "models_from_config",
    "config_from_models",
    "CONFIG_KEYS",
]

CURVE_KINDS = ("g2", "g2_perp", "g2_parallel", "g1", "spectrum")

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class EmitterModel:
    """Two-level emitter parameters (times in ns, rates in 1/ns)."""

    t1: float                      # radiative lifetime
    tau_e: float = 0.0             # state-preparation time
    r_cw: float = 0.0              # CW re-excitation rate
    tau_c_prime: float = 1.0       # HOM coalescence time
    f_overlap: float = 1.0         # spatial overlap on the second beamsplitter
    tau_d: Optional[float] = None  # pure-dephasing time, unset if unknown


@dataclass(frozen=True)
class InterferometerModel:
    """Unbalanced Mach-Zehnder: path delay, two beamsplitters, HWP angle."""

    delay_p: float                 # path delay, ns
    t_bs1: float = 0.5
    r_bs1: float = 0.5
    t_bs2: float = 0.5
    r_bs2: float = 0.5
    hwp_angle: float = 0.0         # degrees


@dataclass(frozen=True)
class DetectorModel:
    jitter_fwhm: float = 0.0       # pairwise IRF FWHM, picoseconds
    efficiency: float = 1.0

    @property
    def jitter_fwhm_ns(self) -> float:
        return self.jitter_fwhm * 1e-3

    @property
    def jitter_sigma_ns(self) -> float:
        return self.jitter_fwhm * 1e-3 * FWHM_TO_SIGMA


@dataclass(frozen=True)
class ExcitationConfig:
    mode: str = "cw"               # "cw" or "pulsed"
    pulse_period: Optional[float] = None   # T, ns (pulsed only)
    power_ratio: Optional[float] = None    # P/Psat, metadata only
    reservoir_n0: Optional[float] = None   # initial pair count N0
    reservoir_td: Optional[float] = None   # reservoir decay time TD, ns


@dataclass(frozen=True)
class CoherenceModel:
    t2: float                      # Lorentzian coherence time, ns
    t_g: float                     # Gaussian coherence time, ns
    omega_s: float = 0.0           # doublet splitting, rad/ns; 0 = no beating


@dataclass(frozen=True)
class CorrelationCurve:
    """Delay-binned model values or coincidence counts.

    ``delays`` are bin centers in ns (GHz for kind="spectrum"), strictly
    increasing and uniformly spaced.
    """

    delays: np.ndarray
    values: np.ndarray
    bin_width: float
    kind: str = "g2"

    def __post_init__(self):
        object.__setattr__(self, "delays", np.asarray(self.delays, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def total(self) -> float:
        return float(self.values.sum() * self.bin_width)

    def window(self, lo: float, hi: float) -> "CorrelationCurve":
        """Sub-curve with bin centers inside [lo, hi]."""
        m = (self.delays >= lo) & (self.delays <= hi)
        return CorrelationCurve(self.delays[m], self.values[m], self.bin_width, self.kind)


# A measured/simulated coincidence histogram shares the curve layout.
Histogram = CorrelationCurve


@dataclass(frozen=True)
class FitResult:
    params: dict
    uncertainties: dict
    residual_norm: float
    converged: bool
    iterations: int
    notes: tuple = ()

    def __str__(self) -> str:
        lines = []
        for name in self.params:
            sig = self.uncertainties.get(name, float("nan"))
            lines.append(f"{name} = {self.params[name]:.9g} +- {sig:.3g}")
        lines.append(f"residual_norm = {self.residual_norm:.6g}")
        lines.append(f"converged = {self.converged}")
        lines.append(f"iterations = {self.iterations}")
        for n in self.notes:
            lines.append(f"note: {n}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# validation

def _finite(x) -> bool:
    return x is not None and math.isfinite(x)


def validate(model) -> list:
    """Return the list of violated invariants (empty when valid).

    Pure, never mutates its input; the same input always yields the same
    report.
    """
    v = []
    if isinstance(model, EmitterModel):
        if not (_finite(model.t1) and model.t1 > 0):
            v.append("t1 > 0")
        if not (_finite(model.tau_e) and model.tau_e >= 0):
            v.append("tau_e >= 0")
        if not (_finite(model.r_cw) and model.r_cw >= 0):
            v.append("r_cw >= 0")
        if not (_finite(model.tau_c_prime) and model.tau_c_prime > 0):
            v.append("tau_c_prime > 0")
        if not (_finite(model.f_overlap) and 0 <= model.f_overlap <= 1):
            v.append("0 <= f_overlap <= 1")
        if model.tau_d is not None and not (_finite(model.tau_d) and model.tau_d > 0):
            v.append("tau_d > 0 when set")
    elif isinstance(model, InterferometerModel):
        for name in ("t_bs1", "r_bs1", "t_bs2", "r_bs2"):
            x = getattr(model, name)
            if not (_finite(x) and 0 <= x <= 1):
                v.append(f"0 <= {name} <= 1")
        if abs(model.t_bs1 + model.r_bs1 - 1.0) > 1e-9:
            v.append("t_bs1 + r_bs1 = 1 within 1e-9")
        if abs(model.t_bs2 + model.r_bs2 - 1.0) > 1e-9:
            v.append("t_bs2 + r_bs2 = 1 within 1e-9")
        if not (_finite(model.delay_p) and model.delay_p >= 0):
            v.append("delay_p >= 0")
    elif isinstance(model, DetectorModel):
        if not (_finite(model.jitter_fwhm) and model.jitter_fwhm >= 0):
            v.append("jitter_fwhm >= 0")
        if not (_finite(model.efficiency) and 0 <= model.efficiency <= 1):
            v.append("0 <= efficiency <= 1")
    elif isinstance(model, ExcitationConfig):
        if model.mode not in ("cw", "pulsed"):
            v.append("mode in {cw, pulsed}")
        if model.mode == "pulsed" and not (
            model.pulse_period is not None and _finite(model.pulse_period) and model.pulse_period > 0
        ):
            v.append("pulse_period > 0 when mode = pulsed")
        for name in ("reservoir_n0", "reservoir_td"):
            x = getattr(model, name)
            if x is not None and not (_finite(x) and x > 0):
                v.append(f"{name} > 0 when set")
    elif isinstance(model, CoherenceModel):
        if not (_finite(model.t2) and model.t2 > 0):
            v.append("t2 > 0")
        if not (_finite(model.t_g) and model.t_g > 0):
            v.append("t_g > 0")
        if not (_finite(model.omega_s) and model.omega_s >= 0):
            v.append("omega_s >= 0")
    elif isinstance(model, CorrelationCurve):
        d = model.delays
        if d.size >= 2:
            steps = np.diff(d)
            if not np.all(steps > 0):
                v.append("delays strictly increasing")
            elif np.max(np.abs(steps - steps[0])) > 1e-9:
                v.append("delays uniformly spaced within 1e-9")
        if not np.all(np.isfinite(model.values)):
            v.append("values finite")
        elif np.any(model.values < 0):
            v.append("values >= 0")
        elif model.kind == "g1" and np.any(model.values > 1 + 1e-12):
            v.append("g1 values <= 1")
        if model.kind not in CURVE_KINDS:
            v.append(f"kind in {set(CURVE_KINDS)}")
    else:
        raise TypeError(f"no validation rules for {type(model).__name__}")
    return v


def transform_bound_flags(emitter: EmitterModel) -> list:
    """Soft flags that do not invalidate the model.

    A fitted coalescence time above the transform bound 2*T1 is reported but
    not rejected.
    """
    flags = []
    if _finite(emitter.tau_c_prime) and _finite(emitter.t1) and emitter.tau_c_prime > 2 * emitter.t1:
        flags.append("tau_c_prime exceeds the transform bound 2*t1")
    return flags


# ---------------------------------------------------------------------------
# key-value configuration files

class ConfigError(ValueError):
    pass


# key -> (section object name, attribute, parser)
_FLOAT = float
_STR = str

CONFIG_KEYS = {
    "emitter.t1_ns": ("emitter", "t1", _FLOAT),
    "emitter.tau_e_ns": ("emitter", "tau_e", _FLOAT),
    "emitter.r_cw_per_ns": ("emitter", "r_cw", _FLOAT),
    "emitter.tau_c_prime_ns": ("emitter", "tau_c_prime", _FLOAT),
    "emitter.f_overlap": ("emitter", "f_overlap", _FLOAT),
    "emitter.tau_d_ns": ("emitter", "tau_d", _FLOAT),
    "mzi.delay_p_ns": ("mzi", "delay_p", _FLOAT),
    "mzi.t_bs1": ("mzi", "t_bs1", _FLOAT),
    "mzi.r_bs1": ("mzi", "r_bs1", _FLOAT),
    "mzi.t_bs2": ("mzi", "t_bs2", _FLOAT),
    "mzi.r_bs2": ("mzi", "r_bs2", _FLOAT),
    "mzi.hwp_deg": ("mzi", "hwp_angle", _FLOAT),
    "detector.jitter_fwhm_ps": ("detector", "jitter_fwhm", _FLOAT),
    "detector.efficiency": ("detector", "efficiency", _FLOAT),
    "excitation.mode": ("excitation", "mode", _STR),
    "excitation.pulse_period_ns": ("excitation", "pulse_period", _FLOAT),
    "excitation.power_ratio": ("excitation", "power_ratio", _FLOAT),
    "excitation.reservoir_n0": ("excitation", "reservoir_n0", _FLOAT),
    "excitation.reservoir_td_ns": ("excitation", "reservoir_td", _FLOAT),
    "coherence.t2_ns": ("coherence", "t2", _FLOAT),
    "coherence.tg_ns": ("coherence", "t_g", _FLOAT),
    "coherence.omega_s_rad_per_ns": ("coherence", "omega_s", _FLOAT),
    "etalon.bandwidth_ghz": ("etalon", "bandwidth", _FLOAT),
    "etalon.fsr_ghz": ("etalon", "fsr", _FLOAT),
}

_SECTION_TYPES = {
    "emitter": EmitterModel,
    "mzi": InterferometerModel,
    "detector": DetectorModel,
    "excitation": ExcitationConfig,
    "coherence": CoherenceModel,
}


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines with ``#`` comments into a raw dict.

    Unknown keys raise ConfigError naming every offending key.
    """
    raw = {}
    unknown = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_KEYS:
            unknown.append(key)
            continue
        raw[key] = value
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))
    return raw


@dataclass(frozen=True)
class ModelBundle:
    emitter: Optional[EmitterModel] = None
    mzi: Optional[InterferometerModel] = None
    detector: DetectorModel = field(default_factory=DetectorModel)
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    coherence: Optional[CoherenceModel] = None
    etalon: Optional[dict] = None


def models_from_config(raw: dict) -> ModelBundle:
    """Build the domain objects present in a parsed config."""
    sections: dict = {}
    for key, value in raw.items():
        section, attr, conv = CONFIG_KEYS[key]
        try:
            sections.setdefault(section, {})[attr] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc

    out = {}
    for name, cls in _SECTION_TYPES.items():
        if name not in sections:
            continue
        try:
            out[name] = cls(**sections[name])
        except TypeError as exc:
            raise ConfigError(f"section {name}: {exc}") from exc
    if "etalon" in sections:
        et = sections["etalon"]
        if "bandwidth" not in et or "fsr" not in et:
            raise ConfigError("etalon section needs both bandwidth_ghz and fsr_ghz")
        out["etalon"] = et
    return ModelBundle(**out)


def config_from_models(bundle: ModelBundle) -> str:
    """Serialize a bundle back to config text.

    Floats are written with repr so a parse round-trip reproduces every
    finite field bit-for-bit.
    """
    lines = []
    for key, (section, attr, conv) in CONFIG_KEYS.items():
        obj = getattr(bundle, section, None)
        if obj is None:
            continue
        value = obj[attr] if isinstance(obj, dict) else getattr(obj, attr)
        if value is None:
            continue
        text = value if isinstance(value, str) else repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def with_params(obj, **updates):
    """Functional update helper for the frozen dataclasses."""
    return replace(obj, **updates)
