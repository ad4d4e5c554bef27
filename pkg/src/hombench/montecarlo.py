"""Stochastic photon-stream oracle for the analytic correlation models.

Emission, interferometer routing, pairwise coalescence, detection and
coincidence histogramming are simulated event by event.  The coalescence
rule is the phenomenological exponential envelope applied to the
different-port exit probability of photon pairs meeting at the second
beamsplitter; it reproduces the analytic coincidence equations by
construction and is an oracle for them, not an independent microscopic
theory.  Pairs are formed between nearest neighbours in arrival order
(greedy, disjoint), exact up to the negligible envelope weight of
non-adjacent pairs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (DetectorModel, EmitterModel, ExcitationConfig, Histogram,
                   InterferometerModel)
from .dynamics import DEFAULT_N_PEAKS, _side_peak_value, profile_autocorrelation

__all__ = [
    "SimConfig",
    "PhotonEvent",
    "EventStream",
    "simulate_emission",
    "propagate_and_detect",
    "hbt_detect",
    "histogram_coincidences",
    "write_timestamps",
    "read_timestamps",
    "write_timestamps_csv",
    "read_timestamps_csv",
]

ARM_SHORT, ARM_LONG = 0, 1
CHANNEL_START, CHANNEL_STOP = 0, 1

# spawn key reserved for the propagation/detection random stream so that it
# is independent of the emission shards
_PROPAGATION_KEY = 0x70F0

MAGIC = b"PHTS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHQ18x")          # magic, version, record count
_RECORD_DTYPE = np.dtype([("time_ps", "<u8"), ("channel", "u1"),
                          ("reserved", "V7")])


@dataclass(frozen=True)
class SimConfig:
    emitter: EmitterModel
    mzi: InterferometerModel
    detector: DetectorModel
    excitation: ExcitationConfig
    duration: float = 0.0          # ns of CW stream, or pulse count if pulsed
    seed: int = 0
    polarization: str = "cross"    # "co" or "cross"
    occupancy: float = 1.0         # pulsed emission probability per pulse
    shards: int = 1


@dataclass(frozen=True)
class PhotonEvent:
    emission_time: float
    pulse_index: int
    arm: int
    detected_time: float
    output_port: int


@dataclass
class EventStream:
    """Column-wise photon records; one entry per emitted photon."""

    emission_time: np.ndarray
    pulse_index: np.ndarray

    def __len__(self) -> int:
        return self.emission_time.size

    def __getitem__(self, i: int) -> PhotonEvent:
        return PhotonEvent(float(self.emission_time[i]), int(self.pulse_index[i]),
                           -1, float("nan"), -1)


def _emission_rngs(seed: int, shards: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(shards)]


def _propagation_rng(seed: int):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(_PROPAGATION_KEY,)))


def _cw_shard(rng, t0: float, duration: float, emitter: EmitterModel) -> np.ndarray:
    """Alternating exponential waits: refill at rate R, decay at rate 1/T1."""
    if emitter.r_cw <= 0:
        return np.empty(0)
    mean_gap = 1.0 / emitter.r_cw + emitter.t1
    times = []
    t = 0.0
    # draw in batches until the shard duration is exceeded
    while t < duration:
        n = max(1024, int(1.2 * (duration - t) / mean_gap) + 64)
        gaps = rng.exponential(1.0 / emitter.r_cw, n) + rng.exponential(emitter.t1, n)
        chunk = t + np.cumsum(gaps)
        times.append(chunk)
        t = chunk[-1]
    out = np.concatenate(times)
    return t0 + out[out < duration]


def _sample_profile(rng, emitter: EmitterModel, n: int) -> np.ndarray:
    """Draw emission offsets from the normalized pulsed emission profile.

    Rejection against the exponential T1 envelope; acceptance probability is
    the rise factor 1 - exp(-t/tau_e).
    """
    if n == 0:
        return np.empty(0)
    if emitter.tau_e <= 0:
        return rng.exponential(emitter.t1, n)
    out = np.empty(n)
    filled = 0
    while filled < n:
        want = n - filled
        draw = int(want / max(emitter.tau_e / (emitter.tau_e + emitter.t1), 0.05)) + 32
        t = rng.exponential(emitter.t1, draw)
        accept = rng.random(draw) < (1.0 - np.exp(-t / emitter.tau_e))
        good = t[accept][:want]
        out[filled:filled + good.size] = good
        filled += good.size
    return out


def simulate_emission(config: SimConfig, executor=None) -> EventStream:
    """Emission timestamps, strictly increasing, reproducible from the seed.

    CW mode alternates refill and decay waits; pulsed mode emits at most one
    photon per pulse with the offset drawn from the emission profile.
    Shards carry independent random streams keyed by (seed, shard index);
    passing an executor runs them concurrently without changing the result.
    """
    if config.duration <= 0:
        raise ValueError("duration must be positive")
    shards = max(1, int(config.shards))
    rngs = _emission_rngs(config.seed, shards)
    emitter = config.emitter
    mapper = executor.map if executor is not None else map

    if config.excitation.mode == "cw":
        shard_len = config.duration / shards

        def cw_worker(k):
            return _cw_shard(rngs[k], k * shard_len, shard_len, emitter)

        parts = list(mapper(cw_worker, range(shards)))
        times = np.concatenate(parts) if parts else np.empty(0)
        times.sort(kind="stable")
        return EventStream(times, np.full(times.size, -1, dtype=np.int64))

    period = config.excitation.pulse_period
    if not period or period <= 0:
        raise ValueError("pulsed mode needs a positive pulse_period")
    n_pulses = int(config.duration)
    bounds = np.linspace(0, n_pulses, shards + 1).astype(np.int64)

    def pulsed_worker(k):
        lo, hi = int(bounds[k]), int(bounds[k + 1])
        count = hi - lo
        rng = rngs[k]
        if count == 0:
            return np.empty(0, np.int64), np.empty(0)
        if config.occupancy >= 1.0:
            idx = np.arange(lo, hi, dtype=np.int64)
        else:
            idx = np.arange(lo, hi, dtype=np.int64)[rng.random(count) < config.occupancy]
        offsets = _sample_profile(rng, emitter, idx.size)
        return idx, idx * period + offsets

    parts = list(mapper(pulsed_worker, range(shards)))
    idx = np.concatenate([p[0] for p in parts]) if parts else np.empty(0, np.int64)
    times = np.concatenate([p[1] for p in parts]) if parts else np.empty(0)
    order = np.argsort(times, kind="stable")
    return EventStream(times[order], idx[order])


def _min_gap_adjacent_pairs(candidate: np.ndarray, gaps: np.ndarray) -> np.ndarray:
    """Disjoint selection among adjacent candidate gaps, smallest gap first.

    candidate[i] marks the gap between sorted photons i and i+1.  Selecting
    local gap minima first ensures every photon is claimed by its strongest
    interference partner; a candidate whose envelope is negligible can then
    only claim photons nobody closer wants.  Each round keeps the active
    candidates that are no larger than both overlapping neighbours, then
    retires them and their neighbours; runs of candidates are short, so a
    handful of rounds suffice.
    """
    keep = np.zeros_like(candidate)
    if candidate.size == 0:
        return keep
    g = np.where(candidate, gaps, np.inf)
    active = candidate.copy()
    while active.any():
        g_left = np.concatenate(([np.inf], g[:-1]))
        g_right = np.concatenate((g[1:], [np.inf]))
        # the rightmost element of any minimal plateau always qualifies,
        # so every round makes progress
        sel = active & (g <= g_left) & (g < g_right)
        keep |= sel
        retire = sel.copy()
        retire[:-1] |= sel[1:]
        retire[1:] |= sel[:-1]
        active &= ~retire
        g[retire] = np.inf
    return keep


def _pair_envelope(config: SimConfig, gaps: np.ndarray,
                   n_peaks: int = DEFAULT_N_PEAKS) -> np.ndarray:
    """Different-port suppression factor for a pair with arrival gap (ns).

    CW: the bare exponential envelope (the analytic co-polarized model
    multiplies the whole different-arm term by it).  Pulsed: the envelope is
    referenced to the side-peak amplitude and divided by the local pair
    density, so the ensemble dip matches the analytic subtraction term.
    """
    em, mzi, exc = config.emitter, config.mzi, config.excitation
    env = em.f_overlap * np.exp(-2.0 * gaps / em.tau_c_prime)
    if exc.mode == "cw":
        return env
    period = exc.pulse_period
    t2sq, r2sq = mzi.t_bs2 ** 2, mzi.r_bs2 ** 2
    raw_side = _side_peak_value(em, period, n_peaks)   # raw g2 at +T (per 1/T units)

    def raw_g2(x):
        total = 0.0
        for n in range(-n_peaks, n_peaks + 1):
            if n:
                total += profile_autocorrelation(em, x - n * period) / period
        return total

    dip_amp = (t2sq * raw_g2(-mzi.delay_p) + r2sq * raw_g2(mzi.delay_p)) / (t2sq + r2sq)
    density = profile_autocorrelation(em, gaps) / period
    with np.errstate(divide="ignore"):
        scale = np.where(density > 0, dip_amp / np.where(density > 0, density, 1.0), np.inf)
    return np.clip(env * scale, 0.0, 1.0)


def propagate_and_detect(stream: EventStream, config: SimConfig,
                         n_peaks: int = DEFAULT_N_PEAKS):
    """Route photons through the interferometer and detect.

    Returns (start, stop) detection timestamp arrays (ns, time-sorted).
    Long-arm photons are delayed by the path delay; transmission at the
    second beamsplitter sends the long arm to the stop detector and the
    short arm to the start detector.  Co-polarized pairs meeting within the
    coalescence window have their different-port probability suppressed by
    the exponential envelope.
    """
    mzi, det = config.mzi, config.detector
    rng = _propagation_rng(config.seed)
    n = len(stream)
    if n == 0:
        return np.empty(0), np.empty(0)

    arm = (rng.random(n) < mzi.t_bs1).astype(np.int8)    # 1 = long
    arrival = stream.emission_time + mzi.delay_p * arm
    order = np.argsort(arrival, kind="stable")
    arrival = arrival[order]
    arm = arm[order]

    window = 5.0 * config.emitter.tau_c_prime
    if config.excitation.mode == "pulsed" and config.excitation.pulse_period:
        window = min(window, 0.45 * config.excitation.pulse_period)

    port = np.empty(n, dtype=np.int8)
    copol = config.polarization == "co" and config.emitter.f_overlap > 0
    gaps = np.diff(arrival)
    if copol and n > 1:
        candidate = (gaps <= window) & (arm[1:] != arm[:-1])
        keep = _min_gap_adjacent_pairs(candidate, gaps)
    else:
        keep = np.zeros(max(n - 1, 0), dtype=bool)

    first = np.where(keep)[0]
    paired = np.zeros(n, dtype=bool)
    paired[first] = True
    paired[first + 1] = True

    # unpaired photons route independently: long->stop w.p. T2, short->start w.p. T2
    u = rng.random(n)
    transmitted = u < mzi.t_bs2
    port[:] = np.where(arm == ARM_LONG,
                       np.where(transmitted, CHANNEL_STOP, CHANNEL_START),
                       np.where(transmitted, CHANNEL_START, CHANNEL_STOP))

    if first.size:
        t2sq, r2sq = mzi.t_bs2 ** 2, mzi.r_bs2 ** 2
        envelope = _pair_envelope(config, gaps[first], n_peaks)
        p_orient_a = t2sq * (1.0 - envelope)      # long->stop, short->start
        p_orient_b = r2sq * (1.0 - envelope)      # long->start, short->stop
        removed = (t2sq + r2sq) * envelope
        p_both_start = mzi.t_bs2 * mzi.r_bs2 + removed / 2.0
        v = rng.random(first.size)
        c1 = p_orient_a
        c2 = c1 + p_orient_b
        c3 = c2 + p_both_start
        lo_arm = arm[first]                        # arm of the earlier photon
        for sel, assign in (
            (v < c1, "a"), ((v >= c1) & (v < c2), "b"),
            ((v >= c2) & (v < c3), "ss"), (v >= c3, "pp"),
        ):
            i = first[sel]
            j = i + 1
            if assign == "a":
                port[i] = np.where(lo_arm[sel] == ARM_LONG, CHANNEL_STOP, CHANNEL_START)
                port[j] = np.where(lo_arm[sel] == ARM_LONG, CHANNEL_START, CHANNEL_STOP)
            elif assign == "b":
                port[i] = np.where(lo_arm[sel] == ARM_LONG, CHANNEL_START, CHANNEL_STOP)
                port[j] = np.where(lo_arm[sel] == ARM_LONG, CHANNEL_STOP, CHANNEL_START)
            elif assign == "ss":
                port[i] = CHANNEL_START
                port[j] = CHANNEL_START
            else:
                port[i] = CHANNEL_STOP
                port[j] = CHANNEL_STOP

    detected = arrival
    if det.jitter_fwhm > 0:
        detected = detected + rng.normal(0.0, det.jitter_sigma_ns, n)
    if det.efficiency < 1.0:
        alive = rng.random(n) < det.efficiency
    else:
        alive = np.ones(n, dtype=bool)

    start = np.sort(detected[alive & (port == CHANNEL_START)], kind="stable")
    stop = np.sort(detected[alive & (port == CHANNEL_STOP)], kind="stable")
    return start, stop


def hbt_detect(stream: EventStream, config: SimConfig):
    """Detect at the first beamsplitter outputs (g2 configuration, no MZI)."""
    det = config.detector
    rng = _propagation_rng(config.seed)
    n = len(stream)
    reflected = rng.random(n) >= config.mzi.t_bs1
    detected = stream.emission_time.copy()
    if det.jitter_fwhm > 0:
        detected = detected + rng.normal(0.0, det.jitter_sigma_ns, n)
    if det.efficiency < 1.0:
        alive = rng.random(n) < det.efficiency
    else:
        alive = np.ones(n, dtype=bool)
    start = np.sort(detected[alive & reflected], kind="stable")
    stop = np.sort(detected[alive & ~reflected], kind="stable")
    return start, stop


def histogram_coincidences(start_stream, stop_stream, bin_width: float,
                           span: float) -> Histogram:
    """Full cross-correlation histogram of delays (stop - start) in +-span.

    Every start/stop pair within the span is counted exactly once; the
    streams must be time-sorted.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    start = np.asarray(start_stream, dtype=float)
    stop = np.asarray(stop_stream, dtype=float)
    n_half = int(round(span / bin_width))
    n_bins = 2 * n_half + 1
    centers = np.arange(-n_half, n_half + 1) * bin_width
    counts = np.zeros(n_bins, dtype=np.int64)
    if start.size == 0 or stop.size == 0:
        return Histogram(centers, counts, bin_width, "g2")

    reach = (n_half + 0.5) * bin_width
    lo = np.searchsorted(stop, start - reach, side="left")
    hi = np.searchsorted(stop, start + reach, side="right")
    per_start = hi - lo
    chunk_pairs = 20_000_000
    i = 0
    while i < start.size:
        j = i
        total = 0
        while j < start.size and total + per_start[j] <= chunk_pairs:
            total += per_start[j]
            j += 1
        j = max(j, i + 1)
        reps = per_start[i:j]
        if reps.sum():
            base = np.repeat(lo[i:j], reps)
            offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
            diffs = stop[base + offs] - np.repeat(start[i:j], reps)
            idx = np.rint(diffs / bin_width).astype(np.int64) + n_half
            valid = (idx >= 0) & (idx < n_bins)
            counts += np.bincount(idx[valid], minlength=n_bins)
        i = j
    return Histogram(centers, counts, bin_width, "g2")


# ---------------------------------------------------------------------------
# timestamp stream files

def _merge_channels(start_ns, stop_ns):
    times = np.concatenate([np.asarray(start_ns, float), np.asarray(stop_ns, float)])
    channels = np.concatenate([
        np.zeros(len(start_ns), dtype=np.uint8),
        np.ones(len(stop_ns), dtype=np.uint8),
    ])
    order = np.argsort(times, kind="stable")
    return times[order], channels[order]


def write_timestamps(path, start_ns, stop_ns) -> None:
    """Binary stream: 32-byte header then 16-byte little-endian records."""
    times, channels = _merge_channels(start_ns, stop_ns)
    records = np.zeros(times.size, dtype=_RECORD_DTYPE)
    records["time_ps"] = np.rint(times * 1e3).astype(np.uint64)
    records["channel"] = channels
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, times.size))
        records.tofile(fh)


def read_timestamps(path):
    """Read a binary stream back into (start_ns, stop_ns) arrays."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        records = np.fromfile(fh, dtype=_RECORD_DTYPE, count=count)
    if records.size != count:
        raise ValueError(f"{path}: expected {count} records, found {records.size}")
    times = records["time_ps"].astype(float) * 1e-3
    channels = records["channel"]
    return times[channels == CHANNEL_START], times[channels == CHANNEL_STOP]


def write_timestamps_csv(path, start_ns, stop_ns) -> None:
    times, channels = _merge_channels(start_ns, stop_ns)
    with open(path, "w", newline="") as fh:
        fh.write("time_ps,channel\n")
        for t, c in zip(np.rint(times * 1e3).astype(np.uint64), channels):
            fh.write(f"{t},{c}\n")


def read_timestamps_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    times = np.atleast_1d(data["time_ps"]).astype(float) * 1e-3
    channels = np.atleast_1d(data["channel"]).astype(int)
    return times[channels == CHANNEL_START], times[channels == CHANNEL_STOP]
