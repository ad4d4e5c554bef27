"""Command-line front end.

Subcommands: model, simulate, histogram, fit, visibility, budget, report.
Curves are exchanged as comma-separated files with a header row; timestamp
streams use the binary PHTS format (or CSV when the path ends in .csv).
Errors are printed as ``error: ...`` lines on stderr with exit code 1.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import montecarlo as mc
from .budget import efficiency_budget
from .coherence import EtalonConfig, etalon_convolve, g1_fringe, spectrum_model
from .core import (ConfigError, CorrelationCurve, DetectorModel, EmitterModel,
                   ExcitationConfig, Histogram, InterferometerModel,
                   ModelBundle, models_from_config, parse_config,
                   transform_bound_flags)
from .dynamics import cw_g2, pulsed_g2
from .fitting import fit_fringe, fit_lifetime, fit_spectrum, joint_hom_fit
from .hom import convolve_irf, cw_hom_pair, integrated_visibility, pulsed_hom_pair
from .report import REPORT_NAMES, run_report

MODEL_KINDS = ("cw-g2", "pulsed-g2", "cw-hom", "pulsed-hom", "g1", "spectrum")


def _load_bundle(path) -> ModelBundle:
    if path is None:
        raise ConfigError("--config is required for this command")
    with open(path, "r", encoding="utf-8") as fh:
        return models_from_config(parse_config(fh.read()))


def _require(bundle: ModelBundle, *sections):
    for name in sections:
        if getattr(bundle, name, None) is None:
            raise ConfigError(f"config is missing the {name} section")


def _emit_csv(out, header, columns):
    data = np.column_stack(columns)
    lines = [",".join(header)]
    for row in data:
        lines.append(",".join(f"{x:.12g}" for x in row))
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def _grid(span: float, bin_width: float) -> np.ndarray:
    half = int(round(span / bin_width))
    return np.arange(-half, half + 1) * bin_width


def cmd_model(args) -> int:
    bundle = _load_bundle(args.config)
    kind = args.subkind
    csv_out = args.out

    if kind in ("cw-g2", "cw-hom", "pulsed-g2", "pulsed-hom"):
        _require(bundle, "emitter")
        pulsed = kind.startswith("pulsed")
        bin_width = args.bin_ns or (0.2 if pulsed else 0.05)
        span = args.span_ns or (40.0 if pulsed else 50.0)
        tau = _grid(span, bin_width)
        if pulsed and bundle.excitation.mode != "pulsed":
            raise ConfigError("excitation.mode must be 'pulsed' for this model")

        def finish(header, cols):
            if args.irf:
                cols = [cols[0]] + [
                    convolve_irf(CorrelationCurve(tau, c, bin_width, "g2"),
                                 bundle.detector).values
                    for c in cols[1:]
                ]
            _emit_csv(csv_out, header, cols)

        if kind == "cw-g2":
            finish(["delay_ns", "g2"], [tau, cw_g2(bundle.emitter, tau)])
        elif kind == "pulsed-g2":
            finish(["delay_ns", "g2"],
                   [tau, pulsed_g2(bundle.emitter, bundle.excitation, tau)])
        else:
            _require(bundle, "mzi")
            if kind == "cw-hom":
                perp, par = cw_hom_pair(bundle.emitter, bundle.mzi, tau)
            else:
                perp, par = pulsed_hom_pair(bundle.emitter, bundle.mzi,
                                            bundle.excitation, tau)
            finish(["delay_ns", "g_perp", "g_parallel"], [tau, perp, par])
        return 0

    if kind == "g1":
        _require(bundle, "coherence")
        bin_width = args.bin_ns or 0.005
        span = args.span_ns or 1.2
        delays = np.arange(0.0, span + bin_width / 2, bin_width)
        _emit_csv(csv_out, ["delay_ns", "visibility"],
                  [delays, g1_fringe(bundle.coherence, delays)])
        return 0

    # spectrum
    _require(bundle, "coherence")
    bin_width = args.bin_ghz
    span = args.span_ghz
    half = int(round(span / bin_width))
    grid = np.arange(-half, half + 1) * bin_width
    spec = spectrum_model(bundle.coherence, grid)
    if args.irf and bundle.etalon:
        spec = etalon_convolve(spec, EtalonConfig(**bundle.etalon))
    _emit_csv(csv_out, ["frequency_ghz", "intensity"], [grid, spec.values])
    return 0


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("HOMBENCH_THREADS", "1")))


def cmd_simulate(args) -> int:
    bundle = _load_bundle(args.config)
    _require(bundle, "emitter", "mzi")
    if bundle.excitation.mode == "pulsed":
        if args.pulses is None:
            raise ConfigError("--pulses is required for pulsed simulation")
        duration = float(args.pulses)
    else:
        if args.duration_ns is None:
            raise ConfigError("--duration-ns is required for CW simulation")
        duration = args.duration_ns
    config = mc.SimConfig(
        emitter=bundle.emitter, mzi=bundle.mzi, detector=bundle.detector,
        excitation=bundle.excitation, duration=duration, seed=args.seed,
        polarization=args.polarization, shards=_threads(args))

    stream = _simulate_shards(config)
    if args.tap == "bs1":
        start, stop = mc.hbt_detect(stream, config)
    else:
        start, stop = mc.propagate_and_detect(stream, config)

    out = args.out or "timestamps.phts"
    if out.endswith(".csv"):
        mc.write_timestamps_csv(out, start, stop)
    else:
        mc.write_timestamps(out, start, stop)

    span_ns = (stream.emission_time[-1] - stream.emission_time[0]) if len(stream) else 0.0
    print(f"emitted {len(stream)} photons")
    print(f"detected {start.size} (start) + {stop.size} (stop)")
    if span_ns > 0:
        print(f"emission rate {len(stream) / span_ns:.6g} /ns")
    print(f"wrote {out}")
    return 0


def _simulate_shards(config: mc.SimConfig):
    """Emission generation, on a thread pool when more than one shard."""
    if config.shards <= 1:
        return mc.simulate_emission(config)
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=config.shards) as executor:
        return mc.simulate_emission(config, executor=executor)


def _load_histogram(path, args) -> Histogram:
    if not path.endswith(".csv"):
        start, stop = mc.read_timestamps(path)
        if args.bin_ns is None or args.span_ns is None:
            raise ConfigError("--bin-ns and --span-ns are required to histogram "
                              "timestamp files")
        return mc.histogram_coincidences(start, stop, args.bin_ns, args.span_ns)
    header, data = _read_csv(path)
    delays = data[:, 0]
    values = data[:, 1]
    width = float(delays[1] - delays[0]) if delays.size > 1 else 1.0
    return Histogram(delays, values, width, "g2")


def cmd_histogram(args) -> int:
    if args.bin_ns is None or args.span_ns is None:
        raise ConfigError("--bin-ns and --span-ns are required")
    start, stop = (mc.read_timestamps_csv(args.input) if args.input.endswith(".csv")
                   else mc.read_timestamps(args.input))
    hist = mc.histogram_coincidences(start, stop, args.bin_ns, args.span_ns)
    _emit_csv(args.out, ["delay_ns", "counts"], [hist.delays, hist.values])
    return 0


def _hom_curves_from_paths(paths, args):
    """Collect g2 / g_perp / g_parallel histograms from input files.

    Returns the role map and whether any input was a counted timestamp
    stream (those integrate over bins, so fits should bin-average).
    """
    roles = {}
    counted = False
    order = ["g2", "g_perp", "g_parallel"]
    for path in paths:
        if path.endswith(".csv"):
            header, data = _read_csv(path)
            delays = data[:, 0]
            width = float(delays[1] - delays[0]) if delays.size > 1 else 1.0
            named = False
            for j, name in enumerate(header[1:], start=1):
                if name in order:
                    roles[name] = Histogram(delays, data[:, j], width, "g2")
                    named = True
            if not named:
                free_role = next(r for r in order if r not in roles)
                roles[free_role] = Histogram(delays, data[:, 1], width, "g2")
        else:
            free_role = next(r for r in order if r not in roles)
            roles[free_role] = _load_histogram(path, args)
            counted = True
    missing = [r for r in order if r not in roles]
    if missing:
        raise ConfigError(f"missing input curves: {', '.join(missing)}")
    shapes = {r: roles[r].delays.shape for r in order}
    base = roles["g2"]
    for r in order[1:]:
        if shapes[r] != shapes["g2"] or not np.allclose(roles[r].delays, base.delays):
            raise ConfigError("mismatched binning across the three HOM histograms")
    return roles, counted


def _parse_free(args, default):
    free = list(default)
    if args.free:
        free = [f.strip() for f in args.free.split(",") if f.strip()]
    if args.fix:
        fixed = {f.strip() for f in args.fix.split(",")}
        free = [f for f in free if f not in fixed]
    return free


def _write_fit_report(result, out_base):
    text = str(result) + "\n"
    if out_base:
        with open(out_base + ".txt", "w") as fh:
            fh.write(text)
        with open(out_base + ".csv", "w", newline="") as fh:
            fh.write("parameter,value,sigma\n")
            for name, value in result.params.items():
                fh.write(f"{name},{value:.12g},{result.uncertainties.get(name, float('nan')):.6g}\n")
    sys.stdout.write(text)


def cmd_fit(args) -> int:
    bundle = _load_bundle(args.config) if args.config else ModelBundle()
    if args.kind == "hom":
        _require(bundle, "emitter", "mzi")
        roles, counted = _hom_curves_from_paths(args.inputs, args)
        default_free = (("tau_e", "tau_c_prime", "t_bs1", "t_bs2")
                        if bundle.excitation.mode == "pulsed"
                        else ("r_cw", "tau_c_prime", "t_bs1", "t_bs2"))
        free = _parse_free(args, default_free)
        bin_average = args.bin_average or (5 if counted else 1)
        result = joint_hom_fit(roles["g2"], roles["g_perp"], roles["g_parallel"],
                               bundle.excitation, bundle.emitter, bundle.mzi,
                               detector=bundle.detector if args.irf else None,
                               free=free, bin_average=bin_average)
    elif args.kind == "lifetime":
        header, data = _read_csv(args.inputs[0])
        width = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 1.0
        decay = Histogram(data[:, 0], data[:, 1], width, "g2")
        result = fit_lifetime(decay)
    elif args.kind == "fringe":
        header, data = _read_csv(args.inputs[0])
        free = _parse_free(args, ())
        result = fit_fringe(data[:, 0], data[:, 1], fit_omega_s="omega_s" in free)
    elif args.kind == "spectrum":
        header, data = _read_csv(args.inputs[0])
        width = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 1.0
        spec = CorrelationCurve(data[:, 0], data[:, 1], width, "spectrum")
        etalon = EtalonConfig(**bundle.etalon) if bundle.etalon else None
        result = fit_spectrum(spec, etalon=etalon, doublet=args.doublet)
    else:
        raise ConfigError(f"unknown fit kind {args.kind!r}")

    _write_fit_report(result, args.out)
    return 0


def cmd_visibility(args) -> int:
    bundle = _load_bundle(args.config)
    _require(bundle, "emitter", "mzi")
    if bundle.excitation.mode != "pulsed":
        raise ConfigError("integrated visibility requires pulsed excitation")
    corrections = {}
    if args.correct:
        wanted = {c.strip() for c in args.correct.split(",") if c.strip()}
        unknown = wanted - {"side-peaks", "rebalance"}
        if unknown:
            raise ConfigError(f"unknown corrections: {', '.join(sorted(unknown))}")
        corrections = {"side_peak_removal": "side-peaks" in wanted,
                       "rebalance_to_5050": "rebalance" in wanted}
        if bundle.emitter.tau_c_prime is None:
            raise ConfigError("corrections require fitted model parameters")
    hp = _load_histogram(args.inputs[0], args)
    hl = _load_histogram(args.inputs[1], args)
    raw = integrated_visibility(hp, hl, bundle.excitation, {}, bundle.emitter,
                                bundle.mzi)
    print(f"raw_visibility = {raw:.6g}")
    if corrections:
        corrected = integrated_visibility(hp, hl, bundle.excitation, corrections,
                                          bundle.emitter, bundle.mzi)
        applied = ",".join(k for k, v in corrections.items() if v)
        print(f"corrected_visibility = {corrected:.6g}  (corrections: {applied})")
    for flag in transform_bound_flags(bundle.emitter):
        print(f"note: {flag}")
    return 0


def cmd_budget(args) -> int:
    losses = [float(x) for x in args.loss.split(",")] if args.loss else []
    out = efficiency_budget(args.measured_cps, args.rep_rate_hz,
                            args.throughput, args.detector_eff, losses)
    print(f"first_lens_cps = {out['first_lens_cps']:.6g}")
    print(f"eta_s = {out['eta_s']:.6g}")
    print(f"eta_c = {out['eta_c']:.6g}")
    return 0


def cmd_report(args) -> int:
    outdir = args.out or f"report-{args.name}"
    summary = run_report(args.name, outdir)
    for key, value in summary.items():
        print(f"{key} = {value:.6g}" if isinstance(value, float) else f"{key} = {value}")
    print(f"wrote bundle to {outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hombench",
        description="Hong-Ou-Mandel interference modeling, simulation and fitting")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", metavar="PATH", help="key=value config file")
        p.add_argument("--out", metavar="PATH", help="output path")
        p.add_argument("--bin-ns", type=float, default=None, help="histogram bin (ns)")
        p.add_argument("--span-ns", type=float, default=None, help="histogram span (ns)")

    p = sub.add_parser("model", help="evaluate analytic models")
    p.add_argument("subkind", choices=MODEL_KINDS)
    common(p)
    p.add_argument("--irf", action="store_true", help="convolve with detector response")
    p.add_argument("--span-ghz", type=float, default=8.0)
    p.add_argument("--bin-ghz", type=float, default=0.02)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("simulate", help="Monte-Carlo photon stream")
    common(p)
    p.add_argument("--seed", type=int, default=0, metavar="U64")
    p.add_argument("--threads", type=int, default=None, metavar="N")
    p.add_argument("--duration-ns", type=float, default=None)
    p.add_argument("--pulses", type=float, default=None)
    p.add_argument("--polarization", choices=("co", "cross"), default="cross")
    p.add_argument("--tap", choices=("hom", "bs1"), default="hom",
                   help="detector placement: interferometer output or first beamsplitter")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("histogram", help="coincidence histogram from timestamps")
    p.add_argument("input")
    common(p, config=False)
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("fit", help="fit models to curves or timestamp files")
    p.add_argument("--kind", choices=("hom", "lifetime", "fringe", "spectrum"),
                   required=True)
    p.add_argument("inputs", nargs="+")
    common(p)
    p.add_argument("--irf", action="store_true",
                   help="include detector response in the fitted model")
    p.add_argument("--free", metavar="LIST", help="comma-separated free parameters")
    p.add_argument("--fix", metavar="LIST", help="comma-separated parameters to fix")
    p.add_argument("--doublet", action="store_true", help="fit a spectral doublet")
    p.add_argument("--bin-average", type=int, default=None, metavar="N",
                   help="model sub-samples per bin (default: 5 for timestamp "
                        "inputs, 1 for curve files)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("visibility", help="integrated visibility from histograms")
    p.add_argument("inputs", nargs=2, metavar=("G_PERP", "G_PARALLEL"))
    common(p)
    p.add_argument("--correct", metavar="LIST",
                   help="corrections: side-peaks,rebalance")
    p.set_defaults(func=cmd_visibility)

    p = sub.add_parser("budget", help="source efficiency budget")
    p.add_argument("--measured-cps", type=float, required=True)
    p.add_argument("--rep-rate-hz", type=float, required=True)
    p.add_argument("--throughput", type=float, required=True)
    p.add_argument("--detector-eff", type=float, required=True)
    p.add_argument("--loss", metavar="LIST", help="comma-separated transmissions")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("report", help="figure reproduction bundle")
    p.add_argument("name", choices=REPORT_NAMES)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
