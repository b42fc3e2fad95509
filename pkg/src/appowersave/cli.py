"""Command-line front end.

Exit status: 0 on success, 1 for invalid input or usage, 2 for I/O failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import analysis
from .phy import HCM_DEFAULT, LCM_DEFAULT
from .power import ProfileError, load_profile, reference_profile, save_profile
from .sim import ScenarioError, SimConfig, load_scenario, run
from .trace import (DiurnalParams, TraceFormatError, TraceRowError, fill_gaps, load_trace, save_trace,
                    synth_campus)

log = logging.getLogger("appowersave")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
SHIPPED_TRACE_SEED = 2019  # seed of the bundled synthetic trace


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def shipped_trace() -> Path:
    from importlib.resources import files

    return Path(str(files("appowersave") / "data" / "campus_470ap_1day.csv"))


def _profile(args):
    return load_profile(args.profile) if args.profile else reference_profile()


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_calibrate(args) -> int:
    base = _profile(args)
    prof = analysis.calibrate_profile(args.target, LCM_DEFAULT, HCM_DEFAULT, base)
    path = _out(args) / "calibrated_profile.cfg"
    save_profile(prof, path)
    if args.summary:
        cross = analysis.analytic_crossover(prof)
        print(f"hcm.idle_w={prof.watts['hcm.idle']:.6f}")
        print(f"analytic_crossover_bps={cross:.6g}")
    return EXIT_OK


def cmd_crossover(args) -> int:
    prof = _profile(args)
    if args.calibrate is not None:
        prof = analysis.calibrate_profile(args.calibrate, LCM_DEFAULT, HCM_DEFAULT, prof)
    loads = analysis.parse_loads(args.loads)
    if any(x <= 0 for x in loads):
        raise ValueError("loads must be positive")
    sim = SimConfig(seed=args.seed, sim_duration=int(args.duration * 1e6))
    rep = analysis.crossover_study(loads, prof, LCM_DEFAULT, HCM_DEFAULT, sim, args.packet_bytes)
    analysis.write_crossover_csv(rep, _out(args) / "crossover.csv")
    if args.summary:
        cross = "none" if rep.crossover_bps is None else f"{rep.crossover_bps:.6g}"
        print(f"crossover_bps={cross}")
        print(f"peak_saving_pct={rep.peak_saving:.3f}")
    return EXIT_OK


def cmd_campus(args) -> int:
    trace = load_trace(args.trace or shipped_trace(), strict=not args.lenient)
    trace, gaps = fill_gaps(trace)
    if gaps:
        log.warning("%d missing window(s) counted as zero traffic", len(gaps))
    prof = _profile(args)
    policy = analysis.CampusPolicy(mode_threshold_bps=args.threshold, doze_fraction=args.doze_fraction,
                                   include_beacons=not args.no_beacons)
    rep = analysis.campus_study(trace, policy, prof)
    analysis.write_campus_csv(rep, _out(args))
    if rep.overloaded:
        log.warning("%d window(s) exceed the channel capacity and were clamped", rep.overloaded)
    if args.summary:
        print(f"average_savings_pct={rep.daily_savings:.3f}")
        print(f"night_savings_pct={rep.night_savings:.3f}")
        print(f"office_savings_pct={rep.office_savings:.3f}")
        print(f"gap_windows={len(gaps)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config, scenario = load_scenario(args.scenario)
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    report = run(config, scenario)
    report.write_csv(_out(args))
    if args.summary:
        for k, v in report.summary().items():
            print(f"{k}={v}")
        prof = _profile(args)
        for name in sorted(report.raw_timelines):
            print(f"avg_power_w.{name}={report.average_power(name, prof):.6f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    samples = synth_campus(args.aps, args.days, DiurnalParams(), seed=args.seed)
    path = _out(args) / "trace.csv"
    save_trace(samples, path)
    if args.summary:
        print(f"samples={len(samples)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", help="power profile file (default: shipped reference profile)")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--summary", action="store_true", help="print headline numbers")

    p = _Parser(prog="appowersave", description="AP power-save studies and simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("crossover", parents=[common], help="LCM/HCM power over a load sweep")
    c.add_argument("--loads", default="1e6:100e6:25", help="start:stop:count in bit/s, or a comma list")
    c.add_argument("--duration", type=float, default=10.0, help="simulated seconds per point")
    c.add_argument("--packet-bytes", type=int, default=analysis.CROSSOVER_PACKET_BYTES)
    c.add_argument("--calibrate", type=float, default=None, metavar="BPS",
                   help="calibrate the profile to this analytic crossover first")
    c.set_defaults(func=cmd_crossover)

    c = sub.add_parser("campus", parents=[common], help="SDPS savings over a per-AP traffic trace")
    c.add_argument("--trace", help="trace CSV (default: shipped synthetic 470-AP day)")
    c.add_argument("--threshold", type=float, default=30e6, help="HCM threshold in bit/s")
    c.add_argument("--doze-fraction", type=float, default=0.5)
    c.add_argument("--no-beacons", action="store_true", help="leave Beacon energy out of both arms")
    c.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")
    c.set_defaults(func=cmd_campus)

    c = sub.add_parser("simulate", parents=[common], help="run a YAML scenario")
    c.add_argument("scenario", help="scenario YAML file")
    c.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", parents=[common], help="fit hcm.idle to a crossover target")
    c.add_argument("--target", type=float, default=29e6, help="analytic crossover target in bit/s")
    c.set_defaults(func=cmd_calibrate)

    c = sub.add_parser("synth-trace", parents=[common], help="generate a synthetic campus trace")
    c.add_argument("--aps", type=int, default=470)
    c.add_argument("--days", type=int, default=1)
    c.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None and args.command != "simulate":
        args.seed = SHIPPED_TRACE_SEED if args.command == "synth-trace" else 1
    try:
        return args.func(args)
    except (ProfileError, ScenarioError, TraceFormatError, TraceRowError, analysis.CalibrationError,
            ValueError, KeyError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
