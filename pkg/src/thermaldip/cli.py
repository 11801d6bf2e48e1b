"""Command-line entry point: ``thermaldip {analytic,simulate,verify}``.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings

import numpy as np

from . import analytic, verification
from .montecarlo import BlockedArm, LowFluxWarning, RunSpec, run_sweep
from .optics import ExperimentConfig

COLUMNS = (
    "delta_t_fs", "analytic_c12", "analytic_c12_corrected", "analytic_singles",
    "mc_c12", "mc_c12_se", "mc_singles_1", "mc_singles_1_se", "mc_singles_2",
    "mc_singles_2_se", "mc_accidentals", "mc_accidentals_se", "n_pulses", "seed",
)

FS = 1e-15
NS = 1e-9
BLOCK_CHOICES = {"none": BlockedArm.NONE, "plus": BlockedArm.PLUS,
                 "minus": BlockedArm.MINUS}


def _add_common(p: argparse.ArgumentParser, points: int, n_mean: float):
    p.add_argument("--tau-p-fs", type=float, default=345.0,
                   help="pulse duration in fs (default 345; the other filter gives 541)")
    p.add_argument("--delta-t-min-fs", type=float, default=-2000.0)
    p.add_argument("--delta-t-max-fs", type=float, default=2000.0)
    p.add_argument("--delta-t-fs", "--delta-t", dest="delta_t_fs", type=float,
                   nargs="+", default=None,
                   help="explicit delays in fs; overrides the min/max/points sweep")
    p.add_argument("--points", type=int, default=points)
    p.add_argument("--gate-ns", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--n-mean", type=float, default=n_mean)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", default="-", help="output path, '-' for stdout")


def _add_mc(p: argparse.ArgumentParser):
    p.add_argument("--pulses", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=2012)
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads; output does not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermaldip",
        description="Coincidence dip of pulsed pseudothermal light in a "
                    "Mach-Zehnder interferometer: closed forms and Monte Carlo.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="tabulate the closed-form dip curve")
    _add_common(p, points=81, n_mean=0.0267)

    p = sub.add_parser("simulate", help="Monte Carlo sweep with analytic reference")
    _add_common(p, points=9, n_mean=0.0267)
    _add_mc(p)
    p.add_argument("--block", choices=tuple(BLOCK_CHOICES), default="none",
                   help="block one interferometer arm")

    p = sub.add_parser("verify", help="run the check suite and report PASS/FAIL")
    _add_common(p, points=9, n_mean=0.05)
    _add_mc(p)
    return parser


def _validate(parser, args):
    if not args.tau_p_fs > 0:
        parser.error("--tau-p-fs must be positive")
    if args.points < 1:
        parser.error("--points must be at least 1")
    if args.delta_t_min_fs > args.delta_t_max_fs:
        parser.error("--delta-t-min-fs must not exceed --delta-t-max-fs")
    if not args.gate_ns > 0:
        parser.error("--gate-ns must be positive")
    if not 0 <= args.eta <= 1:
        parser.error("--eta must lie in [0, 1]")
    if not args.n_mean >= 0:
        parser.error("--n-mean must be nonnegative")
    if hasattr(args, "pulses"):
        if args.pulses < 1:
            parser.error("--pulses must be at least 1")
        if not 0 <= args.seed < 2**64:
            parser.error("--seed must be an unsigned 64-bit integer")
        if args.workers is not None and args.workers < 1:
            parser.error("--workers must be at least 1")


def _delays_fs(args) -> list[float]:
    if args.delta_t_fs is not None:
        return list(args.delta_t_fs)
    if args.points == 1:
        return [0.5 * (args.delta_t_min_fs + args.delta_t_max_fs)]
    return np.linspace(args.delta_t_min_fs, args.delta_t_max_fs, args.points).tolist()


def _config(args) -> ExperimentConfig:
    return ExperimentConfig(tau_p=args.tau_p_fs * FS, gate=args.gate_ns * NS,
                            eta=args.eta, n_mean=args.n_mean)


def analytic_records(config: ExperimentConfig, delays_fs) -> list[dict]:
    rows = []
    preds = analytic.dip_curve(config, [d * FS for d in delays_fs])
    for d_fs, pred in zip(delays_fs, preds):
        row = dict.fromkeys(COLUMNS)
        row.update(delta_t_fs=d_fs, analytic_c12=pred.coincidence_rate,
                   analytic_c12_corrected=pred.corrected_rate,
                   analytic_singles=pred.singles_rate)
        rows.append(row)
    return rows


def simulation_records(results, delays_fs) -> list[dict]:
    rows = []
    for d_fs, r in zip(delays_fs, results):
        ref = r.analytic_ref
        row = dict(
            delta_t_fs=d_fs,
            analytic_c12=ref.coincidence_rate,
            analytic_c12_corrected=ref.corrected_rate,
            analytic_singles=ref.singles_rate,
            mc_c12=r.coincidences.value, mc_c12_se=r.coincidences.se,
            mc_singles_1=r.singles_1.value, mc_singles_1_se=r.singles_1.se,
            mc_singles_2=r.singles_2.value, mc_singles_2_se=r.singles_2.se,
            mc_accidentals=r.accidentals.value if r.accidentals is not None else None,
            mc_accidentals_se=r.accidentals.se if r.accidentals is not None else None,
            n_pulses=r.n_pulses, seed=r.seed,
        )
        rows.append({k: row[k] for k in COLUMNS})
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_records(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_cell(row[k]) for k in COLUMNS])
    return buf.getvalue()


def read_csv_records(text: str) -> list[dict]:
    """Parse CSV produced by :func:`format_records` back into typed rows."""
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        row = {}
        for k in COLUMNS:
            v = raw[k]
            if v == "":
                row[k] = None
            elif k in ("n_pulses", "seed"):
                row[k] = int(v)
            else:
                row[k] = float(v)
        rows.append(row)
    return rows


def _emit(text: str, path: str):
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_analytic(args) -> int:
    rows = analytic_records(_config(args), _delays_fs(args))
    _emit(format_records(rows, args.format), args.output)
    return 0


def cmd_simulate(args) -> int:
    spec = RunSpec(_config(args), args.pulses, args.seed, BLOCK_CHOICES[args.block])
    delays_fs = _delays_fs(args)
    results = run_sweep(spec, [d * FS for d in delays_fs], workers=args.workers)
    _emit(format_records(simulation_records(results, delays_fs), args.format),
          args.output)
    return 0


def cmd_verify(args) -> int:
    config = _config(args)
    lines = []

    def emit(check):
        lines.append(check.line())
        if args.output == "-":
            print(check.line(), flush=True)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowFluxWarning)
        checks = verification.run_all(config, args.pulses, args.seed, args.workers, emit,
                                      delays=[d * FS for d in _delays_fs(args)])
    n_fail = sum(not c.passed for c in checks)
    summary = f"{len(checks) - n_fail}/{len(checks)} checks passed"
    if args.output == "-":
        print(summary)
    else:
        _emit("\n".join(lines + [summary]) + "\n", args.output)
    return 0 if n_fail == 0 else 1


COMMANDS = {"analytic": cmd_analytic, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
