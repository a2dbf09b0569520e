"""
Command-line front end: ``thz-ocdm {simulate,sweep,crlb,selftest}``.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or I/O.
Tables go to stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .channel import active_subbands, calibrated, path_loss_db, target_amplitude
from .config import ConfigError, config_to_dict, load_config, load_default_config, with_overrides
from .experiments import FUSED, analytic_crlb, run_sweep, run_trial, source_name, write_manifest
from .fusion import combined_variance
from .selftest import run_selftest

SIMULATE_HEADER = ("source", "target", "range_m", "velocity_mps", "sigma_range_m",
                   "sigma_velocity_mps", "weight_range", "weight_velocity", "active")


def _fmt(x: float) -> str:
    return repr(float(x))


def _load(args):
    config = load_config(args.config) if args.config else load_default_config()
    return with_overrides(config, seed=args.seed, pl_threshold_db=args.pl_threshold_db,
                          paper_scale=args.paper_scale)


def cmd_simulate(args) -> int:
    config = _load(args)
    sweep = config.sweep
    scene = calibrated(config.scene)
    outcome = run_trial(scene, np.random.SeedSequence(sweep.seed), sweep.sensing,
                        random_phase=sweep.random_phase,
                        use_true_amplitude=sweep.use_true_amplitude)
    P = len(scene.targets)
    rows = []
    for sb in scene.subbands:
        estimates = outcome.per_subband.get(sb.index)
        for p in range(P):
            if estimates:
                e = estimates[p]
                rows.append([source_name(sb.index), p, e.range_est, e.velocity_est,
                             math.sqrt(e.var_range), math.sqrt(e.var_velocity), "", "", 1])
            else:
                rows.append([source_name(sb.index), p] + [math.nan] * 4 + ["", "", 0])
    for p in range(P):
        if outcome.fused:
            f = outcome.fused[p]
            wr = ";".join(f"{source_name(k)}={w:.6g}" for k, w in zip(f.contributing, f.weights_range))
            wv = ";".join(f"{source_name(k)}={w:.6g}" for k, w in zip(f.contributing, f.weights_velocity))
            rows.append([FUSED, p, f.range, f.velocity, math.sqrt(f.fused_var_range),
                         math.sqrt(f.fused_var_velocity), wr, wv, 1])
        else:
            rows.append([FUSED, p] + [math.nan] * 4 + ["", "", 0])

    print(f"{'source':<8}{'tgt':>4}{'range [m]':>16}{'velocity [m/s]':>18}"
          f"{'sigma_r [m]':>14}{'sigma_v [m/s]':>15}")
    for r in rows:
        print(f"{r[0]:<8}{r[1]:>4}{r[2]:>16.6g}{r[3]:>18.6g}{r[4]:>14.3e}{r[5]:>15.3e}")
    for p, t in enumerate(outcome.targets):
        print(f"truth   {p:>4}{t.range:>16.6g}{t.velocity:>18.6g}")
    if outcome.dropped:
        print(f"dropped subbands: {list(outcome.dropped)}", file=sys.stderr)

    if args.out:
        try:
            with open(args.out, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(SIMULATE_HEADER)
                for r in rows:
                    writer.writerow([r[0], r[1]] + [_fmt(x) for x in r[2:6]] + r[6:])
        except OSError as exc:
            raise ConfigError("--out", f"cannot write {args.out}: {exc.strerror or exc}") from None
    return 0


def cmd_sweep(args) -> int:
    config = _load(args)
    out = Path(args.out or "results")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("--out", f"cannot create {out}: {exc.strerror or exc}") from None
    spec = config.sweep
    print(f"sweep: {len(spec.snr_grid_db)} SNR x {len(spec.distance_grid)} distances x "
          f"{spec.trials} trials, K = {len(spec.scene.subbands)}, M = {spec.scene.subbands[0].M}",
          file=sys.stderr)
    result = run_sweep(spec, threads=args.threads)
    result.write_csv(out / "results.csv")
    write_manifest(out / "manifest.json", config_to_dict(config), spec.seed, result.wall_time,
                   args.threads)
    print(f"wrote {out / 'results.csv'} ({len(result.rows)} rows) in {result.wall_time:.1f} s",
          file=sys.stderr)
    return 0


def cmd_crlb(args) -> int:
    config = _load(args)
    scene = calibrated(config.scene)
    rows = []
    for p, t in enumerate(scene.targets):
        active = set(active_subbands(t.range, scene))
        bounds = {}
        for sb in scene.subbands:
            amp = abs(target_amplitude(scene, sb, t))
            snr_db = 10 * math.log10(amp ** 2 * scene.p_avg / sb.noise_var)
            var_r, var_v = analytic_crlb(scene.with_targets([t]), sb.index)
            if sb.index in active:
                bounds[sb.index] = (var_r, var_v)
            rows.append([source_name(sb.index), p, sb.f_c, sb.k_abs, path_loss_db(sb.f_c, t.range, sb.k_abs),
                         snr_db, math.sqrt(var_r), math.sqrt(var_v), int(sb.index in active)])
        if bounds:
            fr = math.sqrt(combined_variance([b[0] for b in bounds.values()]))
            fv = math.sqrt(combined_variance([b[1] for b in bounds.values()]))
        else:
            fr = fv = math.nan
        rows.append([FUSED, p, math.nan, math.nan, math.nan, math.nan, fr, fv, int(bool(bounds))])

    print(f"{'source':<8}{'tgt':>4}{'f_c [THz]':>11}{'k_abs':>8}{'PL [dB]':>9}{'SNR [dB]':>10}"
          f"{'sqrt crlb_r [m]':>17}{'sqrt crlb_v [m/s]':>19}{'active':>8}")
    for r in rows:
        print(f"{r[0]:<8}{r[1]:>4}{r[2] / 1e12:>11.3f}{r[3]:>8.3f}{r[4]:>9.2f}{r[5]:>10.2f}"
              f"{r[6]:>17.4e}{r[7]:>19.4e}{r[8]:>8}")
    if args.out:
        try:
            with open(args.out, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(("source", "target", "f_c_hz", "k_abs", "path_loss_db", "snr_db",
                                 "crlb_sqrt_range_m", "crlb_sqrt_velocity_mps", "active"))
                for r in rows:
                    writer.writerow([r[0], r[1]] + [_fmt(x) for x in r[2:8]] + [r[8]])
        except OSError as exc:
            raise ConfigError("--out", f"cannot write {args.out}: {exc.strerror or exc}") from None
    return 0


def cmd_selftest(args) -> int:
    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<30} {r.detail}")
    failed = [r.name for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print(f"selftest failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _threads(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _seed(text: str) -> int:
    n = int(text)
    if not 0 <= n < 2 ** 64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (default: bundled desk-scale config)")
    common.add_argument("--seed", type=_seed, help="override the master seed")
    common.add_argument("--out", help="output CSV (simulate, crlb) or directory (sweep)")
    common.add_argument("--paper-scale", action="store_true",
                        help="K = 8, M = N = 256, >= 500 trials, 1 dB SNR steps")
    common.add_argument("--threads", type=_threads, default=1, help="worker threads for sweep")
    common.add_argument("--pl-threshold-db", type=float, help="override the subband path-loss threshold")
    common.add_argument("-v", "--verbose", action="store_true", help="log warnings to stderr")

    parser = argparse.ArgumentParser(prog="thz-ocdm",
                                     description="Multi-band OCDM THz radar simulation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, text in (("simulate", cmd_simulate, "run one trial and print the estimates"),
                           ("sweep", cmd_sweep, "Monte Carlo RMSE sweep over SNR and distance"),
                           ("crlb", cmd_crlb, "print the per-subband and fused variance bounds"),
                           ("selftest", cmd_selftest, "run the embedded invariant checks")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
