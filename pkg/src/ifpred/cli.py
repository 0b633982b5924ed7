"""Command-line entry point: ``ifpred <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .arma import FitError
from .correlation import channel_only_autocorr, interference_autocorr
from .evaluation import (ALL_KINDS, PredictorKind, design_predictor, emit_results,
                         evaluate_scenario, write_fit_grid, write_result_rows)
from .presets import PresetBook, parse_deltas
from .simulation import simulate

log = logging.getLogger("ifpred")

EXIT_USAGE = 2
EXIT_FAILURE = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--preset", default="setup1", help="named preset (see 'scenario list')")
    common.add_argument("--config", type=Path, help="INI file with scenario and preset sections")
    common.add_argument("--seed", type=_u64, default=1, help="master seed (u64)")
    common.add_argument("--realizations", type=_positive, help="Monte Carlo realizations")
    common.add_argument("--slots", type=_positive, help="slots per trace")
    common.add_argument("--deltas", type=parse_deltas, help="horizons, e.g. 1-10 or 1,5,8")
    common.add_argument("--out", type=Path, help="output CSV (stdout if omitted)")
    common.add_argument("--full-scale", action="store_true",
                        help="use the full realization count instead of the desk-scale one")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="ifpred", description="Interference correlation, ARMA/Kalman prediction "
                                          "and Monte Carlo evaluation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    c = sub.add_parser("correlation", parents=[common], help="analytic autocorrelation CSV")
    c.add_argument("--lags", type=_positive, default=200, help="largest lag")
    c.add_argument("--channel-only", action="store_true", help="emit the J0^2 curve instead")
    f = sub.add_parser("fit", parents=[common], help="ARMA order grid and selected model")
    f.add_argument("--kind", choices=["interference", "channel_only"], default="interference")
    sub.add_parser("simulate", parents=[common], help="interference traces CSV")
    e = sub.add_parser("evaluate", parents=[common], help="NMSE versus horizon CSV")
    e.add_argument("--predictors", default=",".join(k.value for k in ALL_KINDS),
                   help="comma-separated predictor kinds")
    s = sub.add_parser("scenario", parents=[common], help="inspect scenarios")
    s.add_argument("action", choices=["list"])
    return p


def _book(args) -> PresetBook:
    return PresetBook.load(args.config)


def _scenarios(args, book: PresetBook):
    n = args.realizations
    if n is None and args.full_scale:
        n = book.defaults.full_realizations
    return book.preset(args.preset, seed=args.seed, realizations=n, slots=args.slots)


class _Sink:
    """CSV writer on ``path`` or stdout."""

    def __init__(self, path):
        self.path = path

    def __enter__(self):
        if self.path is None:
            self.fh = sys.stdout
        else:
            try:
                self.fh = open(self.path, "w", newline="")
            except OSError as exc:
                raise OSError(f"cannot write {self.path}: {exc.strerror}") from exc
        return csv.writer(self.fh, lineterminator="\n")

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()
        return False


def cmd_correlation(args, book):
    scenarios = _scenarios(args, book)
    with _Sink(args.out) as w:
        w.writerow(["scenario", "lag", "rho"])
        for sc in scenarios:
            curve = channel_only_autocorr(sc.params.nu, args.lags) if args.channel_only \
                else interference_autocorr(sc.params, args.lags)
            for tau, v in enumerate(curve.values):
                w.writerow([sc.name, tau, repr(float(v))])


def cmd_fit(args, book):
    kind = PredictorKind(args.kind)
    scenarios = _scenarios(args, book)
    summaries = []
    with _Sink(args.out) as w:
        w.writerow(["scenario", "predictor", "p", "q", "mse_db", "selected"])
        for sc in scenarios:
            design = design_predictor(kind, sc)
            write_fit_grid(w, sc.name, kind.value, design.report)
            summaries.append((sc.name, design))
    stream = sys.stderr if args.out is None else sys.stdout
    for name, d in summaries:
        rep, m = d.report, d.model
        print(f"scenario={name} predictor={kind.value} p={rep.selected[0]} q={rep.selected[1]} "
              f"mse_db={rep.selected_mse:.3f} met_target={int(rep.met_target)} "
              f"nugget={rep.nugget:g} decimation={d.decimation} rescaled={int(d.rescaled)}",
              file=stream)
        print(f"  a = {' '.join(f'{v:.10g}' for v in m.a)}", file=stream)
        print(f"  b = {' '.join(f'{v:.10g}' for v in m.b)}", file=stream)
        print(f"  sigma2 = {m.sigma2:.10g}", file=stream)


def cmd_simulate(args, book):
    scenarios = _scenarios(args, book)
    with _Sink(args.out) as w:
        w.writerow(["scenario", "realization", "slot", "interference"])
        for sc in scenarios:
            for i, tr in enumerate(simulate(sc.config)):
                for t, v in enumerate(tr.values):
                    w.writerow([sc.name, i, t, repr(float(v))])


def _side_path(out: Path, suffix: str) -> Path:
    return out.with_name(f"{out.stem}_{suffix}{out.suffix or '.csv'}")


def cmd_evaluate(args, book):
    kinds = [PredictorKind(k.strip()) for k in args.predictors.split(",") if k.strip()]
    deltas = args.deltas or book.defaults.deltas
    results = []
    for sc in _scenarios(args, book):
        log.info("evaluating %s with %d realizations", sc.name, sc.config.realizations)
        res = evaluate_scenario(sc, kinds, deltas)
        log.info("%s done in %.1f s", sc.name, res.runtime_s)
        results.append(res)
    if args.out is None:
        with _Sink(None) as w:
            write_result_rows(w, results)
    else:
        emit_results(results, args.out, _side_path(args.out, "hist"), _side_path(args.out, "fits"))


def cmd_scenario(args, book):
    for name in book.presets():
        print(f"{name}: {', '.join(book.scenario_names(name))}")


COMMANDS = {"correlation": cmd_correlation, "fit": cmd_fit, "simulate": cmd_simulate,
            "evaluate": cmd_evaluate, "scenario": cmd_scenario}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, _book(args))
    except KeyError as exc:
        return _fail("config", str(exc.args[0]) if exc.args else str(exc), EXIT_USAGE)
    except (ValueError, FitError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_FAILURE)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_FAILURE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
