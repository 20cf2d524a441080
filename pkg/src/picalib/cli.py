"""Command-line interface: generate, train, calibrate, evaluate, bench, bounds."""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import bounds, calib, config, harness, metrics
from .dataio import Family, SyntheticSpec, gen_synthetic, load_csv, standardize, write_csv
from .errors import ConfigError, PicalibError
from .models import CandidatePool, train_pool

log = logging.getLogger("picalib")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags():
    p = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    p.add_argument("--seed", type=int, default=None, help="seed for the subcommand's randomness")
    p.add_argument("-o", "--output", default=None, help="output path")
    p.add_argument("-c", "--config", default=None, help="TOML config file")
    p.add_argument("--threads", type=int, default=1, help="worker threads for bench")
    p.add_argument("--json-errors", action="store_true", help="report errors as JSON on stderr")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    common = _global_flags()
    # global flags live on the leaf parsers so that subparser defaults cannot clobber them
    parser = _Parser(prog="picalib", description=__doc__, allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], allow_abbrev=False, help="write a synthetic dataset as CSV")
    g.add_argument("--family", required=True, choices=[f.value for f in Family])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--coefficient-seed", type=int, default=0)

    t = sub.add_parser("train", parents=[common], allow_abbrev=False, help="train a candidate pool over a lambda grid")
    t.add_argument("--data", required=True, help="training CSV")
    t.add_argument("--target", default="y")
    t.add_argument("--lambdas", type=_floats, default=None)
    t.add_argument("--no-standardize", action="store_true")

    c = sub.add_parser("calibrate", parents=[common], allow_abbrev=False, help="select one candidate per target level")
    c.add_argument("--pool", required=True)
    c.add_argument("--val", required=True, help="validation CSV")
    c.add_argument("--train", default=None, help="training CSV for pooled widths")
    c.add_argument("--target", default="y")
    c.add_argument("--mode", choices=[m.value for m in calib.Mode], default=None)
    c.add_argument("--levels", type=_floats, default=None)
    c.add_argument("--beta", type=float, default=None)
    c.add_argument("--mc-draws", type=int, default=None)

    e = sub.add_parser("evaluate", parents=[common], allow_abbrev=False, help="coverage rate and width on test data")
    e.add_argument("--pool", required=True)
    e.add_argument("--test", required=True, help="test CSV")
    e.add_argument("--target", default="y")
    sel = e.add_mutually_exclusive_group(required=True)
    sel.add_argument("--index", type=int, help="model index in the pool (0-based)")
    sel.add_argument("--report", help="calibration report; evaluates every selected level")

    b = sub.add_parser("bench", parents=[common], allow_abbrev=False, help="run a repeated experiment")
    b.add_argument("--format", choices=["json", "csv"], default="json")
    b.add_argument("--timing", action="store_true", help="include wall-clock seconds in JSON")

    bd = sub.add_parser("bounds", help="closed-form bound calculators")
    fs = bd.add_subparsers(dest="formula", required=True, parser_class=_Parser)
    _bounds_parsers(fs, common)
    return parser


REQUIRED = object()


def _bounds_parsers(fs, common):
    def add(name, *specs):
        p = fs.add_parser(name, parents=[common], allow_abbrev=False)
        for flag, default in specs:
            if default is REQUIRED:
                p.add_argument(flag, type=float, required=True)
            else:
                p.add_argument(flag, type=type(default) if default is not None else float, default=default)

    add("sensitivity", ("--t", REQUIRED), ("--alpha", REQUIRED), ("--gamma", REQUIRED))
    add("vc-margin", ("--n", REQUIRED), ("--vc", REQUIRED), ("--eta", REQUIRED), ("--C", 1.0), ("--alpha", None))
    add("lipschitz-margin", ("--n", REQUIRED), ("--l", REQUIRED), ("--diam-theta", REQUIRED),
        ("--d-cond", REQUIRED), ("--lip-l1", REQUIRED), ("--eta", REQUIRED), ("--C", 1.0))
    add("tree-vc", ("--S", REQUIRED), ("--d", REQUIRED), ("--C", 1.0))
    add("nn-lipschitz", ("--S", REQUIRED), ("--W", REQUIRED), ("--U", REQUIRED), ("--B", REQUIRED),
        ("--M", REQUIRED), ("--M0", REQUIRED), ("--x-norm", REQUIRED), ("--C", 1.0))
    add("calibration-confidence", ("--m", REQUIRED), ("--n-v", REQUIRED), ("--beta", REQUIRED),
        ("--alpha-min", REQUIRED), ("--alpha-under", REQUIRED), ("--alpha-tilde", REQUIRED),
        ("--C1", 1.0), ("--C2", 1.0), ("--mode", "normalized"))
    add("linear-deviation", ("--epsilon", REQUIRED), ("--n", REQUIRED), ("--B", REQUIRED),
        ("--subg-norm", REQUIRED), ("--d", REQUIRED), ("--C", 1.0))


def _bound(args) -> bounds.BoundResult:
    f = args.formula
    if f == "sensitivity":
        inputs = dict(t=args.t, alpha=args.alpha, gamma=args.gamma)
        return bounds.BoundResult(f, inputs, bounds.sensitivity_bound(**inputs))
    if f == "vc-margin":
        return bounds.vc_margin_t(args.n, args.vc, args.eta, args.C, args.alpha)
    if f == "lipschitz-margin":
        return bounds.lipschitz_margin_t(args.n, args.l, args.diam_theta, args.d_cond, args.lip_l1, args.eta, args.C)
    if f == "tree-vc":
        return bounds.tree_vc_bound(args.S, args.d, args.C)
    if f == "nn-lipschitz":
        inputs = dict(S=args.S, W=args.W, U=args.U, B=args.B, M=args.M, M0=args.M0, x_norm=args.x_norm, C=args.C)
        return bounds.BoundResult(f, inputs, bounds.nn_lipschitz_const(**inputs),
                                  {"diam_theta": bounds.nn_parameter_diameter(args.B, args.W)})
    if f == "calibration-confidence":
        return bounds.calibration_confidence_bound(args.m, args.n_v, args.beta, args.alpha_min, args.alpha_under,
                                                   args.alpha_tilde, args.C1, args.C2, args.mode)
    inputs = dict(epsilon=args.epsilon, n=args.n, B=args.B, subg_norm=args.subg_norm, d=args.d, C=args.C)
    return bounds.BoundResult(f, inputs, bounds.linear_deviation_bound(**inputs))


@contextlib.contextmanager
def _atomic(path):
    """Yield a temporary sibling path that replaces ``path`` only on success."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def _write_json(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        with _atomic(path) as tmp:
            tmp.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _require_output(args):
    if not args.output:
        raise UsageError(f"{args.command} needs -o/--output")
    return args.output


def cmd_generate(args, cfg):
    out = _require_output(args)
    seed = args.seed if args.seed is not None else 0
    data = gen_synthetic(SyntheticSpec(args.family, args.coefficient_seed, seed), args.n)
    with _atomic(out) as tmp:
        write_csv(data, tmp)
    log.info("wrote %d rows to %s", data.n, out)


def cmd_train(args, cfg):
    out = _require_output(args)
    tcfg = config.train_config(cfg)
    if args.seed is not None:
        tcfg = replace(tcfg, init_seed=args.seed)
    grid = args.lambdas if args.lambdas is not None else cfg["train"]["lambdas"]
    data = load_csv(args.data, args.target)
    scaler = None
    if not args.no_standardize:
        (data,), scaler = standardize(data)
    pool = train_pool(data, grid, tcfg, scaler)
    _write_json(pool.to_dict(), out)
    log.info("trained %d candidates -> %s", len(pool), out)


def _load_pool(path):
    return CandidatePool.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _prepare(pool, path, target):
    data = load_csv(path, target)
    return data if pool.scaler is None else pool.scaler.transform(data)


def cmd_calibrate(args, cfg):
    out = _require_output(args)
    c = cfg["calibration"]
    pool = _load_pool(args.pool)
    val = _prepare(pool, args.val, args.target)
    train = None if args.train is None else _prepare(pool, args.train, args.target)
    width_source = c["width_source"] if train is not None else "calibration"
    report = calib.calibrate(
        pool, train, val,
        args.levels if args.levels is not None else c["levels"],
        args.beta if args.beta is not None else c["beta"],
        args.mode or c.get("mode", "normalized"),
        args.mc_draws if args.mc_draws is not None else c["mc_draws"],
        args.seed if args.seed is not None else c["mc_seed"],
        width_source, c["fallback"],
    )
    _write_json(report.to_dict(), out)


def cmd_evaluate(args, cfg):
    pool = _load_pool(args.pool)
    test = _prepare(pool, args.test, args.target)
    if args.index is not None:
        if not 0 <= args.index < len(pool):
            raise UsageError(f"index {args.index} outside pool of {len(pool)}")
        picks = [(None, args.index)]
    else:
        report = calib.CalibrationReport.from_dict(json.loads(Path(args.report).read_text(encoding="utf-8")))
        picks = [(lv.target, lv.chosen_index) for lv in report.levels]
    # widths are reported in the original target units
    scale = 1.0 if pool.scaler is None else pool.scaler.target_std
    rows = []
    for target, j in picks:
        res = metrics.evaluate(pool[j], test)
        rows.append({"target": target, "index": j, "coverage_rate": res.coverage,
                     "interval_width": res.width * scale})
    _write_json({"n_test": test.n, "results": rows}, args.output)


def cmd_bench(args, cfg):
    out = _require_output(args)
    if args.seed is not None:
        cfg = config.merge(cfg, {"experiment": {"master_seed": args.seed}})
    exp = config.experiment_config(cfg)
    table = harness.run_experiment(exp, threads=max(1, args.threads))
    with _atomic(out) as tmp:
        harness.export_results(table, args.format, tmp, include_timing=args.timing)
    log.info("bench finished in %.1f s -> %s", table.wall_seconds, out)


def cmd_bounds(args, cfg):
    _write_json(_bound(args).to_dict(), args.output)


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "bounds": cmd_bounds,
}


def _fail(code, exc, as_json):
    if as_json:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    else:
        sys.stderr.write(f"error: {exc}\n")
    return code


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json-errors" in argv
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
        cfg = config.resolve(args.config, config.parse_overrides(extra))
    except (UsageError, ConfigError) as exc:
        return _fail(2, exc, as_json)
    except OSError as exc:
        return _fail(2, exc, as_json)
    try:
        COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        return _fail(2, exc, as_json)
    except (PicalibError, OSError, ValueError, KeyError) as exc:
        return _fail(1, exc, as_json)
    return 0


if __name__ == "__main__":
    sys.exit(main())
