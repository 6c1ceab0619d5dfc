"""``lpstomo`` command line: run sweeps, the GHZ study, single fits and re-emission.

Exit codes: 0 success, 1 at least one cell failed, 2 bad config or arguments.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .lps import LpsHyperparams, save_lps, to_dense
from .metrics import infidelity
from .povm import load_dataset
from .states import load_density_matrix
from .trainer import TrainConfig, fit

EXIT_OK, EXIT_FAILED_CELLS, EXIT_CONFIG = 0, 1, 2


def _formats(text: str) -> tuple:
    fmts = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = [f for f in fmts if f not in ("csv", "json", "svg")]
    if bad or not fmts:
        raise argparse.ArgumentTypeError(f"formats must be a comma list of csv,json,svg; got {text!r}")
    return fmts


def _common(p):
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--out-dir", help="override out_dir")
    p.add_argument("--workers", type=int, help="override workers")
    p.add_argument("--formats", type=_formats, default=("csv", "json", "svg"))
    p.add_argument("--tag", help="file-name tag (default: timestamp)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpstomo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a sweep described by a YAML config")
    p.add_argument("--config", required=True)
    _common(p)

    p = sub.add_parser("ghz", help="pure vs fully mixed LPS on depolarized GHZ data")
    p.add_argument("--config", help="ghz-study config; defaults to a 4-qubit study")
    p.add_argument("--n-qubits", type=int, default=4)
    p.add_argument("--eps", type=float, nargs="+", default=[0.0, 0.1])
    p.add_argument("--n-m", type=int, nargs="+", default=[20, 50, 81])
    p.add_argument("--seeds", type=int, default=5)
    _common(p)

    p = sub.add_parser("fit-one", help="train one LPS on a dataset file")
    p.add_argument("--data", required=True, help="JSONL measurement dataset")
    p.add_argument("--n-beta", type=int, default=0)
    p.add_argument("--chi", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--learning-rate", type=float, default=ex.DEFAULT_TRAINER["learning_rate"])
    p.add_argument("--max-epochs", type=int, default=20000)
    p.add_argument("--target", help="density-matrix JSON to score the fit against")
    p.add_argument("--out", help="where to save the trained model")

    p = sub.add_parser("emit", help="re-emit a saved JSON result in other formats")
    p.add_argument("--result", required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--formats", type=_formats, default=("csv", "svg"))
    p.add_argument("--tag")
    return parser


def _apply_overrides(cfg: ex.ExperimentConfig, args) -> ex.ExperimentConfig:
    d = cfg.to_dict()
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.out_dir is not None:
        d["out_dir"] = args.out_dir
    if args.workers is not None:
        d["workers"] = args.workers
    if args.tag is not None:
        d["tag"] = args.tag
    return ex.ExperimentConfig.from_dict(d)


def _finish(result: ex.SweepResult, cfg: ex.ExperimentConfig, formats) -> int:
    for path in ex.emit(result, cfg.out_dir, formats, cfg.tag):
        print(path)
    for f in result.fits:
        if f["seed"] == "median":
            print(
                f"fit {f['target']} n_beta={f['n_beta']} eps={f['eps']:g}: "
                f"k={_fmt(f['slope'])} c={_fmt(f['intercept'])} R2={_fmt(f['r_squared'])}"
            )
    if result.failed:
        print(f"{len(result.failed)} cell(s) failed", file=sys.stderr)
        return EXIT_FAILED_CELLS
    return EXIT_OK


def _fmt(x):
    return "nan" if x is None else f"{x:.4g}"


def cmd_run(args) -> int:
    cfg = _apply_overrides(ex.load_config(args.config), args)
    return _finish(ex.run(cfg), cfg, args.formats)


def cmd_ghz(args) -> int:
    if args.config:
        cfg = ex.load_config(args.config)
    else:
        cfg = ex.ExperimentConfig(
            kind="ghz-study",
            n_qubits=args.n_qubits,
            chi=2 if args.n_qubits > 6 else 4,
            n_m=args.n_m,
            eps=args.eps,
            target={"type": "ghz", "beta": 0.0, "gammas": None},
            seeds=args.seeds,
        )
    cfg = _apply_overrides(cfg, args)
    result = ex.ghz_study(cfg)
    for s in sorted(result.summary, key=lambda s: (s["eps"], s["n_m"], s["n_beta"])):
        print(f"eps={s['eps']:g} N_m={s['n_m']} N_beta={s['n_beta']}: F_in={_fmt(s['median_f_in'])} MSE={_fmt(s['median_mse'])}")
    return _finish(result, cfg, args.formats)


def cmd_fit_one(args) -> int:
    data = load_dataset(args.data)
    h = LpsHyperparams(data.n_qubits, chi=args.chi, n_beta=args.n_beta, seed=args.seed)
    cfg = TrainConfig(**{**ex.DEFAULT_TRAINER, "learning_rate": args.learning_rate, "max_epochs": args.max_epochs, "seed": args.seed})
    model, report = fit(h, data, cfg)
    out = {"loss": report.best_loss, "epochs": report.epochs, "stop_reason": report.stop_reason}
    if args.target:
        rho = load_density_matrix(args.target)
        dense = to_dense(model)
        out["f_in"] = infidelity(dense / np.trace(dense).real, rho)
    if args.out:
        out["model"] = str(save_lps(model, args.out))
    print(json.dumps(out))
    return EXIT_OK


def cmd_emit(args) -> int:
    result = ex.load_result(args.result)
    stem = Path(args.result).stem
    tag = args.tag or stem.removeprefix(f"{result.kind}-")
    for path in ex.emit(result, args.out_dir, args.formats, tag):
        print(path)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "ghz": cmd_ghz, "fit-one": cmd_fit_one, "emit": cmd_emit}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
