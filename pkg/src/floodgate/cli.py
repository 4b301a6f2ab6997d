"""Command-line entry points: infer, fit, and simulate.

Every command writes its outputs under --out/--out-dir together with a
run manifest (resolved configuration, seeds, and SHA-256 hashes of the
inputs) so any run can be reproduced bit-exactly.

Exit codes: 0 success, 2 validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .core import Dataset, split as split_dataset, reports_to_csv
from .covariates import model_from_json
from .errors import FloodgateError
from .regression import (CvConfig, fit_lasso, fit_logistic, fit_ols,
                         fit_ridge, regression_from_json)
from .mmse import FloodgateConfig, floodgate_lcb, floodgate_lcb_scale_free
from .macm import MacmConfig, macm_lcb
from .cosufficient import cosufficient_lcb
from .simulate import ExperimentSpec, run_experiment

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3

_FITTERS = ("ols", "ridge", "lasso", "logit_l1", "logit_l2")
_METHODS = ("mmse_exact", "mmse_mc", "mmse_scale_free", "macm", "cosufficient")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_path: Path, command: str, config: dict,
                    inputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        return max(value, 1)
    env = os.environ.get("FLOODGATE_THREADS")
    if env:
        return max(int(env), 1)
    return os.cpu_count() or 1


def _fit(name: str, fit_part: Dataset, folds: int, seed: int):
    cv = CvConfig(folds=folds)
    if name == "ols":
        return fit_ols(fit_part)
    if name == "ridge":
        return fit_ridge(fit_part, cv, seed)
    if name == "lasso":
        return fit_lasso(fit_part, cv, seed)
    return fit_logistic(fit_part, "L1" if name == "logit_l1" else "L2",
                        cv, seed)


def _cmd_fit(args) -> int:
    data = Dataset.from_csv(args.data, x_cols=args.x_cols)
    mu = _fit(args.fitter, data, args.cv_folds, args.seed)
    out = Path(args.out)
    out.write_text(mu.to_json())
    _write_manifest(out, "fit",
                    {"data": args.data, "fitter": args.fitter,
                     "cv_folds": args.cv_folds, "seed": args.seed,
                     "x_cols": args.x_cols},
                    [Path(args.data)])
    return EXIT_OK


def _cmd_infer(args) -> int:
    data = Dataset.from_csv(args.data, x_cols=args.x_cols)
    model = model_from_json(Path(args.model).read_text())
    inputs = [Path(args.data), Path(args.model)]
    if args.mu is not None:
        mu = regression_from_json(Path(args.mu).read_text())
        infer_part = data
        inputs.append(Path(args.mu))
    else:
        parts = split_dataset(data, args.split, args.seed)
        mu = _fit(args.fit, parts.fit_part, args.cv_folds, args.seed)
        infer_part = parts.infer_part

    if args.method == "macm":
        cfg = MacmConfig(args.alpha, m_copies=args.m, k_copies=args.k,
                         exact_moments=args.exact, seed=args.seed)
        report = macm_lcb(infer_part, mu, model, cfg)
    elif args.method == "cosufficient":
        report = cosufficient_lcb(infer_part, mu, model, args.n2, args.alpha,
                                  mc_k=args.mc_k, seed=args.seed)
    else:
        big_k = 0 if args.method == "mmse_exact" else args.k
        if args.method != "mmse_exact" and args.exact:
            big_k = 0
        cfg = FloodgateConfig(args.alpha, big_k=big_k,
                              center_y=not args.no_center_y, seed=args.seed)
        if args.method == "mmse_scale_free":
            report = floodgate_lcb_scale_free(infer_part, mu, model, cfg)
        else:
            report = floodgate_lcb(infer_part, mu, model, cfg)

    out = Path(args.out)
    label = ",".join(args.x_cols) if args.x_cols else "x"
    extra = sorted(k for k, v in report.diagnostics.items()
                   if isinstance(v, (int, float)))
    reports_to_csv(out, [(label, report)], extra_columns=extra)
    _write_manifest(out, "infer",
                    {k: v for k, v in vars(args).items() if k != "func"},
                    inputs)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    spec = ExperimentSpec.from_json(Path(args.spec).read_text())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_experiment(spec, threads=_resolve_threads(args.threads))
    detail = out_dir / "detail.csv"
    summary = out_dir / "summary.csv"
    result.write_csvs(detail, summary)
    _write_manifest(detail, "simulate",
                    {"spec": args.spec, "out_dir": args.out_dir},
                    [Path(args.spec)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floodgate",
        description="Asymptotic lower confidence bounds for model-free "
                    "variable importance")
    sub = parser.add_subparsers(dest="command", required=True)

    p_infer = sub.add_parser("infer", help="compute an importance LCB")
    p_infer.add_argument("data", help="dataset CSV (columns y, x*, z*)")
    p_infer.add_argument("--model", required=True, help="covariate model JSON")
    p_infer.add_argument("--mu", help="serialized working regression JSON")
    p_infer.add_argument("--fit", choices=_FITTERS,
                         help="fit mu on a split instead of loading one")
    p_infer.add_argument("--method", choices=_METHODS, default="mmse_mc")
    p_infer.add_argument("--alpha", type=float, default=0.05)
    p_infer.add_argument("--k", type=int, default=500,
                         help="Monte Carlo null copies")
    p_infer.add_argument("--m", type=int, default=None,
                         help="MACM mean-estimation copies (default 4n)")
    p_infer.add_argument("--n2", type=int, default=100,
                         help="co-sufficient batch size")
    p_infer.add_argument("--mc-k", type=int, default=100,
                         help="co-sufficient within-batch copies (0 = exact)")
    p_infer.add_argument("--exact", action="store_true",
                         help="use closed-form conditional moments")
    p_infer.add_argument("--no-center-y", action="store_true")
    p_infer.add_argument("--split", type=float, default=0.5)
    p_infer.add_argument("--cv-folds", type=int, default=10)
    p_infer.add_argument("--x-cols", nargs="+", default=None,
                         help="names of the focal columns")
    p_infer.add_argument("--seed", type=int, default=0)
    p_infer.add_argument("--out", required=True)
    p_infer.set_defaults(func=_cmd_infer)

    p_fit = sub.add_parser("fit", help="fit and serialize a working regression")
    p_fit.add_argument("data")
    p_fit.add_argument("--fitter", choices=_FITTERS, required=True)
    p_fit.add_argument("--cv-folds", type=int, default=10)
    p_fit.add_argument("--x-cols", nargs="+", default=None)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=_cmd_fit)

    p_sim = sub.add_parser("simulate", help="run a coverage experiment")
    p_sim.add_argument("spec", help="experiment spec JSON")
    p_sim.add_argument("--out-dir", required=True)
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "infer" and (args.mu is None) == (args.fit is None):
        print("error: exactly one of --mu or --fit is required",
              file=sys.stderr)
        return EXIT_VALIDATION
    if args.command == "infer" and not 0.0 < args.alpha < 1.0:
        print(f"error: --alpha must lie in (0, 1), got {args.alpha}",
              file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except FloodgateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: invalid input ({exc})", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
