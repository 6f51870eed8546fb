"""Command-line entry point: ``causalnn {simulate,train,benchmark,scores,predict}``.

Settings are resolved as built-in defaults < ``--config`` file < explicit flags,
and the effective settings are written as a ``#`` comment line at the top of
every output file.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from . import io
from .causal_models import KINDS, TrainConfig, default_config, default_grid, fit, predict_cate
from .errors import CausalNNError
from .evaluation import run_benchmark
from .synth_dgp import DgpConfig, simulate
from .uncertainty import all_score_bands, credible_band, posterior_cate

log = logging.getLogger("causalnn")

TRAIN_KEYS = tuple(f.name for f in dataclasses.fields(TrainConfig))


def _header(command, settings) -> str:
    return f"causalnn {command} " + json.dumps(settings, sort_keys=True, default=str)


def _merge(args, keys, file_cfg) -> dict:
    """Config-file values overridden by flags that were given explicitly."""
    out = {k: file_cfg[k] for k in keys if k in file_cfg}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _file_config(args) -> dict:
    return io.read_config(args.config) if getattr(args, "config", None) else {}


def _train_config(kind, file_cfg, overrides) -> TrainConfig:
    base = {k: v for k, v in file_cfg.items() if k in TRAIN_KEYS}
    prefix = f"{kind}."
    base.update({k[len(prefix):]: v for k, v in file_cfg.items() if k.startswith(prefix)})
    base.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("mu_layers", "tau_layers"):
        if key in base and not isinstance(base[key], list):
            base[key] = [base[key]]
    unknown = set(base) - set(TRAIN_KEYS)
    if unknown:
        raise CausalNNError(f"unknown training settings {sorted(unknown)}")
    return default_config(kind, **base)


def _schema(args, data_path):
    if getattr(args, "schema", "auto") == "actg175":
        return io.actg175_schema(args.treatment_col or "treat", args.outcome_col or "cd4_diff")
    schema = io.infer_schema(data_path)
    if args.treatment_col or args.outcome_col:
        schema = io.CsvSchema([c for c in schema.covariates if c not in (args.treatment_col, args.outcome_col)],
                              args.treatment_col or "a", args.outcome_col or "y", schema.truth)
    return schema


def cmd_simulate(args) -> int:
    file_cfg = _file_config(args)
    s = _merge(args, ("n", "p", "seed", "n_continuous", "noise_sd_sq"), file_cfg)
    cfg = DgpConfig(**s)
    ds = simulate(cfg)
    io.save_dataset_csv(ds, args.out, comment=_header("simulate", dataclasses.asdict(cfg)))
    print(f"wrote {ds.N} rows ({int(ds.A.sum())} treated) to {args.out}")
    return 0


def cmd_train(args) -> int:
    file_cfg = _file_config(args)
    ds = io.load_csv(args.data, _schema(args, args.data))
    overrides = {k: getattr(args, k, None) for k in ("epochs", "batch_size", "seed", "learning_rate")}
    cfg = _train_config(args.model, file_cfg, overrides)
    print(f"loaded {ds.N} rows, {ds.P} covariates from {args.data}")
    model = fit(args.model, ds, cfg)
    io.save_model(model, args.out_model)
    print(f"trained {args.model}: final loss {model.loss_trace[-1]:.5f}; model written to {args.out_model}")
    return 0


def cmd_benchmark(args) -> int:
    file_cfg = _file_config(args)
    s = _merge(args, ("reps", "seed", "n", "p", "train_frac", "jobs"), file_cfg)
    kinds = args.models or file_cfg.get("models") or list(KINDS)
    if isinstance(kinds, str):
        kinds = [kinds]
    overrides = {"epochs": args.epochs}
    cfgs = {k: _train_config(k, file_cfg, overrides) for k in kinds if k != "oracle"}
    dataset = io.load_csv(args.data) if args.data else None
    dgp = DgpConfig(n=s.get("n", 2000), p=s.get("p", 10))
    report = run_benchmark(kinds, B=s.get("reps", 20), dgp=dgp, train_cfgs=cfgs,
                           base_seed=s.get("seed", 0), train_frac=s.get("train_frac", 0.7),
                           dataset=dataset, n_jobs=s.get("jobs", 1))
    comment = _header("benchmark", dict(report.config, digest=report.config_digest,
                                        data=args.data or "simulated"))
    io.write_report(report, args.out_report, args.out_table, comment=comment)
    sys.stdout.write(report.to_table())
    return 0


def cmd_scores(args) -> int:
    model = io.load_model(args.model_file)
    if model.kind != "icnn":
        raise CausalNNError(f"score functions require icnn (model file holds {model.kind})")
    file_cfg = _file_config(args)
    s = _merge(args, ("grid_min", "grid_max", "grid_points", "draws", "level", "seed"), file_cfg)
    points = s.get("grid_points", 100)
    grids = []
    for j in range(model.n_features):
        g = default_grid(model, j, points)
        grids.append(np.linspace(s.get("grid_min", g[0]), s.get("grid_max", g[-1]), points))
    scores = all_score_bands(model, grids, S=s.get("draws", 200), level=s.get("level", 0.95),
                             rng=s.get("seed", 0))
    io.save_scores_csv(scores, args.out, comment=_header("scores", dict(s, model_file=args.model_file)))
    print(f"wrote {2 * len(scores)} score curves to {args.out}")
    return 0


def cmd_predict(args) -> int:
    model = io.load_model(args.model_file)
    ds = io.load_csv(args.data, _schema(args, args.data))
    tau = predict_cate(model, ds.X)
    lower = upper = None
    if args.draws:
        band = credible_band(posterior_cate(model, ds.X, args.draws, args.seed or 0), args.level or 0.95)
        lower, upper = band.lower, band.upper
    settings = {"model_file": args.model_file, "data": args.data, "draws": args.draws, "level": args.level}
    io.save_predictions_csv(ds.feature_names, tau, args.out, lower, upper, comment=_header("predict", settings))
    print(f"wrote {tau.size} CATE predictions to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalnn", description="Targeted and interpretable causal neural nets")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    def data_opts(sp):
        sp.add_argument("--schema", choices=("auto", "actg175"), default="auto")
        sp.add_argument("--treatment-col")
        sp.add_argument("--outcome-col")

    sp = sub.add_parser("simulate", help="draw a dataset from the benchmark DGP")
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n-continuous", type=int)
    sp.add_argument("--noise-var", dest="noise_sd_sq", type=float)
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="fit one model and save it")
    sp.add_argument("--model", required=True, choices=KINDS)
    sp.add_argument("--data", required=True)
    sp.add_argument("--config")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-model", required=True)
    data_opts(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("benchmark", help="replicated PEHE comparison")
    sp.add_argument("--reps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--train-frac", type=float)
    sp.add_argument("--models", nargs="+", choices=KINDS + ("oracle",))
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--data", help="dataset CSV with truth columns; default simulates per replication")
    sp.add_argument("--config")
    sp.add_argument("--out-report", required=True)
    sp.add_argument("--out-table")
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("scores", help="export ICNN score functions with MC-dropout bands")
    sp.add_argument("--model-file", required=True)
    sp.add_argument("--grid-min", type=float)
    sp.add_argument("--grid-max", type=float)
    sp.add_argument("--grid-points", type=int)
    sp.add_argument("--draws", type=int)
    sp.add_argument("--level", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_scores)

    sp = sub.add_parser("predict", help="CATE predictions for a dataset")
    sp.add_argument("--model-file", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--draws", type=int, help="MC-dropout draws for an interval (0 = none)")
    sp.add_argument("--level", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    data_opts(sp)
    sp.set_defaults(func=cmd_predict)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CausalNNError, OSError, ValueError) as exc:
        print(f"causalnn {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
