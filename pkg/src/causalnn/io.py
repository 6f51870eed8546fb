"""CSV datasets, score exports, benchmark reports, model files and config files.

Every writer accepts an optional ``comment`` that is emitted as leading lines
prefixed with ``#``; readers skip such lines.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .causal_models import CausalModel, ScoreFunction, TrainConfig
from .dataset import TRUTH_FIELDS, Dataset
from .errors import ConfigurationError, ParseError, ShapeError
from .evaluation import config_digest
from .nn_core import DenseLayer, MlpNet

MODEL_MAGIC = "causalnn-model-v1"

ACTG175_COVARIATES = ("age", "wtkg", "hemo", "homo", "drugs", "oprior", "z30",
                      "preanti", "race", "gender", "str2", "karnof_hi")
ACTG175_CONTINUOUS = ("age", "wtkg", "preanti")


@dataclass
class CsvSchema:
    covariates: list
    treatment: str = "a"
    outcome: str = "y"
    truth: list = field(default_factory=list)  # subset of mu_true, tau_true, pi_true
    types: dict = field(default_factory=dict)  # covariate -> "continuous" | "binary"

    def __post_init__(self):
        self.covariates = list(self.covariates)
        self.truth = list(self.truth)
        names = self.covariates + [self.treatment, self.outcome] + self.truth
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate column names in schema")
        bad = [t for t in self.truth if t not in TRUTH_FIELDS]
        if bad:
            raise ConfigurationError(f"unknown truth columns {bad}")
        for name in self.covariates:
            self.types.setdefault(name, "continuous")
        if set(self.types.values()) - {"continuous", "binary"}:
            raise ConfigurationError("column types must be 'continuous' or 'binary'")


def actg175_schema(treatment: str = "treat", outcome: str = "cd4_diff") -> CsvSchema:
    """Schema of the ACTG-175 analysis file: 12 covariates, outcome = CD4 change."""
    types = {c: ("continuous" if c in ACTG175_CONTINUOUS else "binary") for c in ACTG175_COVARIATES}
    return CsvSchema(list(ACTG175_COVARIATES), treatment, outcome, [], types)


def simulated_schema(p: int, with_truth: bool = True) -> CsvSchema:
    return CsvSchema([f"x{j + 1}" for j in range(p)], "a", "y",
                     list(TRUTH_FIELDS) if with_truth else [])


def _comment_lines(comment):
    if not comment:
        return []
    return [f"# {line}\n" for line in str(comment).splitlines()]


def _fmt(v) -> str:
    return repr(float(v))


def _data_lines(path):
    """Yield (line_number, text) for non-comment, non-blank lines."""
    with open(path, newline="") as fh:
        for i, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            yield i, line


def read_comment_header(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            out.append(line[1:].strip())
    return out


def _read_table(path):
    lines = list(_data_lines(path))
    if not lines:
        raise ParseError(f"{path}: no header line")
    reader = csv.reader([text for _, text in lines])
    header = [h.strip() for h in next(reader)]
    rows = [(lines[k + 1][0], r) for k, r in enumerate(reader)]
    return header, rows


def _parse_float(cell, row, column):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r}", row, column) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {cell!r}", row, column)
    return v


def infer_schema(path) -> CsvSchema:
    """Simulated layout; covariates whose cells are all 0/1 are tagged binary."""
    header, rows = _read_table(path)
    truth = [c for c in TRUTH_FIELDS if c in header]
    covs = [c for c in header if c not in ("a", "y", *TRUTH_FIELDS)]
    types = {}
    for c in covs:
        j = header.index(c)
        cells = {r[j].strip() for _, r in rows if j < len(r)}
        is_binary = bool(cells) and all(_is_zero_one(v) for v in cells)
        types[c] = "binary" if is_binary else "continuous"
    return CsvSchema(covs, "a", "y", truth, types)


def _is_zero_one(cell) -> bool:
    try:
        return float(cell) in (0.0, 1.0)
    except ValueError:
        return False


def load_csv(path, schema: Optional[CsvSchema] = None) -> Dataset:
    """Read a dataset CSV. Without a schema the simulated layout (x1..xP,a,y,...) is assumed."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: file not found")
    if schema is None:
        schema = infer_schema(path)
    header, rows = _read_table(path)
    wanted = schema.covariates + [schema.treatment, schema.outcome] + schema.truth
    missing = [c for c in wanted if c not in header]
    if missing:
        raise ParseError(f"{path}: missing column(s) {missing}")
    pos = {c: header.index(c) for c in wanted}
    n = len(rows)
    X = np.empty((n, len(schema.covariates)))
    A = np.empty(n)
    Y = np.empty(n)
    truth = {t: np.empty(n) for t in schema.truth}
    for r, (lineno, cells) in enumerate(rows):
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(cells)}", lineno)
        for j, c in enumerate(schema.covariates):
            v = _parse_float(cells[pos[c]], lineno, c)
            if schema.types[c] == "binary" and v not in (0.0, 1.0):
                raise ParseError(f"binary column has value {cells[pos[c]]!r}", lineno, c)
            X[r, j] = v
        a = _parse_float(cells[pos[schema.treatment]], lineno, schema.treatment)
        if a not in (0.0, 1.0):
            raise ParseError(f"treatment must be 0 or 1, got {cells[pos[schema.treatment]]!r}",
                             lineno, schema.treatment)
        A[r] = a
        Y[r] = _parse_float(cells[pos[schema.outcome]], lineno, schema.outcome)
        for t in schema.truth:
            truth[t][r] = _parse_float(cells[pos[t]], lineno, t)
    if n == 0:
        raise ParseError(f"{path}: no data rows")
    binary = np.array([schema.types[c] == "binary" for c in schema.covariates])
    return Dataset(X, A, Y, feature_names=list(schema.covariates), binary_columns=binary, **truth)


def save_dataset_csv(dataset: Dataset, path, comment=None, schema: Optional[CsvSchema] = None):
    """Write x1..xP,a,y[,mu_true,tau_true,pi_true] (or the names of ``schema``)."""
    if schema is None:
        schema = CsvSchema([f"x{j + 1}" for j in range(dataset.P)], "a", "y",
                           [t for t in TRUTH_FIELDS if getattr(dataset, t) is not None])
    if len(schema.covariates) != dataset.P:
        raise ShapeError("schema covariate count differs from dataset")
    cols = [dataset.X[:, j] for j in range(dataset.P)] + [dataset.A, dataset.Y]
    cols += [getattr(dataset, t) for t in schema.truth]
    header = schema.covariates + [schema.treatment, schema.outcome] + schema.truth
    with open(path, "w", newline="") as fh:
        fh.writelines(_comment_lines(comment))
        fh.write(",".join(header) + "\n")
        for i in range(dataset.N):
            cells = [_fmt(c[i]) for c in cols]
            cells[dataset.P] = str(int(dataset.A[i]))
            fh.write(",".join(cells) + "\n")


SCORE_HEADER = ("feature", "kind", "grid", "mean", "lower", "upper")


def save_scores_csv(scores, path, comment=None):
    """One row per grid point: feature,kind,grid,mean,lower,upper.

    ``scores`` is a flat list of ScoreFunction or a list of (mu, tau) pairs.
    """
    flat = []
    for item in scores:
        flat.extend(item if isinstance(item, (tuple, list)) else [item])
    with open(path, "w", newline="") as fh:
        fh.writelines(_comment_lines(comment))
        fh.write(",".join(SCORE_HEADER) + "\n")
        for sf in flat:
            for g, m, lo, hi in zip(sf.grid, sf.mean, sf.lower, sf.upper):
                fh.write(f"{sf.name},{sf.kind},{_fmt(g)},{_fmt(m)},{_fmt(lo)},{_fmt(hi)}\n")


def load_scores_csv(path) -> list:
    header, rows = _read_table(path)
    if tuple(header) != SCORE_HEADER:
        raise ParseError(f"{path}: unexpected score header {header}")
    curves = {}
    order = []
    for lineno, cells in rows:
        key = (cells[0], cells[1])
        if key not in curves:
            curves[key] = []
            order.append(key)
        curves[key].append([_parse_float(c, lineno, h) for c, h in zip(cells[2:], SCORE_HEADER[2:])])
    names = list(dict.fromkeys(k[0] for k in order))
    out = []
    for name, kind in order:
        arr = np.asarray(curves[(name, kind)])
        out.append(ScoreFunction(names.index(name), name, kind, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]))
    return out


def write_report(report, csv_path=None, table_path=None, comment=None):
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            fh.writelines(_comment_lines(comment))
            fh.write("model,split,mean,mcerr\n")
            for kind, split_name, mean, err in report.csv_rows():
                fh.write(f"{kind},{split_name},{_fmt(mean)},{_fmt(err)}\n")
    if table_path is not None:
        with open(table_path, "w") as fh:
            fh.writelines(_comment_lines(comment))
            fh.write(report.to_table())


def read_report_csv(path) -> dict:
    """{(model, split): (mean, mcerr)}"""
    header, rows = _read_table(path)
    if header != ["model", "split", "mean", "mcerr"]:
        raise ParseError(f"{path}: unexpected report header {header}")
    return {(c[0], c[1]): (_parse_float(c[2], n, "mean"), _parse_float(c[3], n, "mcerr")) for n, c in rows}


def save_predictions_csv(X_names, tau_hat, path, lower=None, upper=None, comment=None):
    with open(path, "w", newline="") as fh:
        fh.writelines(_comment_lines(comment))
        cols = ["row", "tau_hat"] + (["lower", "upper"] if lower is not None else [])
        fh.write(",".join(cols) + "\n")
        for i, t in enumerate(tau_hat):
            cells = [str(i), _fmt(t)]
            if lower is not None:
                cells += [_fmt(lower[i]), _fmt(upper[i])]
            fh.write(",".join(cells) + "\n")


# ----------------------------------------------------------------------------
# model files


def save_model(model: CausalModel, path):
    """npz container: a magic string, a JSON metadata blob and the raw arrays."""
    meta = {
        "kind": model.kind,
        "n_features": model.n_features,
        "config": model.config.to_dict(),
        "config_digest": config_digest(model.config.to_dict()),
        "y_mean": model.y_mean,
        "y_sd": model.y_sd,
        "feature_names": list(model.feature_names),
        "fitted": model.fitted,
        "loss_trace": [float(v) for v in model.loss_trace],
        "nets": {name: {"dropout_rate": net.dropout_rate, "l2_penalty": net.l2_penalty,
                        "activations": [l.activation for l in net.layers]}
                 for name, net in model.nets.items()},
    }
    arrays = {"magic": np.array(MODEL_MAGIC), "meta": np.array(json.dumps(meta)),
              "x_mean": model.x_mean, "x_sd": model.x_sd}
    if model.reference_X is not None:
        arrays["reference_X"] = model.reference_X
    if model.global_bias is not None:
        arrays["global_bias"] = model.global_bias
    for name, net in model.nets.items():
        for i, layer in enumerate(net.layers):
            arrays[f"{name}/W{i}"] = layer.weights
            arrays[f"{name}/b{i}"] = layer.biases
            if layer.mask is not None:
                arrays[f"{name}/M{i}"] = layer.mask
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> CausalModel:
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ParseError(f"{path}: not a readable model file ({exc})") from exc
    with data:
        if "magic" not in data.files or str(data["magic"]) != MODEL_MAGIC:
            raise ParseError(f"{path}: not a {MODEL_MAGIC} file")
        meta = json.loads(str(data["meta"]))
        nets = {}
        for name, info in meta["nets"].items():
            layers = []
            for i, act in enumerate(info["activations"]):
                mask = data[f"{name}/M{i}"] if f"{name}/M{i}" in data.files else None
                layers.append(DenseLayer(data[f"{name}/W{i}"].copy(), data[f"{name}/b{i}"].copy(), act, mask))
            nets[name] = MlpNet(layers, info["dropout_rate"], info["l2_penalty"])
        model = CausalModel(
            meta["kind"], meta["n_features"], TrainConfig(**meta["config"]), nets,
            global_bias=data["global_bias"].copy() if "global_bias" in data.files else None,
            x_mean=data["x_mean"].copy(), x_sd=data["x_sd"].copy(),
            y_mean=meta["y_mean"], y_sd=meta["y_sd"],
            reference_X=data["reference_X"].copy() if "reference_X" in data.files else None,
            feature_names=meta["feature_names"], loss_trace=meta["loss_trace"], fitted=meta["fitted"],
        )
    return model


# ----------------------------------------------------------------------------
# key=value config files


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_config(path) -> dict:
    """Flat ``key = value`` file; '#' starts a comment, lists are comma separated."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected key = value", lineno)
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if not key:
                raise ParseError("empty key", lineno)
            out[key] = _parse_value(value)
    return out
