"""PEHE, train/test splitting and the replicated simulation benchmark."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .causal_models import KINDS, TrainConfig, default_config, fit, predict_cate
from .dataset import Dataset
from .errors import BenchmarkError, ConfigurationError, DivergenceError, EstimationError, InputError
from .synth_dgp import DgpConfig, simulate
from .uncertainty import credible_band, posterior_cate

log = logging.getLogger(__name__)

ORACLE = "oracle"
DISPLAY_NAMES = {"snn": "S-NN", "tnn": "T-NN", "rnn": "R-NN", "rnam": "R-NAM",
                 "tcnn": "TCNN", "icnn": "ICNN", ORACLE: "oracle"}


def pehe(tau_hat, tau_true) -> float:
    """Root PEHE: sqrt(mean((tau_hat - tau_true)^2))."""
    a = np.asarray(tau_hat, dtype=np.float64).reshape(-1)
    b = np.asarray(tau_true, dtype=np.float64).reshape(-1)
    if a.size == 0 or a.shape != b.shape:
        raise InputError(f"pehe needs equal nonzero lengths, got {a.size} and {b.size}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def split(dataset: Dataset, train_frac: float = 0.7, rng=None, max_tries: int = 100):
    """Uniform random train/test split with both arms present in the train part."""
    if not 0.0 < train_frac < 1.0:
        raise ConfigurationError("train_frac must lie in (0, 1)")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    n = dataset.N
    n_train = int(round(train_frac * n))
    if not 0 < n_train < n:
        raise EstimationError(f"cannot split {n} rows with train_frac={train_frac}")
    for _ in range(max_tries):
        perm = rng.permutation(n)
        tr, te = perm[:n_train], perm[n_train:]
        a = dataset.A[tr]
        if 0 < a.sum() < a.size:
            return dataset.subset(tr), dataset.subset(te)
    raise EstimationError(f"no split with both treatment arms in the train part after {max_tries} tries")


def replication_seed(base_seed: int, rep: int, attempt: int = 0) -> int:
    words = [int(base_seed), int(rep)] + ([attempt] if attempt else [])
    return int(np.random.SeedSequence(words).generate_state(1, np.uint32)[0])


@dataclass
class ModelSummary:
    train_pehe_mean: float
    train_pehe_mcerr: float
    test_pehe_mean: float
    test_pehe_mcerr: float


def mc_error(values) -> float:
    """Half-width of the 95% Monte Carlo interval: 1.96 sd / sqrt(B)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    return float(1.96 * v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class BenchmarkReport:
    models: dict  # kind -> ModelSummary
    reps: int
    config_digest: str
    per_replication: dict = field(default_factory=dict)  # kind -> {"train": [...], "test": [...]}
    seeds: list = field(default_factory=list)
    divergences: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @classmethod
    def from_replications(cls, per_rep: dict, seeds, divergences, config: dict) -> "BenchmarkReport":
        models = {}
        for kind, vals in per_rep.items():
            tr, te = np.asarray(vals["train"]), np.asarray(vals["test"])
            models[kind] = ModelSummary(float(tr.mean()), mc_error(tr), float(te.mean()), mc_error(te))
        return cls(models, len(seeds), config_digest(config), per_rep, list(seeds), list(divergences), config)

    def to_table(self) -> str:
        head = f"{'Model':<8} | {'Train sqrt(PEHE)':>18} | {'Test sqrt(PEHE)':>18}"
        lines = [head, "-" * len(head)]
        for kind, s in self.models.items():
            name = DISPLAY_NAMES.get(kind, kind)
            lines.append(
                f"{name:<8} | {s.train_pehe_mean:>8.3f} +/- {s.train_pehe_mcerr:<5.3f} | "
                f"{s.test_pehe_mean:>8.3f} +/- {s.test_pehe_mcerr:<5.3f}"
            )
        lines.append(f"B = {self.reps} replications; errors are 1.96 sd / sqrt(B)")
        return "\n".join(lines) + "\n"

    def csv_rows(self) -> list:
        rows = []
        for kind, s in self.models.items():
            rows.append((kind, "train", s.train_pehe_mean, s.train_pehe_mcerr))
            rows.append((kind, "test", s.test_pehe_mean, s.test_pehe_mcerr))
        return rows

    def test_means(self) -> dict:
        return {k: s.test_pehe_mean for k, s in self.models.items()}


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _one_replication(rep, seed, kinds, dgp, train_cfgs, train_frac, dataset):
    ds = dataset if dataset is not None else simulate(dataclasses.replace(dgp, seed=seed))
    if not ds.has_truth:
        raise InputError("benchmark data must carry tau_true")
    train, test = split(ds, train_frac, np.random.default_rng(seed))
    out = {}
    for i, kind in enumerate(kinds):
        if kind == ORACLE:
            out[kind] = (pehe(train.tau_true, train.tau_true), pehe(test.tau_true, test.tau_true))
            continue
        cfg = dataclasses.replace(train_cfgs[kind], seed=replication_seed(seed, i))
        try:
            model = fit(kind, train, cfg)
        except DivergenceError as exc:
            return None, (kind, seed, str(exc))
        out[kind] = (pehe(predict_cate(model, train.X), train.tau_true),
                     pehe(predict_cate(model, test.X), test.tau_true))
    return out, None


def _replication_with_retry(rep, base_seed, forced_seed, kinds, dgp, train_cfgs, train_frac, dataset):
    failures = []
    for attempt in range(2):
        if forced_seed is not None:
            seed = replication_seed(forced_seed, 0, attempt) if attempt else int(forced_seed)
        else:
            seed = replication_seed(base_seed, rep, attempt)
        res, failure = _one_replication(rep, seed, kinds, dgp, train_cfgs, train_frac, dataset)
        if res is not None:
            return res, seed, failures
        log.warning("replication %d: %s diverged with seed %d; resampling", rep, failure[0], seed)
        failures.append(failure)
    kind, seed, msg = failures[-1]
    raise BenchmarkError(f"model {kind} diverged twice in replication {rep} (last seed {seed}): {msg}")


def run_benchmark(kinds: Sequence[str] = KINDS, B: int = 20, dgp: Optional[DgpConfig] = None,
                  train_cfgs: Optional[dict] = None, base_seed: int = 0, train_frac: float = 0.7,
                  dataset: Optional[Dataset] = None, replication_seeds: Optional[Sequence[int]] = None,
                  n_jobs: int = 1) -> BenchmarkReport:
    """Replicated train/test comparison of several model kinds.

    Replication b simulates fresh data (unless ``dataset`` is given, in which
    case only the split changes), splits it, fits every kind on the same train
    part and records train/test root-PEHE. ``replication_seeds`` overrides the
    derived per-replication seeds. Replications run in parallel with joblib.
    """
    if B < 2:
        raise ConfigurationError("need at least 2 replications")
    kinds = list(kinds)
    for k in kinds:
        if k not in KINDS and k != ORACLE:
            raise ConfigurationError(f"unknown model kind {k!r}")
    if replication_seeds is not None and len(replication_seeds) != B:
        raise ConfigurationError("replication_seeds must have length B")
    dgp = dgp or DgpConfig()
    cfgs = {k: default_config(k) for k in kinds if k != ORACLE}
    cfgs.update(train_cfgs or {})
    forced = list(replication_seeds) if replication_seeds is not None else [None] * B

    jobs = (delayed(_replication_with_retry)(b, base_seed, forced[b], kinds, dgp, cfgs, train_frac, dataset)
            for b in range(B))
    results = Parallel(n_jobs=n_jobs)(jobs)

    per_rep = {k: {"train": [], "test": []} for k in kinds}
    seeds, divergences = [], []
    for res, seed, failures in results:
        seeds.append(seed)
        divergences.extend(failures)
        for k in kinds:
            per_rep[k]["train"].append(res[k][0])
            per_rep[k]["test"].append(res[k][1])
    config = {
        "kinds": kinds, "B": B, "base_seed": base_seed, "train_frac": train_frac,
        "dgp": dataclasses.asdict(dgp) if dataset is None else "user-supplied",
        "train": {k: c.to_dict() for k, c in cfgs.items() if k in kinds},
    }
    return BenchmarkReport.from_replications(per_rep, seeds, divergences, config)


@dataclass
class CoverageReport:
    coverage: float
    mean_width: float
    level: float
    n: int


def interval_coverage(lower, upper, truth) -> CoverageReport:
    lower, upper, truth = (np.asarray(v, dtype=np.float64).reshape(-1) for v in (lower, upper, truth))
    if not (lower.shape == upper.shape == truth.shape) or truth.size == 0:
        raise InputError("lower, upper and truth must be nonempty and equally long")
    inside = (truth >= lower) & (truth <= upper)
    return CoverageReport(float(inside.mean()), float(np.mean(upper - lower)), float("nan"), truth.size)


def coverage_report(model, dataset: Dataset, level: float = 0.95, S: int = 200, rng=0) -> CoverageReport:
    """Share of points whose MC-dropout CATE interval contains tau_true."""
    if not dataset.has_truth:
        raise InputError("coverage needs tau_true")
    band = credible_band(posterior_cate(model, dataset.X, S, rng), level)
    rep = interval_coverage(band.lower, band.upper, dataset.tau_true)
    rep.level = level
    return rep
