"""CATE estimators: S-/T-learner nets, Robinson-loss nets, TCNN and ICNN.

All Robinson-family models predict y = mu(x) + tau(x) * a and are trained on
that single squared loss. They differ in how mu and tau are produced:

    rnn   one dense trunk with a 2-unit head (mu, tau)
    rnam  one additive net, each feature's subnet emits (mu_j, tau_j)
    tcnn  separate dense blocks for mu and tau
    icnn  separate additive blocks: sum_j mu_j(x_j) and sum_j tau_j(x_j)

Training happens on standardised data (Y and continuous X columns z-scored);
every public prediction is returned on the original outcome scale.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import nn_core
from .dataset import Dataset
from .errors import (
    ConfigurationError,
    DivergenceError,
    EstimationError,
    InputError,
    ShapeError,
    StateError,
    UnsupportedOperationError,
)
from .nn_core import MlpNet, OptimizerState, forward, backward

KINDS = ("snn", "tnn", "rnn", "rnam", "tcnn", "icnn")
ROBINSON_KINDS = ("rnn", "rnam", "tcnn", "icnn")
ADDITIVE_KINDS = ("rnam", "icnn")


@dataclass
class TrainConfig:
    """Optimisation and architecture settings.

    snn/tnn/rnn/rnam have a single block and only read the ``mu_*`` fields;
    for tnn both arm nets share them. Widths of rnam/icnn are per feature.
    """

    epochs: int = 500
    batch_size: int = 128
    mu_layers: list = field(default_factory=lambda: [50, 50])
    tau_layers: list = field(default_factory=lambda: [20])
    mu_dropout: float = 0.1
    tau_dropout: float = 0.1
    l2_mu: float = 0.0
    l2_tau: float = 0.0
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        self.mu_layers = [int(w) for w in self.mu_layers]
        self.tau_layers = [int(w) for w in self.tau_layers]
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")
        if not self.mu_layers or not self.tau_layers or min(self.mu_layers + self.tau_layers) < 1:
            raise ConfigurationError("layer width lists must be nonempty and positive")
        for p in (self.mu_dropout, self.tau_dropout):
            if not 0.0 <= p < 1.0:
                raise ConfigurationError(f"dropout must lie in [0, 1), got {p}")
        if self.l2_mu < 0 or self.l2_tau < 0 or self.learning_rate <= 0:
            raise ConfigurationError("l2 penalties must be >= 0 and learning rate > 0")

    def to_dict(self) -> dict:
        return asdict(self)


# Hidden widths of each model in the simulated benchmark.
DEFAULT_ARCHITECTURES = {
    "snn": ([50, 50], [50, 50]),
    "tnn": ([50, 50], [50, 50]),
    "rnn": ([50, 50], [50, 50]),
    "rnam": ([20, 20], [20, 20]),
    "tcnn": ([50, 50], [20]),
    "icnn": ([20, 20], [50]),
}


def default_config(kind: str, **overrides) -> TrainConfig:
    _check_kind(kind)
    mu_layers, tau_layers = DEFAULT_ARCHITECTURES[kind]
    params = dict(mu_layers=list(mu_layers), tau_layers=list(tau_layers))
    params.update(overrides)
    return TrainConfig(**params)


def _check_kind(kind):
    if kind not in KINDS:
        raise ConfigurationError(f"unknown model kind {kind!r}; expected one of {KINDS}")


def additive_masks(n_features: int, hidden: list, n_heads: int) -> tuple:
    """Layer sizes and block-diagonal masks for per-feature subnets.

    Subnet j sees only input j. Head output ``h * n_features + j`` belongs to
    subnet j, so head h of all features forms a contiguous slice.
    """
    P = n_features
    sizes = [P] + [P * w for w in hidden] + [n_heads * P]
    widths = [1] + list(hidden)
    masks = []
    for w_in, w_out in zip(widths[:-1], widths[1:]):
        masks.append(np.kron(np.eye(P), np.ones((w_out, w_in))))
    head = np.zeros((n_heads * P, P * widths[-1]))
    for h in range(n_heads):
        head[h * P:(h + 1) * P] = np.kron(np.eye(P), np.ones((1, widths[-1])))
    masks.append(head)
    return sizes, masks


@dataclass
class CausalModel:
    kind: str
    n_features: int
    config: TrainConfig
    nets: dict
    global_bias: Optional[np.ndarray] = None  # (b_mu, b_tau) for additive kinds
    x_mean: Optional[np.ndarray] = None
    x_sd: Optional[np.ndarray] = None
    y_mean: float = 0.0
    y_sd: float = 1.0
    reference_X: Optional[np.ndarray] = None  # standardised training covariates
    feature_names: Optional[list] = None
    loss_trace: list = field(default_factory=list)
    fitted: bool = False

    def __post_init__(self):
        if self.x_mean is None:
            self.x_mean = np.zeros(self.n_features)
        if self.x_sd is None:
            self.x_sd = np.ones(self.n_features)
        if self.feature_names is None:
            self.feature_names = [f"x{j + 1}" for j in range(self.n_features)]

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} covariate columns, got shape {X.shape}")
        return (X - self.x_mean) / self.x_sd

    def param_groups(self) -> dict:
        """name -> (parameter arrays, masks); Adam keeps one state per group."""
        groups = {name: (net.parameters(), net.masks()) for name, net in self.nets.items()}
        if self.global_bias is not None:
            groups["bias"] = ([self.global_bias], [None])
        return groups

    def copy(self) -> "CausalModel":
        return copy.deepcopy(self)


def init_model(kind: str, n_features: int, config: Optional[TrainConfig] = None, rng=None) -> CausalModel:
    """Freshly initialised (unfitted) model with identity standardisation."""
    _check_kind(kind)
    if n_features < 1:
        raise ConfigurationError("need at least one feature")
    cfg = config or default_config(kind)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    P = n_features
    mu_kw = dict(dropout_rate=cfg.mu_dropout, l2=cfg.l2_mu, rng=rng)
    tau_kw = dict(dropout_rate=cfg.tau_dropout, l2=cfg.l2_tau, rng=rng)
    bias = None
    if kind == "snn":
        nets = {"f": nn_core.init_net([P + 1, *cfg.mu_layers, 1], **mu_kw)}
    elif kind == "tnn":
        nets = {"f1": nn_core.init_net([P, *cfg.mu_layers, 1], **mu_kw),
                "f0": nn_core.init_net([P, *cfg.mu_layers, 1], **mu_kw)}
    elif kind == "rnn":
        nets = {"f": nn_core.init_net([P, *cfg.mu_layers, 2], **mu_kw)}
    elif kind == "tcnn":
        nets = {"mu": nn_core.init_net([P, *cfg.mu_layers, 1], **mu_kw),
                "tau": nn_core.init_net([P, *cfg.tau_layers, 1], **tau_kw)}
    elif kind == "rnam":
        sizes, masks = additive_masks(P, cfg.mu_layers, 2)
        nets = {"nam": nn_core.init_net(sizes, masks=masks, **mu_kw)}
        bias = np.zeros(2)
    else:  # icnn
        s_mu, m_mu = additive_masks(P, cfg.mu_layers, 1)
        s_tau, m_tau = additive_masks(P, cfg.tau_layers, 1)
        nets = {"mu": nn_core.init_net(s_mu, masks=m_mu, **mu_kw),
                "tau": nn_core.init_net(s_tau, masks=m_tau, **tau_kw)}
        bias = np.zeros(2)
    return CausalModel(kind, P, cfg, nets, global_bias=bias)


# ----------------------------------------------------------------------------
# Robinson-family forward / backward in standardised units


@dataclass
class RobinsonPass:
    mu: np.ndarray
    tau: np.ndarray
    mu_parts: Optional[np.ndarray]  # N x P per-feature contributions (additive kinds)
    tau_parts: Optional[np.ndarray]
    caches: dict


def _robinson_pass(model: CausalModel, Xs, mode="eval", rng=None) -> RobinsonPass:
    kind = model.kind
    if kind not in ROBINSON_KINDS:
        raise UnsupportedOperationError(f"{kind} is not a Robinson-parametrised model")
    P = model.n_features
    caches = {}
    mu_parts = tau_parts = None
    if kind == "rnn":
        out, caches["f"] = forward(model.nets["f"], Xs, mode, rng)
        mu, tau = out[:, 0], out[:, 1]
    elif kind == "tcnn":
        m, caches["mu"] = forward(model.nets["mu"], Xs, mode, rng)
        t, caches["tau"] = forward(model.nets["tau"], Xs, mode, rng)
        mu, tau = m[:, 0], t[:, 0]
    elif kind == "rnam":
        out, caches["nam"] = forward(model.nets["nam"], Xs, mode, rng)
        mu_parts, tau_parts = out[:, :P], out[:, P:]
    else:
        mu_parts, caches["mu"] = forward(model.nets["mu"], Xs, mode, rng)
        tau_parts, caches["tau"] = forward(model.nets["tau"], Xs, mode, rng)
    if mu_parts is not None:
        mu = model.global_bias[0] + mu_parts.sum(axis=1)
        tau = model.global_bias[1] + tau_parts.sum(axis=1)
    return RobinsonPass(mu, tau, mu_parts, tau_parts, caches)


def _robinson_backward(model: CausalModel, rp: RobinsonPass, d_mu, d_tau) -> dict:
    kind = model.kind
    P = model.n_features
    grads = {}
    c = rp.caches
    if kind == "rnn":
        grads["f"], _ = backward(model.nets["f"], c["f"], np.column_stack([d_mu, d_tau]))
    elif kind == "tcnn":
        grads["mu"], _ = backward(model.nets["mu"], c["mu"], d_mu[:, None])
        grads["tau"], _ = backward(model.nets["tau"], c["tau"], d_tau[:, None])
    elif kind == "rnam":
        g = np.concatenate([np.repeat(d_mu[:, None], P, 1), np.repeat(d_tau[:, None], P, 1)], 1)
        grads["nam"], _ = backward(model.nets["nam"], c["nam"], g)
    else:
        grads["mu"], _ = backward(model.nets["mu"], c["mu"], np.repeat(d_mu[:, None], P, 1))
        grads["tau"], _ = backward(model.nets["tau"], c["tau"], np.repeat(d_tau[:, None], P, 1))
    if model.global_bias is not None:
        grads["bias"] = [np.array([d_mu.sum(), d_tau.sum()])]
    return grads


def robinson_loss_grad(y_hat, y, A):
    """Squared-error Robinson loss and its gradients w.r.t. mu and tau.

    loss = mean (y_hat - y)^2, d_mu = 2 (y_hat - y) / N, d_tau = d_mu * A.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    A = np.asarray(A, dtype=np.float64).reshape(-1)
    if y_hat.size == 0:
        raise InputError("empty batch")
    if not (y_hat.shape == y.shape == A.shape):
        raise ShapeError("y_hat, y and A must have equal lengths")
    r = y_hat - y
    d_mu = 2.0 * r / r.size
    return float(np.mean(r ** 2)), d_mu, d_mu * A


def _penalty(model: CausalModel) -> float:
    return sum(net.penalty() for net in model.nets.values())


def _net_mse(net: MlpNet, X, y, mode, rng):
    out, cache = forward(net, X, mode, rng)
    loss, g = nn_core.squared_loss(out, y)
    if cache is None:
        return loss, None
    grads, _ = backward(net, cache, g)
    return loss, grads


def loss_and_grads(model: CausalModel, Xs, A, ys, rng=None, mode="train"):
    """Full training objective on a standardised batch and its gradients.

    The objective is the data loss plus the L2 penalties of every block. For
    tnn it is the sum of the two arm-wise MSEs. With ``mode="eval"`` only the
    loss is computed (gradients are None); the gradient checker uses this.
    """
    A = np.asarray(A, dtype=np.float64)
    if model.kind == "snn":
        loss, g = _net_mse(model.nets["f"], np.column_stack([Xs, A]), ys, mode, rng)
        grads = None if g is None else {"f": g}
    elif model.kind == "tnn":
        loss, grads = 0.0, {}
        for name, arm in (("f1", 1), ("f0", 0)):
            sel = A == arm
            net = model.nets[name]
            if not sel.any():
                grads[name] = [np.zeros_like(p) for p in net.parameters()]
                continue
            l, g = _net_mse(net, Xs[sel], ys[sel], mode, rng)
            loss += l
            grads[name] = g
        if mode != "train":
            grads = None
    else:
        rp = _robinson_pass(model, Xs, mode, rng)
        loss, d_mu, d_tau = robinson_loss_grad(rp.mu + rp.tau * A, ys, A)
        grads = _robinson_backward(model, rp, d_mu, d_tau) if mode == "train" else None
    return loss + _penalty(model), grads


def check_gradients(model: CausalModel, Xs, A, ys, h: float = 1e-6, norm: str = "entry") -> float:
    """Max relative error of loss_and_grads() against central differences.

    Runs on standardised inputs with dropout switched off in every block;
    ``norm`` is passed to nn_core.numeric_grad_check.
    """
    saved = {name: net.dropout_rate for name, net in model.nets.items()}
    try:
        for net in model.nets.values():
            net.dropout_rate = 0.0
        _, grads = loss_and_grads(model, Xs, A, ys, None, "train")

        def objective():
            return loss_and_grads(model, Xs, A, ys, None, "eval")[0]

        worst = 0.0
        for name, (params, masks) in model.param_groups().items():
            worst = max(worst, nn_core.numeric_grad_check(objective, params, grads[name], h, masks, norm))
        return worst
    finally:
        for name, net in model.nets.items():
            net.dropout_rate = saved[name]


# ----------------------------------------------------------------------------
# fitting


def _standardization(ds: Dataset):
    x_mean = ds.X.mean(axis=0)
    x_sd = ds.X.std(axis=0)
    x_sd = np.where(x_sd > 0, x_sd, 1.0)
    x_mean = np.where(ds.binary_columns, 0.0, x_mean)
    x_sd = np.where(ds.binary_columns, 1.0, x_sd)
    y_sd = float(ds.Y.std())
    return x_mean, x_sd, float(ds.Y.mean()), y_sd if y_sd > 0 else 1.0


def _train_loop(model, groups, n, step_loss, cfg: TrainConfig, rng, trace):
    states = {name: OptimizerState.for_params(params, learning_rate=cfg.learning_rate)
              for name, (params, _) in groups.items()}
    bs = cfg.batch_size
    # overflow during a blow-up is reported through the loss check below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            perm = rng.permutation(n)
            total = 0.0
            for start in range(0, n, bs):
                idx = perm[start:start + bs]
                loss, grads = step_loss(idx)
                if not np.isfinite(loss):
                    raise DivergenceError(epoch)
                for name, (params, _) in groups.items():
                    nn_core.adam_update(params, grads[name], states[name])
                for net in model.nets.values():
                    net.touch()
                total += loss * len(idx)
            trace.append(total / n)


def fit(kind: str, dataset: Dataset, config: Optional[TrainConfig] = None) -> CausalModel:
    """Train a model of the given kind on ``dataset`` with minibatch Adam."""
    _check_kind(kind)
    cfg = config or default_config(kind)
    n0, n1 = dataset.arm_counts()
    if kind == "tnn" and (n0 == 0 or n1 == 0):
        raise EstimationError("tnn needs observations in both treatment arms")
    rng = np.random.default_rng(cfg.seed)
    model = init_model(kind, dataset.P, cfg, rng)
    model.x_mean, model.x_sd, model.y_mean, model.y_sd = _standardization(dataset)
    model.feature_names = list(dataset.feature_names)
    Xs = model.standardize(dataset.X)
    ys = (dataset.Y - model.y_mean) / model.y_sd
    A = dataset.A.astype(np.float64)
    model.reference_X = Xs.copy()

    if kind == "tnn":
        per_arm = []
        for name, arm in (("f1", 1), ("f0", 0)):
            sel = np.flatnonzero(dataset.A == arm)
            net = model.nets[name]
            Xa, ya = Xs[sel], ys[sel]
            trace = []

            def step(idx, net=net, Xa=Xa, ya=ya):
                loss, g = _net_mse(net, Xa[idx], ya[idx], "train", rng)
                return loss + net.penalty(), {"arm": g}

            _train_loop(model, {"arm": (net.parameters(), None)}, len(sel), step, cfg, rng, trace)
            per_arm.append(np.asarray(trace))
        model.loss_trace = list(per_arm[0] + per_arm[1])
    else:
        groups = model.param_groups()

        def step(idx):
            return loss_and_grads(model, Xs[idx], A[idx], ys[idx], rng)

        _train_loop(model, groups, dataset.N, step, cfg, rng, model.loss_trace)
    model.fitted = True
    return model


# ----------------------------------------------------------------------------
# prediction


def robinson_predict(model: CausalModel, X, A, mode="eval", rng=None):
    """(mu_hat, tau_hat, y_hat) on the outcome scale, y_hat = mu_hat + tau_hat * A."""
    if model.kind not in ROBINSON_KINDS:
        raise UnsupportedOperationError(f"robinson_predict is not defined for {model.kind}")
    A = np.asarray(A, dtype=np.float64).reshape(-1)
    Xs = model.standardize(X)
    if A.shape[0] != Xs.shape[0]:
        raise ShapeError("A and X lengths differ")
    rp = _robinson_pass(model, Xs, mode, rng)
    mu_hat = model.y_mean + model.y_sd * rp.mu
    tau_hat = model.y_sd * rp.tau
    return mu_hat, tau_hat, mu_hat + tau_hat * A


@dataclass
class IcnnOutput:
    mu_hat: np.ndarray
    tau_hat: np.ndarray
    y_hat: np.ndarray
    mu_parts: np.ndarray  # N x P, outcome units
    tau_parts: np.ndarray
    mu_bias: float
    tau_bias: float


def icnn_forward(model: CausalModel, X, A, mode="eval", rng=None) -> IcnnOutput:
    """ICNN prediction with every per-feature contribution mu_j(x_ij), tau_j(x_ij).

    mu_hat = mu_bias + sum_j mu_parts[:, j] and likewise for tau.
    """
    if model.kind != "icnn":
        raise UnsupportedOperationError("icnn_forward requires an icnn model")
    A = np.asarray(A, dtype=np.float64).reshape(-1)
    Xs = model.standardize(X)
    if A.shape[0] != Xs.shape[0]:
        raise ShapeError("A and X lengths differ")
    rp = _robinson_pass(model, Xs, mode, rng)
    s = model.y_sd
    mu_parts = s * rp.mu_parts
    tau_parts = s * rp.tau_parts
    mu_bias = model.y_mean + s * model.global_bias[0]
    tau_bias = s * model.global_bias[1]
    mu_hat = mu_bias + mu_parts.sum(axis=1)
    tau_hat = tau_bias + tau_parts.sum(axis=1)
    return IcnnOutput(mu_hat, tau_hat, mu_hat + tau_hat * A, mu_parts, tau_parts, mu_bias, tau_bias)


def _cate_std(model: CausalModel, Xs, mode="eval", rng=None):
    """CATE in standardised outcome units (before multiplying by sd(Y))."""
    kind = model.kind
    if kind == "snn":
        net = model.nets["f"]
        n = Xs.shape[0]
        # one pass over stacked counterfactual inputs so mc draws share a mask
        both = np.vstack([np.column_stack([Xs, np.ones(n)]), np.column_stack([Xs, np.zeros(n)])])
        out, _ = forward(net, both, mode, rng)
        return out[:n, 0] - out[n:, 0]
    if kind == "tnn":
        f1, _ = forward(model.nets["f1"], Xs, mode, rng)
        f0, _ = forward(model.nets["f0"], Xs, mode, rng)
        return f1[:, 0] - f0[:, 0]
    return _robinson_pass(model, Xs, mode, rng).tau


def predict_cate(model: CausalModel, X) -> np.ndarray:
    if not model.fitted:
        raise StateError("model has not been fitted")
    return model.y_sd * _cate_std(model, model.standardize(X))


def predict_arms(model: CausalModel, X, mode="eval", rng=None):
    """Predicted potential outcomes (y(0), y(1)) on the outcome scale."""
    Xs = model.standardize(X)
    n = Xs.shape[0]
    if model.kind == "snn":
        # same stacking and draw order as _cate_std, so seeded draws agree
        both = np.vstack([np.column_stack([Xs, np.ones(n)]), np.column_stack([Xs, np.zeros(n)])])
        out, _ = forward(model.nets["f"], both, mode, rng)
        y1, y0 = out[:n, 0], out[n:, 0]
    elif model.kind == "tnn":
        y1 = forward(model.nets["f1"], Xs, mode, rng)[0][:, 0]
        y0 = forward(model.nets["f0"], Xs, mode, rng)[0][:, 0]
    else:
        rp = _robinson_pass(model, Xs, mode, rng)
        y0, y1 = rp.mu, rp.mu + rp.tau
    return model.y_mean + model.y_sd * y0, model.y_mean + model.y_sd * y1


# ----------------------------------------------------------------------------
# score functions


@dataclass
class ScoreFunction:
    """Additive contribution of one feature to mu or tau, evaluated on a grid.

    Point curves carry lower == upper == mean and ``level=None``.
    """

    feature: int
    name: str
    kind: str  # "mu" or "tau"
    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: Optional[float] = None


def _require_icnn(model, what="score functions"):
    if model.kind != "icnn":
        raise UnsupportedOperationError(f"{what} require icnn (got {model.kind})")


def feature_curves(model: CausalModel, feature: int, grid, mode="eval", rng=None):
    """Centred mu_j and tau_j curves on ``grid`` (outcome units).

    Each subnet is evaluated on the grid and on the training marginal of
    feature j in a single pass, so under ``mc_sample`` both share one dropout
    mask and the centring constant belongs to the same sampled function.
    """
    _require_icnn(model)
    if model.reference_X is None:
        raise StateError("model has no training reference sample for centring")
    P = model.n_features
    if not 0 <= feature < P:
        raise InputError(f"feature index {feature} out of range [0, {P})")
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if grid.size == 0 or not np.all(np.isfinite(grid)):
        raise InputError("grid must be a nonempty finite vector")
    g_std = (grid - model.x_mean[feature]) / model.x_sd[feature]
    ref = model.reference_X[:, feature]
    Z = np.zeros((grid.size + ref.size, P))
    Z[:, feature] = np.concatenate([g_std, ref])
    L = grid.size
    curves = []
    for name in ("mu", "tau"):
        out, _ = forward(model.nets[name], Z, mode, rng)
        col = model.y_sd * out[:, feature]
        curves.append(col[:L] - col[L:].mean())
    return curves[0], curves[1]


def default_grid(model: CausalModel, feature: int, points: int = 100) -> np.ndarray:
    raw = model.reference_X[:, feature] * model.x_sd[feature] + model.x_mean[feature]
    return np.linspace(raw.min(), raw.max(), points)


def score_functions(model: CausalModel, feature_grids=None) -> list:
    """Mean-centred (mu_j, tau_j) ScoreFunction pairs for every feature."""
    _require_icnn(model)
    if feature_grids is None:
        feature_grids = [default_grid(model, j) for j in range(model.n_features)]
    if len(feature_grids) != model.n_features:
        raise InputError("need one grid per feature")
    out = []
    for j, grid in enumerate(feature_grids):
        grid = np.asarray(grid, dtype=np.float64)
        mu_c, tau_c = feature_curves(model, j, grid)
        name = model.feature_names[j]
        out.append(tuple(
            ScoreFunction(j, name, k, grid, c, c.copy(), c.copy()) for k, c in (("mu", mu_c), ("tau", tau_c))
        ))
    return out
