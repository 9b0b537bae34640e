"""Projected-gradient training, evaluation metrics and multi-seed stability runs."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import statistics
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .autograd import implicit_gradients
from .equilibrium import Activation, SolverError
from .data import SplitSpec, substream
from .hypergraph import Hypergraph, PropagationOperator, build_operator
from .linalg import DTYPE, as_dense, power_iteration_abs
from .model import (ModelParams, SolverConfig, cross_entropy_masked, forward,
                    init_params, project_inf_ball)

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "train_loss", "val_loss", "val_acc", "test_acc", "macro_f1",
                  "forward_iters", "adjoint_iters", "lambda_abs_w")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 300
    kappa: float = 0.9
    hidden_dim: int = 128
    dropout: float = 0.5
    optimizer: str = "adam"
    seed: int = 0
    tol: float = 1e-6
    max_iters: int = 300
    activation: str = "relu"
    warm_start: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.kappa < 1.0:
            raise ValueError("kappa must lie in [0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.epochs < 0 or self.hidden_dim < 1:
            raise ValueError("epochs must be >= 0 and hidden_dim >= 1")
        Activation.parse(self.activation)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        out = {}
        for k, v in d.items():
            typ = type(getattr(cls, k)) if hasattr(cls, k) else str
            if isinstance(v, str) and typ is bool:
                v = v.strip().lower() in ("1", "true", "yes", "on")
            out[k] = typ(v)
        return cls(**out)

    @property
    def act(self) -> Activation:
        return Activation.parse(self.activation)

    @property
    def solver(self) -> SolverConfig:
        # training may brush the boundary between an update and its projection
        return SolverConfig(self.tol, self.max_iters, strict=False)


@dataclass
class MetricsRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    test_acc: float
    macro_f1: float
    forward_iters: int
    adjoint_iters: int
    lambda_abs_w: float


# ---------------------------------------------------------------------------
# metrics


def confusion_matrix(y_true, y_pred, num_classes: int | None = None) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    k = num_classes or int(max(y_true.max(initial=-1), y_pred.max(initial=-1)) + 1)
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def accuracy_and_macro_f1(y_true, y_pred) -> tuple[float, float]:
    """Accuracy and macro F1 over the classes present in either labels or predictions."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ValueError("cannot score an empty selection")
    cm = confusion_matrix(y_true, y_pred)
    tp = np.diag(cm).astype(DTYPE)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    present = (support + predicted) > 0
    denom = (support + predicted).astype(DTYPE)
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(tp.sum() / y_true.size), float(f1[present].mean())


def evaluate(params: ModelParams, g: Hypergraph | PropagationOperator, x, labels, mask,
             act: Activation = Activation("relu"),
             solver: SolverConfig = SolverConfig()) -> tuple[float, float]:
    op = g if isinstance(g, PropagationOperator) else build_operator(g)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise ValueError("evaluation mask is empty")
    pred, _ = forward(x, op, params, act, solver)
    return accuracy_and_macro_f1(np.asarray(labels)[idx], pred.argmax()[idx])


# ---------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k in params:
            params[k] -= self.lr * grads[k]


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# training loop


def train(g: Hypergraph | PropagationOperator, x, labels, splits: SplitSpec,
          cfg: TrainConfig, num_classes: int | None = None,
          params: ModelParams | None = None) -> tuple[ModelParams, list[MetricsRecord]]:
    """Projected-gradient training; returns the best-validation parameters and the trace.

    Each epoch: dropout on the inputs, forward solve, masked cross-entropy on the
    training nodes, adjoint solve, optimizer step on (W, Theta1, Theta2, b) and
    projection of W onto ``||W||_inf <= kappa``.
    """
    op = g if isinstance(g, PropagationOperator) else build_operator(g)
    x = as_dense(x)
    labels = np.asarray(labels, dtype=np.int64)
    if x.shape[0] != op.n or labels.shape[0] != op.n:
        raise ValueError("features, labels and hypergraph must cover the same nodes")
    if splits.train.size == 0:
        raise ValueError("empty training split")
    c = num_classes or int(labels.max()) + 1
    act, solver = cfg.act, cfg.solver
    if params is None:
        params = init_params(x.shape[1], cfg.hidden_dim, c, cfg.kappa, substream(cfg.seed, "init"))
    else:
        params = params.copy()
    best = params.copy()
    history: list[MetricsRecord] = []
    if cfg.epochs == 0:
        return best, history

    drop_rng = substream(cfg.seed, "dropout")
    opt = Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)
    arrays = params.arrays()
    z_train = z_eval = None
    best_key = (-1.0, -math.inf)
    keep = 1.0 - cfg.dropout
    for epoch in range(1, cfg.epochs + 1):
        if cfg.dropout > 0:
            x_in = x * (drop_rng.random(x.shape) < keep) / keep
        else:
            x_in = x
        try:
            pred, sol = forward(x_in, op, params, act, solver, init=z_train)
            loss, dlogits = cross_entropy_masked(pred, labels, splits.train)
            grads = implicit_gradients(x_in, op, params.w, params.theta2, sol, act, dlogits)
        except SolverError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}") from exc
        if cfg.warm_start:
            z_train = sol.z_star
        opt.step(arrays, {"w": grads.grad_w, "theta1": grads.grad_theta1,
                          "theta2": grads.grad_theta2, "b": grads.grad_b})
        params.w[...] = project_inf_ball(params.w, cfg.kappa)

        try:
            ev_pred, ev_sol = forward(x, op, params, act, solver, init=z_eval)
        except SolverError as exc:
            raise TrainingError(f"epoch {epoch} (evaluation): {exc}") from exc
        if cfg.warm_start:
            z_eval = ev_sol.z_star
        yhat = ev_pred.argmax()
        if splits.val.size:
            val_acc = accuracy_and_macro_f1(labels[splits.val], yhat[splits.val])[0]
            val_loss = cross_entropy_masked(ev_pred, labels, splits.val)[0]
        else:
            val_acc = val_loss = math.nan
        test_acc, f1 = (accuracy_and_macro_f1(labels[splits.test], yhat[splits.test])
                        if splits.test.size else (math.nan, math.nan))
        rec = MetricsRecord(epoch, loss, val_loss, val_acc, test_acc, f1, sol.iterations,
                            len(grads.adjoint_residuals),
                            power_iteration_abs(params.w, 50, 1e-8).value)
        history.append(rec)
        # accuracy first; on small validation sets many epochs tie, so lower loss breaks ties
        if splits.val.size and (val_acc, -val_loss) > best_key:
            best_key = (val_acc, -val_loss)
            best = params.copy()
        log.debug("epoch %d loss %.4f val %.4f test %.4f", epoch, loss, val_acc, test_acc)
    if not splits.val.size:
        best = params.copy()
    return best, history


def write_metrics_csv(records: list[MetricsRecord], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(METRIC_COLUMNS)
        for r in records:
            wr.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.val_acc), repr(r.test_acc),
                         repr(r.macro_f1), r.forward_iters, r.adjoint_iters, repr(r.lambda_abs_w)])


def read_metrics_csv(path: str | os.PathLike) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [MetricsRecord(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]),
                          float(r["val_acc"]),
                          float(r["test_acc"]), float(r["macro_f1"]), int(r["forward_iters"]),
                          int(r["adjoint_iters"]), float(r["lambda_abs_w"])) for r in rows]


# ---------------------------------------------------------------------------
# stability harness


@dataclass
class MetricSummary:
    mean: float
    std: float
    ci_low: float
    ci_high: float
    values: list[float] = field(default_factory=list)


@dataclass
class StabilityReport:
    seeds: list[int]
    metrics: dict[str, MetricSummary]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def summarize(values) -> MetricSummary:
    """Mean, sample standard deviation and normal-approximation 95% interval."""
    v = [float(a) for a in values]
    if len(v) < 2:
        raise ValueError("need at least two values")
    # the statistics module sums exactly, so identical values give std 0 and mean unchanged
    mean = statistics.fmean(v) if len(set(v)) > 1 else v[0]
    std = statistics.stdev(v)
    half = statistics.NormalDist().inv_cdf(0.975) * std / math.sqrt(len(v))
    return MetricSummary(mean, std, mean - half, mean + half, v)


def final_scores(params: ModelParams, op: PropagationOperator, x, labels, splits: SplitSpec,
                 cfg: TrainConfig) -> dict[str, float]:
    acc, f1 = evaluate(params, op, x, labels, splits.test, cfg.act, cfg.solver)
    return {"accuracy": acc, "f1": f1}


def repeat_runs(cfg: TrainConfig, seeds, g, x, labels, splits: SplitSpec | None = None,
                split_fn=None, num_classes: int | None = None) -> StabilityReport:
    """Train once per seed and summarize test accuracy and macro F1 of the selected model.

    Either pass fixed ``splits`` or ``split_fn(seed) -> SplitSpec`` for per-seed splits.
    """
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ValueError("repeat_runs needs at least two seeds")
    op = g if isinstance(g, PropagationOperator) else build_operator(g)
    scores: dict[str, list[float]] = {"accuracy": [], "f1": []}
    for s in seeds:
        run_cfg = TrainConfig(**{**asdict(cfg), "seed": s})
        sp_ = splits if splits is not None else split_fn(s)
        params, _ = train(op, x, labels, sp_, run_cfg, num_classes)
        for k, v in final_scores(params, op, x, labels, sp_, run_cfg).items():
            scores[k].append(v)
    return StabilityReport(seeds, {k: summarize(v) for k, v in scores.items()})
