"""The implicit hypergraph model: affine input map, equilibrium layer, linear readout."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .equilibrium import (DEFAULT_MAX_ITERS, DEFAULT_TOL, Activation, EquilibriumSolution,
                          solve_forward)
from .hypergraph import PropagationOperator
from .linalg import DTYPE, as_dense

CHECKPOINT_FORMAT = "ihgnn-checkpoint"
CHECKPOINT_VERSION = 1
# rows whose l1 norm exceeds the radius by less than this are left untouched,
# which keeps the projection bitwise idempotent under rounding
PROJECTION_SLACK = 1e-13


@dataclass
class ModelParams:
    w: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    b: np.ndarray
    kappa: float = 0.9

    def __post_init__(self):
        self.w = as_dense(self.w)
        self.theta1 = as_dense(self.theta1)
        self.theta2 = as_dense(self.theta2)
        self.b = np.asarray(self.b, dtype=DTYPE).reshape(-1)
        dh = self.w.shape[0]
        if self.w.shape != (dh, dh):
            raise ValueError(f"W must be square, got {self.w.shape}")
        if self.theta1.shape[1] != dh or self.theta2.shape[0] != dh or self.b.shape != (dh,):
            raise ValueError("theta1 (d x dh), theta2 (dh x d'), b (dh,) must agree with W (dh x dh)")
        if not 0.0 <= self.kappa < 1.0:
            raise ValueError(f"kappa must lie in [0, 1), got {self.kappa}")

    @property
    def hidden_dim(self) -> int:
        return self.w.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.w.copy(), self.theta1.copy(), self.theta2.copy(),
                           self.b.copy(), self.kappa)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "theta1": self.theta1, "theta2": self.theta2, "b": self.b}


@dataclass
class Prediction:
    logits: np.ndarray
    probabilities: np.ndarray

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> "Prediction":
        return cls(logits, softmax(logits))

    def argmax(self) -> np.ndarray:
        return np.argmax(self.logits, axis=1)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    strict: bool = True


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def affine_input(x, params: ModelParams) -> np.ndarray:
    """``X Theta1 + 1 b^T``."""
    x = as_dense(x)
    if x.shape[1] != params.theta1.shape[0]:
        raise ValueError(f"features have width {x.shape[1]}, theta1 expects {params.theta1.shape[0]}")
    return x @ params.theta1 + params.b[None, :]


def forward(x, op: PropagationOperator, params: ModelParams, act: Activation,
            solver: SolverConfig = SolverConfig(), init=None
            ) -> tuple[Prediction, EquilibriumSolution]:
    x_tilde = affine_input(x, params)
    sol = solve_forward(op, params.w, x_tilde, act, solver.tol, solver.max_iters,
                        init=init, strict=solver.strict)
    return Prediction.from_logits(sol.z_star @ params.theta2), sol


def _mask_indices(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64).ravel()
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError("mask index out of range")
    return idx


def cross_entropy_masked(pred: Prediction, labels, mask) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the masked nodes and its gradient w.r.t. the logits."""
    n, c = pred.logits.shape
    idx = _mask_indices(mask, n)
    y = np.asarray(labels)[idx].astype(np.int64)
    if y.min() < 0 or y.max() >= c:
        raise ValueError(f"labels on masked nodes must lie in [0, {c})")
    logp = log_softmax(pred.logits[idx])
    loss = float(-logp[np.arange(idx.size), y].mean())
    grad = np.zeros_like(pred.logits)
    g = np.exp(logp)
    g[np.arange(idx.size), y] -= 1.0
    grad[idx] = g / idx.size
    return loss, grad


def project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto the l1 ball of ``radius``.

    Sort-based soft-thresholding; rows already inside the ball are returned as-is.
    """
    v = np.atleast_2d(np.asarray(v, dtype=DTYPE))
    out = v.copy()
    if radius <= 0.0:
        return np.zeros_like(v)
    a = np.abs(v)
    outside = a.sum(axis=1) > radius + PROJECTION_SLACK
    if not outside.any():
        return out
    rows = a[outside]
    u = -np.sort(-rows, axis=1)
    css = np.cumsum(u, axis=1)
    j = np.arange(1, u.shape[1] + 1, dtype=DTYPE)
    active = u - (css - radius) / j > 0
    # the largest entry is always in the support; rounding can hide it for tiny radii
    active[:, 0] = True
    rho = u.shape[1] - 1 - np.argmax(active[:, ::-1], axis=1)
    theta = (css[np.arange(u.shape[0]), rho] - radius) / (rho + 1.0)
    out[outside] = np.sign(v[outside]) * np.maximum(rows - theta[:, None], 0.0)
    return out


def project_inf_ball(w, kappa: float) -> np.ndarray:
    """Frobenius-nearest matrix with max absolute row sum at most ``kappa``.

    Any radius ``kappa >= 0`` is accepted; the training budget itself keeps ``kappa < 1``.
    """
    if not kappa >= 0.0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    return project_l1_ball(as_dense(w), kappa)


def init_params(d: int, hidden: int, out: int, kappa: float,
                rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform Theta1/Theta2, uniform W projected into the kappa-ball, zero bias."""
    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    theta1 = glorot(d, hidden)
    w = project_inf_ball(glorot(hidden, hidden), kappa)
    theta2 = glorot(hidden, out)
    return ModelParams(w, theta1, theta2, np.zeros(hidden), kappa)


def scale_params(params: ModelParams, alpha: float) -> ModelParams:
    """Uniform rescaling ``(aW, aTheta1, ab, Theta2/a)``."""
    return ModelParams(alpha * params.w, alpha * params.theta1, params.theta2 / alpha,
                       alpha * params.b, params.kappa)


def scale_input_side(params: ModelParams, alpha: float) -> ModelParams:
    """``(W, aTheta1, ab, Theta2/a)``: for positively homogeneous activations and
    ``a > 0`` the equilibrium scales to ``a Z*`` and the logits are unchanged."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return ModelParams(params.w.copy(), alpha * params.theta1, params.theta2 / alpha,
                       alpha * params.b, params.kappa)


def perron_rescale(params: ModelParams, eps: float = 1e-9) -> tuple[ModelParams, np.ndarray]:
    """Equivalent parameters with ``||W~||_inf`` close to ``lambda_max(|W|)``.

    Uses the diagonal similarity ``S = diag(v)`` built from the Perron vector of
    ``|W| + eps 11^T``: ``W~ = S^-1 W S``, ``Theta1~ = Theta1 S``, ``b~ = S b``,
    ``Theta2~ = S^-1 Theta2``. With a positively homogeneous activation the
    equilibrium becomes ``Z* S`` and the logits are unchanged. Returns the new
    parameters and the scaling vector.
    """
    absw = np.abs(params.w) + eps
    vals, vecs = np.linalg.eig(absw)
    k = int(np.argmax(vals.real))
    v = np.abs(vecs[:, k].real)
    v = v / v.max()
    new = ModelParams(params.w * v[None, :] / v[:, None], params.theta1 * v[None, :],
                      params.theta2 / v[:, None], params.b * v, params.kappa)
    return new, v


def save_checkpoint(path: str | os.PathLike, params: ModelParams, act: Activation,
                    extra: dict | None = None) -> None:
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kappa": params.kappa,
        "activation": str(act),
        "shapes": {k: list(a.shape) for k, a in params.arrays().items()},
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **params.arrays())


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, Activation, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not an IHGNN checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        arrays = {k: data[k].copy() for k in ("w", "theta1", "theta2", "b")}
    for k, shape in meta["shapes"].items():
        if list(arrays[k].shape) != shape:
            raise ValueError(f"checkpoint array {k} has shape {arrays[k].shape}, header says {shape}")
    params = ModelParams(kappa=meta["kappa"], **arrays)
    return params, Activation.parse(meta["activation"]), meta.get("extra", {})

