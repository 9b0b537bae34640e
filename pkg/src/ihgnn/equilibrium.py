"""Fixed-point solver for ``Z = phi(M Z W + X_tilde)`` and the explicit-stack reference."""
from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .hypergraph import PropagationOperator
from .linalg import DTYPE, as_dense, power_iteration_abs, spmm

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 300
# precondition check on lambda_max(|W|)
CONTRACTION_ITERS = 50
CONTRACTION_TOL = 1e-8


class SolverError(RuntimeError):
    pass


class ContractionError(SolverError):
    def __init__(self, lam: float):
        super().__init__(f"lambda_max(|W|) estimated at {lam:.6g} >= 1; fixed point not guaranteed")
        self.lam = lam


class ContractionWarning(RuntimeWarning):
    pass


_KINDS = ("relu", "leaky_relu", "tanh", "identity")


@dataclass(frozen=True)
class Activation:
    """Entrywise 1-Lipschitz activation with its derivative."""

    kind: str = "relu"
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown activation {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "leaky_relu" and not 0.0 < self.slope <= 1.0:
            raise ValueError("leaky_relu slope must lie in (0, 1]")

    @classmethod
    def parse(cls, spec: str) -> "Activation":
        """``"relu"``, ``"tanh"``, ``"identity"``, ``"leaky_relu"`` or ``"leaky_relu:0.2"``."""
        kind, _, arg = spec.partition(":")
        return cls(kind, float(arg)) if arg else cls(kind)

    def __str__(self) -> str:
        return f"leaky_relu:{self.slope!r}" if self.kind == "leaky_relu" else self.kind

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "relu":
            return np.maximum(x, 0.0)
        if self.kind == "leaky_relu":
            return np.where(x > 0, x, self.slope * x)
        if self.kind == "tanh":
            return np.tanh(x)
        return x

    def derivative(self, x: np.ndarray) -> np.ndarray:
        # kink convention: derivative at 0 takes the left-hand value
        if self.kind == "relu":
            return (x > 0).astype(DTYPE)
        if self.kind == "leaky_relu":
            return np.where(x > 0, 1.0, self.slope)
        if self.kind == "tanh":
            return 1.0 - np.tanh(x) ** 2
        return np.ones_like(x, dtype=DTYPE)

    @property
    def positively_homogeneous(self) -> bool:
        return self.kind != "tanh"

    @property
    def strictly_increasing(self) -> bool:
        return self.kind != "relu"


@dataclass
class EquilibriumSolution:
    z_star: np.ndarray
    pre_activation: np.ndarray
    residuals: list[float]
    iterations: int
    converged: bool
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    lambda_abs_w: float = field(default=float("nan"))


def check_contraction(w: np.ndarray, strict: bool = True) -> float:
    """Return the lambda_max(|W|) estimate; raise or warn if it is not below 1."""
    lam = power_iteration_abs(w, CONTRACTION_ITERS, CONTRACTION_TOL).value
    if lam >= 1.0:
        if strict:
            raise ContractionError(lam)
        warnings.warn(f"lambda_max(|W|) = {lam:.6g} >= 1", ContractionWarning, stacklevel=3)
    return lam


def fixed_point_map(op: PropagationOperator, w: np.ndarray, x_tilde: np.ndarray,
                    act: Activation, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pre = spmm(op.m, z) @ w + x_tilde
    return act(pre), pre


def solve_forward(op: PropagationOperator, w, x_tilde, act: Activation,
                  tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
                  init=None, strict: bool = True, check: bool = True) -> EquilibriumSolution:
    """Picard iteration ``Z <- phi(M Z W + X_tilde)`` from ``init`` (zeros by default).

    Residual ``t`` is ``||Z^(t) - Z^(t-1)||_F``. Iteration stops at the first
    residual ``<= tol``. ``iterations`` counts map applications.
    """
    w = as_dense(w)
    x_tilde = as_dense(x_tilde)
    n, dh = x_tilde.shape
    if w.shape != (dh, dh):
        raise ValueError(f"W must be {dh}x{dh}, got {w.shape}")
    if op.n != n:
        raise ValueError(f"operator has {op.n} nodes, features have {n} rows")
    lam = check_contraction(w, strict) if check else float("nan")

    z = np.zeros((n, dh), dtype=DTYPE) if init is None else np.array(as_dense(init), copy=True)
    if z.shape != (n, dh):
        raise ValueError(f"init must be {n}x{dh}, got {z.shape}")
    residuals: list[float] = []
    converged = False
    for _ in range(max_iters):
        z_next, _pre = fixed_point_map(op, w, x_tilde, act, z)
        r = float(np.linalg.norm(z_next - z))
        if not np.isfinite(r):
            raise SolverError(f"non-finite iterate after {len(residuals) + 1} iterations")
        residuals.append(r)
        z = z_next
        if r <= tol:
            converged = True
            break
    pre = spmm(op.m, z) @ w + x_tilde
    return EquilibriumSolution(z, pre, residuals, len(residuals), converged, tol, max_iters, lam)


def convergence_rate_fit(residuals, floor: float = 1e-14) -> float:
    """Geometric rate ``exp(slope)`` of a least-squares line through ``log(residual)``.

    Residuals at or below ``floor`` are discarded.
    """
    r = np.asarray(residuals, dtype=DTYPE)
    t = np.arange(1, r.size + 1, dtype=DTYPE)
    keep = r > floor
    if keep.sum() < 4:
        raise ValueError(f"need >= 4 residuals above {floor:g}, got {int(keep.sum())}")
    slope = np.polyfit(t[keep], np.log(r[keep]), 1)[0]
    return float(np.exp(slope))


def unroll_explicit(op: PropagationOperator, w, x, act: Activation, layers: int,
                    return_all: bool = False):
    """Stack ``layers`` shared-weight layers ``X <- phi(M X W)``."""
    if layers < 1:
        raise ValueError("layers must be >= 1")
    w, out = as_dense(w), as_dense(x)
    if out.shape[1] != w.shape[0]:
        raise ValueError(f"feature width {out.shape[1]} does not match W {w.shape}")
    history = []
    for _ in range(layers):
        out = act(spmm(op.m, out) @ w)
        if return_all:
            history.append(out)
    return history if return_all else out


def write_residuals_csv(residuals, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "residual"])
        for t, r in enumerate(residuals, 1):
            wr.writerow([t, repr(float(r))])
