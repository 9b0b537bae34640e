"""Constructive results about the implicit hypergraph model, as executable code.

* a polynomial-filter construction realized exactly by an identity-activation model
* the transductive generalization bound, term by term
* row-dispersion profiles comparing explicit stacks with the equilibrium
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .equilibrium import Activation, solve_forward, unroll_explicit
from .hypergraph import PropagationOperator
from .linalg import DTYPE, as_dense
from .model import ModelParams, SolverConfig, affine_input

# sqrt(32 log(4e) / 3)
C0 = math.sqrt(32.0 * math.log(4.0 * math.e) / 3.0)


@dataclass(frozen=True)
class PolynomialFilter:
    coefficients: tuple[float, ...]

    def __post_init__(self):
        if len(self.coefficients) == 0:
            raise ValueError("a filter needs at least theta_0")
        if not all(math.isfinite(c) for c in self.coefficients):
            raise ValueError("filter coefficients must be finite")

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1


def expressivity_construct(filt: PolynomialFilter, d: int) -> ModelParams:
    """Parameters whose identity-activation equilibrium readout is ``sum_k theta_k M^k X``.

    Hidden width ``(K+1) d``; ``W`` shifts block ``k`` into block ``k+1``, so it
    is nilpotent (``lambda_max(|W|) = 0``) although ``||W||_inf = 1`` for
    ``K >= 1``. The returned ``kappa`` is 0; these parameters sit outside the
    infinity-norm training budget and must not be projected.
    """
    k = filt.order
    dh = (k + 1) * d
    w = np.zeros((dh, dh), dtype=DTYPE)
    for blk in range(k):
        w[blk * d:(blk + 1) * d, (blk + 1) * d:(blk + 2) * d] = np.eye(d)
    theta1 = np.zeros((d, dh), dtype=DTYPE)
    theta1[:, :d] = np.eye(d)
    theta2 = np.vstack([c * np.eye(d) for c in filt.coefficients])
    return ModelParams(w, theta1, theta2, np.zeros(dh), kappa=0.0)


@dataclass(frozen=True)
class BoundInputs:
    s: int
    u: int
    d: int
    rho1: float
    rho2: float
    c_x: float
    c_b: float
    c_ell: float
    kappa: float
    delta: float
    empirical_train_loss: float = 0.0

    def __post_init__(self):
        if self.s < 1 or self.u < 1:
            raise ValueError("s and u must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 <= self.kappa < 1.0:
            raise ValueError("kappa must lie in [0, 1)")
        if min(self.rho1, self.rho2, self.c_x, self.c_b, self.c_ell) < 0:
            raise ValueError("norm and Lipschitz constants must be nonnegative")


@dataclass(frozen=True)
class BoundTerms:
    empirical: float
    complexity: float
    sampling: float
    confidence: float

    @property
    def total(self) -> float:
        return self.empirical + self.complexity + self.sampling + self.confidence


def generalization_bound(inp: BoundInputs) -> BoundTerms:
    """Test-loss upper bound for transductive learning with ``s`` labeled / ``u`` unlabeled nodes."""
    s, u = inp.s, inp.u
    p = 1.0 / s + 1.0 / u
    q = (s + u) / ((s + u - 0.5) * (1.0 - 1.0 / (2 * max(s, u))))
    complexity = (math.sqrt(2.0) * inp.rho2 * inp.c_ell * (inp.rho1 * inp.c_x + math.sqrt(inp.d) * inp.c_b)
                  / ((1.0 - inp.kappa) * math.sqrt(s + u)))
    sampling = C0 * p * math.sqrt(min(s, u))
    confidence = math.sqrt(p * q / 2.0 * math.log(1.0 / inp.delta))
    return BoundTerms(inp.empirical_train_loss, complexity, sampling, confidence)


def row_dispersion(z) -> float:
    """Mean pairwise Euclidean distance between rows, divided by the row width."""
    z = as_dense(z)
    if z.shape[0] < 2 or z.shape[1] == 0:
        return 0.0
    return float(pdist(z).mean() / z.shape[1])


@dataclass(frozen=True)
class DispersionRow:
    depth: int
    explicit_dispersion: float
    implicit_dispersion: float


def oversmoothing_profile(op: PropagationOperator, params: ModelParams, act: Activation, x,
                          depths, solver: SolverConfig = SolverConfig(tol=1e-10, max_iters=5000)
                          ) -> list[DispersionRow]:
    """Dispersion of the explicit stack at each depth next to that of the equilibrium.

    Both start from the same affine input ``X Theta1 + 1 b^T`` and share ``W``.
    """
    depths = sorted({int(t) for t in depths})
    if not depths:
        raise ValueError("depths must be nonempty")
    if depths[0] < 1:
        raise ValueError("depths must be >= 1")
    x_tilde = affine_input(x, params)
    stack = unroll_explicit(op, params.w, x_tilde, act, depths[-1], return_all=True)
    sol = solve_forward(op, params.w, x_tilde, act, solver.tol, solver.max_iters, strict=solver.strict)
    implicit = row_dispersion(sol.z_star)
    return [DispersionRow(t, row_dispersion(stack[t - 1]), implicit) for t in depths]


def write_profile_csv(rows: list[DispersionRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["depth", "explicit_dispersion", "implicit_dispersion"])
        for r in rows:
            wr.writerow([r.depth, repr(r.explicit_dispersion), repr(r.implicit_dispersion)])
