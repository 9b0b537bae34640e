"""Implicit differentiation through the equilibrium.

With ``A = M Z W + X_tilde`` and ``Z = phi(A)``, the loss gradient with respect
to the pre-activation, ``U = dL/dA``, solves the linear fixed point

    U = phi'(A) * (M^T U W^T + G),    G = dL/dZ (explicit, through the readout)

and the parameter gradients follow from ``A``'s dependence on each parameter.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import Activation, EquilibriumSolution, SolverError
from .hypergraph import PropagationOperator
from .linalg import DTYPE, as_dense, spmm


class AdjointError(SolverError):
    def __init__(self, message: str, residuals: list[float]):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class AdjointSolution:
    u: np.ndarray
    residuals: list[float]
    iterations: int


@dataclass
class GradientBundle:
    grad_w: np.ndarray
    grad_theta1: np.ndarray
    grad_theta2: np.ndarray
    grad_b: np.ndarray
    adjoint_residuals: list[float]

    def as_tuple(self):
        return self.grad_w, self.grad_theta1, self.grad_theta2, self.grad_b


def solve_adjoint(op: PropagationOperator, w, sol: EquilibriumSolution, act: Activation,
                  upstream, tol: float | None = None,
                  max_iters: int | None = None) -> AdjointSolution:
    """Solve ``U = phi'(pre) * (M^T U W^T + upstream)`` by fixed-point iteration from zero.

    ``tol``/``max_iters`` default to the forward solve's settings.
    """
    tol = sol.tol if tol is None else tol
    max_iters = sol.max_iters if max_iters is None else max_iters
    w = as_dense(w)
    g = as_dense(upstream)
    if g.shape != sol.z_star.shape:
        raise ValueError(f"upstream gradient shape {g.shape} != state shape {sol.z_star.shape}")
    dphi = act.derivative(sol.pre_activation)
    mt = op.m.T.tocsr()
    wt = w.T
    u = np.zeros_like(g)
    residuals: list[float] = []
    for _ in range(max_iters):
        u_next = dphi * (spmm(mt, u) @ wt + g)
        r = float(np.linalg.norm(u_next - u))
        if not np.isfinite(r):
            raise AdjointError("non-finite adjoint iterate", residuals)
        residuals.append(r)
        u = u_next
        if r <= tol:
            return AdjointSolution(u, residuals, len(residuals))
    raise AdjointError(f"adjoint did not reach tol={tol:g} in {max_iters} iterations "
                       f"(last residual {residuals[-1]:.3g})", residuals)


def parameter_gradients(x, op: PropagationOperator, sol: EquilibriumSolution, adjoint,
                        loss_grad_output, theta2=None) -> GradientBundle:
    """Assemble dL/dW = (M Z*)^T U, dL/dTheta1 = X^T U, dL/db = U^T 1, dL/dTheta2 = Z*^T dL/dY."""
    if isinstance(adjoint, AdjointSolution):
        u, res = adjoint.u, adjoint.residuals
    else:
        u, res = as_dense(adjoint), []
    x = as_dense(x)
    gy = as_dense(loss_grad_output)
    z = sol.z_star
    if u.shape != z.shape:
        raise ValueError(f"adjoint shape {u.shape} != state shape {z.shape}")
    if x.shape[0] != z.shape[0] or gy.shape[0] != z.shape[0]:
        raise ValueError("row counts of x, state and output gradient must agree")
    if theta2 is not None and as_dense(theta2).shape != (z.shape[1], gy.shape[1]):
        raise ValueError("theta2 shape inconsistent with state and output gradient")
    mz = spmm(op.m, z)
    return GradientBundle(
        grad_w=mz.T @ u,
        grad_theta1=x.T @ u,
        grad_theta2=z.T @ gy,
        grad_b=u.sum(axis=0),
        adjoint_residuals=list(res),
    )


def implicit_gradients(x, op: PropagationOperator, w, theta2, sol: EquilibriumSolution,
                       act: Activation, loss_grad_output, tol=None, max_iters=None) -> GradientBundle:
    """Chain the readout, the adjoint solve and gradient assembly."""
    gy = np.asarray(loss_grad_output, dtype=DTYPE)
    upstream = gy @ as_dense(theta2).T
    adj = solve_adjoint(op, w, sol, act, upstream, tol, max_iters)
    return parameter_gradients(x, op, sol, adj, gy, theta2)
