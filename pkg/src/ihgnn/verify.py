"""Self-contained numerical checks of the model's guarantees on seeded synthetic instances."""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autograd import implicit_gradients
from .equilibrium import Activation, convergence_rate_fit, solve_forward
from .hypergraph import Hypergraph, build_operator, random_hypergraph, row_stochastic_check
from .linalg import frobenius_distance, max_row_abs_sum, power_iteration_abs
from .model import (ModelParams, SolverConfig, cross_entropy_masked, forward,
                    perron_rescale, project_inf_ball, scale_input_side, scale_params)
from .theory import (C0, BoundInputs, PolynomialFilter, expressivity_construct,
                     generalization_bound, oversmoothing_profile)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


@dataclass
class VerifyContext:
    seed: int = 0
    K: int = 3
    hypergraph: Hypergraph | None = None
    extra: dict = field(default_factory=dict)


def _rng(ctx: VerifyContext, name: str) -> np.random.Generator:
    return np.random.default_rng([ctx.seed, sum(map(ord, name))])


def random_weight(rng, dh: int, norm: float) -> np.ndarray:
    """Random ``dh x dh`` matrix rescaled to ``||W||_inf = norm``."""
    w = rng.uniform(-1.0, 1.0, size=(dh, dh))
    return w * (norm / max_row_abs_sum(w))


def random_params(rng, d: int, dh: int, dout: int, w_norm: float) -> ModelParams:
    return ModelParams(random_weight(rng, dh, w_norm), rng.normal(size=(d, dh)) / math.sqrt(d),
                       rng.normal(size=(dh, dout)) / math.sqrt(dh), rng.normal(size=dh) * 0.5,
                       kappa=min(w_norm, 0.99))


def check_rowsum(ctx: VerifyContext) -> CheckResult:
    rng = _rng(ctx, "rowsum")
    graphs = [ctx.hypergraph] if ctx.hypergraph is not None else [
        random_hypergraph(int(rng.integers(2, 201)), int(rng.integers(1, 120)), rng) for _ in range(20)]
    worst_row, worst_lam = 0.0, 0.0
    for g in graphs:
        op = build_operator(g)
        worst_row = max(worst_row, row_stochastic_check(op))
        lam = power_iteration_abs(op.m, 5000, 1e-13).value
        worst_lam = max(worst_lam, abs(lam - 1.0))
    ok = worst_row <= 1e-10 and worst_lam <= 1e-6
    return CheckResult("rowsum", ok, f"{len(graphs)} graph(s): max|rowsum(P)-1|={worst_row:.2e}, "
                                     f"max|lambda_max(M)-1|={worst_lam:.2e}")


def check_convergence(ctx: VerifyContext) -> CheckResult:
    rng = _rng(ctx, "convergence")
    worst_gap, worst_env = -math.inf, 0.0
    for kappa in (0.5, 0.8, 0.95):
        for _ in range(3):
            op = build_operator(random_hypergraph(int(rng.integers(5, 60)), 20, rng))
            dh = int(rng.integers(2, 9))
            w = random_weight(rng, dh, kappa)
            x_tilde = rng.normal(size=(op.n, dh))
            sol = solve_forward(op, w, x_tilde, Activation("tanh"), tol=1e-12, max_iters=5000)
            r = np.asarray(sol.residuals)
            worst_gap = max(worst_gap, convergence_rate_fit(r) - kappa)
            worst_env = max(worst_env, float(np.max(r / (kappa ** np.arange(r.size) * r[0]))))
    ok = worst_gap <= 0.02 and worst_env <= 1.05
    return CheckResult("convergence", ok, f"max(rate - kappa)={worst_gap:+.4f}, "
                                          f"max residual/envelope={worst_env:.4f}")


def check_uniqueness(ctx: VerifyContext) -> CheckResult:
    rng = _rng(ctx, "uniqueness")
    tol = 1e-8
    op = build_operator(random_hypergraph(40, 25, rng))
    dh = 6
    w = random_weight(rng, dh, 0.9)
    x_tilde = rng.normal(size=(op.n, dh))
    za = rng.normal(size=(op.n, dh))
    delta = rng.normal(size=za.shape)
    zb = za + 10.0 * delta / np.linalg.norm(delta)
    act = Activation("tanh")
    a = solve_forward(op, w, x_tilde, act, tol, 5000, init=za)
    b = solve_forward(op, w, x_tilde, act, tol, 5000, init=zb)
    dist = frobenius_distance(a.z_star, b.z_star)
    return CheckResult("uniqueness", dist <= 10 * tol, f"||Z*_a - Z*_b||_F={dist:.2e} (bound {10 * tol:g})")


def check_nonconstant(ctx: VerifyContext) -> CheckResult:
    rng = _rng(ctx, "nonconstant")
    worst = math.inf
    for _ in range(20):
        op = build_operator(random_hypergraph(int(rng.integers(3, 40)), 15, rng))
        dh = int(rng.integers(1, 6))
        w = random_weight(rng, dh, 0.9)
        x_tilde = rng.normal(size=(op.n, dh))
        x_tilde[1] = x_tilde[0] + 0.1 * _unit(rng, dh)
        z = solve_forward(op, w, x_tilde, Activation("tanh"), 1e-12, 5000).z_star
        worst = min(worst, float(np.max(np.linalg.norm(z[:, None] - z[None], axis=2))))
    return CheckResult("nonconstant", worst > 1e-8, f"min over instances of max row distance={worst:.3e}")


def _unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def check_expressivity(ctx: VerifyContext) -> CheckResult:
    rng = _rng(ctx, "expressivity")
    k = ctx.K
    worst, worst_tail = 0.0, 0.0
    for _ in range(10):
        op = build_operator(random_hypergraph(30, 20, rng))
        d = 3
        theta = rng.normal(size=k + 1)
        x = rng.normal(size=(op.n, d))
        params = expressivity_construct(PolynomialFilter(tuple(theta)), d)
        pred, sol = forward(x, op, params, Activation("identity"), SolverConfig(1e-12, k + 5))
        m = op.m.toarray()
        target = sum(c * np.linalg.matrix_power(m, j) @ x for j, c in enumerate(theta))
        worst = max(worst, float(np.max(np.abs(pred.logits - target))))
        tail = sol.residuals[k + 1:]
        worst_tail = max(worst_tail, max(tail) if tail else math.inf)
    ok = worst <= 1e-8 and worst_tail < 1e-12
    return CheckResult("expressivity", ok, f"K={k}: max|logits - poly filter|={worst:.2e}, "
                                           f"residual after K+1 iterations={worst_tail:.1e}")


def check_scaling(ctx: VerifyContext) -> CheckResult:
    rng = _rng(ctx, "scaling")
    act = Activation("relu")
    solver = SolverConfig(1e-13, 5000)
    worst, worst_norm, literal = 0.0, -math.inf, 0.0
    for _ in range(10):
        op = build_operator(random_hypergraph(int(rng.integers(5, 40)), 15, rng))
        d, dh, c = (int(v) for v in rng.integers(1, 7, size=3))
        params = random_params(rng, d, dh, c, 0.9)
        # Perron similarity needs lambda_max(|W|) < 1, not ||W||_inf < 1
        params.w = params.w * (1.0 + 0.5 * rng.random())
        lam = power_iteration_abs(params.w, 5000, 1e-14).value
        if lam >= 1.0:
            params.w *= 0.95 / lam
            lam *= 0.95 / lam
        x = rng.normal(size=(op.n, d))
        base = forward(x, op, params, act, solver)[0].logits
        for alpha in (0.25, 0.5, 0.9):
            other = forward(x, op, scale_input_side(params, alpha), act, solver)[0].logits
            worst = max(worst, float(np.max(np.abs(other - base))))
            # scaling W along with the input side changes the equilibrium; reported, not gated
            lit = forward(x, op, scale_params(params, alpha), act, solver)[0].logits
            literal = max(literal, float(np.max(np.abs(lit - base))))
        resc, _ = perron_rescale(params)
        worst_norm = max(worst_norm, max_row_abs_sum(resc.w) - lam)
        other = forward(x, op, resc, act, solver)[0].logits
        worst = max(worst, float(np.max(np.abs(other - base))))
    ok = worst <= 1e-9 and worst_norm <= 1e-6
    return CheckResult("scaling", ok, f"max logit change={worst:.2e}; "
                                      f"max(||W~||_inf - lambda_max(|W|))={worst_norm:.1e}; "
                                      f"(aW, aTheta1, ab, Theta2/a) changes logits by up to {literal:.2e}")


def pipeline_loss(params: ModelParams, x, op, act, labels, mask, solver: SolverConfig) -> float:
    pred, _ = forward(x, op, params, act, solver)
    return cross_entropy_masked(pred, labels, mask)[0]


def finite_difference_errors(params: ModelParams, x, op, act, labels, mask,
                             eps: float = 1e-5, solver=SolverConfig(1e-14, 10000)):
    """Yield (analytic, numeric) pairs for every parameter entry."""
    pred, sol = forward(x, op, params, act, solver)
    _, dlogits = cross_entropy_masked(pred, labels, mask)
    bundle = implicit_gradients(x, op, params.w, params.theta2, sol, act, dlogits)
    analytic = {"w": bundle.grad_w, "theta1": bundle.grad_theta1,
                "theta2": bundle.grad_theta2, "b": bundle.grad_b}
    for name, arr in params.arrays().items():
        for idx in itertools.product(*map(range, arr.shape)):
            orig = arr[idx]
            arr[idx] = orig + eps
            up = pipeline_loss(params, x, op, act, labels, mask, solver)
            arr[idx] = orig - eps
            down = pipeline_loss(params, x, op, act, labels, mask, solver)
            arr[idx] = orig
            yield name, idx, analytic[name][idx], (up - down) / (2 * eps)


def check_gradients(ctx: VerifyContext) -> CheckResult:
    rng = _rng(ctx, "gradients")
    worst = 0.0
    for _ in range(3):
        n = int(rng.integers(3, 15))
        op = build_operator(random_hypergraph(n, 8, rng))
        d, dh, c = (int(v) for v in rng.integers(2, 6, size=3))
        params = random_params(rng, d, dh, c, 0.8)
        x = rng.normal(size=(n, d))
        labels = rng.integers(0, c, size=n)
        mask = rng.permutation(n)[: max(1, n // 2)]
        for _, _, a, f in finite_difference_errors(params, x, op, Activation("tanh"), labels, mask):
            worst = max(worst, abs(a - f) / max(1e-4 * abs(f), 1e-7))
    return CheckResult("gradients", worst <= 1.0,
                       f"max |analytic - FD| / max(1e-4 |FD|, 1e-7) = {worst:.3f}")


def check_projection(ctx: VerifyContext) -> CheckResult:
    rng = _rng(ctx, "projection")
    worst_feas, idem, optimal = -math.inf, True, True
    for _ in range(20):
        kappa = float(rng.uniform(0.0, 0.99))
        w = rng.normal(size=(3, 3)) * rng.uniform(0.1, 2.0)
        p = project_inf_ball(w, kappa)
        worst_feas = max(worst_feas, max_row_abs_sum(p) - kappa)
        idem &= np.array_equal(project_inf_ball(p, kappa), p)
        cands = rng.normal(size=(2000, 3, 3))
        cands *= (kappa * rng.random((2000, 3, 1))) / np.abs(cands).sum(axis=2, keepdims=True)
        d_best = np.linalg.norm(p - w)
        optimal &= bool(np.all(np.linalg.norm(cands - w, axis=(1, 2)) >= d_best - 1e-12))
    ok = worst_feas <= 1e-12 and idem and optimal
    return CheckResult("projection", ok, f"max(||W+||_inf - kappa)={worst_feas:.1e}, "
                                         f"idempotent={idem}, optimal={optimal}")


def check_bound(ctx: VerifyContext) -> CheckResult:
    base = BoundInputs(1000, 1000, 100, 1, 1, 1, 1, 1, 0.5, 0.1)
    terms = generalization_bound(base)
    doubled = generalization_bound(BoundInputs(2000, 2000, 100, 1, 1, 1, 1, 1, 0.5, 0.1))
    shrink = doubled.complexity / terms.complexity
    ok = C0 < 5.05 and abs(shrink - 1 / math.sqrt(2)) <= 1e-9
    return CheckResult("bound", ok, f"c0={C0:.6f}; complexity ratio under doubling={shrink:.12f}")


def check_oversmoothing(ctx: VerifyContext) -> CheckResult:
    rng = _rng(ctx, "oversmoothing")
    op = build_operator(random_hypergraph(20, 10, rng, connected=True))
    d = 4
    params = ModelParams(0.9 * np.eye(d), np.eye(d), np.eye(d), np.zeros(d), kappa=0.95)
    x = rng.normal(size=(op.n, d))
    rows = oversmoothing_profile(op, params, Activation("identity"), x, [1, 2, 4, 8, 16, 32, 64])
    explicit = [r.explicit_dispersion for r in rows]
    ok = explicit[-1] < 1e-3 * explicit[0] and rows[0].implicit_dispersion > 1e-8
    return CheckResult("oversmoothing", ok, f"explicit dispersion {explicit[0]:.3e} -> {explicit[-1]:.3e}, "
                                            f"implicit {rows[0].implicit_dispersion:.3e}")


CHECKS: dict[str, Callable[[VerifyContext], CheckResult]] = {
    "rowsum": check_rowsum,
    "convergence": check_convergence,
    "uniqueness": check_uniqueness,
    "nonconstant": check_nonconstant,
    "expressivity": check_expressivity,
    "scaling": check_scaling,
    "gradients": check_gradients,
    "projection": check_projection,
    "bound": check_bound,
    "oversmoothing": check_oversmoothing,
}


def run_checks(names=None, ctx: VerifyContext | None = None) -> list[CheckResult]:
    ctx = ctx or VerifyContext()
    names = list(CHECKS) if not names else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check(s) {unknown}; choose from {list(CHECKS)}")
    out = []
    for name in names:
        t0 = time.perf_counter()
        res = CHECKS[name](ctx)
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
