"""Full-step SQP on the smoothed KKT system of an OCP."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ipm import IpmSettings, solve_qp
from .nlp import EvaluationError, Iterate, KktResidual, Status
from .ocp import HessianMode, OcpDefinition, StageQpData, linearize_at


@dataclass(frozen=True)
class SqpSettings:
    tol: float = 1e-8
    max_iter: int = 100
    hessian: HessianMode = HessianMode()
    tau_min: float = 0.0
    # inner solver settings; tau_min is always taken from this object
    ipm: Optional[IpmSettings] = None
    # complementarity target; defaults to tol
    comp_tol: Optional[float] = None

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")
        if self.tau_min < 0:
            raise ValueError("tau_min must be nonnegative")
        if self.comp_tol is not None and self.comp_tol > self.tol:
            raise ValueError("comp_tol may not exceed tol")

    @property
    def comp_target(self) -> float:
        return self.tol if self.comp_tol is None else self.comp_tol

    @property
    def inner(self) -> IpmSettings:
        base = self.ipm or IpmSettings(tol=0.1 * self.tol)
        tol = min(base.tol, self.tol)
        comp = min(base.comp_target, self.comp_target)
        return dataclasses.replace(base, tau_min=self.tau_min, tol=tol, comp_tol=comp)


@dataclass
class SolveResult:
    w: Iterate
    status: Status
    sqp_iterations: int
    total_ipm_iterations: int
    residual: Optional[KktResidual]
    theta: np.ndarray
    tau_min: float
    residual_history: list = field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def residual_from_qp(qp: StageQpData, w: Iterate, tau: float) -> KktResidual:
    """Smoothed NLP residual from linearization data at ``w`` (zero step)."""
    stat = qp.q_flat + qp.mul_GT(w.lam) + qp.mul_HT(w.mu)
    return KktResidual(stat, qp.g_flat, qp.h_flat + w.s, w.mu * w.s - tau)


def kkt_residual(ocp: OcpDefinition, w: Iterate, theta, tau: float) -> KktResidual:
    """Smoothed KKT residual of the OCP, first derivatives only."""
    d = ocp.dims
    X, U = d.split_z(w.z)
    ev = ocp.evaluate(X, U, theta, hessian=False)
    stat = np.concatenate([ev.grad.reshape(-1), ev.grad_N])
    L = d.split_lam(w.lam)
    mu_p, mu_N = d.split_mu(w.mu)
    # G' lam
    ABt = np.einsum("nij,ni->nj", ev.jac_phi, L[1:])
    gx = np.zeros((d.N + 1, d.nx))
    gx[: d.N] += ABt[:, : d.nx]
    gx[1:] -= L[1:]
    gx[0] += L[0]
    stat = stat + d.join_z(gx, ABt[:, d.nx :])
    # H' mu
    hxu = np.einsum("nij,ni->nj", ev.jac_h, mu_p)
    stat = stat + np.concatenate([hxu.reshape(-1), ev.jac_h_N.T @ mu_N])
    eq = np.concatenate([X[0] - ocp.initial_state(theta), (ev.phi - X[1:]).reshape(-1)])
    ineq = np.concatenate([ev.h.reshape(-1), ev.h_N]) + w.s
    return KktResidual(stat, eq, ineq, w.mu * w.s - tau)


def check_convergence(ocp: OcpDefinition, w: Iterate, theta, tau_min: float, tol: float, comp_tol=None):
    res = kkt_residual(ocp, w, theta, tau_min)
    comp_tol = tol if comp_tol is None else comp_tol
    return (res.feas_norm <= tol and res.comp_norm <= comp_tol), res


def solve_nlp(
    ocp: OcpDefinition,
    theta,
    init: Optional[Iterate] = None,
    settings: SqpSettings = SqpSettings(),
) -> SolveResult:
    theta = np.asarray(theta, dtype=float).reshape(ocp.dims.n_theta)
    w = ocp.default_iterate(theta) if init is None else init.copy()
    d = ocp.dims
    if (w.z.size, w.lam.size, w.mu.size, w.s.size) != (d.n_z, d.n_g, d.n_h, d.n_h):
        raise ValueError("initial iterate dimensions do not match the OCP")
    if d.n_h and (np.any(w.mu <= 0) or np.any(w.s <= 0)):
        raise ValueError("initial mu and s must be strictly positive")
    inner = settings.inner
    ipm_total = 0
    history = []
    res = None
    status = Status.MAX_ITER
    message = ""
    it = 0
    for it in range(settings.max_iter + 1):
        try:
            qp = linearize_at(ocp, w, theta, settings.hessian)
        except EvaluationError as exc:
            status, message = Status.EVAL_FAIL, f"iteration {it}: {exc}"
            break
        res = residual_from_qp(qp, w, settings.tau_min)
        history.append(res.inf_norm)
        if not np.isfinite(res.inf_norm):
            status, message = Status.EVAL_FAIL, f"iteration {it}: non-finite residual"
            break
        if res.feas_norm <= settings.tol and res.comp_norm <= settings.comp_target:
            status = Status.CONVERGED
            break
        if it == settings.max_iter:
            break
        step, stats = solve_qp(qp, inner, warm=w)
        ipm_total += stats.iterations
        if stats.status is Status.BREAKDOWN:
            status, message = Status.BREAKDOWN, f"iteration {it}: QP factorization breakdown or divergence"
            break
        # full step; multipliers and slacks are taken from the QP solution
        w = Iterate(w.z + step.z, step.lam, step.mu, step.s)
    return SolveResult(w, status, it, ipm_total, res, theta, settings.tau_min, history, message)
