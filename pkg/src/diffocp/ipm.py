"""Primal-dual interior-point method for the stage-structured QP.

The QP is posed in the step ``y = dz`` relative to the linearization point::

    min 1/2 y'Qy + q'y   s.t.   G y + g = 0,   H y + h + s = 0,   s >= 0

and the smoothed conditions ``mu_i s_i = tau`` are followed down to ``tau_min``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .nlp import Iterate, KktResidual, Status
from .ocp import StageQpData
from .riccati import FactorizationBreakdown, assemble_reduced, riccati_factorize, solve_full


@dataclass(frozen=True)
class IpmSettings:
    tau_min: float = 0.0
    tol: float = 1e-8
    max_iter: int = 500
    ftb_gamma: float = 0.995
    tau0: float = 1.0
    sigma: float = 0.1
    # complementarity target |mu_i s_i - tau_min|; defaults to tol
    comp_tol: Optional[float] = None
    # warm-started mu and s are lifted to at least this value
    warm_floor: float = 1e-6
    # multipliers beyond this mean the QP is infeasible and the iterates diverge
    mu_max: float = 1e20

    def __post_init__(self):
        if self.tau_min < 0:
            raise ValueError("tau_min must be nonnegative")
        if not self.tau_min < self.tau0:
            raise ValueError("tau_min must be below tau0")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0 < self.ftb_gamma < 1:
            raise ValueError("ftb_gamma must lie in (0, 1)")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.warm_floor < 0:
            raise ValueError("warm_floor must be nonnegative")

    @property
    def comp_target(self) -> float:
        return self.tol if self.comp_tol is None else self.comp_tol

    @property
    def tau_floor(self) -> float:
        """Smallest barrier value used; products far below the target only hurt conditioning."""
        return max(self.tau_min, 0.1 * self.comp_target)


@dataclass
class IpmStats:
    iterations: int
    final_tau: float
    final_residual: KktResidual
    status: Status
    tau_history: list = field(default_factory=list)


def fraction_to_boundary(s, mu, ds, dmu, gamma: float = 0.995) -> float:
    """Step ``min(1, gamma * alpha_max)`` where ``alpha_max`` reaches the boundary."""
    v = np.concatenate([np.asarray(s, float).ravel(), np.asarray(mu, float).ravel()])
    dv = np.concatenate([np.asarray(ds, float).ravel(), np.asarray(dmu, float).ravel()])
    neg = dv < 0
    if not neg.any():
        return 1.0
    alpha_max = float(np.min(-v[neg] / dv[neg]))
    return min(1.0, gamma * alpha_max)


def barrier_schedule(duality_measure: float, tau_min: float, sigma: float = 0.1) -> float:
    """Fixed centering: ``max(tau_min, sigma * duality_measure)``."""
    return max(tau_min, sigma * duality_measure)


def qp_residual(qp: StageQpData, y, lam, mu, s, tau: float) -> KktResidual:
    stat = qp.mul_Q(y) + qp.q_flat + qp.mul_GT(lam) + qp.mul_HT(mu)
    eq = qp.mul_G(y) + qp.g_flat
    ineq = qp.mul_H(y) + qp.h_flat + s
    return KktResidual(stat, eq, ineq, mu * s - tau)


def cold_start(qp: StageQpData, tau0: float = 1.0):
    s = np.maximum(1.0, -qp.h_flat + 1.0)
    return np.zeros(qp.dims.n_g), tau0 / s, s


def _converged(res: KktResidual, settings: IpmSettings) -> bool:
    return res.feas_norm <= settings.tol and res.comp_norm <= settings.comp_target


def solve_qp(qp: StageQpData, settings: IpmSettings = IpmSettings(), warm: Optional[Iterate] = None):
    """Solve the QP; the returned iterate holds ``dz`` in its ``z`` slot.

    ``warm`` supplies initial multipliers and slacks (its ``z`` is ignored since
    the QP is always posed around the linearization point).
    """
    dims = qp.dims
    n_h = dims.n_h
    y = np.zeros(dims.n_z)
    if warm is not None:
        if n_h and (np.any(warm.mu <= 0) or np.any(warm.s <= 0)):
            raise ValueError("warm start needs strictly positive mu and s")
        lam = warm.lam.copy()
        mu = np.maximum(warm.mu, settings.warm_floor)
        s = np.maximum(warm.s, settings.warm_floor)
    else:
        lam, mu, s = cold_start(qp, settings.tau0)

    tau = settings.tau_min
    history = []
    status = Status.MAX_ITER
    it = 0
    res = qp_residual(qp, y, lam, mu, s, settings.tau_min)
    for it in range(settings.max_iter + 1):
        if _converged(res, settings):
            status = Status.CONVERGED
            break
        if it == settings.max_iter:
            break
        if n_h and not mu.max() <= settings.mu_max:
            status = Status.BREAKDOWN
            break
        if n_h:
            tau = barrier_schedule(float(mu @ s) / n_h, settings.tau_floor, settings.sigma)
        history.append(tau)
        r = np.concatenate([res.stat, res.eq, res.ineq, mu * s - tau])
        try:
            red = assemble_reduced(qp, mu, s)
            fact = riccati_factorize(red)
        except FactorizationBreakdown:
            status = Status.BREAKDOWN
            break
        step = solve_full(fact, red, r)
        alpha = fraction_to_boundary(s, mu, step.ds, step.dmu, settings.ftb_gamma) if n_h else 1.0
        y = y + alpha * step.dz
        lam = lam + alpha * step.dlam
        mu = mu + alpha * step.dmu
        s = s + alpha * step.ds
        res = qp_residual(qp, y, lam, mu, s, settings.tau_min)
    stats = IpmStats(it, tau, res, status, history)
    return Iterate(y, lam, mu, s), stats
