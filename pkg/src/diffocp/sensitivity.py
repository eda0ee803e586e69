"""Parametric sensitivities of converged smoothed KKT solutions.

At a solution ``w*`` of ``r(w; theta) = 0`` the implicit function theorem gives
``dw/dtheta = -Mfull^-1 J`` with ``J = dr/dtheta``.  Forward sensitivities solve
for columns of ``J``; adjoint sensitivities contract a seed ``nu`` first:
``nu' dw/dtheta = -(Mfull^-T nu)' J``, one transposed solve for any number of
parameters.

The matrix is always built with the exact Lagrangian Hessian, no matter how
the nominal solution was computed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg as sla

from .nlp import Iterate, RegularityDiagnostics, strict_complementarity_margin
from .ocp import HessianMode, OcpDefinition, OcpDimensions, StageQpData, linearize_with_param_jacobian
from .riccati import (
    FactorizationBreakdown,
    ReducedKkt,
    RiccatiFactorization,
    assemble_reduced,
    riccati_factorize,
    solve_full,
    solve_transpose,
)
from .sqp import SolveResult, SqpSettings, solve_nlp

PANEL = 16
S_FLOOR = 1e-14
DEGENERACY_MARGIN = 1e-6
ACTIVE_TOL = 1e-6
# iterative refinement steps; active bounds at tau_min = 0 give huge barrier weights
REFINE = 2


class RegularityError(RuntimeError):
    """The KKT matrix at the solution could not be factorized."""

    def __init__(self, message: str, stage: Optional[int] = None):
        super().__init__(message)
        self.stage = stage


class ActiveSetError(RuntimeError):
    """Active set is ambiguous or its KKT matrix is singular."""


class SolveFailure(RuntimeError):
    """A solve required by a sensitivity computation did not converge."""

    def __init__(self, message: str, result: Optional[SolveResult] = None):
        super().__init__(message)
        self.result = result


class DegeneracyWarning(UserWarning):
    """Strict complementarity is nearly violated at the solution."""


@dataclass(frozen=True)
class SensitivityWorkspace:
    qp: StageQpData
    reduced: ReducedKkt
    factorization: RiccatiFactorization
    param_jacobian: np.ndarray  # (n_w, n_theta)
    w: Iterate
    theta: np.ndarray
    tau_min: float
    diagnostics: RegularityDiagnostics
    warnings: tuple = ()

    @property
    def dims(self) -> OcpDimensions:
        return self.qp.dims


@dataclass(frozen=True)
class ForwardSensitivities:
    columns: np.ndarray  # (n_w, k)
    param_indices: np.ndarray
    dims: OcpDimensions

    def _block(self, start, stop):
        return self.columns[start:stop]

    @property
    def dz(self) -> np.ndarray:
        return self._block(0, self.dims.n_z)

    @property
    def dlam(self) -> np.ndarray:
        d = self.dims
        return self._block(d.n_z, d.n_z + d.n_g)

    @property
    def dmu(self) -> np.ndarray:
        d = self.dims
        return self._block(d.n_z + d.n_g, d.n_z + d.n_g + d.n_h)

    @property
    def ds(self) -> np.ndarray:
        d = self.dims
        return self._block(d.n_z + d.n_g + d.n_h, d.n_w)

    def dx(self, n: int) -> np.ndarray:
        return self.dz[self.dims.x_index(n)]

    def du(self, n: int) -> np.ndarray:
        return self.dz[self.dims.u_index(n)]


@dataclass(frozen=True)
class AdjointSeed:
    """Seed ``nu`` in iterate layout; one column per seed for several at once."""

    nu: np.ndarray

    @classmethod
    def unit(cls, n_w: int, index: int) -> AdjointSeed:
        nu = np.zeros(n_w)
        nu[index] = 1.0
        return cls(nu)

    @classmethod
    def on_control(cls, dims: OcpDimensions, n: int = 0, i: int = 0) -> AdjointSeed:
        return cls.unit(dims.n_w, dims.u_index(n).start + i)

    @classmethod
    def on_state(cls, dims: OcpDimensions, n: int, i: int = 0) -> AdjointSeed:
        return cls.unit(dims.n_w, dims.x_index(n).start + i)


@dataclass(frozen=True)
class AdjointResult:
    s_adj: np.ndarray  # (n_theta,) or (m, n_theta) for several seeds


def setup_and_factorize(
    ocp: OcpDefinition,
    result: Union[SolveResult, Iterate],
    theta=None,
    tau_min: Optional[float] = None,
    hessian: HessianMode = HessianMode.exact(),
    allow_inexact_hessian: bool = False,
) -> SensitivityWorkspace:
    """Assemble and factorize the exact-Hessian KKT matrix at a solution.

    ``hessian`` other than the plain exact Hessian is rejected unless
    ``allow_inexact_hessian`` is set; that switch exists only to demonstrate
    how wrong approximate-Hessian sensitivities are.
    """
    if not hessian.is_pure_exact and not allow_inexact_hessian:
        raise ValueError("sensitivities require the exact Hessian without regularization")
    if isinstance(result, SolveResult):
        if not result.converged:
            raise SolveFailure(f"cannot differentiate a {result.status} solve", result)
        w = result.w
        theta = result.theta if theta is None else theta
        tau_min = result.tau_min if tau_min is None else tau_min
    else:
        w = result
        if theta is None:
            raise ValueError("theta is required when passing a bare iterate")
        tau_min = 0.0 if tau_min is None else tau_min
    theta = np.asarray(theta, dtype=float).reshape(ocp.dims.n_theta)
    s = np.maximum(w.s, S_FLOOR)
    mu = np.maximum(w.mu, np.finfo(float).tiny)
    w = Iterate(w.z, w.lam, mu, s)
    diag = strict_complementarity_margin(w)
    notes = []
    if diag.strict_comp_margin < DEGENERACY_MARGIN:
        msg = f"strict complementarity margin {diag.strict_comp_margin:.3g} is below {DEGENERACY_MARGIN:g}"
        warnings.warn(msg, DegeneracyWarning, stacklevel=2)
        notes.append(msg)
    qp, J = linearize_with_param_jacobian(ocp, w, theta, hessian)
    red = assemble_reduced(qp, mu, s)
    try:
        fact = riccati_factorize(red)
    except FactorizationBreakdown as exc:
        raise RegularityError(f"KKT matrix not regular at the solution: {exc}", exc.stage) from exc
    diag = RegularityDiagnostics(diag.active_set, diag.strict_comp_margin, True)
    return SensitivityWorkspace(qp, red, fact, J, w, theta, float(tau_min), diag, tuple(notes))


def forward(ws: SensitivityWorkspace, param_indices: Optional[Sequence[int]] = None) -> ForwardSensitivities:
    """Columns ``dw/dtheta_j`` for the requested parameters, in panels."""
    n_theta = ws.param_jacobian.shape[1]
    idx = np.arange(n_theta) if param_indices is None else np.asarray(param_indices, dtype=int).reshape(-1)
    cols = np.empty((ws.dims.n_w, idx.size))
    for start in range(0, idx.size, PANEL):
        sel = idx[start : start + PANEL]
        step = solve_full(ws.factorization, ws.reduced, ws.param_jacobian[:, sel], refine=REFINE)
        cols[:, start : start + sel.size] = step.flat()
    return ForwardSensitivities(cols, idx, ws.dims)


def adjoint(ws: SensitivityWorkspace, seed: Union[AdjointSeed, np.ndarray]) -> AdjointResult:
    """``nu' dw/dtheta`` via one transposed solve and one product with ``J'``."""
    nu = seed.nu if isinstance(seed, AdjointSeed) else np.asarray(seed, dtype=float)
    if nu.shape[0] != ws.dims.n_w:
        raise ValueError("seed length must equal n_w")
    x = solve_transpose(ws.factorization, ws.reduced, ws.qp, ws.w.mu, ws.w.s, nu, refine=REFINE)
    return AdjointResult(-(ws.param_jacobian.T @ x).T)


# -- oracles --------------------------------------------------------------------


@dataclass(frozen=True)
class ActiveSetSensitivity:
    dz: np.ndarray
    dlam: np.ndarray
    dmu_active: np.ndarray
    active: np.ndarray  # boolean mask over inequalities

    @property
    def matrix(self) -> np.ndarray:
        return np.vstack([self.dz, self.dlam, self.dmu_active])


def active_set_sensitivity_oracle(ocp: OcpDefinition, result: Union[SolveResult, Iterate], theta=None):
    """Dense sensitivity from the KKT system restricted to the active set.

    A constraint is active when ``mu > 1e-6`` and ``|h| < 1e-6`` and inactive
    when ``mu <= 1e-6`` and ``h <= -1e-6``; anything else is ambiguous.
    """
    if isinstance(result, SolveResult):
        w, theta = result.w, result.theta if theta is None else theta
    else:
        w = result
    theta = np.asarray(theta, dtype=float)
    view = ocp.dense_view()
    z = w.z
    h = view.h(z, theta)
    active = (w.mu > ACTIVE_TOL) & (np.abs(h) < ACTIVE_TOL)
    inactive = (w.mu <= ACTIVE_TOL) & (h <= -ACTIVE_TOL)
    if np.any(~(active | inactive)):
        bad = np.flatnonzero(~(active | inactive))
        raise ActiveSetError(f"constraints {bad.tolist()} are neither clearly active nor inactive")
    Lzz = view.hess_lagrangian(z, w.lam, w.mu, theta)
    G = view.jac_g(z, theta)
    HA = view.jac_h(z, theta)[active]
    nz, ng, na = z.size, G.shape[0], HA.shape[0]
    K = np.zeros((nz + ng + na, nz + ng + na))
    K[:nz, :nz] = Lzz
    K[:nz, nz : nz + ng] = G.T
    K[:nz, nz + ng :] = HA.T
    K[nz : nz + ng, :nz] = G
    K[nz + ng :, :nz] = HA
    rhs = np.vstack(
        [
            view.stat_param_jac(z, w.lam, w.mu, theta),
            view.g_param_jac(z, theta),
            view.h_param_jac(z, theta)[active],
        ]
    )
    if np.linalg.cond(K) > 1e14:
        raise ActiveSetError("active-set KKT matrix is singular (LICQ or SOSC fails)")
    sol = -sla.solve(K, rhs)
    return ActiveSetSensitivity(sol[:nz], sol[nz : nz + ng], sol[nz + ng :], active)


def finite_difference_oracle(
    ocp: OcpDefinition,
    theta,
    settings: SqpSettings = SqpSettings(tol=1e-10),
    h: Optional[float] = None,
    init: Optional[Iterate] = None,
    param_indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Central differences of the full solution iterate, ``(n_w, k)``.

    The default step is ``1e-5 * max(1, |theta_j|)``.  Every re-solve starts
    from ``init`` (typically the nominal solution) and must converge.
    """
    theta = np.asarray(theta, dtype=float).reshape(ocp.dims.n_theta)
    idx = np.arange(theta.size) if param_indices is None else np.asarray(param_indices, dtype=int)
    out = np.empty((ocp.dims.n_w, idx.size))
    for col, j in enumerate(idx):
        step = 1e-5 * max(1.0, abs(theta[j])) if h is None else h
        sols = []
        for sign in (1.0, -1.0):
            th = theta.copy()
            th[j] += sign * step
            res = solve_nlp(ocp, th, init, settings)
            if not res.converged:
                raise SolveFailure(f"finite-difference re-solve for parameter {j} ended {res.status}", res)
            sols.append(res.w.flat())
        out[:, col] = (sols[0] - sols[1]) / (2.0 * step)
    return out


def two_solver_solve_and_sensitivity(
    ocp: OcpDefinition,
    theta,
    nominal_settings: SqpSettings,
    seed_or_indices=None,
    init: Optional[Iterate] = None,
):
    """Approximate-Hessian nominal solve, exact-Hessian sensitivities.

    Only the primal-dual iterate passes between the two stages.  Returns
    ``(SolveResult, ForwardSensitivities)`` or ``(SolveResult, AdjointResult)``
    when an :class:`AdjointSeed` is given.
    """
    result = solve_nlp(ocp, theta, init, nominal_settings)
    if not result.converged:
        raise SolveFailure(f"nominal solve ended {result.status}: {result.message}", result)
    ws = setup_and_factorize(ocp, result.w, theta, nominal_settings.tau_min)
    if isinstance(seed_or_indices, AdjointSeed):
        return result, adjoint(ws, seed_or_indices)
    return result, forward(ws, seed_or_indices)
