"""Riccati factorization of the block-structured KKT system.

The full Newton matrix over ``(dz, dlam, dmu, ds)`` is::

    [ Q  G'  H'  0 ]
    [ G  0   0   0 ]
    [ H  0   0   I ]
    [ 0  0   S   M ]          S = diag(s), M = diag(mu)

Eliminating ``ds`` and ``dmu`` leaves the reduced symmetric matrix
``[[Q + H' D H, G'], [G, 0]]`` with ``D = M S^-1``, which has optimal-control
structure and is factorized stage by stage with the classic Riccati recursion.
Only the reduced Hessian on the dynamics null space must be positive definite,
so indefinite stage Hessians are fine.

Right-hand sides may be vectors ``(n,)`` or panels ``(n, k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import _kernels
from .ocp import OcpDimensions, StageQpData

PIVOT_TOL = 1e-12
DENSE_LIMIT = 2000


class FactorizationBreakdown(np.linalg.LinAlgError):
    """Control-control block of a stage is singular or indefinite."""

    def __init__(self, stage: int, message: str = ""):
        super().__init__(message or f"Riccati breakdown at stage {stage}")
        self.stage = stage


class OracleError(np.linalg.LinAlgError):
    """Dense reference solve failed."""


@dataclass(frozen=True)
class ReducedKkt:
    qp: StageQpData
    mu: np.ndarray
    s: np.ndarray
    d: np.ndarray  # barrier weights mu / s
    Qt: np.ndarray  # (N, nxu, nxu)
    Qt_N: np.ndarray  # (nx, nx)

    @property
    def dims(self) -> OcpDimensions:
        return self.qp.dims


@dataclass(frozen=True)
class RiccatiFactorization:
    P: np.ndarray  # (N+1, nx, nx) cost-to-go matrices
    K: np.ndarray  # (N, nu, nx) feedback gains
    L: np.ndarray  # (N, nu, nu) Cholesky factors of the control blocks
    S: np.ndarray  # (N, nu, nx)
    A: np.ndarray
    B: np.ndarray
    min_pivot: float


@dataclass
class PrimalDualStep:
    dz: np.ndarray
    dlam: np.ndarray
    dmu: np.ndarray
    ds: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.dz, self.dlam, self.dmu, self.ds], axis=0)


def _panel(v):
    v = np.asarray(v, dtype=float)
    return (v[:, None], True) if v.ndim == 1 else (v, False)


def _split_flat(dims: OcpDimensions, r):
    i1 = dims.n_z
    i2 = i1 + dims.n_g
    i3 = i2 + dims.n_h
    return r[:i1], r[i1:i2], r[i2:i3], r[i3:]


def assemble_reduced(qp: StageQpData, mu, s) -> ReducedKkt:
    dims = qp.dims
    mu = np.asarray(mu, dtype=float)
    s = np.asarray(s, dtype=float)
    if mu.shape != (dims.n_h,) or s.shape != (dims.n_h,):
        raise ValueError("mu and s must have length n_h")
    if np.any(mu <= 0) or np.any(s <= 0):
        raise ValueError("barrier weights need strictly positive mu and s")
    d = mu / s
    dp, dN = dims.split_mu(d)
    Qt = qp.Q + np.einsum("nki,nk,nkj->nij", qp.CD, dp, qp.CD)
    Qt_N = qp.Q_N + qp.C_N.T @ (dN[:, None] * qp.C_N)
    Qt = 0.5 * (Qt + np.swapaxes(Qt, 1, 2))
    Qt_N = 0.5 * (Qt_N + Qt_N.T)
    return ReducedKkt(qp, mu, s, d, Qt, Qt_N)


def riccati_factorize(red: ReducedKkt) -> RiccatiFactorization:
    dims = red.dims
    N, nx, nu = dims.N, dims.nx, dims.nu
    A = np.ascontiguousarray(red.qp.A)
    B = np.ascontiguousarray(red.qp.B)
    P = np.empty((N + 1, nx, nx))
    K = np.empty((N, nu, nx))
    L = np.zeros((N, nu, nu))
    S = np.empty((N, nu, nx))
    Qt = np.ascontiguousarray(red.Qt)
    Qt_N = np.ascontiguousarray(red.Qt_N)
    if not (np.isfinite(Qt).all() and np.isfinite(Qt_N).all()):
        raise FactorizationBreakdown(N, "non-finite reduced Hessian")
    failed, min_pivot = _kernels.factorize(Qt, Qt_N, A, B, P, K, L, S, PIVOT_TOL)
    if failed >= 0:
        raise FactorizationBreakdown(int(failed))
    return RiccatiFactorization(P, K, L, S, A, B, float(min_pivot))


def _solve_reduced(fact: RiccatiFactorization, red: ReducedKkt, b_z, b_lam):
    """Solve ``M_tilde (y_z, y_lam) = (b_z, b_lam)`` for panel right-hand sides."""
    dims = red.dims
    N, nx, nu = dims.N, dims.nx, dims.nu
    k = b_z.shape[1]
    BX, BU = dims.split_z(b_z)
    BL = dims.split_lam(b_lam)
    X = np.empty((N + 1, nx, k))
    U = np.empty((N, nu, k))
    Lam = np.empty((N + 1, nx, k))
    _kernels.solve(
        fact.P, fact.K, fact.L, fact.A, fact.B,
        np.ascontiguousarray(BX), np.ascontiguousarray(BU), np.ascontiguousarray(BL),
        X, U, Lam,
    )
    return dims.join_z(X, U), Lam.reshape(-1, k)


def riccati_solve(fact: RiccatiFactorization, red: ReducedKkt, r_z, r_lam):
    """Return ``(dz, dlam)`` with ``M_tilde (dz, dlam) = -(r_z, r_lam)``."""
    r_z, vec = _panel(r_z)
    r_lam, _ = _panel(r_lam)
    dz, dlam = _solve_reduced(fact, red, -r_z, -r_lam)
    return (dz[:, 0], dlam[:, 0]) if vec else (dz, dlam)


def reduce_rhs(qp: StageQpData, mu, s, rhs_full):
    """Eliminate the slack and multiplier rows of a full right-hand side."""
    r, _ = _panel(rhs_full)
    q_hat, g_hat, h_hat, m_hat = _split_flat(qp.dims, r)
    mu_ = np.asarray(mu)[:, None]
    s_ = np.asarray(s)[:, None]
    r_z = q_hat + qp.mul_HT((mu_ * h_hat - m_hat) / s_)
    return r_z, g_hat


def expand_step(dz, dlam, qp: StageQpData, mu, s, rhs_full) -> PrimalDualStep:
    """Recover ``ds`` and ``dmu`` from the reduced solution."""
    dz_, vec = _panel(dz)
    dlam_, _ = _panel(dlam)
    r, _ = _panel(rhs_full)
    _, _, h_hat, m_hat = _split_flat(qp.dims, r)
    mu_ = np.asarray(mu)[:, None]
    s_ = np.asarray(s)[:, None]
    ds = -h_hat - qp.mul_H(dz_)
    dmu = (-m_hat - mu_ * ds) / s_
    if vec:
        return PrimalDualStep(dz_[:, 0], dlam_[:, 0], dmu[:, 0], ds[:, 0])
    return PrimalDualStep(dz_, dlam_, dmu, ds)


def full_matvec(qp: StageQpData, mu, s, step: PrimalDualStep, transpose: bool = False) -> np.ndarray:
    """Product of the full Newton matrix (or its transpose) with a step, flat."""
    mu_ = np.asarray(mu)
    s_ = np.asarray(s)
    if step.dz.ndim == 2:
        mu_, s_ = mu_[:, None], s_[:, None]
    dz, dl, dm, ds = step.dz, step.dlam, step.dmu, step.ds
    top = qp.mul_Q(dz) + qp.mul_GT(dl) + qp.mul_HT(dm)
    if transpose:
        rows = [top, qp.mul_G(dz), qp.mul_H(dz) + s_ * ds, dm + mu_ * ds]
    else:
        rows = [top, qp.mul_G(dz), qp.mul_H(dz) + ds, s_ * dm + mu_ * ds]
    return np.concatenate(rows, axis=0)


def _split_step(dims: OcpDimensions, x) -> PrimalDualStep:
    return PrimalDualStep(*_split_flat(dims, x))


def _solve_full_once(fact, red, rhs_full):
    qp = red.qp
    r_z, r_lam = reduce_rhs(qp, red.mu, red.s, rhs_full)
    dz, dlam = _solve_reduced(fact, red, -r_z, -r_lam)
    return expand_step(dz, dlam, qp, red.mu, red.s, rhs_full)


def solve_full(fact: RiccatiFactorization, red: ReducedKkt, rhs_full, refine: int = 0) -> PrimalDualStep:
    """Solve the full Newton system ``Mfull * step = -rhs_full``.

    Very large barrier weights make the reduced system badly conditioned even
    when the full matrix is not; ``refine`` steps of iterative refinement on
    the full residual recover the lost digits.
    """
    rhs, vec = _panel(rhs_full)
    step = _solve_full_once(fact, red, rhs)
    for _ in range(refine):
        resid = full_matvec(red.qp, red.mu, red.s, step) + rhs
        corr = _solve_full_once(fact, red, resid)
        step = PrimalDualStep(step.dz + corr.dz, step.dlam + corr.dlam, step.dmu + corr.dmu, step.ds + corr.ds)
    if vec:
        return PrimalDualStep(step.dz[:, 0], step.dlam[:, 0], step.dmu[:, 0], step.ds[:, 0])
    return step


def _solve_transpose_once(fact, red, qp, mu_, s_, nu_):
    nz, nl, nm, ns = _split_flat(qp.dims, nu_)
    d = mu_ / s_
    b_z = nz - qp.mul_HT(ns - d * nm)
    xz, xl = _solve_reduced(fact, red, b_z, nl)
    xs = (nm - qp.mul_H(xz)) / s_
    xm = ns - mu_ * xs
    return np.concatenate([xz, xl, xm, xs], axis=0)


def solve_transpose(fact: RiccatiFactorization, red: ReducedKkt, qp: StageQpData, mu, s, nu, refine: int = 0):
    """Solve ``Mfull^T x = nu`` and return ``x`` flat in iterate layout."""
    nu_, vec = _panel(nu)
    mu_ = np.asarray(mu)[:, None]
    s_ = np.asarray(s)[:, None]
    x = _solve_transpose_once(fact, red, qp, mu_, s_, nu_)
    for _ in range(refine):
        resid = nu_ - full_matvec(qp, mu, s, _split_step(qp.dims, x), transpose=True)
        x = x + _solve_transpose_once(fact, red, qp, mu_, s_, resid)
    return x[:, 0] if vec else x


def dense_kkt_matrix(qp: StageQpData, mu, s) -> np.ndarray:
    """Full Newton matrix in iterate ordering."""
    Qd, _, Gd, _, Hd, _ = qp.dense()
    nz, ng, nh = Qd.shape[0], Gd.shape[0], Hd.shape[0]
    n = nz + ng + 2 * nh
    if n > DENSE_LIMIT:
        raise OracleError(f"dense system of size {n} exceeds the limit {DENSE_LIMIT}")
    M = np.zeros((n, n))
    iz, il, im, is_ = 0, nz, nz + ng, nz + ng + nh
    M[iz:il, iz:il] = Qd
    M[iz:il, il:im] = Gd.T
    M[iz:il, im:is_] = Hd.T
    M[il:im, iz:il] = Gd
    M[im:is_, iz:il] = Hd
    M[im:is_, is_:] = np.eye(nh)
    M[is_:, im:is_] = np.diag(s)
    M[is_:, is_:] = np.diag(mu)
    return M


def dense_kkt_oracle(qp: StageQpData, mu, s, rhs, transpose: bool = False) -> PrimalDualStep:
    """Dense LU solve of ``Mfull step = -rhs`` (or ``Mfull^T x = rhs`` if ``transpose``)."""
    M = dense_kkt_matrix(qp, np.asarray(mu, float), np.asarray(s, float))
    rhs = np.asarray(rhs, dtype=float)
    try:
        lu = sla.lu_factor(M.T if transpose else M, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise OracleError(str(exc)) from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-300):
        raise OracleError("singular KKT matrix")
    x = sla.lu_solve(lu, rhs if transpose else -rhs)
    dz, dl, dm, ds = _split_flat(qp.dims, x)
    return PrimalDualStep(dz, dl, dm, ds)
