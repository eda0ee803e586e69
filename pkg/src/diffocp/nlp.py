"""Dense view of a parametric NLP and its smoothed KKT system.

The problem is ``min f(z; theta)  s.t.  g(z; theta) = 0,  h(z; theta) <= 0`` with
Lagrangian ``f + lam^T g + mu^T h``.  Slacks ``s = -h`` turn the inequality into
``h + s = 0`` and complementarity is smoothed to ``mu_i s_i = tau``.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    BREAKDOWN = "Breakdown"
    EVAL_FAIL = "EvalFail"

    def __str__(self) -> str:
        return self.value


class EvaluationError(RuntimeError):
    """A problem function returned a non-finite value."""

    def __init__(self, message: str, block: str | None = None, index: int | None = None):
        super().__init__(message)
        self.block = block
        self.index = index


@dataclass(frozen=True)
class Iterate:
    """Primal-dual point ``w = (z, lam, mu, s)``."""

    z: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    s: np.ndarray

    @property
    def n_w(self) -> int:
        return self.z.size + self.lam.size + self.mu.size + self.s.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.z, self.lam, self.mu, self.s])

    @classmethod
    def from_flat(cls, w: np.ndarray, n_z: int, n_g: int, n_h: int) -> Iterate:
        w = np.asarray(w, dtype=float)
        if w.size != n_z + n_g + 2 * n_h:
            raise ValueError("flat iterate has the wrong length")
        i1, i2, i3 = n_z, n_z + n_g, n_z + n_g + n_h
        return cls(w[:i1].copy(), w[i1:i2].copy(), w[i2:i3].copy(), w[i3:].copy())

    def copy(self) -> Iterate:
        return Iterate(self.z.copy(), self.lam.copy(), self.mu.copy(), self.s.copy())


@dataclass(frozen=True)
class KktResidual:
    stat: np.ndarray
    eq: np.ndarray
    ineq: np.ndarray
    comp: np.ndarray
    inf_norm: float = field(init=False)

    def __post_init__(self):
        norms = [np.max(np.abs(b)) for b in (self.stat, self.eq, self.ineq, self.comp) if b.size]
        object.__setattr__(self, "inf_norm", float(max(norms)) if norms else 0.0)

    @property
    def comp_norm(self) -> float:
        return float(np.max(np.abs(self.comp))) if self.comp.size else 0.0

    @property
    def feas_norm(self) -> float:
        """Largest residual over stationarity, equality and inequality blocks."""
        norms = [np.max(np.abs(b)) for b in (self.stat, self.eq, self.ineq) if b.size]
        return float(max(norms)) if norms else 0.0


@dataclass(frozen=True)
class RegularityDiagnostics:
    active_set: np.ndarray
    strict_comp_margin: float
    hessian_inertia_ok: bool = True


class DenseNlp(abc.ABC):
    """Evaluation interface of a parametric NLP in dense form.

    Jacobians are ``(rows, n_z)``; parameter Jacobians are ``(rows, n_theta)``.
    """

    n_z: int
    n_g: int
    n_h: int
    n_theta: int

    @abc.abstractmethod
    def f(self, z, theta) -> float: ...

    @abc.abstractmethod
    def grad_f(self, z, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def g(self, z, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def jac_g(self, z, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def h(self, z, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def jac_h(self, z, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def hess_lagrangian(self, z, lam, mu, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def stat_param_jac(self, z, lam, mu, theta) -> np.ndarray:
        """Derivative of the Lagrangian gradient with respect to theta."""

    @abc.abstractmethod
    def g_param_jac(self, z, theta) -> np.ndarray: ...

    @abc.abstractmethod
    def h_param_jac(self, z, theta) -> np.ndarray: ...


def _check_finite(arr: np.ndarray, block: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise EvaluationError(f"non-finite value in {block} block at index {idx}", block, idx)
    return arr


def _check_dims(problem: DenseNlp, w: Iterate) -> None:
    if (w.z.size, w.lam.size, w.mu.size, w.s.size) != (
        problem.n_z,
        problem.n_g,
        problem.n_h,
        problem.n_h,
    ):
        raise ValueError("iterate dimensions do not match the problem")


def lagrangian_value_grad(problem: DenseNlp, w: Iterate, theta) -> tuple[float, np.ndarray]:
    _check_dims(problem, w)
    z = w.z
    val = float(problem.f(z, theta))
    grad = np.array(problem.grad_f(z, theta), dtype=float)
    if problem.n_g:
        val += float(w.lam @ problem.g(z, theta))
        grad += problem.jac_g(z, theta).T @ w.lam
    if problem.n_h:
        val += float(w.mu @ problem.h(z, theta))
        grad += problem.jac_h(z, theta).T @ w.mu
    if not np.isfinite(val):
        raise EvaluationError("non-finite Lagrangian value", "value", 0)
    return val, _check_finite(grad, "stat")


def eval_kkt_residual(problem: DenseNlp, w: Iterate, tau: float, theta) -> KktResidual:
    """Residual of the smoothed KKT system at ``w`` for barrier value ``tau``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    _, stat = lagrangian_value_grad(problem, w, theta)
    eq = _check_finite(problem.g(w.z, theta), "eq") if problem.n_g else np.zeros(0)
    if problem.n_h:
        ineq = _check_finite(problem.h(w.z, theta), "ineq") + w.s
    else:
        ineq = np.zeros(0)
    comp = w.mu * w.s - tau
    return KktResidual(stat, eq, ineq, comp)


def strict_complementarity_margin(w: Iterate) -> RegularityDiagnostics:
    """Classify constraints as active when ``mu_i >= s_i``.

    The margin ``min_i max(mu_i, s_i)`` is zero exactly when some constraint is
    weakly active; with no inequalities it is ``inf``.
    """
    mu, s = np.asarray(w.mu), np.asarray(w.s)
    if mu.size == 0:
        return RegularityDiagnostics(np.zeros(0, dtype=bool), float("inf"))
    return RegularityDiagnostics(mu >= s, float(np.min(np.maximum(mu, s))))


class DenseQp(DenseNlp):
    """Dense parametric QP ``1/2 z'Pz + (c + Cq theta)'z`` with affine constraints.

    Constraints are ``Ae z + be + Be theta = 0`` and ``Ai z + bi + Bi theta <= 0``.
    Mostly used as a test vehicle and as an independent oracle.
    """

    def __init__(self, P, c, Ae, be, Ai, bi, Cq=None, Be=None, Bi=None):
        self.P = np.asarray(P, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.Ae = np.asarray(Ae, dtype=float).reshape(-1, self.c.size)
        self.be = np.asarray(be, dtype=float).reshape(-1)
        self.Ai = np.asarray(Ai, dtype=float).reshape(-1, self.c.size)
        self.bi = np.asarray(bi, dtype=float).reshape(-1)
        self.n_z = self.c.size
        self.n_g = self.be.size
        self.n_h = self.bi.size
        n_theta = 0
        for m in (Cq, Be, Bi):
            if m is not None:
                n_theta = np.asarray(m).shape[1]
        self.n_theta = n_theta
        self.Cq = np.zeros((self.n_z, n_theta)) if Cq is None else np.asarray(Cq, dtype=float)
        self.Be = np.zeros((self.n_g, n_theta)) if Be is None else np.asarray(Be, dtype=float)
        self.Bi = np.zeros((self.n_h, n_theta)) if Bi is None else np.asarray(Bi, dtype=float)

    def _th(self, theta):
        return np.zeros(self.n_theta) if theta is None else np.asarray(theta, dtype=float)

    def f(self, z, theta):
        return 0.5 * z @ self.P @ z + (self.c + self.Cq @ self._th(theta)) @ z

    def grad_f(self, z, theta):
        return self.P @ z + self.c + self.Cq @ self._th(theta)

    def g(self, z, theta):
        return self.Ae @ z + self.be + self.Be @ self._th(theta)

    def jac_g(self, z, theta):
        return self.Ae

    def h(self, z, theta):
        return self.Ai @ z + self.bi + self.Bi @ self._th(theta)

    def jac_h(self, z, theta):
        return self.Ai

    def hess_lagrangian(self, z, lam, mu, theta):
        return self.P

    def stat_param_jac(self, z, lam, mu, theta):
        return self.Cq

    def g_param_jac(self, z, theta):
        return self.Be

    def h_param_jac(self, z, theta):
        return self.Bi
