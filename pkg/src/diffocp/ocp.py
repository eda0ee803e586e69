"""Stage-structured parametric optimal control problems.

Decision vector layout (``z``)::

    [x_0, u_0, x_1, u_1, ..., x_{N-1}, u_{N-1}, x_N]

Equality multipliers ``lam = [lam_0, ..., lam_N]`` where ``lam_0`` belongs to
``x_0 - x0_bar = 0`` and ``lam_{n+1}`` to ``phi_n(x_n, u_n) - x_{n+1} = 0``.
Inequality multipliers and slacks are ``[mu_0, ..., mu_{N-1}, mu_N]`` with the
terminal block last.
"""

from __future__ import annotations

import abc
import copy
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import ad
from .nlp import DenseNlp, EvaluationError, Iterate


@dataclass(frozen=True)
class OcpDimensions:
    N: int
    nx: int
    nu: int
    nh: int = 0
    nh_N: int = 0
    n_theta: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be at least 1")
        if min(self.nx, self.nu, self.nh, self.nh_N, self.n_theta) < 0:
            raise ValueError("dimensions must be nonnegative")
        if self.nx + self.nu == 0:
            raise ValueError("a stage needs at least one state or control")

    @property
    def nxu(self) -> int:
        return self.nx + self.nu

    @property
    def n_z(self) -> int:
        return (self.N + 1) * self.nx + self.N * self.nu

    @property
    def n_g(self) -> int:
        return (self.N + 1) * self.nx

    @property
    def n_h(self) -> int:
        return self.N * self.nh + self.nh_N

    @property
    def n_w(self) -> int:
        return self.n_z + self.n_g + 2 * self.n_h

    # -- layout helpers; all accept vectors (n,) or panels (n, k) -------------
    def split_z(self, z):
        N, nx, nxu = self.N, self.nx, self.nxu
        tail = z.shape[1:]
        XU = z[: N * nxu].reshape((N, nxu) + tail)
        X = np.concatenate([XU[:, :nx], z[N * nxu :].reshape((1, nx) + tail)], axis=0)
        return X, XU[:, nx:]

    def join_z(self, X, U):
        N = self.N
        tail = X.shape[2:]
        XU = np.concatenate([X[:N], U], axis=1).reshape((-1,) + tail)
        return np.concatenate([XU, X[N].reshape((-1,) + tail)], axis=0)

    def split_mu(self, v):
        tail = v.shape[1:]
        k = self.N * self.nh
        return v[:k].reshape((self.N, self.nh) + tail), v[k:]

    def join_mu(self, path, term):
        tail = path.shape[2:]
        return np.concatenate([path.reshape((-1,) + tail), term], axis=0)

    def split_lam(self, v):
        return v.reshape((self.N + 1, self.nx) + v.shape[1:])

    def stage_slice(self, n: int) -> slice:
        """Slice of ``z`` holding ``(x_n, u_n)`` (or ``x_N`` for ``n == N``)."""
        start = n * self.nxu
        stop = start + (self.nxu if n < self.N else self.nx)
        return slice(start, stop)

    def x_index(self, n: int) -> slice:
        start = n * self.nxu
        return slice(start, start + self.nx)

    def u_index(self, n: int) -> slice:
        start = n * self.nxu + self.nx
        return slice(start, start + self.nu)


@dataclass(frozen=True)
class HessianMode:
    kind: str = "exact"
    levenberg_marquardt: float = 0.0

    def __post_init__(self):
        if self.kind not in ("exact", "gauss_newton"):
            raise ValueError(f"unknown Hessian mode {self.kind!r}")
        if self.levenberg_marquardt < 0:
            raise ValueError("Levenberg-Marquardt term must be nonnegative")

    @classmethod
    def exact(cls, lm: float = 0.0) -> HessianMode:
        return cls("exact", lm)

    @classmethod
    def gauss_newton(cls, lm: float = 0.0) -> HessianMode:
        return cls("gauss_newton", lm)

    @property
    def is_pure_exact(self) -> bool:
        return self.kind == "exact" and self.levenberg_marquardt == 0.0


@dataclass
class StageEval:
    """Raw per-stage function values and derivatives (internal exchange format).

    Derivatives in ``(x, u)`` are taken jointly; ``N`` leading axes are stages.
    Parameter derivatives are only present when requested.
    """

    cost: np.ndarray  # (N,)
    cost_N: float
    grad: np.ndarray  # (N, nxu)
    grad_N: np.ndarray  # (nx,)
    phi: np.ndarray  # (N, nx)
    jac_phi: np.ndarray  # (N, nx, nxu)
    h: np.ndarray  # (N, nh)
    jac_h: np.ndarray  # (N, nh, nxu)
    h_N: np.ndarray  # (nh_N,)
    jac_h_N: np.ndarray  # (nh_N, nx)
    hess_exact: Optional[np.ndarray] = None  # (N, nxu, nxu)
    hess_exact_N: Optional[np.ndarray] = None
    hess_gn: Optional[np.ndarray] = None
    hess_gn_N: Optional[np.ndarray] = None
    dstat_dtheta: Optional[np.ndarray] = None  # (N, nxu, n_theta)
    dstat_dtheta_N: Optional[np.ndarray] = None  # (nx, n_theta)
    dphi_dtheta: Optional[np.ndarray] = None  # (N, nx, n_theta)
    dh_dtheta: Optional[np.ndarray] = None  # (N, nh, n_theta)
    dh_dtheta_N: Optional[np.ndarray] = None  # (nh_N, n_theta)


class OcpDefinition(abc.ABC):
    """Parametric OCP: stage costs, terminal cost, dynamics and path constraints.

    Subclasses implement :meth:`evaluate`.  The initial state is either the fixed
    vector ``x0_bar`` or, when ``x0_indices`` is given, read from those entries
    of ``theta`` so that sensitivities with respect to it come for free.
    """

    dims: OcpDimensions
    x0_bar: np.ndarray
    x0_indices: Optional[np.ndarray] = None

    @abc.abstractmethod
    def evaluate(
        self,
        X: np.ndarray,
        U: np.ndarray,
        theta: np.ndarray,
        lam_next: Optional[np.ndarray] = None,
        mu: Optional[np.ndarray] = None,
        mu_N: Optional[np.ndarray] = None,
        *,
        hessian: bool = True,
        params: bool = False,
    ) -> StageEval:
        """Evaluate all stages at once.

        ``lam_next[n]`` and ``mu[n]`` weight the dynamics and constraint
        curvature of stage ``n`` in the exact Lagrangian Hessian.
        """

    def initial_state(self, theta) -> np.ndarray:
        if self.x0_indices is None:
            return np.asarray(self.x0_bar, dtype=float)
        return np.asarray(theta, dtype=float)[self.x0_indices]

    def with_x0(self, x0) -> OcpDefinition:
        """Copy with a different fixed initial state."""
        other = copy.copy(self)
        other.x0_bar = np.asarray(x0, dtype=float).copy()
        return other

    def default_iterate(self, theta) -> Iterate:
        """Initial state held over the horizon, zero controls, unit slacks."""
        d = self.dims
        x0 = self.initial_state(theta)
        X = np.tile(x0, (d.N + 1, 1))
        U = np.zeros((d.N, d.nu))
        z = d.join_z(X, U)
        return Iterate(z, np.zeros(d.n_g), np.ones(d.n_h), np.ones(d.n_h))

    def dense_view(self) -> OcpDenseView:
        return OcpDenseView(self)


def _stack(items, shape_tail, batch):
    if not items:
        return np.zeros(batch + (0,) + shape_tail)
    return np.stack(items, axis=len(batch))


class AutoDiffOcp(OcpDefinition):
    """OCP built from plain Python stage functions, differentiated with Jets.

    Stage functions have the signature ``fn(x, u, p)`` where ``x``, ``u`` and
    ``p`` are sequences of scalars; terminal functions are ``fn(x, p)``.
    ``p`` is the stage-local parameter vector ``theta[param_map[n]]``; by
    default every stage sees all of ``theta``.  Dynamics and constraints
    return sequences, costs return a scalar.

    All stages are evaluated in one batched sweep, so the functions must only
    use arithmetic and the elementary functions of :mod:`diffocp.ad`.
    """

    def __init__(
        self,
        dims: OcpDimensions,
        stage_cost: Callable,
        dynamics: Callable,
        x0_bar,
        terminal_cost: Optional[Callable] = None,
        path_constraints: Optional[Callable] = None,
        terminal_constraints: Optional[Callable] = None,
        param_map=None,
        terminal_param_map=None,
        x0_indices=None,
    ):
        self.dims = dims
        self.stage_cost = stage_cost
        self.dynamics = dynamics
        self.terminal_cost = terminal_cost
        self.path_constraints = path_constraints
        self.terminal_constraints = terminal_constraints
        self.x0_bar = np.asarray(x0_bar, dtype=float).reshape(dims.nx)
        self.x0_indices = None if x0_indices is None else np.asarray(x0_indices, dtype=int)
        all_params = np.arange(dims.n_theta)
        if param_map is None:
            param_map = np.tile(all_params, (dims.N, 1))
        self.param_map = np.asarray(param_map, dtype=int).reshape(dims.N, -1)
        if terminal_param_map is None:
            terminal_param_map = all_params
        self.terminal_param_map = np.asarray(terminal_param_map, dtype=int).reshape(-1)
        if (dims.nh > 0) != (path_constraints is not None):
            raise ValueError("nh must match presence of path_constraints")
        if (dims.nh_N > 0) != (terminal_constraints is not None):
            raise ValueError("nh_N must match presence of terminal_constraints")

    def _seed(self, values, order, batch):
        if not values:
            return []
        return ad.Jet.variables(values, order=order, batch_shape=batch)

    def _sweep(self, xs, us, ps, order, terminal: bool):
        """Evaluate cost, (dynamics), constraints for one batch of seeds."""
        batch = xs[0].val.shape if xs else (us[0].val.shape if us else ps[0].val.shape)
        template = (xs + us + ps)[0]
        lift = lambda y: y if isinstance(y, ad.Jet) else template._lift(np.broadcast_to(y, batch))
        if terminal:
            cost = self.terminal_cost(xs, ps) if self.terminal_cost is not None else 0.0
            cons = self.terminal_constraints(xs, ps) if self.terminal_constraints is not None else []
            dyn = []
        else:
            cost = self.stage_cost(xs, us, ps)
            dyn = list(self.dynamics(xs, us, ps))
            cons = self.path_constraints(xs, us, ps) if self.path_constraints is not None else []
        return lift(cost), [lift(y) for y in dyn], [lift(y) for y in cons]

    def evaluate(self, X, U, theta, lam_next=None, mu=None, mu_N=None, *, hessian=True, params=False):
        d = self.dims
        N, nx, nu, nxu = d.N, d.nx, d.nu, d.nxu
        theta = np.asarray(theta, dtype=float).reshape(d.n_theta)
        order = 2 if (hessian or params) else 1
        P = theta[self.param_map] if self.param_map.size else np.zeros((N, 0))
        n_p = P.shape[1]

        # stages, batched over n
        vals = [X[:N, i] for i in range(nx)] + [U[:, i] for i in range(nu)]
        if params:
            seeds = self._seed(vals + [P[:, i] for i in range(n_p)], order, (N,))
            xs, us, ps = seeds[:nx], seeds[nx:nxu], seeds[nxu:]
        else:
            seeds = self._seed(vals, order, (N,))
            xs, us = seeds[:nx], seeds[nxu - nu : nxu]
            ps = list(P.T)
        if not seeds:
            raise ValueError("stage has no variables")
        c, dyn, cons = self._sweep(xs, us, ps, order, terminal=False)
        m = seeds[0].grad.shape[-1]
        phi = _stack([y.val for y in dyn], (), (N,)).reshape(N, nx)
        jac_phi_full = _stack([y.grad for y in dyn], (m,), (N,)).reshape(N, nx, m)
        hv = _stack([y.val for y in cons], (), (N,)).reshape(N, d.nh)
        jac_h_full = _stack([y.grad for y in cons], (m,), (N,)).reshape(N, d.nh, m)
        cost = np.broadcast_to(c.val, (N,)).astype(float)
        grad_full = c.grad
        for name, arr in (("cost", cost), ("dynamics", phi), ("path constraint", hv)):
            bad = ~np.isfinite(arr.reshape(N, -1)).all(axis=1)
            if bad.any():
                n = int(np.flatnonzero(bad)[0])
                raise EvaluationError(f"non-finite {name} at stage {n}", name, n)

        out = dict(
            cost=cost,
            grad=grad_full[:, :nxu].copy(),
            phi=phi,
            jac_phi=jac_phi_full[:, :, :nxu].copy(),
            h=hv,
            jac_h=jac_h_full[:, :, :nxu].copy(),
        )
        if order == 2:
            HL = c.hess.copy()
            out["hess_gn"] = HL[:, :nxu, :nxu].copy()
            if lam_next is not None and nx:
                phi_hess = _stack([y.hess for y in dyn], (m, m), (N,))
                HL += np.einsum("ni,nijk->njk", lam_next, phi_hess)
            if mu is not None and d.nh:
                h_hess = _stack([y.hess for y in cons], (m, m), (N,))
                HL += np.einsum("ni,nijk->njk", mu, h_hess)
            out["hess_exact"] = HL[:, :nxu, :nxu]
            if params:
                dstat = np.zeros((N, nxu, d.n_theta))
                dphi = np.zeros((N, nx, d.n_theta))
                dh = np.zeros((N, d.nh, d.n_theta))
                rows = np.arange(N)[:, None]
                for j in range(n_p):
                    cols = self.param_map[:, j]
                    np.add.at(dstat, (rows[:, 0], slice(None), cols), HL[:, :nxu, nxu + j])
                    np.add.at(dphi, (rows[:, 0], slice(None), cols), jac_phi_full[:, :, nxu + j])
                    np.add.at(dh, (rows[:, 0], slice(None), cols), jac_h_full[:, :, nxu + j])
                out.update(dstat_dtheta=dstat, dphi_dtheta=dphi, dh_dtheta=dh)

        # terminal stage
        PN = theta[self.terminal_param_map]
        valsN = [np.atleast_1d(X[N, i]) for i in range(nx)]
        if params:
            seedsN = self._seed(valsN + [np.atleast_1d(p) for p in PN], order, (1,))
            xsN, psN = seedsN[:nx], seedsN[nx:]
        else:
            seedsN = self._seed(valsN, order, (1,))
            xsN, psN = seedsN, [np.atleast_1d(p) for p in PN]
        mN = len(seedsN)
        if mN == 0:
            # no terminal variables at all (nx == 0 and no parameters)
            out.update(
                cost_N=0.0, grad_N=np.zeros(0), h_N=np.zeros(0), jac_h_N=np.zeros((0, 0)),
            )
            if order == 2:
                out.update(hess_exact_N=np.zeros((0, 0)), hess_gn_N=np.zeros((0, 0)))
                if params:
                    out.update(
                        dstat_dtheta_N=np.zeros((0, d.n_theta)),
                        dh_dtheta_N=np.zeros((d.nh_N, d.n_theta)),
                    )
            return StageEval(**out)
        cN, _, consN = self._sweep(xsN, [], psN, order, terminal=True)
        hN = np.array([y.val[0] for y in consN], dtype=float).reshape(d.nh_N)
        jac_hN_full = _stack([y.grad[0] for y in consN], (mN,), ()).reshape(d.nh_N, mN)
        if not (np.isfinite(cN.val).all() and np.isfinite(hN).all()):
            raise EvaluationError(f"non-finite terminal value at stage {N}", "terminal", N)
        out.update(
            cost_N=float(cN.val[0]),
            grad_N=cN.grad[0, :nx].copy(),
            h_N=hN,
            jac_h_N=jac_hN_full[:, :nx].copy(),
        )
        if order == 2:
            HN = cN.hess[0].copy()
            out["hess_gn_N"] = HN[:nx, :nx].copy()
            if mu_N is not None and d.nh_N:
                HN += np.einsum("i,ijk->jk", mu_N, np.stack([y.hess[0] for y in consN]))
            out["hess_exact_N"] = HN[:nx, :nx]
            if params:
                dstatN = np.zeros((nx, d.n_theta))
                dhN = np.zeros((d.nh_N, d.n_theta))
                for j, col in enumerate(self.terminal_param_map):
                    dstatN[:, col] += HN[:nx, nx + j]
                    dhN[:, col] += jac_hN_full[:, nx + j]
                out.update(dstat_dtheta_N=dstatN, dh_dtheta_N=dhN)
        return StageEval(**out)


@dataclass
class StageQpData:
    """Per-stage linearization forming the block-structured QP.

    Equality rows are ``x_0 - x0_bar`` followed by ``A_n x_n + B_n u_n - x_{n+1}``
    (so the dense ``G`` has rows ``[A_n  B_n  -I]``); inequality rows are
    ``C_n x_n + D_n u_n`` and ``C_N x_N``.
    """

    dims: OcpDimensions
    Q: np.ndarray  # (N, nxu, nxu)
    q: np.ndarray  # (N, nxu)
    Q_N: np.ndarray  # (nx, nx)
    q_N: np.ndarray  # (nx,)
    A: np.ndarray  # (N, nx, nx)
    B: np.ndarray  # (N, nx, nu)
    b: np.ndarray  # (N, nx)  dynamics residual phi - x_next
    g0: np.ndarray  # (nx,)  x_0 - x0_bar
    C: np.ndarray  # (N, nh, nx)
    D: np.ndarray  # (N, nh, nu)
    h_val: np.ndarray  # (N, nh)
    C_N: np.ndarray  # (nh_N, nx)
    h_val_N: np.ndarray  # (nh_N,)
    hessian_mode: HessianMode = field(default_factory=HessianMode)

    def __post_init__(self):
        self.AB = np.concatenate([self.A, self.B], axis=2)
        self.CD = np.concatenate([self.C, self.D], axis=2)

    # -- flat vectors ---------------------------------------------------------
    @property
    def q_flat(self) -> np.ndarray:
        return np.concatenate([self.q.reshape(-1), self.q_N])

    @property
    def g_flat(self) -> np.ndarray:
        return np.concatenate([self.g0, self.b.reshape(-1)])

    @property
    def h_flat(self) -> np.ndarray:
        return np.concatenate([self.h_val.reshape(-1), self.h_val_N])

    # -- structured products; vectors (n,) or panels (n, k) -------------------
    def _panel(self, v):
        v = np.asarray(v, dtype=float)
        return (v[:, None], True) if v.ndim == 1 else (v, False)

    def mul_Q(self, z):
        z, vec = self._panel(z)
        d = self.dims
        XU = z[: d.N * d.nxu].reshape(d.N, d.nxu, -1)
        out = np.concatenate([(self.Q @ XU).reshape(-1, z.shape[1]), self.Q_N @ z[d.N * d.nxu :]])
        return out[:, 0] if vec else out

    def mul_G(self, z):
        z, vec = self._panel(z)
        d = self.dims
        X, U = d.split_z(z)
        XU = np.concatenate([X[: d.N], U], axis=1)
        dyn = self.AB @ XU - X[1:]
        out = np.concatenate([X[0], dyn.reshape(-1, z.shape[1])])
        return out[:, 0] if vec else out

    def mul_GT(self, lam):
        lam, vec = self._panel(lam)
        d = self.dims
        L = d.split_lam(lam)
        ABt = np.swapaxes(self.AB, 1, 2) @ L[1:]  # (N, nxu, k)
        X = np.zeros((d.N + 1, d.nx, lam.shape[1]))
        X[: d.N] += ABt[:, : d.nx]
        X[1:] -= L[1:]
        X[0] += L[0]
        out = d.join_z(X, ABt[:, d.nx :])
        return out[:, 0] if vec else out

    def mul_H(self, z):
        z, vec = self._panel(z)
        d = self.dims
        XU = z[: d.N * d.nxu].reshape(d.N, d.nxu, -1)
        out = np.concatenate([(self.CD @ XU).reshape(-1, z.shape[1]), self.C_N @ z[d.N * d.nxu :]])
        return out[:, 0] if vec else out

    def mul_HT(self, mu):
        mu, vec = self._panel(mu)
        d = self.dims
        path, term = d.split_mu(mu)
        XU = np.swapaxes(self.CD, 1, 2) @ path
        out = np.concatenate([XU.reshape(-1, mu.shape[1]), self.C_N.T @ term])
        return out[:, 0] if vec else out

    # -- dense assembly (tests and oracles) -----------------------------------
    def dense(self):
        """Return dense ``(Q, q, G, g, H, h)``."""
        d = self.dims
        Qd = np.zeros((d.n_z, d.n_z))
        for n in range(d.N):
            sl = d.stage_slice(n)
            Qd[sl, sl] = self.Q[n]
        sl = d.stage_slice(d.N)
        Qd[sl, sl] = self.Q_N
        eye = np.eye(d.n_z)
        Gd = self.mul_G(eye)
        Hd = self.mul_H(eye)
        return Qd, self.q_flat, Gd, self.g_flat, Hd, self.h_flat


def _unpack(ocp: OcpDefinition, w: Iterate):
    d = ocp.dims
    X, U = d.split_z(w.z)
    lam = d.split_lam(w.lam)
    mu, mu_N = d.split_mu(w.mu)
    return X, U, lam, mu, mu_N


def _qp_from_eval(ocp, ev: StageEval, X, theta, mode: HessianMode) -> StageQpData:
    d = ocp.dims
    nx = d.nx
    if mode.kind == "exact":
        Q, Q_N = ev.hess_exact, ev.hess_exact_N
    else:
        Q, Q_N = ev.hess_gn, ev.hess_gn_N
    Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))
    Q_N = 0.5 * (Q_N + Q_N.T)
    if mode.levenberg_marquardt:
        Q = Q + mode.levenberg_marquardt * np.eye(d.nxu)
        Q_N = Q_N + mode.levenberg_marquardt * np.eye(nx)
    return StageQpData(
        dims=d,
        Q=Q,
        q=ev.grad,
        Q_N=Q_N,
        q_N=ev.grad_N,
        A=ev.jac_phi[:, :, :nx],
        B=ev.jac_phi[:, :, nx:],
        b=ev.phi - X[1:],
        g0=X[0] - ocp.initial_state(theta),
        C=ev.jac_h[:, :, :nx],
        D=ev.jac_h[:, :, nx:],
        h_val=ev.h,
        C_N=ev.jac_h_N,
        h_val_N=ev.h_N,
        hessian_mode=mode,
    )


def _check_iterate(ocp: OcpDefinition, w: Iterate):
    d = ocp.dims
    if (w.z.size, w.lam.size, w.mu.size, w.s.size) != (d.n_z, d.n_g, d.n_h, d.n_h):
        raise ValueError("iterate dimensions do not match the OCP")


def linearize_at(ocp: OcpDefinition, w: Iterate, theta, mode: HessianMode = HessianMode()) -> StageQpData:
    _check_iterate(ocp, w)
    X, U, lam, mu, mu_N = _unpack(ocp, w)
    exact = mode.kind == "exact"
    ev = ocp.evaluate(
        X, U, theta,
        lam[1:] if exact else None,
        mu if exact else None,
        mu_N if exact else None,
        hessian=True,
    )
    return _qp_from_eval(ocp, ev, X, theta, mode)


def _param_jacobian_from_eval(ocp: OcpDefinition, ev: StageEval) -> np.ndarray:
    d = ocp.dims
    nt = d.n_theta
    J = np.zeros((d.n_w, nt))
    J[: d.N * d.nxu] = ev.dstat_dtheta.reshape(-1, nt)
    J[d.N * d.nxu : d.n_z] = ev.dstat_dtheta_N
    r = d.n_z
    if ocp.x0_indices is not None:
        J[r + np.arange(d.nx), ocp.x0_indices] = -1.0
    r += d.nx
    J[r : r + d.N * d.nx] = ev.dphi_dtheta.reshape(-1, nt)
    r = d.n_z + d.n_g
    J[r : r + d.N * d.nh] = ev.dh_dtheta.reshape(-1, nt)
    J[r + d.N * d.nh : r + d.n_h] = ev.dh_dtheta_N
    return J


def linearize_with_param_jacobian(ocp: OcpDefinition, w: Iterate, theta, mode: HessianMode = HessianMode()):
    """Exact-Hessian QP data and the parameter Jacobian from one evaluation."""
    _check_iterate(ocp, w)
    X, U, lam, mu, mu_N = _unpack(ocp, w)
    ev = ocp.evaluate(X, U, theta, lam[1:], mu, mu_N, hessian=True, params=True)
    return _qp_from_eval(ocp, ev, X, theta, mode), _param_jacobian_from_eval(ocp, ev)


def eval_param_jacobian(ocp: OcpDefinition, w: Iterate, theta, tau: float = 0.0) -> np.ndarray:
    """Derivative of the smoothed KKT residual with respect to theta.

    Rows follow the iterate layout ``(stat, eq, ineq, comp)``; the
    complementarity rows are zero and ``tau`` only enters through them.
    """
    _, J = linearize_with_param_jacobian(ocp, w, theta)
    return J


def rk4_step(ode_rhs: Callable, x, u, theta, dt: float):
    """One classical Runge-Kutta step of ``x' = ode_rhs(x, u, theta)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    as_array = isinstance(x, np.ndarray)
    x = list(x)

    def shift(k, a):
        return [xi + a * ki for xi, ki in zip(x, k)]

    k1 = list(ode_rhs(x, u, theta))
    k2 = list(ode_rhs(shift(k1, 0.5 * dt), u, theta))
    k3 = list(ode_rhs(shift(k2, 0.5 * dt), u, theta))
    k4 = list(ode_rhs(shift(k3, dt), u, theta))
    out = [xi + dt / 6.0 * (a + 2.0 * b + 2.0 * c + e) for xi, a, b, c, e in zip(x, k1, k2, k3, k4)]
    return np.array(out, dtype=float) if as_array else out


class OcpDenseView(DenseNlp):
    """Dense NLP view of an OCP, for oracles and residual checks."""

    def __init__(self, ocp: OcpDefinition):
        d = ocp.dims
        self.ocp = ocp
        self.n_z, self.n_g, self.n_h, self.n_theta = d.n_z, d.n_g, d.n_h, d.n_theta

    def _eval(self, z, theta, lam=None, mu=None, params=False, hessian=False):
        d = self.ocp.dims
        X, U = d.split_z(np.asarray(z, dtype=float))
        lam_next = mu_p = mu_N = None
        if lam is not None:
            lam_next = d.split_lam(np.asarray(lam, dtype=float))[1:]
            mu_p, mu_N = d.split_mu(np.asarray(mu, dtype=float))
        return X, self.ocp.evaluate(X, U, theta, lam_next, mu_p, mu_N, hessian=hessian, params=params)

    def _qp(self, z, theta, lam=None, mu=None):
        X, ev = self._eval(z, theta, lam, mu, hessian=True)
        return _qp_from_eval(self.ocp, ev, X, theta, HessianMode.exact())

    def f(self, z, theta):
        _, ev = self._eval(z, theta)
        return float(np.sum(ev.cost) + ev.cost_N)

    def grad_f(self, z, theta):
        _, ev = self._eval(z, theta)
        return np.concatenate([ev.grad.reshape(-1), ev.grad_N])

    def g(self, z, theta):
        X, ev = self._eval(z, theta)
        return np.concatenate([X[0] - self.ocp.initial_state(theta), (ev.phi - X[1:]).reshape(-1)])

    def jac_g(self, z, theta):
        return self._qp(z, theta).dense()[2]

    def h(self, z, theta):
        _, ev = self._eval(z, theta)
        return np.concatenate([ev.h.reshape(-1), ev.h_N])

    def jac_h(self, z, theta):
        return self._qp(z, theta).dense()[4]

    def hess_lagrangian(self, z, lam, mu, theta):
        return self._qp(z, theta, lam, mu).dense()[0]

    def _J(self, z, lam, mu, theta):
        w = Iterate(np.asarray(z, float), np.asarray(lam, float), np.asarray(mu, float), np.zeros(self.n_h))
        return eval_param_jacobian(self.ocp, w, theta)

    def stat_param_jac(self, z, lam, mu, theta):
        return self._J(z, lam, mu, theta)[: self.n_z]

    def g_param_jac(self, z, theta):
        J = self._J(z, np.zeros(self.n_g), np.zeros(self.n_h), theta)
        return J[self.n_z : self.n_z + self.n_g]

    def h_param_jac(self, z, theta):
        J = self._J(z, np.zeros(self.n_g), np.zeros(self.n_h), theta)
        return J[self.n_z + self.n_g : self.n_z + self.n_g + self.n_h]
