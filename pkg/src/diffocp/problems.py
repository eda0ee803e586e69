"""Built-in parametric problems.

* ``tutorial``: ``min (x - theta^2)^2`` subject to ``-1 <= x <= 1``.
* ``jump``: a quartic with two local minimizers on ``[-0.75, 0.75]``.
* ``pendulum``: cart-pole swing-up with the cart mass as parameter.
* ``lqr_bench``: bounded random LQR, all problem data as parameters.
* ``many_param``: cart-pole with per-stage weights and bound offsets.
* ``random_ocp``: small nonlinear OCPs for oracle tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ad
from .nlp import Iterate
from .ocp import AutoDiffOcp, OcpDefinition, OcpDimensions, StageEval, rk4_step

# cart-pole constants; the cart mass is a parameter
POLE_MASS = 0.1
POLE_LENGTH = 0.8
GRAVITY = 9.81
PENDULUM_Q = 2.0 * np.array([1e3, 1e3, 1e-2, 1e-2])
PENDULUM_R = 0.2
PENDULUM_X0 = np.array([0.0, np.pi / 2, 0.0, 0.0])
U_MAX = 80.0
P_MAX = 1.5


def tutorial_ocp() -> AutoDiffOcp:
    dims = OcpDimensions(N=1, nx=0, nu=1, nh=2, nh_N=0, n_theta=1)
    return AutoDiffOcp(
        dims,
        stage_cost=lambda x, u, p: (u[0] - p[0] * p[0]) ** 2,
        dynamics=lambda x, u, p: [],
        x0_bar=np.zeros(0),
        path_constraints=lambda x, u, p: [-1.0 - u[0], u[0] - 1.0],
    )


def tutorial_solution(theta):
    """Exact solution map and its derivative (``nan`` at the kinks)."""
    theta = np.asarray(theta, dtype=float)
    z = np.minimum(theta**2, 1.0)
    dz = np.where(np.abs(theta) < 1.0, 2.0 * theta, 0.0)
    dz = np.where(np.abs(theta) == 1.0, np.nan, dz)
    return z, dz


def jump_ocp() -> AutoDiffOcp:
    dims = OcpDimensions(N=1, nx=0, nu=1, nh=2, nh_N=0, n_theta=1)
    bound = 0.75
    return AutoDiffOcp(
        dims,
        stage_cost=lambda x, u, p: (u[0] - 1.0) * (u[0] + 1.0) * u[0] * u[0] - p[0] * u[0],
        dynamics=lambda x, u, p: [],
        x0_bar=np.zeros(0),
        path_constraints=lambda x, u, p: [-bound - u[0], u[0] - bound],
    )


def jump_fold_theta() -> float:
    """Parameter value at which the negative local minimizer vanishes."""
    return 4.0 / (3.0 * np.sqrt(6.0))


def scalar_iterate(x_init: float, n_h: int = 2) -> Iterate:
    return Iterate(np.array([float(x_init)]), np.zeros(0), np.ones(n_h), np.ones(n_h))


def cartpole_rhs(x, u, cart_mass):
    """Cart-pole ODE with state ``(p, phi, v, omega)``, ``phi = 0`` upright."""
    m, l, g = POLE_MASS, POLE_LENGTH, GRAVITY
    _, phi, v, omega = x
    force = u[0]
    s, c = ad.sin(phi), ad.cos(phi)
    den = cart_mass + m - m * c * c
    dv = (-m * l * s * omega * omega + m * g * c * s + force) / den
    domega = (-m * l * c * s * omega * omega + force * c + (cart_mass + m) * g * s) / (l * den)
    return [v, omega, dv, domega]


def pendulum_ocp(N: int = 50, T: float = 2.0) -> AutoDiffOcp:
    """Cart-pole OCP with a single parameter entering cost, dynamics and bounds."""
    dims = OcpDimensions(N=N, nx=4, nu=1, nh=4, nh_N=2, n_theta=1)
    dt = T / N
    Q, R = PENDULUM_Q, PENDULUM_R

    def quad(x):
        return sum(Q[i] * x[i] * x[i] for i in range(4))

    return AutoDiffOcp(
        dims,
        stage_cost=lambda x, u, p: p[0] * quad(x) + R * u[0] * u[0],
        terminal_cost=lambda x, p: p[0] * quad(x),
        dynamics=lambda x, u, p: rk4_step(lambda xx, uu, pp: cartpole_rhs(xx, uu, pp[0]), x, u, p, dt),
        path_constraints=lambda x, u, p: [
            u[0] - U_MAX,
            -U_MAX - u[0],
            p[0] * x[0] - P_MAX,
            -P_MAX - p[0] * x[0],
        ],
        terminal_constraints=lambda x, p: [p[0] * x[0] - P_MAX, -P_MAX - p[0] * x[0]],
        x0_bar=PENDULUM_X0,
    )


def many_param_ocp(N: int = 40, T: float = 2.0) -> AutoDiffOcp:
    """Cart-pole OCP with per-stage parameters.

    ``theta = [cart_mass, w_0..w_{N-1}, r_0..r_{N-1}, c_0..c_{N-1}]`` where
    ``w_n`` scales the state weight, ``r_n`` the control weight and ``c_n``
    widens the cart-position bound of stage ``n``.  ``n_theta = 3 N + 1``.
    """
    n_theta = 3 * N + 1
    dims = OcpDimensions(N=N, nx=4, nu=1, nh=4, nh_N=0, n_theta=n_theta)
    dt = T / N
    Q, R = PENDULUM_Q, PENDULUM_R
    stages = np.arange(N)
    param_map = np.stack([np.zeros(N, dtype=int), 1 + stages, 1 + N + stages, 1 + 2 * N + stages], axis=1)

    def quad(x):
        return sum(Q[i] * x[i] * x[i] for i in range(4))

    return AutoDiffOcp(
        dims,
        stage_cost=lambda x, u, p: p[1] * quad(x) + p[2] * R * u[0] * u[0],
        terminal_cost=lambda x, p: quad(x),
        dynamics=lambda x, u, p: rk4_step(lambda xx, uu, pp: cartpole_rhs(xx, uu, pp[0]), x, u, p, dt),
        path_constraints=lambda x, u, p: [
            u[0] - U_MAX,
            -U_MAX - u[0],
            x[0] - (P_MAX + p[3]),
            -(P_MAX + p[3]) - x[0],
        ],
        x0_bar=PENDULUM_X0,
        param_map=param_map,
        terminal_param_map=np.zeros(0, dtype=int),
    )


def many_param_theta(N: int = 40) -> np.ndarray:
    """Nominal parameter vector of :func:`many_param_ocp`."""
    return np.concatenate([[1.0], np.ones(N), np.ones(N), np.zeros(N)])


# -- bounded LQR benchmark ------------------------------------------------------


class LqrBenchOcp(OcpDefinition):
    """``sum [x;u]' H [x;u] + x_N' H_x x_N`` with ``x+ = A x + B u + b``, ``|u| <= u_max``.

    ``theta = [vec(A), vec(B), b, vec(H)]`` (row-major), optionally followed by
    the initial state.  All derivatives are analytic.
    """

    def __init__(self, nx: int, nu: int, N: int, u_max: float, x0_bar=None, x0_in_theta: bool = False):
        self.nx, self.nu, self.u_max = nx, nu, float(u_max)
        nxu = nx + nu
        self.n_data = nx * nx + nx * nu + nx + nxu * nxu
        self.off_B = nx * nx
        self.off_b = self.off_B + nx * nu
        self.off_H = self.off_b + nx
        n_theta = self.n_data + (nx if x0_in_theta else 0)
        self.dims = OcpDimensions(N=N, nx=nx, nu=nu, nh=2 * nu, nh_N=0, n_theta=n_theta)
        self.x0_bar = np.zeros(nx) if x0_bar is None else np.asarray(x0_bar, dtype=float)
        self.x0_indices = self.n_data + np.arange(nx) if x0_in_theta else None

    def unpack(self, theta):
        nx, nu = self.nx, self.nu
        theta = np.asarray(theta, dtype=float)
        A = theta[: self.off_B].reshape(nx, nx)
        B = theta[self.off_B : self.off_b].reshape(nx, nu)
        b = theta[self.off_b : self.off_H]
        H = theta[self.off_H : self.n_data].reshape(nx + nu, nx + nu)
        return A, B, b, H

    def pack(self, A, B, b, H, x0=None):
        parts = [np.ravel(A), np.ravel(B), np.ravel(b), np.ravel(H)]
        if self.x0_indices is not None:
            parts.append(np.zeros(self.nx) if x0 is None else np.ravel(x0))
        return np.concatenate(parts).astype(float)

    def evaluate(self, X, U, theta, lam_next=None, mu=None, mu_N=None, *, hessian=True, params=False):
        d = self.dims
        N, nx, nu, nxu = d.N, d.nx, d.nu, d.nxu
        A, B, b, H = self.unpack(theta)
        Hs = H + H.T
        Hx = H[:nx, :nx]
        Hxs = Hx + Hx.T
        XU = np.concatenate([X[:N], U], axis=1)
        AB = np.concatenate([A, B], axis=1)
        eye_u = np.eye(nu)
        jac_h = np.tile(np.concatenate([np.zeros((2 * nu, nx)), np.vstack([eye_u, -eye_u])], axis=1), (N, 1, 1))
        ev = StageEval(
            cost=np.einsum("ni,ij,nj->n", XU, H, XU),
            cost_N=float(X[N] @ Hx @ X[N]),
            grad=XU @ Hs.T,
            grad_N=Hxs @ X[N],
            phi=XU @ AB.T + b,
            jac_phi=np.tile(AB, (N, 1, 1)),
            h=np.concatenate([U - self.u_max, -self.u_max - U], axis=1),
            jac_h=jac_h,
            h_N=np.zeros(0),
            jac_h_N=np.zeros((0, nx)),
        )
        if hessian or params:
            ev.hess_exact = np.tile(Hs, (N, 1, 1))
            ev.hess_gn = ev.hess_exact.copy()
            ev.hess_exact_N = Hxs.copy()
            ev.hess_gn_N = Hxs.copy()
        if params:
            nt = d.n_theta
            lam = np.zeros((N, nx)) if lam_next is None else lam_next
            dstat = np.zeros((N, nxu, nt))
            dphi = np.zeros((N, nx, nt))
            ii, jj = np.meshgrid(np.arange(nx), np.arange(nx), indexing="ij")
            # d/dA_ij: stationarity gets lam_i in x-row j, dynamics row i gets x_j
            cols = (ii * nx + jj).ravel()
            dstat[:, jj.ravel(), cols] = lam[:, ii.ravel()]
            dphi[:, ii.ravel(), cols] = X[:N][:, jj.ravel()]
            ii, jj = np.meshgrid(np.arange(nx), np.arange(nu), indexing="ij")
            cols = (self.off_B + ii * nu + jj).ravel()
            dstat[:, nx + jj.ravel(), cols] = lam[:, ii.ravel()]
            dphi[:, ii.ravel(), cols] = U[:, jj.ravel()]
            dphi[:, np.arange(nx), self.off_b + np.arange(nx)] = 1.0
            # d/dH_ab of (H + H') xu: row a gets xu_b, row b gets xu_a
            dstatN = np.zeros((nx, nt))
            for a in range(nxu):
                for c in range(nxu):
                    col = self.off_H + a * nxu + c
                    dstat[:, a, col] += XU[:, c]
                    dstat[:, c, col] += XU[:, a]
                    if a < nx and c < nx:
                        dstatN[a, col] += X[N, c]
                        dstatN[c, col] += X[N, a]
            ev.dstat_dtheta = dstat
            ev.dstat_dtheta_N = dstatN
            ev.dphi_dtheta = dphi
            ev.dh_dtheta = np.zeros((N, d.nh, nt))
            ev.dh_dtheta_N = np.zeros((0, nt))
        return ev


@dataclass
class LqrBench:
    ocp: LqrBenchOcp
    theta: np.ndarray  # shared problem data
    x0s: np.ndarray  # (n_batch, nx) initial states

    def instance_theta(self, i: int) -> np.ndarray:
        if self.ocp.x0_indices is None:
            return self.theta.copy()
        th = self.theta.copy()
        th[self.ocp.x0_indices] = self.x0s[i]
        return th

    def instance_ocp(self, i: int) -> LqrBenchOcp:
        return self.ocp.with_x0(self.x0s[i])


def generate_lqr_bench(
    nx: int = 8, nu: int = 4, N: int = 20, u_max: float = 1e4, seed: int = 4, n_batch: int = 128,
    x0_in_theta: bool = False,
) -> LqrBench:
    """Random bounded LQR data: ``A = I + 0.2 M`` with ``M, B, b`` standard normal.

    The problem data come from the first child stream of ``SeedSequence(seed)``
    and instance ``i`` draws its initial state from its own child stream, so
    the instances do not depend on how a batch is later distributed.
    """
    data_seq, inst_seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.Generator(np.random.PCG64(data_seq))
    M = rng.standard_normal((nx, nx))
    B = rng.standard_normal((nx, nu))
    b = rng.standard_normal(nx)
    A = np.eye(nx) + 0.2 * M
    H = np.eye(nx + nu)
    x0s = np.array(
        [np.random.Generator(np.random.PCG64(s)).standard_normal(nx) for s in inst_seq.spawn(n_batch)]
    ).reshape(n_batch, nx)
    ocp = LqrBenchOcp(nx, nu, N, u_max, x0_bar=np.zeros(nx), x0_in_theta=x0_in_theta)
    return LqrBench(ocp, ocp.pack(A, B, b, H), x0s)


# -- random small OCPs ---------------------------------------------------------


def random_ocp(seed: int, N: int = 4, nx: int = 2, nu: int = 1, n_theta: int = 3):
    """Small nonlinear OCP with parametric cost, dynamics and input bounds.

    Returns ``(ocp, theta)``.  The control bounds are tight enough that some of
    them are usually active.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    A = np.eye(nx) + 0.3 * rng.standard_normal((nx, nx))
    B = rng.standard_normal((nx, nu))
    Wx = rng.uniform(0.5, 2.0, nx)
    Wu = rng.uniform(0.1, 1.0, nu)
    ref = rng.standard_normal(nx)
    ub = rng.uniform(0.2, 1.0, nu)
    x0 = rng.standard_normal(nx)
    theta = rng.uniform(0.5, 1.5, n_theta)
    dims = OcpDimensions(N=N, nx=nx, nu=nu, nh=2 * nu, nh_N=1, n_theta=n_theta)

    def dyn(x, u, p):
        out = []
        for i in range(nx):
            acc = 0.1 * p[0] * ad.sin(x[i])
            for j in range(nx):
                acc = acc + A[i, j] * x[j]
            for j in range(nu):
                acc = acc + B[i, j] * u[j]
            out.append(acc)
        return out

    def cost(x, u, p):
        c = 0.0
        for i in range(nx):
            e = x[i] - p[1] * ref[i]
            c = c + Wx[i] * e * e + 0.05 * x[i] * x[i] * x[i] * x[i]
        for j in range(nu):
            c = c + Wu[j] * u[j] * u[j] * p[2 % n_theta]
        return c

    def term(x, p):
        return sum(2.0 * Wx[i] * (x[i] - p[1] * ref[i]) ** 2 for i in range(nx))

    def cons(x, u, p):
        up = [u[j] - ub[j] * p[0] for j in range(nu)]
        lo = [-ub[j] * p[0] - u[j] for j in range(nu)]
        return up + lo

    def term_cons(x, p):
        return [x[0] * x[0] - 4.0 * p[1]]

    ocp = AutoDiffOcp(
        dims,
        stage_cost=cost,
        dynamics=dyn,
        terminal_cost=term,
        path_constraints=cons,
        terminal_constraints=term_cons,
        x0_bar=x0,
    )
    return ocp, theta
