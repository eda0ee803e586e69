"""Row generators for the built-in examples.

Each runner returns ``(rows, schema, timings)``.  Rows are deterministic for a
fixed ``ExampleSpec``; wall-clock measurements only go into ``timings`` so that result
files can be compared byte for byte.
"""

from __future__ import annotations

import dataclasses
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import problems
from .batch import BatchInstance, BatchRequest, SensitivityRequest, batch_run
from .nlp import Status
from .ocp import HessianMode
from .sensitivity import (
    AdjointSeed,
    DegeneracyWarning,
    RegularityError,
    SolveFailure,
    adjoint,
    finite_difference_oracle,
    forward,
    setup_and_factorize,
)
from .sqp import SqpSettings, solve_nlp

EXAMPLES = ("tutorial", "jump", "pendulum", "lqr_bench", "many_param")

DEFAULT_GRIDS = {
    "tutorial": (-2.0, 2.0, 401),
    "jump": (-0.2, 0.8, 101),
    "pendulum": (0.5, 1.5, 50),
}
DEFAULT_TAU = {
    "tutorial": (0.0, 1e-2, 1e-1),
    "jump": (0.0,),
    "pendulum": (0.0, 1e-3, 1e-1),
    "lqr_bench": (0.0,),
    "many_param": (0.0,),
}
DEFAULT_TOL = {"pendulum": 1e-10, "lqr_bench": 1e-10}
# the pendulum nominal solve is far from convex when started cold, so the
# two-solver pattern (approximate nominal, exact sensitivities) is the default
DEFAULT_HESSIAN = {"pendulum": "gauss-newton", "many_param": "gauss-newton"}
JUMP_LM = 2.5


class ConfigError(ValueError):
    """Invalid example specification."""


@dataclass
class ExampleSpec:
    name: str
    grid: Optional[tuple] = None  # (start, stop, num)
    tau_min: tuple = ()
    tol: Optional[float] = None
    hessian: Optional[str] = None  # nominal solver Hessian: exact | gauss-newton
    seed: int = 4
    n_batch: int = 128
    u_max: float = 1e4
    N: Optional[int] = None
    nx: int = 8
    nu: int = 4
    inits: tuple = (-1.0, 0.0, 1.0)
    fd: bool = True
    gn_column: bool = True
    repetitions: int = 20
    workers: int = 1

    def __post_init__(self):
        if self.name not in EXAMPLES:
            raise ConfigError(f"unknown example {self.name!r}; choose from {', '.join(EXAMPLES)}")
        if self.grid is None:
            self.grid = DEFAULT_GRIDS.get(self.name)
        if self.tol is None:
            self.tol = DEFAULT_TOL.get(self.name, 1e-8)
        if self.hessian is None:
            self.hessian = DEFAULT_HESSIAN.get(self.name, "exact")
        if not self.tau_min:
            self.tau_min = DEFAULT_TAU[self.name]
        self.tau_min = tuple(float(t) for t in self.tau_min)
        if any(t < 0 for t in self.tau_min):
            raise ConfigError("tau_min values must be nonnegative")
        if self.grid is not None:
            if len(self.grid) != 3 or int(self.grid[2]) < 1:
                raise ConfigError("grid must be (start, stop, num) with num >= 1")
            self.grid = (float(self.grid[0]), float(self.grid[1]), int(self.grid[2]))
        if self.hessian not in ("exact", "gauss-newton"):
            raise ConfigError("hessian must be 'exact' or 'gauss-newton'")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.workers < 1 or self.n_batch < 1 or self.repetitions < 1:
            raise ConfigError("workers, n_batch and repetitions must be positive")
        if not self.inits:
            raise ConfigError("inits must be nonempty")

    @classmethod
    def from_dict(cls, data: dict) -> ExampleSpec:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("grid", "tau_min", "inits"):
            if key in data and data[key] is not None:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def thetas(self) -> np.ndarray:
        start, stop, num = self.grid
        return np.linspace(start, stop, num)

    def hessian_mode(self) -> HessianMode:
        return HessianMode.gauss_newton() if self.hessian == "gauss-newton" else HessianMode.exact()


@dataclass
class Timings:
    entries: list = field(default_factory=list)

    def add(self, label: str, seconds: float):
        self.entries.append({"label": label, "seconds": float(seconds)})


TIMING_SCHEMA = ["label", "seconds"]


def _quiet_sensitivity(ocp, result, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegeneracyWarning)
        ws = setup_and_factorize(ocp, result, **kw)
    return ws


# -- tutorial -------------------------------------------------------------------

TUTORIAL_SCHEMA = [
    "theta", "tau_min", "z", "dz_dtheta", "z_exact", "dz_exact",
    "mu_lower", "mu_upper", "status", "sqp_iterations",
]


def tutorial_settings(tol: float, tau_min: float) -> SqpSettings:
    # at tau_min = 0 the kink at |theta| = 1 needs tiny products mu * s to put
    # z within 1e-7 of the bound
    return SqpSettings(tol=tol, tau_min=tau_min, comp_tol=1e-15 if tau_min == 0 else None)


def run_tutorial(spec: ExampleSpec):
    ocp = problems.tutorial_ocp()
    rows, timings = [], Timings()
    for tau in spec.tau_min:
        settings = tutorial_settings(spec.tol, tau)
        t0 = time.perf_counter()
        for th in spec.thetas():
            z_ex, dz_ex = problems.tutorial_solution(th)
            row = {"theta": th, "tau_min": tau, "z_exact": z_ex, "dz_exact": dz_ex}
            res = solve_nlp(ocp, [th], None, settings)
            row.update(status=res.status, sqp_iterations=res.sqp_iterations, z=res.w.z[0],
                       mu_lower=res.w.mu[0], mu_upper=res.w.mu[1])
            row["dz_dtheta"] = forward(_quiet_sensitivity(ocp, res)).dz[0, 0] if res.converged else np.nan
            rows.append(row)
        timings.add(f"tau_min={tau:g}", time.perf_counter() - t0)
    return rows, TUTORIAL_SCHEMA, timings


# -- jump -----------------------------------------------------------------------

JUMP_SCHEMA = ["theta", "x_init", "z", "dz_dtheta", "status", "sqp_iterations"]


def jump_settings(tol: float, tau_min: float = 0.0) -> SqpSettings:
    # the cost is concave near x = 0, so the nominal solver needs a
    # Levenberg-Marquardt term to stay on a descent path
    return SqpSettings(tol=tol, tau_min=tau_min, max_iter=200, hessian=HessianMode.exact(JUMP_LM))


def run_jump(spec: ExampleSpec):
    ocp = problems.jump_ocp()
    rows, timings = [], Timings()
    tau = spec.tau_min[0]
    settings = jump_settings(spec.tol, tau)
    for x_init in spec.inits:
        t0 = time.perf_counter()
        for th in spec.thetas():
            res = solve_nlp(ocp, [th], problems.scalar_iterate(x_init), settings)
            row = {"theta": th, "x_init": float(x_init), "z": res.w.z[0], "status": res.status,
                   "sqp_iterations": res.sqp_iterations, "dz_dtheta": np.nan}
            if res.converged:
                try:
                    row["dz_dtheta"] = forward(_quiet_sensitivity(ocp, res)).dz[0, 0]
                except (RegularityError, np.linalg.LinAlgError):
                    pass
            rows.append(row)
        timings.add(f"x_init={x_init:g}", time.perf_counter() - t0)
    return rows, JUMP_SCHEMA, timings


# -- pendulum ---------------------------------------------------------------------

PENDULUM_SCHEMA = [
    "theta", "tau_min", "u0", "du0_dtheta", "du0_fd", "du0_gn", "strict_comp_margin",
    "mu_u_upper", "mu_u_lower", "mu_p_upper", "mu_p_lower", "status", "sqp_iterations",
]


def pendulum_nominal_settings(tol: float, tau_min: float, hessian: HessianMode) -> SqpSettings:
    return SqpSettings(tol=tol, tau_min=tau_min, max_iter=200, hessian=hessian)


def pendulum_sweep(thetas, tau_min: float, tol: float = 1e-10, hessian: HessianMode = HessianMode.gauss_newton(),
                   fd: bool = True, gn_column: bool = True):
    """Continuation sweep; each point is warm-started from the previous solution.

    Returns one dict per grid point with the nominal result, the exact-Hessian
    forward sensitivity of ``u_0``, and optionally the FD and GN-Hessian values.
    """
    ocp = problems.pendulum_ocp()
    d = ocp.dims
    u0 = d.u_index(0).start
    settings = pendulum_nominal_settings(tol, tau_min, hessian)
    fd_settings = SqpSettings(tol=tol, tau_min=tau_min, max_iter=200)
    out = []
    init = None
    for th in thetas:
        res = solve_nlp(ocp, [th], init, settings)
        rec = {"theta": float(th), "result": res, "du0": np.nan, "du0_fd": np.nan, "du0_gn": np.nan,
               "margin": np.nan}
        if res.converged:
            init = res.w
            ws = _quiet_sensitivity(ocp, res)
            rec["margin"] = ws.diagnostics.strict_comp_margin
            rec["du0"] = forward(ws).dz[u0, 0]
            if gn_column:
                ws_gn = _quiet_sensitivity(ocp, res, hessian=HessianMode.gauss_newton(), allow_inexact_hessian=True)
                rec["du0_gn"] = forward(ws_gn).dz[u0, 0]
            if fd:
                try:
                    rec["du0_fd"] = finite_difference_oracle(ocp, [th], fd_settings, init=res.w)[u0, 0]
                except SolveFailure:
                    pass
        else:
            init = None
        out.append(rec)
    return out


def run_pendulum(spec: ExampleSpec):
    d = problems.pendulum_ocp().dims
    rows, timings = [], Timings()
    mu_idx = np.arange(d.nh)  # stage-0 path multipliers come first
    for tau in spec.tau_min:
        t0 = time.perf_counter()
        sweep = pendulum_sweep(spec.thetas(), tau, spec.tol, spec.hessian_mode(),
                               fd=spec.fd and tau == 0.0, gn_column=spec.gn_column)
        for rec in sweep:
            res = rec["result"]
            mu = res.w.mu[mu_idx]
            rows.append({
                "theta": rec["theta"], "tau_min": tau, "u0": res.w.z[d.u_index(0).start],
                "du0_dtheta": rec["du0"], "du0_fd": rec["du0_fd"], "du0_gn": rec["du0_gn"],
                "strict_comp_margin": rec["margin"], "mu_u_upper": mu[0], "mu_u_lower": mu[1],
                "mu_p_upper": mu[2], "mu_p_lower": mu[3], "status": res.status,
                "sqp_iterations": res.sqp_iterations,
            })
        timings.add(f"tau_min={tau:g}", time.perf_counter() - t0)
    return rows, PENDULUM_SCHEMA, timings


# -- bounded LQR benchmark ------------------------------------------------------


def lqr_schema(nx: int, nu: int, n_theta: int) -> list:
    return (
        ["instance"] + [f"x0_{i}" for i in range(nx)] + [f"u0_{i}" for i in range(nu)]
        + ["n_active", "n_bounds", "status", "sqp_iterations", "ipm_iterations", "error"]
        + [f"adj_u0_{j}" for j in range(n_theta)]
    )


def lqr_batch(spec: ExampleSpec):
    N = 20 if spec.N is None else spec.N
    bench = problems.generate_lqr_bench(spec.nx, spec.nu, N, spec.u_max, spec.seed, spec.n_batch)
    d = bench.ocp.dims
    settings = SqpSettings(tol=spec.tol, tau_min=spec.tau_min[0])
    seed = AdjointSeed.on_control(d, 0, 0)
    instances = [BatchInstance(bench.theta, x0_bar=bench.x0s[i], seed=seed) for i in range(spec.n_batch)]
    req = BatchRequest(bench.ocp, instances, settings, SensitivityRequest("adjoint"), spec.workers)
    return bench, batch_run(req)


def run_lqr_bench(spec: ExampleSpec):
    bench, batch = lqr_batch(spec)
    d = bench.ocp.dims
    schema = lqr_schema(d.nx, d.nu, d.n_theta)
    rows = []
    for i, r in enumerate(batch.results):
        row = {"instance": i, "error": r.error or ""}
        row.update({f"x0_{k}": bench.x0s[i, k] for k in range(d.nx)})
        if r.solve is not None:
            w = r.solve.w
            row.update({f"u0_{k}": w.z[d.u_index(0).start + k] for k in range(d.nu)})
            row.update(n_active=int(np.sum(w.mu >= w.s)), n_bounds=d.n_h, status=r.solve.status,
                       sqp_iterations=r.solve.sqp_iterations, ipm_iterations=r.solve.total_ipm_iterations)
        if r.adjoint is not None:
            row.update({f"adj_u0_{j}": v for j, v in enumerate(r.adjoint.s_adj)})
        rows.append(row)
    timings = Timings()
    timings.add("batch_total", batch.wall_time)
    for i, r in enumerate(batch.results):
        timings.add(f"instance_{i}", r.wall_time)
    return rows, schema, timings


# -- many-parameter forward vs adjoint ------------------------------------------

MANY_PARAM_SCHEMA = ["param", "forward_du0", "adjoint_du0", "abs_diff"]


def many_param_workspace(N: int = 40, tol: float = 1e-8):
    ocp = problems.many_param_ocp(N)
    theta = problems.many_param_theta(N)
    res = solve_nlp(ocp, theta, None, SqpSettings(tol=tol, max_iter=200, hessian=HessianMode.gauss_newton()))
    if not res.converged:
        raise SolveFailure(f"many_param nominal solve ended {res.status}", res)
    return ocp, _quiet_sensitivity(ocp, res)


def time_forward_adjoint(ws, repetitions: int = 20):
    """Median wall time of one full forward Jacobian and of one adjoint call."""
    seed = AdjointSeed.on_control(ws.dims, 0, 0)
    forward(ws)
    adjoint(ws, seed)
    t_fwd, t_adj = [], []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        forward(ws)
        t_fwd.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        adjoint(ws, seed)
        t_adj.append(time.perf_counter() - t0)
    return float(np.median(t_fwd)), float(np.median(t_adj))


def run_many_param(spec: ExampleSpec):
    N = 40 if spec.N is None else spec.N
    _, ws = many_param_workspace(N, spec.tol)
    u0 = ws.dims.u_index(0).start
    fwd = forward(ws).dz[u0]
    adj = adjoint(ws, AdjointSeed.on_control(ws.dims, 0, 0)).s_adj
    rows = [{"param": j, "forward_du0": fwd[j], "adjoint_du0": adj[j], "abs_diff": abs(fwd[j] - adj[j])}
            for j in range(fwd.size)]
    t_fwd, t_adj = time_forward_adjoint(ws, spec.repetitions)
    timings = Timings()
    timings.add("forward_median", t_fwd)
    timings.add("adjoint_median", t_adj)
    timings.add("adjoint_over_forward", t_adj / t_fwd)
    return rows, MANY_PARAM_SCHEMA, timings


RUNNERS = {
    "tutorial": run_tutorial,
    "jump": run_jump,
    "pendulum": run_pendulum,
    "lqr_bench": run_lqr_bench,
    "many_param": run_many_param,
}


def run_example(spec: ExampleSpec):
    return RUNNERS[spec.name](spec)


def status_ok(rows) -> bool:
    return all(r.get("status") in (None, Status.CONVERGED) for r in rows)
