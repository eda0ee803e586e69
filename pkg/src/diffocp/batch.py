"""Solve and differentiate many problem instances, optionally in parallel.

Each instance is one unit of work (solve plus sensitivity), so results do not
depend on how instances are spread over workers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .nlp import Iterate, Status
from .ocp import OcpDefinition
from .sensitivity import (
    AdjointResult,
    AdjointSeed,
    ForwardSensitivities,
    adjoint,
    forward,
    setup_and_factorize,
)
from .sqp import SolveResult, SqpSettings, solve_nlp


@dataclass
class BatchInstance:
    theta: np.ndarray
    x0_bar: Optional[np.ndarray] = None
    init: Optional[Iterate] = None
    seed: Optional[AdjointSeed] = None  # used when the request asks for adjoints


@dataclass(frozen=True)
class SensitivityRequest:
    kind: str = "none"  # none | forward | adjoint
    param_indices: Optional[Sequence[int]] = None

    def __post_init__(self):
        if self.kind not in ("none", "forward", "adjoint"):
            raise ValueError(f"unknown sensitivity request {self.kind!r}")


@dataclass
class BatchRequest:
    ocp: OcpDefinition
    instances: list
    settings: SqpSettings = SqpSettings()
    sensitivity: SensitivityRequest = SensitivityRequest()
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        d = self.ocp.dims
        for i, inst in enumerate(self.instances):
            if np.asarray(inst.theta).size != d.n_theta:
                raise ValueError(f"instance {i}: theta has the wrong length")
            if inst.x0_bar is not None and np.asarray(inst.x0_bar).size != d.nx:
                raise ValueError(f"instance {i}: x0_bar has the wrong length")
            if self.sensitivity.kind == "adjoint" and inst.seed is None:
                raise ValueError(f"instance {i}: adjoint request without a seed")


@dataclass
class InstanceResult:
    solve: Optional[SolveResult] = None
    forward: Optional[ForwardSensitivities] = None
    adjoint: Optional[AdjointResult] = None
    error: Optional[str] = None
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None and self.solve is not None and self.solve.converged


@dataclass
class BatchResult:
    results: list
    converged: int
    total_sqp_iterations: int
    total_ipm_iterations: int
    wall_time: float = 0.0


def run_instance(ocp: OcpDefinition, inst: BatchInstance, settings: SqpSettings, sens: SensitivityRequest):
    """Solve one instance and compute the requested sensitivity; never raises."""
    t0 = time.perf_counter()
    out = InstanceResult()
    try:
        problem = ocp if inst.x0_bar is None else ocp.with_x0(inst.x0_bar)
        res = solve_nlp(problem, inst.theta, inst.init, settings)
        out.solve = res
        if res.converged and sens.kind != "none":
            ws = setup_and_factorize(problem, res)
            if sens.kind == "forward":
                out.forward = forward(ws, sens.param_indices)
            else:
                out.adjoint = adjoint(ws, inst.seed)
        elif not res.converged:
            out.error = f"solve ended {res.status}: {res.message}".rstrip(": ")
    except Exception as exc:  # isolate failures to this slot
        out.error = f"{type(exc).__name__}: {exc}"
    out.wall_time = time.perf_counter() - t0
    return out


def batch_run(req: BatchRequest) -> BatchResult:
    t0 = time.perf_counter()
    args = [(req.ocp, inst, req.settings, req.sensitivity) for inst in req.instances]
    if req.workers == 1 or len(args) <= 1:
        results = [run_instance(*a) for a in args]
    else:
        results = Parallel(n_jobs=req.workers, backend="loky")(delayed(run_instance)(*a) for a in args)
    solves = [r.solve for r in results if r.solve is not None]
    return BatchResult(
        results=list(results),
        converged=sum(1 for r in results if r.solve is not None and r.solve.status is Status.CONVERGED),
        total_sqp_iterations=sum(s.sqp_iterations for s in solves),
        total_ipm_iterations=sum(s.total_ipm_iterations for s in solves),
        wall_time=time.perf_counter() - t0,
    )
