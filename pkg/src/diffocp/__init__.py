"""Differentiable nonlinear MPC: SQP with a Riccati-based interior-point QP
solver, plus forward and adjoint parametric sensitivities of the solution."""

from .batch import BatchInstance, BatchRequest, BatchResult, SensitivityRequest, batch_run
from .nlp import Iterate, KktResidual, Status
from .ocp import AutoDiffOcp, HessianMode, OcpDefinition, OcpDimensions, StageEval, rk4_step
from .sensitivity import (
    AdjointSeed,
    adjoint,
    finite_difference_oracle,
    forward,
    setup_and_factorize,
    two_solver_solve_and_sensitivity,
)
from .sqp import SolveResult, SqpSettings, solve_nlp

__all__ = [
    "AdjointSeed",
    "AutoDiffOcp",
    "BatchInstance",
    "BatchRequest",
    "BatchResult",
    "HessianMode",
    "Iterate",
    "KktResidual",
    "OcpDefinition",
    "OcpDimensions",
    "SensitivityRequest",
    "SolveResult",
    "SqpSettings",
    "StageEval",
    "Status",
    "adjoint",
    "batch_run",
    "finite_difference_oracle",
    "forward",
    "rk4_step",
    "setup_and_factorize",
    "solve_nlp",
    "two_solver_solve_and_sensitivity",
]
