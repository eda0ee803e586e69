"""Command-line front end for the built-in examples.

    diffocp example tutorial --tau-min 0 --tau-min 1e-2 --out tutorial.csv
    diffocp bench --u-max 1 --workers 4 --out lqr.csv
    diffocp sens-compare pendulum --theta 1.0 --out compare.csv

Results go to ``--out`` (CSV or JSON); wall-clock timings go to a sidecar
``<out>.timings.csv`` so the result file itself is reproducible.
Exit codes: 0 success, 2 configuration error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import problems
from .experiments import (
    EXAMPLES,
    TIMING_SCHEMA,
    ConfigError,
    ExampleSpec,
    Timings,
    jump_settings,
    pendulum_nominal_settings,
    run_example,
    tutorial_settings,
)
from .io import emit_csv, emit_json
from .ocp import HessianMode
from .sensitivity import (
    ActiveSetError,
    DegeneracyWarning,
    adjoint,
    active_set_sensitivity_oracle,
    finite_difference_oracle,
    forward,
    setup_and_factorize,
)
from .sqp import SqpSettings, solve_nlp

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--tau-min", type=float, action="append", dest="tau_min", help="barrier floor; repeatable")
    p.add_argument("--tol", type=float, help="solver tolerance")
    p.add_argument("--hessian", choices=["exact", "gauss-newton"], help="nominal solver Hessian")
    p.add_argument("--seed", type=int, help="benchmark data seed")
    p.add_argument("--workers", type=int, help="parallel workers for batch runs")
    p.add_argument("--out", help="output file (default <name>.<format>)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--config", help="JSON file with example settings; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diffocp", description="Differentiable OCP examples")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("example", help="run a built-in example sweep")
    ex.add_argument("name", choices=EXAMPLES)
    ex.add_argument("--grid", type=float, nargs=3, metavar=("START", "STOP", "NUM"))
    ex.add_argument("--inits", type=float, nargs="+", help="initial guesses (jump)")
    ex.add_argument("--u-max", type=float, dest="u_max")
    ex.add_argument("--n-batch", type=int, dest="n_batch")
    ex.add_argument("--no-fd", action="store_false", dest="fd", default=None, help="skip FD oracle columns")
    _common(ex)

    bench = sub.add_parser("bench", help="bounded LQR batch with adjoint sensitivities")
    bench.add_argument("--u-max", type=float, dest="u_max")
    bench.add_argument("--n-batch", type=int, dest="n_batch")
    bench.add_argument("--horizon", type=int, dest="N")
    _common(bench)

    cmp_ = sub.add_parser("sens-compare", help="compare sensitivity methods at given parameters")
    cmp_.add_argument("name", choices=["tutorial", "jump", "pendulum"])
    cmp_.add_argument("--theta", type=float, action="append", required=True, help="parameter value; repeatable")
    cmp_.add_argument("--x-init", type=float, default=-1.0, dest="x_init", help="initial guess (jump)")
    _common(cmp_)
    return parser


_SPEC_KEYS = ("tau_min", "tol", "hessian", "seed", "workers", "grid", "inits", "u_max", "n_batch", "fd", "N")


def spec_from_args(name: str, args: argparse.Namespace) -> ExampleSpec:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data.pop("out", None)
        data.pop("format", None)
        if data.setdefault("name", name) != name:
            raise ConfigError(f"config is for example {data['name']!r}, not {name!r}")
    data["name"] = name
    for key in _SPEC_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    return ExampleSpec.from_dict(data)


def _write(rows, schema, timings: Timings, out: Path, fmt: str):
    if fmt == "json":
        emit_json(rows, schema, out)
    else:
        emit_csv(rows, schema, out)
    emit_csv(timings.entries, TIMING_SCHEMA, out.with_name(out.name + ".timings.csv"))


# -- sens-compare -----------------------------------------------------------------

COMPARE_SCHEMA = ["theta", "w_index", "block", "forward", "adjoint", "fd", "active_set", "gauss_newton", "status"]


def _compare_setup(name: str, spec: ExampleSpec, x_init: float):
    tau = spec.tau_min[0]
    if name == "tutorial":
        return problems.tutorial_ocp(), tutorial_settings(spec.tol, tau), None
    if name == "jump":
        return problems.jump_ocp(), jump_settings(spec.tol, tau), problems.scalar_iterate(x_init)
    return problems.pendulum_ocp(), pendulum_nominal_settings(spec.tol, tau, spec.hessian_mode()), None


def run_sens_compare(name: str, thetas, spec: ExampleSpec, x_init: float = -1.0):
    """Rows of ``dw/dtheta`` from every available method at each ``theta``."""
    ocp, settings, init = _compare_setup(name, spec, x_init)
    d = ocp.dims
    blocks = np.repeat(["z", "lam", "mu", "s"], [d.n_z, d.n_g, d.n_h, d.n_h])
    fd_settings = SqpSettings(tol=min(settings.tol, 1e-10), tau_min=settings.tau_min, max_iter=200,
                              comp_tol=settings.comp_tol, hessian=HessianMode.exact(settings.hessian.levenberg_marquardt))
    rows, timings = [], Timings()
    for th in thetas:
        t0 = time.perf_counter()
        res = solve_nlp(ocp, [th], init, settings)
        if not res.converged:
            rows.append({"theta": th, "status": res.status})
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegeneracyWarning)
            ws = setup_and_factorize(ocp, res)
            ws_gn = setup_and_factorize(ocp, res, hessian=HessianMode.gauss_newton(), allow_inexact_hessian=True)
        fwd = forward(ws).columns[:, 0]
        adj = adjoint(ws, np.eye(d.n_w)).s_adj[:, 0]
        gn = forward(ws_gn).columns[:, 0]
        fd = finite_difference_oracle(ocp, [th], fd_settings, init=res.w)[:, 0]
        act = np.full(d.n_w, np.nan)
        if settings.tau_min == 0:
            try:
                a = active_set_sensitivity_oracle(ocp, res)
                act[: d.n_z + d.n_g] = np.concatenate([a.dz[:, 0], a.dlam[:, 0]])
                mu_idx = d.n_z + d.n_g + np.flatnonzero(a.active)
                act[mu_idx] = a.dmu_active[:, 0]
            except (ActiveSetError, np.linalg.LinAlgError):
                pass
        for i in range(d.n_w):
            rows.append({"theta": th, "w_index": i, "block": blocks[i], "forward": fwd[i], "adjoint": adj[i],
                         "fd": fd[i], "active_set": act[i], "gauss_newton": gn[i], "status": res.status})
        timings.add(f"theta={th:g}", time.perf_counter() - t0)
    return rows, COMPARE_SCHEMA, timings


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        name = {"bench": "lqr_bench"}.get(args.command, getattr(args, "name", None))
        spec = spec_from_args(name, args)
        out = Path(args.out or f"{name}.{args.format}")
    except ConfigError as exc:
        print(f"diffocp: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "sens-compare":
            rows, schema, timings = run_sens_compare(name, args.theta, spec, args.x_init)
        else:
            rows, schema, timings = run_example(spec)
        _write(rows, schema, timings, out, args.format)
    except Exception as exc:  # noqa: BLE001 - report and map to the exit code
        print(f"diffocp: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
