"""Command line interface: simulate | filter | smooth | compare.

Every command takes --config <path> (TOML, see README for the grammar),
--out <dir> for result files, and --seed <int> to override the configured
simulation seed. Exit codes: 0 success, 2 configuration error, 3 input
ingestion error, 4 solver failure, 1 other package errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import csvio, filters, sim, smoother
from .config import RunConfig, load_config
from .losses import LossParams
from .errors import (
    ConfigError,
    DimensionError,
    IngestionError,
    ParameterDomainError,
    RobustKFError,
    SimulationError,
    SolverFailure,
)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_SOLVER = 4

_CONSTRAINED = ("constrained_eps", "constrained_huber")


def _write_summary(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.json", "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _require(condition: bool, message: str, field: str | None = None) -> None:
    if not condition:
        raise ConfigError(message, field=field)


def _default_x0(config: RunConfig) -> np.ndarray:
    return np.zeros(config.model.n) if config.x0 is None else config.x0


def _constraints_for(config: RunConfig, kind: str):
    if kind in _CONSTRAINED:
        _require(config.constraints is not None,
                 f"filter kind {kind!r} needs a [constraints] section", field="constraints")
        return config.constraints
    return None


def _loss_for(config: RunConfig, kind: str) -> LossParams | None:
    """Loss parameters adapted to one filter kind in a comparison run.

    kappa only applies to the huber family; the quadratic kinds get the
    same epsilon with the no-tail default so one [loss] section can serve
    a mixed filter list.
    """
    if kind == "kalman":
        return None
    _require(config.loss is not None, "compare needs a [loss] section", field="loss")
    if kind in ("eps_huber", "constrained_huber"):
        return config.loss
    return LossParams(epsilon=config.loss.epsilon)


def cmd_simulate(config: RunConfig) -> int:
    """Generate measurements.csv and truth.csv from the [sim] section."""
    _require(config.noise is not None and config.horizon is not None,
             "simulate needs a [sim] section", field="sim")
    x0 = np.zeros(config.model.n) if config.sim_x0 is None else config.sim_x0
    trace = sim.simulate_trace(config.model, x0, config.horizon, config.noise)

    out = config.out_dir
    measurements_path = out / "measurements.csv"
    truth_path = out / "truth.csv"
    csvio.write_rows(
        measurements_path,
        csvio.indexed_header("y", config.model.m),
        ([t + 1, *row] for t, row in enumerate(trace.measurements)),
    )
    csvio.write_rows(
        truth_path,
        csvio.indexed_header("x", config.model.n),
        ([t + 1, *row] for t, row in enumerate(trace.states)),
    )
    _write_summary(out, {
        "command": "simulate",
        "status": "ok",
        "horizon": config.horizon,
        "seed": config.noise.seed,
        "outlier_steps": trace.outlier_steps,
        "outputs": {"measurements": str(measurements_path), "truth": str(truth_path)},
    })
    return EXIT_OK


def _diagnostic_row(state: filters.FilterState, p: int) -> list:
    row: list = [state.step_index]
    row.extend(state.last_theta)
    if p > 0:
        row.extend(state.last_xi)
    row.append(state.last_status)
    return row


def cmd_filter(config: RunConfig) -> int:
    """Run the configured filter over a measurement CSV."""
    _require(config.kind is not None, "filter needs [filter].kind", field="filter.kind")
    _require(config.measurements_path is not None,
             "filter needs [io].measurements", field="io.measurements")
    measurements = csvio.read_indexed(config.measurements_path, "y")
    if measurements.shape[1] != config.model.m:
        raise IngestionError(
            f"{config.measurements_path}: {measurements.shape[1]} measurement columns, "
            f"model expects {config.model.m}"
        )
    constraints = _constraints_for(config, config.kind)
    p = constraints.p if constraints is not None else 0

    failure: SolverFailure | None = None
    try:
        trajectory = filters.run(
            config.kind,
            config.model,
            config.weights,
            measurements,
            loss=config.loss,
            constraints=constraints,
            x0=_default_x0(config),
        )
    except SolverFailure as exc:
        failure = exc
        trajectory = list(getattr(exc, "partial", []))

    out = config.out_dir
    estimates_path = out / "estimates.csv"
    diagnostics_path = out / "diagnostics.csv"
    csvio.write_rows(
        estimates_path,
        csvio.indexed_header("xhat", config.model.n),
        ([state.step_index, *state.x_hat] for state in trajectory),
    )
    diag_header = csvio.indexed_header("theta", config.model.m)
    if p > 0:
        diag_header += [f"xi_{i + 1}" for i in range(p)]
    diag_header.append("status")
    diag_rows = [_diagnostic_row(state, p) for state in trajectory]
    if failure is not None:
        solution = getattr(failure, "solution", None)
        failed: list = [failure.step_index]
        theta = solution.theta if solution is not None else np.full(config.model.m, np.nan)
        failed.extend(theta)
        if p > 0:
            xi = solution.xi if solution is not None else np.full(p, np.nan)
            failed.extend(xi)
        failed.append(failure.status)
        diag_rows.append(failed)
    csvio.write_rows(diagnostics_path, diag_header, diag_rows)

    _write_summary(out, {
        "command": "filter",
        "status": "ok" if failure is None else f"solver_failure:{failure.status}",
        "kind": config.kind,
        "steps_completed": len(trajectory),
        "failed_step": None if failure is None else failure.step_index,
        "outputs": {"estimates": str(estimates_path), "diagnostics": str(diagnostics_path)},
    })
    if failure is not None:
        print(f"error: {failure}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_smooth(config: RunConfig) -> int:
    """Batch-smooth a measurement CSV with the configured variant."""
    _require(config.kind is not None, "smooth needs [filter].kind", field="filter.kind")
    _require(config.kind != "kalman",
             "smooth works with the four robust variants, not 'kalman'", field="filter.kind")
    _require(config.loss is not None, "smooth needs a [loss] section", field="loss")
    _require(config.measurements_path is not None,
             "smooth needs [io].measurements", field="io.measurements")
    measurements = csvio.read_indexed(config.measurements_path, "y")
    if measurements.shape[1] != config.model.m:
        raise IngestionError(
            f"{config.measurements_path}: {measurements.shape[1]} measurement columns, "
            f"model expects {config.model.m}"
        )
    constraints = _constraints_for(config, config.kind)
    problem = smoother.BatchProblem(
        model=config.model,
        weights=config.weights,
        loss=config.loss,
        measurements=measurements,
        x0=_default_x0(config),
        constraints=constraints,
    )
    solution = smoother.smooth(problem, config.kind, cap=config.smooth_cap)
    primal = smoother.primal_objective(problem, solution, config.kind)
    gap = abs(primal - solution.objective)

    out = config.out_dir
    smoothed_path = out / "smoothed.csv"
    csvio.write_rows(
        smoothed_path,
        csvio.indexed_header("xhat", config.model.n),
        ([t, *row] for t, row in enumerate(solution.x_hat)),
    )
    _write_summary(out, {
        "command": "smooth",
        "status": "ok",
        "kind": config.kind,
        "horizon": problem.horizon,
        "objective": solution.objective,
        "primal_objective": primal,
        "duality_gap": gap,
        "iterations": solution.iterations,
        "outputs": {"smoothed": str(smoothed_path)},
    })
    return EXIT_OK


def cmd_compare(config: RunConfig) -> int:
    """Run several filters on the same simulated sequences and tabulate RMSE."""
    _require(config.noise is not None and config.horizon is not None,
             "compare needs a [sim] section", field="sim")
    _require(bool(config.compare_filters),
             "compare needs [compare].filters", field="compare.filters")
    seeds = config.compare_seeds or [config.noise.seed]
    x0_true = np.zeros(config.model.n) if config.sim_x0 is None else config.sim_x0
    x0_filter = _default_x0(config)

    rows: list[list] = []
    per_kind: dict[str, list[np.ndarray]] = {kind: [] for kind in config.compare_filters}
    for seed in seeds:
        noise = replace(config.noise, seed=seed)
        trace = sim.simulate_trace(config.model, x0_true, config.horizon, noise)
        for kind in config.compare_filters:
            trajectory = filters.run(
                kind,
                config.model,
                config.weights,
                trace.measurements,
                loss=_loss_for(config, kind),
                constraints=_constraints_for(config, kind),
                x0=x0_filter,
            )
            estimates = np.vstack([state.x_hat for state in trajectory])
            report = sim.score(trace.states, estimates, outlier_steps=trace.outlier_steps)
            per_kind[kind].append(report.rmse_per_state)
            rows.append([kind, str(seed), *report.rmse_per_state])

    means = {kind: np.mean(np.vstack(vals), axis=0) for kind, vals in per_kind.items()}
    for kind in config.compare_filters:
        rows.append([kind, "mean", *means[kind]])

    out = config.out_dir
    summary_path = out / "summary.csv"
    header = ["filter", "seed"] + [f"rmse_x{j + 1}" for j in range(config.model.n)]
    csvio.write_rows(summary_path, header, rows)
    _write_summary(out, {
        "command": "compare",
        "status": "ok",
        "seeds": list(seeds),
        "horizon": config.horizon,
        "mean_rmse": {kind: list(map(float, vals)) for kind, vals in means.items()},
        "outputs": {"summary": str(summary_path)},
    })
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "smooth": cmd_smooth,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustkf",
        description="Robust recursive state estimation with dead-zone and Huber losses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in _COMMANDS.items():
        cmd = sub.add_parser(name, help=func.__doc__)
        cmd.add_argument("--config", required=True, help="path to the TOML run configuration")
        cmd.add_argument("--out", default=".", help="directory for result files")
        cmd.add_argument("--seed", type=int, default=None, help="override the configured seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        config.out_dir = Path(args.out)
        if args.seed is not None:
            if config.noise is not None:
                config.noise = replace(config.noise, seed=args.seed)
            if config.compare_seeds:
                config.compare_seeds = [args.seed]
        return _COMMANDS[args.command](config)
    except ConfigError as exc:
        where = f" ({exc.field})" if exc.field else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestionError as exc:
        where = f" (row {exc.row})" if exc.row else ""
        print(f"ingestion error{where}: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ParameterDomainError, DimensionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    except RobustKFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
