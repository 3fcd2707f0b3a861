"""Run configuration: a single TOML file with explicitly dimensioned arrays.

Every matrix is a table ``{rows = R, cols = C, data = [...]}`` with
row-major data, so shape mistakes are caught against the declared dims
and reported with their full path (``model.A.rows``, ``weights.P.data``).
Vectors are plain arrays. The full grammar is documented in the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError, RobustKFError
from .filters import FILTER_KINDS
from .losses import LossParams
from .model import LinearConstraintSet, StateSpaceModel, WeightConfig
from .sim import NoiseSpec

_NUMBER = (int, float)


@dataclass
class RunConfig:
    """Parsed configuration for the CLI commands."""

    model: StateSpaceModel
    weights: WeightConfig
    loss: LossParams | None = None
    constraints: LinearConstraintSet | None = None
    kind: str | None = None
    x0: np.ndarray | None = None
    horizon: int | None = None
    noise: NoiseSpec | None = None
    sim_x0: np.ndarray | None = None
    compare_filters: list[str] = field(default_factory=list)
    compare_seeds: list[int] = field(default_factory=list)
    measurements_path: Path | None = None
    smooth_cap: int | None = None
    out_dir: Path = Path(".")


def _get(table: dict, key: str, path: str, kind: type | tuple, required: bool = True):
    if key not in table:
        if required:
            raise ConfigError(f"missing field {path}.{key}", field=f"{path}.{key}")
        return None
    value = table[key]
    if kind is float and isinstance(value, bool):
        raise ConfigError(f"{path}.{key} must be a number", field=f"{path}.{key}")
    if kind is float and isinstance(value, int):
        return float(value)
    if not isinstance(value, kind):
        want = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(f"{path}.{key} must be {want}, got {type(value).__name__}",
                          field=f"{path}.{key}")
    return value


def _number_list(table: dict, key: str, path: str, required: bool = True):
    raw = _get(table, key, path, list, required)
    if raw is None:
        return None
    for i, item in enumerate(raw):
        if isinstance(item, bool) or not isinstance(item, _NUMBER):
            raise ConfigError(f"{path}.{key}[{i}] must be a number", field=f"{path}.{key}")
    return np.asarray(raw, dtype=float)


def _matrix(table: dict, key: str, path: str, required: bool = True):
    sub = table.get(key)
    if sub is None:
        if required:
            raise ConfigError(f"missing table {path}.{key}", field=f"{path}.{key}")
        return None
    where = f"{path}.{key}"
    if not isinstance(sub, dict):
        raise ConfigError(f"{where} must be a table with rows/cols/data", field=where)
    rows = _get(sub, "rows", where, int)
    cols = _get(sub, "cols", where, int)
    data = _number_list(sub, "data", where)
    if rows < 0 or cols < 0:
        raise ConfigError(f"{where} dims must be nonnegative", field=where)
    if data.shape[0] != rows * cols:
        raise ConfigError(
            f"{where}.data has {data.shape[0]} entries, expected rows*cols = {rows * cols}",
            field=f"{where}.data",
        )
    return data.reshape(rows, cols)


def _wrap(section: str, builder):
    try:
        return builder()
    except ConfigError:
        raise
    except RobustKFError as exc:
        raise ConfigError(f"{section}: {exc}", field=section) from exc


def load_config(path) -> RunConfig:
    """Parse and validate a config file; raises ConfigError with field paths."""
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            doc = tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None

    model_tbl = _get(doc, "model", "", dict)
    model = _wrap("model", lambda: StateSpaceModel(
        A=_matrix(model_tbl, "A", "model"),
        B=_matrix(model_tbl, "B", "model"),
        C=_matrix(model_tbl, "C", "model"),
    ))

    weights_tbl = _get(doc, "weights", "", dict)
    weights = _wrap("weights", lambda: WeightConfig(
        P=_matrix(weights_tbl, "P", "weights"),
        Q=_matrix(weights_tbl, "Q", "weights"),
        R=_matrix(weights_tbl, "R", "weights", required=False),
        r=_number_list(weights_tbl, "r", "weights", required=False),
    ))

    loss = None
    if "loss" in doc:
        loss_tbl = _get(doc, "loss", "", dict)
        epsilon = _number_list(loss_tbl, "epsilon", "loss")
        kappa = _number_list(loss_tbl, "kappa", "loss", required=False)
        loss = _wrap("loss", lambda: LossParams(epsilon=epsilon, kappa=kappa))

    constraints = None
    if "constraints" in doc:
        cons_tbl = _get(doc, "constraints", "", dict)
        constraints = _wrap("constraints", lambda: LinearConstraintSet(
            U=_matrix(cons_tbl, "U", "constraints"),
            V=_matrix(cons_tbl, "V", "constraints"),
            a=_number_list(cons_tbl, "a", "constraints"),
        ))

    kind = None
    x0 = None
    if "filter" in doc:
        filt_tbl = _get(doc, "filter", "", dict)
        kind = _get(filt_tbl, "kind", "filter", str)
        if kind not in FILTER_KINDS:
            raise ConfigError(
                f"filter.kind must be one of {FILTER_KINDS}, got {kind!r}", field="filter.kind"
            )
        x0 = _number_list(filt_tbl, "x0", "filter", required=False)
        if x0 is not None and x0.shape[0] != model.n:
            raise ConfigError(
                f"filter.x0 must have length {model.n}, got {x0.shape[0]}", field="filter.x0"
            )

    horizon = None
    noise = None
    sim_x0 = None
    if "sim" in doc:
        sim_tbl = _get(doc, "sim", "", dict)
        horizon = _get(sim_tbl, "horizon", "sim", int)
        if horizon < 1:
            raise ConfigError("sim.horizon must be at least 1", field="sim.horizon")
        seed = _get(sim_tbl, "seed", "sim", int, required=False)
        prob = _get(sim_tbl, "outlier_probability", "sim", float, required=False)
        mag = _get(sim_tbl, "outlier_magnitude", "sim", float, required=False)
        noise = _wrap("sim", lambda: NoiseSpec(
            process_std=_number_list(sim_tbl, "process_std", "sim"),
            measurement_std=_number_list(sim_tbl, "measurement_std", "sim"),
            measurement_bias=_number_list(sim_tbl, "measurement_bias", "sim", required=False),
            outlier_probability=0.0 if prob is None else prob,
            outlier_magnitude=0.0 if mag is None else mag,
            seed=0 if seed is None else seed,
        ))
        sim_x0 = _number_list(sim_tbl, "x0_true", "sim", required=False)
        if sim_x0 is not None and sim_x0.shape[0] != model.n:
            raise ConfigError(
                f"sim.x0_true must have length {model.n}, got {sim_x0.shape[0]}",
                field="sim.x0_true",
            )

    compare_filters: list[str] = []
    compare_seeds: list[int] = []
    if "compare" in doc:
        cmp_tbl = _get(doc, "compare", "", dict)
        raw_filters = _get(cmp_tbl, "filters", "compare", list)
        for i, name in enumerate(raw_filters):
            if not isinstance(name, str) or name not in FILTER_KINDS:
                raise ConfigError(
                    f"compare.filters[{i}] must be one of {FILTER_KINDS}", field="compare.filters"
                )
            compare_filters.append(name)
        raw_seeds = _get(cmp_tbl, "seeds", "compare", list, required=False)
        if raw_seeds is not None:
            for i, s in enumerate(raw_seeds):
                if isinstance(s, bool) or not isinstance(s, int):
                    raise ConfigError(f"compare.seeds[{i}] must be an integer", field="compare.seeds")
                compare_seeds.append(s)

    measurements_path = None
    if "io" in doc:
        io_tbl = _get(doc, "io", "", dict)
        raw_path = _get(io_tbl, "measurements", "io", str, required=False)
        if raw_path is not None:
            candidate = Path(raw_path)
            # relative paths resolve against the config file location
            measurements_path = candidate if candidate.is_absolute() else path.parent / candidate

    smooth_cap = None
    if "smooth" in doc:
        smooth_tbl = _get(doc, "smooth", "", dict)
        smooth_cap = _get(smooth_tbl, "cap", "smooth", int, required=False)
        if smooth_cap is not None and smooth_cap < 1:
            raise ConfigError("smooth.cap must be at least 1", field="smooth.cap")

    return RunConfig(
        model=model,
        weights=weights,
        loss=loss,
        constraints=constraints,
        kind=kind,
        x0=x0,
        horizon=horizon,
        noise=noise,
        sim_x0=sim_x0,
        compare_filters=compare_filters,
        compare_seeds=compare_seeds,
        measurements_path=measurements_path,
        smooth_cap=smooth_cap,
    )
