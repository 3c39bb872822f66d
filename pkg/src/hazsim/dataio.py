"""Input/output: covariate CSVs, result CSVs, and the JSON run config.

CSV conventions: header row required, numeric cells, UTF-8.  Output
values are written with 17 significant digits so a read back reproduces
the simulated doubles exactly; missing cells (NaN padding in wide
multi-state tables) are written as empty fields.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field

from . import expr as ex
from . import hazards, msm, quad
from .errors import ConfigError, DataError


@dataclass
class CovariateTable:
    names: tuple[str, ...]
    data: np.ndarray  # (n, c) float64

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.names.index(name)]
        except ValueError:
            raise DataError(
                f"column '{name}' not found; file has {list(self.names)!r}"
            )


def read_covariates(path) -> CovariateTable:
    """Load a covariate CSV.  Every cell must parse as a number; errors
    cite the 1-based row number as it appears in the file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row")
        names = tuple(h.strip() for h in header)
        if any(not n for n in names):
            raise DataError(f"{path}: blank column name in header")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"{path}: duplicate column name(s) {dupes}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(names):
                raise DataError(
                    f"{path}: row {lineno} has {len(rec)} fields, expected {len(names)}"
                )
            vals = []
            for name, cell in zip(names, rec):
                cell = cell.strip()
                if cell == "":
                    raise DataError(
                        f"{path}: row {lineno} column '{name}' is empty; "
                        "covariate tables cannot have missing values"
                    )
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno} column '{name}': "
                        f"{cell!r} is not a number"
                    )
            rows.append(vals)
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    return CovariateTable(names=names, data=data)


def _format_cell(v: float) -> str:
    if math.isnan(v):
        return ""
    return format(v, ".17g")


def write_table(path, names, data) -> None:
    """Write a numeric table (NaN cells become empty fields)."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(names):
        raise DataError(
            f"data shape {data.shape} does not match {len(names)} column names"
        )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names))
        for row in data:
            writer.writerow([_format_cell(v) for v in row])


def read_table(path):
    """Read a numeric table back, empty fields as NaN.  Returns
    (names, data)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row")
        names = tuple(h.strip() for h in header)
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(names):
                raise DataError(
                    f"{path}: row {lineno} has {len(rec)} fields, expected {len(names)}"
                )
            vals = []
            for cell in rec:
                cell = cell.strip()
                if cell == "":
                    vals.append(math.nan)
                else:
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        raise DataError(
                            f"{path}: row {lineno}: {cell!r} is not a number"
                        )
            rows.append(vals)
    return names, np.asarray(rows, dtype=float).reshape(len(rows), len(names))


# ---------------------------------------------------------------------------
# run configuration

Family = Literal["exponential", "weibull", "gompertz"]

# the RunConfig class body has a field named "hazards" which would
# shadow the module inside the class scope
_DEFAULT_NODES = hazards.DEFAULT_NODES


class HazardBlock(BaseModel):
    """One transition hazard in a multi-state config."""

    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    distribution: Family | None = None
    lambdas: list[float] | None = None
    gammas: list[float] | None = None
    mixture: bool = False
    pmix: float = 0.5
    hazard: str | None = None
    loghazard: str | None = None
    chazard: str | None = None
    logchazard: str | None = None
    covariates: dict[str, float] = Field(default_factory=dict)
    tde: dict[str, float] = Field(default_factory=dict)
    tdefunction: str | None = None
    reset: bool = False


class RunConfig(BaseModel):
    """Everything a simulation run needs, mirroring the CLI options."""

    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    mode: Literal["parametric", "user", "msm"] | None = None

    # parametric mode
    distribution: Family | None = None
    lambdas: list[float] | None = None
    gammas: list[float] | None = None
    mixture: bool = False
    pmix: float = 0.5

    # user mode (exactly one scale)
    hazard: str | None = None
    loghazard: str | None = None
    chazard: str | None = None
    logchazard: str | None = None

    # shared effects
    covariates: dict[str, float] = Field(default_factory=dict)
    tde: dict[str, float] = Field(default_factory=dict)
    tdefunction: str | None = None

    # msm mode
    hazards: list[HazardBlock] | None = None
    transmatrix: list[list[int | None]] | None = None
    startstate: int | str = 1

    # run controls
    n: int | None = None
    input: str | None = None
    output: str | None = None
    seed: int | None = None
    maxtime: float | str | None = None
    ltruncated: float | str = 0.0
    nodes: int = _DEFAULT_NODES
    workers: int = 1


def load_config(path) -> RunConfig:
    """Parse a JSON config file into a RunConfig; schema violations are
    reported with their field paths."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} is not valid JSON: {err}")
    return config_from_dict(raw, where=str(path))


def config_from_dict(raw: dict, where: str = "config") -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except pydantic.ValidationError as err:
        lines = []
        for e in err.errors():
            loc = ".".join(str(p) for p in e["loc"]) or "<root>"
            lines.append(f"{loc}: {e['msg']}")
        raise ConfigError(f"{where}: " + "; ".join(lines))


_SCALE_FIELDS = ("hazard", "loghazard", "chazard", "logchazard")


def _parse_bound(source: str, schema, what: str) -> ex.CompiledExpr:
    try:
        return ex.bind(ex.parse(source), schema)
    except ConfigError:
        raise
    except Exception as err:
        raise ConfigError(f"{what}: {err}")


def _build_tde(block, kernel, schema, default_tf=None) -> hazards.TdeSpec | None:
    if not block.tde:
        if block.tdefunction is not None:
            raise ConfigError("tdefunction given without any tde effects")
        return None
    effects = tuple(
        hazards.CovariateEffect(name=k, coef=v) for k, v in block.tde.items()
    )
    if block.tdefunction is not None:
        tf = _parse_bound(block.tdefunction, schema, "tdefunction")
    else:
        if default_tf is None:
            default_tf = hazards.canonical_time_function(kernel)
        tf = ex.bind(default_tf, schema)
    return hazards.TdeSpec(effects=effects, time_function=tf)


def _parametric_kernel(block, where: str):
    if block.lambdas is None or not block.lambdas:
        raise ConfigError(f"{where}: distribution '{block.distribution}' needs lambdas")
    n_comp = 2 if block.mixture else 1
    if len(block.lambdas) != n_comp:
        raise ConfigError(
            f"{where}: mixture requires 2 scale values"
            if block.mixture
            else f"{where}: expected 1 lambda, got {len(block.lambdas)}"
        )
    gammas = block.gammas
    if block.distribution == "exponential":
        if gammas:
            raise ConfigError(f"{where}: exponential takes no gammas")
        gammas = [None] * n_comp
    else:
        if gammas is None or len(gammas) != n_comp:
            got = 0 if gammas is None else len(gammas)
            raise ConfigError(
                f"{where}: mixture requires 2 shape values"
                if block.mixture
                else f"{where}: {block.distribution} expects 1 gamma, got {got}"
            )
    fams = [
        hazards.ParametricFamily(family=block.distribution, lam=l, gamma=g)
        for l, g in zip(block.lambdas, gammas)
    ]
    if block.mixture:
        if not 0.0 < block.pmix < 1.0:
            raise ConfigError(
                f"{where}: pmix must lie strictly inside (0, 1), got {block.pmix}"
            )
        return hazards.MixtureKernel(first=fams[0], second=fams[1], pmix=block.pmix)
    return hazards.ParametricKernel(family=fams[0])


def build_hazard_model(block, schema, where: str = "hazard",
                       nodes: int = hazards.DEFAULT_NODES,
                       default_tf=None) -> hazards.HazardModel:
    """Turn a config block (RunConfig or HazardBlock) into a bound
    HazardModel.  ``default_tf`` overrides the kernel-canonical tde time
    function (multi-state blocks default to linear time)."""
    scales = [f for f in _SCALE_FIELDS if getattr(block, f) is not None]
    if block.distribution is not None and scales:
        raise ConfigError(
            f"{where}: give either a distribution or a user-defined scale, not both"
        )
    if len(scales) > 1:
        raise ConfigError(
            f"{where}: at most one of hazard/loghazard/chazard/logchazard, "
            f"got {scales}"
        )
    if block.distribution is None and not scales:
        raise ConfigError(
            f"{where}: needs a distribution or one of "
            "hazard/loghazard/chazard/logchazard"
        )
    if block.distribution is not None:
        kernel = _parametric_kernel(block, where)
    else:
        scale = scales[0]
        kernel = hazards.UserKernel(
            scale=scale,
            expr=_parse_bound(getattr(block, scale), schema, f"{where}: {scale}"),
        )
        if block.mixture or block.lambdas or block.gammas:
            raise ConfigError(
                f"{where}: lambdas/gammas/mixture apply to parametric "
                "distributions only"
            )
    covs = tuple(
        hazards.CovariateEffect(name=k, coef=v) for k, v in block.covariates.items()
    )
    model = hazards.HazardModel(
        kernel=kernel,
        covariates=covs,
        tde=_build_tde(block, kernel, schema, default_tf),
        gl_order=nodes,
    )
    model = hazards.bind_model(model, schema)
    problems = hazards.validate_model(model)
    if problems:
        raise ConfigError(f"{where}: " + "; ".join(problems))
    return model


def build_single_model(cfg: RunConfig, schema) -> hazards.HazardModel:
    """Model for parametric/user mode from the top-level config fields."""
    mode = cfg.mode
    if mode == "parametric" and cfg.distribution is None:
        raise ConfigError("parametric mode needs a distribution")
    if mode == "user" and not any(getattr(cfg, f) is not None for f in _SCALE_FIELDS):
        raise ConfigError(
            "user mode needs one of hazard/loghazard/chazard/logchazard"
        )
    return build_hazard_model(cfg, schema, where="model", nodes=cfg.nodes)


def build_msm_spec(cfg: RunConfig, schema, table: CovariateTable | None) -> msm.MsmSpec:
    """MsmSpec from a config: transition matrix, one model per numbered
    transition, per-observation settings resolved against the table."""
    if not cfg.hazards:
        raise ConfigError("msm mode needs a non-empty hazards list")
    for field in ("distribution", *_SCALE_FIELDS):
        if getattr(cfg, field) is not None:
            raise ConfigError(
                f"msm mode defines hazards inside the hazards list; "
                f"top-level '{field}' is not allowed"
            )
    if cfg.transmatrix is not None:
        matrix = msm.validate_transmatrix(cfg.transmatrix)
        if matrix.n_transitions != len(cfg.hazards):
            raise ConfigError(
                f"transition matrix defines {matrix.n_transitions} transitions "
                f"but {len(cfg.hazards)} hazard blocks were given"
            )
    else:
        # default: competing risks with one cause per hazard block
        matrix = msm.default_cr_matrix(len(cfg.hazards))
    transition_hazards = tuple(
        msm.TransitionHazard(
            model=build_hazard_model(
                block, schema, where=f"hazard {i + 1}", nodes=cfg.nodes,
                default_tf=hazards.LINEAR_TIME_AST,
            ),
            reset=block.reset,
        )
        for i, block in enumerate(cfg.hazards)
    )
    return msm.MsmSpec(
        matrix=matrix,
        hazards=transition_hazards,
        maxtime=resolve_timespec(cfg.maxtime, table, "maxtime"),
        ltruncated=resolve_timespec(cfg.ltruncated, table, "ltruncated"),
        startstate=resolve_timespec(cfg.startstate, table, "startstate"),
    )


def resolve_timespec(value, table: CovariateTable | None, name: str):
    """A per-run setting that is either a number or '@column'."""
    if value is None:
        return None
    if isinstance(value, str):
        if not value.startswith("@"):
            raise ConfigError(
                f"{name}: expected a number or '@column', got {value!r}"
            )
        col = value[1:]
        if table is None:
            raise ConfigError(
                f"{name} references column '{col}' but no input data was given"
            )
        return table.column(col)
    return value
