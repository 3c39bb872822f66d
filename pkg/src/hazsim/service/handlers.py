"""Request handlers.  The FastAPI app and the CLI both call these, so a
local run and a round trip through the HTTP layer produce identical
results.
"""

from __future__ import annotations

import numpy as np

from .. import engine, hazards, msm, stats
from ..dataio import (
    build_msm_spec,
    build_single_model,
    read_covariates,
    resolve_timespec,
)
from ..errors import ConfigError, DataError
from .models import (
    CheckConfigRequest,
    CheckConfigResponse,
    SimulateRequest,
    SimulateResponse,
    TableModel,
    ValidateRequest,
    ValidateResponse,
)

SINGLE_MODES = ("parametric", "user")


def _required_mode(cfg) -> str:
    if cfg.mode is None:
        raise ConfigError("config must set a mode (parametric, user or msm)")
    return cfg.mode


def _resolve_table(req: SimulateRequest):
    """The covariate table for a request: inline data wins; a config
    that points at an input file must be resolved by the caller (the
    CLI does this) before reaching the handlers."""
    if req.covariates is not None:
        table = req.covariates.to_covariates()
        if req.config.n is not None and req.config.n != table.n:
            raise ConfigError(
                f"n={req.config.n} disagrees with the {table.n}-row covariate table"
            )
        return table
    if req.config.input is not None:
        raise ConfigError(
            "config names an input file but no covariate data was attached; "
            "load the file and send its rows inline"
        )
    if req.config.n is None:
        raise ConfigError("either n or covariate data is required")
    return None


def _check_seed(cfg) -> int:
    if cfg.seed is None:
        raise ConfigError("a seed is required for simulation")
    return int(cfg.seed)


def _merge_columns(in_names, in_data, out_names, out_data):
    clash = set(in_names) & set(out_names)
    if clash:
        raise DataError(
            f"input column(s) {sorted(clash)} clash with generated output columns"
        )
    names = list(in_names) + list(out_names)
    data = np.hstack([in_data, out_data]) if len(in_names) else out_data
    return names, data


def simulate(req: SimulateRequest) -> SimulateResponse:
    cfg = req.config
    mode = _required_mode(cfg)
    seed = _check_seed(cfg)
    table = _resolve_table(req)
    schema = table.names if table is not None else ()
    in_data = table.data if table is not None else np.zeros((cfg.n or 0, 0))

    if mode in SINGLE_MODES:
        model = build_single_model(cfg, schema)
        maxtime = resolve_timespec(cfg.maxtime, table, "maxtime")
        ltrunc = resolve_timespec(cfg.ltruncated, table, "ltruncated")
        ds = engine.simulate_dataset(
            model,
            table=table.data if table is not None else None,
            n=cfg.n,
            seed=seed,
            maxtime=maxtime,
            ltruncated=ltrunc,
        )
        out = np.column_stack([ds.time, ds.event.astype(float), ds.rc.astype(float)])
        names, data = _merge_columns(schema, in_data, ["time", "event", "rc"], out)
        warnings = []
        if ds.n_capped:
            warnings = [
                f"Warning: {ds.n_capped} survival times were above the upper "
                "limit of maxtime",
                "They have been set to maxtime",
                "You can identify them by rc = 3",
            ]
        return SimulateResponse(
            columns=names,
            rows=TableModel.from_array(names, data).rows,
            n_capped=ds.n_capped,
            notices=[],
            warnings=warnings,
        )

    spec = build_msm_spec(cfg, schema, table)
    ds = msm.simulate_msm_dataset(
        spec,
        table=table.data if table is not None else None,
        n=cfg.n,
        seed=seed,
        workers=cfg.workers,
    )
    names, data = _merge_columns(schema, in_data, ds.names, ds.data)
    return SimulateResponse(
        columns=names,
        rows=TableModel.from_array(names, data).rows,
        n_capped=0,
        notices=ds.notices,
        warnings=[],
    )


def check_config(req: CheckConfigRequest) -> CheckConfigResponse:
    cfg = req.config
    problems: list[str] = []
    try:
        mode = _required_mode(cfg)
    except ConfigError as err:
        return CheckConfigResponse(ok=False, problems=[str(err)])

    if (cfg.n is None) == (cfg.input is None):
        problems.append("exactly one of n or input is required")
    if cfg.seed is None:
        problems.append("a seed is required for simulation")
    if cfg.workers < 1:
        problems.append("workers must be a positive integer")

    table = None
    if cfg.input is not None:
        try:
            table = read_covariates(cfg.input)
        except (DataError, OSError) as err:
            problems.append(f"input: {err}")
    schema = table.names if table is not None else ()

    try:
        if mode in SINGLE_MODES:
            model = build_single_model(cfg, schema)
            resolve_timespec(cfg.maxtime, table, "maxtime")
            resolve_timespec(cfg.ltruncated, table, "ltruncated")
            if cfg.maxtime is None and hazards.closed_kind(model) not in (
                hazards.KIND_PARAM,
                hazards.KIND_PARAM_TDE,
            ):
                problems.append(
                    "maxtime is required: this model inverts numerically and "
                    "needs a finite censoring time"
                )
        else:
            if cfg.maxtime is None:
                problems.append("maxtime is required for multi-state simulation")
            spec = build_msm_spec(cfg, schema, table)
            problems.extend(msm.validate_spec(spec))
    except Exception as err:  # collect rather than fail: this is a linter
        problems.append(str(err))

    return CheckConfigResponse(ok=not problems, problems=problems)


def _single_event_report(cfg, table, names, data) -> list[str]:
    schema = table.names if table is not None else ()
    model = build_single_model(cfg, schema)
    cols = {n: data[:, i] for i, n in enumerate(names)}
    for needed in ("time", "event", "rc"):
        if needed not in cols:
            raise DataError(f"dataset is missing the '{needed}' column")
    time = cols["time"]
    event = cols["event"]
    n = len(time)
    maxtime = resolve_timespec(cfg.maxtime, table, "maxtime")
    ltrunc = resolve_timespec(cfg.ltruncated, table, "ltruncated")
    cap = np.broadcast_to(
        np.asarray(np.inf if maxtime is None else maxtime, dtype=float), (n,)
    )
    entry = np.broadcast_to(np.asarray(ltrunc, dtype=float), (n,))
    rows = table.data if table is not None else np.zeros((n, 0))

    # probability-integral transform: for an event at T the statistic
    # [1 - exp(-H(entry -> T))] / [1 - exp(-H(entry -> cap))] is uniform
    # on (0, 1), censoring accounted for by the denominator
    keep = event == 1
    if not np.any(keep):
        return [f"n={n}, events=0: nothing to test against the model"]
    u = []
    rule = model.rule()
    for i in np.flatnonzero(keep):
        h_t = hazards.cumhaz(model, float(entry[i]), float(time[i]), 0.0, rows[i], rule)
        p_t = -np.expm1(-h_t)
        if np.isfinite(cap[i]):
            h_cap = hazards.cumhaz(model, float(entry[i]), float(cap[i]), 0.0, rows[i], rule)
            p_t /= -np.expm1(-h_cap)
        u.append(p_t)
    d = stats.ks_distance(np.asarray(u), lambda x: np.clip(x, 0.0, 1.0))
    threshold = 1.628 / np.sqrt(len(u))  # 1% critical value
    verdict = "OK" if d < threshold else "LARGE"
    return [
        f"n={n}, events={int(np.sum(keep))}, censored={int(np.sum(~keep))}",
        f"KS distance of the model PIT vs uniform: {d:.6f} "
        f"(1% critical {threshold:.6f}) -> {verdict}",
    ]


def _msm_report(cfg, table, names, data) -> list[str]:
    schema = table.names if table is not None else ()
    spec = build_msm_spec(cfg, schema, table)
    ds = msm.MsmDataset(names=list(names), data=data, notices=[])
    if np.ndim(spec.maxtime) != 0 or spec.maxtime is None:
        raise ConfigError(
            "validation needs a scalar maxtime to pick inspection times"
        )
    horizon = float(spec.maxtime)
    report = []
    oracle_note = None
    k = spec.matrix.n_states
    for frac in (0.25, 0.5, 0.75, 1.0):
        at = frac * horizon
        obs = stats.occupation_fractions(ds, at, n_states=k)
        line = f"t={at:g}: " + "  ".join(
            f"P{s}={obs[s]:.4f}" for s in range(1, k + 1)
        )
        try:
            row = table.data[0] if table is not None and table.n else ()
            exact = stats.oracle_occupation(spec, at, row)
            line += "   model: " + "  ".join(
                f"P{s}={exact[s]:.4f}" for s in range(1, k + 1)
            )
        except Exception as err:
            if oracle_note is None:
                oracle_note = f"model-implied occupation unavailable: {err}"
        report.append(line)
    if oracle_note:
        report.append(oracle_note)
    if table is not None and table.n and np.ptp(table.data, axis=0).any():
        report.append(
            "note: model column uses the first covariate row; observed "
            "fractions pool all rows"
        )
    return report


def validate(req: ValidateRequest) -> ValidateResponse:
    cfg = req.config
    mode = _required_mode(cfg)
    names = list(req.dataset.columns)
    data = req.dataset.to_array()
    generated = {"time", "event", "rc"} if mode in SINGLE_MODES else {
        n for n in names if n.startswith(("time", "state", "event"))
    }
    cov_names = [n for n in names if n not in generated]
    table = None
    if cov_names:
        idx = [names.index(n) for n in cov_names]
        cov = data[:, idx]
        if np.any(np.isnan(cov)):
            raise DataError("covariate columns in the dataset contain missing values")
        from ..dataio import CovariateTable

        table = CovariateTable(names=tuple(cov_names), data=cov)
    if mode in SINGLE_MODES:
        report = _single_event_report(cfg, table, names, data)
    else:
        report = _msm_report(cfg, table, names, data)
    return ValidateResponse(report=report)
