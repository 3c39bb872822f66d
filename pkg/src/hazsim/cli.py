"""Command-line interface.

Subcommands ``parametric``, ``user`` and ``msm`` run a simulation from a
JSON config (flags override config fields), ``check-config`` lints a
config, ``validate`` compares a simulated dataset back against its
config, and ``serve`` starts the HTTP service.  By default everything
executes in-process; ``--server URL`` sends the same request to a
running instance instead.

Exit codes: 0 success, 1 runtime failure (bad data, numerical failure,
I/O), 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .dataio import config_from_dict, load_config, read_covariates, read_table, write_table
from .errors import (
    BindingError,
    ConfigError,
    ExpressionError,
    HazsimError,
)
from .service import handlers
from .service.models import (
    CheckConfigRequest,
    SimulateRequest,
    TableModel,
    ValidateRequest,
)

_USAGE_ERRORS = (ConfigError, ExpressionError, BindingError)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    p.add_argument("--n", type=int, help="number of observations (no input file)")
    p.add_argument("--input", help="covariate CSV (overrides config)")
    p.add_argument("--output", help="output CSV path (default: stdout)")
    p.add_argument("--maxtime", help="censoring time: number or @column")
    p.add_argument("--ltruncated", help="delayed entry time: number or @column")
    p.add_argument("--startstate", help="starting state: integer or @column (msm)")
    p.add_argument("--nodes", type=int, help="quadrature nodes (default 30)")
    p.add_argument("--workers", type=int,
                   help="threads for multi-state path simulation (default 1)")
    p.add_argument("--server", help="POST to a running service instead of in-process")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hazsim",
        description="Simulate survival and multi-state event-history data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, blurb in (
        ("parametric", "standard parametric survival models"),
        ("user", "user-defined hazard or cumulative hazard expressions"),
        ("msm", "competing risks and general multi-state models"),
    ):
        _add_run_flags(sub.add_parser(name, help=f"simulate from {blurb}"))

    pv = sub.add_parser("validate", help="compare a simulated dataset to its config")
    pv.add_argument("--config", required=True)
    pv.add_argument("--data", required=True, help="dataset CSV produced by a run")
    pv.add_argument("--server", help="POST to a running service instead of in-process")

    pc = sub.add_parser("check-config", help="lint a config without running it")
    pc.add_argument("--config", required=True)
    pc.add_argument("--server", help="POST to a running service instead of in-process")

    ps = sub.add_parser("serve", help="start the HTTP service")
    ps.add_argument("--host", default="127.0.0.1")
    ps.add_argument("--port", type=int, default=8000)
    return parser


def _number_or_column(raw: str, flag: str):
    if raw.startswith("@"):
        return raw
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"--{flag} expects a number or @column, got {raw!r}")


def _merged_config(args):
    cfg = load_config(args.config)
    updates = {}
    if cfg.mode is None:
        updates["mode"] = args.command
    elif cfg.mode != args.command:
        raise ConfigError(
            f"config sets mode '{cfg.mode}' but the '{args.command}' "
            "subcommand was invoked"
        )
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.n is not None:
        updates["n"] = args.n
        updates.setdefault("input", None)
    if args.input is not None:
        updates["input"] = args.input
        if args.n is None:
            updates["n"] = None
    if args.output is not None:
        updates["output"] = args.output
    if args.maxtime is not None:
        updates["maxtime"] = _number_or_column(args.maxtime, "maxtime")
    if args.ltruncated is not None:
        updates["ltruncated"] = _number_or_column(args.ltruncated, "ltruncated")
    if args.startstate is not None:
        raw = args.startstate
        updates["startstate"] = raw if raw.startswith("@") else int(raw)
    if args.nodes is not None:
        updates["nodes"] = args.nodes
    if getattr(args, "workers", None) is not None:
        updates["workers"] = args.workers
    cfg = config_from_dict({**cfg.model_dump(), **updates}, where=args.config)
    if (cfg.n is None) == (cfg.input is None):
        raise ConfigError("exactly one of n or an input file is required")
    return cfg


def _post(server: str, path: str, payload) -> dict:
    import httpx

    url = server.rstrip("/") + path
    resp = httpx.post(url, json=payload, timeout=600.0)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        if resp.status_code == 422:
            raise ConfigError(f"server rejected the request: {detail}")
        raise HazsimError(f"server error {resp.status_code}: {detail}")
    return resp.json()


def _run_simulation(args) -> int:
    cfg = _merged_config(args)
    covariates = None
    if cfg.input is not None:
        table = read_covariates(cfg.input)
        covariates = TableModel.from_array(table.names, table.data)
    req = SimulateRequest(config=cfg, covariates=covariates)
    if args.server:
        resp = _post(args.server, "/simulate", req.model_dump(mode="json"))
        columns, rows = resp["columns"], resp["rows"]
        notices, warnings = resp["notices"], resp["warnings"]
    else:
        out = handlers.simulate(req)
        columns, rows = out.columns, out.rows
        notices, warnings = out.notices, out.warnings

    data = TableModel(columns=columns, rows=rows).to_array()
    if cfg.output:
        write_table(cfg.output, columns, data)
    else:
        import csv as _csv
        import math as _math

        writer = _csv.writer(sys.stdout)
        writer.writerow(columns)
        for row in data:
            writer.writerow(
                ["" if _math.isnan(v) else format(v, ".17g") for v in row]
            )
    for line in notices:
        print(line)
    for line in warnings:
        print(line, file=sys.stderr)
    return 0


def _run_validate(args) -> int:
    cfg = load_config(args.config)
    names, data = read_table(args.data)
    req = ValidateRequest(
        config=cfg, dataset=TableModel.from_array(names, data)
    )
    if args.server:
        resp = _post(args.server, "/validate", req.model_dump(mode="json"))
        report = resp["report"]
    else:
        report = handlers.validate(req).report
    for line in report:
        print(line)
    return 0


def _run_check_config(args) -> int:
    cfg = load_config(args.config)
    req = CheckConfigRequest(config=cfg)
    if args.server:
        resp = _post(args.server, "/check-config", req.model_dump(mode="json"))
        ok, problems = resp["ok"], resp["problems"]
    else:
        out = handlers.check_config(req)
        ok, problems = out.ok, out.problems
    if ok:
        print("ok")
        return 0
    for line in problems:
        print(line, file=sys.stderr)
    return 2


def _run_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command in ("parametric", "user", "msm"):
            return _run_simulation(args)
        if args.command == "validate":
            return _run_validate(args)
        if args.command == "check-config":
            return _run_check_config(args)
        if args.command == "serve":
            return _run_serve(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except _USAGE_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except HazsimError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
