"""HTTP layer: same results as the in-process engine, JSON error mapping."""

from __future__ import annotations

import numpy as np
import pytest
from fastapi.testclient import TestClient

from hazsim import engine
from hazsim.dataio import config_from_dict, build_single_model
from hazsim.service.app import app

client = TestClient(app, raise_server_exceptions=False)


WEIBULL = {
    "mode": "parametric",
    "distribution": "weibull",
    "lambdas": [0.1],
    "gammas": [1.2],
    "seed": 11,
    "n": 25,
}

MSM = {
    "mode": "msm",
    "transmatrix": [[None, 1, 2], [None, None, 3], [None, None, None]],
    "hazards": [
        {"distribution": "exponential", "lambdas": [0.3]},
        {"distribution": "exponential", "lambdas": [0.1]},
        {"distribution": "exponential", "lambdas": [0.2]},
    ],
    "seed": 5,
    "n": 30,
    "maxtime": 4.0,
}


def test_health():
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


def test_simulate_matches_direct_engine_call():
    resp = client.post("/simulate", json={"config": WEIBULL})
    assert resp.status_code == 200
    body = resp.json()
    assert body["columns"] == ["time", "event", "rc"]
    assert body["notices"] == []
    got = np.asarray(body["rows"], dtype=float)

    model = build_single_model(config_from_dict(WEIBULL), ())
    ds = engine.simulate_dataset(model, n=25, seed=11)
    np.testing.assert_array_equal(got[:, 0], ds.time)
    np.testing.assert_array_equal(got[:, 1], ds.event)


def test_simulate_with_inline_covariates():
    cfg = {**WEIBULL, "n": None, "covariates": {"trt": -0.5}}
    table = {"columns": ["trt"], "rows": [[1.0], [0.0], [1.0]]}
    resp = client.post("/simulate", json={"config": cfg, "covariates": table})
    assert resp.status_code == 200
    body = resp.json()
    assert body["columns"] == ["trt", "time", "event", "rc"]
    assert [r[0] for r in body["rows"]] == [1.0, 0.0, 1.0]


def test_simulate_msm_notices_and_null_padding():
    resp = client.post("/simulate", json={"config": MSM})
    assert resp.status_code == 200
    body = resp.json()
    assert any(line.startswith("variables time0 to time") for line in body["notices"])
    assert any(line.startswith("variables state0 to state") for line in body["notices"])
    # rows are NaN-padded to the longest path; JSON carries that as null
    assert any(None in row for row in body["rows"])


def test_n_covariate_row_mismatch_is_422():
    cfg = {**WEIBULL, "n": 7}
    table = {"columns": ["trt"], "rows": [[1.0], [0.0]]}
    resp = client.post("/simulate", json={"config": cfg, "covariates": table})
    assert resp.status_code == 422
    assert "disagrees" in resp.json()["detail"]


def test_input_path_without_inline_rows_is_422():
    cfg = {**WEIBULL, "n": None, "input": "cov.csv"}
    resp = client.post("/simulate", json={"config": cfg})
    assert resp.status_code == 422
    assert "send its rows inline" in resp.json()["detail"]


def test_missing_seed_is_422():
    cfg = {k: v for k, v in WEIBULL.items() if k != "seed"}
    resp = client.post("/simulate", json={"config": cfg})
    assert resp.status_code == 422
    assert "seed" in resp.json()["detail"]


def test_expression_errors_are_422():
    cfg = {"mode": "user", "hazard": "0.1:*{t", "seed": 1, "n": 5, "maxtime": 5}
    resp = client.post("/simulate", json={"config": cfg})
    assert resp.status_code == 422


def test_runtime_failures_are_500():
    # gompertz with negative shape has a hazard that switches off; without
    # maxtime the draw cannot terminate, which is a data problem surfaced
    # before sampling
    cfg = {
        "mode": "parametric", "distribution": "gompertz",
        "lambdas": [0.1], "gammas": [-0.5], "seed": 1, "n": 5,
    }
    resp = client.post("/simulate", json={"config": cfg})
    assert resp.status_code == 422
    assert "maxtime" in resp.json()["detail"]


def test_unknown_config_field_is_422():
    resp = client.post("/simulate", json={"config": {**WEIBULL, "bogus": 1}})
    assert resp.status_code == 422


def test_check_config_endpoint():
    resp = client.post("/check-config", json={"config": WEIBULL})
    assert resp.status_code == 200
    assert resp.json() == {"ok": True, "problems": []}

    broken = {"mode": "msm", "hazards": [
        {"distribution": "exponential", "lambdas": [0.1]},
        {"distribution": "exponential", "lambdas": [0.2]},
    ], "seed": 1, "n": 10}
    resp = client.post("/check-config", json={"config": broken})
    body = resp.json()
    assert body["ok"] is False
    assert any("maxtime is required for multi-state" in p for p in body["problems"])


def test_validate_endpoint():
    sim = client.post("/simulate", json={"config": {**WEIBULL, "n": 1500}})
    body = sim.json()
    resp = client.post("/validate", json={
        "config": {**WEIBULL, "n": 1500},
        "dataset": {"columns": body["columns"], "rows": body["rows"]},
    })
    assert resp.status_code == 200
    report = resp.json()["report"]
    assert any("KS distance" in line and "OK" in line for line in report)


def test_capped_run_reports_warnings():
    cfg = {**WEIBULL, "maxtime": 0.5}
    resp = client.post("/simulate", json={"config": cfg})
    body = resp.json()
    assert body["n_capped"] > 0
    assert body["warnings"][0].startswith("Warning:")
    assert body["warnings"][1] == "They have been set to maxtime"
    assert body["warnings"][2] == "You can identify them by rc = 3"
