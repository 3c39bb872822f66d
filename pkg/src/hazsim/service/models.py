"""Pydantic request/response models for the simulation service.

Tables travel as a column-name list plus row-major values; missing
cells (the NaN padding of wide multi-state output) are JSON null.
"""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..dataio import CovariateTable, RunConfig
from ..errors import DataError


class TableModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    columns: list[str]
    rows: list[list[float | None]]

    @classmethod
    def from_array(cls, names, data) -> "TableModel":
        data = np.asarray(data, dtype=float)
        rows = [
            [None if math.isnan(v) else v for v in row]
            for row in data.tolist()
        ]
        return cls(columns=list(names), rows=rows)

    def to_array(self) -> np.ndarray:
        n_cols = len(self.columns)
        out = np.full((len(self.rows), n_cols), np.nan)
        for i, row in enumerate(self.rows):
            if len(row) != n_cols:
                raise DataError(
                    f"table row {i + 1} has {len(row)} cells, expected {n_cols}"
                )
            for j, v in enumerate(row):
                if v is not None:
                    out[i, j] = v
        return out

    def to_covariates(self) -> CovariateTable:
        data = self.to_array()
        if np.any(np.isnan(data)):
            raise DataError("covariate tables cannot have missing values")
        return CovariateTable(names=tuple(self.columns), data=data)


class SimulateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: RunConfig
    covariates: TableModel | None = None


class SimulateResponse(BaseModel):
    columns: list[str]
    rows: list[list[float | None]]
    n_capped: int
    notices: list[str]
    warnings: list[str]


class CheckConfigRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: RunConfig


class CheckConfigResponse(BaseModel):
    ok: bool
    problems: list[str]


class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: RunConfig
    dataset: TableModel


class ValidateResponse(BaseModel):
    report: list[str]
