"""Single-event simulation: inverse-transform sampling of survival times.

Each draw solves H(t0 -> T) = -log(u) for T, where H is the cumulative
hazard of the observation's model and t0 its delayed-entry time
(conditional sampling under left truncation).  If the target is not
reached by the censoring time the observation is capped there and
flagged with return code 3, matching the convention that

    event = 1, rc = 1   event observed at ``time``
    event = 0, rc = 3   administratively censored, ``time`` == maxtime.

simulate_dataset inverts whole batches at once: closed-form kernels by
direct formula on vectors, everything else by a bracketed bisection on
an (n x nodes) matrix of cumulative-hazard evaluations.  The scalar
simulate_single uses the Brent solver instead; both honour the same
1e-8 relative tolerance on t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hazards, streams
from .errors import DataError, NumericError
from .rootfind import TOL

RC_EVENT = 1
RC_CAPPED = 3

_MAX_BISECT = 200


@dataclass(frozen=True)
class SingleDrawResult:
    time: float
    event: int
    rc: int


@dataclass
class SimulatedDataset:
    time: np.ndarray
    event: np.ndarray
    rc: np.ndarray

    @property
    def n_capped(self) -> int:
        return int(np.sum(self.rc == RC_CAPPED))


def _check_uniform(u: float) -> float:
    u = float(u)
    if not 0.0 < u < 1.0:
        raise NumericError(f"uniform draw must lie strictly in (0, 1), got {u!r}")
    return u


def _resolve_caps(n: int, maxtime, ltruncated):
    """Per-row censoring and entry times, validated."""
    if maxtime is None:
        cap = np.full(n, np.inf)
    else:
        cap = np.broadcast_to(np.asarray(maxtime, dtype=float), (n,)).astype(float)
        if not np.all(cap > 0):
            raise DataError("maxtime must be positive")
    entry = np.broadcast_to(np.asarray(ltruncated, dtype=float), (n,)).astype(float)
    if not np.all(np.isfinite(entry)):
        raise DataError("ltruncated must be finite")
    if not np.all(entry >= 0):
        bad = int(np.argmax(entry < 0))
        raise DataError(f"ltruncated must be >= 0 (row {bad}: {entry[bad]:g})")
    if not np.all(entry < cap):
        bad = int(np.argmax(~(entry < cap)))
        raise DataError(
            f"ltruncated must be below maxtime (row {bad}: "
            f"{entry[bad]:g} >= {cap[bad]:g})"
        )
    return cap, entry


def simulate_single(model, row, u, maxtime=None, ltruncated=0.0) -> SingleDrawResult:
    """One draw from the model via the scalar inversion path."""
    u = _check_uniform(u)
    cap, entry = _resolve_caps(1, maxtime, ltruncated)
    cap_t = float(cap[0])
    lower = float(entry[0])
    target = -np.log(u)
    t = hazards.invert_cumhaz(
        model, target, lower, cap_t, row=row, rule=model.rule() , t0=0.0
    )
    if t is None:
        if not np.isfinite(cap_t):
            raise DataError(
                "the survival distribution is improper (the cumulative hazard "
                "plateaus); set maxtime to cap follow-up"
            )
        return SingleDrawResult(time=cap_t, event=0, rc=RC_CAPPED)
    return SingleDrawResult(time=float(t), event=1, rc=RC_EVENT)


def draw_uniforms(seed: int, n: int) -> np.ndarray:
    """First uniform of every observation's substream."""
    out = np.empty(n)
    for i in range(n):
        out[i] = streams.uniform_open(streams.substream(seed, i))
    return out


def _invert_batch(model, targets, lower, cap, rows, rule):
    """Vector inversion of H(lower -> t) = target per row.

    Returns (times, censored mask): censored rows have H(lower -> cap)
    strictly below their target.
    """
    kind = hazards.closed_kind(model)
    n = targets.shape[0]

    if kind in (hazards.KIND_PARAM, hazards.KIND_PARAM_TDE):
        family, lam, gamma = hazards._effective_family(model, rows)
        base = hazards.family_cumhaz(family, lam, gamma, lower)
        cap_level = hazards.family_cumhaz(family, lam, gamma, cap) - base
        if np.any(np.isnan(cap_level)):
            raise NumericError("cumulative hazard not finite at the censoring time")
        censored = cap_level < targets
        times = np.where(censored, cap, 0.0)
        if np.any(~censored):
            keep = ~censored
            level = np.asarray(base + targets, dtype=float)
            t = hazards.family_inverse_cumhaz(
                family,
                lam if np.ndim(lam) == 0 else np.asarray(lam)[keep],
                gamma if np.ndim(gamma) == 0 else np.asarray(gamma)[keep],
                level[keep],
            )
            times[keep] = np.minimum(t, np.asarray(np.broadcast_to(cap, (n,)))[keep])
        return times, censored

    if not np.all(np.isfinite(cap)):
        raise NumericError("numeric inversion needs a finite cap (set maxtime)")

    def level(sub_rows, lo, hi):
        return np.asarray(
            hazards.cumhaz_interval_rows(model, lo, hi, 0.0, sub_rows, rule),
            dtype=float,
        )

    cap_level = level(rows, lower, cap)
    if np.any(~np.isfinite(cap_level)):
        raise NumericError("cumulative hazard not finite at the censoring time")
    censored = cap_level < targets
    times = np.where(censored, cap, 0.0)
    active = np.flatnonzero(~censored)
    if active.size:
        sub_rows = rows[active]
        lo = np.broadcast_to(np.asarray(lower, dtype=float), (n,))[active].copy()
        hi = np.broadcast_to(np.asarray(cap, dtype=float), (n,))[active].copy()
        lo_base = lo.copy()
        tgt = targets[active]
        for _ in range(_MAX_BISECT):
            mid = 0.5 * (lo + hi)
            # relative on t; the subnormal floor keeps a root at 0 finite
            done = (hi - lo) <= TOL * np.abs(mid) + 5e-324
            if done.all():
                break
            if done.any():
                # settle finished rows so the quadrature below only pays
                # for the ones still open
                times[active[done]] = mid[done]
                keep = ~done
                active = active[keep]
                sub_rows = sub_rows[keep]
                lo, hi, mid = lo[keep], hi[keep], mid[keep]
                lo_base, tgt = lo_base[keep], tgt[keep]
            h_mid = level(sub_rows, lo_base, mid)
            go_up = h_mid < tgt
            lo = np.where(go_up, mid, lo)
            hi = np.where(go_up, hi, mid)
        else:
            raise NumericError("batch inversion did not converge")
        times[active] = 0.5 * (lo + hi)
    return times, censored


def simulate_dataset(model, table=None, n=None, seed=0,
                     maxtime=None, ltruncated=0.0) -> SimulatedDataset:
    """Simulate one survival time per observation.

    ``table`` is an (n, c) array of covariate values matching the schema
    the model was bound against; pass ``n`` instead when the model uses
    no covariates.  Row i consumes only substream i of ``seed``, so
    results are reproducible and independent of batch splitting.
    """
    if table is not None:
        rows = np.asarray(table, dtype=float)
        if rows.ndim != 2:
            raise DataError(f"covariate table must be 2-D, got shape {rows.shape}")
        if n is not None and n != rows.shape[0]:
            raise DataError(f"n={n} disagrees with table rows {rows.shape[0]}")
        n = rows.shape[0]
    else:
        if n is None:
            raise DataError("either a covariate table or n is required")
        rows = np.zeros((n, 0))
    if n == 0:
        empty = np.empty(0)
        return SimulatedDataset(empty, np.empty(0, dtype=int), np.empty(0, dtype=int))

    cap, entry = _resolve_caps(n, maxtime, ltruncated)
    u = draw_uniforms(seed, n)
    targets = -np.log(u)
    times, censored = _invert_batch(model, targets, entry, cap, rows, model.rule())
    if np.any(censored & ~np.isfinite(cap)):
        raise DataError(
            "the survival distribution is improper (the cumulative hazard "
            "plateaus); set maxtime to cap follow-up"
        )
    event = np.where(censored, 0, 1).astype(int)
    rc = np.where(censored, RC_CAPPED, RC_EVENT).astype(int)
    return SimulatedDataset(time=times.astype(float), event=event, rc=rc)
