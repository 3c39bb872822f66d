"""Validation statistics for simulated datasets.

kaplan_meier and ks_distance check single-event output against a target
distribution; occupation_fractions summarizes wide multi-state output;
oracle_occupation computes the model-implied state occupation
probabilities by numerically solving the forward equations, giving an
independent yardstick for the simulator.
"""

from __future__ import annotations

import numpy as np

from . import hazards, quad
from .errors import DataError, UnsupportedModelError

ORACLE_CELLS = 100_000


def kaplan_meier(times, events):
    """Product-limit estimate of S(t).

    Returns (event_times, survival): the step function evaluated just
    after each distinct event time.  Ties between events and censorings
    are broken the standard way: events happen first, censored subjects
    at the same time still count as at risk for it.  With no events at
    all both arrays are empty (S stays at 1).
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    if times.shape != events.shape or times.ndim != 1:
        raise DataError("times and events must be 1-D arrays of equal length")
    if times.size == 0:
        return np.empty(0), np.empty(0)
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    e_sorted = events[order].astype(bool)

    out_t = []
    out_s = []
    n = times.size
    at_risk = n
    surv = 1.0
    i = 0
    while i < n:
        t = t_sorted[i]
        d = 0
        removed = 0
        while i < n and t_sorted[i] == t:
            d += int(e_sorted[i])
            removed += 1
            i += 1
        if d > 0:
            surv *= 1.0 - d / at_risk
            out_t.append(t)
            out_s.append(surv)
        at_risk -= removed
    return np.asarray(out_t), np.asarray(out_s)


def ks_distance(sample, cdf) -> float:
    """One-sample Kolmogorov-Smirnov statistic
    sup_x |F_n(x) - F(x)| against a callable CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n == 0:
        raise DataError("ks_distance needs a non-empty sample")
    f = np.asarray(cdf(x), dtype=float)
    if f.shape != x.shape:
        raise DataError("cdf must return one value per sample point")
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def occupation_fractions(dataset, at: float, n_states: int | None = None) -> dict[int, float]:
    """Fraction of subjects in each state at time ``at``, from a wide
    multi-state table (an MsmDataset or anything with .names/.data).

    Subjects not yet under observation at ``at`` (time0 > at) are
    excluded from the denominator.
    """
    names = list(dataset.names)
    data = np.asarray(dataset.data, dtype=float)
    try:
        i_t0 = names.index("time0")
        i_s0 = names.index("state0")
    except ValueError:
        raise DataError("wide table must contain time0 and state0 columns")
    n_steps = 0
    while f"time{n_steps + 1}" in names:
        n_steps += 1

    included = data[:, i_t0] <= at
    state = data[:, i_s0].copy()
    for j in range(1, n_steps + 1):
        tj = data[:, names.index(f"time{j}")]
        sj = data[:, names.index(f"state{j}")]
        ej = data[:, names.index(f"event{j}")]
        move = included & (ej == 1) & (tj <= at)
        state[move] = sj[move]

    denom = int(np.sum(included))
    if denom == 0:
        raise DataError(f"no subjects under observation at t={at:g}")
    if n_states is None:
        cols = [data[:, i_s0]]
        for j in range(1, n_steps + 1):
            cols.append(data[:, names.index(f"state{j}")])
        stacked = np.concatenate(cols)
        stacked = stacked[~np.isnan(stacked)]
        n_states = int(np.max(stacked)) if stacked.size else 1
    out = {}
    for s in range(1, n_states + 1):
        out[s] = float(np.sum(state[included] == s) / denom)
    return out


def _topological_order(matrix) -> list[int]:
    """States ordered so every transition goes later in the list.
    Raises UnsupportedModelError on cycles."""
    k = matrix.n_states
    indeg = [0] * (k + 1)
    for _, _frm, to in matrix.transitions:
        indeg[to] += 1
    ready = [s for s in range(1, k + 1) if indeg[s] == 0]
    order = []
    while ready:
        s = ready.pop()
        order.append(s)
        for _num, frm, to in matrix.transitions:
            if frm == s:
                indeg[to] -= 1
                if indeg[to] == 0:
                    ready.append(to)
    if len(order) != k:
        raise UnsupportedModelError(
            "occupation oracle supports acyclic transition structures only"
        )
    return order


def _uses_entry_time(th) -> bool:
    model = th.model
    kernel = model.kernel
    if isinstance(kernel, hazards.UserKernel) and kernel.expr.uses_t0:
        return True
    if model.tde is not None and model.tde.time_function.uses_t0:
        return True
    return False


def oracle_occupation(spec, at: float, row=(), cells: int = ORACLE_CELLS) -> dict[int, float]:
    """Model-implied occupation probabilities P(state at ``at``) for one
    covariate row, by product-integration of the forward equations on a
    uniform grid.

    Supported: acyclic structures whose hazards depend on global time
    only (no clock resets, no {t0} references).  Under those conditions
    the process is Markov and the per-cell update

        p(u + du) = p(u) e^{-dH_total} + inflow terms

    with the outflow split across destinations by the hazard ratio at
    the cell midpoint is exact to O(du^2); 1e5 cells leave an error far
    below sampling noise at any practical n.
    """
    matrix = spec.matrix
    order = _topological_order(matrix)
    for idx, th in enumerate(spec.hazards):
        if th.reset:
            raise UnsupportedModelError(
                f"occupation oracle: transition {idx + 1} uses a clock reset"
            )
        if _uses_entry_time(th):
            raise UnsupportedModelError(
                f"occupation oracle: transition {idx + 1} references {{t0}}"
            )
        kernel = th.model.kernel
        if isinstance(kernel, hazards.UserKernel) and kernel.scale in hazards.CUMULATIVE_SCALES:
            raise UnsupportedModelError(
                "occupation oracle needs hazard-scale kernels"
            )
    if np.ndim(spec.startstate) != 0 or np.ndim(spec.ltruncated) != 0:
        raise UnsupportedModelError(
            "occupation oracle needs scalar startstate and ltruncated"
        )
    s0 = int(spec.startstate)
    lt = float(spec.ltruncated)
    if not 1 <= s0 <= matrix.n_states:
        raise DataError(f"startstate {s0} outside 1..{matrix.n_states}")
    if at <= lt or matrix.is_absorbing(s0):
        return {s: (1.0 if s == s0 else 0.0) for s in range(1, matrix.n_states + 1)}

    row = np.asarray(row, dtype=float)
    edges = np.linspace(lt, float(at), cells + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    rule = quad.gl_rule(8)
    pts = mid[:, None] + half * rule.nodes[None, :]

    # per-transition cell masses dH_k (interior-node quadrature, so
    # hazards singular at the origin never get evaluated there)
    dh = {}
    for num, _frm, _to in matrix.transitions:
        model = spec.hazards[num - 1].model
        values = hazards.hazard_at(model, pts, lt, row)
        if not np.all(np.isfinite(values)):
            raise UnsupportedModelError(
                "occupation oracle: hazard not finite inside the grid"
            )
        dh[num] = half * (values @ rule.weights)

    occupancy: dict[int, float] = {}
    inflow = {s: np.zeros(cells) for s in range(1, matrix.n_states + 1)}
    start_mass = {s: (1.0 if s == s0 else 0.0) for s in range(1, matrix.n_states + 1)}

    for s in order:
        out = matrix.outgoing(s)
        if not out:
            # absorbing: everything that ever arrives stays
            occupancy[s] = start_mass[s] + float(np.sum(inflow[s]))
            continue
        nums = [num for num, _to in out]
        dh_tot = np.zeros(cells)
        for num in nums:
            dh_tot += dh[num]
        # outflow in a cell splits across destinations by each
        # transition's share of the cell's hazard mass; shares sum to 1
        # wherever anything can leave, so no probability is lost
        safe_tot = np.where(dh_tot > 0, dh_tot, 1.0)
        ratios = {num: np.where(dh_tot > 0, dh[num] / safe_tot, 0.0) for num in nums}
        decay = (np.exp(-dh_tot)).tolist()
        half_decay = (np.exp(-0.5 * dh_tot)).tolist()
        arrivals = inflow[s].tolist()

        p = start_mass[s]
        outflow = np.empty(cells)
        for i in range(cells):
            a = arrivals[i]
            d = decay[i]
            hd = half_decay[i]
            outflow[i] = p * (1.0 - d) + a * (1.0 - hd)
            p = p * d + a * hd
        occupancy[s] = p
        for num, to in out:
            inflow[to] = inflow[to] + outflow * ratios[num]

    total = sum(occupancy.values())
    if not 0.999 <= total <= 1.001:
        raise UnsupportedModelError(
            f"occupation oracle lost probability mass (total {total:.6f})"
        )
    return {s: occupancy[s] for s in range(1, matrix.n_states + 1)}
