"""Multi-state and competing-risks simulation.

A transition matrix names the allowed moves between states 1..K: cell
(i, j) holds the transition number, diagonal cells are None, and the
numbers read 1..M left to right, top to bottom.  States with no outgoing
transition are absorbing.  Reversible structures are allowed.

Each transition carries its own HazardModel plus a clock flag:

* clock-forward (default): the kernel is evaluated on the global
  timescale, so h_k(t) depends on time since the study origin;
* clock-reset: the kernel sees time since entry to the current state.
  For parametric kernels the interval is shifted to local time; for
  expression kernels every ``{t}`` (including inside the tde time
  function) is rewritten as ``{t} - {t0}`` and ``{t0}`` is bound to the
  entry time.

Simulation walks one subject at a time: given entry time e to state s,
the next event time solves

    sum_k H_k(e -> t) = -log(u1)

over the outgoing transitions k, censoring at maxtime if the target is
never reached, and the destination is drawn from the transition hazards
evaluated at the event time (inverse CDF on u2).  Per step a subject
consumes u1 and, only on an event, u2, always in that order, from its
own counter-based substream, which makes output independent of thread
count and batch splitting.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from . import expr as ex
from . import hazards, rootfind, streams
from .errors import ConfigError, DataError, NumericError, SimulationError

MAX_STEPS = 10000


@dataclass(frozen=True)
class TransitionMatrix:
    entries: tuple[tuple[int | None, ...], ...]
    state_names: tuple[str, ...]

    @property
    def n_states(self) -> int:
        return len(self.entries)

    @cached_property
    def transitions(self) -> tuple[tuple[int, int, int], ...]:
        """(number, from_state, to_state) triples, 1-based states."""
        out = []
        for i, row in enumerate(self.entries):
            for j, cell in enumerate(row):
                if cell is not None:
                    out.append((cell, i + 1, j + 1))
        out.sort()
        return tuple(out)

    @property
    def n_transitions(self) -> int:
        return len(self.transitions)

    @cached_property
    def _outgoing(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        per_state: list[list[tuple[int, int]]] = [[] for _ in self.entries]
        for num, frm, to in self.transitions:
            per_state[frm - 1].append((num, to))
        return tuple(tuple(x) for x in per_state)

    def outgoing(self, state: int) -> tuple[tuple[int, int], ...]:
        """(transition number, destination) pairs leaving ``state``."""
        return self._outgoing[state - 1]

    def is_absorbing(self, state: int) -> bool:
        return not self._outgoing[state - 1]


def validate_transmatrix(entries, state_names=None) -> TransitionMatrix:
    """Check and freeze a transition matrix given as nested sequences
    (None on the diagonal and for forbidden moves)."""
    rows = [tuple(r) for r in entries]
    k = len(rows)
    if k < 2:
        raise ConfigError(f"transition matrix needs at least 2 states, got {k}")
    numbers = []
    for i, row in enumerate(rows):
        if len(row) != k:
            raise ConfigError(
                f"transition matrix must be square: row {i + 1} has "
                f"{len(row)} cells, expected {k}"
            )
        for j, cell in enumerate(row):
            if cell is None:
                continue
            if i == j:
                raise ConfigError(
                    f"diagonal cell ({i + 1}, {j + 1}) must be empty, got {cell!r}"
                )
            if isinstance(cell, bool) or not isinstance(cell, (int, np.integer)):
                raise ConfigError(
                    f"cell ({i + 1}, {j + 1}) must be a transition number or "
                    f"None, got {cell!r}"
                )
            numbers.append(int(cell))
    if not numbers:
        raise ConfigError("transition matrix defines no transitions")
    if numbers != list(range(1, len(numbers) + 1)):
        raise ConfigError(
            "transition numbers must read 1, 2, ... left to right, top to "
            f"bottom; got {numbers}"
        )
    if state_names is None:
        state_names = tuple(f"state{i + 1}" for i in range(k))
    else:
        state_names = tuple(str(s) for s in state_names)
        if len(state_names) != k:
            raise ConfigError(
                f"expected {k} state names, got {len(state_names)}"
            )
    return TransitionMatrix(entries=tuple(rows), state_names=state_names)


def default_cr_matrix(n_causes: int) -> TransitionMatrix:
    """Competing risks as a star: one transient starting state with one
    transition per cause into its own absorbing state."""
    if n_causes < 1:
        raise ConfigError(f"competing risks needs at least one cause, got {n_causes}")
    k = n_causes + 1
    first = tuple([None] + list(range(1, n_causes + 1)))
    blank = tuple([None] * k)
    entries = (first,) + tuple(blank for _ in range(n_causes))
    names = ("start",) + tuple(f"cause{i + 1}" for i in range(n_causes))
    return TransitionMatrix(entries=entries, state_names=names)


@dataclass(frozen=True)
class TransitionHazard:
    model: hazards.HazardModel
    reset: bool = False


@dataclass(frozen=True, eq=False)
class MsmSpec:
    matrix: TransitionMatrix
    hazards: tuple[TransitionHazard, ...]
    maxtime: object = None        # scalar or per-observation vector
    ltruncated: object = 0.0
    startstate: object = 1


@dataclass
class PathRecord:
    time0: float
    state0: int
    steps: list[tuple[float, int, int]]  # (time, state, event)


@dataclass
class MsmDataset:
    names: list[str]
    data: np.ndarray  # (n, 2 + 3 * n_steps), NaN-padded
    notices: list[str]

    @property
    def n_steps(self) -> int:
        return (self.data.shape[1] - 2) // 3


def validate_spec(spec: MsmSpec) -> list[str]:
    """Structural checks; returns human-readable problems, empty if OK."""
    problems = []
    m = spec.matrix.n_transitions
    if len(spec.hazards) != m:
        problems.append(
            f"matrix defines {m} transitions but {len(spec.hazards)} hazard "
            "models were given"
        )
    for idx, th in enumerate(spec.hazards):
        kernel = th.model.kernel
        if isinstance(kernel, hazards.UserKernel) and kernel.scale in hazards.CUMULATIVE_SCALES:
            problems.append(
                f"hazard {idx + 1}: cumulative-scale kernels ({kernel.scale}) "
                "cannot drive multi-state transitions; specify the hazard scale"
            )
        for p in hazards.validate_model(th.model):
            problems.append(f"hazard {idx + 1}: {p}")
    return problems


def next_state_draw(values, u: float) -> int:
    """Inverse-CDF draw over hazard values at the event time.  Returns
    the 1-based index of the chosen entry."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise NumericError("no candidate transitions at the event time")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise NumericError(
            f"transition hazard values must be finite and >= 0, got {values!r}"
        )
    cum = np.cumsum(values)
    total = cum[-1]
    if total <= 0.0:
        raise NumericError(
            "all transition hazards are zero at the event time; the "
            "destination is undefined"
        )
    # u * total <= cum is the multiplication form of u <= cum / total and
    # is reproduced bit for bit by the vectorized competing-risks path
    return int(np.searchsorted(cum, u * total, side="left")) + 1


class _TransEval:
    """Per-transition evaluation closures with the clock flag applied."""

    __slots__ = ("model", "reset", "is_user", "eval_model", "kind", "rate")

    def __init__(self, th: TransitionHazard):
        self.model = th.model
        self.reset = th.reset
        kernel = th.model.kernel
        self.is_user = isinstance(kernel, hazards.UserKernel)
        model = th.model
        if self.reset and self.is_user:
            new_kernel = replace(kernel, expr=_substituted(kernel.expr))
            tde = model.tde
            if tde is not None:
                tde = replace(tde, time_function=_substituted(tde.time_function))
            model = replace(model, kernel=new_kernel, tde=tde)
        self.eval_model = model
        self.kind = hazards.closed_kind(self.eval_model)
        # constant-rate shortcut: exponential family without tde
        self.rate = None
        if (
            isinstance(kernel, hazards.ParametricKernel)
            and kernel.family.family == hazards.EXPONENTIAL
            and th.model.tde is None
        ):
            self.rate = kernel.family.lam

    def _local(self) -> bool:
        """Evaluate in state-local time (shifted interval) rather than by
        substitution: parametric/mixture kernels under clock reset."""
        return self.reset and not self.is_user

    def cumhaz(self, entry: float, a: float, b: float, row) -> float:
        if self._local():
            return hazards.cumhaz(self.eval_model, a - entry, b - entry, 0.0, row)
        return hazards.cumhaz(self.eval_model, a, b, entry, row)

    def hazard(self, entry: float, t: float, row) -> float:
        if self.rate is not None:
            return self.rate * math.exp(hazards.linear_predictor(self.eval_model, np.asarray(row, dtype=float)))
        if self._local():
            return float(hazards.hazard_at(self.eval_model, t - entry, 0.0, row))
        return float(hazards.hazard_at(self.eval_model, t, entry, row))

    def invert(self, entry: float, target: float, cap: float, row) -> float | None:
        if self._local():
            r = hazards.invert_cumhaz(
                self.eval_model, target, 0.0, cap - entry, row=row, t0=0.0
            )
            return None if r is None else entry + r
        return hazards.invert_cumhaz(
            self.eval_model, target, entry, cap, row=row, t0=entry
        )


def _substituted(compiled: ex.CompiledExpr) -> ex.CompiledExpr:
    """Apply the clock-reset rewrite; covariate bindings are untouched."""
    ast = ex.substitute_reset(compiled.ast)
    return ex.CompiledExpr(
        ast=ast,
        covariate_bindings=compiled.covariate_bindings,
        uses_t0=ex.uses_t0(ast),
    )


class _StatePlan:
    __slots__ = ("trans", "targets", "numbers", "all_exponential")

    def __init__(self, trans, targets, numbers):
        self.trans = trans
        self.targets = targets
        self.numbers = numbers
        self.all_exponential = all(t.rate is not None for t in trans)


def _prepare(spec: MsmSpec) -> list[_StatePlan | None]:
    problems = validate_spec(spec)
    if problems:
        raise ConfigError("; ".join(problems))
    evals = [_TransEval(th) for th in spec.hazards]
    plans: list[_StatePlan | None] = []
    for state in range(1, spec.matrix.n_states + 1):
        out = spec.matrix.outgoing(state)
        if not out:
            plans.append(None)
            continue
        numbers = [num for num, _ in out]
        targets = [to for _, to in out]
        plans.append(_StatePlan([evals[num - 1] for num in numbers], targets, numbers))
    return plans


def total_cumhaz(spec: MsmSpec, state: int, entry: float, a: float, b: float, row=()) -> float:
    """Sum of the outgoing transition cumulative hazards of ``state``
    over [a, b], for a subject that entered the state at ``entry``."""
    plans = _prepare(spec)
    if not 1 <= state <= spec.matrix.n_states:
        raise ConfigError(f"state {state} outside 1..{spec.matrix.n_states}")
    plan = plans[state - 1]
    if plan is None:
        return 0.0
    if b < a or a < entry:
        raise DataError(f"need entry <= a <= b, got entry={entry}, a={a}, b={b}")
    return float(sum(tr.cumhaz(entry, a, b, row) for tr in plan.trans))


def _solve_step(plan: _StatePlan, entry: float, target: float, cap: float, row):
    """Next event time for one sojourn, or None when censored at cap."""
    if plan.all_exponential:
        total = 0.0
        for tr in plan.trans:
            total += tr.rate * math.exp(
                hazards.linear_predictor(tr.eval_model, np.asarray(row, dtype=float))
            )
        if total <= 0.0:
            return None
        t = entry + target / total
        return t if t <= cap else None
    if len(plan.trans) == 1:
        return plan.trans[0].invert(entry, target, cap, row)
    cap_level = sum(tr.cumhaz(entry, entry, cap, row) for tr in plan.trans)
    if not math.isfinite(cap_level):
        raise NumericError("total cumulative hazard not finite at maxtime")
    if cap_level < target:
        return None
    g = lambda t: sum(tr.cumhaz(entry, entry, t, row) for tr in plan.trans)
    return rootfind.solve_monotone(g, target, entry, cap)


def _run_path(plans, matrix, row, rng, maxtime, ltruncated, startstate) -> PathRecord:
    entry = float(ltruncated)
    state = int(startstate)
    steps: list[tuple[float, int, int]] = []
    if matrix.is_absorbing(state):
        return PathRecord(time0=entry, state0=state, steps=steps)
    while True:
        if len(steps) >= MAX_STEPS:
            raise SimulationError(
                f"path exceeded {MAX_STEPS} transitions; the spec probably "
                "cycles faster than it censors"
            )
        u1 = streams.uniform_open(rng)
        plan = plans[state - 1]
        t = _solve_step(plan, entry, -math.log(u1), maxtime, row)
        if t is None:
            steps.append((float(maxtime), state, 0))
            break
        u2 = streams.uniform_open(rng)
        values = [tr.hazard(entry, t, row) for tr in plan.trans]
        pick = next_state_draw(values, u2)
        nxt = plan.targets[pick - 1]
        steps.append((float(t), nxt, 1))
        if matrix.is_absorbing(nxt):
            break
        entry, state = float(t), nxt
    return PathRecord(time0=float(ltruncated), state0=int(startstate), steps=steps)


def simulate_path(spec: MsmSpec, row, rng, maxtime=None, ltruncated=0.0,
                  startstate=1) -> PathRecord:
    """One subject's event history.  ``rng`` is the subject's own
    generator (see streams.substream)."""
    plans = _prepare(spec)
    if maxtime is None or not np.isfinite(maxtime):
        raise DataError("multi-state simulation requires a finite maxtime")
    if not 0.0 <= float(ltruncated) < float(maxtime):
        raise DataError(
            f"need 0 <= ltruncated < maxtime, got {ltruncated!r}, {maxtime!r}"
        )
    if not 1 <= int(startstate) <= spec.matrix.n_states:
        raise DataError(
            f"startstate {startstate!r} outside 1..{spec.matrix.n_states}"
        )
    return _run_path(plans, spec.matrix, np.asarray(row, dtype=float), rng,
                     float(maxtime), float(ltruncated), int(startstate))


def _resolve_per_row(value, n, name, default=None):
    if value is None:
        value = default
    if value is None:
        raise DataError(f"{name} is required for multi-state simulation")
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).astype(float)
    return arr


def _is_cr_batchable(spec, plans, maxtime, ltruncated, startstate) -> bool:
    """True when every subject takes exactly one step from the same
    transient state into absorbing states and all kernels have analytic
    cumulative hazards: then the whole dataset inverts as one vector."""
    if np.ptp(startstate) != 0 or np.ptp(maxtime) != 0 or np.ptp(ltruncated) != 0:
        return False
    state = int(startstate[0])
    plan = plans[state - 1]
    if plan is None:
        return True  # absorbing start: nothing to do anywhere
    if any(not spec.matrix.is_absorbing(to) for to in plan.targets):
        return False
    for tr in plan.trans:
        if tr.kind not in (hazards.KIND_PARAM, hazards.KIND_PARAM_TDE, hazards.KIND_MIXTURE):
            return False
    return True


def _simulate_cr_batch(plans, state, rows, u1, u2, maxtime, ltruncated):
    """Vectorized one-step competing-risks simulation.  Reproduces the
    scalar path's draws: same substream order, same destination
    arithmetic; event times agree to the solver tolerance."""
    n = rows.shape[0]
    cap = float(maxtime)
    lt = float(ltruncated)
    plan = plans[state - 1]
    targets = -np.log(u1)

    def trans_cumhaz(tr, t_vec):
        if tr._local():
            return np.asarray(
                hazards.cumhaz_interval_rows(tr.eval_model, 0.0, t_vec - lt, 0.0, rows),
                dtype=float,
            )
        return np.asarray(
            hazards.cumhaz_interval_rows(tr.eval_model, lt, t_vec, lt, rows),
            dtype=float,
        )

    def total_level(t_vec):
        acc = np.zeros(len(t_vec))
        for tr in plan.trans:
            acc += trans_cumhaz(tr, t_vec)
        return acc

    cap_level = total_level(np.full(n, cap))
    if np.any(~np.isfinite(cap_level)):
        raise NumericError("total cumulative hazard not finite at maxtime")
    censored = cap_level < targets
    times = np.full(n, cap)
    active = np.flatnonzero(~censored)
    if active.size:
        sub = rows[active]
        lo = np.full(active.size, lt)
        hi = np.full(active.size, cap)
        tgt = targets[active]

        def sub_level(t_vec, sub):
            acc = np.zeros(len(t_vec))
            for tr in plan.trans:
                if tr._local():
                    acc += np.asarray(
                        hazards.cumhaz_interval_rows(tr.eval_model, 0.0, t_vec - lt, 0.0, sub),
                        dtype=float,
                    )
                else:
                    acc += np.asarray(
                        hazards.cumhaz_interval_rows(tr.eval_model, lt, t_vec, lt, sub),
                        dtype=float,
                    )
            return acc

        for _ in range(200):
            mid = 0.5 * (lo + hi)
            # relative on t; the subnormal floor keeps a root at 0 finite
            done = (hi - lo) <= rootfind.TOL * np.abs(mid) + 5e-324
            if done.all():
                break
            if done.any():
                times[active[done]] = mid[done]
                keep = ~done
                active = active[keep]
                sub = sub[keep]
                lo, hi, mid = lo[keep], hi[keep], mid[keep]
                tgt = tgt[keep]
            level = sub_level(mid, sub)
            go_up = level < tgt
            lo = np.where(go_up, mid, lo)
            hi = np.where(go_up, hi, mid)
        else:
            raise NumericError("competing-risks batch inversion did not converge")
        times[active] = 0.5 * (lo + hi)

    # destination draw, vectorized inverse CDF over transition hazards
    n_trans = len(plan.trans)
    values = np.zeros((n, n_trans))
    t_col = times[:, None]
    for k, tr in enumerate(plan.trans):
        if tr.rate is not None:
            lp = hazards.linear_predictor(tr.eval_model, rows)
            values[:, k] = tr.rate * np.exp(lp)
        elif tr._local():
            values[:, k] = np.asarray(
                hazards._hazard_rows(tr.eval_model, t_col - lt, 0.0, rows)
            ).reshape(n)
        else:
            values[:, k] = np.asarray(
                hazards._hazard_rows(tr.eval_model, t_col, lt, rows)
            ).reshape(n)
    if np.any(values < 0) or not np.all(np.isfinite(values[~censored])):
        raise NumericError("transition hazard values must be finite and >= 0")
    cum = np.cumsum(values, axis=1)
    total = cum[:, -1]
    if np.any((total <= 0) & ~censored):
        raise NumericError(
            "all transition hazards are zero at an event time; the "
            "destination is undefined"
        )
    # first index with u2 * total <= cum, matching next_state_draw
    key = u2 * total
    pick = np.sum(cum < key[:, None], axis=1)

    records = []
    target_arr = np.asarray(plan.targets)
    for i in range(n):
        if censored[i]:
            records.append(PathRecord(lt, state, [(cap, state, 0)]))
        else:
            dest = int(target_arr[pick[i]])
            records.append(PathRecord(lt, state, [(float(times[i]), dest, 1)]))
    return records


def simulate_msm_dataset(spec: MsmSpec, table=None, n=None, seed=0,
                         workers=1) -> MsmDataset:
    """Simulate event histories for a whole dataset and lay them out in
    wide format: time0/state0 then (timej, statej, eventj) per step,
    NaN-padded to the longest path."""
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

    plans = _prepare(spec)
    if n == 0:
        return MsmDataset(names=["time0", "state0"], data=np.empty((0, 2)), notices=[])

    maxtime = _resolve_per_row(spec.maxtime, n, "maxtime")
    if not np.all(np.isfinite(maxtime)):
        raise DataError("maxtime must be finite for multi-state simulation")
    ltrunc = _resolve_per_row(spec.ltruncated, n, "ltruncated", default=0.0)
    startstate = _resolve_per_row(spec.startstate, n, "startstate", default=1)
    if not np.all(startstate == np.round(startstate)):
        bad = int(np.argmax(startstate != np.round(startstate)))
        raise DataError(f"startstate must be integer (row {bad}: {startstate[bad]!r})")
    ss = startstate.astype(int)
    if np.any(ss < 1) or np.any(ss > spec.matrix.n_states):
        bad = int(np.argmax((ss < 1) | (ss > spec.matrix.n_states)))
        raise DataError(
            f"startstate outside 1..{spec.matrix.n_states} (row {bad}: {ss[bad]})"
        )
    if not np.all((ltrunc >= 0) & (ltrunc < maxtime)):
        bad = int(np.argmax(~((ltrunc >= 0) & (ltrunc < maxtime))))
        raise DataError(
            f"need 0 <= ltruncated < maxtime (row {bad}: "
            f"{ltrunc[bad]:g}, {maxtime[bad]:g})"
        )

    if _is_cr_batchable(spec, plans, maxtime, ltrunc, ss):
        state = int(ss[0])
        if plans[state - 1] is None:
            records = [PathRecord(float(ltrunc[0]), state, []) for _ in range(n)]
        else:
            u1 = np.empty(n)
            u2 = np.empty(n)
            for i in range(n):
                gen = streams.substream(seed, i)
                u1[i] = streams.uniform_open(gen)
                u2[i] = streams.uniform_open(gen)
            records = _simulate_cr_batch(
                plans, state, rows, u1, u2, float(maxtime[0]), float(ltrunc[0])
            )
    else:
        def one(i: int) -> PathRecord:
            return _run_path(
                plans, spec.matrix, rows[i], streams.substream(seed, i),
                float(maxtime[i]), float(ltrunc[i]), int(ss[i]),
            )

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(one, range(n), chunksize=256))
        else:
            records = [one(i) for i in range(n)]

    n_steps = max((len(r.steps) for r in records), default=0)
    names = ["time0", "state0"]
    for j in range(1, n_steps + 1):
        names += [f"time{j}", f"state{j}", f"event{j}"]
    data = np.full((n, 2 + 3 * n_steps), np.nan)
    for i, rec in enumerate(records):
        data[i, 0] = rec.time0
        data[i, 1] = rec.state0
        for j, (t, s, e) in enumerate(rec.steps):
            data[i, 2 + 3 * j] = t
            data[i, 3 + 3 * j] = s
            data[i, 4 + 3 * j] = e
    notices = [
        f"variables time0 to time{n_steps} created",
        f"variables state0 to state{n_steps} created",
    ]
    if n_steps >= 1:
        notices.append(f"variables event1 to event{n_steps} created")
    return MsmDataset(names=names, data=data, notices=notices)
