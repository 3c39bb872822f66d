"""Hazard models and their core operations.

A HazardModel combines a baseline kernel with multiplicative covariate
effects exp(x'beta) and time-dependent effects exp(x'tau * w(t)).
Kernels come in three flavours:

* ParametricKernel: exponential, weibull or gompertz baseline.
* MixtureKernel: two-component mixture of the same parametric family,
  S0(t) = p S1(t) + (1 - p) S2(t), covariates proportional on the
  all-cause hazard.
* UserKernel: an expression on one of four scales.  ``hazard`` /
  ``loghazard`` define h(t) directly; ``chazard`` / ``logchazard``
  define H(t), with covariate and tde effects additive on the log
  cumulative hazard scale.

Closed-form cumulative hazards and inverses are used whenever they
exist (all plain parametric kernels, exponential/weibull with log-time
tde, gompertz with linear tde, cumulative-scale user kernels, mixture
cumulative hazards).  Everything else integrates the hazard with
Gauss-Legendre quadrature and inverts with the bracketed root solver.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import expr as ex
from . import quad, rootfind
from .errors import (
    BindingError,
    EvaluationError,
    NumericError,
    UnsupportedModelError,
)

EXPONENTIAL = "exponential"
WEIBULL = "weibull"
GOMPERTZ = "gompertz"
FAMILIES = (EXPONENTIAL, WEIBULL, GOMPERTZ)

HAZARD_SCALES = ("hazard", "loghazard")
CUMULATIVE_SCALES = ("chazard", "logchazard")
SCALES = HAZARD_SCALES + CUMULATIVE_SCALES

# below this |gamma| the gompertz cumulative hazard and its inverse
# switch to series expansions to avoid 0/0
GOMPERTZ_SERIES_CUTOFF = 1e-8

DEFAULT_NODES = 30

# canonical time functions for tde effects
LOG_TIME_AST = ex.FunctionCall("log", ex.VAR_T)
LINEAR_TIME_AST = ex.VAR_T


@dataclass(frozen=True)
class ParametricFamily:
    family: str
    lam: float
    gamma: float | None = None


@dataclass(frozen=True)
class CovariateEffect:
    name: str
    coef: float
    col: int | None = None  # column index once bound


@dataclass(frozen=True)
class TdeSpec:
    effects: tuple[CovariateEffect, ...]
    time_function: ex.CompiledExpr


@dataclass(frozen=True)
class ParametricKernel:
    family: ParametricFamily


@dataclass(frozen=True)
class MixtureKernel:
    first: ParametricFamily
    second: ParametricFamily
    pmix: float


@dataclass(frozen=True)
class UserKernel:
    scale: str
    expr: ex.CompiledExpr


@dataclass(frozen=True)
class HazardModel:
    kernel: ParametricKernel | MixtureKernel | UserKernel
    covariates: tuple[CovariateEffect, ...] = ()
    tde: TdeSpec | None = None
    gl_order: int = DEFAULT_NODES

    def rule(self) -> quad.GlRule:
        return quad.gl_rule(self.gl_order)


def canonical_time_function(kernel) -> ex.ExprAst:
    """Default tde time function: log time for exponential/weibull,
    linear time for gompertz and mixtures, linear for user kernels."""
    if isinstance(kernel, ParametricKernel):
        if kernel.family.family in (EXPONENTIAL, WEIBULL):
            return LOG_TIME_AST
        return LINEAR_TIME_AST
    return LINEAR_TIME_AST


def bind_model(model: HazardModel, schema) -> HazardModel:
    """Resolve every covariate reference in the model against ``schema``
    (ordered column names).  Returns a new model; raises BindingError on
    unknown names."""
    index = {name: i for i, name in enumerate(schema)}

    def bind_effects(effects):
        out = []
        for eff in effects:
            if eff.name not in index:
                raise BindingError(
                    f"covariate '{eff.name}' not found in data columns {list(schema)!r}"
                )
            out.append(replace(eff, col=index[eff.name]))
        return tuple(out)

    kernel = model.kernel
    if isinstance(kernel, UserKernel):
        kernel = replace(kernel, expr=ex.bind(kernel.expr.ast, schema))
    tde = model.tde
    if tde is not None:
        tde = TdeSpec(
            effects=bind_effects(tde.effects),
            time_function=ex.bind(tde.time_function.ast, schema),
        )
    return replace(
        model,
        kernel=kernel,
        covariates=bind_effects(model.covariates),
        tde=tde,
    )


def validate_model(model: HazardModel) -> list[str]:
    """Invariant check.  Returns a list of human-readable violations,
    empty when the model is valid."""
    problems: list[str] = []

    def check_family(fam: ParametricFamily, where: str) -> None:
        if fam.family not in FAMILIES:
            problems.append(f"{where}: unknown distribution '{fam.family}'")
            return
        if not fam.lam > 0:
            problems.append(f"{where}: lambda must be positive, got {fam.lam!r}")
        if fam.family == EXPONENTIAL:
            if fam.gamma is not None:
                problems.append(f"{where}: exponential takes no gamma")
        elif fam.gamma is None:
            problems.append(f"{where}: {fam.family} requires a gamma value")
        elif fam.family == WEIBULL and not fam.gamma > 0:
            problems.append(f"{where}: weibull gamma must be positive, got {fam.gamma!r}")

    kernel = model.kernel
    if isinstance(kernel, ParametricKernel):
        check_family(kernel.family, "kernel")
    elif isinstance(kernel, MixtureKernel):
        check_family(kernel.first, "mixture component 1")
        check_family(kernel.second, "mixture component 2")
        if kernel.first.family != kernel.second.family:
            problems.append(
                "mixture components must share a family, got "
                f"'{kernel.first.family}' and '{kernel.second.family}'"
            )
        if not 0.0 < kernel.pmix < 1.0:
            problems.append(
                f"pmix must lie strictly inside (0, 1), got {kernel.pmix!r}; "
                "boundary values collapse to a single component"
            )
    elif isinstance(kernel, UserKernel):
        if kernel.scale not in SCALES:
            problems.append(f"unknown kernel scale '{kernel.scale}'")
    else:
        problems.append(f"unknown kernel type {type(kernel).__name__}")

    if model.tde is not None and not model.tde.effects:
        problems.append("tde specified with no effects")
    if not 1 <= model.gl_order <= quad.MAX_ORDER:
        problems.append(
            f"gl_order must be in [1, {quad.MAX_ORDER}], got {model.gl_order!r}"
        )
    return problems


# ---------------------------------------------------------------------------
# baseline family formulas (no covariates), vectorized over t and over
# effective parameters


def family_hazard(family: str, lam, gamma, t):
    if family == EXPONENTIAL:
        lam_arr = np.asarray(lam, dtype=float)
        shape = np.broadcast_shapes(lam_arr.shape, np.shape(t))
        return np.broadcast_to(lam_arr, shape)
    if family == WEIBULL:
        with np.errstate(divide="ignore"):
            return lam * gamma * np.float_power(t, gamma - 1.0)
    if family == GOMPERTZ:
        return lam * np.exp(gamma * np.asarray(t, dtype=float))
    raise UnsupportedModelError(f"unknown family '{family}'")


def family_cumhaz(family: str, lam, gamma, t):
    """H(t) from time 0."""
    t = np.asarray(t, dtype=float)
    if family == EXPONENTIAL:
        return lam * t
    if family == WEIBULL:
        return lam * np.float_power(t, gamma)
    if family == GOMPERTZ:
        gamma = np.asarray(gamma, dtype=float)
        gt = gamma * t
        small = np.abs(gamma) < GOMPERTZ_SERIES_CUTOFF
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            general = lam * np.expm1(gt) / np.where(small, 1.0, gamma)
            series = lam * t * (1.0 + gt / 2.0 + gt * gt / 6.0)
        return np.where(small, series, general)
    raise UnsupportedModelError(f"unknown family '{family}'")


def family_inverse_cumhaz(family: str, lam, gamma, v):
    """t with H(t) == v, measured from time 0.  Unreachable levels
    (gompertz with negative gamma) come back as +inf."""
    v = np.asarray(v, dtype=float)
    if family == EXPONENTIAL:
        return v / lam
    if family == WEIBULL:
        return np.float_power(v / lam, 1.0 / gamma)
    if family == GOMPERTZ:
        gamma = np.asarray(gamma, dtype=float)
        w = v / lam
        small = np.abs(gamma) < GOMPERTZ_SERIES_CUTOFF
        arg = gamma * w
        with np.errstate(invalid="ignore", divide="ignore"):
            general = np.log1p(arg) / np.where(small, 1.0, gamma)
        general = np.where(arg <= -1.0, np.inf, general)
        series = w * (1.0 - arg / 2.0 + arg * arg / 3.0)
        return np.where(small, series, general)
    raise UnsupportedModelError(f"unknown family '{family}'")


# ---------------------------------------------------------------------------
# linear predictors


def _resolved_col(eff: CovariateEffect) -> int:
    if eff.col is None:
        raise BindingError(
            f"covariate effect '{eff.name}' is unbound; bind the model to a schema first"
        )
    return eff.col


def linear_predictor(model: HazardModel, rows) -> np.ndarray | float:
    """x'beta for one row (1-D input) or a batch (2-D input, one value
    per row)."""
    rows = np.asarray(rows, dtype=float)
    batch = rows.ndim == 2
    out = np.zeros(rows.shape[0]) if batch else 0.0
    for eff in model.covariates:
        col = _resolved_col(eff)
        out = out + eff.coef * (rows[:, col] if batch else rows[col])
    return out


def tde_coefficient(model: HazardModel, rows) -> np.ndarray | float:
    """x'tau, the accumulated time-dependent effect coefficient."""
    if model.tde is None:
        return 0.0
    rows = np.asarray(rows, dtype=float)
    batch = rows.ndim == 2
    out = np.zeros(rows.shape[0]) if batch else 0.0
    for eff in model.tde.effects:
        col = _resolved_col(eff)
        out = out + eff.coef * (rows[:, col] if batch else rows[col])
    return out


def _cov_getter(rows):
    """Covariate lookup for expression evaluation: scalars for a single
    row, column vectors (broadcast against a time matrix) for a batch."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 2:
        return lambda i: rows[:, i][:, None]
    return lambda i: rows[i]


def _tde_w(model: HazardModel, t, t0, rows):
    return ex.evaluate_with(model.tde.time_function, t, t0, _cov_getter(rows))


# ---------------------------------------------------------------------------
# hazard evaluation


def _mixture_log_surv(kernel: MixtureKernel, t):
    """log S0(t) for the mixture baseline, computed stably."""
    h1 = family_cumhaz(kernel.first.family, kernel.first.lam, kernel.first.gamma, t)
    h2 = family_cumhaz(kernel.second.family, kernel.second.lam, kernel.second.gamma, t)
    return np.logaddexp(np.log(kernel.pmix) - h1, np.log1p(-kernel.pmix) - h2)


def _mixture_hazard(kernel: MixtureKernel, t):
    """h0(t) = [p f1 + (1-p) f2] / S0 as a ratio of log-scale sums."""
    f1 = kernel.first
    f2 = kernel.second
    hz1 = family_hazard(f1.family, f1.lam, f1.gamma, t)
    hz2 = family_hazard(f2.family, f2.lam, f2.gamma, t)
    ch1 = family_cumhaz(f1.family, f1.lam, f1.gamma, t)
    ch2 = family_cumhaz(f2.family, f2.lam, f2.gamma, t)
    with np.errstate(divide="ignore"):
        num = np.logaddexp(
            np.log(kernel.pmix) + np.log(hz1) - ch1,
            np.log1p(-kernel.pmix) + np.log(hz2) - ch2,
        )
    return np.exp(num - _mixture_log_surv(kernel, t))


def _baseline_hazard(model: HazardModel, t, t0, rows):
    kernel = model.kernel
    if isinstance(kernel, ParametricKernel):
        fam = kernel.family
        return family_hazard(fam.family, fam.lam, fam.gamma, np.asarray(t, dtype=float))
    if isinstance(kernel, MixtureKernel):
        return _mixture_hazard(kernel, np.asarray(t, dtype=float))
    if isinstance(kernel, UserKernel):
        if kernel.scale in CUMULATIVE_SCALES:
            raise UnsupportedModelError(
                "hazard values are not defined for a cumulative-scale "
                f"({kernel.scale}) kernel"
            )
        value = ex.evaluate_with(kernel.expr, t, t0, _cov_getter(rows))
        if kernel.scale == "loghazard":
            with np.errstate(over="ignore"):
                return np.exp(value)
        bad = value < 0
        if np.any(bad):
            raise EvaluationError(
                "hazard expression is negative", t=ex._fault_t(t, bad)
            )
        return value
    raise UnsupportedModelError(f"unknown kernel type {type(kernel).__name__}")


def hazard_at(model: HazardModel, t, t0=0.0, row=()):
    """h(t | row) for a single observation.  ``t`` may be a scalar or an
    array of any shape; the return value matches its shape."""
    return _hazard_rows(model, t, t0, np.asarray(row, dtype=float))


def _hazard_rows(model: HazardModel, t, t0, rows):
    base = _baseline_hazard(model, t, t0, rows)
    lp = linear_predictor(model, rows)
    if model.tde is not None:
        xt = tde_coefficient(model, rows)
        w = _tde_w(model, t, t0, rows)
        if np.ndim(lp):
            lp = np.asarray(lp)[:, None] + np.asarray(xt)[:, None] * w
        else:
            lp = lp + xt * w
    elif np.ndim(lp):
        lp = np.asarray(lp)[:, None]
    if np.ndim(lp) or lp != 0.0:
        with np.errstate(over="ignore"):
            base = base * np.exp(lp)
    out = np.asarray(base, dtype=float)
    shape = np.broadcast_shapes(np.shape(t), out.shape)
    return np.broadcast_to(out, shape) if out.shape != shape else out


# ---------------------------------------------------------------------------
# closed-form classification

KIND_PARAM = "parametric"
KIND_PARAM_TDE = "parametric-tde"
KIND_MIXTURE = "mixture"
KIND_CUMULATIVE = "cumulative-scale"
KIND_NUMERIC = "numeric"


def closed_kind(model: HazardModel) -> str:
    """Which evaluation strategy the model admits.

    KIND_PARAM and KIND_PARAM_TDE invert in closed form; KIND_MIXTURE
    and KIND_CUMULATIVE have analytic cumulative hazards but numeric
    inverses; KIND_NUMERIC needs quadrature for both.
    """
    kernel = model.kernel
    if isinstance(kernel, UserKernel):
        return KIND_CUMULATIVE if kernel.scale in CUMULATIVE_SCALES else KIND_NUMERIC
    if isinstance(kernel, MixtureKernel):
        return KIND_MIXTURE if model.tde is None else KIND_NUMERIC
    if model.tde is None:
        return KIND_PARAM
    fam = kernel.family.family
    w = model.tde.time_function.ast
    if fam in (EXPONENTIAL, WEIBULL) and w == LOG_TIME_AST:
        return KIND_PARAM_TDE
    if fam == GOMPERTZ and w == LINEAR_TIME_AST:
        return KIND_PARAM_TDE
    return KIND_NUMERIC


def _effective_family(model: HazardModel, rows):
    """Reduce a KIND_PARAM / KIND_PARAM_TDE model on given row(s) to an
    effective (family, lam, gamma) triple absorbing covariate and tde
    effects.  lam/gamma come back as scalars (1-D row) or vectors.

    exponential/weibull with log-time tde: h = lam g t^{g-1} e^{xb + xt log t}
      -> weibull with shape g + xt, scale lam g e^{xb} / (g + xt).
    gompertz with linear tde: gamma shifts to gamma + xt.
    """
    kernel = model.kernel
    fam = kernel.family
    xb = linear_predictor(model, rows)
    scale = np.exp(xb) * fam.lam
    if model.tde is None:
        return fam.family, scale, fam.gamma
    xt = tde_coefficient(model, rows)
    if fam.family == GOMPERTZ:
        return GOMPERTZ, scale, fam.gamma + xt
    gamma = 1.0 if fam.family == EXPONENTIAL else fam.gamma
    shape = gamma + xt
    bad = np.asarray(shape <= 0)
    if np.any(bad):
        which = np.argmax(bad)
        raise EvaluationError(
            "time-dependent effect drives the effective weibull shape "
            f"non-positive ({np.asarray(shape).reshape(-1)[which]:g}); "
            "the cumulative hazard would diverge at 0"
        )
    return WEIBULL, scale * gamma / shape, shape


def _cumulative_level(model: HazardModel, t, t0, rows):
    """Lambda(t) * exp(x'beta + x'tau w(t)) for cumulative-scale kernels.
    Zero baseline forces the whole term to zero so w(0) = -inf cannot
    produce 0 * inf."""
    kernel = model.kernel
    value = ex.evaluate_with(kernel.expr, t, t0, _cov_getter(rows))
    if kernel.scale == "logchazard":
        with np.errstate(over="ignore"):
            base = np.exp(value)
    else:
        base = np.asarray(value, dtype=float)
        bad = base < 0
        if np.any(bad):
            raise EvaluationError(
                "cumulative hazard expression is negative", t=ex._fault_t(t, bad)
            )
    lp = linear_predictor(model, rows)
    if model.tde is not None:
        xt = tde_coefficient(model, rows)
        w = _tde_w(model, t, t0, rows)
        if np.ndim(lp):
            lp = np.asarray(lp)[:, None] + np.asarray(xt)[:, None] * w
        else:
            lp = lp + xt * w
    elif np.ndim(lp):
        lp = np.asarray(lp)[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(base == 0.0, 0.0, base * np.exp(lp))
    return out


def cumhaz_interval_rows(model: HazardModel, a, b, t0, rows, rule=None):
    """H(a -> b) for a batch: integral of the row-specific hazard over
    [a, b].  ``a``/``b`` scalars or per-row vectors, ``rows`` 1-D (single
    observation, scalar result) or 2-D (vector result)."""
    kind = closed_kind(model)
    rows = np.asarray(rows, dtype=float)
    batch = rows.ndim == 2
    if kind in (KIND_PARAM, KIND_PARAM_TDE):
        family, lam, gamma = _effective_family(model, rows)
        return family_cumhaz(family, lam, gamma, b) - family_cumhaz(family, lam, gamma, a)
    if kind == KIND_MIXTURE:
        xb = linear_predictor(model, rows)
        base = _mixture_log_surv(model.kernel, a) - _mixture_log_surv(model.kernel, b)
        return np.exp(xb) * base
    if kind == KIND_CUMULATIVE:
        if batch:
            # per-row times must align with the (N, 1) covariate columns
            n = rows.shape[0]
            a2 = np.broadcast_to(np.asarray(a, dtype=float), (n,))[:, None]
            b2 = np.broadcast_to(np.asarray(b, dtype=float), (n,))[:, None]
            t02 = np.broadcast_to(np.asarray(t0, dtype=float), (n,))[:, None]
            hi = _cumulative_level(model, b2, t02, rows)
            lo = _cumulative_level(model, a2, t02, rows)
            diff = np.asarray(hi - lo).reshape(n)
        else:
            hi = _cumulative_level(model, b, t0, rows)
            lo = _cumulative_level(model, a, t0, rows)
            diff = np.asarray(hi - lo)
        if np.any(diff < 0):
            raise EvaluationError(
                "cumulative-hazard expression decreased over the requested "
                "interval; it must be nondecreasing in t"
            )
        return diff if batch else float(diff.reshape(()))
    # quadrature
    rule = rule if rule is not None else model.rule()
    if batch:
        a_vec = np.broadcast_to(np.asarray(a, dtype=float), (rows.shape[0],))
        b_vec = np.broadcast_to(np.asarray(b, dtype=float), (rows.shape[0],))
        half = 0.5 * (b_vec - a_vec)
        mid = 0.5 * (b_vec + a_vec)
        points = mid[:, None] + half[:, None] * rule.nodes[None, :]
        t0_col = np.broadcast_to(np.asarray(t0, dtype=float), (rows.shape[0],))[:, None]
        values = _hazard_rows(model, points, t0_col, rows)
        if not np.all(np.isfinite(values)):
            bad = ~np.isfinite(values)
            raise NumericError(
                f"hazard is not finite at t={points[bad][0]:g} during quadrature"
            )
        return half * (values @ rule.weights)
    if a == b:
        return 0.0
    return quad.integrate(
        lambda tv: _hazard_rows(model, tv, t0, rows), float(a), float(b), rule
    )


def cumhaz(model: HazardModel, a, b, t0=0.0, row=(), rule=None):
    """Cumulative hazard over [a, b] for one observation."""
    return float(cumhaz_interval_rows(model, a, b, t0, np.asarray(row, dtype=float), rule))


def invert_cumhaz(model: HazardModel, target, lower, cap, row=(), rule=None, t0=None):
    """Smallest t in [lower, cap] with H(lower -> t) == target, or None
    when the target is beyond H(lower -> cap).

    ``t0`` is the state-entry time used by ``{t0}`` references; it
    defaults to ``lower``.
    """
    row = np.asarray(row, dtype=float)
    if t0 is None:
        t0 = lower
    if target < 0:
        raise NumericError(f"target cumulative hazard must be >= 0, got {target!r}")
    if target == 0.0:
        return float(lower)
    kind = closed_kind(model)
    if kind in (KIND_PARAM, KIND_PARAM_TDE):
        family, lam, gamma = _effective_family(model, row)
        cap_level = family_cumhaz(family, lam, gamma, cap) - family_cumhaz(
            family, lam, gamma, lower
        )
        if np.isnan(cap_level):
            raise NumericError(f"cumulative hazard not finite at cap t={cap:g}")
        if cap_level < target:
            return None
        level = family_cumhaz(family, lam, gamma, lower) + target
        t = float(family_inverse_cumhaz(family, lam, gamma, level))
        return min(t, float(cap))
    if not np.isfinite(cap):
        raise NumericError(
            "numeric inversion needs a finite cap (set maxtime)"
        )
    g = lambda tt: cumhaz_interval_rows(model, lower, tt, t0, row, rule)
    return rootfind.solve_monotone(g, float(target), float(lower), float(cap))
