"""Bracketed scalar root finding for monotone functions.

The one entry point, solve_monotone, finds t in [lower, cap] with
g(t) = target for a nondecreasing g.  It is the inversion workhorse for
cumulative hazards: g is H(lower -> t) and target is -log(u).

The iteration is Brent's method: bisection for safety, secant /
inverse-quadratic steps for speed, never leaving the bracket.
"""

from __future__ import annotations

from .errors import NumericError

TOL = 1e-8
MAX_ITER = 200
_EPS = 2.220446049250313e-16


def solve_monotone(g, target: float, lower: float, cap: float,
                   tol: float = TOL, max_iter: int = MAX_ITER) -> float | None:
    """Smallest t in [lower, cap] with g(t) == target, or None.

    Returns None exactly when g(cap) < target, i.e. the target is not
    reached inside the bracket (the caller then censors at the cap).
    g(lower) <= target is a precondition; g must be finite on the
    bracket.  Convergence: the bracket width shrinks below tol * |t|,
    so the tolerance is relative to the solution scale.
    """
    target = float(target)
    lower = float(lower)
    cap = float(cap)
    if not cap > lower:
        raise NumericError(f"empty bracket: cap {cap:g} must exceed lower {lower:g}")

    fcap = float(g(cap)) - target
    if fcap != fcap or fcap in (float("inf"), float("-inf")):
        raise NumericError(f"g is not finite at the cap t={cap:g}")
    if fcap < 0.0:
        return None

    flow = float(g(lower)) - target
    if flow != flow or flow in (float("inf"), float("-inf")):
        raise NumericError(f"g is not finite at the lower bound t={lower:g}")
    if flow > 0.0:
        raise NumericError(
            f"bracket violation: g(lower)={flow + target:g} exceeds target {target:g}"
        )
    if flow == 0.0:
        return lower
    if fcap == 0.0:
        return cap

    # Brent: a and b bracket the root, b is the current best, c the previous b.
    a, fa = lower, flow
    b, fb = cap, fcap
    c, fc = a, fa
    d = e = b - a

    for _ in range(max_iter):
        if (fb > 0.0) == (fc > 0.0):
            # root no longer between b and c: reset c to the other bracket end
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            # make b the best estimate
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb

        # relative on t, with a machine-epsilon floor so a bracket
        # straddling 0 can still terminate
        tol_scaled = 2.0 * _EPS * abs(b) + 0.5 * tol * abs(b) + 4.9e-324
        xm = 0.5 * (c - b)
        if abs(xm) <= tol_scaled or fb == 0.0:
            return b

        if abs(e) >= tol_scaled and abs(fa) > abs(fb):
            # attempt interpolation
            s = fb / fa
            if a == c:
                # secant
                p = 2.0 * xm * s
                q = 1.0 - s
            else:
                # inverse quadratic
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0.0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * xm * q - abs(tol_scaled * q), abs(e * q)):
                # interpolation acceptable
                e = d
                d = p / q
            else:
                d = xm
                e = d
        else:
            d = xm
            e = d

        a, fa = b, fb
        if abs(d) > tol_scaled:
            b += d
        else:
            b += tol_scaled if xm > 0.0 else -tol_scaled
        fb = float(g(b)) - target
        if fb != fb:
            raise NumericError(f"g is not finite at t={b:g}")

    raise NumericError(
        f"root finder did not converge within {max_iter} iterations "
        f"(bracket [{min(b, c):g}, {max(b, c):g}])"
    )
