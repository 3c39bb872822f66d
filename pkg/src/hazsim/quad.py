"""Gauss-Legendre quadrature.

Nodes and weights on [-1, 1] are computed by Newton iteration on the
Legendre polynomial P_n (evaluated via the three-term recurrence) and
cached per order.  An order-n rule integrates polynomials up to degree
2n - 1 exactly; order 30 is the package default for cumulative hazards.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import NumericError

MAX_ORDER = 512


@dataclass(frozen=True)
class GlRule:
    order: int
    nodes: np.ndarray   # ascending, symmetric about 0
    weights: np.ndarray  # positive, sum to 2


_cache: dict[int, GlRule] = {}
_cache_lock = threading.Lock()


def _legendre_and_derivative(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P_n(x) and P_n'(x) via the recurrence
    (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(1, n):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        p_prev = p
        p = p_next
    # standard identity for the derivative in terms of P_n and P_{n-1}
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gl_rule(order: int) -> GlRule:
    """Return the cached rule of the given order (1 <= order <= 512)."""
    if not isinstance(order, (int, np.integer)) or isinstance(order, bool):
        raise NumericError(f"quadrature order must be an integer, got {order!r}")
    order = int(order)
    if order < 1 or order > MAX_ORDER:
        raise NumericError(f"quadrature order must be in [1, {MAX_ORDER}], got {order}")
    with _cache_lock:
        rule = _cache.get(order)
    if rule is not None:
        return rule

    if order == 1:
        nodes = np.array([0.0])
        weights = np.array([2.0])
    else:
        n = order
        k = np.arange(n)
        # Chebyshev-like initial guess, then Newton
        x = np.cos(np.pi * (k + 0.75) / (n + 0.5))
        for _ in range(100):
            p, dp = _legendre_and_derivative(n, x)
            dx = p / dp
            x = x - dx
            if np.max(np.abs(dx)) < 1e-15:
                break
        _, dp = _legendre_and_derivative(n, x)
        weights = 2.0 / ((1.0 - x * x) * dp * dp)
        # enforce exact symmetry: pair each root with its mirror image
        x = 0.5 * (x - x[::-1])
        weights = 0.5 * (weights + weights[::-1])
        order_idx = np.argsort(x)
        nodes = x[order_idx]
        weights = weights[order_idx]

    nodes.setflags(write=False)
    weights.setflags(write=False)
    rule = GlRule(order=order, nodes=nodes, weights=weights)
    with _cache_lock:
        _cache.setdefault(order, rule)
        rule = _cache[order]
    return rule


def mapped_nodes(rule: GlRule, a: float, b: float) -> tuple[np.ndarray, float]:
    """Affine image of the rule's nodes on [a, b] and the half-width
    Jacobian.  Returns ``(points, half_width)``."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    return mid + half * rule.nodes, half


def integrate(f, a: float, b: float, rule: GlRule) -> float:
    """Integral of f over [a, b].

    ``f`` is called once with the full vector of mapped nodes and must
    return a same-length vector.  ``a == b`` returns exactly 0.0 without
    calling ``f``.  Non-finite integrands raise NumericError.
    """
    a = float(a)
    b = float(b)
    if a == b:
        return 0.0
    points, half = mapped_nodes(rule, a, b)
    values = np.asarray(f(points), dtype=float)
    if values.shape != points.shape:
        raise NumericError(
            f"integrand returned shape {values.shape}, expected {points.shape}"
        )
    if not np.all(np.isfinite(values)):
        bad = int(np.argmax(~np.isfinite(values)))
        raise NumericError(
            f"integrand is not finite at t={points[bad]:g}"
        )
    return float(half * np.dot(rule.weights, values))
