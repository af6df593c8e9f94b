"""Reflection-principle probabilities for variance-2 Brownian motion.

All probabilities are for ``b`` started at 0 unless stated otherwise, with
``Phi`` the variance-2 Gaussian CDF from :mod:`nakernel.randpath`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, UnsupportedRegionError
from .randpath import gaussian_tail, phi_cdf

#: default constant in the two-sided sup tail bound (union of two reflections)
SUP_TAIL_CONSTANT = 2.0


@dataclass(frozen=True)
class SupEventQuery:
    """Event ``{sup_[0,t] |b| >= a and b_t in [x, y]}``."""

    a: float
    x: float
    y: float
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise InvalidArgumentError("horizon t must be positive")
        if self.a < 0:
            raise InvalidArgumentError("barrier a must be nonnegative")
        if not self.x < self.y:
            raise InvalidArgumentError("interval requires x < y")

    def region(self) -> str:
        a, x, y = self.a, self.x, self.y
        if a == 0.0:
            # the sup condition is vacuous; the R1 expression still dominates
            return "R1"
        if -a <= x and y <= a:
            return "R1"
        if y < -a:
            return "R2"
        if a < x:
            return "R3"
        if 0 < x < a < y:
            return "R4"
        raise UnsupportedRegionError(
            f"interval [{x}, {y}] with barrier {a} straddles several regions; "
            "split it at -a, 0 and a")


def _check_t(t):
    if not t > 0:
        raise InvalidArgumentError("horizon t must be positive")


def prob_hit_then_below(a: float, x: float, t: float) -> float:
    """``W_0(sup_[0,t] b >= a and b_t <= x)`` for ``a > 0``.

    Equals ``2 W(b_t > a) - W(b_t > x)`` when ``x >= a`` and
    ``W(b_t > 2a - x)`` when ``x < a``; both agree at ``x = a``.
    """
    if not a > 0:
        raise InvalidArgumentError("barrier a must be positive")
    _check_t(t)
    rt = np.sqrt(t)
    if x >= a:
        return float(2.0 * gaussian_tail(a / rt) - gaussian_tail(x / rt))
    return float(gaussian_tail((2.0 * a - x) / rt))


def bound_abs_sup_interval(q: SupEventQuery) -> float:
    """Upper bound for ``W_0(sup |b| >= a and b_t in [x, y])``, per region.

    Regions: R1 ``-a <= x < y <= a``, R2 ``x < y < -a``, R3 ``a < x < y``,
    R4 ``0 < x < a < y``.  Anything else raises
    :class:`UnsupportedRegionError`.

    In R4 the terms are upper tails ``W(b_t > .)``; with CDFs in their place
    the expression can go negative.
    """
    a, x, y = q.a, q.x, q.y
    rt = np.sqrt(q.t)
    P = lambda u: float(phi_cdf(u / rt))
    region = q.region()
    if region == "R1":
        val = 2 * P(2 * a - x) - 2 * P(2 * a - y) + 2 * P(2 * a + y) - 2 * P(2 * a + x)
    elif region == "R2":
        val = 2 * P(2 * a - x) - 2 * P(2 * a - y) + P(-x) - P(-y)
    elif region == "R3":
        val = P(y) - P(x) + 2 * P(2 * a + y) - 2 * P(2 * a + x)
    else:
        T = lambda u: float(gaussian_tail(u / rt))
        val = 2 * T(a) - T(y) - T(2 * a - x) + T(2 * a + x) - T(2 * a + y)
    return float(val)


def density_limit_bound(a: float, n: float, t: float) -> float:
    """Limit as eps -> 0 of the bound on ``eps^-1 W_0(sup|b| >= a, b_t in n +- eps/2)``."""
    if a < 0:
        raise InvalidArgumentError("barrier a must be nonnegative")
    _check_t(t)
    pref = 2.0 / np.sqrt(np.pi * t)
    if abs(n) < a:
        return float(pref * np.exp(-(2 * a - abs(n)) ** 2 / (4 * t)))
    return float(pref * np.exp(-n * n / (4 * t)))


def sup_tail_bound(x: float, y: float, t: float, c: float = SUP_TAIL_CONSTANT) -> float:
    """``c exp(-(y - x)^2 / 4t)``, bounding ``W_x(sup_[0,t] |b| >= y)``.

    With the default ``c = 2`` the bound is valid for ``0 <= x <= y``: each of
    the two one-sided reflections contributes at most ``exp(-(y-x)^2/4t)``.
    """
    if y < x:
        raise InvalidArgumentError("sup_tail_bound requires x <= y")
    _check_t(t)
    return float(c * np.exp(-(y - x) ** 2 / (4.0 * t)))


def simulate_sup_paths(rng: np.random.Generator, n_paths: int, t: float, n_steps: int,
                       start: float = 0.0, chunk: int = 2000):
    """Running ``(max b, min b, b_t)`` of discretized variance-2 paths.

    Used as a brute-force oracle; the discrete supremum can only under-count
    barrier crossings.
    """
    dt = t / n_steps
    sd = np.sqrt(2.0 * dt)
    hi = np.empty(n_paths)
    lo = np.empty(n_paths)
    end = np.empty(n_paths)
    for s in range(0, n_paths, chunk):
        k = min(chunk, n_paths - s)
        pos = np.full(k, float(start))
        mx = pos.copy()
        mn = pos.copy()
        # step in blocks to bound memory at chunk * block doubles
        block = 500
        for b0 in range(0, n_steps, block):
            nb = min(block, n_steps - b0)
            path = pos[:, None] + np.cumsum(rng.standard_normal((k, nb)) * sd, axis=1)
            np.maximum(mx, path.max(axis=1), out=mx)
            np.minimum(mn, path.min(axis=1), out=mn)
            pos = path[:, -1]
        hi[s:s + k] = mx
        lo[s:s + k] = mn
        end[s:s + k] = pos
    return hi, lo, end
