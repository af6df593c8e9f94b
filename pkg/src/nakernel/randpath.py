"""Brownian paths under the variance-2 normalization.

Throughout the package a one-dimensional Brownian motion ``b`` satisfies
``Var b_s = 2 s`` (generator ``d^2/dx^2`` rather than ``1/2 d^2/dx^2``).  Every
sampler here, and every Gaussian formula downstream, uses that convention.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InvalidArgumentError
from .rng import derive_rng


def _frozen(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """A path sampled on an increasing time grid starting at 0.

    ``values`` has shape ``(len(grid), dim)``.  Arrays are read-only.
    """

    grid: np.ndarray
    values: np.ndarray
    seed: int = 0

    def __post_init__(self):
        grid = _frozen(self.grid)
        values = _frozen(self.values)
        if values.ndim == 1:
            values = _frozen(values[:, None])
        if grid.ndim != 1 or grid.size < 2:
            raise InvalidArgumentError("grid must be a 1-d array with at least two times")
        if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
            raise InvalidArgumentError("grid must start at 0 and be strictly increasing")
        if values.shape[0] != grid.size:
            raise InvalidArgumentError("values and grid lengths differ")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    def at(self, u: float) -> np.ndarray:
        """Linear interpolation of the path at time ``u``."""
        if u < 0 or u > self.grid[-1] * (1 + 1e-12):
            raise InvalidArgumentError(f"time {u} outside path range [0, {self.grid[-1]}]")
        return np.array([np.interp(u, self.grid, self.values[:, j]) for j in range(self.dim)])

    def restrict(self, s: float, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and values on ``[s, t]``, endpoints included by interpolation."""
        if not (0.0 <= s < t) or t > self.grid[-1] * (1 + 1e-12):
            raise InvalidArgumentError(
                f"window [{s}, {t}] not inside path range [0, {self.grid[-1]}]")
        t = min(t, float(self.grid[-1]))
        inner = (self.grid > s) & (self.grid < t)
        times = np.concatenate([[s], self.grid[inner], [t]])
        vals = np.column_stack([np.interp(times, self.grid, self.values[:, j])
                                for j in range(self.dim)])
        return times, vals


@dataclass(frozen=True, eq=False)
class BridgeSpec:
    """Endpoints of a variance-2 bridge run on a changed clock."""

    start: float
    end: float
    clock_total: float
    clock_grid: np.ndarray

    def __post_init__(self):
        if not self.clock_total > 0:
            raise InvalidArgumentError("clock_total must be positive")
        grid = _frozen(np.atleast_1d(self.clock_grid))
        if grid.size and (grid[0] < 0 or grid[-1] > self.clock_total
                          or np.any(np.diff(grid) <= 0)):
            raise InvalidArgumentError(
                "clock_grid must be strictly increasing inside [0, clock_total]")
        object.__setattr__(self, "clock_grid", grid)


def uniform_grid(horizon: float, n_steps: int) -> np.ndarray:
    if not horizon > 0:
        raise InvalidArgumentError("horizon must be positive")
    if int(n_steps) < 1:
        raise InvalidArgumentError("n_steps must be at least 1")
    return np.linspace(0.0, float(horizon), int(n_steps) + 1)


def bm_drift_values(rng: np.random.Generator, n_paths: int, grid, start, drift) -> np.ndarray:
    """Array of shape ``(n_paths, len(grid), dim)`` of ``start + b_t + drift t``."""
    start = np.atleast_1d(np.asarray(start, dtype=float))
    drift = np.atleast_1d(np.asarray(drift, dtype=float))
    dt = np.diff(grid)
    dim = start.size
    steps = rng.standard_normal((n_paths, dt.size, dim))
    steps *= np.sqrt(2.0 * dt)[None, :, None]
    steps += drift[None, None, :] * dt[None, :, None]
    out = np.empty((n_paths, dt.size + 1, dim))
    out[:, 0, :] = start
    np.cumsum(steps, axis=1, out=out[:, 1:, :])
    out[:, 1:, :] += start
    return out


def sample_bm_drift(dim: int, start, drift, horizon: float, n_steps: int, seed: int,
                    grid=None) -> DiscretePath:
    """Brownian motion with constant drift, ``start + b_t + drift * t``.

    Increments over ``[t_i, t_{i+1}]`` are independent Gaussians with mean
    ``drift * dt`` and per-coordinate variance ``2 dt``.  For the vertical
    process of the diffusion pass ``drift = -2 * alpha``.

    Parameters
    ----------
    dim : int
        Dimension of the path.
    start, drift : array_like
        Vectors of length ``dim`` (scalars are broadcast).
    horizon : float
        Final time; must be positive.
    n_steps : int
        Number of uniform steps; ignored when ``grid`` is given.
    seed : int
        Master seed; the same arguments and seed reproduce the path bit for bit.
    grid : array_like, optional
        Custom increasing grid starting at 0 (overrides ``horizon``/``n_steps``).
    """
    if int(dim) < 1:
        raise InvalidArgumentError("dim must be positive")
    if grid is None:
        grid = uniform_grid(horizon, n_steps)
    else:
        grid = np.asarray(grid, dtype=float)
    start = np.broadcast_to(np.asarray(start, dtype=float), (dim,))
    drift = np.broadcast_to(np.asarray(drift, dtype=float), (dim,))
    values = bm_drift_values(derive_rng(seed), 1, grid, start, drift)[0]
    return DiscretePath(grid=grid, values=values, seed=int(seed))


def bridge_values(rng: np.random.Generator, n_paths: int, start, end, clock) -> np.ndarray:
    """Sequentially conditioned variance-2 bridges evaluated at clock times.

    ``start``/``end`` are scalars or arrays broadcastable to ``(n_paths,)``.
    ``clock`` is a nondecreasing array with ``clock[0] >= 0``; the total clock
    is ``clock[-1]`` and the bridge is pinned to ``end`` there.  Returns an
    array of shape ``(n_paths, len(clock))``; the first column is the bridge
    at ``clock[0]`` (conditioned from ``start`` at clock 0).
    """
    clock = np.asarray(clock, dtype=float)
    total = clock[-1]
    if not total > 0:
        raise InvalidArgumentError("bridge clock total must be positive")
    start = np.broadcast_to(np.asarray(start, dtype=float), (n_paths,))
    end = np.broadcast_to(np.asarray(end, dtype=float), (n_paths,))
    z = rng.standard_normal((n_paths, clock.size))
    out = np.empty((n_paths, clock.size))
    x = start.copy()
    c_prev = 0.0
    for i, c in enumerate(clock):
        remaining = total - c_prev
        if c >= total:
            x = end.copy()
        elif c > c_prev:
            frac = (c - c_prev) / remaining
            var = 2.0 * (c - c_prev) * (total - c) / remaining
            x = x + (end - x) * frac + np.sqrt(var) * z[:, i]
        out[:, i] = x
        c_prev = max(c_prev, c)
    return out


def sample_bridge(spec: BridgeSpec, seed: int) -> np.ndarray:
    """Values of one bridge at ``spec.clock_grid``.

    At clock ``c`` the value has mean ``start + (end - start) c / C`` and
    variance ``2 c (C - c) / C`` with ``C = spec.clock_total``.
    """
    clock = np.append(spec.clock_grid, spec.clock_total)
    vals = bridge_values(derive_rng(seed), 1, spec.start, spec.end, clock)[0]
    return vals[:-1]


def phi_cdf(x):
    """CDF of a centered Gaussian with variance 2: ``Phi(x) = N(x / sqrt 2)``."""
    return ndtr(np.asarray(x, dtype=float) / np.sqrt(2.0))


def gaussian_tail(x):
    """``W_0(b_1 > x) = 1 - Phi(x)``, computed without cancellation."""
    return ndtr(-np.asarray(x, dtype=float) / np.sqrt(2.0))
