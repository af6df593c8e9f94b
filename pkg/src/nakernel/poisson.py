"""Poisson kernel estimates on N and their decay along dilation orbits.

The Poisson kernel is the long-time limit of the averaged evolution kernel,

    nu(x) = lim_{T -> inf} E_a P^sigma(T, 0)(x^{-1}),

where sigma is a Brownian motion on R^k with drift ``-2 alpha`` started at
``a`` (``a = 0`` unless stated).  Each sigma path contributes one inner
skew-product estimate; the outer average runs over ``n_sigma`` paths.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergentDriftError, InvalidArgumentError
from .evolker import kernel_samples
from .liegroup import (GroupElement, MetaAbelianGroup, dilate, homogeneous_norm, inverse,
                       rho_zero)
from .mcstats import McEstimate
from .randpath import DiscretePath, bm_drift_values, uniform_grid
from .rng import derive_rng, derive_seed, run_tasks

SIGMA_BLOCK = 16


@dataclass(frozen=True, eq=False)
class PoissonEstimate:
    point: GroupElement
    value: McEstimate
    horizon: float
    n_sigma: int
    n_eta: int
    convergence_flag: bool
    half_horizon_value: float = float("nan")
    start: tuple = ()

    def estimate(self, which: str = "mean") -> float:
        return self.value.value(which)


@dataclass(frozen=True, eq=False)
class DecayFit:
    direction: GroupElement
    rho: np.ndarray
    radii: np.ndarray
    log_values: np.ndarray
    slope: float
    slope_stderr: float
    intercept: float = float("nan")
    excluded: tuple = ()
    estimates: tuple = field(default=(), repr=False)


def check_drift(G: MetaAbelianGroup) -> None:
    """Raise unless ``alpha`` lies in the open positive chamber."""
    bad = G.roots.chamber_violation(G.roots.alpha)
    if bad is not None:
        raise DivergentDriftError(
            f"alpha={G.roots.alpha.tolist()} is outside the positive chamber: {bad}")


def _sigma_block(task):
    (G, targets, T, n_steps, start, n, n_eta, seed, block) = task
    grid = uniform_grid(T, n_steps)
    paths = bm_drift_values(derive_rng(seed, block), n, grid, start, -2.0 * G.roots.alpha)
    out = np.empty((n, len(targets), 2))
    for i in range(n):
        sigma = DiscretePath(grid, paths[i])
        for p, g in enumerate(targets):
            for h, horizon in enumerate((T, T / 2)):
                eseed = derive_seed(seed, block, i, p, h)
                p_v, K = kernel_samples(G, sigma, g.v_part, g.m_part[None, :], horizon,
                                        n_eta, eseed)
                out[i, p, h] = p_v * K[:, 0].mean()
    return out


def _nu_core(G, points, T, n_sigma, n_eta, seed, start, n_steps_per_unit, workers):
    check_drift(G)
    if not T > 0:
        raise InvalidArgumentError("horizon T must be positive")
    if int(n_sigma) < 2:
        raise InvalidArgumentError("n_sigma must be at least 2")
    start = np.zeros(G.roots.k) if start is None else np.asarray(start, dtype=float)
    if start.shape != (G.roots.k,):
        raise InvalidArgumentError("start must be a vector in R^k")
    n_steps = max(2, int(round(T * n_steps_per_unit)))
    n_steps += n_steps % 2              # keep T/2 on the grid
    targets = [inverse(G, x) for x in points]
    tasks = [(G, targets, float(T), n_steps, start, min(SIGMA_BLOCK, n_sigma - b0), n_eta,
              seed, b) for b, b0 in enumerate(range(0, int(n_sigma), SIGMA_BLOCK))]
    vals = np.concatenate(run_tasks(_sigma_block, tasks, workers), axis=0)

    out = []
    for p, x in enumerate(points):
        full = McEstimate.from_samples(vals[:, p, 0], seed=seed, variant="nested")
        half = McEstimate.from_samples(vals[:, p, 1], seed=seed, variant="nested")
        gap = abs(full.mean - half.mean)
        flag = bool(gap < 3.0 * np.hypot(full.stderr, half.stderr)) or gap == 0.0
        out.append(PoissonEstimate(point=x, value=full, horizon=float(T), n_sigma=int(n_sigma),
                                   n_eta=int(n_eta), convergence_flag=flag,
                                   half_horizon_value=half.mean,
                                   start=tuple(start.tolist())))
    return out


def estimate_nu(G: MetaAbelianGroup, x: GroupElement, T: float = 8.0, n_sigma: int = 256,
                n_eta: int = 64, seed: int = 0, start=None, n_steps_per_unit: int = 50,
                workers: int | None = 1) -> PoissonEstimate:
    """Nested Monte Carlo estimate of the Poisson kernel at ``x``.

    Parameters
    ----------
    G : MetaAbelianGroup
        Group with its drift ``alpha`` (must lie in the positive chamber).
    x : GroupElement
        Evaluation point.
    T : float
        Horizon.  The same sigma paths are also evaluated at ``T/2`` with
        fresh eta draws; ``convergence_flag`` is set when the two means differ
        by less than three combined standard errors.
    n_sigma, n_eta : int
        Outer and inner sample sizes.
    seed : int
        Master seed.  Sigma block ``b`` (16 paths) uses stream ``(seed, b)``,
        so the result does not depend on ``workers``.
    start : array_like, optional
        Starting point ``a`` of sigma (defaults to 0).

    Returns
    -------
    PoissonEstimate
        ``value`` carries the plain mean, its standard error over sigma paths,
        and the 16-block median of means.
    """
    return _nu_core(G, [x], T, n_sigma, n_eta, seed, start, n_steps_per_unit, workers)[0]


def estimate_nu_many(G: MetaAbelianGroup, points, T: float = 8.0, n_sigma: int = 256,
                     n_eta: int = 64, seed: int = 0, start=None, n_steps_per_unit: int = 50,
                     workers: int | None = 1) -> list:
    """Like :func:`estimate_nu` for several points sharing the sigma paths."""
    return _nu_core(G, list(points), T, n_sigma, n_eta, seed, start, n_steps_per_unit, workers)


def fit_decay(radii, values, stderrs=None):
    """Weighted least squares of ``log value`` on ``log(1 + r)``.

    Weights are ``(value / stderr)^2`` (inverse variance of the log by the
    delta method); uniform when ``stderrs`` is None.  Returns
    ``(slope, slope_stderr, intercept)``.
    """
    r = np.asarray(radii, dtype=float)
    y = np.asarray(values, dtype=float)
    if r.size < 2 or y.shape != r.shape:
        raise InvalidArgumentError("need at least two radii with matching values")
    if np.any(np.diff(r) <= 0):
        raise InvalidArgumentError("radii must be strictly increasing")
    if np.any(y <= 0):
        raise InvalidArgumentError("values must be positive for a log-log fit")
    if stderrs is None:
        w = np.ones_like(y)
    else:
        se = np.asarray(stderrs, dtype=float)
        w = np.where(se > 0, (y / np.where(se > 0, se, 1.0)) ** 2, 1.0)
        if np.all(se > 0) is False and np.any(se > 0):
            w[se <= 0] = w[se > 0].max()
    X = np.column_stack([np.ones_like(r), np.log1p(r)])
    ly = np.log(y)
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ ly)
    resid = ly - X @ beta
    dof = r.size - 2
    if dof > 0:
        scale = float(resid @ (w * resid)) / dof
        slope_se = float(np.sqrt(max(scale, 0.0) * cov[1, 1]))
    else:
        slope_se = float("nan")
    return float(beta[1]), slope_se, float(beta[0])


def _check_unit(G, rho, x0, tol=1e-9):
    nrm = homogeneous_norm(G, rho, x0)
    if abs(nrm - 1.0) > tol:
        raise InvalidArgumentError(f"point must lie on the unit rho-sphere, |x|_rho = {nrm:.12g}")


def decay_regression(G: MetaAbelianGroup, direction: GroupElement, rho, radii,
                     T: float = 8.0, n_sigma: int = 256, n_eta: int = 64, seed: int = 0,
                     n_steps_per_unit: int = 50, which: str = "mom",
                     workers: int | None = 1) -> DecayFit:
    """Slope of ``log nu(delta_r direction)`` against ``log(1 + r)``.

    Points whose horizon test fails are dropped from the fit and listed in
    ``excluded``.  ``which`` selects the plain mean or the median of means.
    """
    rho = np.asarray(rho, dtype=float)
    _check_unit(G, rho, direction)
    radii = np.asarray(radii, dtype=float)
    if radii.size < 2 or np.any(np.diff(radii) <= 0):
        raise InvalidArgumentError("radii must be strictly increasing with at least two entries")
    if np.any(radii < 1):
        raise InvalidArgumentError("radii must be >= 1")
    points = [dilate(G, rho, r, direction) for r in radii]
    ests = estimate_nu_many(G, points, T=T, n_sigma=n_sigma, n_eta=n_eta, seed=seed,
                            n_steps_per_unit=n_steps_per_unit, workers=workers)
    keep = np.array([e.convergence_flag and e.estimate(which) > 0 for e in ests])
    excluded = tuple(float(r) for r, k in zip(radii, keep) if not k)
    if keep.sum() < 2:
        raise InvalidArgumentError(
            f"fewer than two usable radii after excluding non-converged points {excluded}")
    vals = np.array([e.estimate(which) for e in ests])[keep]
    ses = np.array([e.value.stderr for e in ests])[keep]
    slope, slope_se, icpt = fit_decay(radii[keep], vals, ses)
    return DecayFit(direction=direction, rho=rho, radii=radii[keep], log_values=np.log(vals),
                    slope=slope, slope_stderr=slope_se, intercept=icpt, excluded=excluded,
                    estimates=tuple(ests))


def nu_srho_estimate(G: MetaAbelianGroup, x0: GroupElement, s: float, rho,
                     route: str = "direct", **kwargs) -> PoissonEstimate:
    """Estimate of ``nu(delta^rho_{exp(-s)} x0)`` by one of two routes.

    ``direct`` evaluates the dilated point with sigma started at 0.
    ``shifted`` evaluates ``exp(rho_0(s rho)) * nu^{s rho}(x0)``, sigma started
    at ``s rho``.  Both estimate the same quantity.
    """
    rho = np.asarray(rho, dtype=float)
    _check_unit(G, rho, x0)
    if s > 0:
        raise InvalidArgumentError("s must be <= 0")
    if route == "direct":
        return estimate_nu(G, dilate(G, rho, float(np.exp(-s)), x0), **kwargs)
    if route != "shifted":
        raise InvalidArgumentError(f"unknown route {route!r}")
    est = estimate_nu(G, x0, start=s * rho, **kwargs)
    f = float(np.exp(rho_zero(G.roots, s * rho)))
    v = est.value
    scaled = McEstimate(mean=f * v.mean, stderr=f * v.stderr, n=v.n, seed=v.seed,
                        variant=v.variant, mom=f * v.mom, extra=dict(v.extra))
    return PoissonEstimate(point=x0, value=scaled, horizon=est.horizon, n_sigma=est.n_sigma,
                           n_eta=est.n_eta, convergence_flag=est.convergence_flag,
                           half_horizon_value=f * est.half_horizon_value, start=est.start)


def nu_srho(G: MetaAbelianGroup, x0: GroupElement, s: float, rho, **kwargs) -> float:
    """``nu(delta^rho_{exp(-s)} x0)`` for ``x0`` on the unit rho-sphere and ``s <= 0``."""
    return nu_srho_estimate(G, x0, s, rho, route="direct", **kwargs).value.mean
