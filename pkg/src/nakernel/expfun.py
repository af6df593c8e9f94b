"""Exponential functionals of paths and their inverse-gamma laws."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, gammaln, logsumexp

from .errors import DivergentFunctionalError, InvalidArgumentError
from .liegroup import RootSystem
from .randpath import DiscretePath
from .rng import derive_rng


def trapezoid_log_weights(times: np.ndarray) -> np.ndarray:
    """Log of trapezoid weights on the nodes ``times``."""
    dt = np.diff(times)
    w = np.zeros(times.size)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    with np.errstate(divide="ignore"):
        return np.log(w)


def log_integrate_exponential(path: DiscretePath, form, d: float, s: float, t: float) -> float:
    """Log of the trapezoid approximation of ``int_s^t exp(d * form(path(u))) du``.

    Accumulated with ``logsumexp`` so exponents of several hundred are safe.
    """
    if not d > 0:
        raise InvalidArgumentError("d must be positive")
    times, vals = path.restrict(s, t)
    expo = d * (vals @ np.asarray(form, dtype=float))
    return float(logsumexp(expo + trapezoid_log_weights(times)))


def integrate_exponential(path: DiscretePath, form, d: float, s: float, t: float) -> float:
    """Trapezoid rule for ``int_s^t exp(d * form(path(u))) du`` on the path grid."""
    return float(np.exp(log_integrate_exponential(path, form, d, s, t)))


@dataclass(frozen=True, eq=False)
class ExpFunctionalSet:
    """Per-root integrals ``A_{M,i}(s,t)``, ``A_{V,j}(s,t)`` and aggregates.

    Values are stored as logs (``log_M``, ``log_V``); products are sums of
    logs.  Integrands are ``exp(2 root(sigma(u)))``.
    """

    log_M: np.ndarray
    log_V: np.ndarray

    @property
    def M(self) -> np.ndarray:
        return np.exp(self.log_M)

    @property
    def V(self) -> np.ndarray:
        return np.exp(self.log_V)

    @property
    def M_sum(self) -> float:
        return float(np.exp(logsumexp(self.log_M)))

    @property
    def V_sum(self) -> float:
        return float(np.exp(logsumexp(self.log_V)))

    @property
    def N_sum(self) -> float:
        return self.M_sum + self.V_sum

    @property
    def log_M_prod(self) -> float:
        return float(np.sum(self.log_M))

    @property
    def log_V_prod(self) -> float:
        return float(np.sum(self.log_V))

    @property
    def log_N_prod(self) -> float:
        return self.log_M_prod + self.log_V_prod

    @property
    def M_prod(self) -> float:
        return float(np.exp(self.log_M_prod))

    @property
    def V_prod(self) -> float:
        return float(np.exp(self.log_V_prod))

    @property
    def N_prod(self) -> float:
        return float(np.exp(self.log_N_prod))


def functional_set(path: DiscretePath, roots: RootSystem, s: float, t: float) -> ExpFunctionalSet:
    times, vals = path.restrict(s, t)
    lw = trapezoid_log_weights(times)
    log_M = logsumexp(2.0 * (vals @ roots.xi.T) + lw[:, None], axis=0)
    log_V = logsumexp(2.0 * (vals @ roots.theta.T) + lw[:, None], axis=0)
    return ExpFunctionalSet(log_M=np.atleast_1d(log_M), log_V=np.atleast_1d(log_V))


@dataclass(frozen=True)
class InverseGammaLaw:
    """Density ``gamma**mu / Gamma(mu) * x**(-mu-1) * exp(-gamma/x)`` on x > 0."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise InvalidArgumentError("inverse gamma shape and scale must be positive")

    @property
    def mode(self) -> float:
        return self.scale / (self.shape + 1.0)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        mu, g = self.shape, self.scale
        return mu * np.log(g) - gammaln(mu) - (mu + 1.0) * np.log(x) - g / x

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return gammaincc(self.shape, self.scale / np.maximum(x, 1e-300))


def inverse_gamma_density(law: InverseGammaLaw, x) -> float:
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise InvalidArgumentError("inverse gamma density is defined for x > 0")
    out = np.exp(law.log_density(x))
    return float(out) if out.ndim == 0 else out


def _form_terms(form, alpha):
    form = np.atleast_1d(np.asarray(form, dtype=float))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if form.shape != alpha.shape:
        raise InvalidArgumentError("form and alpha must have the same dimension")
    l_alpha = float(form @ alpha)
    l_sq = float(form @ form)
    if l_alpha <= 0:
        raise DivergentFunctionalError(
            f"form(alpha) = {l_alpha:g} <= 0: the perpetuity diverges almost surely")
    return l_alpha, l_sq


def perpetuity_law(d: float, form, alpha) -> InverseGammaLaw:
    """Law of ``int_0^inf exp(d * form(b_u - 2 alpha u)) du`` for b started at 0.

    Shape ``2 form(alpha) / (d |form|^2)``, scale ``1 / (d^2 |form|^2)``.
    """
    if not d > 0:
        raise InvalidArgumentError("d must be positive")
    l_alpha, l_sq = _form_terms(form, alpha)
    return InverseGammaLaw(shape=2.0 * l_alpha / (d * l_sq), scale=1.0 / (d * d * l_sq))


def perpetuity_samples(d: float, form, alpha, n_samples: int, rng: np.random.Generator,
                       n_steps_per_unit: int = 100, tol: float = 1e-4,
                       safety: float = 10.0, max_horizon: float = 1e4) -> np.ndarray:
    """Vectorized truncated perpetuities sharing one generator.

    Only the scalar process ``X_u = form(sigma_u)`` matters: it is a variance
    ``2 |form|^2`` Brownian motion with drift ``-2 form(alpha)``.  Paths are
    extended one time unit at a time; a sample stops once the drift-only tail
    estimate ``safety * exp(d X_T) / (d * 2 form(alpha))`` falls below
    ``tol`` times the accumulated integral.
    """
    if not d > 0:
        raise InvalidArgumentError("d must be positive")
    if n_steps_per_unit < 1 or not tol > 0:
        raise InvalidArgumentError("n_steps_per_unit must be >= 1 and tol > 0")
    l_alpha, l_sq = _form_terms(form, alpha)
    dt = 1.0 / n_steps_per_unit
    sd = np.sqrt(2.0 * l_sq * dt)
    mu = -2.0 * l_alpha * dt
    tail_rate = d * 2.0 * l_alpha

    total = np.zeros(n_samples)
    x = np.zeros(n_samples)
    active = np.arange(n_samples)
    horizon = 0.0
    while active.size and horizon < max_horizon:
        steps = mu + sd * rng.standard_normal((active.size, n_steps_per_unit))
        path = np.concatenate([x[active, None], x[active, None] + np.cumsum(steps, axis=1)],
                              axis=1)
        e = np.exp(d * path)
        total[active] += dt * (e[:, 0] / 2 + e[:, 1:-1].sum(axis=1) + e[:, -1] / 2)
        x[active] = path[:, -1]
        horizon += 1.0
        tail = safety * np.exp(d * x[active]) / tail_rate
        active = active[tail >= tol * total[active]]
    return total


def sample_perpetuity(d: float, form, alpha, n_steps_per_unit: int = 100, tol: float = 1e-4,
                      seed: int = 0) -> float:
    """One truncated sample of ``int_0^inf exp(d * form(sigma_u)) du``,
    ``sigma_u = b_u - 2 alpha u``."""
    return float(perpetuity_samples(d, form, alpha, 1, derive_rng(seed),
                                    n_steps_per_unit=n_steps_per_unit, tol=tol)[0])


def sample_perpetuities(d: float, form, alpha, n_samples: int, seed: int,
                        n_steps_per_unit: int = 100, tol: float = 1e-4,
                        block: int = 4096, workers: int | None = 1) -> np.ndarray:
    """``n_samples`` perpetuities; block ``i`` uses stream ``(seed, i)``."""
    from .rng import run_tasks

    if int(n_samples) < 1:
        raise InvalidArgumentError("n_samples must be positive")
    tasks = [(d, tuple(np.atleast_1d(form)), tuple(np.atleast_1d(alpha)),
              min(block, n_samples - s), seed, i, n_steps_per_unit, tol)
             for i, s in enumerate(range(0, n_samples, block))]
    return np.concatenate(run_tasks(_perpetuity_block, tasks, workers))


def _perpetuity_block(task):
    d, form, alpha, n, seed, i, nspu, tol = task
    return perpetuity_samples(d, form, alpha, n, derive_rng(seed, i),
                              n_steps_per_unit=nspu, tol=tol)
