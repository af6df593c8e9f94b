"""Evolution kernels of the time-dependent diffusion on N = M x| V.

Given a vertical path sigma, the V coordinates are independent variance-2
Brownian motions run on the clocks ``c_j(u) = int_0^u exp(2 theta_j(sigma))``.
Conditionally on a V path eta, the M coordinate is Gaussian with covariance

    A_M(s, t) = 2 int_s^t [Ad(eta(u)) S(u)] [Ad(eta(u)) S(u)]^T du,

``S(u) = diag(exp(xi_i(sigma(u))))``.  The factor 2 (variance-2 convention) is
carried inside every covariance accumulator, for the M and the V blocks alike.
The kernel at a point (m, v) is the V density at v times the average of the
conditional M density over eta paths pinned to eta(t) = v.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky

from .errors import InvalidArgumentError, SingularKernelError
from .expfun import trapezoid_log_weights
from .liegroup import GroupElement, MetaAbelianGroup, RootSystem, adjoint_on_m
from .mcstats import McEstimate
from .randpath import DiscretePath, bridge_values
from .rng import derive_rng, run_tasks

ETA_BLOCK = 64


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    """Density ``(2 pi)^(-d/2) det(A)^(-1/2) exp(-(x-B).A^{-1}(x-B)/2)``."""

    A: np.ndarray
    B: np.ndarray | None = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        if A.shape[0] != A.shape[1]:
            raise InvalidArgumentError("covariance accumulator must be square")
        scale = max(np.abs(A).max(), 1e-300)
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * scale):
            raise InvalidArgumentError("covariance accumulator must be symmetric")
        A = (A + A.T) / 2
        try:
            L = cholesky(A, lower=True)
        except LinAlgError as exc:
            raise SingularKernelError("covariance accumulator is not positive definite") from exc
        if np.any(np.diag(L) <= 0) or not np.all(np.isfinite(L)):
            raise SingularKernelError("covariance accumulator is not positive definite")
        B = np.zeros(A.shape[0]) if self.B is None else np.asarray(self.B, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "_chol", L)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def log_det_A(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self._chol))))

    def log_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        diff = np.atleast_2d(x - self.B)
        sol = cho_solve((self._chol, True), diff.T).T
        quad = np.sum(diff * sol, axis=-1)
        out = -0.5 * (self.dim * np.log(2 * np.pi) + self.log_det_A + quad)
        return out if x.ndim > 1 else out[0]


def gaussian_density(K: GaussianKernel, x):
    """Kernel value at ``x`` (shape ``(d,)`` or ``(..., d)``)."""
    out = np.exp(K.log_density(x))
    return float(out) if np.ndim(out) == 0 else out


def _batch_log_density(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Centered Gaussian log densities for a stack of covariances.

    ``A`` has shape ``(e, d, d)``, ``x`` shape ``(p, d)``; returns ``(e, p)``.
    """
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularKernelError("M covariance is not positive definite") from exc
    diag = np.diagonal(L, axis1=-2, axis2=-1)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise SingularKernelError("M covariance is not positive definite")
    d = A.shape[-1]
    rhs = np.broadcast_to(x.T, (A.shape[0],) + x.T.shape)
    y = np.linalg.solve(L, rhs)
    quad = np.sum(y * y, axis=1)
    logdet = 2.0 * np.sum(np.log(diag), axis=-1)
    return -0.5 * (d * np.log(2 * np.pi) + logdet[:, None] + quad)


@dataclass(frozen=True, eq=False)
class ClockSet:
    """Changed times ``clocks[j, i] = int_s^{times[i]} exp(2 theta_j(sigma))``."""

    times: np.ndarray
    clocks: np.ndarray

    @property
    def totals(self) -> np.ndarray:
        return self.clocks[:, -1]


def _window(sigma: DiscretePath, s: float, t: float):
    if s < 0 or not t > s:
        raise InvalidArgumentError(f"need 0 <= s < t, got s={s}, t={t}")
    return sigma.restrict(s, t)


def clock_set(sigma: DiscretePath, roots: RootSystem, t: float, s: float = 0.0) -> ClockSet:
    times, vals = _window(sigma, s, t)
    integrand = np.exp(2.0 * vals @ roots.theta.T).T
    dt = np.diff(times)
    inc = (integrand[:, :-1] + integrand[:, 1:]) * dt / 2
    clocks = np.concatenate([np.zeros((roots.n, 1)), np.cumsum(inc, axis=1)], axis=1)
    return ClockSet(times=times, clocks=clocks)


def kernel_V(sigma: DiscretePath, roots: RootSystem, t: float, s: float = 0.0):
    """Diagonal V kernel over ``[s, t]`` and its clocks.

    ``A = 2 diag(A_{V,j}(s, t))``, ``B = 0``.
    """
    clocks = clock_set(sigma, roots, t, s)
    if np.any(clocks.totals <= 0) or not np.all(np.isfinite(clocks.totals)):
        raise SingularKernelError("degenerate V clock")
    return GaussianKernel(A=np.diag(2.0 * clocks.totals)), clocks


def m_covariances(G: MetaAbelianGroup, times: np.ndarray, sigma_vals: np.ndarray,
                  eta_vals: np.ndarray) -> np.ndarray:
    """Trapezoid ``A_M`` for a stack of eta paths on shared nodes.

    ``sigma_vals``: ``(L, k)``; ``eta_vals``: ``(e, L, n)``; returns ``(e, m, m)``.
    """
    w = np.exp(trapezoid_log_weights(times))
    S = np.exp(sigma_vals @ G.roots.xi.T)                    # (L, m)
    P = adjoint_on_m(G, eta_vals) * S[None, :, None, :]      # (e, L, m, m)
    return 2.0 * np.einsum("l,elij,elkj->eik", w, P, P)


def kernel_M_given_eta(G: MetaAbelianGroup, sigma: DiscretePath, eta: DiscretePath,
                       t: float, s: float = 0.0) -> GaussianKernel:
    """Gaussian kernel on M of the evolution conditioned on the V path ``eta``."""
    if eta.grid.shape != sigma.grid.shape or not np.allclose(eta.grid, sigma.grid):
        raise InvalidArgumentError("sigma and eta must share their time grid")
    times, svals = _window(sigma, s, t)
    _, evals = eta.restrict(s, t)
    A = m_covariances(G, times, svals, evals[None])[0]
    return GaussianKernel(A=A)


def lambda_sup(eta: DiscretePath) -> float:
    """``sup_u |eta(u)|`` over the grid nodes."""
    return float(np.max(np.linalg.norm(eta.values, axis=1)))


def sample_eta_bridges(rng: np.random.Generator, clocks: ClockSet, v, n_paths: int) -> np.ndarray:
    """V paths from 0 pinned to ``v`` at the window end, shape ``(n_paths, L, n)``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    out = np.empty((n_paths, clocks.times.size, v.size))
    for j in range(v.size):
        out[:, :, j] = bridge_values(rng, n_paths, 0.0, v[j], clocks.clocks[j])
    return out


def _eta_block(task):
    G, times, svals, clocks, v, m_points, n, seed, block = task
    rng = derive_rng(seed, block)
    eta = sample_eta_bridges(rng, clocks, v, n)
    A = m_covariances(G, times, svals, eta)
    return np.exp(_batch_log_density(A, m_points))


def kernel_samples(G: MetaAbelianGroup, sigma: DiscretePath, v, m_points, t: float,
                   n_eta: int, seed: int, s: float = 0.0, workers: int | None = 1):
    """V density at ``v`` and conditional M densities at ``m_points``.

    Returns ``(p_v, K)`` with ``K`` of shape ``(n_eta, len(m_points))``; row i
    is the M kernel from 0 given the i-th pinned eta path.  Block ``b`` of
    ``ETA_BLOCK`` paths draws from stream ``(seed, b)``.
    """
    if int(n_eta) < 2:
        raise InvalidArgumentError("n_eta must be at least 2")
    kV, clocks = kernel_V(sigma, G.roots, t, s)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    m_points = np.atleast_2d(np.asarray(m_points, dtype=float))
    p_v = gaussian_density(kV, v)
    times, svals = _window(sigma, s, t)
    tasks = [(G, times, svals, clocks, v, m_points, min(ETA_BLOCK, n_eta - b0), seed, i)
             for i, b0 in enumerate(range(0, n_eta, ETA_BLOCK))]
    K = np.concatenate(run_tasks(_eta_block, tasks, workers), axis=0)
    return p_v, K


def estimate_P_sigma(G: MetaAbelianGroup, sigma: DiscretePath, target: GroupElement, t: float,
                     n_eta: int, seed: int, s: float = 0.0,
                     workers: int | None = 1) -> McEstimate:
    """Skew-product estimate of the kernel from the identity to ``target``
    over the window ``[s, t]`` of ``sigma``.

    The report carries the plain mean (default) and a 16-block
    median-of-means of the same eta draws.
    """
    p_v, K = kernel_samples(G, sigma, target.v_part, target.m_part[None, :], t, n_eta, seed,
                            s=s, workers=workers)
    return McEstimate.from_samples(K[:, 0], seed=seed, variant="skew-product", scale=p_v,
                                   p_v=p_v)


def estimate_on_grid(G: MetaAbelianGroup, sigma: DiscretePath, v, m_points, t: float,
                     n_eta: int, seed: int, s: float = 0.0, workers: int | None = 1):
    """Kernel estimates at ``(m, v)`` for every ``m`` in ``m_points`` and one ``v``.

    All points share the same eta draws.  Returns ``(mean, stderr)`` arrays.
    """
    p_v, K = kernel_samples(G, sigma, v, m_points, t, n_eta, seed, s=s, workers=workers)
    mean = p_v * K.mean(axis=0)
    stderr = p_v * K.std(axis=0, ddof=1) / np.sqrt(K.shape[0])
    return mean, stderr


def diag_M_kernel(sigma: DiscretePath, roots: RootSystem, t: float, s: float = 0.0) -> GaussianKernel:
    """M kernel with Ad = identity: ``A = 2 diag(A_{M,i}(s, t))``."""
    times, vals = _window(sigma, s, t)
    w = np.exp(trapezoid_log_weights(times))
    return GaussianKernel(A=np.diag(2.0 * (w @ np.exp(2.0 * vals @ roots.xi.T))))
