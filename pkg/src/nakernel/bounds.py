"""Kernel upper bounds, decay exponents and constant fitting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import FitFailureError, InvalidArgumentError
from .evolker import estimate_P_sigma
from .expfun import ExpFunctionalSet, functional_set
from .liegroup import (MetaAbelianGroup, RootSystem, compute_k_o, gamma_bar, gamma_min, phi_k,
                       rho_zero)
from .randpath import sample_bm_drift
from .rng import derive_rng, derive_seed, run_tasks

D_GRID = tuple(2.0 ** p for p in range(-20, 5))
C_MAX = 2.0 ** 40
REGIONS = ("both", "v_large", "m_large")


@dataclass(frozen=True)
class BoundConstants:
    C: float
    D: float
    provenance: str = "fitted"

    def __post_init__(self):
        if not (self.C > 0 and self.D > 0):
            raise InvalidArgumentError("bound constants must be positive")
        if self.provenance not in ("fitted", "asserted"):
            raise InvalidArgumentError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class ExponentReport:
    theorem: str
    region: str
    exponent: float
    inputs: dict = field(default_factory=dict)
    note: str = ""


@dataclass(frozen=True, eq=False)
class BoundSample:
    """One simulated kernel value with the data the bounds need."""

    kernel_value: float
    m: np.ndarray
    v: np.ndarray
    funcs: ExpFunctionalSet
    stderr: float = 0.0


def _norms(m, v):
    return float(np.linalg.norm(np.atleast_1d(m))), float(np.linalg.norm(np.atleast_1d(v)))


def _ubpsigma_parts(k, m, v, funcs):
    """``(log prefactor, exponent multiplier of D)`` with C = D = 1 factored out."""
    nm, nv = _norms(m, v)
    A1, A3 = funcs.V_sum, funcs.N_sum
    pref = nm ** (1.0 / (2 * k)) + 1.0 + np.sqrt(A1)
    rate = nv ** 2 / A1 + nm ** (1.0 / k) * phi_k(m, 2 * k) / A3
    return np.log(pref) - 0.5 * funcs.log_N_prod, rate


def ubpsigma_rhs(G: MetaAbelianGroup, m, v, funcs: ExpFunctionalSet,
                 consts: BoundConstants) -> float:
    """Right side of the N-kernel bound divided by ``A_{N,Pi}^(1/2)``:

    ``C (|m|^(1/2k) + 1 + A_{V,Sigma}^(1/2)) exp(-D |v|^2 / A_{V,Sigma}
    - D |m|^(1/k) phi_{2k}(m) / A_{N,Sigma}) / A_{N,Pi}^(1/2)``
    with ``k = k_o``.
    """
    k = compute_k_o(G)
    logp, rate = _ubpsigma_parts(k, m, v, funcs)
    return float(consts.C * np.exp(logp - consts.D * rate))


def _preest_terms(k, m, v, funcs):
    nm, nv = _norms(m, v)
    A1, A2 = funcs.V_sum, funcs.M_sum
    first_pref = nm ** (1.0 / (2 * k)) + 1.0
    first_rate = nv ** 2 / A1 + nm ** 2 / ((nm ** (1.0 / (2 * k)) + nv + 2.0) ** (2 * k) * A2)
    second_pref = np.sqrt(A1)
    second_rate = (nm ** (1.0 / k) + nv ** 2) / A1
    return ((first_pref, first_rate), (second_pref, second_rate)), -0.5 * funcs.log_N_prod


def preest_rhs(G: MetaAbelianGroup, m, v, funcs: ExpFunctionalSet,
               consts: BoundConstants) -> float:
    """Two-term bound, divided by ``(A_{M,Pi} A_{V,Pi})^(1/2)``."""
    k = compute_k_o(G)
    terms, log_norm = _preest_terms(k, m, v, funcs)
    total = sum(p * np.exp(-consts.D * r) for p, r in terms)
    return float(consts.C * total * np.exp(log_norm))


def _rhs_unit_c(kind, k, sample: BoundSample, D: float) -> float:
    """RHS with C = 1, in logs."""
    if kind == "ubpsigma":
        logp, rate = _ubpsigma_parts(k, sample.m, sample.v, sample.funcs)
        return logp - D * rate
    terms, log_norm = _preest_terms(k, sample.m, sample.v, sample.funcs)
    return float(logsumexp([np.log(p) - D * r for p, r in terms]) + log_norm)


def bound_rhs(kind: str, G: MetaAbelianGroup, m, v, funcs, consts: BoundConstants) -> float:
    if kind == "ubpsigma":
        return ubpsigma_rhs(G, m, v, funcs, consts)
    if kind == "preest":
        return preest_rhs(G, m, v, funcs, consts)
    raise InvalidArgumentError(f"unknown bound {kind!r}")


def fit_constants(samples, bound: str, G: MetaAbelianGroup, strategy: str = "min_d",
                  c_max: float = C_MAX) -> BoundConstants:
    """Feasible ``(C, D)`` with ``RHS >= kernel_value`` on every sample.

    D is scanned over the fixed grid ``2^-20 .. 2^4``.  For each D the least
    feasible C is the largest ratio ``kernel / RHS(C=1)``; a D is feasible
    when that C lies below ``c_max``.  ``strategy='min_d'`` takes the
    smallest feasible D, ``'max_d'`` the largest (tightest decay).  The result depends
    only on the multiset of samples.
    """
    samples = list(samples)
    if not samples:
        raise InvalidArgumentError("need at least one sample")
    if any(not s.kernel_value > 0 for s in samples):
        raise InvalidArgumentError("all kernel values must be positive")
    if bound not in ("ubpsigma", "preest"):
        raise InvalidArgumentError(f"unknown bound {bound!r}")
    if strategy not in ("min_d", "max_d"):
        raise InvalidArgumentError(f"unknown strategy {strategy!r}")
    k = compute_k_o(G)
    log_kernel = np.array([np.log(s.kernel_value) for s in samples])
    grid = D_GRID if strategy == "min_d" else D_GRID[::-1]
    for D in grid:
        log_rhs = np.array([_rhs_unit_c(bound, k, s, D) for s in samples])
        log_C = float(np.max(log_kernel - log_rhs))
        if log_C <= np.log(c_max):
            return BoundConstants(C=float(np.exp(log_C)), D=D, provenance="fitted")
    raise FitFailureError(
        f"no (C, D) on the search grid makes the {bound} bound dominate all samples")


def _bound_sample_task(task):
    G, t, n_steps, n_eta, box, seed, i = task
    rng = derive_rng(seed, i, 0)
    sigma = sample_bm_drift(G.roots.k, 0.0, -2.0 * G.roots.alpha, t, n_steps,
                            derive_seed(seed, i, 1))
    m = rng.uniform(-box, box, G.m)
    v = rng.uniform(-box, box, G.n)
    est = estimate_P_sigma(G, sigma, G.element(m, v), t, n_eta, derive_seed(seed, i, 2))
    return BoundSample(kernel_value=est.mean, m=m, v=v,
                       funcs=functional_set(sigma, G.roots, 0.0, t), stderr=est.stderr)


def simulate_bound_samples(G: MetaAbelianGroup, n_samples: int, seed: int, t: float = 1.0,
                           n_steps: int = 100, n_eta: int = 64, box: float = 4.0,
                           workers: int | None = 1) -> list:
    """Kernel estimates at uniform random points of ``[-box, box]^dim``.

    Sample ``i`` draws a fresh vertical path (drift ``-2 alpha``) and its own
    eta bridges, all from streams derived from ``(seed, i)``.
    """
    if int(n_samples) < 1:
        raise InvalidArgumentError("n_samples must be positive")
    tasks = [(G, t, n_steps, n_eta, box, seed, i) for i in range(int(n_samples))]
    return [s for s in run_tasks(_bound_sample_task, tasks, workers) if s.kernel_value > 0]


def count_violations(samples, bound: str, G: MetaAbelianGroup, consts: BoundConstants,
                     n_stderr: float = 3.0) -> int:
    """Samples whose ``kernel - n_stderr * stderr`` exceeds the bound."""
    bad = 0
    for s in samples:
        rhs = bound_rhs(bound, G, s.m, s.v, s.funcs, consts)
        if s.kernel_value - n_stderr * s.stderr > rhs:
            bad += 1
    return bad


def _check_chamber(roots: RootSystem, a, name):
    msg = roots.chamber_violation(a)
    if msg is not None:
        raise InvalidArgumentError(f"{name} is not in the positive chamber: {msg}")


def exponent_thCM(roots: RootSystem, rho):
    """``(gamma(alpha), rho_0(rho))`` with ``gamma(alpha) = 2 min lambda(alpha)/|lambda|^2``.

    The decay exponent is ``c * rho_0(rho) * gamma(alpha)`` for a constant c
    that is not computed here.
    """
    _check_chamber(roots, rho, "rho")
    _check_chamber(roots, roots.alpha, "alpha")
    return 2.0 * gamma_bar(roots, "lambda", roots.alpha), rho_zero(roots, rho)


def exponent_thpota(roots: RootSystem, q: float) -> float:
    """``(1/q) * 2 min lambda(alpha)^2 / |lambda|^2`` for ``q > 1``."""
    if not q > 1:
        raise InvalidArgumentError("q must exceed 1")
    forms = roots.all_roots
    vals = forms @ roots.alpha
    return float(2.0 * np.min(vals ** 2 / np.sum(forms ** 2, axis=1)) / q)


def exponent_newupper(roots: RootSystem, rho, region: str) -> float:
    """Decay exponent of the meta-abelian Poisson kernel bound in ``region``.

    ``both``: ``(g_Theta(rho) gb_Theta(alpha) + g_Lambda(rho) gb_Lambda(alpha)) / 2``;
    ``v_large``: ``g_Theta(rho) gb_Theta(alpha)``;
    ``m_large``: ``g_Lambda(rho) gb_Lambda(alpha)``.
    """
    if region not in REGIONS:
        raise InvalidArgumentError(f"unknown region {region!r}; expected one of {REGIONS}")
    _check_chamber(roots, rho, "rho")
    _check_chamber(roots, roots.alpha, "alpha")
    a = roots.alpha
    th = gamma_min(roots, "theta", rho) * gamma_bar(roots, "theta", a)
    la = gamma_min(roots, "lambda", rho) * gamma_bar(roots, "lambda", a)
    if region == "both":
        return 0.5 * th + 0.5 * la
    return th if region == "v_large" else la


def region_predicates(m, v, eps: float, k_o: int) -> dict:
    """Which exponent regions a point falls in, under both conventions:
    norm-based (``|m| >= eps``) and phi-based (``phi_{2k_o}(m) >= eps``)."""
    nm, nv = _norms(m, v)
    ph = phi_k(m, 2 * k_o)
    return {
        "norm": {"both": nm >= eps and nv >= eps, "v_large": nv >= eps, "m_large": nm >= eps},
        "phi": {"both": ph >= eps and nv >= eps, "v_large": nv >= eps, "m_large": ph >= eps},
    }


def exponent_report(roots: RootSystem, theorem: str, region: str = "n/a", rho=None,
                    q: float | None = None) -> ExponentReport:
    inputs = {"alpha": roots.alpha.tolist()}
    if theorem == "thCM":
        g, r0 = exponent_thCM(roots, rho)
        inputs.update(rho=list(map(float, rho)), gamma_alpha=g, rho0_rho=r0)
        return ExponentReport("thCM", "n/a", g * r0, inputs, note="up to an unspecified factor c")
    if theorem == "Thpota":
        inputs.update(q=q)
        return ExponentReport("Thpota", "n/a", exponent_thpota(roots, q), inputs)
    if theorem == "newupper":
        inputs.update(rho=list(map(float, rho)))
        return ExponentReport("newupper", region, exponent_newupper(roots, rho, region), inputs)
    raise InvalidArgumentError(f"unknown theorem {theorem!r}")
