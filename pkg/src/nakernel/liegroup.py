"""Root systems and meta-abelian groups N = M x| V in exponential coordinates.

Group elements are pairs ``(m, v)`` with ``m`` in R^m and ``v`` in R^n.  The
product is ``(m1, v1)(m2, v2) = (m1 + Ad(v1) m2, v1 + v2)`` where
``Ad(v) = exp(sum_j v_j ad_j)`` restricted to the M block.  The ``ad_j`` are
strictly lower triangular and mutually commuting, so the exponential is a
finite series.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import DegenerateGroupError, InvalidArgumentError

_ROOT_TOL = 1e-12


def _ro(arr, ndim=None) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise InvalidArgumentError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RootSystem:
    """Linear forms on R^k: ``xi`` (M roots, shape (m, k)), ``theta`` (V roots,
    shape (n, k)), the drift ``alpha`` and a witness ``H_o`` of a nonempty
    positive chamber."""

    xi: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    H_o: np.ndarray

    def __post_init__(self):
        xi, theta = _ro(self.xi, 2), _ro(self.theta, 2)
        alpha, H_o = _ro(self.alpha, 1), _ro(self.H_o, 1)
        k = H_o.size
        if xi.shape[1] != k or theta.shape[1] != k or alpha.size != k:
            raise InvalidArgumentError("all forms, alpha and H_o must live on the same R^k")
        if xi.shape[0] == 0 or theta.shape[0] == 0:
            raise InvalidArgumentError("need at least one M root and one V root")
        for name, arr in (("xi", xi), ("theta", theta), ("alpha", alpha), ("H_o", H_o)):
            object.__setattr__(self, name, arr)
        vals = np.concatenate([xi @ H_o, theta @ H_o])
        if np.any(vals <= 0):
            bad = int(np.argmin(vals))
            raise InvalidArgumentError(
                f"H_o={H_o.tolist()} is not in the positive chamber: "
                f"root {self.root_name(bad)} takes value {vals[bad]:g}")

    @property
    def k(self) -> int:
        return self.H_o.size

    @property
    def m(self) -> int:
        return self.xi.shape[0]

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def all_roots(self) -> np.ndarray:
        return np.vstack([self.xi, self.theta])

    def root_name(self, i: int) -> str:
        return f"xi_{i + 1}" if i < self.m else f"theta_{i - self.m + 1}"

    def subset(self, name: str) -> np.ndarray:
        name = name.lower()
        if name in ("theta", "v"):
            return self.theta
        if name in ("xi", "m"):
            return self.xi
        if name in ("lambda", "all", "n"):
            return self.all_roots
        raise InvalidArgumentError(f"unknown root subset {name!r}")

    def chamber_violation(self, a) -> str | None:
        """Name of the first root with ``root(a) <= 0``, or ``None``."""
        vals = self.all_roots @ np.asarray(a, dtype=float)
        for i, val in enumerate(vals):
            if val <= 0:
                return f"{self.root_name(i)}(a) = {val:g}"
        return None


@dataclass(frozen=True, eq=False)
class GroupElement:
    m_part: np.ndarray
    v_part: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m_part", _ro(np.atleast_1d(self.m_part), 1))
        object.__setattr__(self, "v_part", _ro(np.atleast_1d(self.v_part), 1))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.m_part, self.v_part])


def _nilpotency(ad: np.ndarray) -> int:
    """Smallest p >= 0 such that every product of p + 1 ad matrices vanishes.

    The ad matrices commute, so this equals the smallest p with
    ``(sum_j v_j ad_j)^(p+1) = 0`` for all v.  Words are tracked through an
    orthonormal basis of their span to avoid exponential blow-up.
    """
    n, m, _ = ad.shape
    scale = max(1.0, float(np.abs(ad).max(initial=0.0)))
    tol = 1e-12 * scale
    span = [np.eye(m)]
    for p in range(m + 1):
        words = np.array([a @ w for a in ad for w in span]).reshape(-1, m * m)
        if words.size == 0 or np.abs(words).max() <= tol:
            return p
        u, s, vt = np.linalg.svd(words, full_matrices=False)
        rank = int(np.sum(s > tol))
        span = list(vt[:rank].reshape(rank, m, m))
    raise InvalidArgumentError("ad matrices are not nilpotent")


@dataclass(frozen=True, eq=False)
class MetaAbelianGroup:
    """N = M x| V with ``ad[j]`` the matrix of ad_{X_j} on the M block.

    ``ad`` has shape ``(n, m, m)``.  Each matrix must be strictly lower
    triangular, the matrices must commute, and a nonzero entry mapping
    ``Y_a`` to ``Y_b`` under ``X_j`` requires ``xi_b = xi_a + theta_j``.
    """

    roots: RootSystem
    ad: np.ndarray

    def __post_init__(self):
        ad = _ro(self.ad, 3)
        m, n = self.roots.m, self.roots.n
        if ad.shape != (n, m, m):
            raise InvalidArgumentError(f"ad must have shape ({n}, {m}, {m}), got {ad.shape}")
        if np.any(np.triu(ad) != 0):
            raise InvalidArgumentError("ad matrices must be strictly lower triangular")
        for i in range(n):
            for j in range(i + 1, n):
                if not np.allclose(ad[i] @ ad[j], ad[j] @ ad[i], atol=1e-12):
                    raise InvalidArgumentError(f"ad_{i + 1} and ad_{j + 1} do not commute")
        xi, theta = self.roots.xi, self.roots.theta
        for j, b, a in zip(*np.nonzero(ad)):
            if not np.allclose(xi[b], xi[a] + theta[j], atol=_ROOT_TOL):
                raise InvalidArgumentError(
                    f"ad_{j + 1} maps Y_{a + 1} to Y_{b + 1} but xi_{b + 1} != "
                    f"xi_{a + 1} + theta_{j + 1}")
        object.__setattr__(self, "ad", ad)
        object.__setattr__(self, "_degree", _nilpotency(ad))

    @property
    def m(self) -> int:
        return self.roots.m

    @property
    def n(self) -> int:
        return self.roots.n

    @property
    def nilpotency(self) -> int:
        """Smallest p with (ad_X)^(p+1) = 0 on M; 0 for an abelian N."""
        return self._degree

    @property
    def is_abelian(self) -> bool:
        return self._degree == 0

    def identity(self) -> GroupElement:
        return GroupElement(np.zeros(self.m), np.zeros(self.n))

    def element(self, m_part, v_part) -> GroupElement:
        g = GroupElement(m_part, v_part)
        if g.m_part.size != self.m or g.v_part.size != self.n:
            raise InvalidArgumentError("element dimensions do not match the group")
        return g

    def with_roots(self, roots: RootSystem) -> "MetaAbelianGroup":
        return MetaAbelianGroup(roots=roots, ad=self.ad)


def compute_k_o(G: MetaAbelianGroup) -> int:
    """Nilpotency degree k_o of ad_X on M (1 for Heisenberg groups)."""
    if G.is_abelian:
        raise DegenerateGroupError("N is abelian (all ad matrices vanish); k_o would be 0")
    return G.nilpotency


def adjoint_on_m(G: MetaAbelianGroup, v) -> np.ndarray:
    """``Ad(v)`` on M as a unipotent lower triangular matrix.

    ``v`` may carry leading batch dimensions; the result then has shape
    ``v.shape[:-1] + (m, m)``.
    """
    v = np.asarray(v, dtype=float)
    X = np.tensordot(v, G.ad, axes=([-1], [0]))
    out = np.broadcast_to(np.eye(G.m), X.shape).copy()
    term = out.copy()
    for j in range(1, G.nilpotency + 1):
        term = term @ X
        out += term / factorial(j)
    return out


def multiply(G: MetaAbelianGroup, g1: GroupElement, g2: GroupElement) -> GroupElement:
    return GroupElement(g1.m_part + adjoint_on_m(G, g1.v_part) @ g2.m_part,
                        g1.v_part + g2.v_part)


def inverse(G: MetaAbelianGroup, g: GroupElement) -> GroupElement:
    return GroupElement(-adjoint_on_m(G, -g.v_part) @ g.m_part, -g.v_part)


def _exponents(G: MetaAbelianGroup, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    return G.roots.all_roots @ rho


def dilate(G: MetaAbelianGroup, rho, t: float, g: GroupElement) -> GroupElement:
    """``delta_t^rho``: M coordinate i scales by ``t**xi_i(rho)``, V coordinate j
    by ``t**theta_j(rho)``."""
    if not t > 0:
        raise InvalidArgumentError("dilation factor must be positive")
    scale = np.power(float(t), _exponents(G, rho))
    return GroupElement(g.m_part * scale[:G.m], g.v_part * scale[G.m:])


def homogeneous_norm(G: MetaAbelianGroup, rho, g: GroupElement) -> float:
    """``max_j |coord_j|**(1/lambda_j(rho))``; exactly homogeneous under dilate."""
    ex = _exponents(G, rho)
    if np.any(ex <= 0):
        raise InvalidArgumentError("homogeneous norm needs lambda(rho) > 0 for every root")
    coords = np.abs(g.as_array())
    return float(np.max(coords ** (1.0 / ex)))


def rho_zero(roots: RootSystem, a) -> float:
    """Sum of all roots evaluated at ``a``."""
    return float(np.sum(roots.all_roots @ np.asarray(a, dtype=float)))


def chi(roots: RootSystem, a) -> float:
    return float(np.exp(rho_zero(roots, a)))


def gamma_min(roots: RootSystem, subset: str, a) -> float:
    """``min lambda(a)`` over the subset ('theta', 'xi' or 'lambda')."""
    forms = roots.subset(subset)
    if forms.shape[0] == 0:
        raise InvalidArgumentError("empty root subset")
    return float(np.min(forms @ np.asarray(a, dtype=float)))


def gamma_bar(roots: RootSystem, subset: str, a) -> float:
    """``min lambda(a) / |lambda|^2`` over the subset."""
    forms = roots.subset(subset)
    if forms.shape[0] == 0:
        raise InvalidArgumentError("empty root subset")
    return float(np.min((forms @ np.asarray(a, dtype=float)) / np.sum(forms ** 2, axis=1)))


def phi_k(m, k: int) -> float:
    if int(k) < 1:
        raise InvalidArgumentError("phi_k requires k >= 1")
    r = float(np.linalg.norm(np.atleast_1d(m))) ** (1.0 / k)
    return (r / (r + 1.0)) ** k


def heisenberg_instance(n: int, xi1, xi2, alpha=None, H_o=None) -> MetaAbelianGroup:
    """The (2n+1)-dimensional Heisenberg group as M x| V.

    M is spanned by ``Y_1..Y_n, Z`` (coordinates ``y_1..y_n, z``), V by
    ``X_1..X_n`` (coordinates ``x``), with ``ad_{X_j} Y_j = Z``.  The roots of
    X_j and Y_j are ``xi1`` and ``xi2`` (one form shared by all j, or one per
    j), Z has root ``xi1 + xi2``.  The product in ``(x, y, z)`` coordinates is
    ``(x1 + x2, y1 + y2, z1 + z2 + x1 . y2)``.
    """
    n = int(n)
    if n < 1:
        raise InvalidArgumentError("Heisenberg dimension parameter n must be >= 1")
    xi1 = np.atleast_2d(np.asarray(xi1, dtype=float))
    xi2 = np.atleast_2d(np.asarray(xi2, dtype=float))
    xi1 = np.broadcast_to(xi1, (n, xi1.shape[1]))
    xi2 = np.broadcast_to(xi2, (n, xi2.shape[1]))
    z_root = xi1 + xi2
    if not np.allclose(z_root, z_root[0], atol=_ROOT_TOL):
        raise InvalidArgumentError("xi1_j + xi2_j must not depend on j")
    xi = np.vstack([xi2, z_root[:1]])
    theta = np.array(xi1)
    k = xi.shape[1]
    alpha = np.zeros(k) if alpha is None else np.asarray(alpha, dtype=float)
    if H_o is None:
        H_o = _default_witness(np.vstack([xi, theta]), alpha)
    ad = np.zeros((n, n + 1, n + 1))
    for j in range(n):
        ad[j, n, j] = 1.0
    return MetaAbelianGroup(roots=RootSystem(xi=xi, theta=theta, alpha=alpha, H_o=H_o), ad=ad)


def _default_witness(forms: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    candidates = [alpha, forms.sum(axis=0), np.ones(forms.shape[1])]
    for c in candidates:
        if np.all(forms @ c > 0):
            return np.asarray(c, dtype=float)
    raise InvalidArgumentError("no positive-chamber witness found; pass H_o explicitly")


def heisenberg_element(G: MetaAbelianGroup, x, y, z) -> GroupElement:
    """Build ``(x, y, z)`` in the coordinates of :func:`heisenberg_instance`."""
    return GroupElement(np.concatenate([np.atleast_1d(y), [z]]), np.atleast_1d(x))


def heisenberg_coords(g: GroupElement):
    """Inverse of :func:`heisenberg_element`: returns ``(x, y, z)``."""
    return g.v_part.copy(), g.m_part[:-1].copy(), float(g.m_part[-1])


def group_from_triplets(roots: RootSystem, ad_triplets) -> MetaAbelianGroup:
    """Group whose ad matrices are given as, per X_j, a list of (row, col, value)."""
    ad = np.zeros((roots.n, roots.m, roots.m))
    if len(ad_triplets) != roots.n:
        raise InvalidArgumentError("need one triplet list per V root")
    for j, triplets in enumerate(ad_triplets):
        for row, col, val in triplets:
            ad[j, int(row), int(col)] = float(val)
    return MetaAbelianGroup(roots=roots, ad=ad)
