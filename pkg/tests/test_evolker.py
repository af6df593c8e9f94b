import numpy as np
import pytest
from scipy.signal import fftconvolve

from nakernel.errors import InvalidArgumentError, SingularKernelError
from nakernel.evolker import (GaussianKernel, clock_set, diag_M_kernel, estimate_on_grid,
                              estimate_P_sigma, gaussian_density, kernel_M_given_eta,
                              kernel_samples, kernel_V, lambda_sup, m_covariances,
                              sample_eta_bridges)
from nakernel.expfun import functional_set
from nakernel.liegroup import MetaAbelianGroup, heisenberg_element, heisenberg_instance
from nakernel.randpath import DiscretePath, sample_bm_drift, uniform_grid
from nakernel.rng import derive_rng


@pytest.fixture(scope="module")
def H():
    return heisenberg_instance(1, [1, 0], [0, 1], alpha=[1, 1])


@pytest.fixture(scope="module")
def H_flat(H):
    return MetaAbelianGroup(H.roots, np.zeros_like(H.ad))


def drift_path(seed, t=1.0, n=100):
    return sample_bm_drift(2, 0.0, [-2.0, -2.0], t, n, seed)


def zero_path(t=1.0, n=100):
    return DiscretePath(uniform_grid(t, n), np.zeros((n + 1, 2)))


def test_gaussian_kernel_basics():
    K = GaussianKernel(A=[[2.0]])
    assert gaussian_density(K, [0.0]) == pytest.approx((4 * np.pi) ** -0.5, rel=1e-14)
    Kb = GaussianKernel(A=[[2.0]], B=[0.7])
    assert gaussian_density(Kb, [1.9]) == gaussian_density(K, [1.9 - 0.7])
    x = np.linspace(-40, 40, 80001)
    vals = gaussian_density(K, x[:, None])
    assert np.trapezoid(vals, x) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(SingularKernelError):
        GaussianKernel(A=[[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(InvalidArgumentError):
        GaussianKernel(A=[[1.0, 0.5], [0.0, 1.0]])


def test_constant_coefficients_match_heat_kernel(H_flat):
    # sigma = 0: every coordinate is a variance-2 Brownian motion at time t
    t = 1.5
    sig = zero_path(t, 30)
    kV, _ = kernel_V(sig, H_flat.roots, t)
    np.testing.assert_allclose(kV.A, 2 * t * np.eye(1), rtol=1e-14)
    heat = lambda u: np.exp(-u * u / (4 * t)) / np.sqrt(4 * np.pi * t)
    rng = derive_rng(0)
    for _ in range(20):
        m, v = rng.normal(size=2) * 2, rng.normal(size=1) * 2
        est = estimate_P_sigma(H_flat, sig, H_flat.element(m, v), t, 4, seed=1)
        exact = heat(m[0]) * heat(m[1]) * heat(v[0])
        assert est.mean == pytest.approx(exact, rel=1e-12)
        assert est.stderr <= 1e-12 * exact


def test_kernel_V_properties(H):
    for i in range(100):
        sig = drift_path(i)
        kV, clocks = kernel_V(sig, H.roots, 1.0)
        fs = functional_set(sig, H.roots, 0.0, 1.0)
        assert np.exp(-0.5 * kV.log_det_A) == pytest.approx(
            np.prod(fs.V) ** -0.5 * 2 ** (-H.n / 2), rel=1e-12)
        assert np.linalg.norm(kV.A, 2) <= 2 * fs.V_sum * (1 + 1e-12)
        assert np.all(np.diff(clocks.clocks, axis=1) >= 0)
        assert np.all(clocks.clocks[:, 0] == 0)


def test_m_kernel_trivial(H):
    sig = zero_path()
    eta = DiscretePath(sig.grid, np.zeros((sig.grid.size, 1)))
    K = kernel_M_given_eta(H, sig, eta, 1.0)
    np.testing.assert_allclose(K.A, 2 * np.eye(2), atol=1e-14)
    other = DiscretePath(uniform_grid(1.0, 10), np.zeros((11, 1)))
    with pytest.raises(InvalidArgumentError):
        kernel_M_given_eta(H, sig, other, 1.0)


def _random_sigma_eta(H, i):
    rng = derive_rng(11, i)
    sig = drift_path(10_000 + i)
    clocks = clock_set(sig, H.roots, 1.0)
    v = rng.normal(size=H.n) * 3
    eta = sample_eta_bridges(rng, clocks, v, 1)[0]
    return sig, eta


def test_determinant_inequality(H):
    for i in range(200):
        sig, eta = _random_sigma_eta(H, i)
        A = m_covariances(H, sig.grid, sig.values, eta[None])[0]
        fs = functional_set(sig, H.roots, 0.0, 1.0)
        logdet = np.linalg.slogdet(A)[1]
        bound = H.m * np.log(2) + fs.log_M_prod
        assert logdet >= bound - 1e-10 * abs(bound) - 1e-10


def test_m_norm_bound_with_fitted_constant(H):
    def ratio(i):
        sig, eta = _random_sigma_eta(H, i)
        A = m_covariances(H, sig.grid, sig.values, eta[None])[0]
        fs = functional_set(sig, H.roots, 0.0, 1.0)
        lam = lambda_sup(DiscretePath(sig.grid, eta))
        return np.linalg.norm(A, 2) / ((1 + lam ** 2) * fs.M_sum)
    C = max(ratio(i) for i in range(200))
    held = np.array([ratio(i) for i in range(200, 400)])
    assert np.mean(held > C) <= 0.02


def test_abelian_degeneration(H, H_flat):
    sig = drift_path(5)
    rng = derive_rng(6)
    kV, _ = kernel_V(sig, H.roots, 1.0)
    kM = diag_M_kernel(sig, H.roots, 1.0)
    for _ in range(10):
        m, v = rng.normal(size=2), rng.normal(size=1)
        est = estimate_P_sigma(H_flat, sig, H_flat.element(m, v), 1.0, 64, seed=2)
        exact = gaussian_density(kV, v) * gaussian_density(kM, m)
        assert est.mean == pytest.approx(exact, rel=1e-12)
        assert est.stderr <= 1e-12 * exact


def test_chapman_kolmogorov_abelian(H_flat):
    # a slowly varying path keeps both half-window kernels resolvable on the grid
    g = uniform_grid(1.0, 100)
    sig = DiscretePath(g, np.column_stack([-0.3 * g, 0.2 * g]))
    h, box = 0.125, 8.0
    ax = np.arange(-box, box + h / 2, h)
    mm = np.array([(a, b) for a in ax for b in ax])

    def grid_kernel(s, t):
        out = np.empty((ax.size, ax.size, ax.size))
        for k, x in enumerate(ax):
            mean, _ = estimate_on_grid(H_flat, sig, [x], mm, t, 2, seed=0, s=s)
            out[:, :, k] = mean.reshape(ax.size, ax.size)
        return out

    first, second, full = grid_kernel(0.0, 0.5), grid_kernel(0.5, 1.0), grid_kernel(0.0, 1.0)
    conv = fftconvolve(first, second, mode="same") * h ** 3
    assert np.abs(conv - full).sum() * h ** 3 < 1e-3


def test_normalization_and_marginal(H):
    sig = drift_path(0)
    h, box = 0.25, 8.0
    ax = np.arange(-box, box + h / 2, h)
    mm = np.array([(a, b) for a in ax for b in ax])
    kV, _ = kernel_V(sig, H.roots, 1.0)
    total = 0.0
    for x in ax:
        p_v, K = kernel_samples(H, sig, [x], mm, 1.0, 256, seed=5)
        per_eta = p_v * K.sum(axis=1) * h * h
        marg, se = per_eta.mean(), per_eta.std(ddof=1) / np.sqrt(per_eta.size)
        assert abs(marg - gaussian_density(kV, [x])) <= 3 * se + 1e-6
        total += marg * h
    assert total == pytest.approx(1.0, abs=0.05)


def test_symmetry_in_m(H):
    sig, eta = _random_sigma_eta(H, 3)
    K = kernel_M_given_eta(H, sig, DiscretePath(sig.grid, eta), 1.0)
    m = np.array([0.8, -1.3])
    assert gaussian_density(K, m) == gaussian_density(K, -m)


def test_lambda_sup():
    g = uniform_grid(1.0, 10)
    assert lambda_sup(DiscretePath(g, np.zeros((11, 2)))) == 0
    v = np.array([3.0, -4.0])
    lin = DiscretePath(g, g[:, None] * v)
    assert lambda_sup(lin) == pytest.approx(5.0)
    g2 = uniform_grid(1.0, 40)
    assert lambda_sup(DiscretePath(g2, g2[:, None] * v)) == lambda_sup(lin)


def test_bridges_pinned(H):
    sig = drift_path(1)
    clocks = clock_set(sig, H.roots, 1.0)
    eta = sample_eta_bridges(derive_rng(0), clocks, [2.5], 50)
    assert np.all(eta[:, -1, 0] == 2.5)
    assert np.all(eta[:, 0, 0] == 0.0)


def test_worker_independence(H):
    sig = drift_path(2)
    target = heisenberg_element(H, [0.3], [0.2], -0.4)
    a = estimate_P_sigma(H, sig, target, 1.0, 200, seed=9, workers=1)
    b = estimate_P_sigma(H, sig, target, 1.0, 200, seed=9, workers=3)
    assert a.mean == b.mean and a.stderr == b.stderr and a.mom == b.mom
    with pytest.raises(InvalidArgumentError):
        estimate_P_sigma(H, sig, target, 1.0, 1, seed=9)


def test_window_and_errors(H):
    sig = drift_path(2)
    with pytest.raises(InvalidArgumentError):
        kernel_V(sig, H.roots, 0.5, s=0.5)
    p_v, K = kernel_samples(H, sig, [0.0], [[0.0, 0.0]], 1.0, 4, seed=0, s=0.25)
    assert p_v > 0 and np.all(K > 0)
