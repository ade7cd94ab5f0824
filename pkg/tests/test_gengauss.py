import math

import numpy as np
import pytest
from scipy import integrate

from mixlangevin.errors import ConfigurationError
from mixlangevin.gengauss import (
    GenGaussSampler,
    SmoothingConfig,
    kappa,
    moment_pnorm,
    pnorm_moment,
    rising_moment_identity,
    smoothed_gradient,
    smoothed_potential,
    smoothing_constants,
    smoothing_value_bound,
    stochastic_gradient,
)
from mixlangevin.potentials import MixtureNormPotential, QuadraticPotential


def _quad_1d(p):
    f = lambda z: math.exp(-abs(z) ** p / p)
    return 2 * integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12)[0]


def test_sampler_p2_is_standard_normal():
    z = GenGaussSampler(2.0, 1, seed=0).sample(1_000_000)[:, 0]
    var = z.var(ddof=1)
    se = np.sqrt((np.mean(z ** 4) - var ** 2) / len(z))
    assert abs(var - 1.0) <= 3 * se


def test_sampler_p4_unit_pth_moment():
    z = GenGaussSampler(4.0, 1, seed=1).sample(400_000)[:, 0]
    v = np.abs(z) ** 4
    assert abs(v.mean() - 1.0) <= 3 * v.std(ddof=1) / math.sqrt(len(v))
    # the same fact from the density itself
    num = 2 * integrate.quad(lambda t: t ** 4 * math.exp(-t ** 4 / 4), 0, np.inf)[0]
    assert num / _quad_1d(4.0) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("p,d", [(1.5, 1), (2.0, 3), (3.0, 4), (7.0, 2)])
def test_sampler_mean_zero(p, d):
    z = GenGaussSampler(p, d, seed=2).sample(100_000)
    se = z.std(axis=0, ddof=1) / math.sqrt(len(z))
    assert np.all(np.abs(z.mean(axis=0)) <= 3 * se)


def test_sampler_streaming_matches_batch():
    a = GenGaussSampler(1.5, 3, seed=5)
    b = GenGaussSampler(1.5, 3, seed=5)
    rows = np.vstack([a.sample(1) for _ in range(7)])
    np.testing.assert_array_equal(rows, b.sample(7))


def test_sampler_rejects_bad_shape():
    with pytest.raises(ConfigurationError):
        GenGaussSampler(1.0, 2)
    with pytest.raises(ConfigurationError):
        GenGaussSampler(2.0, 0)


def test_kappa_values():
    assert kappa(2, 1).value == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)
    assert kappa(2, 3).value == pytest.approx((2 * math.pi) ** 1.5, rel=1e-12)
    assert kappa(1.5, 1).value == pytest.approx(_quad_1d(1.5), rel=1e-8)


def test_kappa_overflow_reports_log():
    k = kappa(2.0, 2000)
    assert k.overflow and math.isinf(k.value)
    assert k.log_value == pytest.approx(1000 * math.log(2 * math.pi))


def test_moment_d5_n2_equals_d():
    mc = moment_pnorm(GenGaussSampler(2.0, 5, seed=3), 2)
    assert abs(mc.estimate - 5.0) <= 3 * mc.stderr
    assert mc.identity == 5.0 and mc.identity_ok
    assert mc.exact == pytest.approx(5.0)


@pytest.mark.xfail(strict=True, reason="E||xi||^4 is d(d+2) = 35 at d=5, not the rising product d(d+1) = 30")
def test_moment_d5_n4_rising_product():
    mc = moment_pnorm(GenGaussSampler(2.0, 5, seed=4), 4)
    assert abs(mc.estimate - 30.0) <= 3 * mc.stderr


def test_moment_d5_n4_true_value():
    mc = moment_pnorm(GenGaussSampler(2.0, 5, seed=4), 4)
    assert mc.exact == pytest.approx(35.0)
    assert abs(mc.estimate - 35.0) <= 3 * mc.stderr


def test_moment_p3_d2_n3():
    mc = moment_pnorm(GenGaussSampler(3.0, 2, seed=6), 3)
    assert abs(mc.estimate - 2.0) <= 3 * mc.stderr
    assert mc.identity == 2.0


def test_pnorm_moment_against_monte_carlo():
    g = GenGaussSampler(1.5, 3, seed=7)
    mc = moment_pnorm(g, 2.5)
    assert abs(mc.estimate - pnorm_moment(1.5, 3, 2.5)) <= 3 * mc.stderr
    assert mc.identity is None


def test_rising_product():
    assert rising_moment_identity(5, 2) == 30.0
    assert rising_moment_identity(3, 3) == 60.0


def test_moment_order_validation():
    with pytest.raises(ConfigurationError):
        moment_pnorm(GenGaussSampler(2.0, 1, seed=0), 1)


# -- smoothing -----------------------------------------------------------------


def test_mu_zero_is_exact():
    u = MixtureNormPotential([(1.0, 2.5)], dim=3)
    x = np.array([0.3, -1.0, 2.0])
    cfg = SmoothingConfig(0.0)
    assert smoothed_potential(u, cfg, x) == (float(u.energy(x)), 0.0)
    g, tr = smoothed_gradient(u, cfg, x)
    np.testing.assert_array_equal(g, u.grad(x))
    assert tr == 0.0
    np.testing.assert_array_equal(stochastic_gradient(u, cfg, x), u.grad(x))


def test_quadratic_smoothed_potential():
    u = QuadraticPotential(a=1.0, dim=1)
    est, se = smoothed_potential(u, SmoothingConfig(0.5, 2.0, 200_000), np.zeros(1), GenGaussSampler(2.0, 1, 8))
    assert abs(est - 0.125) <= 3 * se
    # quadrature oracle for E (mu xi)^2 / 2
    num = integrate.quad(lambda z: 0.125 * z * z * math.exp(-z * z / 2), -np.inf, np.inf)[0]
    assert num / math.sqrt(2 * math.pi) == pytest.approx(0.125)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_mixture_smoothing_within_bound(p):
    u = MixtureNormPotential([(1.0, 2.5)], dim=2, metadata="quoted")
    N, L, alpha = smoothing_constants(u.regularity)
    mu = 0.3
    rng = np.random.default_rng(9)
    bound = smoothing_value_bound(N, L, alpha, mu, 2, p)
    for x in rng.normal(size=(5, 2)):
        est, se = smoothed_potential(u, SmoothingConfig(mu, p, 50_000), x, GenGaussSampler(p, 2, 10))
        assert abs(est - float(u.energy(x))) <= bound + 3 * se


def test_stochastic_gradient_unbiased():
    u = MixtureNormPotential([(1.0, 2.5)], dim=2)
    cfg = SmoothingConfig(0.3, 2.0, 100_000)
    x = np.array([0.7, -0.4])
    draws = stochastic_gradient(u, cfg, x, GenGaussSampler(2.0, 2, 11), size=100_000)
    ref, tr_b = smoothed_gradient(u, cfg, x, GenGaussSampler(2.0, 2, 12))
    tr_a = float(np.sum(draws.var(axis=0, ddof=1)))
    assert np.linalg.norm(draws.mean(axis=0) - ref) <= 3 * math.sqrt((tr_a + tr_b) / 100_000)


def test_batched_stochastic_gradient_matches_single_calls():
    u = MixtureNormPotential([(1.0, 2.5)], dim=3)
    cfg = SmoothingConfig(0.2, 1.5)
    x = np.array([0.1, 0.2, -0.3])
    a, b = GenGaussSampler(1.5, 3, 13), GenGaussSampler(1.5, 3, 13)
    single = np.array([stochastic_gradient(u, cfg, x, a) for _ in range(6)])
    np.testing.assert_array_equal(single, stochastic_gradient(u, cfg, x, b, size=6))


def test_sampler_mismatch_rejected():
    u = QuadraticPotential(dim=2)
    with pytest.raises(ConfigurationError):
        smoothed_potential(u, SmoothingConfig(0.1, 2.0), np.zeros(2), GenGaussSampler(3.0, 2, 0))


def test_smoothing_config_validation():
    with pytest.raises(ConfigurationError):
        SmoothingConfig(-0.1)
    with pytest.raises(ConfigurationError):
        SmoothingConfig(0.1, p=1.0)
