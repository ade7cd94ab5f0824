import dataclasses
import math

import numpy as np
import pytest

from mixlangevin.errors import ConfigurationError, DimensionError, DivergedChainError
from mixlangevin.gengauss import SmoothingConfig, stochastic_gradient
from mixlangevin.potentials import FlatPotential, MixtureNormPotential, QuadraticPotential
from mixlangevin.sampler import (
    ChainConfig,
    HistogramSpec,
    InitSpec,
    PlannerInput,
    compiled_available,
    default_stride,
    interpolated_state,
    moment_tracker,
    plan_step_size,
    replay_noise,
    run_chain,
    run_ensemble,
    ula_step,
)

BACKENDS = ["python"] + (["compiled"] if compiled_available() else [])


def test_ula_step_examples():
    np.testing.assert_array_equal(ula_step(np.array([1.5, -2.0]), 0.3, np.zeros(2), np.zeros(2)), [1.5, -2.0])
    np.testing.assert_array_equal(ula_step(np.zeros(2), 0.5, np.zeros(2), np.array([1.0, 0.0])), [1.0, 0.0])
    u = QuadraticPotential(a=1.0, dim=1)
    x = np.array([1.0])
    assert ula_step(x, 0.1, u.grad(x), np.zeros(1))[0] == pytest.approx(0.9)


def test_ula_step_errors():
    with pytest.raises(DivergedChainError) as e:
        ula_step(np.zeros(1), 0.1, np.array([np.nan]), np.zeros(1), step=7)
    assert e.value.step == 7
    with pytest.raises(DimensionError):
        ula_step(np.zeros(2), 0.1, np.zeros(3), np.zeros(2))


def test_interpolated_state_endpoints():
    x, g, z = np.array([0.4, 1.0]), np.array([0.2, -0.1]), np.array([0.3, 0.7])
    np.testing.assert_array_equal(interpolated_state(x, 0.0, g, z), x)
    np.testing.assert_allclose(interpolated_state(x, 0.2, g, z, eta=0.2), ula_step(x, 0.2, g, z))
    with pytest.raises(ConfigurationError):
        interpolated_state(x, 0.3, g, z, eta=0.2)


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_step_chain_is_ula_step(backend):
    u = MixtureNormPotential([(1.0, 2.5)], dim=2)
    cfg = ChainConfig(u, steps=1, eta=0.05, seed=3, backend=backend)
    traj = run_chain(cfg)
    x0, noise, _ = replay_noise(cfg)
    np.testing.assert_array_equal(traj.initial_state, x0)
    np.testing.assert_allclose(traj.final_state, ula_step(x0, 0.05, u.grad(x0), noise[0]), rtol=1e-14)


@pytest.mark.parametrize("source", ["exact", "stochastic"])
def test_replay_reproduces_python_chain(source):
    u = MixtureNormPotential([(1.0, 2.5), (0.5, 3.0)], dim=2)
    sm = SmoothingConfig(0.2, 1.5) if source == "stochastic" else None
    cfg = ChainConfig(u, steps=200, eta=0.05, seed=4, stride=1, gradient_source=source, smoothing=sm,
                      backend="python")
    traj = run_chain(cfg)
    x, noise, xi = replay_noise(cfg)
    for k in range(cfg.steps):
        y = x if xi is None else x + sm.mu * xi[k]
        x = ula_step(x, 0.05, u.grad(y), noise[k])
        np.testing.assert_array_equal(x, traj.iterates[k])


def test_compiled_matches_replay_to_rounding():
    if not compiled_available():
        pytest.skip("compiled kernel not built")
    u = MixtureNormPotential([(1.0, 2.5)], dim=3)
    cfg = ChainConfig(u, steps=500, eta=0.05, seed=5, stride=1, backend="compiled")
    traj = run_chain(cfg)
    x, noise, _ = replay_noise(cfg)
    for k in range(cfg.steps):
        x = ula_step(x, 0.05, u.grad(x), noise[k])
    np.testing.assert_allclose(traj.final_state, x, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_mu_zero_stochastic_is_exact_bit_for_bit(backend):
    u = MixtureNormPotential([(1.0, 2.5)], dim=2)
    base = ChainConfig(u, steps=2000, eta=0.05, seed=6, stride=1, backend=backend)
    exact = run_chain(base)
    stoch = run_chain(dataclasses.replace(base, gradient_source="stochastic", smoothing=SmoothingConfig(0.0)))
    np.testing.assert_array_equal(exact.iterates, stoch.iterates)
    np.testing.assert_array_equal(exact.final_state, stoch.final_state)


def test_mu_zero_stochastic_gradient_replay():
    u = MixtureNormPotential([(1.0, 2.5)], dim=2)
    sm = SmoothingConfig(0.0)
    cfg = ChainConfig(u, steps=300, eta=0.05, seed=6, stride=1, gradient_source="stochastic", smoothing=sm,
                      backend="python")
    traj = run_chain(cfg)
    x, noise, xi = replay_noise(cfg)
    assert xi is None
    for k in range(cfg.steps):
        x = ula_step(x, 0.05, stochastic_gradient(u, sm, x), noise[k])
    np.testing.assert_array_equal(x, traj.final_state)


def test_stochastic_mode_default_mu_is_sqrt_eta():
    cfg = ChainConfig(QuadraticPotential(dim=1), steps=10, eta=0.04, gradient_source="stochastic")
    assert cfg.resolved_smoothing() == SmoothingConfig(0.2, 2.0)


def test_quadratic_stationary_variance():
    cfg = ChainConfig(QuadraticPotential(a=1.0, dim=1), steps=100_000, eta=0.1, burn_in=10_000, seed=11)
    traj = run_chain(cfg)
    target = 2.0 / (2.0 - 0.1)
    assert abs(traj.tail_cov[0, 0] / target - 1.0) < 0.02
    assert traj.tail_n == 90_000


@pytest.mark.parametrize("backend", BACKENDS)
def test_ensemble_of_one_equals_run_chain(backend):
    cfg = ChainConfig(MixtureNormPotential([(1.0, 2.5)], dim=2), steps=500, eta=0.05, seed=12, backend=backend)
    ens = run_ensemble(cfg, 1)
    np.testing.assert_array_equal(ens.finals[0], run_chain(cfg).final_state)


def test_brownian_one_step_covariance():
    m, eta = 100_000, 0.3
    cfg = ChainConfig(FlatPotential(dim=2), steps=1, eta=eta, seed=13)
    finals = run_ensemble(cfg, m).finals
    cov = np.cov(finals.T)
    target = 1.0 + 2 * eta
    se = target * math.sqrt(2.0 / m)
    assert np.all(np.abs(np.diag(cov) - target) <= 3 * se)
    assert abs(cov[0, 1]) <= 3 * target / math.sqrt(m)


def test_quadratic_law_at_every_step():
    # AR(1): mean (1 - eta a)^k x0, variance v_k = (1 - eta a)^2 v_{k-1} + 2 eta
    a, eta, k, m = 2.0, 0.1, 20, 20_000
    cfg = ChainConfig(QuadraticPotential(a=a, dim=1), steps=k, eta=eta, seed=14, init=InitSpec.point([2.0]))
    finals = run_ensemble(cfg, m).finals[:, 0]
    r = 1 - eta * a
    v = 0.0
    for _ in range(k):
        v = r * r * v + 2 * eta
    assert abs(finals.mean() - 2.0 * r ** k) <= 3 * math.sqrt(v / m)
    assert abs(finals.var(ddof=1) - v) <= 3 * v * math.sqrt(2.0 / m)


def test_ensemble_deterministic_and_worker_independent():
    u = MixtureNormPotential([(1.0, 2.5)], dim=2)
    hist = HistogramSpec(lo=(-4.0, -4.0), width=(0.5, 0.5), nbins=(16, 16))
    cfg = ChainConfig(u, steps=400, eta=0.05, seed=15, burn_in=100, stride=10, histogram=hist)
    a = run_ensemble(cfg, 2500, workers=1)
    b = run_ensemble(cfg, 2500, workers=4)
    c = run_ensemble(cfg, 2500, workers=2)
    for other in (b, c):
        np.testing.assert_array_equal(a.finals, other.finals)
        np.testing.assert_array_equal(a.histogram, other.histogram)
        np.testing.assert_array_equal(a.tail_sum, other.tail_sum)
        for name in a.trace:
            np.testing.assert_array_equal(a.trace[name][0], other.trace[name][0])
    # chain c of a larger ensemble is the same chain
    np.testing.assert_array_equal(run_ensemble(cfg, 10).finals, a.finals[:10])


def test_seed_changes_output():
    cfg = ChainConfig(QuadraticPotential(dim=1), steps=50, seed=1)
    assert not np.array_equal(run_ensemble(cfg, 4).finals, run_ensemble(dataclasses.replace(cfg, seed=2), 4).finals)


@pytest.mark.parametrize("backend", BACKENDS)
def test_divergence_guard(backend):
    cfg = ChainConfig(QuadraticPotential(a=30.0, dim=1), steps=200, eta=0.5, seed=0, stride=1, backend=backend,
                      init=InitSpec.point([1.0]))
    with pytest.raises(DivergedChainError) as e:
        run_chain(cfg)
    err = e.value
    assert 1 <= err.step < 200
    assert np.all(err.trajectory.record_steps < err.step)
    assert np.all(np.isfinite(err.trajectory.iterates))
    ens = run_ensemble(cfg, 3)
    assert len(ens.divergences) == 3


def test_chain_config_validation():
    u = QuadraticPotential(dim=1)
    with pytest.raises(ConfigurationError):
        ChainConfig(u, steps=0)
    with pytest.raises(ConfigurationError):
        ChainConfig(u, steps=10, eta=1.5)
    with pytest.raises(ConfigurationError):
        ChainConfig(u, steps=10, eta=[0.1, 0.1])
    with pytest.raises(ConfigurationError):
        ChainConfig(u, steps=10, gradient_source="leapfrog")
    with pytest.raises(ConfigurationError):
        run_ensemble(ChainConfig(u, steps=10), 0)


def test_eta_schedule_callable():
    cfg = ChainConfig(QuadraticPotential(dim=1), steps=4, eta=lambda k: 0.1 / (k + 1))
    np.testing.assert_allclose(cfg.etas(), [0.1, 0.05, 0.1 / 3, 0.025])


def test_default_stride():
    assert default_stride(100) == 1
    assert default_stride(100_000) == 10


# -- planner -------------------------------------------------------------------


def test_planner_examples():
    assert plan_step_size(PlannerInput(epsilon=20.0, T=10.0, D=1.0, alpha=1.0)) == 1.0
    assert plan_step_size(PlannerInput(epsilon=0.02, T=10.0, D=1.0, alpha=1.0)) == pytest.approx(1e-3)
    assert plan_step_size(PlannerInput(epsilon=0.02, T=10.0, D=1.0, alpha=0.5)) == pytest.approx(1e-6)


def test_planner_monotone():
    eps = np.geomspace(1e-4, 1.0, 20)
    etas = [plan_step_size(PlannerInput(e, 3.0, 2.0, 0.7)) for e in eps]
    assert all(a <= b for a, b in zip(etas, etas[1:]))
    ts = [plan_step_size(PlannerInput(0.01, t, 2.0, 0.7)) for t in np.geomspace(0.1, 100, 20)]
    assert all(a >= b for a, b in zip(ts, ts[1:]))
    ds = [plan_step_size(PlannerInput(0.01, 3.0, d, 0.7)) for d in np.geomspace(0.1, 100, 20)]
    assert all(a >= b for a, b in zip(ds, ds[1:]))


def test_planner_rejects_nonpositive():
    with pytest.raises(ConfigurationError):
        PlannerInput(epsilon=0.0, T=1.0, D=1.0, alpha=1.0)


# -- moment tracking -----------------------------------------------------------


def test_brownian_second_moment_slope():
    d, eta = 2, 0.05
    cfg = ChainConfig(FlatPotential(dim=d), steps=400, eta=eta, seed=16, stride=20)
    tr = moment_tracker(run_ensemble(cfg, 5000, moment_orders=(2,)), 2)
    assert abs(tr.slope - 2 * d) <= 3 * tr.slope_se
    assert tr.slope_per_step == pytest.approx(tr.slope * eta)
    assert tr.linear_ok


def test_stationary_moments_flat():
    cfg = ChainConfig(QuadraticPotential(a=1.0, dim=2), steps=500, eta=1e-3, seed=17, stride=50)
    tr = moment_tracker(run_ensemble(cfg, 5000), 4)
    assert np.all(np.abs(tr.values - tr.values[0]) <= 3 * tr.stderr)


def test_tracker_from_snapshots():
    rng = np.random.default_rng(0)
    snaps = [(k, rng.normal(size=(1000, 1))) for k in (10, 20, 30, 40)]
    tr = moment_tracker(snaps, 2, eta=0.1)
    np.testing.assert_allclose(tr.times, [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ConfigurationError):
        moment_tracker(snaps, 3, eta=0.1)
    with pytest.raises(ConfigurationError):
        moment_tracker(snaps, 2)


def test_mixture_fourth_moment_bounded():
    cfg = ChainConfig(MixtureNormPotential([(1.0, 3.0)], dim=1), steps=100_000, eta=0.05, burn_in=10_000, seed=18)
    tr = moment_tracker(run_ensemble(cfg, 200, moment_orders=(4,)), 4, burn_in=10_000)
    assert tr.max_ratio <= 10.0
