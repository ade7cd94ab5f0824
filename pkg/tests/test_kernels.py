"""The compiled kernel and the numpy fallback implement one contract."""

import dataclasses

import numpy as np
import pytest

from mixlangevin.gengauss import SmoothingConfig
from mixlangevin.potentials import FlatPotential, LinearTailPotential, MixtureNormPotential, QuadraticPotential
from mixlangevin.sampler import ChainConfig, HistogramSpec, compiled_available, run_chain, run_ensemble
from mixlangevin.sampler import _backend

pytestmark = pytest.mark.skipif(not compiled_available(), reason="compiled kernel not built")

POTENTIALS = [
    FlatPotential(dim=1),
    QuadraticPotential(a=[1.0, 3.0], dim=2),
    MixtureNormPotential([(1.0, 2.5), (0.5, 3.0)], dim=2),
    MixtureNormPotential([(1.0, 3.0)], dim=1),
    LinearTailPotential([1.0, 2.0], dim=2),
    LinearTailPotential([1.0], dim=3),
]


def _hist(d):
    if d > 2:
        return None
    return HistogramSpec(lo=(-5.0,) * d, width=(10.0 / 40,) * d, nbins=(40,) * d, groups=4)


@pytest.mark.parametrize("pot", POTENTIALS, ids=lambda p: f"{p.name}-d{p.dim}")
def test_ensemble_parity(pot):
    cfg = ChainConfig(pot, steps=600, eta=0.05, seed=21, burn_in=100, stride=10, histogram=_hist(pot.dim))
    a = run_ensemble(dataclasses.replace(cfg, backend="python"), 300)
    b = run_ensemble(dataclasses.replace(cfg, backend="compiled"), 300)
    assert (a.backend, b.backend) == ("python", "compiled")
    np.testing.assert_allclose(a.finals, b.finals, rtol=1e-9, atol=1e-11)
    np.testing.assert_array_equal(a.tail_n, b.tail_n)
    np.testing.assert_allclose(a.tail_cross, b.tail_cross, rtol=1e-9, atol=1e-9)
    for name in a.trace:
        np.testing.assert_allclose(a.trace[name][0], b.trace[name][0], rtol=1e-9)
    if a.histogram is not None:
        np.testing.assert_array_equal(a.histogram, b.histogram)


@pytest.mark.parametrize("source", ["stochastic", "smoothed"])
def test_smoothed_modes_parity(source):
    pot = MixtureNormPotential([(1.0, 2.5)], dim=2)
    cfg = ChainConfig(pot, steps=300, eta=0.05, seed=22, gradient_source=source,
                      smoothing=SmoothingConfig(0.2, 1.5, 16))
    a = run_chain(dataclasses.replace(cfg, backend="python"))
    b = run_chain(dataclasses.replace(cfg, backend="compiled"))
    np.testing.assert_allclose(a.iterates, b.iterates, rtol=1e-9, atol=1e-11)


def test_divergence_step_parity():
    cfg = ChainConfig(QuadraticPotential(a=30.0, dim=1), steps=100, eta=0.5, seed=0)
    a = run_ensemble(dataclasses.replace(cfg, backend="python"), 5)
    b = run_ensemble(dataclasses.replace(cfg, backend="compiled"), 5)
    np.testing.assert_array_equal(a.diverged, b.diverged)
    np.testing.assert_array_equal(a.finals, b.finals)


def test_kind_gradients_match_potentials():
    rng = np.random.default_rng(0)
    for pot in POTENTIALS:
        kind, pa, pb = pot.kernel_spec()
        x = rng.normal(scale=2.0, size=(50, pot.dim))
        np.testing.assert_allclose(_backend.kind_grad(kind, np.asarray(pa, float), np.asarray(pb, float))(x),
                                   pot.grad(x), rtol=1e-12, atol=1e-14)
