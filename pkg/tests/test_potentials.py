import numpy as np
import pytest
from scipy.optimize import approx_fprime

from mixlangevin.errors import CapabilityError, ConfigurationError, DimensionError
from mixlangevin.potentials import (
    FlatPotential,
    FunctionPotential,
    LinearTailPotential,
    MixtureNormPotential,
    QuadraticPotential,
    RegularityMeta,
    certify_dissipative,
    certify_hessian_smooth,
    certify_mixture_smooth,
    eval_grad,
    make_potential,
)


def quad_meta(L=1.0, dissipativity=(2.0, 1.0, 0.0)):
    return RegularityMeta(smooth_exponents=(1.0,), smooth_consts=(L,), local_power=0.0,
                          dissipativity=dissipativity, hessian_exponents=(1.0,), hessian_consts=(1e-9,))


# -- eval_grad oracles ---------------------------------------------------------


def test_quadratic_eval_grad():
    u, g = eval_grad(QuadraticPotential(a=2.0, dim=1), np.array([3.0]))
    assert u == 9.0
    np.testing.assert_array_equal(g, [6.0])


def test_mixture_unit_vector():
    p = MixtureNormPotential([(1.0, 3.0)], dim=2)
    u, g = eval_grad(p, np.array([1.0, 0.0]))
    assert u == pytest.approx(1.0)
    np.testing.assert_allclose(g, [3.0, 0.0])
    fd = approx_fprime(np.array([1.0, 0.0]), lambda z: float(p.energy(z)), 1e-7)
    np.testing.assert_allclose(g, fd, atol=1e-5)


def test_linear_tail_at_origin():
    u, g = eval_grad(LinearTailPotential([1.0], dim=3), np.zeros(3))
    assert u == 1.0
    np.testing.assert_array_equal(g, np.zeros(3))


def test_mixture_gradient_zero_at_origin():
    p = MixtureNormPotential([(1.0, 2.5), (0.3, 3.0)], dim=4)
    np.testing.assert_array_equal(p.grad(np.zeros(4)), np.zeros(4))
    assert np.all(np.isfinite(p.energy(np.zeros((3, 4)))))


@pytest.mark.parametrize("pot", [
    QuadraticPotential(a=[1.0, 2.0, 0.5], dim=3),
    MixtureNormPotential([(1.0, 2.2), (0.5, 3.0)], dim=3),
    LinearTailPotential([1.0, 2.5], dim=3),
])
def test_gradient_matches_finite_differences(pot):
    rng = np.random.default_rng(1)
    for x in rng.normal(scale=2.0, size=(5, 3)):
        fd = approx_fprime(x, lambda z: float(pot.energy(z)), 1e-7)
        np.testing.assert_allclose(pot.grad(x), fd, rtol=1e-4, atol=1e-4)


@pytest.mark.parametrize("pot", [
    MixtureNormPotential([(1.0, 2.5), (0.5, 3.0)], dim=3),
    LinearTailPotential([1.0, 2.0], dim=3),
])
def test_hessian_vec_matches_gradient_differences(pot):
    rng = np.random.default_rng(2)
    h = 1e-6
    for x, v in zip(rng.normal(size=(5, 3)), rng.normal(size=(5, 3))):
        fd = (pot.grad(x + h * v) - pot.grad(x - h * v)) / (2 * h)
        np.testing.assert_allclose(pot.hessian_vec(x, v), fd, rtol=1e-5, atol=1e-6)


def test_linear_tail_gradient_bounded_by_term_count():
    p = LinearTailPotential([1.0, 2.0, 3.0], dim=2)
    x = np.random.default_rng(0).normal(scale=50.0, size=(2000, 2))
    assert np.max(np.linalg.norm(p.grad(x), axis=1)) <= 3.0 + 1e-12


def test_batched_evaluation_shapes():
    p = MixtureNormPotential([(1.0, 2.5)], dim=2)
    x = np.ones((4, 5, 2))
    assert p.energy(x).shape == (4, 5)
    assert p.grad(x).shape == (4, 5, 2)


# -- errors --------------------------------------------------------------------


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_grad(QuadraticPotential(dim=2), np.zeros(3))
    with pytest.raises(DimensionError):
        QuadraticPotential(dim=2).grad(np.zeros((4, 3)))


@pytest.mark.parametrize("terms", [[(1.0, 1.0)], [(1.0, 3.5)], [(-1.0, 2.5)], []])
def test_mixture_rejects_bad_terms(terms):
    with pytest.raises(ConfigurationError):
        MixtureNormPotential(terms, dim=2)


def test_linear_tail_rejects_small_exponent():
    with pytest.raises(ConfigurationError):
        LinearTailPotential([0.5], dim=2)


def test_unknown_potential_name():
    with pytest.raises(ConfigurationError, match="unknown potential"):
        make_potential("banana", 2)


def test_regularity_meta_validation():
    with pytest.raises(ConfigurationError):
        RegularityMeta((1.5,), (1.0,), 0.0, (2.0, 1.0, 0.0))
    with pytest.raises(ConfigurationError):
        RegularityMeta((1.0,), (0.0,), 0.0, (2.0, 1.0, 0.0))
    with pytest.raises(ConfigurationError):
        RegularityMeta((1.0,), (1.0,), 0.0, (2.0, 0.0, 0.0))
    m = RegularityMeta((1.0, 0.5), (2.0, 3.0), 0.0, (2.0, 1.0, 1.0))
    assert m.smooth_exponents == (0.5, 1.0) and m.smooth_consts == (3.0, 2.0)


def test_hessian_vec_capability_error():
    p = FunctionPotential(1, lambda x: x[..., 0] ** 2, lambda x: 2 * x)
    with pytest.raises(CapabilityError):
        p.hessian_vec(np.zeros(1), np.ones(1))
    with pytest.raises(CapabilityError):
        certify_hessian_smooth(FunctionPotential(1, lambda x: x[..., 0] ** 2, lambda x: 2 * x,
                                                 regularity=quad_meta()), finite_difference=False)


def test_certifier_needs_metadata():
    with pytest.raises(ConfigurationError):
        certify_mixture_smooth(FlatPotential(dim=1), trials=10)


# -- certifiers ----------------------------------------------------------------


def test_quadratic_smooth_passes_and_undersized_fails():
    ok = certify_mixture_smooth(QuadraticPotential(a=1.0, dim=2, regularity=quad_meta()), trials=10_000)
    assert ok.passed and ok.witness is None
    bad = certify_mixture_smooth(QuadraticPotential(a=1.0, dim=2, regularity=quad_meta(L=1e-3)), trials=10_000)
    assert not bad.passed
    assert set(bad.witness) >= {"x", "y", "lhs", "rhs"}
    assert bad.witness["lhs"] > bad.witness["rhs"]


def test_single_term_quoted_exponents():
    p = MixtureNormPotential([(1.0, 2.5)], dim=2, metadata="quoted")
    meta = p.regularity
    assert meta.smooth_exponents == (0.5,) and meta.local_power == pytest.approx(1.0)
    assert certify_mixture_smooth(p, trials=10_000, radius=10.0).passed


@pytest.mark.parametrize("variant", ["proved", "quoted", "declared"])
def test_mixture_metadata_variants_certify(variant):
    p = MixtureNormPotential([(1.0, 2.5), (0.5, 3.0)], dim=3, metadata=variant)
    assert certify_mixture_smooth(p, trials=5000).passed
    assert certify_dissipative(p, trials=5000).passed
    assert certify_hessian_smooth(p, trials=5000).passed


def test_dissipative_claims():
    p = MixtureNormPotential([(1.0, 3.0)], dim=2)
    assert p.regularity.dissipativity == (3.0, 3.0, 0.0)
    assert certify_dissipative(p, trials=10_000).passed
    assert certify_dissipative(LinearTailPotential([1.0], dim=2), trials=10_000).passed
    q = QuadraticPotential(a=1.0, dim=2, regularity=quad_meta(dissipativity=(2.0, 2.0, 0.0)))
    assert not certify_dissipative(q, trials=10_000).passed
    q = QuadraticPotential(a=1.0, dim=2, regularity=quad_meta(dissipativity=(2.0, 1.0, 0.0)))
    assert certify_dissipative(q, trials=10_000).passed


def test_hessian_smooth_claims():
    q = QuadraticPotential(a=1.0, dim=2, regularity=quad_meta())
    assert certify_hessian_smooth(q, trials=2000).passed
    p = MixtureNormPotential([(1.0, 2.5)], dim=2)
    assert p.regularity.hessian_exponents == (0.5,)
    assert p.regularity.hessian_consts[0] == pytest.approx(1.5 + 0.5 * 2 ** 3.5)
    assert certify_hessian_smooth(p, trials=10_000).passed
    lt = LinearTailPotential([1.0], dim=2)
    rep = certify_hessian_smooth(lt, trials=10_000, finite_difference=True)
    assert rep.passed and rep.tolerance == pytest.approx(1e-3)


def test_certificate_report_serializes():
    rep = certify_mixture_smooth(QuadraticPotential(dim=1, regularity=quad_meta(L=1e-3)), trials=100)
    d = rep.to_dict()
    assert d["check"] == "mixture_smooth" and d["passed"] is False
    assert isinstance(d["witness"]["x"], list)


def test_certifier_is_seeded():
    p = MixtureNormPotential([(1.0, 2.5)], dim=2)
    a = certify_mixture_smooth(p, trials=500, rng_seed=3)
    b = certify_mixture_smooth(p, trials=500, rng_seed=3)
    assert a.worst_slack == b.worst_slack


def test_quadratic_closed_form_reference():
    mean, cov = QuadraticPotential(a=[1.0, 4.0], dim=2).closed_form_reference()
    np.testing.assert_array_equal(mean, [0.0, 0.0])
    np.testing.assert_allclose(cov, np.diag([1.0, 0.25]))
