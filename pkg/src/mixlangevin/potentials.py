"""Potential functions, regularity metadata and statistical certifiers.

A potential ``U`` defines the target ``nu ∝ exp(-U)``.  Every potential here
is vectorised over leading axes: ``energy`` maps ``(..., d)`` to ``(...)``
and ``grad`` maps ``(..., d)`` to ``(..., d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapabilityError, ConfigurationError, DimensionError

__all__ = [
    "RegularityMeta",
    "PotentialSpec",
    "FunctionPotential",
    "QuadraticPotential",
    "MixtureNormPotential",
    "LinearTailPotential",
    "FlatPotential",
    "CertificateReport",
    "eval_grad",
    "certify_mixture_smooth",
    "certify_dissipative",
    "certify_hessian_smooth",
    "gradient_growth_bound",
    "descent_remainder_bound",
    "mixture_smooth_rhs",
    "make_potential",
    "POTENTIALS",
]

# Inequalities pass when violated by at most TOL * (1 + rhs).
CERT_TOL = 1e-8
FD_HESSIAN_STEP = 1e-4
FD_CERT_TOL = 1e-3


@dataclass(frozen=True)
class RegularityMeta:
    """Declared regularity constants of a potential.

    Smoothness terms are stored sorted by exponent; ``smooth_consts[i]``
    pairs with ``smooth_exponents[i]``.  ``dissipativity`` is ``(beta, a, b)``.
    """

    smooth_exponents: tuple
    smooth_consts: tuple
    local_power: float
    dissipativity: tuple
    hessian_exponents: Optional[tuple] = None
    hessian_consts: Optional[tuple] = None
    hessian_local_power: float = 0.0
    poincare_gamma: Optional[float] = None
    stationary_at_zero: bool = True
    notes: tuple = ()

    def __post_init__(self):
        exps = tuple(float(a) for a in self.smooth_exponents)
        consts = tuple(float(c) for c in self.smooth_consts)
        if not exps or len(exps) != len(consts):
            raise ConfigurationError("smooth_exponents and smooth_consts must be non-empty and aligned")
        order = np.argsort(exps, kind="stable")
        exps = tuple(exps[i] for i in order)
        consts = tuple(consts[i] for i in order)
        if any(not (0.0 < a <= 1.0) for a in exps):
            raise ConfigurationError("smoothness exponents must lie in (0, 1]", "smooth_exponents")
        if any(not (c > 0.0) for c in consts):
            raise ConfigurationError("smoothness constants must be strictly positive", "smooth_consts")
        if not self.local_power >= 0.0:
            raise ConfigurationError("local power must be >= 0", "local_power")
        beta, a, b = (float(v) for v in self.dissipativity)
        # b = 0 is admitted: the norm-power examples are dissipative with b = 0.
        if not (beta > 0 and a > 0 and b >= 0):
            raise ConfigurationError("dissipativity needs beta > 0, a > 0, b >= 0", "dissipativity")
        object.__setattr__(self, "smooth_exponents", exps)
        object.__setattr__(self, "smooth_consts", consts)
        object.__setattr__(self, "local_power", float(self.local_power))
        object.__setattr__(self, "dissipativity", (beta, a, b))

        if (self.hessian_exponents is None) != (self.hessian_consts is None):
            raise ConfigurationError("hessian exponents and constants must be given together")
        if self.hessian_exponents is not None:
            hexps = tuple(float(a) for a in self.hessian_exponents)
            hconsts = tuple(float(c) for c in self.hessian_consts)
            if not hexps or len(hexps) != len(hconsts):
                raise ConfigurationError("hessian exponents and constants must be aligned")
            order = np.argsort(hexps, kind="stable")
            hexps = tuple(hexps[i] for i in order)
            hconsts = tuple(hconsts[i] for i in order)
            if any(not (0.0 <= a <= 1.0) for a in hexps):
                raise ConfigurationError("hessian exponents must lie in [0, 1]", "hessian_exponents")
            if any(not (c > 0.0) for c in hconsts):
                raise ConfigurationError("hessian constants must be positive", "hessian_consts")
            object.__setattr__(self, "hessian_exponents", hexps)
            object.__setattr__(self, "hessian_consts", hconsts)
        if self.poincare_gamma is not None and not self.poincare_gamma > 0:
            raise ConfigurationError("poincare_gamma must be positive", "poincare_gamma")

    @property
    def n_terms(self) -> int:
        return len(self.smooth_exponents)

    @property
    def L_G(self) -> float:
        return max(self.smooth_consts)

    @property
    def alpha_G(self) -> float:
        return self.smooth_exponents[0]

    @property
    def alpha_GN(self) -> float:
        return self.smooth_exponents[-1]

    @property
    def has_hessian(self) -> bool:
        return self.hessian_exponents is not None

    def with_consts(self, smooth_consts=None, dissipativity=None, hessian_consts=None) -> "RegularityMeta":
        """Copy with some constants replaced (used to build control claims)."""
        return RegularityMeta(
            smooth_exponents=self.smooth_exponents,
            smooth_consts=self.smooth_consts if smooth_consts is None else tuple(smooth_consts),
            local_power=self.local_power,
            dissipativity=self.dissipativity if dissipativity is None else tuple(dissipativity),
            hessian_exponents=self.hessian_exponents,
            hessian_consts=self.hessian_consts if hessian_consts is None else tuple(hessian_consts),
            hessian_local_power=self.hessian_local_power,
            poincare_gamma=self.poincare_gamma,
            stationary_at_zero=self.stationary_at_zero,
            notes=self.notes,
        )


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise DimensionError(f"expected trailing dimension {dim}, got shape {x.shape}")
    return x


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


class PotentialSpec:
    """A potential ``U`` with its gradient and optional Hessian action.

    Subclasses implement ``_energy`` and ``_grad`` on validated arrays.
    """

    name = "custom"

    def __init__(self, dim: int, regularity: Optional[RegularityMeta] = None):
        if int(dim) != dim or dim < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {dim}", "dim")
        self.dim = int(dim)
        self.regularity = regularity

    def energy(self, x):
        return self._energy(_as_points(x, self.dim))

    def grad(self, x):
        return self._grad(_as_points(x, self.dim))

    def hessian_vec(self, x, v):
        if not self.has_hessian:
            raise CapabilityError(f"{self.name} potential has no Hessian action")
        x = _as_points(x, self.dim)
        v = _as_points(v, self.dim)
        return self._hessian_vec(x, v)

    @property
    def has_hessian(self) -> bool:
        return type(self)._hessian_vec is not PotentialSpec._hessian_vec

    def _energy(self, x):
        raise NotImplementedError

    def _grad(self, x):
        raise NotImplementedError

    def _hessian_vec(self, x, v):
        raise NotImplementedError

    def kernel_spec(self):
        """``(kind, params_a, params_b)`` for the compiled ULA kernel, or None."""
        return None

    def closed_form_reference(self):
        """``(mean, covariance)`` of ``exp(-U)`` when Gaussian, else None."""
        return None

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class FunctionPotential(PotentialSpec):
    """Wrap user callables as a potential (callables must accept ``(..., d)``)."""

    def __init__(self, dim, energy: Callable, grad: Callable, hessian_vec: Optional[Callable] = None,
                 regularity=None, name="custom"):
        super().__init__(dim, regularity)
        self._energy_fn = energy
        self._grad_fn = grad
        self._hvp_fn = hessian_vec
        self.name = name

    @property
    def has_hessian(self):
        return self._hvp_fn is not None

    def _energy(self, x):
        return np.asarray(self._energy_fn(x), dtype=float)

    def _grad(self, x):
        return np.asarray(self._grad_fn(x), dtype=float)

    def _hessian_vec(self, x, v):
        return np.asarray(self._hvp_fn(x, v), dtype=float)


class QuadraticPotential(PotentialSpec):
    """``U(x) = sum_j a_j x_j^2 / 2``; target ``N(0, diag(1/a))``."""

    name = "quadratic"

    def __init__(self, a=1.0, dim: int = 1, regularity=None):
        a_arr = np.atleast_1d(np.asarray(a, dtype=float))
        if a_arr.size not in (1, dim):
            raise ConfigurationError(f"a must be scalar or length {dim}", "potential.a")
        if np.any(a_arr <= 0):
            raise ConfigurationError("a must be positive", "potential.a")
        self.a = np.broadcast_to(a_arr, (dim,)).copy()
        if regularity is None:
            regularity = RegularityMeta(
                smooth_exponents=(1.0,),
                smooth_consts=(float(self.a.max()),),
                local_power=0.0,
                dissipativity=(2.0, float(self.a.min()), 0.0),
                hessian_exponents=(1.0,),
                hessian_consts=(1.0,),
                poincare_gamma=float(self.a.min()),
            )
        super().__init__(dim, regularity)

    def _energy(self, x):
        return 0.5 * np.sum(self.a * x * x, axis=-1)

    def _grad(self, x):
        return self.a * x

    def _hessian_vec(self, x, v):
        return np.broadcast_to(self.a * v, np.broadcast_shapes(x.shape, v.shape)).copy()

    def kernel_spec(self):
        return 1, self.a.copy(), np.zeros(0)

    def closed_form_reference(self):
        return np.zeros(self.dim), np.diag(1.0 / self.a)

    def describe(self):
        return {"name": self.name, "dim": self.dim, "a": self.a.tolist()}


class FlatPotential(PotentialSpec):
    """``U ≡ 0``: pure diffusion, no stationary law.  Used for guard paths."""

    name = "flat"

    def _energy(self, x):
        return np.zeros(x.shape[:-1])

    def _grad(self, x):
        return np.zeros_like(x)

    def _hessian_vec(self, x, v):
        return np.zeros(np.broadcast_shapes(x.shape, v.shape))

    def kernel_spec(self):
        return 0, np.zeros(0), np.zeros(0)


class MixtureNormPotential(PotentialSpec):
    """``U(x) = sum_i L_i ||x||^{alpha_i}`` with ``alpha_i`` in ``(1, 3]``.

    The gradient at the origin is defined as zero for every term.

    ``metadata`` selects the declared smoothness constants:

    * ``"proved"`` (default): exponent ``(alpha_i - 1)/n``, local power
      ``(n - 1)(alpha_i - 1)/n`` and constant ``(n + 5) L_i alpha_i`` with
      ``n = ceil(alpha_i - 1)``.
    * ``"quoted"``: exponent ``(alpha_i - 1)/3``, local power
      ``2(alpha_N - 1)/3`` and constant ``8 L_i alpha_i``.
    * ``"declared"``: the ``"quoted"`` exponents and local power with the
      ``"proved"`` constants.

    Terms whose local power is below the declared maximum get an extra
    factor 3, since ``1 + r^s + t^s <= 3 (1 + r^l + t^l)`` for ``s <= l``.
    """

    name = "mixture_norm"

    def __init__(self, terms: Sequence, dim: int = 1, metadata: str = "proved", regularity=None):
        terms = [(float(L), float(alpha)) for L, alpha in terms]
        if not terms:
            raise ConfigurationError("at least one (L, alpha) term required", "potential.terms")
        for L, alpha in terms:
            if not L > 0:
                raise ConfigurationError("term coefficients L_i must be positive", "potential.terms")
            if not 1.0 < alpha <= 3.0:
                raise ConfigurationError("term exponents alpha_i must lie in (1, 3]", "potential.terms")
        terms.sort(key=lambda t: t[1])
        self.terms = tuple(terms)
        self.coefs = np.array([t[0] for t in terms])
        self.alphas = np.array([t[1] for t in terms])
        self.metadata = metadata
        if regularity is None and np.all(self.alphas > 2.0):
            regularity = self.declared_regularity(metadata)
        super().__init__(dim, regularity)

    def declared_regularity(self, variant: str = "proved") -> RegularityMeta:
        if np.any(self.alphas <= 2.0):
            raise ConfigurationError("declared constants are only available for alpha_i in (2, 3]")
        notes = [
            "quoted constant 8*sum(L_i*alpha_i) with exponents (alpha_i-1)/3 and local power "
            "2(alpha_N-1)/3 differs from the proved constant (n+5)*L_i*alpha_i with exponent "
            "(alpha-1)/n and local power (n-1)(alpha-1)/n, n = ceil(alpha-1)",
        ]
        if variant == "proved":
            n = np.ceil(self.alphas - 1.0)
            exps = (self.alphas - 1.0) / n
            powers = (n - 1.0) * (self.alphas - 1.0) / n
            consts = (n + 5.0) * self.coefs * self.alphas
            notes.append("using proved constants")
        elif variant in ("quoted", "declared"):
            exps = (self.alphas - 1.0) / 3.0
            powers = np.full_like(self.alphas, 2.0 * (self.alphas[-1] - 1.0) / 3.0)
            if variant == "quoted":
                consts = 8.0 * self.coefs * self.alphas
                notes.append("using quoted constants")
            else:
                consts = (np.ceil(self.alphas - 1.0) + 5.0) * self.coefs * self.alphas
                notes.append("quoted exponents with proved constants")
        else:
            raise ConfigurationError(f"unknown metadata variant {variant!r}", "potential.metadata")
        ell = float(powers.max())
        consts = np.where(powers < ell, 3.0 * consts, consts)
        a_N = self.coefs[-1] * self.alphas[-1]
        hexps = self.alphas - 2.0
        hconsts = self.coefs * (self.alphas - 1.0 + (self.alphas - 2.0) * 2.0 ** (6.0 - self.alphas))
        return RegularityMeta(
            smooth_exponents=tuple(exps),
            smooth_consts=tuple(consts),
            local_power=ell,
            dissipativity=(float(self.alphas[-1]), float(a_N), 0.0),
            hessian_exponents=tuple(hexps),
            hessian_consts=tuple(hconsts),
            hessian_local_power=0.0,
            notes=tuple(notes),
        )

    def _powers(self, r, shift):
        # r^(alpha_i - shift) per term, with 0 at r == 0 (canonical choice at the origin).
        r = np.asarray(r)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, r ** (self.alphas - shift), 0.0)
        return out

    def _energy(self, x):
        r = _norm(x)
        return np.sum(self.coefs * r[..., None] ** self.alphas, axis=-1)

    def _grad(self, x):
        r = _norm(x)
        coef = np.sum(self.coefs * self.alphas * self._powers(r, 2.0), axis=-1)
        return coef[..., None] * x

    def _hessian_vec(self, x, v):
        r = _norm(x)
        radial = np.sum(self.coefs * self.alphas * self._powers(r, 2.0), axis=-1)
        cross = np.sum(self.coefs * self.alphas * (self.alphas - 2.0) * self._powers(r, 4.0), axis=-1)
        xv = np.sum(x * v, axis=-1)
        return radial[..., None] * v + (cross * xv)[..., None] * x

    def kernel_spec(self):
        return 2, self.coefs.copy(), self.alphas.copy()

    def describe(self):
        return {"name": self.name, "dim": self.dim, "terms": [list(t) for t in self.terms],
                "metadata": self.metadata}


class LinearTailPotential(PotentialSpec):
    """``U(x) = sum_i (1 + ||x||^{1+alpha_i})^{1/(1+alpha_i)}`` with ``alpha_i >= 1``.

    Gradient norm is at most the number of terms and the Hessian operator
    norm is at most ``sum_i alpha_i``.
    """

    name = "linear_tail"

    def __init__(self, alphas: Sequence = (1.0,), dim: int = 1, regularity=None):
        alphas = sorted(float(a) for a in alphas)
        if not alphas or alphas[0] < 1.0:
            raise ConfigurationError("linear-tail exponents must be >= 1", "potential.alphas")
        self.alphas = np.array(alphas)
        if regularity is None:
            h_sup = float(self.alphas.sum())
            regularity = RegularityMeta(
                smooth_exponents=(1.0,),
                smooth_consts=(h_sup,),
                local_power=0.0,
                dissipativity=(1.0, 1.0, 1.0),
                # bounded Hessian: ||H(x) - H(y)|| <= 2 sup ||H||, exponent 0
                hessian_exponents=(0.0,),
                hessian_consts=(2.0 * h_sup,),
                hessian_local_power=0.0,
            )
        super().__init__(dim, regularity)

    def _energy(self, x):
        r = _norm(x)[..., None]
        q = 1.0 + self.alphas
        return np.sum((1.0 + r ** q) ** (1.0 / q), axis=-1)

    def _radial(self, r):
        # u'(r)/r and u''(r) per term
        r = np.asarray(r)[..., None]
        q = 1.0 + self.alphas
        base = 1.0 + r ** q
        with np.errstate(divide="ignore", invalid="ignore"):
            rp = np.where(r > 0, r ** (self.alphas - 1.0), np.where(self.alphas == 1.0, 1.0, 0.0))
        d1 = base ** (-self.alphas / q) * rp
        d2 = self.alphas * rp * base ** (1.0 / q - 2.0)
        return d1, d2

    def _grad(self, x):
        d1, _ = self._radial(_norm(x))
        return np.sum(d1, axis=-1)[..., None] * x

    def _hessian_vec(self, x, v):
        r = _norm(x)
        d1, d2 = self._radial(r)
        d1 = np.sum(d1, axis=-1)
        d2 = np.sum(d2, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(r[..., None] > 0, x / r[..., None], 0.0)
        proj = np.sum(unit * v, axis=-1)
        # at the origin both curvatures coincide, so the split is immaterial
        return d1[..., None] * v + ((d2 - d1) * proj)[..., None] * unit

    def kernel_spec(self):
        return 3, np.zeros(0), self.alphas.copy()

    def describe(self):
        return {"name": self.name, "dim": self.dim, "alphas": self.alphas.tolist()}


POTENTIALS = {
    "quadratic": QuadraticPotential,
    "mixture_norm": MixtureNormPotential,
    "linear_tail": LinearTailPotential,
    "flat": FlatPotential,
}


def make_potential(name: str, dim: int, **params) -> PotentialSpec:
    """Build a shipped potential by its config name."""
    try:
        cls = POTENTIALS[name]
    except KeyError:
        raise ConfigurationError(f"unknown potential {name!r}; choose from {sorted(POTENTIALS)}",
                                 "potential.name") from None
    return cls(dim=dim, **params)


def eval_grad(p: PotentialSpec, x):
    """Return ``(U(x), grad U(x))`` for a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != p.dim:
        raise DimensionError(f"point must have shape ({p.dim},), got {x.shape}")
    return float(p.energy(x)), p.grad(x)


# ---------------------------------------------------------------------------
# bounds derived from the regularity metadata


def mixture_smooth_rhs(meta: RegularityMeta, x, y):
    """Right-hand side of the mixture locally-smooth inequality for point pairs."""
    nx, ny = _norm(np.asarray(x)), _norm(np.asarray(y))
    dist = _norm(np.asarray(x) - np.asarray(y))
    ell = meta.local_power
    local = 1.0 + nx ** ell + ny ** ell
    exps = np.array(meta.smooth_exponents)
    consts = np.array(meta.smooth_consts)
    return local * np.sum(consts * dist[..., None] ** exps, axis=-1)


def gradient_growth_bound(meta: RegularityMeta, x):
    """``2 N L_G (1 + ||x||^{ell_G + alpha_GN})``, valid when grad U(0) = 0."""
    r = _norm(np.asarray(x))
    return 2.0 * meta.n_terms * meta.L_G * (1.0 + r ** (meta.local_power + meta.alpha_GN))


def descent_remainder_bound(meta: RegularityMeta, x, y):
    """Bound on ``U(y) - U(x) - <grad U(x), y - x>``.

    ``(2 L_G / (1 + alpha_G)) (1 + ||x||^l + ||y||^l) sum_i ||x - y||^{1 + alpha_i}``.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    nx, ny = _norm(x), _norm(y)
    dist = _norm(x - y)
    ell = meta.local_power
    exps = np.array(meta.smooth_exponents)
    total = np.sum(dist[..., None] ** (1.0 + exps), axis=-1)
    return 2.0 * meta.L_G / (1.0 + meta.alpha_G) * (1.0 + nx ** ell + ny ** ell) * total


# ---------------------------------------------------------------------------
# certifiers


@dataclass
class CertificateReport:
    """Outcome of a statistical certification run.

    ``worst_slack`` is ``min(rhs - lhs)`` over all trials (negative means a
    violation); ``worst_ratio`` is ``max(lhs / rhs)``.  ``witness`` holds the
    violating points of the worst trial when the check fails.
    """

    check: str
    passed: bool
    trials: int
    worst_slack: float
    worst_ratio: float
    tolerance: float
    witness: Optional[dict] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "check": self.check,
            "passed": bool(self.passed),
            "trials": int(self.trials),
            "worst_slack": float(self.worst_slack),
            "worst_ratio": float(self.worst_ratio),
            "tolerance": float(self.tolerance),
            "notes": list(self.notes),
        }
        if self.witness is not None:
            out["witness"] = {k: np.asarray(v).tolist() for k, v in self.witness.items()}
        return out


def _require_meta(p: PotentialSpec) -> RegularityMeta:
    if p.regularity is None:
        raise ConfigurationError(f"{p.name} potential has no regularity metadata", "potential.regularity")
    return p.regularity


def _ball_points(rng, n, dim, radius):
    """Uniform in the ball for 80% of draws, the outer shell [0.9, 1] * radius for the rest."""
    direction = rng.standard_normal((n, dim))
    direction /= np.maximum(_norm(direction), 1e-300)[:, None]
    n_shell = n // 5
    radii = np.empty(n)
    radii[: n - n_shell] = radius * rng.random(n - n_shell) ** (1.0 / dim)
    radii[n - n_shell:] = radius * rng.uniform(0.9, 1.0, n_shell)
    perm = rng.permutation(n)
    return direction * radii[perm][:, None]


def _point_pairs(rng, n, dim, radius):
    x = _ball_points(rng, n, dim, radius)
    y = _ball_points(rng, n, dim, radius)
    # a fifth of the pairs are near neighbours to probe the Hoelder exponent at small scales
    n_near = n // 5
    if n_near:
        step = rng.standard_normal((n_near, dim))
        step /= np.maximum(_norm(step), 1e-300)[:, None]
        scale = radius * 10.0 ** rng.uniform(-6.0, 0.0, n_near)
        y[:n_near] = x[:n_near] + step * scale[:, None]
    return x, y


def _finish(check, lhs, rhs, tol, trials, witness_fn, notes, lower=False):
    """Compare lhs <= rhs (or lhs >= rhs when ``lower``) with relative tolerance."""
    if lower:
        slack = lhs - rhs
        allowed = -tol * (1.0 + np.abs(rhs))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(lhs > 0, rhs / lhs, np.where(rhs > 0, np.inf, 0.0))
    else:
        slack = rhs - lhs
        allowed = -tol * (1.0 + np.abs(rhs))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    violated = slack < allowed
    worst = int(np.argmin(slack))
    passed = not bool(np.any(violated))
    witness = None if passed else witness_fn(int(np.flatnonzero(violated)[np.argmin(slack[violated])]))
    return CertificateReport(
        check=check,
        passed=passed,
        trials=trials,
        worst_slack=float(slack[worst]),
        worst_ratio=float(np.max(ratio)),
        tolerance=tol,
        witness=witness,
        notes=list(notes),
    )


def certify_mixture_smooth(p: PotentialSpec, trials: int = 10_000, radius: float = 10.0,
                           rng_seed=0, meta: Optional[RegularityMeta] = None) -> CertificateReport:
    """Check ``||grad U(x) - grad U(y)|| <= (1 + ||x||^l + ||y||^l) sum_i L_i ||x - y||^{a_i}``."""
    meta = meta or _require_meta(p)
    if trials < 1:
        raise ConfigurationError("trials must be >= 1", "trials")
    rng = np.random.default_rng(rng_seed)
    x, y = _point_pairs(rng, trials, p.dim, radius)
    lhs = _norm(p.grad(x) - p.grad(y))
    rhs = mixture_smooth_rhs(meta, x, y)
    return _finish("mixture_smooth", lhs, rhs, CERT_TOL, trials,
                   lambda i: {"x": x[i], "y": y[i], "lhs": lhs[i], "rhs": rhs[i]}, meta.notes)


def certify_dissipative(p: PotentialSpec, trials: int = 10_000, radius_max: float = 10.0,
                        rng_seed=0, meta: Optional[RegularityMeta] = None) -> CertificateReport:
    """Check ``<grad U(x), x> >= a ||x||^beta - b`` on points up to ``radius_max``."""
    meta = meta or _require_meta(p)
    if trials < 1:
        raise ConfigurationError("trials must be >= 1", "trials")
    beta, a, b = meta.dissipativity
    rng = np.random.default_rng(rng_seed)
    x = _ball_points(rng, trials, p.dim, radius_max)
    lhs = np.sum(p.grad(x) * x, axis=-1)
    rhs = a * _norm(x) ** beta - b
    return _finish("dissipative", lhs, rhs, CERT_TOL, trials,
                   lambda i: {"x": x[i], "lhs": lhs[i], "rhs": rhs[i]}, (), lower=True)


def _fd_hessian_vec(p, x, v, h=FD_HESSIAN_STEP):
    return (p.grad(x + h * v) - p.grad(x - h * v)) / (2.0 * h)


def certify_hessian_smooth(p: PotentialSpec, trials: int = 10_000, radius: float = 10.0,
                           rng_seed=0, meta: Optional[RegularityMeta] = None,
                           finite_difference: Optional[bool] = None) -> CertificateReport:
    """Check the mixture Hessian locally-smooth bound along random unit directions.

    Random directions only lower-bound the operator norm, so a pass is
    evidence, not proof.  Without an analytic Hessian action (or with
    ``finite_difference=True``) the action is a central difference of the
    gradient and the tolerance widens to ``1e-3``.
    """
    meta = meta or _require_meta(p)
    if not meta.has_hessian:
        raise ConfigurationError(f"{p.name} potential declares no Hessian constants", "potential.regularity")
    if finite_difference is None:
        finite_difference = not p.has_hessian
    elif not finite_difference and not p.has_hessian:
        raise CapabilityError(f"{p.name} potential has no Hessian action")
    rng = np.random.default_rng(rng_seed)
    x, y = _point_pairs(rng, trials, p.dim, radius)
    v = rng.standard_normal((trials, p.dim))
    v /= np.maximum(_norm(v), 1e-300)[:, None]
    if finite_difference:
        hx, hy = _fd_hessian_vec(p, x, v), _fd_hessian_vec(p, y, v)
        tol = FD_CERT_TOL
    else:
        hx, hy = p.hessian_vec(x, v), p.hessian_vec(y, v)
        tol = CERT_TOL
    lhs = _norm(hx - hy)
    ell = meta.hessian_local_power
    dist = _norm(x - y)
    local = 1.0 + _norm(x) ** ell + _norm(y) ** ell
    rhs = local * np.sum(np.array(meta.hessian_consts) * dist[:, None] ** np.array(meta.hessian_exponents), axis=-1)
    notes = list(meta.notes)
    notes.append("operator norm probed along random directions (lower bound)")
    if finite_difference:
        notes.append(f"finite-difference Hessian action, step {FD_HESSIAN_STEP:g}")
    return _finish("hessian_smooth", lhs, rhs, tol, trials,
                   lambda i: {"x": x[i], "y": y[i], "v": v[i], "lhs": lhs[i], "rhs": rhs[i]}, notes)
