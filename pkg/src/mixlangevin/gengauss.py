"""The p-generalized Gaussian ``N_p(0, I_d)`` and the smoothing built on it.

Coordinates are i.i.d. with density proportional to ``exp(-|z|^p / p)``.
Draws use the exact transform ``z = sign * (p G)^{1/p}``, ``G ~ Gamma(1/p, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import gammaln

from .errors import ConfigurationError
from .potentials import PotentialSpec, RegularityMeta

__all__ = [
    "GenGaussSampler",
    "SmoothingConfig",
    "Kappa",
    "MomentCheck",
    "kappa",
    "pnorm_moment",
    "rising_moment_identity",
    "moment_pnorm",
    "smoothed_potential",
    "smoothed_gradient",
    "stochastic_gradient",
    "smoothing_value_bound",
    "smoothing_grad_bound",
    "stochastic_variance_bound",
    "smoothing_constants",
]

DEFAULT_MC_SAMPLES = 1024


class GenGaussSampler:
    """Seeded sampler for ``N_p(0, I_d)``.

    Magnitudes and signs come from two independent child streams, so
    ``n`` calls of ``sample(1)`` return exactly the rows of one
    ``sample(n)`` call.
    """

    def __init__(self, p: float, dim: int, seed=None):
        p = float(p)
        if not p > 1.0:
            raise ConfigurationError(f"shape p must exceed 1, got {p}", "smoothing.p")
        if int(dim) != dim or dim < 1:
            raise ConfigurationError("dimension must be a positive integer", "dim")
        self.p = p
        self.dim = int(dim)
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.seed_sequence = ss
        mag, sign = ss.spawn(2)
        self._mag = np.random.Generator(np.random.PCG64(mag))
        self._sign = np.random.Generator(np.random.PCG64(sign))

    @classmethod
    def stream(cls, p, dim, seed: int, index: int) -> "GenGaussSampler":
        """Independent sampler for stream ``index`` of master ``seed``."""
        return cls(p, dim, np.random.SeedSequence(seed, spawn_key=(int(index),)))

    def sample(self, n: int = 1, out=None):
        if n < 1:
            raise ConfigurationError("n must be >= 1", "n")
        shape = (int(n), self.dim)
        g = self._mag.standard_gamma(1.0 / self.p, size=shape)
        u = self._sign.random(size=shape)
        z = (self.p * g) ** (1.0 / self.p)
        z = np.where(u < 0.5, -z, z)
        if out is not None:
            out[...] = z
            return out
        return z


@dataclass(frozen=True)
class SmoothingConfig:
    mu: float
    p: float = 2.0
    mc_samples: int = DEFAULT_MC_SAMPLES

    def __post_init__(self):
        if not self.mu >= 0:
            raise ConfigurationError("mu must be >= 0", "smoothing.mu")
        if not self.p > 1:
            raise ConfigurationError("p must exceed 1", "smoothing.p")
        if int(self.mc_samples) < 1:
            raise ConfigurationError("mc_samples must be >= 1", "smoothing.mc_samples")


class Kappa(NamedTuple):
    value: float
    log_value: float
    overflow: bool


def kappa(p: float, d: int) -> Kappa:
    """Normalising constant ``int exp(-||xi||_p^p / p) dxi = 2^d Gamma(1/p)^d / p^{d - d/p}``."""
    if not p > 1:
        raise ConfigurationError("p must exceed 1", "p")
    if d < 1:
        raise ConfigurationError("d must be >= 1", "d")
    log_k = d * (math.log(2.0) + gammaln(1.0 / p)) - (d - d / p) * math.log(p)
    overflow = log_k > math.log(np.finfo(float).max)
    return Kappa(math.inf if overflow else math.exp(log_k), float(log_k), bool(overflow))


def pnorm_moment(p: float, d: int, n: float) -> float:
    """Exact ``E ||xi||_p^n`` for ``xi ~ N_p(0, I_d)``.

    ``||xi||_p^p / p`` is ``Gamma(d/p, 1)``, hence
    ``E ||xi||_p^n = p^{n/p} Gamma((d + n)/p) / Gamma(d/p)``.
    """
    return float(np.exp(n / p * np.log(p) + gammaln((d + n) / p) - gammaln(d / p)))


def rising_moment_identity(d: int, k: int) -> float:
    """The rising product ``d (d+1) ... (d+k-1)`` claimed for ``E ||xi||_p^{kp}``."""
    return float(np.prod(np.arange(d, d + k, dtype=float)))


@dataclass
class MomentCheck:
    estimate: float
    stderr: float
    lower: float
    upper: float
    bracket_ok: bool
    exact: float
    identity: Optional[float] = None
    identity_ok: Optional[bool] = None


def moment_pnorm(g: GenGaussSampler, n: float, mc_samples: int = 100_000, z: float = 3.0) -> MomentCheck:
    """Monte Carlo ``E ||xi||_p^n`` with the bracket and rising-product checks.

    The bracket is ``d^{floor(n/p)} <= E <= (d + n/2)^{n/p}``; when ``n`` is an
    integer multiple ``k p`` the estimate is also compared to
    ``d (d+1) ... (d+k-1)``.  Both verdicts allow ``z`` standard errors.
    """
    if not n >= 2:
        raise ConfigurationError("moment order n must be >= 2", "n")
    d, p = g.dim, g.p
    xi = g.sample(mc_samples)
    vals = np.sum(np.abs(xi) ** p, axis=1) ** (n / p)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(mc_samples))
    lower = float(d ** math.floor(n / p + 1e-12))
    upper = float((d + n / 2.0) ** (n / p))
    bracket_ok = (est + z * se >= lower) and (est - z * se <= upper)
    k = n / p
    identity = identity_ok = None
    if abs(k - round(k)) < 1e-12 and round(k) >= 1:
        identity = rising_moment_identity(d, int(round(k)))
        identity_ok = abs(est - identity) <= z * se
    return MomentCheck(est, se, lower, upper, bool(bracket_ok), pnorm_moment(p, d, n), identity, identity_ok)


def _sampler_for(cfg: SmoothingConfig, dim: int, rng) -> GenGaussSampler:
    if isinstance(rng, GenGaussSampler):
        if rng.p != cfg.p or rng.dim != dim:
            raise ConfigurationError("sampler shape or dimension does not match the smoothing config")
        return rng
    return GenGaussSampler(cfg.p, dim, rng)


def smoothed_potential(u: PotentialSpec, cfg: SmoothingConfig, x, rng=None):
    """Monte Carlo ``U_mu(x) = E U(x + mu xi)``; returns ``(estimate, stderr)``."""
    x = np.asarray(x, dtype=float)
    if cfg.mu == 0:
        return float(u.energy(x)), 0.0
    xi = _sampler_for(cfg, u.dim, rng).sample(cfg.mc_samples)
    vals = u.energy(x + cfg.mu * xi)
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(vals.mean()), se


def smoothed_gradient(u: PotentialSpec, cfg: SmoothingConfig, x, rng=None):
    """Monte Carlo ``grad U_mu(x)``; returns ``(estimate, covariance trace)``.

    The standard error of the estimate's norm is ``sqrt(trace / mc_samples)``.
    """
    x = np.asarray(x, dtype=float)
    if cfg.mu == 0:
        return u.grad(x), 0.0
    xi = _sampler_for(cfg, u.dim, rng).sample(cfg.mc_samples)
    g = u.grad(x + cfg.mu * xi)
    mean = g.mean(axis=0)
    trace = float(np.sum(g.var(axis=0, ddof=1))) if len(g) > 1 else 0.0
    return mean, trace


def stochastic_gradient(u: PotentialSpec, cfg: SmoothingConfig, x, rng=None, size: Optional[int] = None):
    """One draw of ``g_mu(x, xi) = grad U(x + mu xi)``, unbiased for ``grad U_mu(x)``.

    With ``size`` the result stacks ``size`` independent draws, identical to
    as many single calls on the same sampler.
    """
    x = np.asarray(x, dtype=float)
    if cfg.mu == 0:
        g = u.grad(x)
        return g if size is None else np.broadcast_to(g, (int(size),) + g.shape).copy()
    xi = _sampler_for(cfg, u.dim, rng).sample(1 if size is None else size)
    g = u.grad(x + cfg.mu * xi)
    return g[0] if size is None else g


# ---------------------------------------------------------------------------
# smoothing error bounds (weakly smooth case; L = max(1, max L_i))


def smoothing_constants(meta: RegularityMeta):
    """``(N, L, alpha)`` entering the smoothing bounds."""
    return meta.n_terms, max(1.0, meta.L_G), meta.alpha_G


def smoothing_value_bound(N, L, alpha, mu, d, p) -> float:
    """``|U_mu(x) - U(x)| <= N L mu^{1+alpha} / (1+alpha) * d^{2 / min(2, p)}``."""
    return N * L * mu ** (1 + alpha) / (1 + alpha) * d ** (2.0 / min(2.0, p))


def smoothing_grad_bound(N, L, alpha, mu, d, p) -> float:
    """``||grad U_mu - grad U||`` bound: dimension factor ``d^{3/p}`` for p <= 2, ``d^{5/2}`` above."""
    factor = d ** (3.0 / p) if p <= 2 else d ** 2.5
    return N * L * mu ** (1 + alpha) / (1 + alpha) * factor


def stochastic_variance_bound(N, L, alpha, mu, d, p) -> float:
    """``Var[g_mu] <= 4 N^2 L^2 mu^{2 alpha} d^{2 alpha / p}``."""
    return 4.0 * N ** 2 * L ** 2 * mu ** (2 * alpha) * d ** (2 * alpha / p)
