"""Reference densities, divergence estimators and metric inequality verdicts.

Grid references live on a uniform cell grid (midpoint rule) in one or two
dimensions; Gaussian references are closed form.  Histogram estimators use
bins that are unions of reference cells, so bin masses of the reference are
exact sums of cell masses.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaincc, gammaln, logsumexp
from scipy.stats import norm

from .errors import ConfigurationError, DimensionError, InsufficientDataError, ReferenceBoundsError
from .potentials import PotentialSpec
from .sampler.chain import EnsembleResult, HistogramSpec

__all__ = [
    "ReferenceDensity",
    "GaussianMoments",
    "Histogram",
    "Estimate",
    "Verdict",
    "MetricReport",
    "build_reference",
    "gaussian_reference",
    "brownian_reference",
    "gaussian_kl",
    "estimate_kl",
    "estimate_tv",
    "wasserstein_beta",
    "pinsker_check",
    "bolley_villani_bound",
    "bolley_villani_check",
    "tail_mass_bound",
    "default_bins",
]

TAIL_MASS_MAX = 1e-6
NORMALIZER_RTOL = 1e-6
MIN_SAMPLES = 100
MAX_ASSIGNMENT = 2048
BIN_RANGE = (64, 1024)


class Estimate(tuple):
    """``(value, stderr)`` pair that also carries the method and notes."""

    def __new__(cls, value, stderr, method="", **info):
        self = super().__new__(cls, (float(value), float(stderr)))
        self.method = method
        self.info = info
        return self

    @property
    def value(self) -> float:
        return self[0]

    @property
    def stderr(self) -> float:
        return self[1]


# ---------------------------------------------------------------------------
# reference densities


@dataclass
class ReferenceDensity:
    """Normalised target density on a grid (``dim <= 2``) or in closed Gaussian form.

    For grids, ``log_density`` holds ``log pi`` at cell midpoints and is
    normalised so that the cell masses sum to one.
    """

    kind: str
    dim: int
    bounds: Optional[tuple] = None
    resolution: Optional[tuple] = None
    log_density: Optional[np.ndarray] = None
    log_normalizer: Optional[float] = None
    mean: Optional[np.ndarray] = None
    cov: Optional[np.ndarray] = None
    tail_mass: float = 0.0
    normalizer_rel_change: float = 0.0
    label: str = ""

    @property
    def cell_width(self) -> np.ndarray:
        return np.array([(hi - lo) / n for (lo, hi), n in zip(self.bounds, self.resolution)])

    def edges(self):
        return [np.linspace(lo, hi, n + 1) for (lo, hi), n in zip(self.bounds, self.resolution)]

    def centers(self):
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges()]

    def log_cell_masses(self) -> np.ndarray:
        return self.log_density + float(np.sum(np.log(self.cell_width)))

    def cell_masses(self) -> np.ndarray:
        return np.exp(self.log_cell_masses())

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dim:
            raise DimensionError(f"points must have {self.dim} coordinates")
        if self.kind == "gaussian":
            diff = x - self.mean
            prec = np.linalg.inv(self.cov)
            _, logdet = np.linalg.slogdet(self.cov)
            q = np.einsum("ni,ij,nj->n", diff, prec, diff)
            return np.exp(-0.5 * (q + logdet + self.dim * math.log(2 * math.pi)))
        idx = self._cell_index(x)
        out = np.exp(self.log_density[tuple(idx.T)])
        inside = np.all([(x[:, j] >= lo) & (x[:, j] <= hi) for j, (lo, hi) in enumerate(self.bounds)], axis=0)
        return np.where(inside, out, 0.0)

    def _cell_index(self, x):
        lo = np.array([b[0] for b in self.bounds])
        idx = np.floor((x - lo) / self.cell_width).astype(np.int64)
        return np.clip(idx, 0, np.array(self.resolution) - 1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """I.i.d. draws: closed form for Gaussians, else categorical cell plus uniform jitter."""
        if self.kind == "gaussian":
            return rng.multivariate_normal(self.mean, self.cov, size=n, method="cholesky")
        p = self.cell_masses().ravel()
        p = p / p.sum()
        if self.dim == 1:
            # inverse CDF of the piecewise-constant density
            cdf = np.concatenate([[0.0], np.cumsum(p)])
            cdf /= cdf[-1]
            u = rng.random(n)
            i = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(p) - 1)
            frac = (u - cdf[i]) / np.maximum(cdf[i + 1] - cdf[i], 1e-300)
            return (self.bounds[0][0] + (i + frac) * self.cell_width[0])[:, None]
        flat = rng.choice(len(p), size=n, p=p)
        idx = np.stack(np.unravel_index(flat, self.resolution), axis=1)
        lo = np.array([b[0] for b in self.bounds])
        return lo + (idx + rng.random((n, self.dim))) * self.cell_width

    def rasterize(self, bounds=None, resolution=None) -> "ReferenceDensity":
        """Grid version of a Gaussian reference (``dim <= 2``)."""
        if self.kind == "grid":
            return self
        if self.dim > 2:
            raise DimensionError("grid references support at most two dimensions")
        sd = np.sqrt(np.diag(self.cov))
        if bounds is None:
            bounds = tuple((float(m - 10 * s), float(m + 10 * s)) for m, s in zip(self.mean, sd))
        bounds = _normalise_bounds(bounds, self.dim)
        res = _normalise_resolution(resolution or (4096 if self.dim == 1 else 512), self.dim)
        pts = _grid_points(bounds, res)
        logp = np.log(np.maximum(self.pdf(pts.reshape(-1, self.dim)), 1e-300)).reshape(res)
        width = np.array([(hi - lo) / n for (lo, hi), n in zip(bounds, res)])
        shift = logsumexp(logp) + float(np.sum(np.log(width)))
        # union bound over axes of the Gaussian mass outside the box
        tail = sum(norm.sf(-(lo - m) / s) + norm.sf((hi - m) / s)
                   for (lo, hi), m, s in zip(bounds, self.mean, sd))
        return ReferenceDensity("grid", self.dim, bounds, res, logp - shift, float(shift),
                                mean=self.mean, cov=self.cov, tail_mass=float(tail),
                                label=self.label + " (rasterized)")

    def histogram_spec(self, bins=None, n_samples=None, groups: int = 16) -> HistogramSpec:
        """Histogram layout whose bins are unions of this grid's cells."""
        grid = self.rasterize()
        nb = []
        for j, res in enumerate(grid.resolution):
            target = default_bins(n_samples) if bins is None else int(np.atleast_1d(bins)[min(j, np.size(bins) - 1)])
            nb.append(res // _aggregate_factor(res, target))
        width = tuple(float(w * (r // n)) for w, r, n in zip(grid.cell_width, grid.resolution, nb))
        return HistogramSpec(lo=tuple(b[0] for b in grid.bounds), width=width, nbins=tuple(nb), groups=groups)

    def log_bin_masses(self, spec: HistogramSpec) -> np.ndarray:
        grid = self.rasterize()
        lc = grid.log_cell_masses()
        shape = []
        for res, n in zip(grid.resolution, spec.nbins):
            if res % n:
                raise ConfigurationError("histogram bins are not aligned with the reference grid")
            shape += [n, res // n]
        lc = lc.reshape(shape)
        axes = tuple(range(1, 2 * len(spec.nbins), 2))
        out = logsumexp(lc, axis=axes)
        return out[:, None] if grid.dim == 1 else out

    def describe(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "label": self.label}
        if self.kind == "grid":
            out.update(bounds=[list(b) for b in self.bounds], resolution=list(self.resolution),
                       log_normalizer=self.log_normalizer, tail_mass_bound=self.tail_mass,
                       normalizer_rel_change=self.normalizer_rel_change)
        else:
            out.update(mean=self.mean.tolist(), cov=self.cov.tolist())
        return out


def _normalise_bounds(bounds, dim):
    if np.isscalar(bounds):
        b = abs(float(bounds))
        return tuple((-b, b) for _ in range(dim))
    bounds = [tuple(float(v) for v in b) for b in bounds]
    if len(bounds) == 1 and dim > 1:
        bounds = bounds * dim
    if len(bounds) != dim or any(lo >= hi for lo, hi in bounds):
        raise ConfigurationError("bounds must give lo < hi for every axis", "reference.bounds")
    return tuple(bounds)


def _normalise_resolution(res, dim):
    res = tuple(int(r) for r in np.atleast_1d(res))
    if len(res) == 1:
        res = res * dim
    if len(res) != dim or any(r < 2 for r in res):
        raise ConfigurationError("resolution must be >= 2 per axis", "reference.resolution")
    return res


def _grid_points(bounds, res):
    axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for (lo, hi), n in zip(bounds, res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def _grid_log_z(u, bounds, res):
    pts = _grid_points(bounds, res)
    logp = -u.energy(pts.reshape(-1, u.dim)).reshape(res)
    width = [(hi - lo) / n for (lo, hi), n in zip(bounds, res)]
    return logp, float(logsumexp(logp) + np.sum(np.log(width)))


def tail_mass_bound(u: PotentialSpec, radius: float, log_z: float) -> float:
    """Upper bound on ``nu(||x|| > radius)`` from the dissipativity lower bound on ``U``.

    Uses ``U(x) >= (a / 2 beta) ||x||^beta + U(0) - C`` with
    ``C = (L / (1 + alpha)) sum_i R^{1 + alpha_i} + b / beta`` and
    ``R = (2 b / a)^{1/beta}``; the radial integral is an incomplete gamma.
    """
    meta = u.regularity
    if meta is None:
        raise ConfigurationError("tail bound needs dissipativity constants", "potential")
    beta, a, b = meta.dissipativity
    d = u.dim
    R = (2.0 * b / a) ** (1.0 / beta)
    exps = np.array(meta.smooth_exponents)
    C = meta.L_G / (1.0 + exps.min()) * float(np.sum(R ** (1.0 + exps))) + b / beta
    u0 = float(u.energy(np.zeros(d)))
    c = a / (2.0 * beta)
    q = gammaincc(d / beta, c * radius ** beta) if radius > 0 else 1.0
    if q <= 0.0:
        return 0.0
    log_sphere = math.log(2.0) + (d / 2.0) * math.log(math.pi) - gammaln(d / 2.0)
    log_tail = (-u0 + C + log_sphere - math.log(beta) - (d / beta) * math.log(c)
                + gammaln(d / beta) + math.log(q) - log_z)
    return float(math.exp(min(log_tail, 700.0)))


def build_reference(u: PotentialSpec, bounds=10.0, resolution=None) -> ReferenceDensity:
    """Grid reference for ``exp(-U)`` in one or two dimensions.

    The normaliser is recomputed at twice the resolution and must agree to
    ``1e-6`` relative; the mass outside the largest centred ball inside the
    box is bounded through the dissipativity constants and must stay below
    ``1e-6``.
    """
    if u.dim > 2:
        raise DimensionError(f"grid references support dim <= 2, got {u.dim}; use a Gaussian reference")
    bounds = _normalise_bounds(bounds, u.dim)
    res = _normalise_resolution(resolution or (4096 if u.dim == 1 else 512), u.dim)
    logp, log_z = _grid_log_z(u, bounds, res)
    _, log_z2 = _grid_log_z(u, bounds, tuple(2 * r for r in res))
    rel = abs(math.expm1(log_z - log_z2))
    if rel > NORMALIZER_RTOL:
        raise ConfigurationError(
            f"normaliser changes by {rel:.2e} when the grid is refined; increase the resolution",
            "reference.resolution")
    radius = min(min(-lo, hi) for lo, hi in bounds)
    tail = tail_mass_bound(u, max(radius, 0.0), log_z) if u.regularity is not None else 0.0
    if tail > TAIL_MASS_MAX:
        r = max(radius, 1.0)
        while tail_mass_bound(u, r, log_z) > 0.1 * TAIL_MASS_MAX and r < 1e6:
            r *= 1.25
        suggested = tuple((-r, r) for _ in range(u.dim))
        raise ReferenceBoundsError(
            f"tail mass outside the grid may reach {tail:.3g} (> {TAIL_MASS_MAX:g}); enlarge the bounds "
            f"to about +/-{r:.3g}", tail_mass=tail, suggested_bounds=suggested)
    logd = logp - log_z
    return ReferenceDensity("grid", u.dim, bounds, res, logd, log_z, tail_mass=tail,
                            normalizer_rel_change=rel, label=u.name)


def gaussian_reference(mean, cov, label="gaussian") -> ReferenceDensity:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise DimensionError("covariance shape does not match the mean")
    np.linalg.cholesky(cov)  # must be positive definite
    return ReferenceDensity("gaussian", mean.size, mean=mean, cov=cov, label=label)


def brownian_reference(init_mean, init_cov, total_time: float) -> ReferenceDensity:
    """Law of ``x_0 + sqrt(2 t) N(0, I)`` for a Gaussian ``x_0``: ULA on a flat potential."""
    init_cov = np.atleast_2d(np.asarray(init_cov, dtype=float))
    d = init_cov.shape[0]
    return gaussian_reference(init_mean, init_cov + 2.0 * total_time * np.eye(d), label="brownian")


# ---------------------------------------------------------------------------
# sample summaries


@dataclass
class GaussianMoments:
    """First two moments of a sample, optionally split into groups for bootstrap."""

    mean: np.ndarray
    cov: np.ndarray
    n: float
    group_sum: Optional[np.ndarray] = None
    group_cross: Optional[np.ndarray] = None
    group_n: Optional[np.ndarray] = None

    @classmethod
    def from_sums(cls, s, cross, n, group_sum=None, group_cross=None, group_n=None):
        mean = s / n
        cov = (cross - n * np.outer(mean, mean)) / (n - 1.0)
        return cls(mean, cov, float(n), group_sum, group_cross, group_n)

    @classmethod
    def from_samples(cls, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return cls(x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False)), float(len(x)))

    @classmethod
    def from_ensemble(cls, res: EnsembleResult, groups: int = 16):
        """Pooled post-burn-in moments; groups are chains with equal index mod ``groups``."""
        g = np.arange(res.chains) % groups
        gs = np.stack([res.tail_sum[g == i].sum(axis=0) for i in range(groups)])
        gc = np.stack([res.tail_cross[g == i].sum(axis=0) for i in range(groups)])
        gn = np.array([res.tail_n[g == i].sum() for i in range(groups)], dtype=float)
        if gn.sum() < 2:
            raise InsufficientDataError("no post-burn-in samples recorded")
        return cls.from_sums(gs.sum(axis=0), gc.sum(axis=0), gn.sum(), gs, gc, gn)


@dataclass
class Histogram:
    """Counts on a ``HistogramSpec`` layout, shape ``(groups, nb0, nb1)``."""

    counts: np.ndarray
    spec: HistogramSpec

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_samples(cls, x, spec: HistogramSpec):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        counts = spec.empty_counts()
        idx = np.floor((x - np.array(spec.lo)) / np.array(spec.width)).astype(np.int64)
        idx = np.clip(idx, 0, np.array(spec.nbins) - 1)
        grp = np.arange(len(x)) % spec.groups
        if x.shape[1] == 1:
            np.add.at(counts, (grp, idx[:, 0], 0), 1)
        else:
            np.add.at(counts, (grp, idx[:, 0], idx[:, 1]), 1)
        return cls(counts, spec)


def default_bins(n_samples) -> int:
    """``ceil(M^{1/3})`` clamped to ``[64, 1024]``."""
    if n_samples is None:
        return BIN_RANGE[0]
    return int(min(max(math.ceil(n_samples ** (1.0 / 3.0) - 1e-9), BIN_RANGE[0]), BIN_RANGE[1]))


def _aggregate_factor(res: int, target: int) -> int:
    """Divisor ``f`` of ``res`` making ``res / f`` closest to ``target``."""
    divisors = [f for f in range(1, res + 1) if res % f == 0]
    return min(divisors, key=lambda f: (abs(math.log(res / f) - math.log(max(target, 1))), f))


# ---------------------------------------------------------------------------
# estimators


def gaussian_kl(m1, c1, m0, c0) -> float:
    """``KL(N(m1, c1) || N(m0, c0))``."""
    m1, m0 = np.atleast_1d(m1), np.atleast_1d(m0)
    c1, c0 = np.atleast_2d(c1), np.atleast_2d(c0)
    d = m1.size
    l0 = np.linalg.cholesky(c0)
    solve = np.linalg.solve
    a = solve(l0, np.linalg.cholesky(c1))
    diff = solve(l0, m1 - m0)
    _, ld0 = np.linalg.slogdet(c0)
    _, ld1 = np.linalg.slogdet(c1)
    return float(0.5 * (np.sum(a * a) + diff @ diff - d + ld0 - ld1))


def _hist_probs(data, ref: ReferenceDensity, bins):
    """Group counts ``(G, nb0, nb1)`` and log reference bin masses for any input."""
    if isinstance(data, Histogram):
        spec = data.spec
        counts = data.counts
    else:
        x = np.atleast_2d(np.asarray(data, dtype=float))
        if x.shape[0] == 1 and ref.dim > 1 and x.shape[1] != ref.dim:
            x = x.T
        if x.shape[1] != ref.dim:
            raise DimensionError(f"samples have {x.shape[1]} coordinates, reference has {ref.dim}")
        if len(x) < MIN_SAMPLES:
            raise InsufficientDataError(f"need at least {MIN_SAMPLES} samples, got {len(x)}")
        spec = ref.histogram_spec(bins, n_samples=len(x), groups=1)
        counts = Histogram.from_samples(x, spec).counts
    if counts.sum() < MIN_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_SAMPLES} samples, got {int(counts.sum())}")
    return counts, ref.log_bin_masses(spec)


def _kl_from_counts(c, log_q):
    n = c.sum()
    mask = c > 0
    p = c[mask] / n
    return float(np.sum(p * (np.log(p) - log_q[mask])))


def _tv_from_counts(c, q):
    return float(0.5 * np.sum(np.abs(c / c.sum() - q)))


def _bootstrap_counts(counts, stat, bootstrap, seed):
    """Bootstrap SE of ``stat(total_counts)``: over groups when there are several, else multinomial."""
    rng = np.random.default_rng(seed)
    total = counts.sum(axis=0)
    vals = []
    G = counts.shape[0]
    for _ in range(bootstrap):
        if G > 1:
            c = counts[rng.integers(0, G, G)].sum(axis=0)
        else:
            n = int(total.sum())
            c = rng.multinomial(n, (total / n).ravel()).reshape(total.shape)
        vals.append(stat(c))
    return float(np.std(vals, ddof=1)) if bootstrap > 1 else 0.0


def estimate_kl(data, ref: ReferenceDensity, method: str = "auto", bins=None,
                bootstrap: int = 200, seed: int = 0) -> Estimate:
    """Estimate ``KL(p || nu)`` from samples, a Gaussian summary or a histogram.

    ``method="histogram"`` is the plug-in estimate on reference-aligned bins
    (bins empty in the sample contribute zero; samples outside the grid go
    to the edge bins).  ``method="gaussian"`` matches the sample mean and
    covariance and uses the closed-form Gaussian KL against a Gaussian
    reference ("Gaussian surrogate KL"); it is exact on ``GaussianMoments``.
    """
    if method == "auto":
        if isinstance(data, GaussianMoments):
            method = "gaussian"
        elif isinstance(data, Histogram):
            method = "histogram"
        else:
            method = "gaussian" if ref.kind == "gaussian" else "histogram"
    if method == "histogram":
        if ref.dim > 2:
            raise DimensionError("histogram KL needs dim <= 2; use the Gaussian surrogate")
        counts, log_q = _hist_probs(data, ref, bins)
        est = _kl_from_counts(counts.sum(axis=0), log_q)
        se = _bootstrap_counts(counts, lambda c: _kl_from_counts(c, log_q), bootstrap, seed)
        return Estimate(est, se, "histogram", bins=list(log_q.shape))
    if method != "gaussian":
        raise ConfigurationError(f"unknown KL method {method!r}", "metrics.kl_method")
    if ref.mean is None or ref.cov is None:
        raise ConfigurationError("Gaussian surrogate KL needs a Gaussian reference", "reference.kind")
    rng = np.random.default_rng(seed)
    if isinstance(data, Histogram):
        raise ConfigurationError("Gaussian surrogate KL needs samples or moments, not a histogram")
    if isinstance(data, GaussianMoments):
        if data.n < MIN_SAMPLES:
            raise InsufficientDataError(f"need at least {MIN_SAMPLES} samples, got {data.n:g}")
        est = gaussian_kl(data.mean, data.cov, ref.mean, ref.cov)
        se = 0.0
        if data.group_n is not None and len(data.group_n) > 1 and bootstrap > 1:
            G = len(data.group_n)
            vals = []
            for _ in range(bootstrap):
                pick = rng.integers(0, G, G)
                m = GaussianMoments.from_sums(data.group_sum[pick].sum(0), data.group_cross[pick].sum(0),
                                              data.group_n[pick].sum())
                vals.append(gaussian_kl(m.mean, m.cov, ref.mean, ref.cov))
            se = float(np.std(vals, ddof=1))
        return Estimate(est, se, "gaussian")
    x = np.atleast_2d(np.asarray(data, dtype=float))
    if x.shape[1] != ref.dim:
        raise DimensionError(f"samples have {x.shape[1]} coordinates, reference has {ref.dim}")
    if len(x) < MIN_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_SAMPLES} samples, got {len(x)}")
    m = GaussianMoments.from_samples(x)
    est = gaussian_kl(m.mean, m.cov, ref.mean, ref.cov)
    vals = []
    for _ in range(bootstrap):
        mb = GaussianMoments.from_samples(x[rng.integers(0, len(x), len(x))])
        vals.append(gaussian_kl(mb.mean, mb.cov, ref.mean, ref.cov))
    se = float(np.std(vals, ddof=1)) if bootstrap > 1 else 0.0
    return Estimate(est, se, "gaussian")


def estimate_tv(data, ref: ReferenceDensity, bins=None, bootstrap: int = 200, seed: int = 0) -> Estimate:
    """Half the L1 distance between the sample histogram and the reference bin masses."""
    if ref.dim > 2:
        raise DimensionError("TV estimates need dim <= 2")
    counts, log_q = _hist_probs(data, ref, bins)
    q = np.exp(log_q)
    q = q / q.sum()
    est = _tv_from_counts(counts.sum(axis=0), q)
    se = _bootstrap_counts(counts, lambda c: _tv_from_counts(c, q), bootstrap, seed)
    return Estimate(est, se, "histogram", bins=list(q.shape))


def _w1d(a, b, beta):
    """Exact ``W_beta`` between two 1-D empirical measures via the quantile coupling."""
    a = np.sort(a)
    b = np.sort(b)
    if len(a) == len(b):
        return float(np.mean(np.abs(a - b) ** beta) ** (1.0 / beta))
    ua = np.arange(1, len(a) + 1) / len(a)
    ub = np.arange(1, len(b) + 1) / len(b)
    u = np.union1d(ua, ub)
    w = np.diff(np.concatenate([[0.0], u]))
    ia = np.minimum(np.ceil(u * len(a) - 1e-9).astype(int) - 1, len(a) - 1)
    ib = np.minimum(np.ceil(u * len(b) - 1e-9).astype(int) - 1, len(b) - 1)
    return float(np.sum(w * np.abs(a[ia] - b[ib]) ** beta) ** (1.0 / beta))


def _wassign(a, b, beta):
    diff = a[:, None, :] - b[None, :, :]
    cost = np.sqrt(np.sum(diff * diff, axis=-1)) ** beta
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].mean() ** (1.0 / beta))


def wasserstein_beta(samples_a, samples_b=None, ref: Optional[ReferenceDensity] = None, beta: float = 2.0,
                     bootstrap: int = 100, seed: int = 0, max_assignment: int = MAX_ASSIGNMENT) -> Estimate:
    """Empirical ``W_beta`` between two samples, or between a sample and reference draws.

    One dimension uses the sorted (quantile) coupling, which is optimal;
    higher dimensions solve the exact assignment on equal-size sets of at
    most ``max_assignment`` points, subsampling with a warning above that.
    """
    if not beta > 0:
        raise ConfigurationError("beta must be positive", "metrics.beta")
    # reference draws and bootstrap use separate child streams of ``seed``
    draw_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    a = np.asarray(samples_a, dtype=float)
    a = a[:, None] if a.ndim == 1 else a
    if samples_b is None:
        if ref is None:
            raise ConfigurationError("give a second sample or a reference")
        b = ref.sample(len(a), draw_rng)
    else:
        b = np.asarray(samples_b, dtype=float)
        b = b[:, None] if b.ndim == 1 else b
    if a.shape[1] != b.shape[1]:
        raise DimensionError("samples have different dimensions")
    note = None
    if a.shape[1] == 1:
        est = _w1d(a[:, 0], b[:, 0], beta)
        vals = [_w1d(a[rng.integers(0, len(a), len(a)), 0], b[rng.integers(0, len(b), len(b)), 0], beta)
                for _ in range(bootstrap)]
    else:
        n = min(len(a), len(b))
        if n > max_assignment:
            note = f"assignment subsampled to {max_assignment} of {n} points per side"
            warnings.warn(note, RuntimeWarning, stacklevel=2)
            n = max_assignment
        if len(a) > n:
            a = a[rng.choice(len(a), n, replace=False)]
        if len(b) > n:
            b = b[rng.choice(len(b), n, replace=False)]
        est = _wassign(a, b, beta)
        vals = [_wassign(a[rng.integers(0, n, n)], b[rng.integers(0, n, n)], beta) for _ in range(bootstrap)]
    se = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return Estimate(est, se, "quantile" if a.shape[1] == 1 else "assignment", warning=note)


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class Verdict:
    """Outcome of an inequality ``lhs <= rhs`` (``rhs`` includes the SE allowance)."""

    name: str
    passed: Optional[bool]
    lhs: float = float("nan")
    rhs: float = float("nan")
    allowance: float = 0.0
    reason: Optional[str] = None
    detail: dict = field(default_factory=dict)

    @property
    def skipped(self) -> bool:
        return self.passed is None

    def to_dict(self) -> dict:
        out = {"passed": self.passed, "lhs": self.lhs, "rhs": self.rhs, "allowance": self.allowance}
        if self.reason:
            out["reason"] = self.reason
        out.update(self.detail)
        return out


def pinsker_check(tv: float, tv_se: float, kl: float, kl_se: float, z: float = 3.0) -> Verdict:
    """``TV <= sqrt(KL / 2) + z * SE`` with the SEs of both sides combined (delta method)."""
    root = math.sqrt(max(kl, 0.0) / 2.0)
    root_se = kl_se / (4.0 * root) if root > 0 else math.sqrt(max(kl_se, 0.0) / 2.0)
    allowance = z * math.hypot(tv_se, root_se)
    rhs = root + allowance
    return Verdict("pinsker", bool(tv <= rhs), float(tv), float(rhs), float(allowance),
                   detail={"tv": tv, "kl": kl})


def bolley_villani_bound(kl: float, d: int, dissipativity, u0: float = 0.0,
                         smooth_consts: Sequence = (), smooth_exponents: Sequence = ()) -> float:
    """``2 [(a / 4 beta)(1.5 + d~ + c~)]^{1/beta} (H^{1/beta} + H^{1/(2 beta)})``.

    ``c~ = log(2/beta)/2 + (L/(1+alpha)) sum_i (2b/a)^{(alpha_i+1)/beta} + b/beta + |U(0)|`` and
    ``d~ = (d/beta) [(beta/2) log pi + log(4 beta / a) + (1 - beta/2) log(d / 2e)]``.
    """
    beta, a, b = (float(v) for v in dissipativity)
    c_t = 0.5 * math.log(2.0 / beta) + b / beta + abs(u0)
    if len(smooth_consts):
        exps = np.asarray(smooth_exponents, dtype=float)
        L = float(max(smooth_consts))
        c_t += L / (1.0 + exps.min()) * float(np.sum((2.0 * b / a) ** ((exps + 1.0) / beta)))
    d_t = (d / beta) * (0.5 * beta * math.log(math.pi) + math.log(4.0 * beta / a)
                        + (1.0 - beta / 2.0) * math.log(d / (2.0 * math.e)))
    inner = (a / (4.0 * beta)) * (1.5 + d_t + c_t)
    if inner <= 0:
        return float("nan")
    h = max(kl, 0.0)
    return float(2.0 * inner ** (1.0 / beta) * (h ** (1.0 / beta) + h ** (1.0 / (2.0 * beta))))


def bolley_villani_check(kl: float, w: float, dissipativity, u0: Optional[float], d: int,
                         smooth_consts: Sequence = (), smooth_exponents: Sequence = (),
                         kl_se: float = 0.0, w_se: float = 0.0, beta: Optional[float] = None,
                         z: float = 3.0) -> Verdict:
    """Check ``W_beta <= bound(KL)``, evaluating the bound at ``KL + z SE`` and adding ``z`` W-SEs."""
    if dissipativity is None or u0 is None:
        return Verdict("bolley_villani", None, reason="dissipativity constants or U(0) unavailable")
    b_exp = float(dissipativity[0])
    if beta is not None and abs(beta - b_exp) > 1e-12:
        return Verdict("bolley_villani", None,
                       reason=f"W was measured with beta={beta:g} but the bound uses beta={b_exp:g}")
    if b_exp < 1.0:
        return Verdict("bolley_villani", None,
                       reason=f"beta={b_exp:g} < 1: the transport bound is only used for beta >= 1")
    bound = bolley_villani_bound(kl + z * kl_se, d, dissipativity, u0, smooth_consts, smooth_exponents)
    if not math.isfinite(bound):
        return Verdict("bolley_villani", None, reason="bound constant is not positive for these constants")
    rhs = bound + z * w_se
    return Verdict("bolley_villani", bool(w <= rhs), float(w), float(rhs), float(rhs - bound),
                   detail={"kl": kl, "bound_at_kl": bolley_villani_bound(kl, d, dissipativity, u0,
                                                                         smooth_consts, smooth_exponents)})


@dataclass
class MetricReport:
    """Metric estimates and inequality verdicts of one run."""

    kl: Optional[float] = None
    kl_se: Optional[float] = None
    kl_method: Optional[str] = None
    kl_hist: Optional[float] = None
    kl_hist_se: Optional[float] = None
    tv: Optional[float] = None
    tv_se: Optional[float] = None
    w_beta: Optional[float] = None
    w_beta_se: Optional[float] = None
    beta: Optional[float] = None
    moments: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(v.passed is False for v in self.verdicts.values())

    def to_dict(self) -> dict:
        out = {
            "kl": self.kl,
            "kl_se": self.kl_se,
            "kl_method": self.kl_method,
            "kl_hist": self.kl_hist,
            "kl_hist_se": self.kl_hist_se,
            "tv": self.tv,
            "tv_se": self.tv_se,
            "w_beta": self.w_beta,
            "w_beta_se": self.w_beta_se,
            "beta": self.beta,
            "moments": self.moments,
            "verdicts": {k: v.to_dict() for k, v in sorted(self.verdicts.items())},
        }
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out
