"""ULA chains: single steps, single chains, ensembles, step-size planning.

Random streams (SFC64, chosen for normal-draw throughput) are derived from ``SeedSequence(seed, spawn_key=(chain, stream))``
with stream 0 for the initial state, 1 for the diffusion noise and 2 for
the smoothing draws.  Chains are therefore reproducible one by one and
independent of how an ensemble is split across workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from ..errors import ConfigurationError, DimensionError, DivergedChainError
from ..gengauss import GenGaussSampler, SmoothingConfig
from ..potentials import PotentialSpec
from . import _backend

__all__ = [
    "InitSpec",
    "HistogramSpec",
    "ChainConfig",
    "Trajectory",
    "EnsembleResult",
    "PlannerInput",
    "MomentTrace",
    "ula_step",
    "interpolated_state",
    "run_chain",
    "run_ensemble",
    "chain_streams",
    "replay_noise",
    "plan_step_size",
    "default_discretization_constant",
    "moment_growth_constants",
    "moment_tracker",
    "default_stride",
]

GRADIENT_SOURCES = ("exact", "stochastic", "smoothed")
CHAIN_BATCH = 1024
BLOCK_ELEMENTS = 1 << 21
STREAM_INIT, STREAM_DIFFUSION, STREAM_SMOOTHING = 0, 1, 2
GRAD_POWERS = (2, 4)


def default_stride(steps: int) -> int:
    return max(1, steps // 10_000)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class InitSpec:
    """Initial law of a chain.

    ``gaussian_over_L`` draws ``N(0, I / L)``; ``point`` starts at ``x0``;
    ``custom`` calls ``sampler(rng, dim)``.
    """

    kind: str = "gaussian_over_L"
    L: float = 1.0
    x0: Optional[tuple] = None
    sampler: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("gaussian_over_L", "point", "custom"):
            raise ConfigurationError(f"unknown init kind {self.kind!r}", "chain.init")
        if self.kind == "gaussian_over_L" and not self.L > 0:
            raise ConfigurationError("L must be positive", "chain.init_L")
        if self.kind == "point" and self.x0 is None:
            raise ConfigurationError("point init needs x0", "chain.init_point")
        if self.kind == "custom" and self.sampler is None:
            raise ConfigurationError("custom init needs a sampler callable", "chain.init")

    @classmethod
    def gaussian_over_L(cls, L: float = 1.0) -> "InitSpec":
        return cls("gaussian_over_L", L=float(L))

    @classmethod
    def point(cls, x0) -> "InitSpec":
        return cls("point", x0=tuple(float(v) for v in np.atleast_1d(x0)))

    @classmethod
    def custom(cls, sampler: Callable) -> "InitSpec":
        return cls("custom", sampler=sampler)

    def draw(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        if self.kind == "gaussian_over_L":
            return rng.standard_normal(dim) / math.sqrt(self.L)
        if self.kind == "point":
            x0 = np.asarray(self.x0, dtype=float)
            if x0.shape != (dim,):
                raise DimensionError(f"init point has shape {x0.shape}, expected ({dim},)")
            return x0.copy()
        x0 = np.asarray(self.sampler(rng, dim), dtype=float)
        if x0.shape != (dim,):
            raise DimensionError(f"custom init returned shape {x0.shape}, expected ({dim},)")
        return x0

    def moments(self, dim: int):
        """``(mean, covariance)`` of the initial law, or None for custom draws."""
        if self.kind == "gaussian_over_L":
            return np.zeros(dim), np.eye(dim) / self.L
        if self.kind == "point":
            return np.asarray(self.x0, dtype=float), np.zeros((dim, dim))
        return None


@dataclass(frozen=True)
class HistogramSpec:
    """Uniform tail histogram on at most two axes, split into ``groups`` by chain index."""

    lo: tuple
    width: tuple
    nbins: tuple
    groups: int = 16

    def __post_init__(self):
        if not 1 <= len(self.nbins) <= 2 or len(self.lo) != len(self.nbins) or len(self.width) != len(self.nbins):
            raise ConfigurationError("histograms support one or two axes")

    def edges(self):
        return [lo + w * np.arange(n + 1) for lo, w, n in zip(self.lo, self.width, self.nbins)]

    def empty_counts(self):
        nb = tuple(self.nbins) + ((1,) if len(self.nbins) == 1 else ())
        return np.zeros((self.groups,) + nb, dtype=np.int64)


@dataclass
class ChainConfig:
    """Parameters of one ULA run (or of every chain in an ensemble).

    ``eta`` is a constant, a length-``steps`` sequence, or a callable
    ``k -> eta_k`` for ``k = 0 .. steps-1``.  With ``gradient_source=
    "stochastic"`` and no smoothing config, ``mu = sqrt(eta_0)`` and ``p = 2``.
    """

    potential: PotentialSpec
    steps: int
    eta: Union[float, Sequence, Callable] = 0.1
    gradient_source: str = "exact"
    smoothing: Optional[SmoothingConfig] = None
    init: InitSpec = field(default_factory=InitSpec)
    seed: int = 0
    burn_in: int = 0
    stride: Optional[int] = None
    divergence_limit: float = 1e6
    backend: Optional[str] = None
    histogram: Optional[HistogramSpec] = None

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError("steps must be a positive integer", "chain.steps")
        self.steps = int(self.steps)
        if self.gradient_source not in GRADIENT_SOURCES:
            raise ConfigurationError(f"gradient_source must be one of {GRADIENT_SOURCES}", "chain.gradient")
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be >= 0", "chain.burn_in")
        if self.stride is not None and self.stride < 1:
            raise ConfigurationError("stride must be >= 1", "chain.stride")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer", "seed")
        if self.histogram is not None and len(self.histogram.nbins) != self.potential.dim:
            raise ConfigurationError("histogram axes must match the potential dimension", "metrics")
        self.etas()  # validates the schedule

    def etas(self) -> np.ndarray:
        if callable(self.eta):
            etas = np.array([float(self.eta(k)) for k in range(self.steps)])
        else:
            arr = np.asarray(self.eta, dtype=float)
            if arr.ndim == 0:
                etas = np.full(self.steps, float(arr))
            elif arr.shape == (self.steps,):
                etas = arr.copy()
            else:
                raise ConfigurationError(f"eta schedule must have length {self.steps}", "chain.eta")
        if not np.all((etas > 0) & (etas <= 1)):
            raise ConfigurationError("step sizes must lie in (0, 1]", "chain.eta")
        return etas

    def resolved_smoothing(self) -> Optional[SmoothingConfig]:
        if self.gradient_source == "exact":
            return None
        if self.smoothing is not None:
            return self.smoothing
        return SmoothingConfig(mu=math.sqrt(float(self.etas()[0])), p=2.0)

    def resolved_stride(self) -> int:
        return self.stride or default_stride(self.steps)


# ---------------------------------------------------------------------------
# single steps


def ula_step(x, eta, grad, noise, step: int = 0):
    """``x - eta * grad + sqrt(2 eta) * noise``."""
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if not eta > 0:
        raise ConfigurationError("eta must be positive", "eta")
    if x.shape != grad.shape or x.shape != noise.shape:
        raise DimensionError(f"shape mismatch: x {x.shape}, grad {grad.shape}, noise {noise.shape}")
    if not np.all(np.isfinite(grad)):
        raise DivergedChainError(step, f"non-finite gradient at step {step}")
    return x - eta * grad + math.sqrt(2.0 * eta) * noise


def interpolated_state(x_k, eta_t, grad, noise, eta=None, step: int = 0):
    """Within-step interpolation ``x_k - t grad + sqrt(2 t) noise`` for ``0 <= t <= eta``."""
    if eta_t < 0 or (eta is not None and eta_t > eta):
        raise ConfigurationError("interpolation time must lie in [0, eta]", "eta_t")
    x_k = np.asarray(x_k, dtype=float)
    grad = np.asarray(grad, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if x_k.shape != grad.shape or x_k.shape != noise.shape:
        raise DimensionError("shape mismatch between state, gradient and noise")
    if not np.all(np.isfinite(grad)):
        raise DivergedChainError(step, f"non-finite gradient at step {step}")
    return x_k - eta_t * grad + math.sqrt(2.0 * eta_t) * noise


# ---------------------------------------------------------------------------
# streams


def _generator(seed: int, chain: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence(seed, spawn_key=(chain, stream))))


def chain_streams(cfg: ChainConfig, chain: int = 0):
    """``(init_rng, diffusion_rng, smoothing_sampler_or_None)`` for one chain."""
    sm = cfg.resolved_smoothing()
    smoother = None
    if sm is not None:
        smoother = GenGaussSampler(sm.p, cfg.potential.dim,
                                   np.random.SeedSequence(cfg.seed, spawn_key=(chain, STREAM_SMOOTHING)))
    return (_generator(cfg.seed, chain, STREAM_INIT), _generator(cfg.seed, chain, STREAM_DIFFUSION), smoother)


def replay_noise(cfg: ChainConfig, chain: int = 0):
    """Regenerate ``(x0, diffusion noise (K, d), smoothing draws (K, d) or None)`` for a chain.

    Smoothing draws are only reproduced for the stochastic source.
    """
    init_rng, diff_rng, smoother = chain_streams(cfg, chain)
    d = cfg.potential.dim
    x0 = cfg.init.draw(init_rng, d)
    noise = diff_rng.standard_normal((cfg.steps, d))
    xi = None
    if cfg.gradient_source == "stochastic" and smoother is not None and cfg.resolved_smoothing().mu > 0:
        xi = smoother.sample(cfg.steps)
    return x0, noise, xi


# ---------------------------------------------------------------------------
# results


@dataclass
class Trajectory:
    """Iterates of one chain.

    ``iterates[j]`` is ``x_k`` for ``k = record_steps[j]`` (every ``stride``
    steps); ``grad_norms[j]`` is the norm of the gradient used to produce it.
    """

    iterates: np.ndarray
    record_steps: np.ndarray
    grad_norms: np.ndarray
    initial_state: np.ndarray
    final_state: np.ndarray
    stride: int
    seed: int
    chain: int
    tail_mean: Optional[np.ndarray]
    tail_cov: Optional[np.ndarray]
    tail_n: int
    backend: str
    diverged_at: Optional[int] = None


@dataclass
class EnsembleResult:
    """Final states, per-chain summaries and ensemble traces of ``M`` chains."""

    config: ChainConfig
    finals: np.ndarray
    initial: np.ndarray
    diverged: np.ndarray
    tail_sum: np.ndarray
    tail_cross: np.ndarray
    tail_n: np.ndarray
    record_steps: np.ndarray
    trace: dict
    trace_count: np.ndarray
    histogram: Optional[np.ndarray]
    backend: str

    @property
    def chains(self) -> int:
        return self.finals.shape[0]

    @property
    def divergences(self):
        idx = np.flatnonzero(self.diverged >= 0)
        return [(int(c), int(self.diverged[c])) for c in idx]

    def tail_moments(self, chains=None):
        """Pooled post-burn-in ``(mean, covariance, n)`` over the selected chains."""
        sel = slice(None) if chains is None else chains
        n = float(self.tail_n[sel].sum())
        if n < 2:
            raise ValueError("no post-burn-in samples recorded")
        s = self.tail_sum[sel].sum(axis=0)
        cross = self.tail_cross[sel].sum(axis=0)
        mean = s / n
        cov = (cross - n * np.outer(mean, mean)) / (n - 1.0)
        return mean, cov, n

    def trace_mean(self, name: str):
        """Ensemble mean and standard error of a recorded trace quantity."""
        total, total_sq = self.trace[name]
        n = np.maximum(self.trace_count, 1)
        mean = total / n
        var = np.maximum(total_sq / n - mean * mean, 0.0)
        se = np.sqrt(var / np.maximum(n - 1, 1))
        return mean, se


# ---------------------------------------------------------------------------
# simulation core


def _block_steps(m, d, steps):
    return int(min(steps, max(64, BLOCK_ELEMENTS // max(1, m * d))))


def _simulate(cfg: ChainConfig, c0: int, c1: int, raw: bool, moment_orders: Sequence[int], backend: str,
              traces: bool = True):
    pot = cfg.potential
    d = pot.dim
    m = c1 - c0
    K = cfg.steps
    etas = cfg.etas()
    stride = cfg.resolved_stride()
    sm = cfg.resolved_smoothing()
    mu = sm.mu if sm is not None else 0.0
    source = cfg.gradient_source
    if source != "exact" and mu == 0.0:
        source = "exact"  # g_mu degenerates to grad U

    x = np.empty((m, d))
    diff_gens, smoothers = [], []
    for i, c in enumerate(range(c0, c1)):
        init_rng, diff_rng, smoother = chain_streams(cfg, c)
        x[i] = cfg.init.draw(init_rng, d)
        diff_gens.append(diff_rng)
        smoothers.append(smoother)
    initial = x.copy()

    spec = pot.kernel_spec()
    use_compiled = backend == "compiled" and spec is not None and source != "smoothed"
    if use_compiled:
        kernel = _backend.compiled_kernel()
        kind, pa, pb = spec
        pa = np.ascontiguousarray(pa, dtype=float)
        pb = np.ascontiguousarray(pb, dtype=float)
    else:
        kernel = _backend.fallback_kernel
        grad_fn = pot.grad if spec is None else _backend.kind_grad(spec[0], spec[1], spec[2])
        if source == "smoothed":
            base_grad = grad_fn
            mc = sm.mc_samples

            def grad_fn(y):
                xi_mc = np.stack([s.sample(mc) for s in smoothers])
                return base_grad((y[:, None, :] + mu * xi_mc).reshape(-1, d)).reshape(m, mc, d).mean(axis=1)

    tail_sum = np.zeros((m, d))
    tail_cross = np.zeros((m, d, d))
    tail_n = np.zeros(m, dtype=np.int64)
    diverged = np.full(m, -1, dtype=np.int64)
    if cfg.histogram is not None:
        hist = cfg.histogram.empty_counts()
        hist_lo = np.asarray(cfg.histogram.lo, dtype=float)
        hist_w = np.asarray(cfg.histogram.width, dtype=float)
    else:
        hist = np.zeros((0, 1, 1), dtype=np.int64)
        hist_lo = hist_w = np.zeros(1)

    n_rec = K // stride
    if raw:
        all_rec_x = np.empty((m, n_rec, d))
        all_rec_g = np.empty((m, n_rec))
    trace = {}
    if traces:
        trace = {f"M{s}": [np.zeros(n_rec), np.zeros(n_rec)] for s in moment_orders}
        trace.update({f"grad{r}": [np.zeros(n_rec), np.zeros(n_rec)] for r in GRAD_POWERS})
        trace["sqnorm"] = [np.zeros(n_rec), np.zeros(n_rec)]
    trace_count = np.zeros(n_rec)

    B = _block_steps(m, d, K)
    # noise buffers are reused: fresh pages cost more than filling them
    noise_buf = np.empty((m, B, d))
    xi_buf = np.empty((m, B, d)) if source == "stochastic" else np.zeros((0, 0, 0))
    for k0 in range(0, K, B):
        nb = min(B, K - k0)
        noise = noise_buf if nb == B else np.ascontiguousarray(noise_buf[:, :nb])
        for i, gen in enumerate(diff_gens):
            gen.standard_normal(out=noise[i])
        xi = xi_buf
        if source == "stochastic":
            xi = xi_buf if nb == B else np.ascontiguousarray(xi_buf[:, :nb])
            for i, s in enumerate(smoothers):
                s.sample(nb, out=xi[i])
        r0 = k0 // stride
        r1 = (k0 + nb) // stride
        rec_x = np.empty((m, r1 - r0, d))
        rec_g = np.empty((m, r1 - r0))
        eta_blk = np.ascontiguousarray(etas[k0:k0 + nb])
        if use_compiled:
            kernel(x, noise, xi, mu, eta_blk, kind, pa, pb, k0, cfg.burn_in, stride,
                   tail_sum, tail_cross, tail_n, rec_x, rec_g, diverged, cfg.divergence_limit,
                   hist, hist_lo, hist_w, c0)
        else:
            kernel(x, noise, xi if xi.size else None, mu, eta_blk, grad_fn, k0, cfg.burn_in, stride,
                   tail_sum, tail_cross, tail_n, rec_x, rec_g, diverged, cfg.divergence_limit,
                   hist if hist.size else None, hist_lo, hist_w, None, c0)
        if r1 > r0 and raw:
            all_rec_x[:, r0:r1] = rec_x
            all_rec_g[:, r0:r1] = rec_g
        if r1 > r0 and traces:
            sq = np.sum(rec_x * rec_x, axis=-1)
            live = np.isfinite(sq)
            trace_count[r0:r1] += live.sum(axis=0)
            sqz = np.where(live, sq, 0.0)
            gz = np.where(live, rec_g, 0.0)
            for s in moment_orders:
                v = np.where(live, (1.0 + sqz) ** (s / 2.0), 0.0)
                trace[f"M{s}"][0][r0:r1] += v.sum(axis=0)
                trace[f"M{s}"][1][r0:r1] += (v * v).sum(axis=0)
            for r in GRAD_POWERS:
                v = gz ** r
                trace[f"grad{r}"][0][r0:r1] += v.sum(axis=0)
                trace[f"grad{r}"][1][r0:r1] += (v * v).sum(axis=0)
            trace["sqnorm"][0][r0:r1] += sqz.sum(axis=0)
            trace["sqnorm"][1][r0:r1] += (sqz * sqz).sum(axis=0)

    out = {
        "finals": x,
        "initial": initial,
        "diverged": diverged,
        "tail_sum": tail_sum,
        "tail_cross": tail_cross,
        "tail_n": tail_n,
        "trace": trace,
        "trace_count": trace_count,
        "histogram": hist if cfg.histogram is not None else None,
        "backend": "compiled" if use_compiled else "python",
    }
    if raw:
        out["rec_x"] = all_rec_x
        out["rec_g"] = all_rec_g
    return out


def run_chain(cfg: ChainConfig) -> Trajectory:
    """Run one chain (chain index 0 of ``cfg.seed``).

    Raises ``DivergedChainError`` carrying the partial trajectory when the
    divergence guard fires.
    """
    backend = _backend.resolve(cfg.backend)
    res = _simulate(cfg, 0, 1, True, (), backend)
    stride = cfg.resolved_stride()
    steps = stride * np.arange(1, cfg.steps // stride + 1)
    n = int(res["tail_n"][0])
    if n >= 2:
        mean = res["tail_sum"][0] / n
        cov = (res["tail_cross"][0] - n * np.outer(mean, mean)) / (n - 1.0)
    else:
        mean = cov = None
    div = int(res["diverged"][0])
    traj = Trajectory(
        iterates=res["rec_x"][0],
        record_steps=steps,
        grad_norms=res["rec_g"][0],
        initial_state=res["initial"][0],
        final_state=res["finals"][0],
        stride=stride,
        seed=cfg.seed,
        chain=0,
        tail_mean=mean,
        tail_cov=cov,
        tail_n=n,
        backend=res["backend"],
        diverged_at=div if div >= 0 else None,
    )
    if div >= 0:
        keep = steps < div
        traj.iterates = traj.iterates[keep]
        traj.grad_norms = traj.grad_norms[keep]
        traj.record_steps = steps[keep]
        raise DivergedChainError(div, trajectory=traj)
    return traj


def run_ensemble(cfg: ChainConfig, chains: int, workers: Optional[int] = None,
                 moment_orders: Sequence[int] = (2, 4), traces: bool = True) -> EnsembleResult:
    """Run ``chains`` independent chains and collect finals and summaries.

    Chains are processed in fixed batches of ``CHAIN_BATCH`` and merged by
    chain index, so results do not depend on ``workers``.  ``traces=False``
    skips the per-record moment traces, which cost more than the chain
    updates themselves on cheap potentials.
    """
    if chains < 1:
        raise ConfigurationError("ensemble needs at least one chain", "ensemble.chains")
    for s in moment_orders:
        if s < 2 or s % 2:
            raise ConfigurationError("moment orders must be even integers >= 2", "metrics.moment_s")
    backend = _backend.resolve(cfg.backend)
    bounds = [(c, min(c + CHAIN_BATCH, chains)) for c in range(0, chains, CHAIN_BATCH)]
    workers = workers or os.cpu_count() or 1

    def job(b):
        return _simulate(cfg, b[0], b[1], False, tuple(moment_orders), backend, traces)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]

    trace = {}
    for name in parts[0]["trace"]:
        trace[name] = (sum(p["trace"][name][0] for p in parts), sum(p["trace"][name][1] for p in parts))
    hist = None
    if cfg.histogram is not None:
        hist = sum(p["histogram"] for p in parts)
    stride = cfg.resolved_stride()
    return EnsembleResult(
        config=cfg,
        finals=np.concatenate([p["finals"] for p in parts]),
        initial=np.concatenate([p["initial"] for p in parts]),
        diverged=np.concatenate([p["diverged"] for p in parts]),
        tail_sum=np.concatenate([p["tail_sum"] for p in parts]),
        tail_cross=np.concatenate([p["tail_cross"] for p in parts]),
        tail_n=np.concatenate([p["tail_n"] for p in parts]),
        record_steps=stride * np.arange(1, cfg.steps // stride + 1),
        trace=trace,
        trace_count=sum(p["trace_count"] for p in parts),
        histogram=hist,
        backend=parts[0]["backend"],
    )


# ---------------------------------------------------------------------------
# step-size planning


@dataclass(frozen=True)
class PlannerInput:
    """Inputs of the step-size rule ``min{1, (eps / (2 T D))^{1/alpha}}``.

    ``alpha`` is the gradient smoothness exponent, or ``alpha_H + 1`` in the
    Hessian-smooth regime.  The optional fields enable two extra caps: the
    log-Sobolev cap (``gamma``, ``N``, ``L``) and the Wasserstein cap for
    smoothed potentials (``E2``, ``N``, ``L``, ``d``, ``p``).
    """

    epsilon: float
    T: float
    D: float
    alpha: float
    gamma: Optional[float] = None
    N: Optional[int] = None
    L: Optional[float] = None
    E2: Optional[float] = None
    d: Optional[int] = None
    p: float = 2.0

    def __post_init__(self):
        for name in ("epsilon", "T", "D", "alpha"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive", f"planner.{name}")


def plan_step_size(inp: PlannerInput) -> float:
    ratio = inp.epsilon / (2.0 * inp.T * inp.D)
    eta = 1.0 if ratio >= 1.0 else ratio ** (1.0 / inp.alpha)
    if inp.gamma is not None and inp.N is not None and inp.L is not None:
        lsi = (inp.gamma / (9.0 * inp.N ** 1.5 * inp.L ** 3)) ** (1.0 / inp.alpha)
        eta = min(eta, 1.0 / (4.0 * inp.gamma), lsi)
    if inp.E2 is not None and inp.N is not None and inp.L is not None and inp.d is not None:
        w_cap = (inp.epsilon / (9.0 * math.sqrt(inp.N * inp.L * inp.E2) * inp.d ** (1.0 / inp.p))) ** (2.0 / inp.alpha)
        eta = min(eta, w_cap)
    return eta


def default_discretization_constant(d: int, alpha_GN: float, beta: float) -> float:
    """Heuristic ``D = d^{ceil(2 alpha_GN^2 / beta)}`` with unit constant."""
    return float(d) ** math.ceil(2.0 * alpha_GN ** 2 / beta - 1e-12)


def moment_growth_constants(a: float, b: float, beta: float, s: int, d: int):
    """``(C_s, bound on M_s(p_0 + pi))`` of the linear moment-growth bound."""
    c_s = ((3 * a + 2 * b + 3) / min(1.0, a)) ** ((s - 2) / beta + 1) * s ** s * d ** ((s - 2) / beta + 1)
    m0 = 2.0 * ((3 * a + b + 3) / a) ** (s / beta) * s ** (s / beta) * d ** (s / beta)
    return c_s, m0


# ---------------------------------------------------------------------------
# moment tracking


@dataclass
class MomentTrace:
    """Ensemble ``M_s(p_k) = E (1 + ||x_k||^2)^{s/2}`` along a run."""

    s: int
    steps: np.ndarray
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    slope: float
    slope_se: float
    curvature: float
    curvature_se: float
    linear_ok: bool
    burn_in: int
    post_median: float
    max_ratio: float

    @property
    def slope_per_step(self) -> float:
        eta = self.times[-1] / self.steps[-1] if self.steps[-1] else float("nan")
        return self.slope * eta


def _wls(t, y, se, degree):
    """Weighted polynomial fit; returns coefficients (highest first) and their SEs."""
    w = 1.0 / np.where(se > 0, se, np.nan)
    if not np.all(np.isfinite(w)):
        w = np.ones_like(y)
    A = np.vander(t, degree + 1)
    Aw = A * w[:, None]
    yw = y * w
    coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    resid = yw - Aw @ coef
    dof = max(1, len(y) - degree - 1)
    scale = max(1.0, float(resid @ resid) / dof)
    cov = np.linalg.pinv(Aw.T @ Aw) * scale
    return coef, np.sqrt(np.maximum(np.diag(cov), 0.0))


def moment_tracker(source, s: int, eta: Optional[float] = None, burn_in: int = 0) -> MomentTrace:
    """Track ``M_s`` along an ensemble run.

    ``source`` is an ``EnsembleResult`` recorded with order ``s`` or an
    iterable of ``(step, samples)`` pairs.  ``linear_ok`` holds when a
    quadratic fit in ``t = k eta`` shows no significant positive curvature
    (three standard errors).  ``max_ratio`` is the largest post-burn-in value
    over the post-burn-in median.
    """
    if s < 2 or s % 2:
        raise ConfigurationError("s must be an even integer >= 2", "s")
    if isinstance(source, EnsembleResult):
        name = f"M{s}"
        if name not in source.trace:
            raise ConfigurationError(f"ensemble was not recorded with moment order {s}", "metrics.moment_s")
        steps = source.record_steps.astype(float)
        values, se = source.trace_mean(name)
        etas = source.config.etas()
        times = np.cumsum(etas)[source.record_steps - 1]
    else:
        if eta is None:
            raise ConfigurationError("eta is required when tracking raw snapshots", "eta")
        rows = []
        for step, samples in source:
            samples = np.atleast_2d(np.asarray(samples, dtype=float))
            v = (1.0 + np.sum(samples * samples, axis=1)) ** (s / 2.0)
            rows.append((step, v.mean(), v.std(ddof=1) / math.sqrt(len(v)) if len(v) > 1 else 0.0))
        steps = np.array([r[0] for r in rows], dtype=float)
        values = np.array([r[1] for r in rows])
        se = np.array([r[2] for r in rows])
        times = steps * eta
    if len(steps) >= 3:
        lin, lin_se = _wls(times, values, se, 1)
        quad, quad_se = _wls(times, values, se, 2)
        slope, slope_se = float(lin[0]), float(lin_se[0])
        curv, curv_se = float(quad[0]), float(quad_se[0])
        linear_ok = curv <= 3.0 * curv_se + 1e-12 * max(1.0, abs(values).max())
    else:
        slope = slope_se = curv = curv_se = float("nan")
        linear_ok = True
    post = values[steps > burn_in]
    med = float(np.median(post)) if post.size else float("nan")
    ratio = float(post.max() / med) if post.size and med > 0 else float("nan")
    return MomentTrace(s, steps, times, values, se, slope, slope_se, curv, curv_se,
                       bool(linear_ok), burn_in, med, ratio)
