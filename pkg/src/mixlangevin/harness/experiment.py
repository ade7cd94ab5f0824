"""Experiments, sweeps and certification runs driven by an ``ExperimentConfig``."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import metrics as mt
from ..errors import ConfigurationError, InsufficientDataError
from ..gengauss import SmoothingConfig
from ..potentials import (
    CertificateReport,
    PotentialSpec,
    certify_dissipative,
    certify_hessian_smooth,
    certify_mixture_smooth,
    make_potential,
)
from ..sampler import (
    ChainConfig,
    InitSpec,
    PlannerInput,
    default_discretization_constant,
    moment_tracker,
    plan_step_size,
    run_ensemble,
)
from .config import ExperimentConfig, validate

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentResult",
    "SweepResult",
    "CertifyResult",
    "build_potential",
    "build_chain",
    "build_references",
    "run_experiment",
    "run_sweep",
    "run_certify",
    "fit_loglog_slope",
    "ula_stationary_variance",
]

MOMENT_RATIO_MAX = 10.0
GRAD_RATIO_MAX = 10.0
SNR_MIN = 3.0
WINDOW_FRACTION = 0.1


# ---------------------------------------------------------------------------
# builders


def build_potential(cfg: ExperimentConfig) -> PotentialSpec:
    name = cfg["potential.name"]
    dim = cfg["potential.dim"]
    if name == "quadratic":
        a = cfg["potential.a"] or (1.0,)
        return make_potential(name, dim, a=a[0] if len(a) == 1 else list(a))
    if name == "mixture_norm":
        return make_potential(name, dim, terms=list(cfg["potential.terms"]), metadata=cfg["potential.metadata"])
    if name == "linear_tail":
        return make_potential(name, dim, alphas=list(cfg["potential.alphas"] or (1.0,)))
    return make_potential(name, dim)


def build_chain(cfg: ExperimentConfig, potential: PotentialSpec, histogram=None) -> ChainConfig:
    if cfg["chain.init"] == "point":
        init = InitSpec.point(cfg["chain.init_point"])
    else:
        init = InitSpec.gaussian_over_L(cfg["chain.init_L"])
    smoothing = None
    if cfg["smoothing.mu"] is not None:
        smoothing = SmoothingConfig(cfg["smoothing.mu"], cfg["smoothing.p"], cfg["smoothing.mc_samples"])
    elif cfg["chain.gradient"] != "exact":
        smoothing = SmoothingConfig(math.sqrt(cfg["chain.eta"]), cfg["smoothing.p"], cfg["smoothing.mc_samples"])
    return ChainConfig(
        potential=potential,
        steps=cfg["chain.steps"],
        eta=cfg["chain.eta"],
        gradient_source=cfg["chain.gradient"],
        smoothing=smoothing,
        init=init,
        seed=cfg["seed"],
        burn_in=cfg["chain.burn_in"],
        stride=cfg["chain.stride"],
        divergence_limit=cfg["chain.divergence_limit"],
        backend=cfg["chain.backend"],
        histogram=histogram,
    )


@dataclass
class References:
    gaussian: Optional[mt.ReferenceDensity]
    grid: Optional[mt.ReferenceDensity]


def build_references(cfg: ExperimentConfig, potential: PotentialSpec) -> References:
    """Closed-form Gaussian reference when one exists, grid reference when ``dim <= 2``.

    The flat potential has no stationary law; its reference is the exact
    Brownian law of the chain after ``steps`` steps.
    """
    kind = cfg["reference.kind"]
    gauss = None
    if potential.name == "flat":
        init = InitSpec.point(cfg["chain.init_point"]) if cfg["chain.init"] == "point" else \
            InitSpec.gaussian_over_L(cfg["chain.init_L"])
        mean, cov = init.moments(potential.dim)
        gauss = mt.brownian_reference(mean, cov, cfg["chain.eta"] * cfg["chain.steps"])
        if np.linalg.matrix_rank(gauss.cov) < potential.dim:
            raise ConfigurationError("degenerate Brownian reference", "chain.init")
    elif kind != "grid" and potential.closed_form_reference() is not None:
        mean, cov = potential.closed_form_reference()
        gauss = mt.gaussian_reference(mean, cov, label=potential.name)
    grid = None
    if potential.dim <= 2 and kind != "gaussian":
        if gauss is not None and potential.name == "flat":
            grid = gauss.rasterize(resolution=cfg["reference.resolution"])
        else:
            grid = mt.build_reference(potential, cfg["reference.bounds"], cfg["reference.resolution"])
    return References(gauss, grid)


# ---------------------------------------------------------------------------
# single experiment


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    run_id: str
    potential: PotentialSpec
    ensemble: object
    references: References
    metrics: mt.MetricReport
    traces: dict = field(default_factory=dict)
    certificates: list = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.metrics.failed

    def to_dict(self) -> dict:
        ens = self.ensemble
        cc = ens.config
        divs = ens.divergences
        refs = {}
        if self.references.gaussian is not None:
            refs["gaussian"] = self.references.gaussian.describe()
        if self.references.grid is not None:
            refs["grid"] = self.references.grid.describe()
        return {
            "schema": 1,
            "kind": "run",
            "run_id": self.run_id,
            "experiment": self.config["experiment"],
            "seed": self.config["seed"],
            "config": self.config.to_dict(),
            "potential": self.potential.describe(),
            "chain": {
                "eta": float(cc.etas()[0]),
                "steps": cc.steps,
                "burn_in": cc.burn_in,
                "stride": cc.resolved_stride(),
                "gradient": cc.gradient_source,
                "backend": ens.backend,
            },
            "ensemble": {
                "chains": ens.chains,
                "diverged": len(divs),
                "divergences": [{"chain": c, "step": k} for c, k in divs[:20]],
                **_tail_summary(ens, self.potential),
            },
            "reference": refs,
            "metrics": self.metrics.to_dict(),
            "traces": self.traces,
            "certificates": [c.to_dict() for c in self.certificates],
            "status": "fail" if self.failed else "pass",
        }


def ula_stationary_variance(potential, eta: float):
    """Per-axis variance of the ULA stationary law on a quadratic, ``2 / (a (2 - eta a))``; else None."""
    if potential.name != "quadratic":
        return None
    a = np.broadcast_to(np.asarray(potential.a, dtype=float), (potential.dim,))
    if np.any(eta * a >= 2.0):
        return None
    return 2.0 / (a * (2.0 - eta * a))


def _tail_summary(ens, potential) -> dict:
    if int(ens.tail_n.sum()) < 2:
        return {}
    mean, cov, n = ens.tail_moments()
    out = {"tail_samples": int(n), "tail_mean": mean, "tail_cov": cov}
    etas = ens.config.etas()
    if np.all(etas == etas[0]):
        var = ula_stationary_variance(potential, float(etas[0]))
        if var is not None:
            out["oracle_variance"] = var
            out["variance_rel_error"] = np.diag(cov) / var - 1.0
    return out


def _tail_histogram_spec(cfg, refs, potential):
    if cfg["metrics.samples"] != "tail" or refs.grid is None or potential.dim > 2:
        return None
    wants = set(cfg["metrics.request"])
    if not wants & {"kl", "tv"}:
        return None
    # the kernels bin tail states at the record stride
    stride = build_chain(cfg, potential).resolved_stride()
    n_tail = cfg["ensemble.chains"] * (cfg["chain.steps"] // stride - cfg["chain.burn_in"] // stride)
    return refs.grid.histogram_spec(cfg["metrics.bins"], n_samples=n_tail, groups=cfg["metrics.groups"])


def _trace_summary(ens, cfg) -> dict:
    """Moment traces and the gradient-moment window check."""
    out = {}
    burn = cfg["chain.burn_in"]
    for s in cfg["metrics.moment_s"]:
        tr = moment_tracker(ens, s, burn_in=burn)
        out[f"M{s}"] = {
            "final": float(tr.values[-1]) if len(tr.values) else None,
            "post_median": tr.post_median,
            "max_ratio": tr.max_ratio,
            "slope_per_time": tr.slope,
            "slope_se": tr.slope_se,
            "linear_ok": tr.linear_ok,
        }
    post = ens.record_steps > burn
    n_post = int(post.sum())
    for r in (2, 4):
        mean, _ = ens.trace_mean(f"grad{r}")
        vals = mean[post]
        if n_post == 0:
            continue
        w = max(1, int(math.ceil(WINDOW_FRACTION * n_post)))
        window = float(np.mean(vals[:w]))
        peak = float(np.max(vals))
        out[f"grad{r}"] = {"initial_window": window, "max": peak,
                           "ratio": peak / window if window > 0 else (0.0 if peak == 0 else math.inf)}
    return out


def _metric_report(cfg, potential, ens, refs, traces) -> mt.MetricReport:
    req = set(cfg["metrics.request"])
    seed = cfg["seed"]
    boot = cfg["metrics.bootstrap"]
    rep = mt.MetricReport()
    live = ens.diverged < 0
    finals = ens.finals[live]
    if live.sum() < ens.chains:
        rep.warnings.append(f"{int((~live).sum())} diverged chains excluded from metrics")
    tail_mode = cfg["metrics.samples"] == "tail"
    grid = refs.grid
    hist = mt.Histogram(ens.histogram, ens.config.histogram) if (tail_mode and ens.histogram is not None) else None
    hist_data = hist if hist is not None else finals

    if "kl" in req:
        if refs.gaussian is not None:
            data = mt.GaussianMoments.from_ensemble(ens, cfg["metrics.groups"]) if tail_mode else finals
            est = mt.estimate_kl(data, refs.gaussian, method="gaussian", bootstrap=boot, seed=seed)
        elif grid is not None:
            est = mt.estimate_kl(hist_data, grid, method="histogram", bins=cfg["metrics.bins"],
                                 bootstrap=boot, seed=seed)
        else:
            raise ConfigurationError("no reference available for KL", "metrics.request")
        rep.kl, rep.kl_se, rep.kl_method = est.value, est.stderr, est.method
    if grid is not None and req & {"kl", "tv"}:
        kh = mt.estimate_kl(hist_data, grid, method="histogram", bins=cfg["metrics.bins"], bootstrap=boot, seed=seed)
        rep.kl_hist, rep.kl_hist_se = kh.value, kh.stderr
        tv = mt.estimate_tv(hist_data, grid, bins=cfg["metrics.bins"], bootstrap=boot, seed=seed)
        rep.tv, rep.tv_se = tv.value, tv.stderr
        # both sides on the same bins, so the discrete inequality is what is tested
        rep.verdicts["pinsker"] = mt.pinsker_check(rep.tv, rep.tv_se, rep.kl_hist, rep.kl_hist_se)

    meta = potential.regularity
    if "w" in req:
        beta = cfg["metrics.beta"] or (meta.dissipativity[0] if meta is not None else 2.0)
        ref = refs.gaussian if refs.gaussian is not None else grid
        if ref is None:
            raise ConfigurationError("no reference available for W_beta", "metrics.request")
        if len(finals) < 2:
            raise InsufficientDataError("need at least two surviving chains for W_beta")
        w = mt.wasserstein_beta(finals, ref=ref, beta=beta, bootstrap=cfg["metrics.w_bootstrap"], seed=seed)
        rep.w_beta, rep.w_beta_se, rep.beta = w.value, w.stderr, beta
        if w.info.get("warning"):
            rep.warnings.append(w.info["warning"])
        if rep.kl is not None:
            if meta is None or potential.name == "flat":
                rep.verdicts["bolley_villani"] = mt.Verdict(
                    "bolley_villani", None, reason="no stationary target with dissipativity constants")
            else:
                rep.verdicts["bolley_villani"] = mt.bolley_villani_check(
                    rep.kl, rep.w_beta, meta.dissipativity, float(potential.energy(np.zeros(potential.dim))),
                    potential.dim, meta.smooth_consts, meta.smooth_exponents,
                    kl_se=rep.kl_se, w_se=rep.w_beta_se, beta=beta)

    if "moments" in req:
        for s in cfg["metrics.moment_s"]:
            t = traces[f"M{s}"]
            rep.moments[f"M{s}"] = t["final"]
            rep.verdicts[f"moment_M{s}"] = mt.Verdict(
                f"moment_M{s}", bool(t["max_ratio"] <= MOMENT_RATIO_MAX), t["max_ratio"], MOMENT_RATIO_MAX,
                detail={"post_median": t["post_median"]})
        for r in (2, 4):
            if f"grad{r}" in traces:
                g = traces[f"grad{r}"]
                rep.verdicts[f"grad_moment_{r}"] = mt.Verdict(
                    f"grad_moment_{r}", bool(g["max"] <= GRAD_RATIO_MAX * g["initial_window"]),
                    g["max"], GRAD_RATIO_MAX * g["initial_window"])
    return rep


def run_certificates(cfg: ExperimentConfig, potential: PotentialSpec, control: bool = True) -> list:
    """Declared-constant certificates, plus under-constant controls that should fail."""
    meta = potential.regularity
    if meta is None:
        raise ConfigurationError(f"{potential.name} potential has no regularity metadata", "potential.name")
    trials, radius, seed = cfg["certify.trials"], cfg["certify.radius"], cfg["certify.seed"]
    reports = [
        certify_mixture_smooth(potential, trials, radius, seed),
        certify_dissipative(potential, trials, radius, seed),
    ]
    if meta.has_hessian:
        reports.append(certify_hessian_smooth(potential, trials, radius, seed))
    if control:
        scale = cfg["certify.control_scale"]
        weak = meta.with_consts(smooth_consts=[c * scale for c in meta.smooth_consts])
        ctrl = certify_mixture_smooth(potential, trials, radius, seed, meta=weak)
        ctrl.check = "control_mixture_smooth"
        ctrl.notes = ctrl.notes + [f"smoothness constants scaled by {scale:g}; expected to fail"]
        reports.append(ctrl)
    return reports


def _is_control(rep: CertificateReport) -> bool:
    return rep.check.startswith("control_")


def certificate_verdicts(reports) -> dict:
    out = {}
    for r in reports:
        ok = (not r.passed) if _is_control(r) else r.passed
        out[f"certify_{r.check}"] = mt.Verdict(f"certify_{r.check}", bool(ok), r.worst_ratio, 1.0,
                                               detail={"expected_failure": _is_control(r)})
    return out


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    """Run one ensemble and evaluate the requested metrics against the reference."""
    validate(cfg, "run")
    potential = build_potential(cfg)
    refs = build_references(cfg, potential) if set(cfg["metrics.request"]) & {"kl", "tv", "w"} else References(None, None)
    hspec = _tail_histogram_spec(cfg, refs, potential)
    chain = build_chain(cfg, potential, hspec)
    orders = tuple(sorted(set(cfg["metrics.moment_s"])))
    tracing = "moments" in cfg["metrics.request"]
    ens = run_ensemble(chain, cfg["ensemble.chains"], workers=workers, moment_orders=orders, traces=tracing)
    if ens.divergences:
        log.warning("%d of %d chains diverged (first at chain %d, step %d)", len(ens.divergences), ens.chains,
                    *ens.divergences[0])
    traces = _trace_summary(ens, cfg) if tracing else {}
    rep = _metric_report(cfg, potential, ens, refs, traces)
    certs = []
    if cfg["certify.enabled"]:
        certs = run_certificates(cfg, potential)
        rep.verdicts.update(certificate_verdicts(certs))
    return ExperimentResult(cfg, cfg.run_id(), potential, ens, refs, rep, traces, certs)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SlopeFit:
    axis: str
    group: dict
    slope: Optional[float]
    slope_se: Optional[float]
    n_points: int
    status: str
    monotone: Optional[str] = None

    @property
    def ci95(self):
        if self.slope is None:
            return None
        return (self.slope - 1.96 * self.slope_se, self.slope + 1.96 * self.slope_se)

    def to_dict(self) -> dict:
        ci = self.ci95
        return {
            "axis": self.axis,
            "group": self.group,
            "slope": self.slope,
            "slope_se": self.slope_se,
            "ci95": list(ci) if ci else None,
            "n_points": self.n_points,
            "status": self.status,
            "monotone": self.monotone,
        }


def fit_loglog_slope(x, y, se, snr_min: float = SNR_MIN):
    """Inverse-variance weighted OLS of ``log y`` on ``log x``.

    Points pass the gate when ``y > 0`` and ``y / se >= snr_min`` (exact
    values with ``se = 0`` pass).  Returns ``(slope, slope_se, n_used)``
    with ``slope = None`` when fewer than three points pass.
    """
    x, y, se = (np.asarray(v, dtype=float) for v in (x, y, se))
    with np.errstate(divide="ignore", invalid="ignore"):
        keep = (y > 0) & ((se == 0) | (y / se >= snr_min)) & (x > 0)
    n = int(keep.sum())
    if n < 3:
        return None, None, n
    lx, ly = np.log(x[keep]), np.log(y[keep])
    rel = se[keep] / y[keep]
    weighted = bool(np.all(rel > 0))
    w = 1.0 / rel ** 2 if weighted else np.ones(n)
    A = np.stack([lx, np.ones(n)], axis=1)
    AtW = A.T * w
    cov = np.linalg.inv(AtW @ A)
    coef = cov @ (AtW @ ly)
    resid = ly - A @ coef
    chi2 = float(np.sum(w * resid ** 2)) / max(1, n - 2)
    # known variances: inflate only for excess scatter; unit weights: plain OLS scaling
    cov = cov * (max(1.0, chi2) if weighted else chi2)
    return float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0))), n


@dataclass
class SweepResult:
    config: ExperimentConfig
    run_id: str
    rows: list
    slopes: list
    points: list

    @property
    def failed(self) -> bool:
        return any(r["status"] == "fail" for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "kind": "sweep",
            "run_id": self.run_id,
            "experiment": self.config["experiment"],
            "seed": self.config["seed"],
            "config": self.config.to_dict(),
            "axes": {k: list(v) for k, v in self.config.sweep_axes.items()},
            "rows": self.rows,
            "slopes": [s.to_dict() for s in self.slopes],
            "status": "fail" if self.failed else "pass",
        }


def _point_config(cfg: ExperimentConfig, point: dict) -> ExperimentConfig:
    updates = {f"sweep.{ax}": None for ax in ("eta", "dim", "mu", "epsilon")}
    if "eta" in point:
        updates["chain.eta"] = point["eta"]
    if "dim" in point:
        updates["potential.dim"] = point["dim"]
    if "mu" in point:
        updates["smoothing.mu"] = point["mu"]
    if "epsilon" in point:
        updates["chain.eta"] = planned_eta(cfg, point["epsilon"], point.get("dim", cfg["potential.dim"]))
    return cfg.replace(updates)


def planned_eta(cfg: ExperimentConfig, epsilon: float, dim: int) -> float:
    """Step size from the planner for accuracy ``epsilon`` (unit-constant heuristic ``D``)."""
    potential = build_potential(cfg.replace(potential__dim=dim))
    meta = potential.regularity
    if meta is None:
        raise ConfigurationError("the planner needs regularity metadata", "potential.name")
    alpha = cfg["planner.alpha"] or meta.alpha_G
    D = cfg["planner.D"] or default_discretization_constant(dim, meta.alpha_GN, meta.dissipativity[0])
    inp = PlannerInput(epsilon=epsilon, T=cfg["planner.T"], D=D, alpha=alpha, gamma=cfg["planner.gamma"],
                       N=meta.n_terms if cfg["planner.gamma"] else None,
                       L=max(1.0, meta.L_G) if cfg["planner.gamma"] else None)
    return plan_step_size(inp)


def _row(point: dict, res: ExperimentResult) -> dict:
    m = res.metrics
    verdicts = {k: v.passed for k, v in sorted(m.verdicts.items())}
    return {
        "point": point,
        "eta": float(res.ensemble.config.etas()[0]),
        "dim": res.potential.dim,
        "kl": m.kl,
        "kl_se": m.kl_se,
        "kl_method": m.kl_method,
        "tv": m.tv,
        "tv_se": m.tv_se,
        "w_beta": m.w_beta,
        "w_beta_se": m.w_beta_se,
        "verdicts": verdicts,
        "status": "fail" if res.failed else "pass",
        "run_id": res.run_id,
    }


def _monotone(values) -> str:
    d = np.diff(values)
    if np.all(d > 0):
        return "increasing"
    if np.all(d < 0):
        return "decreasing"
    return "none"


def run_sweep(cfg: ExperimentConfig, workers: Optional[int] = None) -> SweepResult:
    """Run every grid point of the sweep axes and fit log-log slopes along each axis."""
    validate(cfg, "sweep")
    axes = cfg.sweep_axes
    names = list(axes)
    points = [dict(zip(names, combo)) for combo in itertools.product(*(axes[n] for n in names))]
    configs = [_point_config(cfg, p) for p in points]
    workers = workers or 1
    if workers > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: run_experiment(c, workers=1), configs))
    else:
        results = [run_experiment(c, workers=workers) for c in configs]
    rows = [_row(p, r) for p, r in zip(points, results)]
    metric = cfg["sweep.fit"]
    slopes = []
    for ax in names:
        if len(axes[ax]) < 2:
            continue
        others = [n for n in names if n != ax]
        groups = {}
        for row in rows:
            key = tuple(row["point"][n] for n in others)
            groups.setdefault(key, []).append(row)
        for key, grp in groups.items():
            xs = [r["eta"] if ax == "epsilon" else r["point"][ax] for r in grp]
            ys = [r[metric] if r[metric] is not None else float("nan") for r in grp]
            ses = [r[f"{metric}_se"] if r[f"{metric}_se"] is not None else float("nan") for r in grp]
            slope, se, n = fit_loglog_slope(xs, ys, ses)
            order = np.argsort(xs)
            mono = _monotone(np.asarray(ys)[order]) if len(ys) >= 2 and np.all(np.isfinite(ys)) else None
            slopes.append(SlopeFit(ax if ax != "epsilon" else "eta(epsilon)", dict(zip(others, key)), slope, se, n,
                                   "ok" if slope is not None else "not-identifiable", mono))
    return SweepResult(cfg, cfg.run_id(), rows, slopes, points)


# ---------------------------------------------------------------------------
# certification only


@dataclass
class CertifyResult:
    config: ExperimentConfig
    run_id: str
    potential: PotentialSpec
    reports: list
    verdicts: dict

    @property
    def failed(self) -> bool:
        return any(v.passed is False for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "kind": "certify",
            "run_id": self.run_id,
            "experiment": self.config["experiment"],
            "seed": self.config["seed"],
            "config": self.config.to_dict(),
            "potential": self.potential.describe(),
            "regularity_notes": list(self.potential.regularity.notes),
            "certificates": [r.to_dict() for r in self.reports],
            "verdicts": {k: v.to_dict() for k, v in sorted(self.verdicts.items())},
            "status": "fail" if self.failed else "pass",
        }


def run_certify(cfg: ExperimentConfig) -> CertifyResult:
    validate(cfg, "certify")
    potential = build_potential(cfg)
    reports = run_certificates(cfg, potential)
    return CertifyResult(cfg, cfg.run_id(), potential, reports, certificate_verdicts(reports))
