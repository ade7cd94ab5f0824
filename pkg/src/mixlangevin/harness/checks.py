"""Monte Carlo checks of the smoothing and generalized-Gaussian bounds.

A config with ``checks.request`` runs these instead of an ensemble.  Every
check produces verdicts ``lhs <= rhs`` where ``rhs`` already carries a
``Z_SE`` standard-error allowance.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from ..errors import CapabilityError
from ..gengauss import (
    GenGaussSampler,
    SmoothingConfig,
    moment_pnorm,
    smoothed_gradient,
    smoothed_potential,
    smoothing_constants,
    smoothing_grad_bound,
    smoothing_value_bound,
    stochastic_gradient,
    stochastic_variance_bound,
)
from ..metrics import Verdict
from ..sampler import compiled_available, replay_noise, run_chain, ula_step
from .config import ExperimentConfig, validate
from .experiment import build_chain, build_potential

__all__ = ["ChecksResult", "run_checks", "CHECKS", "ball_points"]

Z_SE = 3.0
CHECKS = ("gengauss_identity", "gengauss_bracket", "smoothing_bounds", "variance_bound", "unbiased", "mu0_replay")
# spawn-key roots, one per check, so adding a check never moves another's streams
_STREAM = {name: 100 + i for i, name in enumerate(CHECKS)}


def ball_points(n: int, dim: int, radius: float, rng) -> np.ndarray:
    """``n`` points uniform in the centred ball of the given radius."""
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * (radius * rng.random((n, 1)) ** (1.0 / dim))


def _label(check, **params) -> str:
    inner = ",".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in params.items())
    return f"{check}[{inner}]"


def _rng(cfg, check, *key):
    ss = np.random.SeedSequence(cfg["seed"], spawn_key=(_STREAM[check],) + tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _sampler(cfg, check, p, dim, *key) -> GenGaussSampler:
    return GenGaussSampler(p, dim, np.random.SeedSequence(cfg["seed"], spawn_key=(_STREAM[check],) + key))


def _dims(cfg):
    return cfg["checks.dims"] or (cfg["potential.dim"],)


def _potential(cfg, dim):
    u = build_potential(cfg.replace({"potential.dim": dim}))
    if u.regularity is None:
        raise CapabilityError(f"{u.name} potential declares no smoothness constants")
    return u


def _gengauss(cfg, which):
    out = {}
    draws = cfg["checks.draws"]
    for i, d in enumerate(_dims(cfg)):
        for j, p in enumerate(cfg["checks.p"]):
            for k, n in enumerate(cfg["checks.n"]):
                g = _sampler(cfg, "gengauss_identity", p, d, i, j, k)
                mc = moment_pnorm(g, n, mc_samples=draws, z=Z_SE)
                base = {"dim": d, "p": p, "n": n, "estimate": mc.estimate, "stderr": mc.stderr, "exact": mc.exact}
                if which == "gengauss_identity" and mc.identity is not None:
                    name = _label(which, d=d, p=float(p), n=float(n))
                    allow = Z_SE * mc.stderr
                    out[name] = Verdict(name, bool(mc.identity_ok), abs(mc.estimate - mc.identity), allow, allow,
                                        detail={**base, "target": mc.identity})
                elif which == "gengauss_bracket":
                    name = _label(which, d=d, p=float(p), n=float(n))
                    allow = Z_SE * mc.stderr
                    # worst side of the two-sided bracket, as lhs <= rhs
                    gap = max(mc.lower - mc.estimate, mc.estimate - mc.upper)
                    out[name] = Verdict(name, bool(mc.bracket_ok), gap, allow, allow,
                                        detail={**base, "lower": mc.lower, "upper": mc.upper})
    return out


def _smoothing_grid(cfg):
    for i, d in enumerate(_dims(cfg)):
        u = _potential(cfg, d)
        N, L, alpha = smoothing_constants(u.regularity)
        for j, mu in enumerate(cfg["checks.mu"]):
            for k, p in enumerate(cfg["checks.p"]):
                yield (i, j, k), u, d, float(mu), float(p), (N, L, alpha)


def _worst(name, rows, detail):
    """Collapse per-point ``(lhs, bound, allowance)`` rows into one verdict."""
    slack = [b + a - x for x, b, a in rows]
    w = int(np.argmin(slack))
    lhs, bound, allow = rows[w]
    return Verdict(name, bool(min(slack) >= 0), float(lhs), float(bound + allow), float(allow),
                   detail={**detail, "points": len(rows), "bound": bound, "worst_point": w})


def _smoothing_bounds(cfg):
    out = {}
    n_pts, draws = cfg["checks.points"], cfg["checks.draws"]
    for key, u, d, mu, p, (N, L, alpha) in _smoothing_grid(cfg):
        sm = SmoothingConfig(mu, p, draws)
        pts = ball_points(n_pts, d, cfg["checks.radius"], _rng(cfg, "smoothing_bounds", *key))
        vb = smoothing_value_bound(N, L, alpha, mu, d, p)
        gb = smoothing_grad_bound(N, L, alpha, mu, d, p)
        vrows, grows = [], []
        for t, x in enumerate(pts):
            v, v_se = smoothed_potential(u, sm, x, _sampler(cfg, "smoothing_bounds", p, d, *key, t, 0))
            g, tr = smoothed_gradient(u, sm, x, _sampler(cfg, "smoothing_bounds", p, d, *key, t, 1))
            vrows.append((abs(v - float(u.energy(x))), vb, Z_SE * v_se))
            grows.append((float(np.linalg.norm(g - u.grad(x))), gb, Z_SE * math.sqrt(tr / draws)))
        info = {"dim": d, "mu": mu, "p": p, "alpha": alpha, "L": L, "N": N}
        for which, rows in (("value", vrows), ("grad", grows)):
            name = _label(f"smoothing_{which}", d=d, mu=mu, p=p)
            out[name] = _worst(name, rows, info)
    return out


def _variance_bound(cfg):
    out = {}
    n_pts, draws = cfg["checks.points"], cfg["checks.draws"]
    for key, u, d, mu, p, (N, L, alpha) in _smoothing_grid(cfg):
        sm = SmoothingConfig(mu, p, draws)
        pts = ball_points(n_pts, d, cfg["checks.radius"], _rng(cfg, "variance_bound", *key))
        bound = stochastic_variance_bound(N, L, alpha, mu, d, p)
        rows = []
        for t, x in enumerate(pts):
            g = stochastic_gradient(u, sm, x, _sampler(cfg, "variance_bound", p, d, *key, t), size=draws)
            sq = np.sum((g - g.mean(axis=0)) ** 2, axis=1)
            var = float(sq.sum() / (draws - 1))
            rows.append((var, bound, Z_SE * float(sq.std(ddof=1)) / math.sqrt(draws)))
        name = _label("variance_bound", d=d, mu=mu, p=p)
        out[name] = _worst(name, rows, {"dim": d, "mu": mu, "p": p, "alpha": alpha, "L": L, "N": N})
    return out


def _unbiased(cfg):
    out = {}
    n_pts, draws = cfg["checks.points"], cfg["checks.draws"]
    for key, u, d, mu, p, _ in _smoothing_grid(cfg):
        sm = SmoothingConfig(mu, p, draws)
        pts = ball_points(n_pts, d, cfg["checks.radius"], _rng(cfg, "unbiased", *key))
        rows = []
        for t, x in enumerate(pts):
            g = stochastic_gradient(u, sm, x, _sampler(cfg, "unbiased", p, d, *key, t, 0), size=draws)
            tr_a = float(np.sum(g.var(axis=0, ddof=1)))
            ref, tr_b = smoothed_gradient(u, sm, x, _sampler(cfg, "unbiased", p, d, *key, t, 1))
            diff = float(np.linalg.norm(g.mean(axis=0) - ref))
            rows.append((diff, 0.0, Z_SE * math.sqrt((tr_a + tr_b) / draws)))
        name = _label("unbiased", d=d, mu=mu, p=p)
        out[name] = _worst(name, rows, {"dim": d, "mu": mu, "p": p})
    return out


def _mu0_replay(cfg):
    """``mu = 0`` stochastic chains against exact chains on each backend.

    The step-by-step ``ula_step`` replay is compared with the Python backend,
    whose arithmetic it shares; the compiled kernel may differ from it in the
    last bits through a different evaluation order.
    """
    out = {}
    backends = [b for b in ("compiled", "python") if b == "python" or compiled_available()]
    for d in _dims(cfg):
        point = cfg.replace({"potential.dim": d, "chain.stride": 1, "chain.burn_in": 0})
        base = build_chain(point, build_potential(point))
        stoch_cfg = SmoothingConfig(0.0, cfg["smoothing.p"])
        equal = {}
        for b in backends:
            exact = run_chain(dataclasses.replace(base, gradient_source="exact", smoothing=None, backend=b))
            stoch = run_chain(dataclasses.replace(base, gradient_source="stochastic", smoothing=stoch_cfg, backend=b))
            equal[b] = bool(np.array_equal(exact.iterates, stoch.iterates)
                            and np.array_equal(exact.final_state, stoch.final_state))
        chain = dataclasses.replace(base, gradient_source="stochastic", smoothing=stoch_cfg, backend="python")
        x, noise, _ = replay_noise(chain, 0)
        mismatch = 0
        for k, eta in enumerate(chain.etas()):
            x = ula_step(x, eta, stochastic_gradient(chain.potential, stoch_cfg, x), noise[k])
            mismatch += int(not np.array_equal(x, stoch.iterates[k]))
        name = _label("mu0_replay", d=d)
        ok = all(equal.values()) and mismatch == 0
        out[name] = Verdict(name, ok, float(mismatch + sum(not e for e in equal.values())), 0.0, 0.0,
                            detail={"dim": d, "steps": chain.steps, "exact_equal": equal,
                                    "replay_mismatches": mismatch})
    return out


_RUNNERS = {
    "gengauss_identity": lambda cfg: _gengauss(cfg, "gengauss_identity"),
    "gengauss_bracket": lambda cfg: _gengauss(cfg, "gengauss_bracket"),
    "smoothing_bounds": _smoothing_bounds,
    "variance_bound": _variance_bound,
    "unbiased": _unbiased,
    "mu0_replay": _mu0_replay,
}


@dataclass
class ChecksResult:
    config: ExperimentConfig
    run_id: str
    verdicts: dict

    @property
    def failed(self) -> bool:
        return any(v.passed is False for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "kind": "checks",
            "run_id": self.run_id,
            "experiment": self.config["experiment"],
            "seed": self.config["seed"],
            "config": self.config.to_dict(),
            "verdicts": {k: v.to_dict() for k, v in sorted(self.verdicts.items())},
            "status": "fail" if self.failed else "pass",
        }


def run_checks(cfg: ExperimentConfig) -> ChecksResult:
    validate(cfg, "checks")
    verdicts = {}
    for check in cfg["checks.request"]:
        verdicts.update(_RUNNERS[check](cfg))
    return ChecksResult(cfg, cfg.run_id(), verdicts)
