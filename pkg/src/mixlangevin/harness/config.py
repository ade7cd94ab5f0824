"""Flat ``key = value`` experiment configs.

One setting per line, ``#`` starts a comment, section names are dotted
prefixes (``chain.eta = 0.1``) and lists are comma separated
(``sweep.eta = 0.2, 0.1, 0.05``).  Mixture terms are ``L:alpha`` pairs.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from ..errors import ConfigurationError

__all__ = ["ExperimentConfig", "parse_config_text", "load_config", "apply_overrides", "SCHEMA"]


def _float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _int(v: str) -> int:
    f = float(v)
    if f != int(f):
        raise ValueError("not an integer")
    return int(f)


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _list(conv: Callable) -> Callable:
    def parse(v: str):
        items = [s.strip() for s in v.split(",") if s.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(conv(s) for s in items)

    return parse


def _term(v: str):
    L, _, alpha = v.partition(":")
    if not alpha:
        raise ValueError("terms are L:alpha pairs")
    return (_float(L), _float(alpha))


def _choice(*options):
    def parse(v: str):
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v

    return parse


# key -> (parser, default); a default of None means optional and absent
SCHEMA: dict[str, tuple[Callable, Any]] = {
    "experiment": (str, "experiment"),
    "seed": (_int, 0),
    "potential.name": (_choice("quadratic", "mixture_norm", "linear_tail", "flat"), None),
    "potential.dim": (_int, 1),
    "potential.a": (_list(_float), None),
    "potential.terms": (_list(_term), None),
    "potential.alphas": (_list(_float), None),
    "potential.metadata": (_choice("proved", "quoted", "declared"), "proved"),
    "chain.eta": (_float, 0.1),
    "chain.steps": (_int, 1000),
    "chain.burn_in": (_int, 0),
    "chain.gradient": (_choice("exact", "stochastic", "smoothed"), "exact"),
    "chain.init": (_choice("gaussian_over_L", "point"), "gaussian_over_L"),
    "chain.init_L": (_float, 1.0),
    "chain.init_point": (_list(_float), None),
    "chain.stride": (_int, None),
    "chain.backend": (_choice("compiled", "python"), None),
    "chain.divergence_limit": (_float, 1e6),
    "smoothing.mu": (_float, None),
    "smoothing.p": (_float, 2.0),
    "smoothing.mc_samples": (_int, 1024),
    "ensemble.chains": (_int, 1000),
    "metrics.request": (_list(_choice("kl", "tv", "w", "moments")), ("kl", "tv")),
    "metrics.samples": (_choice("final", "tail"), "final"),
    "metrics.beta": (_float, None),
    "metrics.moment_s": (_list(_int), (4,)),
    "metrics.bootstrap": (_int, 200),
    "metrics.w_bootstrap": (_int, 100),
    "metrics.bins": (_int, None),
    "metrics.groups": (_int, 16),
    "reference.kind": (_choice("auto", "grid", "gaussian"), "auto"),
    "reference.bounds": (_float, 10.0),
    "reference.resolution": (_int, None),
    "sweep.eta": (_list(_float), None),
    "sweep.dim": (_list(_int), None),
    "sweep.mu": (_list(_float), None),
    "sweep.epsilon": (_list(_float), None),
    "sweep.fit": (_choice("kl", "tv"), "kl"),
    "planner.T": (_float, 1.0),
    "planner.D": (_float, None),
    "planner.alpha": (_float, None),
    "planner.gamma": (_float, None),
    "checks.request": (_list(_choice("gengauss_identity", "gengauss_bracket", "smoothing_bounds",
                                     "variance_bound", "unbiased", "mu0_replay")), None),
    "checks.dims": (_list(_int), None),
    "checks.mu": (_list(_float), (0.1,)),
    "checks.p": (_list(_float), (2.0,)),
    "checks.n": (_list(_float), (2.0, 4.0)),
    "checks.points": (_int, 20),
    "checks.radius": (_float, 5.0),
    "checks.draws": (_int, 100_000),
    "certify.enabled": (_bool, False),
    "certify.trials": (_int, 10_000),
    "certify.radius": (_float, 10.0),
    "certify.seed": (_int, 0),
    "certify.control_scale": (_float, 1e-3),
}

SWEEP_AXES = ("eta", "dim", "mu", "epsilon")


def _format(v) -> str:
    """Canonical text of a parsed value."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(f"{_format(a)}:{_format(b)}" for a, b in v)
        return ", ".join(_format(x) for x in v)
    return str(v)


@dataclass
class ExperimentConfig:
    """Validated experiment settings keyed by their dotted config names."""

    values: dict = field(default_factory=dict)
    source: Optional[str] = None

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise KeyError(key)
        return self.values.get(key, SCHEMA[key][1])

    def get(self, key, default=None):
        v = self[key]
        return default if v is None else v

    def explicit(self, key) -> bool:
        return key in self.values

    @property
    def sweep_axes(self) -> dict:
        return {ax: self.values[f"sweep.{ax}"] for ax in SWEEP_AXES if f"sweep.{ax}" in self.values}

    def replace(self, updates: Optional[dict] = None, **kw) -> "ExperimentConfig":
        """Copy with settings replaced; ``None`` removes a key.  Keywords spell dots as ``__``."""
        vals = dict(self.values)
        merged = dict(updates or {})
        merged.update({k.replace("__", "."): v for k, v in kw.items()})
        for key, v in merged.items():
            if key not in SCHEMA:
                raise ConfigurationError(f"unknown config key {key!r}", key)
            if v is None:
                vals.pop(key, None)
            else:
                vals[key] = v
        return ExperimentConfig(vals, self.source)

    def canonical_text(self) -> str:
        """Sorted ``key = value`` lines of the explicit settings (defaults omitted)."""
        return "".join(f"{k} = {_format(self.values[k])}\n" for k in sorted(self.values))

    def run_id(self) -> str:
        text = self.canonical_text()
        if "seed" not in self.values:
            text += f"seed = {self['seed']}\n"
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {k: _format(self.values[k]) for k in sorted(self.values)}


def _parse_value(key: str, raw: str):
    if key not in SCHEMA:
        raise ConfigurationError(f"unknown config key {key!r}", key)
    parser = SCHEMA[key][0]
    try:
        return parser(raw.strip())
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"invalid value {raw.strip()!r}: {exc}", key) from None


def parse_config_text(text: str, source: Optional[str] = None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'", f"{source or '<text>'}:{lineno}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key", key)
        values[key] = _parse_value(key, raw)
    cfg = ExperimentConfig(values, source)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}", str(path)) from None
    return parse_config_text(text, str(path))


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply ``key=value`` strings (the ``--set`` flag) and revalidate."""
    values = dict(cfg.values)
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigurationError(f"override {item!r} is not key=value", item)
        values[key.strip()] = _parse_value(key.strip(), raw)
    out = ExperimentConfig(values, cfg.source)
    validate(out)
    return out


def validate(cfg: ExperimentConfig, mode: Optional[str] = None) -> None:
    """Cross-field checks; raises ``ConfigurationError`` naming the field.

    ``mode`` adds the checks of one command: ``"run"`` and ``"sweep"`` check
    that the requested metrics are computable, ``"sweep"`` also needs an axis.
    """
    name = cfg["potential.name"]
    checks = cfg["checks.request"] or ()
    if name is None and not (checks and set(checks) <= {"gengauss_identity", "gengauss_bracket"}):
        raise ConfigurationError("potential.name is required", "potential.name")
    dim = cfg["potential.dim"]
    if dim < 1:
        raise ConfigurationError("dimension must be >= 1", "potential.dim")
    if name == "mixture_norm" and cfg["potential.terms"] is None:
        raise ConfigurationError("mixture_norm needs potential.terms (L:alpha pairs)", "potential.terms")
    if cfg["potential.a"] is not None and len(cfg["potential.a"]) not in (1, dim):
        raise ConfigurationError(f"potential.a needs 1 or {dim} entries", "potential.a")
    if cfg["chain.init"] == "point":
        pt = cfg["chain.init_point"]
        if pt is None or len(pt) != dim:
            raise ConfigurationError(f"chain.init_point needs {dim} coordinates", "chain.init_point")
    if not 0 < cfg["chain.eta"] <= 1:
        raise ConfigurationError("step size must lie in (0, 1]", "chain.eta")
    if cfg["chain.steps"] < 1:
        raise ConfigurationError("chain.steps must be >= 1", "chain.steps")
    if not 0 <= cfg["chain.burn_in"] < cfg["chain.steps"]:
        raise ConfigurationError("burn_in must lie in [0, steps)", "chain.burn_in")
    if cfg["ensemble.chains"] < 1:
        raise ConfigurationError("ensemble.chains must be >= 1", "ensemble.chains")
    if not cfg["metrics.request"]:
        raise ConfigurationError("request at least one metric", "metrics.request")
    for s in cfg["metrics.moment_s"]:
        if s < 2 or s % 2:
            raise ConfigurationError("moment orders must be even and >= 2", "metrics.moment_s")
    if cfg["sweep.epsilon"] is not None and cfg["sweep.eta"] is not None:
        raise ConfigurationError("sweep.eta and sweep.epsilon both set the step size", "sweep.epsilon")
    if cfg["metrics.samples"] == "tail" and cfg["chain.burn_in"] == 0:
        raise ConfigurationError("tail samples need chain.burn_in > 0", "chain.burn_in")
    if mode == "checks" or checks:
        if not checks:
            raise ConfigurationError("checks mode needs checks.request", "checks.request")
        if min(cfg["checks.dims"] or (dim,)) < 1:
            raise ConfigurationError("dimensions must be >= 1", "checks.dims")
        if cfg["checks.points"] < 1 or cfg["checks.draws"] < 2:
            raise ConfigurationError("checks need points >= 1 and draws >= 2", "checks.draws")
        if any(not p > 1 for p in cfg["checks.p"]):
            raise ConfigurationError("shape p must exceed 1", "checks.p")
        if any(not mu > 0 for mu in cfg["checks.mu"]):
            raise ConfigurationError("smoothing radii must be positive", "checks.mu")
        return
    if mode not in ("run", "sweep"):
        return
    if mode == "sweep" and not cfg.sweep_axes:
        raise ConfigurationError("sweep mode needs at least one sweep.* axis", "sweep")
    dims = cfg["sweep.dim"] if mode == "sweep" and cfg["sweep.dim"] else (dim,)
    wants_grid = any(m in cfg["metrics.request"] for m in ("tv",)) or cfg["reference.kind"] == "grid"
    if wants_grid and max(dims) > 2:
        raise ConfigurationError(
            f"TV and grid references need dim <= 2 (got {max(dims)}); request kl with a Gaussian reference only",
            "metrics.request")
    if "kl" in cfg["metrics.request"] and max(dims) > 2 and name not in ("quadratic", "flat"):
        raise ConfigurationError(
            f"KL at dim {max(dims)} needs a closed-form Gaussian reference; {name} has none", "metrics.request")
    if cfg["reference.kind"] == "gaussian" and name not in ("quadratic", "flat"):
        raise ConfigurationError(f"{name} has no closed-form Gaussian reference", "reference.kind")
