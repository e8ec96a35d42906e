"""Run configuration: loading, command-line overrides and validation.

A configuration is a TOML document. Top-level scalars (``seed``,
``threads``) apply to every subcommand; each subcommand reads its own
table:

``[path]``
    signal, noise, n, p and replicate of a single simulated path
    (``simulate``, ``estimate``, ``select``).
``[estimate]``
    ``model`` (list of basis indices) and ``estimator`` (``lse`` or ``shrunk``).
``[select]``
    ``family``, ``estimator``, ``kappa`` and ``penalty_scale``.
``[experiment]``
    fields of :class:`perisel.risk_lab.ExperimentConfig`
    (``risk``, ``oracle-check``, ``rate-study``).
``[oracle]``
    ``forms``: bound forms checked by ``oracle-check``.
``[rate]``
    ``band``, ``cap`` and ``allow_coarse_grid`` for ``rate-study``.
``[lower_bound]``
    ``n_values``, ``beta``, ``nu``, ``replicates``, ``estimators``,
    ``kappa``, ``r`` and ``epsilon``.
``[improve]``
    ``signal``, ``family``, ``n``, ``replicates`` and ``kappa``.

Validation never raises on the first problem; it collects every issue with
the dotted path of the offending field.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .noise import NoiseModel, lambda_star
from .risk_lab import HONEST_ESTIMATORS, ExperimentConfig, grid_p
from .selection import BOUND_FORMS, GENERAL_FAMILY_CAP

__all__ = [
    "ConfigIssue",
    "ConfigError",
    "load_config",
    "parse_override",
    "apply_overrides",
    "validate_config",
    "COMMANDS",
    "MIN_REPLICATES",
]

COMMANDS = ("simulate", "estimate", "select", "risk", "oracle-check", "rate-study",
            "lower-bound", "improve", "constants")

MIN_REPLICATES = 100

SECTIONS = {
    "simulate": ("path",),
    "estimate": ("path", "estimate"),
    "select": ("path", "select"),
    "risk": ("experiment",),
    "oracle-check": ("experiment", "oracle"),
    "rate-study": ("experiment", "rate"),
    "lower-bound": ("lower_bound",),
    "improve": ("improve",),
    "constants": (),
}

KNOWN_KEYS = {
    "": {"seed", "threads", "path", "estimate", "select", "experiment", "oracle", "rate",
         "lower_bound", "improve"},
    "path": {"signal", "noise", "n", "p", "replicate"},
    "estimate": {"model", "estimator"},
    "select": {"family", "estimator", "kappa", "penalty_scale"},
    "oracle": {"forms"},
    "rate": {"band", "cap", "allow_coarse_grid"},
    "lower_bound": {"n_values", "beta", "nu", "replicates", "estimators", "kappa", "r", "epsilon"},
    "improve": {"signal", "family", "n", "replicates", "kappa"},
}


@dataclass(frozen=True)
class ConfigIssue:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ConfigError(ValueError):
    """Raised with the full list of validation issues."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


def load_config(path: str | Path | None) -> dict:
    """Parse a TOML file; ``None`` gives an empty configuration."""
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError([ConfigIssue("--config", f"cannot read {path}: {exc.strerror}")]) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([ConfigIssue("--config", f"not valid TOML: {exc}")]) from exc


def parse_override(text: str):
    """Split ``a.b=value``; the value is read as a TOML literal when it
    parses as one and kept as a bare string otherwise."""
    if "=" not in text:
        raise ConfigError([ConfigIssue("--override", f"expected key=value, got {text!r}")])
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key or any(not part for part in key.split(".")):
        raise ConfigError([ConfigIssue("--override", f"malformed key in {text!r}")])
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.split("."), value


def apply_overrides(cfg: dict, overrides) -> dict:
    """Return a copy of ``cfg`` with every ``key=value`` override applied."""
    out = copy.deepcopy(cfg)
    for text in overrides or ():
        parts, value = parse_override(text)
        node = out
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError([ConfigIssue(".".join(parts), f"{part!r} is not a table")])
            node = nxt
        node[parts[-1]] = value
    return out


# ---------------------------------------------------------------------------
# Validation


class _Collector:
    def __init__(self):
        self.issues = []

    def add(self, path: str, message: str) -> None:
        self.issues.append(ConfigIssue(path, message))


def _check_keys(section: dict, name: str, out: _Collector) -> None:
    known = KNOWN_KEYS.get(name)
    if known is None or not isinstance(section, dict):
        return
    for key in sorted(set(section) - known):
        out.add(f"{name}.{key}" if name else key, "unknown key")


def _check_noise(d, path: str, out: _Collector):
    if not isinstance(d, dict):
        out.add(path, "noise must be a table with a 'kind' key")
        return None
    try:
        return NoiseModel.from_dict(d)
    except (ValueError, KeyError, TypeError) as exc:
        msg = str(exc)
        if d.get("kind") == "ou" and "theta" in msg:
            msg = (f"OU requires theta <= 0 (got {d.get('theta')}): a positive drift makes "
                   "the noise explode instead of settling to a stationary law")
        elif d.get("kind") == "car" and "K_delta" in msg:
            msg = ("CAR coefficients must lie in the stability set K_delta, where the "
                   f"noise covariance is uniformly controlled ({msg})")
        out.add(path, msg)
        return None


def _check_p(p, path: str, out: _Collector) -> None:
    if isinstance(p, bool) or not isinstance(p, int):
        out.add(path, f"p must be an integer, got {p!r}")
    elif p < 1:
        out.add(path, f"p must be positive, got {p}")
    elif p % 2 == 0:
        out.add(path, f"p must be odd (got {p}): the trigonometric basis is orthonormal "
                      "on the sampling grid only for an odd number of points per period")


def _check_int(v, path: str, out: _Collector, low: int = 1) -> bool:
    if isinstance(v, bool) or not isinstance(v, int) or v < low:
        out.add(path, f"must be an integer >= {low}, got {v!r}")
        return False
    return True


def _check_replicates(v, path: str, out: _Collector) -> None:
    if isinstance(v, bool) or not isinstance(v, int):
        out.add(path, f"replicates must be an integer, got {v!r}")
    elif v < MIN_REPLICATES:
        out.add(path, f"replicates must be >= {MIN_REPLICATES} (got {v}); fewer draws "
                      "give unreliable standard errors")


def _check_family(d, path: str, out: _Collector) -> None:
    if not isinstance(d, dict):
        out.add(path, "family must be a table")
        return
    kind = d.get("kind", "ordered")
    if kind == "ordered":
        top = d.get("n_max", "auto")
        if top not in ("auto", "n", "p"):
            _check_int(top, f"{path}.n_max", out)
    elif kind == "general":
        models = d.get("models")
        if not isinstance(models, list) or not models:
            out.add(f"{path}.models", "a general family needs a non-empty list of models")
            return
        if len(models) > GENERAL_FAMILY_CAP:
            out.add(f"{path}.models", f"at most {GENERAL_FAMILY_CAP} models are enumerated")
        for i, m in enumerate(models):
            if not isinstance(m, list) or not m or any(
                    isinstance(j, bool) or not isinstance(j, int) or j < 1 for j in m):
                out.add(f"{path}.models[{i}]", "a model is a non-empty list of indices >= 1")
        w = d.get("weights")
        if w is not None:
            if not isinstance(w, list) or len(w) != len(models):
                out.add(f"{path}.weights", "one weight per model is required")
            elif any(not isinstance(x, (int, float)) or x < 1 for x in w):
                out.add(f"{path}.weights", "weights must be >= 1")
    else:
        out.add(f"{path}.kind", f"unknown family kind {kind!r}")


def _check_signal(d, path: str, out: _Collector) -> None:
    from .risk_lab import make_signal
    if not isinstance(d, dict):
        out.add(path, "signal must be a table with a 'kind' key")
        return
    try:
        make_signal(d)
    except (ValueError, KeyError, TypeError) as exc:
        out.add(path, f"invalid signal: {exc}")


def _check_choice(v, choices, path: str, out: _Collector) -> None:
    if v not in choices:
        out.add(path, f"must be one of {list(choices)}, got {v!r}")


def _check_positive(v, path: str, out: _Collector) -> bool:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not (math.isfinite(v) and v > 0):
        out.add(path, f"must be a positive number, got {v!r}")
        return False
    return True


def _validate_path(cfg: dict, out: _Collector) -> None:
    sec = cfg.get("path", {})
    _check_keys(sec, "path", out)
    if "noise" in sec:
        _check_noise(sec["noise"], "path.noise", out)
    if "signal" in sec:
        _check_signal(sec["signal"], "path.signal", out)
    _check_int(sec.get("n", 100), "path.n", out)
    _check_p(sec.get("p", 1001), "path.p", out)
    _check_int(sec.get("replicate", 0), "path.replicate", out, low=0)


def _validate_experiment(cfg: dict, command: str, out: _Collector) -> None:
    sec = cfg.get("experiment", {})
    if not isinstance(sec, dict):
        out.add("experiment", "must be a table")
        return
    known = set(ExperimentConfig.__dataclass_fields__)
    for key in sorted(set(sec) - known):
        out.add(f"experiment.{key}", "unknown key")
    models = []
    for i, nd in enumerate(sec.get("noises", [{"kind": "white"}])):
        m = _check_noise(nd, f"experiment.noises[{i}]", out)
        if m is not None:
            models.append(m)
    for i, sd in enumerate(sec.get("signals", [])):
        _check_signal(sd, f"experiment.signals[{i}]", out)
    mode = sec.get("mode", "continuous")
    _check_choice(mode, ("continuous", "discrete"), "experiment.mode", out)
    _check_choice(sec.get("estimator", "lse"), ("lse", "shrunk"), "experiment.estimator", out)
    _check_choice(sec.get("engine", "folded"), ("folded", "path", "noiseless"), "experiment.engine", out)
    if sec.get("bound_form") is not None:
        _check_choice(sec["bound_form"], BOUND_FORMS, "experiment.bound_form", out)
    _check_replicates(sec.get("replicates", 2000), "experiment.replicates", out)
    if "family" in sec:
        _check_family(sec["family"], "experiment.family", out)
    ns = sec.get("n_values", [100])
    ok_ns = isinstance(ns, list) and ns and all(_check_int(n, f"experiment.n_values[{i}]", out)
                                                for i, n in enumerate(ns))
    if not ok_ns and not (isinstance(ns, list) and ns):
        out.add("experiment.n_values", "needs a non-empty list of horizons")
    kappa = sec.get("kappa")
    if kappa is not None and _check_positive(kappa, "experiment.kappa", out) and models:
        need = max(lambda_star(m) for m in models)
        if kappa < need:
            out.add("experiment.kappa", f"kappa={kappa} is below the largest eigenvalue "
                                        f"bound {need:g} of the noise set")
    for key in ("beta", "r", "nu"):
        if key in sec:
            _check_positive(sec[key], f"experiment.{key}", out)
    if "penalty_scale" in sec:
        _check_positive(sec["penalty_scale"], "experiment.penalty_scale", out)
    rule = sec.get("p_rule")
    if rule is not None and rule not in ("fine", "sqrt", "cbrt"):
        _check_p(rule, "experiment.p_rule", out)
    if command == "rate-study":
        if ok_ns and len(set(ns)) < 4:
            out.add("experiment.n_values", "a rate study needs at least four horizons")
        if mode == "discrete":
            beta = sec.get("beta", 2.0)
            if isinstance(beta, (int, float)) and beta <= 1.0:
                out.add("experiment.beta", f"discrete rate studies need beta > 1 (got {beta}); "
                                           "the sampled-norm rate holds only for beta >= 1 + eps")
            allow = cfg.get("rate", {}).get("allow_coarse_grid", False)
            if ok_ns and not allow and (rule is None or rule in ("sqrt", "cbrt") or isinstance(rule, int)):
                for n in ns:
                    try:
                        p = grid_p(rule or "sqrt", n)
                    except (TypeError, ValueError):
                        break
                    if p < math.sqrt(n):
                        out.add("experiment.p_rule",
                                f"p={p} < sqrt(n)={math.sqrt(n):.3g} at n={n}: the sampled-norm "
                                "rate needs p >= sqrt(n); set rate.allow_coarse_grid = true "
                                "to run a flagged comparison")
                        break


def _validate_lower_bound(cfg: dict, out: _Collector) -> None:
    sec = cfg.get("lower_bound", {})
    _check_keys(sec, "lower_bound", out)
    for i, n in enumerate(sec.get("n_values", [256, 1024])):
        _check_int(n, f"lower_bound.n_values[{i}]", out)
    for key in ("beta", "nu", "kappa", "r"):
        if key in sec:
            _check_positive(sec[key], f"lower_bound.{key}", out)
    _check_replicates(sec.get("replicates", 2000), "lower_bound.replicates", out)
    for i, e in enumerate(sec.get("estimators", list(HONEST_ESTIMATORS))):
        _check_choice(e, HONEST_ESTIMATORS, f"lower_bound.estimators[{i}]", out)
    eps = sec.get("epsilon", 0.5)
    if not isinstance(eps, (int, float)) or not 0 < eps < 1:
        out.add("lower_bound.epsilon", f"must lie in (0, 1), got {eps!r}")


def _validate_improve(cfg: dict, out: _Collector) -> None:
    sec = cfg.get("improve", {})
    _check_keys(sec, "improve", out)
    if "signal" in sec:
        _check_signal(sec["signal"], "improve.signal", out)
    if "family" in sec:
        _check_family(sec["family"], "improve.family", out)
    _check_int(sec.get("n", 100), "improve.n", out)
    _check_replicates(sec.get("replicates", 2000), "improve.replicates", out)
    if "kappa" in sec:
        _check_positive(sec["kappa"], "improve.kappa", out)


def validate_config(cfg: dict, command: str) -> list:
    """Every problem with ``cfg`` for ``command``, as :class:`ConfigIssue` s."""
    out = _Collector()
    if command not in COMMANDS:
        out.add("command", f"unknown subcommand {command!r}")
        return out.issues
    _check_keys(cfg, "", out)
    if "seed" in cfg:
        _check_int(cfg["seed"], "seed", out, low=0)
    if "threads" in cfg:
        _check_int(cfg["threads"], "threads", out)
    sections = SECTIONS[command]
    if "path" in sections:
        _validate_path(cfg, out)
    if "estimate" in sections:
        sec = cfg.get("estimate", {})
        _check_keys(sec, "estimate", out)
        m = sec.get("model", [1])
        if not isinstance(m, list) or not m or any(
                isinstance(j, bool) or not isinstance(j, int) or j < 1 for j in m):
            out.add("estimate.model", "a model is a non-empty list of indices >= 1")
        _check_choice(sec.get("estimator", "lse"), ("lse", "shrunk"), "estimate.estimator", out)
    if "select" in sections:
        sec = cfg.get("select", {})
        _check_keys(sec, "select", out)
        if "family" in sec:
            _check_family(sec["family"], "select.family", out)
        _check_choice(sec.get("estimator", "lse"), ("lse", "shrunk"), "select.estimator", out)
        for key in ("kappa", "penalty_scale"):
            if key in sec:
                _check_positive(sec[key], f"select.{key}", out)
    if "experiment" in sections:
        _validate_experiment(cfg, command, out)
    if "oracle" in sections:
        sec = cfg.get("oracle", {})
        _check_keys(sec, "oracle", out)
        for i, f in enumerate(sec.get("forms", [])):
            _check_choice(f, BOUND_FORMS, f"oracle.forms[{i}]", out)
    if "rate" in sections:
        sec = cfg.get("rate", {})
        _check_keys(sec, "rate", out)
        for key in ("band", "cap"):
            if key in sec:
                _check_positive(sec[key], f"rate.{key}", out)
    if "lower_bound" in sections:
        _validate_lower_bound(cfg, out)
    if "improve" in sections:
        _validate_improve(cfg, out)
    return out.issues
