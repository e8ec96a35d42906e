"""Monte Carlo laboratory: risks, oracle-inequality checks, rate studies,
the van Trees lower bound and shrinkage comparisons.

The workhorse is :func:`run_cell`. A cell fixes a signal, a noise model, a
horizon ``n`` and a grid resolution ``p``; it draws ``replicates`` exact
realizations of the coefficient estimates, runs the penalized selection on
each and records the loss of the selected estimate together with the loss
of every candidate model.

Two engines produce the coefficient estimates:

``folded``
    samples the exact Gaussian law of ``alpha_hat = Phi' Y / n`` where
    ``Y`` is the vector of per-phase sums of path increments. This is the
    same random vector the path engine computes, drawn in ``O(J^2)`` per
    replicate instead of ``O(n p)``.
``path``
    simulates every full path with :func:`perisel.noise.simulate_path`.
``noiseless``
    uses the exact mean of the coefficient estimates in every replicate;
    the risk is then the deterministic loss of the selected model.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, interpolate

from .basis import (BumpFamilySpec, BumpSignal, GridSpec, PeriodicSignal, SobolevSpec,
                    basis_matrix, boundary_signal, psi_cell_integrals, psi_fourier,
                    plateau_signal, random_sobolev_signal, spike_signal)
from .estimators import check_resolvable, fine_p, shrink_factor
from .noise import FoldedNoise, NoiseModel, lambda_star, rng_for, simulate_path
from .selection import (ModelFamily, PenaltyParams, shrink_factors, oracle_terms,
                        select_batch, solve_constants)

__all__ = [
    "ExperimentConfig",
    "make_signal",
    "grid_p",
    "CellSpec",
    "CellResult",
    "run_cell",
    "RiskRow",
    "RiskReport",
    "mc_risk",
    "OracleCheck",
    "oracle_check",
    "rate_study",
    "RateStudy",
    "van_trees_bound",
    "VanTreesBound",
    "discrete_lower_bound",
    "bump_prior",
    "bayes_risk_study",
    "improvement_study",
    "stable_key",
    "omega2",
]


def stable_key(*parts) -> int:
    """Deterministic 32-bit key for a cell label."""
    return zlib.crc32("|".join(str(p) for p in parts).encode())


def omega2(n: int, beta: float) -> float:
    """Squared rate normalization ``n^(2 beta / (2 beta + 1))``."""
    return float(n) ** (2.0 * beta / (2.0 * beta + 1.0))


def grid_p(rule, n: int, max_index: int = 1) -> int:
    """Grid resolution for horizon ``n`` under ``rule``.

    ``"fine"`` gives the simulation resolution of continuous experiments,
    ``"sqrt"`` gives ``2 floor(sqrt n) + 1``, ``"cbrt"`` gives the largest
    odd number not above ``n^(1/3)``, and an integer is taken as is.
    """
    if rule == "fine":
        return fine_p(max_index)
    if rule == "sqrt":
        return 2 * math.isqrt(n) + 1
    if rule == "cbrt":
        p = int(math.floor(n ** (1.0 / 3.0) + 1e-9))
        return max(1, p - (1 - p % 2))
    return int(rule)


# ---------------------------------------------------------------------------
# Signals from config


def make_signal(spec) -> PeriodicSignal:
    """Build a trigonometric signal from a config entry.

    Accepted forms: ``{"kind": "zero"}``, ``{"kind": "coeffs", "coeffs": [...]}``,
    ``{"kind": "terms", "terms": {"2": 3.0}}``,
    ``{"kind": "boundary", "beta": b, "r": r, "J": 512}`` and
    ``{"kind": "random", "beta": b, "r": r, "J": 512, "seed": s}`` and
    ``{"kind": "spike", "beta": b, "r": r, "k": k}`` and
    ``{"kind": "plateau", "beta": b, "r": r, "k": k}``.
    """
    if isinstance(spec, PeriodicSignal):
        return spec
    kind = spec.get("kind", "coeffs")
    label = spec.get("label")
    if kind == "zero":
        return PeriodicSignal.zero(label or "zero")
    if kind == "coeffs":
        return PeriodicSignal(tuple(spec["coeffs"]), label or "signal")
    if kind == "terms":
        terms = {int(k): float(v) for k, v in spec["terms"].items()}
        name = label or "+".join(f"{v:g}phi{k}" for k, v in sorted(terms.items()))
        return PeriodicSignal.from_terms(terms, name)
    if kind == "boundary":
        return boundary_signal(SobolevSpec(spec["beta"], spec["r"]), int(spec.get("J", 512)), label)
    if kind == "spike":
        return spike_signal(SobolevSpec(spec["beta"], spec["r"]), int(spec["k"]), label)
    if kind == "plateau":
        return plateau_signal(SobolevSpec(spec["beta"], spec["r"]), int(spec["k"]), label)
    if kind == "random":
        s = SobolevSpec(spec["beta"], spec["r"])
        seed = int(spec.get("seed", 0))
        return random_sobolev_signal(s, int(spec.get("J", 512)), rng_for(seed, 7),
                                     label or f"random(beta={s.beta:g},r={s.r:g},seed={seed})")
    raise ValueError(f"unknown signal kind {kind!r}")


def stress_set(beta: float, r: float, J: int = 512, seeds: Sequence[int] = (1, 2),
               spikes: int = 32) -> list:
    """Finite stand-in for the smoothness class.

    The boundary signal and random members with seeds ``seeds``, plus the
    spikes ``r k^(-beta) phi_k`` for ``k = 1..spikes``. A handful of fixed
    signals each cross the selection threshold at a few horizons only, so
    their risk profile over ``n`` shows isolated knees; the spikes put a
    class member at the threshold for every ``n`` on the ladder.
    """
    spec = SobolevSpec(beta, r)
    out = [make_signal({"kind": "boundary", "beta": beta, "r": r, "J": J})]
    for s in seeds:
        out.append(make_signal({"kind": "random", "beta": beta, "r": r, "J": J, "seed": s}))
    out += [spike_signal(spec, k) for k in range(1, spikes + 1)]
    return out


# ---------------------------------------------------------------------------
# Experiment configuration


@dataclass
class ExperimentConfig:
    """Everything a Monte Carlo study needs.

    ``family`` is a family dict; ``{"kind": "ordered", "n_max": "n"}`` means
    the ordered family up to the horizon (continuous) and ``"p"`` up to the
    grid resolution (discrete).
    """

    signals: list = field(default_factory=lambda: [{"kind": "zero"}])
    noises: list = field(default_factory=lambda: [{"kind": "white"}])
    kappa: float | None = None
    n_values: list = field(default_factory=lambda: [100])
    p_rule: object = None
    mode: str = "continuous"
    family: dict = field(default_factory=lambda: {"kind": "ordered", "n_max": "auto"})
    estimator: str = "lse"
    replicates: int = 2000
    seed: int = 0
    beta: float = 2.0
    r: float = 1.0
    nu: float = 1.0
    m_bumps: int | None = None
    epsilon: float = 0.5
    penalty_scale: float = 1.0
    bound_form: str | None = None
    engine: str = "folded"
    p_floor: int = 1001
    stress: bool = False
    audit: bool = True

    def __post_init__(self):
        if self.p_rule is None:
            self.p_rule = "fine" if self.mode == "continuous" else "sqrt"

    def noise_models(self) -> list:
        return [n if isinstance(n, NoiseModel) else NoiseModel.from_dict(n) for n in self.noises]

    def signal_objects(self) -> list:
        sigs = [make_signal(s) for s in self.signals]
        if self.stress:
            sigs += stress_set(self.beta, self.r)
        return sigs

    def kappa_value(self) -> float:
        lam = max(lambda_star(m) for m in self.noise_models())
        return float(self.kappa) if self.kappa is not None else lam

    def family_for(self, n: int, p: int) -> ModelFamily:
        f = dict(self.family)
        if f.get("kind", "ordered") == "ordered":
            top = f.get("n_max", "auto")
            if top == "auto":
                top = n if self.mode == "continuous" else p
            elif top == "n":
                top = n
            elif top == "p":
                top = p
            return ModelFamily.ordered(int(top))
        return ModelFamily.from_dict(f)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noises"] = [m.to_dict() for m in self.noise_models()]
        d["signals"] = [s.to_dict() if isinstance(s, PeriodicSignal) else s for s in self.signals]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError("unknown experiment keys: " + ", ".join(f"experiment.{k}" for k in unknown))
        return cls(**d)


# ---------------------------------------------------------------------------
# Cells


@dataclass
class CellSpec:
    signal: object
    noise: NoiseModel
    n: int
    p: int
    mode: str
    family: ModelFamily
    params: PenaltyParams
    estimator: str = "lse"
    replicates: int = 2000
    seed: int = 0
    key: int = 0
    engine: str = "folded"
    per_model: bool = False

    @property
    def label(self) -> str:
        return f"{getattr(self.signal, 'label', 'signal')}|{self.noise.label}|n={self.n}|p={self.p}|{self.estimator}"


@dataclass
class CellResult:
    spec: CellSpec
    losses: np.ndarray
    chosen_dim: np.ndarray
    model_risk: np.ndarray | None = None
    model_risk_se: np.ndarray | None = None
    error: str | None = None

    @property
    def risk(self) -> float:
        return float(np.mean(self.losses))

    @property
    def se(self) -> float:
        R = len(self.losses)
        return float(np.std(self.losses, ddof=1) / math.sqrt(R)) if R > 1 else float("nan")


def _targets(signal, mode: str, J: int, p: int):
    """Target coefficients ``t_j`` (``j <= J``) and total energy ``E0``.

    The loss of an estimate ``c`` supported on ``1..J`` is
    ``sum_j (c_j - t_j)^2 + E0 - sum_j t_j^2``, with L2 coefficients in the
    continuous mode and sampled ones (``J <= p``) in the discrete mode.
    """
    if mode == "continuous":
        t = np.asarray(signal.fourier(J), dtype=float)
        return t, float(signal.norm2())
    pts = np.arange(1, p + 1) / p
    vals = np.asarray(signal(pts), dtype=float)
    t = basis_matrix(np.arange(1, J + 1), pts).T @ vals / p
    return t, float(np.mean(vals ** 2))


@lru_cache(maxsize=64)
def _noise_law(model: NoiseModel, n: int, p: int, J: int) -> FoldedNoise:
    Phi = basis_matrix(np.arange(1, J + 1), np.arange(1, p + 1) / p)
    return FoldedNoise(model, GridSpec(n, p), Phi)


def _coefficient_draws(spec: CellSpec, J: int, start: int, stop: int) -> np.ndarray:
    p, n = spec.p, spec.n
    idx = np.arange(1, J + 1)
    Phi = basis_matrix(idx, np.arange(1, p + 1) / p)
    if spec.engine == "path":
        grid = GridSpec(n, p)
        rows = []
        for r in range(start, stop):
            path = simulate_path(spec.signal, spec.noise, grid, spec.seed,
                                 replicate=(spec.key << 24) + r)
            rows.append(path.folded() @ Phi / n)
        return np.asarray(rows)
    mean = np.asarray(spec.signal.cell_integrals(p)) @ Phi
    if spec.engine == "noiseless":
        return np.repeat(mean[None, :], stop - start, axis=0)
    law = _noise_law(spec.noise, n, p, J)
    z = np.stack([rng_for(spec.seed, spec.key, r, 0).standard_normal(J) for r in range(start, stop)])
    return mean[None, :] + law.sample(z)


def _per_model_losses(alpha, t, resid, family: ModelFamily, kind: str, n: int) -> np.ndarray:
    """Loss of every candidate estimate, shape ``(R, M)``."""
    total = float(t @ t)
    if family.kind == "ordered":
        a = alpha[:, : family.n_max]
        tt = t[: family.n_max]
        N = np.cumsum(a * a, axis=1)
        P = np.cumsum(a * tt, axis=1)
        f = shrink_factors(N, family.dims, n) if kind == "shrunk" else 1.0
        # inside the model: f^2 N - 2 f P + T_i; outside it: total - T_i + resid
        return f * f * N - 2.0 * f * P + total + resid
    out = np.empty((alpha.shape[0], len(family)))
    for k, m in enumerate(family.models):
        idx = np.asarray(m) - 1
        a = alpha[:, idx]
        c = a
        if kind == "shrunk":
            c = a * np.asarray(shrink_factor(np.sum(a * a, axis=1), len(m), n))[:, None]
        inside = np.sum((c - t[idx]) ** 2, axis=1)
        out[:, k] = inside + resid + total - float(t[idx] @ t[idx])
    return out


def run_cell(spec: CellSpec, batch: int = 1000, audit: list | None = None) -> CellResult:
    """Monte Carlo risk of penalized selection in one cell.

    Errors are captured in ``CellResult.error`` instead of propagating, so
    one failing cell does not abort a study.
    """
    try:
        J = spec.family.max_index
        check_resolvable(tuple(range(1, J + 1)), spec.p)
        t, E0 = _targets(spec.signal, spec.mode, J, spec.p)
        resid = E0 - float(t @ t)  # energy outside 1..J
        losses = np.empty(spec.replicates)
        dims = np.empty(spec.replicates, dtype=int)
        M = len(spec.family)
        s1 = np.zeros(M) if spec.per_model else None
        s2 = np.zeros(M) if spec.per_model else None
        fdims = spec.family.dims
        for start in range(0, spec.replicates, batch):
            stop = min(spec.replicates, start + batch)
            alpha = _coefficient_draws(spec, J, start, stop)
            sel = select_batch(alpha, spec.family, spec.params, spec.n, spec.estimator)
            c = sel.coeffs
            loss = np.sum((c - t) ** 2, axis=1) + resid
            losses[start:stop] = np.maximum(loss, 0.0)
            dims[start:stop] = fdims[sel.choice]
            if spec.per_model:
                pm = _per_model_losses(alpha, t, resid, spec.family, spec.estimator, spec.n)
                s1 += pm.sum(axis=0)
                s2 += (pm * pm).sum(axis=0)
            if audit is not None:
                for r in range(start, stop):
                    audit.append({"cell": spec.label, "replicate": r,
                                  "chosen_d": int(dims[r]), "loss": float(losses[r])})
        res = CellResult(spec, losses, dims)
        if spec.per_model:
            R = spec.replicates
            mean = s1 / R
            var = np.maximum(s2 / R - mean ** 2, 0.0) * R / (R - 1)
            res.model_risk = mean
            res.model_risk_se = np.sqrt(var / R)
        return res
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return CellResult(spec, np.array([]), np.array([], dtype=int), error=f"{type(exc).__name__}: {exc}")


def run_cells(specs: Sequence[CellSpec], threads: int = 1, audit: list | None = None) -> list:
    """Run cells, optionally on a thread pool; results keep input order."""
    if threads <= 1 or len(specs) <= 1:
        out = []
        for s in specs:
            local = [] if audit is not None else None
            out.append(run_cell(s, audit=local))
            if audit is not None:
                audit.extend(local)
        return out
    locals_ = [[] if audit is not None else None for _ in specs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        out = list(pool.map(lambda a: run_cell(a[0], audit=a[1]), zip(specs, locals_)))
    if audit is not None:
        for loc in locals_:
            audit.extend(loc)
    return out


# ---------------------------------------------------------------------------
# Risk reports


@dataclass
class RiskRow:
    signal: str
    model: str
    n: int
    p: int
    estimator: str
    risk: float
    se: float
    bound: float
    normalized_risk: float
    passed: bool
    error: str | None = None
    mean_dim: float = float("nan")

    def csv_record(self) -> list:
        return [self.signal, self.model, self.n, self.p, self.estimator, _fmt(self.risk), _fmt(self.se),
                _fmt(self.bound), _fmt(self.normalized_risk), "true" if self.passed else "false"]


CSV_HEADER = ["signal", "model", "n", "p", "estimator", "risk", "se", "bound", "normalized_risk", "pass"]


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class RiskReport:
    rows: list
    audit: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(r.csv_record())
        return buf.getvalue()

    def audit_jsonl(self) -> str:
        return "".join(json.dumps(a, sort_keys=True) + "\n" for a in self.audit)


def _params_for(cfg: ExperimentConfig, family: ModelFamily) -> PenaltyParams:
    return solve_constants(cfg.kappa_value(), family).scaled(cfg.penalty_scale)


def _bound_form(cfg: ExperimentConfig) -> str:
    if cfg.bound_form:
        return cfg.bound_form
    return "bias" if cfg.mode == "continuous" else "discrete_bias"


def _cell_specs(cfg: ExperimentConfig, per_model: bool = False):
    specs = []
    for n in cfg.n_values:
        for sig in cfg.signal_objects():
            for noise in cfg.noise_models():
                p_obs = grid_p(cfg.p_rule, n) if cfg.mode == "discrete" else None
                fam = cfg.family_for(n, p_obs or 0)
                if cfg.mode == "discrete":
                    p = p_obs
                elif cfg.p_rule == "fine":
                    p = fine_p(max(fam.max_index, getattr(sig, "max_index", 1)), cfg.p_floor)
                else:
                    p = int(cfg.p_rule)
                params = _params_for(cfg, fam)
                key = stable_key(sig.label, noise.label, n, p, cfg.estimator, cfg.mode)
                specs.append(CellSpec(sig, noise, n, p, cfg.mode, fam, params, cfg.estimator,
                                      cfg.replicates, cfg.seed, key, cfg.engine, per_model))
    return specs


def _bound_for(cfg: ExperimentConfig, spec: CellSpec, form: str, res: CellResult) -> float:
    # bounds always use the honest constants, even when the penalty is scaled
    bound_params = solve_constants(cfg.kappa_value(), spec.family)
    risks = res.model_risk if form in ("risk", "discrete_risk") else None
    ot = oracle_terms(spec.signal, spec.family, bound_params, spec.n, form,
                      p=spec.p if form.startswith("discrete") else None, estimator_risks=risks)
    return ot.bound


def mc_risk(cfg: ExperimentConfig, threads: int = 1) -> RiskReport:
    """Risk of penalized selection on every (signal, noise, n) cell.

    Each row also carries the oracle bound of the configured form and the
    rate-normalized risk ``n^(2 beta/(2 beta+1)) risk``.
    """
    form = _bound_form(cfg)
    specs = _cell_specs(cfg, per_model=form in ("risk", "discrete_risk"))
    audit = [] if cfg.audit else None
    t0 = time.perf_counter()
    results = run_cells(specs, threads, audit)
    rows = []
    for spec, res in zip(specs, results):
        sig = getattr(spec.signal, "label", "signal")
        if res.error:
            rows.append(RiskRow(sig, spec.noise.label, spec.n, spec.p, spec.estimator, float("nan"),
                                float("nan"), float("nan"), float("nan"), False, res.error))
            continue
        bound = _bound_for(cfg, spec, form, res)
        passed = res.risk <= bound + 3.0 * res.se
        rows.append(RiskRow(sig, spec.noise.label, spec.n, spec.p, spec.estimator, res.risk, res.se,
                            bound, omega2(spec.n, cfg.beta) * res.risk, bool(passed),
                            mean_dim=float(np.mean(res.chosen_dim))))
    meta = {"runtime_s": time.perf_counter() - t0, "bound_form": form, "cells": len(specs)}
    return RiskReport(rows, audit or [], meta)


@dataclass
class OracleCheck:
    lhs: float
    rhs: float
    margin: float
    se: float
    passed: bool
    form: str
    cell: str

    def to_dict(self) -> dict:
        return asdict(self)


def oracle_check(cfg: ExperimentConfig, forms: Sequence[str] | None = None,
                 threads: int = 1) -> list:
    """``lhs <= rhs + 3 SE(lhs)`` for every cell and requested bound form.

    The left side is always the Monte Carlo risk of the configured
    procedure; the bound constants come from the unscaled penalty so that a
    corrupted penalty (``penalty_scale != 1``) is judged against the
    honest bound.
    """
    if forms is None:
        forms = [_bound_form(cfg)]
    needs_models = any(f in ("risk", "discrete_risk") for f in forms)
    specs = _cell_specs(cfg, per_model=needs_models)
    results = run_cells(specs, threads)
    out = []
    for spec, res in zip(specs, results):
        honest = solve_constants(cfg.kappa_value(), spec.family)
        for form in forms:
            if res.error:
                out.append(OracleCheck(float("nan"), float("nan"), float("nan"), float("nan"),
                                       False, form, spec.label + " :: " + res.error))
                continue
            risks = res.model_risk if form in ("risk", "discrete_risk") else None
            ot = oracle_terms(spec.signal, spec.family, honest, spec.n, form,
                              p=spec.p if form.startswith("discrete") else None, estimator_risks=risks)
            lhs, se = res.risk, res.se
            margin = ot.bound + 3.0 * se - lhs
            out.append(OracleCheck(lhs, ot.bound, margin, se, bool(margin >= 0), form, spec.label))
    return out


# ---------------------------------------------------------------------------
# Rate studies


@dataclass
class RateStudy:
    n_values: list
    normalized: list      # sup over cells of omega_n^2 * risk, per n
    worst_cell: list
    band_ratio: float
    last_over_median: float
    passed: bool
    rows: list = field(default_factory=list)
    regime_flag: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rows"] = [asdict(r) for r in self.rows]
        return d


def rate_study(cfg: ExperimentConfig, threads: int = 1, band: float = 2.0, cap: float = 1.25) -> RateStudy:
    """Worst-case normalized risk along the ``n`` ladder.

    The supremum over the smoothness class and the noise class is replaced
    by the maximum over the configured signal set (plus the stress set when
    ``cfg.stress``) and the configured noise models.
    """
    if len(cfg.n_values) < 4:
        raise ValueError("a rate study needs at least four horizons")
    rep = mc_risk(cfg, threads)
    ns = sorted(set(cfg.n_values))
    sup, worst = [], []
    for n in ns:
        cells = [r for r in rep.rows if r.n == n]
        if any(r.error for r in cells):
            sup.append(float("nan"))
            worst.append("error")
            continue
        best = max(cells, key=lambda r: r.normalized_risk)
        sup.append(best.normalized_risk)
        worst.append(f"{best.signal}|{best.model}")
    arr = np.asarray(sup)
    ratio = float(np.nanmax(arr) / np.nanmin(arr)) if np.all(np.isfinite(arr)) else float("inf")
    last = float(arr[-1] / np.median(arr)) if np.all(np.isfinite(arr)) else float("inf")
    flag = ""
    if cfg.mode == "discrete":
        if any(grid_p(cfg.p_rule, n) < math.sqrt(n) for n in ns):
            flag = "coarse-grid: p < sqrt(n); the sampling bias term can dominate"
    return RateStudy(ns, sup, worst, ratio, last, bool(ratio <= band and last <= cap), rep.rows, flag)


# ---------------------------------------------------------------------------
# Lower bound


def _bump_g(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _g_constants():
    mass, _ = integrate.quad(lambda u: math.exp(-1.0 / (1.0 - u * u)), -1.0, 1.0,
                             epsabs=1e-15, epsrel=1e-13, limit=200)
    g_star = 1.0 / mass

    def fisher_integrand(u):
        if u >= 1.0:
            return 0.0
        w = 1.0 - u * u
        return u * u * w ** -4 * math.exp(-1.0 / w)

    # the integrand decays like exp(-1/(1-u^2)) so the endpoint is benign;
    # split where it peaks to help the adaptive rule
    a, _ = integrate.quad(fisher_integrand, 0.0, 0.8, epsabs=1e-15, epsrel=1e-13, limit=200)
    b, _ = integrate.quad(fisher_integrand, 0.8, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    I_G = 8.0 * g_star * (a + b)
    if not (math.isfinite(g_star) and math.isfinite(I_G)):
        raise ArithmeticError("quadrature for the prior constants failed")
    return g_star, I_G


@dataclass
class VanTreesBound:
    n: int
    beta: float
    nu: float
    m: int
    h: float
    delta: float
    I_G: float
    G_star: float
    bound: float
    normalized_bound: float

    def to_dict(self) -> dict:
        return asdict(self)


def bump_count(n: int, beta: float) -> int:
    """``floor(n^(1/(2 beta + 1)))`` with a guard against round-off at
    exact powers."""
    return max(1, int(math.floor(n ** (1.0 / (2.0 * beta + 1.0)) * (1 + 1e-12))))


def van_trees_bound(n: int, beta: float, nu: float, m: int | None = None) -> VanTreesBound:
    """Bayesian lower bound ``1 / (2 n h + 2 omega_n^2 nu^-2 I_G)``."""
    if n < 1 or beta <= 0 or nu <= 0:
        raise ValueError("need n >= 1, beta > 0 and nu > 0")
    m = bump_count(n, beta) if m is None else int(m)
    h = 1.0 / (2 * m)
    w2 = omega2(n, beta)
    g_star, I_G = _g_constants()
    bound = 1.0 / (2.0 * n * h + 2.0 * w2 * I_G / nu ** 2)
    return VanTreesBound(n, beta, nu, m, h, nu / math.sqrt(w2), I_G, g_star, bound, w2 * bound)


def discrete_lower_bound(n: int, beta: float, nu: float, r: float, epsilon: float = 0.5) -> float:
    """Normalized lower bound for sampled-norm risk.

    ``(1 - eps) omega_n^2 LB - (1/eps - 1) C n^(-1/(2 beta + 1))`` where
    ``C = beta pi^2 r^2 / (beta - 1)`` bounds ``p^2 n^-1`` times the
    within-cell oscillation of class members when ``p >= sqrt(n)``.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if beta <= 1:
        raise ValueError("the sampled-norm lower bound needs beta > 1")
    vt = van_trees_bound(n, beta, nu)
    C = beta * math.pi ** 2 * r * r / (beta - 1.0)
    return (1 - epsilon) * vt.normalized_bound - (1 / epsilon - 1) * C * n ** (-1.0 / (2 * beta + 1))


@dataclass
class BumpPrior:
    """Product prior on ``[-delta, delta]^m`` with density ``G(u/delta)/delta``."""

    delta: float
    nodes: int = 10_000

    def __post_init__(self):
        g_star, _ = _g_constants()
        u = np.linspace(-1.0, 1.0, self.nodes)
        dens = g_star * _bump_g(u)
        cdf = integrate.cumulative_trapezoid(dens, u, initial=0.0)
        cdf /= cdf[-1]
        # the tails of G are flat to machine precision; drop nodes that do not
        # move the CDF so the inverse has finite slopes, then pin the ends
        inner = np.flatnonzero(np.diff(cdf) > 1e-13) + 1
        inner = inner[(cdf[inner] > 1e-13) & (cdf[inner] < 1 - 1e-13)]
        x = np.concatenate(([0.0], cdf[inner], [1.0]))
        y = np.concatenate(([-1.0], u[inner], [1.0]))
        self._inv = interpolate.PchipInterpolator(x, y)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.delta * np.clip(self._inv(rng.random(size)), -1.0, 1.0)

    def density(self, z):
        g_star, _ = _g_constants()
        return g_star * _bump_g(np.asarray(z) / self.delta) / self.delta


def bump_prior(delta: float) -> BumpPrior:
    return BumpPrior(delta)


HONEST_ESTIMATORS = ("lse_select", "shrunk_select", "bump_projection", "posterior_mean")


@dataclass
class BayesStudy:
    n: int
    vt: VanTreesBound
    risks: dict
    ses: dict
    passed: dict
    oracle_risk: float

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {"n": self.n, "vt_bound": self.vt.bound, "vt": self.vt.to_dict(), "risks": self.risks,
                "ses": self.ses, "passed": self.passed, "oracle_risk": self.oracle_risk}


def bayes_risk_study(n: int, beta: float, nu: float, replicates: int, seed: int,
                     kappa: float = 2.0, J: int | None = None,
                     estimators: Sequence[str] = HONEST_ESTIMATORS, batch: int = 500) -> BayesStudy:
    """Bayes risk of shipped estimators over the bump prior, white noise.

    Every estimator sees only the folded observation increments of a path
    with signal ``S_z``, ``z`` drawn from the prior. The oracle that returns
    ``S_z`` itself is reported separately and never enters the pass logic.
    """
    vt = van_trees_bound(n, beta, nu)
    m, h, delta = vt.m, vt.h, vt.delta
    spec = BumpFamilySpec(m, delta)
    if J is None:
        J = n
    p = fine_p(J)
    grid = GridSpec(n, p)
    pts = grid.phase_points()
    Phi = basis_matrix(np.arange(1, J + 1), pts)
    Psi = BumpSignal(spec).psi_matrix(pts)                  # (p, m) grid values
    cells = psi_cell_integrals(spec, p)                     # (p, m)
    P = psi_fourier(spec, J)                                # (J, m) = (psi_l, phi_j)
    prior = BumpPrior(delta)
    fam = ModelFamily.ordered(J)
    params = solve_constants(kappa, fam)
    # the bump statistic X_l = sum_r psi_l(r/p) Y_r has mean a_l z_l and
    # variance v_l under white noise
    a = n * np.einsum("pm,pm->m", Psi, cells)
    v = n / p * np.sum(Psi ** 2, axis=0)
    quad_u, quad_w = np.polynomial.legendre.leggauss(201)
    prior_w = quad_w * prior.density(delta * quad_u) * delta
    sums = {e: [0.0, 0.0] for e in estimators}
    for start in range(0, replicates, batch):
        stop = min(replicates, start + batch)
        z = np.stack([prior.sample(rng_for(seed, r, 1), m) for r in range(start, stop)])
        noise = np.stack([rng_for(seed, r, 0).standard_normal(p) for r in range(start, stop)])
        Y = n * z @ cells.T + noise * math.sqrt(n / p)
        alpha = Y @ Phi / n
        X = Y @ Psi
        T = z @ P.T                                            # L2 coefficients of S_z
        energy = h * np.sum(z * z, axis=1)
        for e in estimators:
            if e in ("lse_select", "shrunk_select"):
                sel = select_batch(alpha, fam, params, n, "lse" if e == "lse_select" else "shrunk")
                c = sel.coeffs
                loss = np.sum(c * c, 1) - 2 * np.sum(c * T, 1) + energy
            elif e == "bump_projection":
                zh = np.clip(X / a, -delta, delta)
                loss = h * np.sum((zh - z) ** 2, axis=1)
            elif e == "posterior_mean":
                u = delta * quad_u
                ll = -(X[:, :, None] - a[None, :, None] * u[None, None, :]) ** 2 / (2 * v[None, :, None])
                ll -= ll.max(axis=2, keepdims=True)
                wts = np.exp(ll) * prior_w[None, None, :]
                zh = (wts * u).sum(2) / wts.sum(2)
                loss = h * np.sum((zh - z) ** 2, axis=1)
            else:
                raise ValueError(f"unknown estimator {e!r}")
            loss = np.maximum(loss, 0.0)
            sums[e][0] += float(loss.sum())
            sums[e][1] += float((loss * loss).sum())
    risks, ses, passed = {}, {}, {}
    for e, (s1, s2) in sums.items():
        mean = s1 / replicates
        var = max(s2 / replicates - mean * mean, 0.0) * replicates / (replicates - 1)
        risks[e] = mean
        ses[e] = math.sqrt(var / replicates)
        passed[e] = bool(mean >= vt.bound - 3.0 * ses[e])
    return BayesStudy(n, vt, risks, ses, passed, oracle_risk=0.0)


# ---------------------------------------------------------------------------
# Shrinkage improvement


@dataclass
class ImprovementStudy:
    models: list
    lse_risk: np.ndarray
    shrunk_risk: np.ndarray
    diff_se: np.ndarray
    lse_se: np.ndarray
    shrunk_se: np.ndarray
    selected: dict
    bounds: dict

    def to_rows(self) -> list:
        rows = []
        for k, m in enumerate(self.models):
            rows.append({"model": list(m), "d": len(m), "lse_risk": float(self.lse_risk[k]),
                         "lse_se": float(self.lse_se[k]), "shrunk_risk": float(self.shrunk_risk[k]),
                         "shrunk_se": float(self.shrunk_se[k]), "diff_se": float(self.diff_se[k])})
        return rows


def improvement_study(S, family: ModelFamily, n: int, replicates: int, seed: int,
                      kappa: float = 2.0, p: int | None = None) -> ImprovementStudy:
    """Per-model and selected-model risks of LSE versus shrunk estimates.

    Both estimators are evaluated on identical draws under white noise, so
    the per-model differences have paired standard errors.
    """
    S = make_signal(S) if isinstance(S, dict) else S
    J = family.max_index
    p = fine_p(max(J, getattr(S, "max_index", 1))) if p is None else p
    params = solve_constants(kappa, family)
    key = stable_key("improve", getattr(S, "label", ""), n, p)
    spec = CellSpec(S, NoiseModel.white(), n, p, "continuous", family, params, "lse",
                    replicates, seed, key, "folded", True)
    t, E0 = _targets(S, "continuous", J, p)
    resid = E0 - float(t @ t)
    alpha = _coefficient_draws(spec, J, 0, replicates)
    pl = _per_model_losses(alpha, t, resid, family, "lse", n)
    ps = _per_model_losses(alpha, t, resid, family, "shrunk", n)
    se = lambda x: np.std(x, axis=0, ddof=1) / math.sqrt(replicates)
    selected, bounds = {}, {}
    for kind in ("lse", "shrunk"):
        sel = select_batch(alpha, family, params, n, kind)
        loss = np.sum((sel.coeffs - t) ** 2, axis=1) + resid
        selected[kind] = (float(loss.mean()), float(loss.std(ddof=1) / math.sqrt(replicates)))
    bounds["lse"] = oracle_terms(S, family, params, n, "bias").bound
    bounds["shrunk"] = oracle_terms(S, family, params, n, "risk", estimator_risks=ps.mean(0)).bound
    return ImprovementStudy(list(family.models), pl.mean(0), ps.mean(0), se(ps - pl), se(pl), se(ps),
                            selected, bounds)
