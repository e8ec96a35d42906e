"""Penalty constants, model families, penalized selection and the
oracle-inequality right-hand sides."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import GridSpec, basis_matrix, discrete_geometry
from .estimators import (ProjectiveEstimate, check_resolvable, lse_coefficients,
                         normalize_model, shrink_factor)
from .noise import SamplePath

__all__ = [
    "solve_z_star",
    "PenaltyParams",
    "ModelFamily",
    "solve_constants",
    "penalty",
    "SelectionResult",
    "select",
    "select_batch",
    "OracleTerms",
    "oracle_terms",
    "BOUND_FORMS",
    "GENERAL_FAMILY_CAP",
]

GENERAL_FAMILY_CAP = 2 ** 12


def solve_z_star(tol: float = 1e-12) -> float:
    """Largest root of ``ln z = z - 2`` by Newton's method safeguarded by
    bisection on ``(2, 10)``."""
    f = lambda z: math.log(z) - z + 2.0
    lo, hi = 2.0, 10.0  # f(lo) > 0 > f(hi)
    z = 3.5
    for _ in range(200):
        fz = f(z)
        if abs(fz) < tol:
            break
        if fz > 0:
            lo = z
        else:
            hi = z
        step = z - fz / (1.0 / z - 1.0)
        z = step if lo < step < hi else 0.5 * (lo + hi)
    # polish: one more Newton step cannot hurt once inside the bracket
    z -= f(z) / (1.0 / z - 1.0)
    return z


@dataclass(frozen=True)
class ModelFamily:
    """Finite set of candidate models with prior weights ``l_m >= 1``.

    Use :meth:`ordered` for nested models ``{1..i}`` or :meth:`general`
    for an explicit list.
    """

    models: tuple
    weights: tuple
    kind: str = "general"
    n_max: int | None = None

    def __post_init__(self):
        models = tuple(normalize_model(m) for m in self.models)
        weights = tuple(float(w) for w in self.weights)
        if not models:
            raise ValueError("model family is empty")
        if len(weights) != len(models):
            raise ValueError("one weight per model is required")
        if any(not (w >= 1.0 and math.isfinite(w)) for w in weights):
            raise ValueError("all model weights must be finite and >= 1")
        if self.kind == "general":
            if len(models) > GENERAL_FAMILY_CAP:
                raise ValueError(f"general families are capped at {GENERAL_FAMILY_CAP} models")
            if len(set(models)) != len(models):
                raise ValueError("duplicate models in family")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def ordered(cls, n_max: int) -> "ModelFamily":
        if int(n_max) < 1:
            raise ValueError("ordered family needs n_max >= 1")
        n_max = int(n_max)
        models = tuple(tuple(range(1, i + 1)) for i in range(1, n_max + 1))
        return cls(models, (1.0,) * n_max, "ordered", n_max)

    @classmethod
    def general(cls, models: Sequence[Sequence[int]], weights: Sequence[float] | None = None) -> "ModelFamily":
        models = tuple(tuple(m) for m in models)
        if weights is None:
            weights = (1.0,) * len(models)
        return cls(models, tuple(weights), "general")

    def scaled(self, c: float) -> "ModelFamily":
        """Same models with every weight multiplied by ``c``."""
        return ModelFamily(self.models, tuple(c * w for w in self.weights), self.kind, self.n_max)

    def __len__(self) -> int:
        return len(self.models)

    @property
    def dims(self) -> np.ndarray:
        return np.array([len(m) for m in self.models])

    @property
    def max_index(self) -> int:
        return max(max(m) for m in self.models)

    def tie_order(self) -> np.ndarray:
        """Permutation listing models by (dimension, lexicographic order)."""
        return np.array(sorted(range(len(self.models)), key=lambda i: (len(self.models[i]), self.models[i])))

    def l_star(self) -> float:
        w = np.asarray(self.weights)
        return float(np.sum(np.exp(-w * self.dims)))

    def to_dict(self) -> dict:
        if self.kind == "ordered":
            return {"kind": "ordered", "n_max": self.n_max}
        return {"kind": "general", "models": [list(m) for m in self.models], "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelFamily":
        if d.get("kind") == "ordered":
            return cls.ordered(int(d["n_max"]))
        if d.get("kind") == "general":
            return cls.general(d["models"], d.get("weights"))
        raise ValueError(f"unknown family kind {d.get('kind')!r}")


@dataclass(frozen=True)
class PenaltyParams:
    z_star: float
    rho: float
    lambda_star_used: float
    tau0: float
    tau1: float
    l_star: float

    def scaled(self, factor: float) -> "PenaltyParams":
        """Copy with ``rho`` multiplied by ``factor`` (negative controls)."""
        return PenaltyParams(self.z_star, self.rho * factor, self.lambda_star_used,
                             self.tau0, self.tau1, self.l_star)

    def to_dict(self) -> dict:
        return {"z_star": self.z_star, "rho": self.rho, "lambda_star_used": self.lambda_star_used,
                "tau0": self.tau0, "tau1": self.tau1, "l_star": self.l_star}


def solve_constants(lambda_star: float, family: ModelFamily | None = None) -> PenaltyParams:
    """Penalty constants for a variance bound ``lambda_star``.

    Without a family, ``l*`` defaults to its ordered-family limit ``1/(e-1)``.
    """
    if not lambda_star > 0:
        raise ValueError("lambda_star must be positive")
    z = solve_z_star()
    l_star = family.l_star() if family is not None else 1.0 / (math.e - 1.0)
    return PenaltyParams(
        z_star=z,
        rho=4.0 * lambda_star * z * z / (z - 1.0),
        lambda_star_used=float(lambda_star),
        tau0=16.0 * l_star * z / (z - 1.0),
        tau1=3.0 + 16.0 * z,
        l_star=l_star,
    )


def penalty(params: PenaltyParams, m, l_m: float, n: int) -> float:
    """``rho l_m d_m / n``."""
    d = len(tuple(m)) if not isinstance(m, int) else m
    if d < 1:
        raise ValueError("penalty needs a non-empty model")
    if n < 1 or l_m < 1:
        raise ValueError("penalty needs n >= 1 and l_m >= 1")
    return params.rho * l_m * d / n


@dataclass
class SelectionResult:
    chosen_m: tuple
    estimate: ProjectiveEstimate
    criterion_values: dict
    penalty_values: dict

    def to_dict(self) -> dict:
        return {
            "chosen_m": list(self.chosen_m),
            "estimate": self.estimate.to_dict(),
            "criterion": [{"m": list(m), "criterion": v, "penalty": self.penalty_values[m]}
                          for m, v in self.criterion_values.items()],
        }


def _model_coeffs(alpha: np.ndarray, m: tuple, kind: str, n: int) -> np.ndarray:
    c = alpha[np.asarray(m) - 1]
    if kind == "shrunk":
        c = c * shrink_factor(float(c @ c), len(m), n)
    return c


def select(path: SamplePath, family: ModelFamily, params: PenaltyParams,
           estimator_kind: str = "lse") -> SelectionResult:
    """Penalized contrast minimization over ``family`` on one path.

    The contrast of an estimate in the span of an orthonormal system is
    ``sum c_j^2 - 2 sum c_j alpha_hat_j``; this holds both for the L2 norm
    and for the sampled norm (indices up to ``p``), so one formula serves
    both modes.
    """
    if estimator_kind not in ("lse", "shrunk"):
        raise ValueError(f"unknown estimator kind {estimator_kind!r}")
    grid = path.grid
    for m in family.models:
        check_resolvable(m, grid.p)
    n = grid.n
    J = family.max_index
    alpha = lse_coefficients(path.folded(), np.arange(1, J + 1), n)
    crit, pens = {}, {}
    for m, l in zip(family.models, family.weights):
        c = _model_coeffs(alpha, m, estimator_kind, n)
        pen = penalty(params, m, l, n)
        gamma = float(c @ c - 2.0 * c @ alpha[np.asarray(m) - 1])
        crit[m] = gamma + pen
        pens[m] = pen
    best = min(crit, key=lambda m: (crit[m], len(m), m))
    c = _model_coeffs(alpha, best, estimator_kind, n)
    est = ProjectiveEstimate(best, c, estimator_kind, n, grid)
    return SelectionResult(best, est, crit, pens)


@dataclass
class BatchSelection:
    """Selections for a batch of coefficient vectors.

    ``choice[r]`` indexes ``family.models``; ``coeffs`` is the full
    ``(R, J)`` coefficient array of the selected estimates.
    """

    choice: np.ndarray
    coeffs: np.ndarray
    per_model_coeff_norm: np.ndarray | None = None


def shrink_factors(norms: np.ndarray, dims: np.ndarray, n: int) -> np.ndarray:
    out = np.ones_like(norms)
    for k, d in enumerate(dims):
        if d > 2:
            out[:, k] = shrink_factor(norms[:, k], int(d), n)
    return out


def model_statistics(alpha: np.ndarray, family: ModelFamily):
    """Per-model squared norms of ``alpha`` restricted to each model."""
    a2 = alpha ** 2
    if family.kind == "ordered":
        return np.cumsum(a2[:, : family.n_max], axis=1)
    return np.stack([a2[:, np.asarray(m) - 1].sum(axis=1) for m in family.models], axis=1)


def select_batch(alpha: np.ndarray, family: ModelFamily, params: PenaltyParams, n: int,
                 estimator_kind: str = "lse") -> BatchSelection:
    """Vectorized :func:`select` over rows of coefficient estimates.

    For the LSE the contrast is ``-||alpha_m||^2``; for the shrunk estimate
    with factor ``s`` it is ``(s^2 - 2 s) ||alpha_m||^2``.
    """
    alpha = np.atleast_2d(alpha)
    R, J = alpha.shape
    norms = model_statistics(alpha, family)
    dims = family.dims
    pens = params.rho * np.asarray(family.weights) * dims / n
    if estimator_kind == "lse":
        factors = np.ones_like(norms)
        gamma = -norms
    elif estimator_kind == "shrunk":
        factors = shrink_factors(norms, dims, n)
        gamma = (factors ** 2 - 2.0 * factors) * norms
    else:
        raise ValueError(f"unknown estimator kind {estimator_kind!r}")
    crit = gamma + pens[None, :]
    order = family.tie_order()
    pick = order[np.argmin(crit[:, order], axis=1)]
    coeffs = np.zeros_like(alpha)
    f = factors[np.arange(R), pick]
    if family.kind == "ordered":
        d = dims[pick]
        mask = np.arange(J)[None, :] < d[:, None]
        coeffs = np.where(mask, alpha * f[:, None], 0.0)
    else:
        for k in np.unique(pick):
            rows = pick == k
            idx = np.asarray(family.models[k]) - 1
            coeffs[np.ix_(rows, idx)] = alpha[np.ix_(rows, idx)] * f[rows, None]
    return BatchSelection(pick, coeffs)


# ---------------------------------------------------------------------------
# Oracle-inequality right-hand sides

BOUND_FORMS = ("bias", "risk", "discrete_bias", "discrete_risk")


@dataclass
class OracleTerms:
    terms: np.ndarray  # one value per family model
    bound: float
    argmin: tuple
    form: str
    H_p: float = 0.0
    extras: dict = field(default_factory=dict)


def projection_bias(S, family: ModelFamily, p: int | None = None) -> np.ndarray:
    """``||S_m - S||^2`` per model (L2), or the sampled version when ``p`` is
    given."""
    if p is None:
        J = max(family.max_index, getattr(S, "max_index", 0))
        t = np.asarray(S.fourier(J))
        total = float(S.norm2())
    else:
        J = family.max_index
        pts = np.arange(1, p + 1) / p
        vals = np.asarray(S(pts), dtype=float)
        t = basis_matrix(np.arange(1, J + 1), pts).T @ vals / p
        total = float(np.mean(vals ** 2))
    t2 = t ** 2
    if family.kind == "ordered":
        kept = np.cumsum(t2[: family.n_max])
    else:
        kept = np.array([t2[np.asarray(m) - 1].sum() for m in family.models])
    return np.maximum(total - kept, 0.0)


def oracle_terms(S, family: ModelFamily, params: PenaltyParams, n: int, form: str = "bias",
                 p: int | None = None, estimator_risks: Sequence[float] | None = None) -> OracleTerms:
    """Right-hand side of the oracle inequality for ``S``.

    Forms
    -----
    ``bias``
        ``3 ||S_m - S||^2 + tau1 lambda d l / n``, bound adds ``lambda tau0 / n``.
    ``risk``
        ``3 R_m + 16 lambda z d l / n`` from supplied per-model risks
        ``R_m``, bound adds ``lambda tau0 / n``. With ``lambda = 2`` this is
        also the shrinkage bound.
    ``discrete_risk``
        ``7 R_{m,p} + 32 lambda z l d / n``; bound adds ``8 H_p + 2 tau0 lambda / n``.
    ``discrete_bias``
        ``7 ||S_{m,p} - S||_p^2 + 7 d H_p + lambda (7 + 32 z l) d / n``;
        same additive terms as ``discrete_risk``.
    """
    if form not in BOUND_FORMS:
        raise ValueError(f"unknown bound form {form!r}")
    lam, z = params.lambda_star_used, params.z_star
    d = family.dims.astype(float)
    l = np.asarray(family.weights)
    H = 0.0
    if form in ("risk", "discrete_risk"):
        if estimator_risks is None:
            raise ValueError(f"form {form!r} needs per-model estimator risks")
        R = np.asarray(estimator_risks, dtype=float)
        if R.shape != (len(family),):
            raise ValueError("one risk per family model is required")
    if form == "bias":
        terms = 3.0 * projection_bias(S, family) + params.tau1 * lam * d * l / n
        extra = lam * params.tau0 / n
    elif form == "risk":
        terms = 3.0 * R + 16.0 * lam * z * d * l / n
        extra = lam * params.tau0 / n
    else:
        if p is None:
            raise ValueError("discrete forms need the grid resolution p")
        H = discrete_geometry(S, GridSpec(1, p)).H_p
        if form == "discrete_risk":
            terms = 7.0 * R + 32.0 * lam * z * l * d / n
        else:
            terms = (7.0 * projection_bias(S, family, p) + 7.0 * d * H
                     + lam * (7.0 + 32.0 * z * l) * d / n)
        extra = 8.0 * H + 2.0 * params.tau0 * lam / n
    k = int(np.argmin(terms))
    return OracleTerms(terms=terms, bound=float(terms[k] + extra), argmin=family.models[k],
                       form=form, H_p=H, extras={"additive": extra})
