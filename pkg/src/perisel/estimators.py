"""Projective estimators: least squares, the empirical contrast and
James-Stein shrinkage with its Stein-identity risk difference."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .basis import GridSpec, basis_matrix, gauss_legendre_grid
from .noise import NoiseModel, SamplePath, rng_for

__all__ = [
    "ProjectiveEstimate",
    "normalize_model",
    "check_resolvable",
    "lse_coefficients",
    "lse_fit",
    "contrast_gamma",
    "shrink_factor",
    "shrink_fit",
    "stein_loss",
    "SteinDelta",
    "stein_delta",
    "fine_p",
]

SHRINK_GUARD = 1e-12


def normalize_model(m) -> tuple:
    """Sorted tuple of distinct positive indices; rejects the empty set."""
    idx = tuple(sorted({int(j) for j in m}))
    if not idx:
        raise ValueError("a model must contain at least one basis index")
    if idx[0] < 1:
        raise ValueError("basis indices start at 1")
    return idx


def check_resolvable(m, p: int) -> None:
    """Reject models whose top frequency aliases on a grid with ``p`` phases."""
    top = max(m)
    if top > p:
        raise ValueError(
            f"aliasing: basis index {top} has frequency {top // 2}, which a grid with "
            f"p={p} points per period cannot resolve (needs p >= {top + (1 - top % 2)})")


def fine_p(max_index: int, floor: int = 1001) -> int:
    """Odd simulation resolution with at least 8 points per period of the
    fastest basis function in use (and never below ``floor``)."""
    p = max(floor, 8 * (max_index // 2), 3)
    return p + 1 - p % 2


@dataclass
class ProjectiveEstimate:
    """``S_hat = sum_{j in m} c_j phi_j``."""

    model_m: tuple
    coeffs: np.ndarray
    kind: str
    n: int
    grid: GridSpec | None = None

    def __post_init__(self):
        self.model_m = normalize_model(self.model_m)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (len(self.model_m),):
            raise ValueError("one coefficient per model index is required")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("estimate coefficients must be finite")
        if self.kind not in ("lse", "shrunk"):
            raise ValueError(f"unknown estimate kind {self.kind!r}")

    @property
    def d(self) -> int:
        return len(self.model_m)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = basis_matrix(self.model_m, t.ravel()) @ self.coeffs
        return out.reshape(t.shape) if t.ndim else float(out[0])

    def norm2(self) -> float:
        return float(self.coeffs @ self.coeffs)

    def full_coeffs(self, J: int) -> np.ndarray:
        out = np.zeros(J)
        out[np.asarray(self.model_m) - 1] = self.coeffs
        return out

    def to_dict(self) -> dict:
        return {"model_m": list(self.model_m), "coeffs": self.coeffs.tolist(), "kind": self.kind,
                "n": self.n, "p": self.grid.p if self.grid else None}


def lse_coefficients(folded: np.ndarray, indices, n: int) -> np.ndarray:
    """``(1/n) sum_k phi_j(t_k) dy_k`` from folded increments (last axis = phase)."""
    p = folded.shape[-1]
    Phi = basis_matrix(indices, np.arange(1, p + 1) / p)
    return folded @ Phi / n


def lse_fit(path: SamplePath, m) -> ProjectiveEstimate:
    """Least-squares projective estimate on model ``m``."""
    m = normalize_model(m)
    check_resolvable(m, path.grid.p)
    c = lse_coefficients(path.folded(), m, path.grid.n)
    return ProjectiveEstimate(m, c, "lse", path.grid.n, path.grid)


def contrast_gamma(path: SamplePath, x: Callable, mode: str = "continuous",
                   max_freq: int | None = None) -> float:
    """Empirical contrast ``||x||^2 - (2/n) sum_k x(t_k) dy_k``.

    ``mode="continuous"`` integrates ``||x||^2`` over ``[0, 1]`` by
    Gauss-Legendre; ``mode="discrete"`` uses the sampled norm on the grid.
    """
    grid = path.grid
    t = grid.phase_points()
    xv = np.asarray(x(t), dtype=float)
    if mode == "discrete":
        norm2 = float(np.mean(xv ** 2))
    elif mode == "continuous":
        if max_freq is None:
            max_freq = max(16, grid.p // 2)
        panels = max(1, int(math.ceil((2 * max_freq + 1) / 16.0)))
        nodes, w = gauss_legendre_grid(0.0, 1.0, panels)
        norm2 = float(np.sum(w * np.asarray(x(nodes), dtype=float) ** 2))
    else:
        raise ValueError(f"mode must be 'continuous' or 'discrete', got {mode!r}")
    return norm2 - 2.0 * float(xv @ path.folded()) / grid.n


def shrink_factor(norm2, d: int, n: int):
    """James-Stein factor ``1 - (d-2)/(n ||a||^2)``; one when ``d <= 2`` or
    ``n ||a||^2`` is below the guard."""
    norm2 = np.asarray(norm2, dtype=float)
    if d <= 2:
        return np.ones_like(norm2) if norm2.ndim else 1.0
    nn = n * norm2
    safe = np.where(nn < SHRINK_GUARD, 1.0, nn)
    out = np.where(nn < SHRINK_GUARD, 1.0, 1.0 - (d - 2) / safe)
    return out if out.ndim else float(out)


def shrink_fit(base: ProjectiveEstimate, n: int | None = None) -> ProjectiveEstimate:
    """Shrink an LSE estimate towards zero by the James-Stein factor."""
    if base.kind != "lse":
        raise ValueError("shrinkage applies to least-squares estimates")
    n = base.n if n is None else n
    f = shrink_factor(base.norm2(), base.d, n)
    return ProjectiveEstimate(base.model_m, base.coeffs * f, "shrunk", n, base.grid)


def stein_loss(norm2, d: int, n: int):
    """Unbiased risk-difference integrand ``-(d-2)^2 / (n^2 ||a||^2)``."""
    norm2 = np.asarray(norm2, dtype=float)
    if d <= 2:
        return np.zeros_like(norm2)
    nn = n * norm2
    return np.where(nn < SHRINK_GUARD, 0.0, -(d - 2) ** 2 / (n * np.where(nn < SHRINK_GUARD, 1.0, nn)))


@dataclass
class SteinDelta:
    delta_direct: float
    delta_stein: float
    se_direct: float
    se_stein: float
    replicates: int

    @property
    def combined_se(self) -> float:
        return math.hypot(self.se_direct, self.se_stein)

    def to_dict(self) -> dict:
        return {"delta_direct": self.delta_direct, "delta_stein": self.delta_stein,
                "se_direct": self.se_direct, "se_stein": self.se_stein,
                "replicates": self.replicates}


def stein_delta(S, m: Sequence[int], n: int, replicates: int, seed: int,
                model: NoiseModel | None = None, p: int | None = None,
                antithetic: bool = True, batch: int = 2000) -> SteinDelta:
    """Monte Carlo risk difference between shrunk and plain LSE on ``m``.

    ``delta_direct`` averages ``||S* - S_m||^2 - ||S_hat - S_m||^2`` and
    ``delta_stein`` averages the Stein integrand. Both use the same draws.
    With ``antithetic=True`` replicates come in pairs ``(e, -e)`` and the
    standard errors are computed from pair means.

    Only white noise is accepted: the identity relies on independent
    Gaussian coefficients.
    """
    model = NoiseModel.white() if model is None else model
    if model.kind != "white":
        raise ValueError("the Stein identity check requires white noise")
    m = normalize_model(m)
    d = len(m)
    if p is None:
        p = fine_p(max(max(m), getattr(S, "max_index", 1)))
    grid = GridSpec(n, p)
    check_resolvable(m, p)
    idx = np.asarray(m)
    Phi = basis_matrix(idx, grid.phase_points())
    # noise-free coefficients from exact cell integrals
    # exact mean of the coefficient estimates; it is also the projection
    # S_m of the grid-resolved signal, the centre of the identity
    mean = n * np.asarray(S.cell_integrals(p)) @ Phi / n
    target = mean
    units = replicates // 2 if antithetic else replicates
    if units < 2:
        raise ValueError("need at least two replicate units")
    direct = np.empty(units)
    stein = np.empty(units)
    sd = 1.0 / math.sqrt(n)
    for start in range(0, units, batch):
        stop = min(units, start + batch)
        z = np.stack([rng_for(seed, u, 0).standard_normal(d) for u in range(start, stop)]) * sd
        signs = (1.0, -1.0) if antithetic else (1.0,)
        acc_d = np.zeros(stop - start)
        acc_s = np.zeros(stop - start)
        for sgn in signs:
            a = mean + sgn * z
            nrm = np.sum(a * a, axis=1)
            f = shrink_factor(nrm, d, n)
            shrunk = a * np.asarray(f)[:, None]
            acc_d += np.sum((shrunk - target) ** 2, 1) - np.sum((a - target) ** 2, 1)
            acc_s += stein_loss(nrm, d, n)
        direct[start:stop] = acc_d / len(signs)
        stein[start:stop] = acc_s / len(signs)
    return SteinDelta(float(direct.mean()), float(stein.mean()),
                      float(direct.std(ddof=1) / math.sqrt(units)),
                      float(stein.std(ddof=1) / math.sqrt(units)), units * (2 if antithetic else 1))
