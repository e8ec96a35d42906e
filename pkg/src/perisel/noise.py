"""Gaussian noise models: white, Ornstein-Uhlenbeck and CAR(q).

Every model is simulated exactly on the grid ``t_k = k/p``. Besides full
paths, the module computes the exact covariance of the *folded* increments

    Y_r = sum_{i=0}^{n-1} dxi_{i p + r},   r = 1..p,

which every linear statistic of a periodic design depends on. Monte Carlo
drivers sample from that law directly (see :class:`FoldedNoise`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg, signal

from .basis import GridSpec, basis_matrix, gauss_legendre_grid

__all__ = [
    "NoiseModel",
    "lambda_star",
    "car_lambda_star",
    "companion_matrix",
    "stability_check",
    "StabilityReport",
    "lyapunov_solve",
    "CarState",
    "car_state",
    "rng_for",
    "SamplePath",
    "simulate_path",
    "increment_autocovariance",
    "folded_covariance",
    "FoldedNoise",
    "folded_noise",
    "grid_zeta_covariance",
    "theoretical_zeta_variance",
    "ZetaCovariance",
    "empirical_zeta_cov",
]


# ---------------------------------------------------------------------------
# Models


@dataclass(frozen=True)
class NoiseModel:
    """Tagged noise description.

    Parameters
    ----------
    kind : {"white", "ou", "car"}
    theta : float or tuple of float
        OU drift (``<= 0``) or CAR coefficient vector (length ``q >= 2``).
    delta : float
        CAR stability margin; the model must lie in ``K_delta``.
    lambda_override : float, optional
        Replaces the CAR eigenvalue constant, which is extremely loose.
    """

    kind: str
    theta: float | tuple = 0.0
    delta: float | None = None
    lambda_override: float | None = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind == "white":
            object.__setattr__(self, "theta", 0.0)
        elif kind == "ou":
            th = float(self.theta)
            if not math.isfinite(th):
                raise ValueError("OU theta must be finite")
            if th > 0:
                raise ValueError(f"OU requires theta <= 0 (got {th}); positive drift is not stationary")
            object.__setattr__(self, "theta", th)
        elif kind == "car":
            th = tuple(float(v) for v in np.atleast_1d(self.theta))
            if len(th) < 2:
                raise ValueError("CAR requires q >= 2 coefficients")
            if self.delta is None or not 0 < float(self.delta) < 1:
                raise ValueError("CAR requires a stability margin delta in (0, 1)")
            rep = stability_check(th, float(self.delta))
            if not rep.in_k_delta:
                raise ValueError(
                    f"CAR theta={list(th)} is outside K_delta for delta={self.delta}: "
                    f"max Re eigenvalue {rep.max_real:.4g} (needs <= {-self.delta:.4g}), "
                    f"|A| = {rep.matrix_norm:.4g} (needs <= {1 / self.delta:.4g})")
            object.__setattr__(self, "theta", th)
            object.__setattr__(self, "delta", float(self.delta))
        else:
            raise ValueError(f"unknown noise kind {self.kind!r}")

    @classmethod
    def white(cls) -> "NoiseModel":
        return cls("white")

    @classmethod
    def ou(cls, theta: float) -> "NoiseModel":
        return cls("ou", theta)

    @classmethod
    def car(cls, theta, delta: float, lambda_override: float | None = None) -> "NoiseModel":
        return cls("car", tuple(theta), delta, lambda_override)

    @property
    def lambda_star(self) -> float:
        return lambda_star(self)

    @property
    def label(self) -> str:
        if self.kind == "white":
            return "white"
        if self.kind == "ou":
            return f"ou({self.theta:g})"
        return "car(" + ",".join(f"{v:g}" for v in self.theta) + f";{self.delta:g})"

    def to_dict(self) -> dict:
        if self.kind == "white":
            return {"kind": "white"}
        if self.kind == "ou":
            return {"kind": "ou", "theta": self.theta}
        d = {"kind": "car", "theta": list(self.theta), "delta": self.delta}
        if self.lambda_override is not None:
            d["lambda_override"] = self.lambda_override
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        kind = d.get("kind")
        if kind == "white":
            return cls.white()
        if kind == "ou":
            return cls.ou(d["theta"])
        if kind == "car":
            return cls.car(d["theta"], d.get("delta"), d.get("lambda_override"))
        raise ValueError(f"unknown noise kind {kind!r}")


def car_lambda_star(q: int, delta: float) -> float:
    """Eigenvalue constant ``(2/delta^2) F*(delta) J*(delta)`` for CAR(q)."""
    d = float(delta)
    F = q / (2 * d) + (2 * q / d ** 3) * sum(
        math.factorial(2 * j) / (math.factorial(j) ** 2 * d ** (4 * j)) for j in range(1, q))
    J = 1 / d + (2 / d ** 2) * sum(2 ** j / d ** (2 * j) for j in range(1, q))
    return 2.0 / d ** 2 * F * J


def lambda_star(model: NoiseModel) -> float:
    """Upper bound on the eigenvalues of the projected-noise covariance."""
    if model.kind == "white":
        return 1.0
    if model.kind == "ou":
        return 2.0
    if model.lambda_override is not None:
        return float(model.lambda_override)
    return car_lambda_star(len(model.theta), model.delta)


# ---------------------------------------------------------------------------
# CAR linear algebra


def companion_matrix(theta) -> np.ndarray:
    """First row ``theta``, ones on the subdiagonal."""
    th = np.asarray(theta, dtype=float)
    q = th.size
    A = np.zeros((q, q))
    A[0, :] = th
    if q > 1:
        A[np.arange(1, q), np.arange(q - 1)] = 1.0
    return A


@dataclass
class StabilityReport:
    in_k_delta: bool
    eigenvalues: np.ndarray
    matrix_norm: float
    max_real: float
    eigen_ok: bool
    norm_ok: bool


def stability_check(theta, delta: float) -> StabilityReport:
    """Check both clauses of ``K_delta``: spectral margin and Frobenius norm."""
    A = companion_matrix(theta)
    if not np.all(np.isfinite(A)):
        raise ValueError("theta must be finite")
    ev = np.linalg.eigvals(A)
    max_real = float(np.max(ev.real))
    norm = float(np.linalg.norm(A, "fro"))
    eig_ok = max_real <= -delta
    norm_ok = norm <= 1.0 / delta
    return StabilityReport(eig_ok and norm_ok, ev, norm, max_real, eig_ok, norm_ok)


def lyapunov_solve(A: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Solve ``A F + F A' + D = 0`` through its Kronecker form."""
    q = A.shape[0]
    I = np.eye(q)
    K = np.kron(I, A) + np.kron(A, I)
    F = np.linalg.solve(K, -D.reshape(-1, order="F")).reshape(q, q, order="F")
    return 0.5 * (F + F.T)


def _phi1(M: np.ndarray) -> np.ndarray:
    """``(e^M - I) M^{-1}`` without inversion, via a block exponential."""
    q = M.shape[0]
    big = np.zeros((2 * q, 2 * q))
    big[:q, :q] = M
    big[:q, q:] = np.eye(q)
    return linalg.expm(big)[:q, q:]


@dataclass
class CarState:
    A: np.ndarray
    F: np.ndarray
    exp_Ah: np.ndarray
    Q_h: np.ndarray
    h: float

    @property
    def q(self) -> int:
        return self.A.shape[0]

    def lyapunov_residual(self) -> float:
        D = np.zeros_like(self.A)
        D[0, 0] = 1.0
        return float(np.max(np.abs(self.A @ self.F + self.F @ self.A.T + D)))


@lru_cache(maxsize=64)
def _car_state(theta: tuple, h: float) -> CarState:
    A = companion_matrix(theta)
    q = A.shape[0]
    D = np.zeros((q, q))
    D[0, 0] = 1.0
    F = lyapunov_solve(A, D)
    # Van Loan block exponential gives Q_h = int_0^h e^{Au} D e^{A'u} du
    # without the cancellation of F - e^{Ah} F e^{A'h} at small h.
    M = np.zeros((2 * q, 2 * q))
    M[:q, :q] = -A
    M[:q, q:] = D
    M[q:, q:] = A.T
    E = linalg.expm(M * h)
    eAh = E[q:, q:].T
    Q = eAh @ E[:q, q:]
    Q = 0.5 * (Q + Q.T)
    return CarState(A=A, F=F, exp_Ah=eAh, Q_h=Q, h=h)


def car_state(model: NoiseModel, h: float) -> CarState:
    if model.kind != "car":
        raise ValueError("car_state needs a CAR model")
    return _car_state(tuple(model.theta), float(h))


def _psd_factor(C: np.ndarray) -> np.ndarray:
    """Lower factor ``L`` with ``L L' = C`` for a PSD matrix."""
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(C)
        return V * np.sqrt(np.clip(w, 0.0, None))


# ---------------------------------------------------------------------------
# Random streams


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, *key)``.

    Streams with different keys are independent; the result does not depend
    on the order in which streams are created.
    """
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Paths


@dataclass
class SamplePath:
    """Observation increments on ``grid`` with their noise part."""

    grid: GridSpec
    d_xi: np.ndarray
    d_y: np.ndarray
    seed: int
    model: NoiseModel
    signal_label: str = ""

    def folded(self) -> np.ndarray:
        """Per-phase sums ``Y_r`` of the observation increments."""
        return self.d_y.reshape(self.grid.n, self.grid.p).sum(axis=0)

    def folded_noise(self) -> np.ndarray:
        return self.d_xi.reshape(self.grid.n, self.grid.p).sum(axis=0)

    def save(self, prefix: str | Path) -> None:
        """Write ``<prefix>.dy.f64``, ``<prefix>.dxi.f64`` and a JSON sidecar."""
        prefix = Path(prefix)
        self.d_y.astype("<f8").tofile(f"{prefix}.dy.f64")
        self.d_xi.astype("<f8").tofile(f"{prefix}.dxi.f64")
        meta = {"grid": self.grid.to_dict(), "seed": self.seed, "model": self.model.to_dict(),
                "signal": self.signal_label, "dtype": "<f8"}
        Path(f"{prefix}.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, prefix: str | Path) -> "SamplePath":
        prefix = Path(prefix)
        meta = json.loads(Path(f"{prefix}.json").read_text())
        return cls(grid=GridSpec(**meta["grid"]),
                   d_xi=np.fromfile(f"{prefix}.dxi.f64", dtype="<f8"),
                   d_y=np.fromfile(f"{prefix}.dy.f64", dtype="<f8"),
                   seed=meta["seed"], model=NoiseModel.from_dict(meta["model"]),
                   signal_label=meta.get("signal", ""))


def _signal_cells(S, p: int) -> np.ndarray:
    vals = np.asarray(S.cell_integrals(p), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("signal produced non-finite cell integrals")
    return vals


def _noise_increments(model: NoiseModel, grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    N, h = grid.size, grid.h
    if model.kind == "white" or (model.kind == "ou" and model.theta == 0.0):
        return rng.standard_normal(N) * math.sqrt(h)
    if model.kind == "ou":
        th = model.theta
        a = math.exp(th * h)
        x0 = rng.standard_normal() / math.sqrt(2 * abs(th))
        eta = rng.standard_normal(N) * math.sqrt(-math.expm1(2 * th * h) / (2 * abs(th)))
        xi, _ = signal.lfilter([1.0], [1.0, -a], eta, zi=[a * x0])
        return np.diff(np.concatenate(([x0], xi)))
    st = car_state(model, h)
    q = st.q
    X = _psd_factor(st.F) @ rng.standard_normal(q)
    eps = rng.standard_normal((N, q)) @ _psd_factor(st.Q_h).T
    xi = np.empty(N + 1)
    xi[0] = X[q - 1]
    T = st.exp_Ah
    for k in range(N):
        X = T @ X + eps[k]
        xi[k + 1] = X[q - 1]
    return np.diff(xi)


def simulate_path(S, model: NoiseModel, grid: GridSpec, seed: int, replicate: int = 0) -> SamplePath:
    """Exact simulation of ``dy = S dt + dxi`` on ``grid``.

    ``S`` is any signal exposing ``cell_integrals(p)``; ``None`` means zero.
    """
    if not isinstance(grid, GridSpec):
        raise TypeError("grid must be a GridSpec")
    rng = rng_for(seed, replicate, 0)
    d_xi = _noise_increments(model, grid, rng)
    if S is None:
        d_y = d_xi.copy()
        label = "zero"
    else:
        d_y = np.tile(_signal_cells(S, grid.p), grid.n) + d_xi
        label = getattr(S, "label", "")
    return SamplePath(grid, d_xi, d_y, int(seed), model, label)


# ---------------------------------------------------------------------------
# Exact second-order structure


def increment_autocovariance(model: NoiseModel, h: float, max_lag: int) -> np.ndarray:
    """``c[L] = Cov(dxi_k, dxi_{k+L})`` for ``L = 0..max_lag`` (stationary start)."""
    c = np.zeros(max_lag + 1)
    if model.kind == "white" or (model.kind == "ou" and model.theta == 0.0):
        c[0] = h
        return c
    if model.kind == "ou":
        th = model.theta
        c[0] = -math.expm1(th * h) / abs(th)
        if max_lag:
            L = np.arange(1, max_lag + 1)
            c[1:] = -np.exp(th * L * h) / (2 * abs(th)) * 4.0 * math.sinh(th * h / 2) ** 2
        return c
    st = car_state(model, h)
    q = st.q
    E1 = (st.A * h) @ _phi1(st.A * h)  # e^{Ah} - I, accurate for small h
    c[0] = -2.0 * (E1 @ st.F)[q - 1, q - 1]
    w = E1 @ E1 @ st.F[:, q - 1]
    row = np.zeros(q)
    row[q - 1] = 1.0
    for L in range(1, max_lag + 1):
        c[L] = -row @ w
        row = row @ st.exp_Ah
    return c


@lru_cache(maxsize=32)
def _folded_covariance(model: NoiseModel, n: int, p: int) -> np.ndarray:
    h = 1.0 / p
    if model.kind == "white" or (model.kind == "ou" and model.theta == 0.0):
        return np.eye(p) * (n * h)
    c = increment_autocovariance(model, h, n * p)
    d = np.arange(0, p)
    col = np.zeros(p)
    for di in range(-(n - 1), n):
        lag = np.abs(di * p + d)
        col += (n - abs(di)) * c[lag]
    C = linalg.toeplitz(col)
    C.setflags(write=False)
    return C


def folded_covariance(model: NoiseModel, grid: GridSpec) -> np.ndarray:
    """Covariance of the folded noise vector ``(Y_1..Y_p)``."""
    return _folded_covariance(model, grid.n, grid.p)


class FoldedNoise:
    """Exact Gaussian law of linear statistics ``W' Y / n`` of folded noise.

    Parameters
    ----------
    model : NoiseModel
    grid : GridSpec
    weights : ndarray, shape (p, K)
        Rows indexed by phase ``r = 1..p``.
    """

    def __init__(self, model: NoiseModel, grid: GridSpec, weights: np.ndarray):
        self.model, self.grid = model, grid
        W = np.asarray(weights, dtype=float)
        if W.shape[0] != grid.p:
            raise ValueError("weights must have one row per phase")
        n = grid.n
        if model.kind == "white" or (model.kind == "ou" and model.theta == 0.0):
            cov = (W.T @ W) * (grid.h / n)
        else:
            C = folded_covariance(model, grid)
            cov = W.T @ linalg.matmul_toeplitz((C[:, 0], C[0, :]), W) / n ** 2
        self.cov = 0.5 * (cov + cov.T)
        self.factor = _psd_factor(self.cov)

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    def sample(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals ``z`` of shape ``(..., K)`` to the law."""
        return z @ self.factor.T


def folded_noise(model: NoiseModel, grid: GridSpec, weights: np.ndarray) -> FoldedNoise:
    return FoldedNoise(model, grid, weights)


def grid_zeta_covariance(model: NoiseModel, k: int, grid: GridSpec) -> np.ndarray:
    """Exact covariance of ``zeta_j = n^{-1/2} sum_k phi_j(t_k) dxi_k``, ``j <= k``."""
    Phi = basis_matrix(np.arange(1, k + 1), grid.phase_points())
    return FoldedNoise(model, grid, Phi).cov * grid.n


def _ou_zeta_variance(theta: float, g: Callable, n: int, max_freq: int) -> float:
    # n * Var(zeta_g) = theta int_0^n e^{theta v} int_v^n g(t) g(t - v) dt dv + int_0^n g^2
    panels_per_unit = max(2, 2 * max_freq + 2)
    v, wv = gauss_legendre_grid(0.0, float(n), panels_per_unit * n, order=32)
    x, wx = np.polynomial.legendre.leggauss(32)
    inner = np.empty_like(v)
    for i, vi in enumerate(v):
        length = n - vi
        panels = max(1, int(math.ceil(length * panels_per_unit)))
        edges = np.linspace(vi, n, panels + 1)
        half = 0.5 * np.diff(edges)
        mids = 0.5 * (edges[:-1] + edges[1:])
        t = (mids[:, None] + half[:, None] * x[None, :]).ravel()
        w = (half[:, None] * wx[None, :]).ravel()
        inner[i] = np.sum(w * g(t) * g(t - vi))
    first = theta * np.sum(wv * np.exp(theta * v) * inner)
    t, wt = gauss_legendre_grid(0.0, float(n), panels_per_unit * n, order=32)
    second = np.sum(wt * g(t) ** 2)
    return float((first + second) / n)


def theoretical_zeta_variance(model: NoiseModel, g, n: int) -> float:
    """``Var(n^{-1/2} int_0^n g dxi)`` for a trigonometric ``g`` (stationary start)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if model.kind == "car":
        raise ValueError("the projected-noise variance for CAR noise is only available by Monte Carlo")
    if model.kind == "white" or model.theta == 0.0:
        return float(g.norm2())
    return _ou_zeta_variance(model.theta, g, int(n), g.max_frequency)


@dataclass
class ZetaCovariance:
    B_hat: np.ndarray
    lambda_max: float
    se: float
    replicates: int


def empirical_zeta_cov(model: NoiseModel, k: int, n: int, replicates: int, seed: int,
                       p: int | None = None, groups: int = 100) -> ZetaCovariance:
    """Monte Carlo second-moment matrix of the projected noise vector.

    Each replicate is an independently seeded full path. The standard error
    of the top eigenvalue is a delete-a-group jackknife.
    """
    if replicates < 100:
        raise ValueError("replicates must be >= 100")
    if p is None:
        p = max(9, 8 * (k // 2) + 1)
        p += 1 - p % 2
    grid = GridSpec(n, p)
    Phi = basis_matrix(np.arange(1, k + 1), grid.phase_points())
    Z = np.empty((replicates, k))
    for r in range(replicates):
        path = simulate_path(None, model, grid, seed, replicate=r)
        Z[r] = path.folded_noise() @ Phi / math.sqrt(n)
    B = Z.T @ Z / replicates
    lam = float(np.linalg.eigvalsh(B)[-1])
    G = min(groups, replicates)
    bounds = np.linspace(0, replicates, G + 1).astype(int)
    partial = np.stack([Z[a:b].T @ Z[a:b] for a, b in zip(bounds[:-1], bounds[1:])])
    total = partial.sum(axis=0)
    sizes = np.diff(bounds)
    loo = np.array([np.linalg.eigvalsh((total - partial[g]) / (replicates - sizes[g]))[-1]
                    for g in range(G)])
    se = float(math.sqrt((G - 1) / G * np.sum((loo - loo.mean()) ** 2)))
    return ZetaCovariance(B_hat=B, lambda_max=lam, se=se, replicates=replicates)
