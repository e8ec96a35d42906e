"""Trigonometric basis, periodic signals and the geometry of sampled grids.

All signals live on the unit period and are evaluated at ``t mod 1``. The
basis is ordered as

    phi_1 = 1,  phi_{2a} = sqrt(2) cos(2 pi a t),  phi_{2a+1} = sqrt(2) sin(2 pi a t)

so that index ``j`` carries frequency ``j // 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

__all__ = [
    "SQRT2",
    "TrigBasis",
    "eval_basis",
    "basis_matrix",
    "frequency",
    "cell_integrals",
    "gauss_legendre_grid",
    "l2_inner",
    "PeriodicSignal",
    "FourierSummary",
    "fourier_analyze",
    "fourier_coefficients",
    "SobolevSpec",
    "boundary_signal",
    "random_sobolev_signal",
    "spike_signal",
    "plateau_signal",
    "BumpFamilySpec",
    "BumpSignal",
    "bump_signal",
    "poly_bump",
    "GridSpec",
    "DiscreteGeometry",
    "discrete_geometry",
    "fourier_decay_constant",
    "fourier_decay_sup",
    "holder_constants",
]

SQRT2 = math.sqrt(2.0)

# Gauss-Legendre order used for every L2[0,1] panel.
GL_ORDER = 64


def frequency(j):
    """Frequency carried by basis index ``j`` (works on arrays)."""
    return np.asarray(j) // 2


@dataclass(frozen=True)
class TrigBasis:
    """The first ``max_index`` functions of the trigonometric basis."""

    max_index: int

    def __post_init__(self):
        if int(self.max_index) < 1:
            raise ValueError("max_index must be a positive integer")

    def __call__(self, j: int, t):
        if not 1 <= j <= self.max_index:
            raise IndexError(f"basis index {j} outside 1..{self.max_index}")
        return eval_basis(j, t)

    def matrix(self, t, indices: Sequence[int] | None = None) -> np.ndarray:
        if indices is None:
            indices = range(1, self.max_index + 1)
        idx = np.asarray(list(indices), dtype=int)
        if idx.size and (idx.min() < 1 or idx.max() > self.max_index):
            raise IndexError("basis index outside the available range")
        return basis_matrix(idx, t)


def eval_basis(j: int, t):
    """Evaluate ``phi_j`` at ``t`` (scalar or array)."""
    if j < 1:
        raise IndexError(f"basis index must be >= 1, got {j}")
    t = np.asarray(t, dtype=float)
    if j == 1:
        out = np.ones_like(t)
    else:
        arg = 2.0 * math.pi * (j // 2) * np.mod(t, 1.0)
        out = SQRT2 * (np.cos(arg) if j % 2 == 0 else np.sin(arg))
    return out if out.ndim else float(out)


def basis_matrix(indices, t) -> np.ndarray:
    """Matrix ``M[k, i] = phi_{indices[i]}(t[k])``."""
    t = np.mod(np.atleast_1d(np.asarray(t, dtype=float)), 1.0)
    idx = np.atleast_1d(np.asarray(indices, dtype=int))
    if idx.size and idx.min() < 1:
        raise IndexError("basis indices start at 1")
    a = idx // 2
    arg = 2.0 * math.pi * np.outer(t, a)
    out = np.where(idx % 2 == 0, SQRT2 * np.cos(arg), SQRT2 * np.sin(arg))
    out[:, idx == 1] = 1.0
    return out


def cell_integrals(indices, p: int) -> np.ndarray:
    """Exact integrals of ``phi_j`` over the cells ``((r-1)/p, r/p]``.

    Returns an array of shape ``(p, len(indices))``. Uses the product form
    ``int cos(2 pi a t) dt = h sinc(a h) cos(2 pi a t_mid)`` which stays
    accurate for small cells.
    """
    idx = np.atleast_1d(np.asarray(indices, dtype=int))
    h = 1.0 / p
    mid = (np.arange(1, p + 1) - 0.5) * h
    a = idx // 2
    damp = h * np.sinc(a * h)  # np.sinc(x) = sin(pi x)/(pi x)
    arg = 2.0 * math.pi * np.outer(mid, a)
    out = np.where(idx % 2 == 0, SQRT2 * np.cos(arg), SQRT2 * np.sin(arg)) * damp
    out[:, idx == 1] = h
    return out


@lru_cache(maxsize=64)
def _gl(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def gauss_legendre_grid(a: float, b: float, panels: int, order: int = GL_ORDER):
    """Nodes and weights of composite Gauss-Legendre on ``[a, b]``."""
    x, w = _gl(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mids[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _panels_for(max_freq: int) -> int:
    # 64 nodes integrate trig products up to total frequency ~20 per panel
    # to machine precision; keep a margin.
    return max(1, int(math.ceil((2 * max_freq + 1) / 16.0)))


def l2_inner(f: Callable, g: Callable, max_freq: int = 16, panels: int | None = None) -> float:
    """``int_0^1 f g`` by composite Gauss-Legendre."""
    if panels is None:
        panels = _panels_for(max_freq)
    x, w = gauss_legendre_grid(0.0, 1.0, panels)
    fx = np.asarray(f(x), dtype=float)
    gx = np.asarray(g(x), dtype=float)
    return float(np.sum(w * fx * gx))


@dataclass(frozen=True)
class PeriodicSignal:
    """Finite trigonometric expansion ``S = sum_j s_j phi_j``.

    Parameters
    ----------
    coeffs : sequence of float
        Coefficients ``s_1, ..., s_J``.
    label : str
        Free-form name used in reports.
    """

    coeffs: tuple
    label: str = "signal"

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if c.size == 0:
            c = np.zeros(1)
        if not np.all(np.isfinite(c)):
            raise ValueError("signal coefficients must be finite")
        object.__setattr__(self, "coeffs", tuple(float(v) for v in c))

    @classmethod
    def from_terms(cls, terms: dict, label: str = "signal") -> "PeriodicSignal":
        """Build from ``{index: coefficient}``."""
        J = max(terms)
        c = np.zeros(J)
        for j, v in terms.items():
            c[j - 1] = v
        return cls(tuple(c), label)

    @classmethod
    def zero(cls, label: str = "zero") -> "PeriodicSignal":
        return cls((0.0,), label)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs)

    @property
    def max_index(self) -> int:
        return len(self.coeffs)

    @property
    def max_frequency(self) -> int:
        return self.max_index // 2

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        out = basis_matrix(np.arange(1, self.max_index + 1), flat) @ self.array
        return out.reshape(t.shape) if t.ndim else float(out[0])

    def norm2(self) -> float:
        """``||S||^2`` by Parseval."""
        return float(np.dot(self.array, self.array))

    def coefficient(self, j: int) -> float:
        return self.coeffs[j - 1] if 1 <= j <= self.max_index else 0.0

    def padded(self, J: int) -> np.ndarray:
        """Coefficients ``s_1..s_J`` (zero padded or truncated)."""
        out = np.zeros(J)
        k = min(J, self.max_index)
        out[:k] = self.array[:k]
        return out

    def cell_integrals(self, p: int) -> np.ndarray:
        """``int`` of ``S`` over each cell of a period split into ``p`` cells."""
        return cell_integrals(np.arange(1, self.max_index + 1), p) @ self.array

    def fourier(self, J: int) -> np.ndarray:
        return self.padded(J)

    def __add__(self, other: "PeriodicSignal") -> "PeriodicSignal":
        J = max(self.max_index, other.max_index)
        return PeriodicSignal(tuple(self.padded(J) + other.padded(J)), f"{self.label}+{other.label}")

    def scaled(self, c: float) -> "PeriodicSignal":
        return PeriodicSignal(tuple(c * self.array), self.label)

    def to_dict(self) -> dict:
        return {"label": self.label, "coeffs": list(self.coeffs)}

    @classmethod
    def from_dict(cls, d: dict) -> "PeriodicSignal":
        return cls(tuple(d["coeffs"]), d.get("label", "signal"))


def fourier_coefficients(f: Callable, J: int, panels: int | None = None) -> np.ndarray:
    """L2 coefficients ``(f, phi_j)`` for ``j = 1..J`` by quadrature."""
    if panels is None:
        panels = _panels_for(J // 2 + 16)
    x, w = gauss_legendre_grid(0.0, 1.0, panels)
    fx = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise ValueError("signal produced non-finite values")
    return basis_matrix(np.arange(1, J + 1), x).T @ (w * fx)


@dataclass(frozen=True)
class SobolevSpec:
    """Smoothness class: ``max_n n^(2 beta) tail_n(S) <= r^2``."""

    beta: float
    r: float

    def __post_init__(self):
        for name in ("beta", "r"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")


@dataclass
class FourierSummary:
    coeffs: np.ndarray
    tail_energies: np.ndarray  # tail_energies[n-1] = sum_{j>=n} s_j^2

    def sobolev_check(self, beta: float, r: float) -> bool:
        return sobolev_level(self.tail_energies, beta) <= r * r * (1 + 1e-12)


def sobolev_level(tails: np.ndarray, beta: float) -> float:
    """``max_n n^(2 beta) tails[n-1]``."""
    n = np.arange(1, len(tails) + 1, dtype=float)
    return float(np.max(n ** (2.0 * beta) * tails))


def tail_energies(coeffs) -> np.ndarray:
    c2 = np.asarray(coeffs, dtype=float) ** 2
    return np.cumsum(c2[::-1])[::-1]


def fourier_analyze(S: PeriodicSignal, j_max: int) -> FourierSummary:
    """Coefficients and tail energies of ``S`` up to ``j_max``.

    Tail sums are taken over every stored coefficient, so ``tail[n-1]`` is
    exact even when ``j_max`` is smaller than the signal length.
    """
    if j_max < 1:
        raise IndexError("j_max must be >= 1")
    J = max(j_max, S.max_index)
    full = tail_energies(S.padded(J))
    return FourierSummary(coeffs=S.padded(j_max), tail_energies=full[:j_max].copy())


def boundary_signal(spec: SobolevSpec, J: int = 512, label: str | None = None) -> PeriodicSignal:
    """Signal on the edge of the smoothness class.

    Coefficients ``s_j = c j^(-beta - 1/2)`` for ``j <= J`` with ``c`` chosen
    so that ``max_n n^(2 beta) tail_n = r^2``.
    """
    j = np.arange(1, J + 1, dtype=float)
    s = j ** (-spec.beta - 0.5)
    level = sobolev_level(tail_energies(s), spec.beta)
    s *= spec.r / math.sqrt(level)
    return PeriodicSignal(tuple(s), label or f"boundary(beta={spec.beta:g},r={spec.r:g})")


def spike_signal(spec: SobolevSpec, k: int, label: str | None = None) -> PeriodicSignal:
    """Single-coefficient class member ``r k^(-beta) phi_k``.

    Its class level is exactly ``r^2`` (attained at ``n = k``). Scanning
    ``k`` moves the coefficient across the selection threshold, which is
    where the supremum of the risk over the class concentrates.
    """
    if k < 1:
        raise ValueError("basis indices start at 1")
    return PeriodicSignal.from_terms({int(k): spec.r * float(k) ** (-spec.beta)},
                                     label or f"spike{k}(beta={spec.beta:g},r={spec.r:g})")


def plateau_signal(spec: SobolevSpec, k: int, label: str | None = None) -> PeriodicSignal:
    """Class member with ``k`` equal coefficients on indices ``k..2k-1``.

    The common amplitude is scaled so the class level is exactly ``r^2``.
    Spreading the energy over a block of indices makes selection pay a
    penalty for every index of the block, so these members sit closer to
    the least favourable shape than single spikes do.
    """
    if k < 1:
        raise ValueError("basis indices start at 1")
    c = np.zeros(2 * k - 1)
    c[k - 1:] = 1.0
    c *= spec.r / math.sqrt(sobolev_level(tail_energies(c), spec.beta))
    return PeriodicSignal(tuple(c), label or f"plateau{k}(beta={spec.beta:g},r={spec.r:g})")


def random_sobolev_signal(spec: SobolevSpec, J: int, rng: np.random.Generator,
                          label: str = "random") -> PeriodicSignal:
    """Random member of the class, scaled to sit on its boundary.

    Coefficients are Gaussian with the boundary decay profile and random
    signs, then rescaled so the class level equals ``r^2``.
    """
    j = np.arange(1, J + 1, dtype=float)
    s = rng.standard_normal(J) * j ** (-spec.beta - 0.5)
    level = sobolev_level(tail_energies(s), spec.beta)
    s *= spec.r / math.sqrt(level)
    return PeriodicSignal(tuple(s), label)


# ---------------------------------------------------------------------------
# Bump family used by the lower bound


def _poly_bump_norm(power: int) -> float:
    # int_{-1}^{1} (1-u^2)^(2 power) du = sqrt(pi) Gamma(2k+1) / Gamma(2k+3/2)
    k = 2 * power
    return math.sqrt(math.sqrt(math.pi) * math.exp(special.gammaln(k + 1) - special.gammaln(k + 1.5)))


def poly_bump(u, power: int = 4):
    """Kernel ``V(u) = c (1-u^2)^power`` on ``|u| < 1`` with ``int V^2 = 1``.

    With ``power = 4`` the kernel has three continuous derivatives, which is
    enough for smoothness orders below 3.
    """
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    out = np.zeros_like(u)
    out[inside] = (1.0 - u[inside] ** 2) ** power / _poly_bump_norm(power)
    return out


_KERNELS = {"poly_bump": poly_bump}


@dataclass(frozen=True)
class BumpFamilySpec:
    """Disjoint bumps ``z_j V((t - a_j)/h)`` with ``h = 1/(2m)``."""

    m: int
    delta: float
    z: tuple = ()
    kernel: str = "poly_bump"

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError("bump family needs m >= 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        z = tuple(float(v) for v in (self.z if len(self.z) else [0.0] * self.m))
        if len(z) != self.m:
            raise ValueError(f"z has length {len(z)}, expected m={self.m}")
        if any(abs(v) > self.delta * (1 + 1e-12) for v in z):
            raise ValueError("every |z_i| must be <= delta")
        if self.kernel not in _KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        object.__setattr__(self, "z", z)

    @property
    def h(self) -> float:
        return 1.0 / (2 * self.m)

    @property
    def centers(self) -> np.ndarray:
        return (2 * np.arange(1, self.m + 1) - 1) / (2.0 * self.m)

    def to_dict(self) -> dict:
        return {"m": self.m, "delta": self.delta, "z": list(self.z), "kernel": self.kernel}

    @classmethod
    def from_dict(cls, d: dict) -> "BumpFamilySpec":
        return cls(int(d["m"]), float(d["delta"]), tuple(d.get("z", ())), d.get("kernel", "poly_bump"))


@dataclass(frozen=True)
class BumpSignal:
    """Evaluator for a bump-family signal; supports the same calls as
    :class:`PeriodicSignal` except exact Fourier coefficients."""

    spec: BumpFamilySpec
    label: str = "bumps"

    def psi(self, l: int, t):
        """Single bump ``psi_l(t) = V((t - a_l)/h)`` (``l`` is 1-based)."""
        s = self.spec
        t = np.mod(np.asarray(t, dtype=float), 1.0)
        return _KERNELS[s.kernel]((t - s.centers[l - 1]) / s.h)

    def psi_matrix(self, t) -> np.ndarray:
        t = np.mod(np.atleast_1d(np.asarray(t, dtype=float)), 1.0)
        s = self.spec
        u = (t[:, None] - s.centers[None, :]) / s.h
        return _KERNELS[s.kernel](u)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.psi_matrix(t.ravel()) @ np.asarray(self.spec.z)
        return out.reshape(t.shape) if t.ndim else float(out[0])

    def norm2(self) -> float:
        """``h sum z_j^2`` (exact because the bumps are disjoint)."""
        return self.spec.h * float(np.dot(self.spec.z, self.spec.z))

    def cell_integrals(self, p: int, order: int = 16) -> np.ndarray:
        return psi_cell_integrals(self.spec, p, order) @ np.asarray(self.spec.z)

    def fourier(self, J: int) -> np.ndarray:
        return psi_fourier(self.spec, J) @ np.asarray(self.spec.z)

    def to_dict(self) -> dict:
        return {"label": self.label, **self.spec.to_dict()}


def bump_signal(spec: BumpFamilySpec, label: str = "bumps") -> BumpSignal:
    return BumpSignal(spec, label)


def psi_cell_integrals(spec: BumpFamilySpec, p: int, order: int = 16) -> np.ndarray:
    """Cell integrals of every bump, shape ``(p, m)``."""
    x, w = _gl(order)
    h = 1.0 / p
    left = np.arange(p) * h
    nodes = left[:, None] + 0.5 * h * (x[None, :] + 1.0)
    vals = BumpSignal(spec).psi_matrix(nodes.ravel()).reshape(p, order, spec.m)
    return 0.5 * h * np.einsum("k,pkm->pm", w, vals)


def psi_fourier(spec: BumpFamilySpec, J: int) -> np.ndarray:
    """``(psi_l, phi_j)`` as a ``(J, m)`` array, integrated bump by bump."""
    out = np.zeros((J, spec.m))
    panels = max(4, _panels_for(J // 2) // max(spec.m, 1) + 1)
    for l, a in enumerate(spec.centers):
        x, w = gauss_legendre_grid(a - spec.h, a + spec.h, panels)
        v = BumpSignal(spec).psi(l + 1, x)
        out[:, l] = basis_matrix(np.arange(1, J + 1), x).T @ (w * v)
    return out


# ---------------------------------------------------------------------------
# Discrete grid geometry


@dataclass(frozen=True)
class GridSpec:
    """Observation grid ``t_k = k/p`` on ``[0, n]``; ``p`` must be odd."""

    n: int
    p: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"horizon n must be a positive integer, got {self.n}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        if self.p % 2 == 0:
            raise ValueError(f"p must be odd (got {self.p}); the trigonometric basis "
                             "is only orthonormal on odd grids")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", int(self.p))

    @property
    def h(self) -> float:
        return 1.0 / self.p

    @property
    def size(self) -> int:
        return self.n * self.p

    def phase_points(self) -> np.ndarray:
        """``t_1..t_p`` of one period."""
        return np.arange(1, self.p + 1) / self.p

    def points(self) -> np.ndarray:
        """``t_1..t_{np}``."""
        return np.arange(1, self.size + 1) / self.p

    def to_dict(self) -> dict:
        return {"n": self.n, "p": self.p}


@dataclass
class DiscreteGeometry:
    p: int
    h_values: np.ndarray = field(repr=False)

    @property
    def points(self) -> np.ndarray:
        return np.arange(1, self.p + 1) / self.p

    def inner(self, x: Callable, z: Callable) -> float:
        t = self.points
        return float(np.mean(np.asarray(x(t), float) * np.asarray(z(t), float)))

    def norm2(self, x: Callable) -> float:
        return self.inner(x, x)

    @property
    def H_p(self) -> float:
        return float(np.mean(self.h_values ** 2))


def discrete_geometry(S: Callable, grid: GridSpec | int, order: int = 16) -> DiscreteGeometry:
    """Sampled inner product and the sampling-bias functional of ``S``.

    ``h_l = p int_{cell l} (S(t) - S(t_l)) dt`` is integrated with a fixed
    Gauss-Legendre rule of ``order`` nodes per cell.
    """
    p = grid.p if isinstance(grid, GridSpec) else int(grid)
    x, w = _gl(order)
    c = 1.0 / p
    left = np.arange(p) * c
    nodes = left[:, None] + 0.5 * c * (x[None, :] + 1.0)
    vals = np.asarray(S(nodes.ravel()), dtype=float).reshape(p, order)
    right = np.asarray(S(np.arange(1, p + 1) * c), dtype=float)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(right))):
        raise ValueError("signal produced non-finite values")
    cell_mean = 0.5 * (vals @ w)
    return DiscreteGeometry(p=p, h_values=cell_mean - right)


# ---------------------------------------------------------------------------
# Fourier-decay constant for Holder-smooth signals


def _split_beta(beta: float):
    k = int(math.floor(beta))
    return k, beta - k


def fourier_decay_constant(beta: float, series_cut: float = 1e-3) -> float:
    """Constant bounding Fourier tails of Holder-smooth periodic functions.

    ``c = 1 + 2^beta + pi^4 9^beta I_1 / (8 I_2)`` with
    ``I_1 = int_0^inf u^(alpha-3) sin^4(pi u) du`` and
    ``I_2 = int_0^(1/2) u^(-4) sin^4(pi u) du``, where ``alpha`` is the
    fractional part of ``beta``.

    Near zero ``sin^4(pi u) = (pi u)^4 (1 - 2(pi u)^2/3 + (pi u)^4/5 + ...)``
    is integrated termwise below ``series_cut``. Beyond ``u = 1`` the
    integrand is split as ``3/8 - cos(2 pi u)/2 + cos(4 pi u)/8`` with the
    oscillatory parts handled by a Fourier-weighted rule.
    """
    if not (math.isfinite(beta) and beta > 0):
        raise ValueError("beta must be positive")
    _, alpha = _split_beta(beta)
    e = alpha - 3.0
    pi = math.pi
    eps = series_cut
    head = pi ** 4 * (eps ** (alpha + 2) / (alpha + 2)
                      - (2 * pi ** 2 / 3) * eps ** (alpha + 4) / (alpha + 4)
                      + (pi ** 4 / 5) * eps ** (alpha + 6) / (alpha + 6))

    def f1(u):
        return u ** e * math.sin(pi * u) ** 4

    mid, err = integrate.quad(f1, eps, 1.0, limit=200, epsabs=1e-14, epsrel=1e-13)
    flat = 3.0 / 8.0 / (2.0 - alpha)
    c2, _ = integrate.quad(lambda u: u ** e, 1.0, np.inf, weight="cos", wvar=2 * pi)
    c4, _ = integrate.quad(lambda u: u ** e, 1.0, np.inf, weight="cos", wvar=4 * pi)
    I1 = head + mid + flat - 0.5 * c2 + 0.125 * c4

    def f2(u):
        return (math.sin(pi * u) / u) ** 4 if u > 0 else pi ** 4

    I2, _ = integrate.quad(f2, 0.0, 0.5, limit=200, epsabs=1e-14, epsrel=1e-13)
    if not (math.isfinite(I1) and math.isfinite(I2) and I2 > 0):
        raise ArithmeticError("quadrature for the Fourier-decay constant failed")
    return 1.0 + 2.0 ** beta + pi ** 4 * 9.0 ** beta * I1 / (8.0 * I2)


def fourier_decay_sup(S: PeriodicSignal, beta: float) -> float:
    """``sup_n (n+1)^beta sqrt(sum_{k>=n} a_k^2 + b_k^2)`` over frequencies.

    ``a_k, b_k`` are the classical cosine/sine coefficients of ``S``
    (``S = a_0/2 + sum a_k cos + b_k sin``).
    """
    c = S.array
    K = S.max_frequency
    energy = np.zeros(K + 1)
    energy[0] = (2.0 * c[0]) ** 2
    for k in range(1, K + 1):
        energy[k] = 2.0 * (S.coefficient(2 * k) ** 2 + S.coefficient(2 * k + 1) ** 2)
    tails = np.cumsum(energy[::-1])[::-1]
    n = np.arange(K + 1, dtype=float)
    return float(np.max((n + 1) ** beta * np.sqrt(tails)))


def holder_constants(S: PeriodicSignal, beta: float, pairs: int = 1000,
                     rng: np.random.Generator | None = None):
    """Sampled estimates ``(L, L0)`` for a trigonometric signal.

    ``L0`` is the largest sup-norm among derivatives of order below ``k``
    (``k`` the integer part of ``beta``; at least ``sup |S|``) and ``L`` the
    largest sampled Holder quotient of the ``k``-th derivative with exponent
    ``alpha``.
    """
    k, alpha = _split_beta(beta)
    rng = np.random.default_rng(0) if rng is None else rng
    idx = np.arange(1, S.max_index + 1)
    freq = 2 * math.pi * (idx // 2)

    def deriv(order, t):
        # d^order/dt^order of cos/sin shifts the phase by order * pi/2
        t = np.asarray(t, dtype=float)
        arg = np.outer(t, freq) + order * math.pi / 2
        vals = np.where(idx % 2 == 0, SQRT2 * np.cos(arg), SQRT2 * np.sin(arg)) * freq ** order
        if order == 0:
            vals[:, idx == 1] = 1.0
        else:
            vals[:, idx == 1] = 0.0
        return vals @ S.array

    grid = np.linspace(0, 1, 4001)
    L0 = max(float(np.max(np.abs(deriv(i, grid)))) for i in range(max(k, 1)))
    s = rng.random(pairs)
    d = rng.random(pairs) * 0.5 + 1e-6
    num = np.abs(deriv(k, s + d) - deriv(k, s))
    L = float(np.max(num / d ** alpha)) if alpha > 0 else float(np.max(num))
    return L, L0
