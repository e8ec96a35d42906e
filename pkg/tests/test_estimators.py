from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from perisel.basis import GridSpec, PeriodicSignal, basis_matrix
from perisel.estimators import (
    ProjectiveEstimate,
    check_resolvable,
    contrast_gamma,
    fine_p,
    lse_coefficients,
    lse_fit,
    normalize_model,
    shrink_factor,
    shrink_fit,
    stein_delta,
    stein_loss,
)
from perisel.noise import NoiseModel, SamplePath, simulate_path


def _noise_free_path(S, grid):
    d_y = np.tile(S.cell_integrals(grid.p), grid.n)
    return SamplePath(grid, np.zeros_like(d_y), d_y, 0, NoiseModel.white(), S.label)


def test_model_normalization():
    assert normalize_model([3, 1, 3]) == (1, 3)
    with pytest.raises(ValueError):
        normalize_model([])
    with pytest.raises(ValueError):
        normalize_model([0, 1])


def test_aliasing_rejected():
    with pytest.raises(ValueError, match="aliasing"):
        check_resolvable((1, 2, 12), 11)
    check_resolvable((1, 11), 11)


def test_fine_p_is_odd_and_resolves():
    for J in (1, 10, 300, 2001):
        p = fine_p(J)
        assert p % 2 == 1 and p >= 1001 and p >= 8 * (J // 2)


def test_lse_noise_free_against_quadrature():
    S = PeriodicSignal.from_terms({2: 3.0, 5: -1.0})
    grid = GridSpec(3, 21)
    est = lse_fit(_noise_free_path(S, grid), [1, 2, 3, 4, 5])
    # independent route: adaptive quadrature of every cell integral
    ref = np.zeros(5)
    for r in range(1, grid.p + 1):
        cell, _ = integrate.quad(S, (r - 1) / grid.p, r / grid.p, epsabs=1e-14)
        ref += basis_matrix(np.arange(1, 6), r / grid.p)[0] * cell
    np.testing.assert_allclose(est.coeffs, ref, atol=1e-12)
    # right-endpoint sampling of cell integrals shifts each harmonic by half
    # a cell, so the error to the true coefficients decays like 1/p
    errs = []
    for p in (1001, 10001):
        fine = lse_fit(_noise_free_path(S, GridSpec(1, p)), [1, 2, 3, 4, 5])
        errs.append(np.max(np.abs(fine.coeffs - [0, 3, 0, 0, -1])))
    assert errs[0] < 2 * math.pi * 3.0 / 1001
    assert errs[1] * 10001 == pytest.approx(errs[0] * 1001, rel=1e-3)


def test_lse_is_linear_in_the_data():
    grid = GridSpec(4, 9)
    a = simulate_path(None, NoiseModel.ou(-1.0), grid, 1)
    b = simulate_path(None, NoiseModel.ou(-1.0), grid, 2)
    ya, yb = a.folded(), b.folded()
    lhs = lse_coefficients(ya + 2.5 * yb, [1, 2, 3], grid.n)
    rhs = lse_coefficients(ya, [1, 2, 3], grid.n) + 2.5 * lse_coefficients(yb, [1, 2, 3], grid.n)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_lse_minimizes_the_contrast_within_its_model():
    S = PeriodicSignal.from_terms({2: 1.0})
    grid = GridSpec(5, 11)
    path = simulate_path(S, NoiseModel.ou(-0.5), grid, 3)
    est = lse_fit(path, [1, 2, 3])
    g0 = contrast_gamma(path, est, "discrete")
    rng = np.random.default_rng(0)
    for _ in range(20):
        other = ProjectiveEstimate((1, 2, 3), est.coeffs + rng.normal(0, 0.1, 3), "lse", grid.n, grid)
        assert contrast_gamma(path, other, "discrete") >= g0 - 1e-12


def test_contrast_modes_agree_below_nyquist():
    grid = GridSpec(2, 31)
    path = simulate_path(PeriodicSignal.from_terms({3: 1.0}), NoiseModel.white(), grid, 4)
    est = lse_fit(path, [1, 2, 3, 4])
    assert contrast_gamma(path, est, "discrete") == pytest.approx(
        contrast_gamma(path, est, "continuous"), abs=1e-12)
    with pytest.raises(ValueError):
        contrast_gamma(path, est, "other")


def test_shrink_factor_cases():
    assert shrink_factor(0.5, 2, 10) == 1.0
    assert shrink_factor(0.5, 5, 10) == pytest.approx(1 - 3 / 5)
    assert shrink_factor(0.0, 5, 10) == 1.0  # guarded
    np.testing.assert_allclose(shrink_factor(np.array([1.0, 2.0]), 4, 2), [0.0, 0.5])
    assert stein_loss(2.0, 5, 10) == pytest.approx(-9 / 200)
    assert float(stein_loss(2.0, 2, 10)) == 0.0


def test_shrink_fit_requires_lse():
    grid = GridSpec(1, 11)
    est = ProjectiveEstimate((1, 2, 3), [1.0, 0.0, 0.0], "lse", 10, grid)
    sh = shrink_fit(est)
    assert sh.kind == "shrunk"
    np.testing.assert_allclose(sh.coeffs, [0.9, 0.0, 0.0])
    with pytest.raises(ValueError):
        shrink_fit(sh)


def test_estimate_validation_and_evaluation():
    with pytest.raises(ValueError):
        ProjectiveEstimate((1, 2), [1.0], "lse", 10)
    with pytest.raises(ValueError):
        ProjectiveEstimate((1,), [np.nan], "lse", 10)
    est = ProjectiveEstimate((2, 1), [1.0, 2.0], "lse", 10)
    assert est.model_m == (1, 2)
    assert est(0.0) == pytest.approx(1.0 + 2.0 * math.sqrt(2))
    assert est.full_coeffs(4).tolist() == [1.0, 2.0, 0.0, 0.0]


def _exact_stein_delta(mean, d, n):
    """Risk difference of James-Stein shrinkage for ``a ~ N(mean, I/n)``.

    ``n ||a||^2`` is noncentral chi-square with ``d`` degrees of freedom and
    noncentrality ``n ||mean||^2``; its inverse moment is a Poisson mixture.
    """
    lam = n * float(mean @ mean)
    k = np.arange(0, 2000)
    w = stats.poisson.pmf(k, lam / 2)
    inv = float(np.sum(w / (d - 2 + 2 * k)))
    return -(d - 2) ** 2 / n * inv


@pytest.mark.parametrize("d,n,amp", [(3, 50, 0.0), (5, 200, 3.0), (9, 50, 3.0)])
def test_stein_delta_against_noncentral_chi_square(d, n, amp):
    S = PeriodicSignal.from_terms({2: amp}) if amp else PeriodicSignal.zero()
    m = tuple(range(1, d + 1))
    res = stein_delta(S, m, n, 4000, seed=5)
    p = fine_p(max(d, S.max_index))
    Phi = basis_matrix(np.arange(1, d + 1), np.arange(1, p + 1) / p)
    mean = np.asarray(S.cell_integrals(p)) @ Phi
    exact = _exact_stein_delta(mean, d, n)
    assert abs(res.delta_direct - exact) <= 4 * res.se_direct
    assert abs(res.delta_stein - exact) <= 4 * res.se_stein


def test_stein_delta_requires_white_noise():
    with pytest.raises(ValueError, match="white"):
        stein_delta(PeriodicSignal.zero(), (1, 2, 3), 50, 200, 0, model=NoiseModel.ou(-1.0))
