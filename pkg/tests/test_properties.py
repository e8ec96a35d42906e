"""Property-based invariants."""

from __future__ import annotations

import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from perisel.basis import (GridSpec, PeriodicSignal, basis_matrix, discrete_geometry, l2_inner,
                           tail_energies)
from perisel.estimators import contrast_gamma, lse_coefficients, shrink_factor
from perisel.noise import NoiseModel, folded_covariance, simulate_path
from perisel.selection import ModelFamily, penalty, select_batch, solve_constants

odd_p = st.integers(0, 40).map(lambda k: 2 * k + 1)
coeffs = arrays(np.float64, st.integers(1, 12), elements=st.floats(-3, 3, allow_nan=False))


@given(odd_p)
def test_grid_orthonormality(p):
    Phi = basis_matrix(np.arange(1, p + 1), np.arange(1, p + 1) / p)
    np.testing.assert_allclose(Phi.T @ Phi / p, np.eye(p), atol=1e-8)


@given(coeffs)
def test_parseval(c):
    S = PeriodicSignal(tuple(c))
    assert abs(l2_inner(S, S, max_freq=8) - float(c @ c)) <= 1e-8 * max(1.0, float(c @ c))


@given(coeffs)
def test_tail_energies_monotone(c):
    tails = tail_energies(c)
    assert tails[0] == np.float64(c @ c) or abs(tails[0] - c @ c) < 1e-12
    assert np.all(np.diff(tails) <= 1e-15)
    assert np.all(tails >= 0)


@given(odd_p, st.integers(1, 20), st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2 ** 31))
def test_lse_is_linear_in_observations(p, n, a, b, seed):
    rng = np.random.default_rng(seed)
    y1, y2 = rng.standard_normal((2, p))
    idx = np.arange(1, p + 1)
    lhs = lse_coefficients(a * y1 + b * y2, idx, n)
    rhs = a * lse_coefficients(y1, idx, n) + b * lse_coefficients(y2, idx, n)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@given(
    coeffs,
    arrays(np.float64, st.integers(1, 6), elements=st.floats(-2, 2, allow_nan=False)),
    st.integers(1, 6).map(lambda k: 2 * k + 9),
    st.integers(1, 30),
    st.floats(-3, 0),
    st.integers(0, 1000),
)
def test_discrete_contrast_identity(s, z, p, n, theta, seed):
    # ||z - S||_p^2 = gamma(z) + 2 F(z) + 2 G(z, S) + ||S||_p^2 on every sample path
    S = PeriodicSignal(tuple(s))
    zf = PeriodicSignal(tuple(z))
    grid = GridSpec(n, p)
    path = simulate_path(S, NoiseModel.ou(theta), grid, seed)
    geo = discrete_geometry(S, grid)
    t = grid.phase_points()
    zt = zf(t)
    F = float(zt @ path.folded_noise()) / n
    G = float(zt @ geo.h_values) / p
    lhs = float(np.mean((zt - S(t)) ** 2))
    rhs = contrast_gamma(path, zf, "discrete") + 2 * F + 2 * G + geo.norm2(S)
    assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))


@given(
    arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(6, 6)),
           elements=st.floats(-2, 2, allow_nan=False)),
    st.sampled_from(["lse", "shrunk"]),
    st.integers(5, 500),
)
def test_batch_choice_is_the_criterion_argmin(alpha, kind, n):
    fam = ModelFamily.general([[1], [1, 2], [2, 3, 4], [1, 2, 3, 4, 5, 6], [5, 6]], [1, 1, 1.5, 1, 2])
    params = solve_constants(2.0, fam)
    batch = select_batch(alpha, fam, params, n, kind)
    for r, row in enumerate(alpha):
        crit = []
        for m, w in zip(fam.models, fam.weights):
            a = row[np.asarray(m) - 1]
            f = shrink_factor(float(a @ a), len(m), n) if kind == "shrunk" else 1.0
            crit.append((f * f - 2 * f) * float(a @ a) + penalty(params, m, w, n))
        best = min(crit)
        assert crit[batch.choice[r]] <= best + 1e-12 * max(1.0, abs(best))


@given(st.integers(1, 50), st.floats(1, 10), st.integers(1, 10 ** 6), st.floats(0.01, 100),
       st.floats(0.5, 1e4))
def test_penalty_scaling(d, weight, n, factor, kappa):
    params = solve_constants(kappa)
    base = penalty(params, d, weight, n)
    assert np.isclose(base, params.rho * weight * d / n, rtol=1e-14)
    assert np.isclose(penalty(params, d, weight, 2 * n), base / 2, rtol=1e-14)
    assert np.isclose(penalty(params.scaled(factor), d, weight, n), factor * base, rtol=1e-13)
    assert np.isclose(solve_constants(2 * kappa).rho, 2 * params.rho, rtol=1e-13)


@given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3), st.integers(1, 40), st.integers(1, 1000))
def test_shrink_factor_properties(a, b, d, n):
    lo, hi = sorted((a, b))
    f_lo, f_hi = shrink_factor(lo, d, n), shrink_factor(hi, d, n)
    assert f_lo <= f_hi <= 1.0
    if d <= 2:
        assert f_lo == f_hi == 1.0


@given(st.floats(-4, 0), st.integers(1, 30), st.integers(0, 6).map(lambda k: 2 * k + 1))
def test_folded_covariance_is_psd(theta, n, p):
    C = folded_covariance(NoiseModel.ou(theta), GridSpec(n, p))
    np.testing.assert_allclose(C, C.T, atol=1e-12)
    assert np.linalg.eigvalsh(C).min() >= -1e-10 * np.abs(C).max()
