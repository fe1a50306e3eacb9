from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from gsmollifier.grid import convolve, derivative, make_grid, sample
from gsmollifier.windows import (CertificateError, RadialProfile, apply_T, bump_profile, build_window_pair,
                                 extract_polynomial, fourier_decay_check, parametrix_1d,
                                 profile_recursion, radial_laplacian_fd, recursion_coefficients,
                                 smooth_cutoff, spectral_derivative, sphere_area, verify_moments, verify_two_scale,
                                 window_derivative, window_laplacian)

H_R = 2.0 ** -12


@pytest.mark.parametrize("d", [1, 2])
def test_bump_normalised(d):
    p = bump_profile(d, H_R)
    f = (lambda r: p.exact(np.array([r]))[0]) if d == 1 else (lambda r: r * p.exact(np.array([r]))[0])
    assert sphere_area(d) * quad(f, 0.5, 1.0, limit=200)[0] == pytest.approx(1.0, abs=1e-10)


def test_bump_support_and_peak():
    p = bump_profile(1, H_R)
    assert p(np.array([0.4]))[0] == 0.0
    assert np.all(p.samples[(p.radii <= 0.5) | (p.radii >= 1.0)] == 0.0)
    assert p.radii[np.argmax(p.samples)] == pytest.approx(0.75, abs=H_R)
    with pytest.raises(ValueError):
        bump_profile(3)


def test_recursion_coefficients():
    mu, lam = recursion_coefficients(0, 1)
    assert mu == pytest.approx(-1.0 / 3.0) and lam == pytest.approx(8.0 / 3.0)


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("L", [0, 1, 2])
def test_recursion_coefficients_solve_system(d, L):
    mu, lam = recursion_coefficients(L, d)
    assert mu + 2.0 ** -d * lam == pytest.approx(1.0)
    assert mu + 2.0 ** (-d - 2 * (L + 1)) * lam == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("d", [1, 2])
def test_recursion_keeps_mass(d):
    rho = bump_profile(d, H_R)
    for level in range(3):
        rho = profile_recursion(rho, level, d)
        w = (lambda r: rho.exact(np.array([r]))[0]) if d == 1 else (lambda r: r * rho.exact(np.array([r]))[0])
        pts = [2.0 ** -k for k in range(1, level + 3)]
        mass = sphere_area(d) * quad(w, 0.0, 1.0, points=pts, limit=400)[0]
        assert mass == pytest.approx(1.0, abs=1e-9)


def test_level_one_support():
    rho1 = profile_recursion(bump_profile(1, H_R), 0, 1)
    lo, hi = rho1.exact.support
    assert (lo, hi) == (0.25, 1.0)
    r = rho1.radii
    assert np.all(rho1.samples[(r <= 0.25) | (r >= 1.0)] == 0.0)
    assert np.any(rho1.samples[(r > 0.25) & (r < 0.5)] != 0.0)


def test_T_of_zero():
    z = RadialProfile(H_R, np.zeros(int(3 / H_R) + 1), (0.0, 0.0))
    assert np.all(apply_T(z, 1).samples == 0.0)


def test_T_of_step():
    h = 2.0 ** -10
    r = h * np.arange(int(3 / h) + 1)
    p = RadialProfile(h, ((r >= 1) & (r <= 2)).astype(float), (1.0, 2.0))
    t = apply_T(p, 1)
    assert t(np.array([2.0]))[0] == pytest.approx(0.5, abs=1e-3)
    assert t(np.array([1.5]))[0] == pytest.approx(0.125, abs=1e-3)


@pytest.mark.parametrize("d", [1, 2])
def test_T_inverts_radial_laplacian(d):
    p = bump_profile(d, 2.0 ** -9)
    t = apply_T(p, d)
    lap = radial_laplacian_fd(t.samples, t.h_r, d)
    sel = (t.radii > 0.1) & (t.radii < 2.5)
    assert np.max(np.abs(lap[sel] - p.samples[sel])) <= 1e-3 * np.max(p.samples)


def _T_chain(L, d=1):
    rho = bump_profile(d, 2.0 ** -10)
    for level in range(L):
        rho = profile_recursion(rho, level, d)
    eta = RadialProfile(rho.h_r, rho.samples - 2.0 ** -d * rho(rho.radii / 2.0), (0.0, 2.0))
    t = eta
    for _ in range(L + 1):
        t = apply_T(t, d)
    return t


def test_polynomial_degree_zero():
    t = _T_chain(0)
    coeffs, res = extract_polynomial(t, 0)
    assert len(coeffs) == 1
    assert coeffs[0] == pytest.approx(t(np.array([2.5]))[0], rel=1e-10)
    zeta = t.samples - coeffs[0]
    assert np.max(np.abs(zeta[t.radii >= 2.0])) <= 1e-8 * np.max(np.abs(zeta))


@pytest.mark.parametrize("L", [0, 1, 2])
def test_polynomial_fit_residual(L):
    _, res = extract_polynomial(_T_chain(L), L)
    assert res <= 1e-8


def test_polynomial_fit_rejects_non_polynomial():
    h = 2.0 ** -8
    r = h * np.arange(int(3 / h) + 1)
    with pytest.raises(CertificateError):
        extract_polynomial(RadialProfile(h, np.sin(5 * r), (0.0, 3.0)), 1)


def test_pair_level_zero(pairs1, grid1):
    pair = pairs1[0]
    x = grid1.axis()
    assert np.all(pair.varphi.values[np.abs(x) >= 2.0] == 0.0)
    assert pair.varphi.integral() == pytest.approx(1.0, abs=1e-8)
    assert np.all(pair.psi.values[np.abs(x) >= 2.0] == 0.0)


@pytest.mark.parametrize("L", [0, 1, 2])
def test_pair_certificates(pairs1, L):
    cert = pairs1[L].cert
    assert cert["integral_err"] <= 1e-8
    assert cert["max_moment_err"] <= 1e-6
    assert cert["two_scale_residual"] <= 1e-5
    assert cert["polynomial_fit_residual"] <= 1e-8
    assert cert["psi_route_gap"] <= 1e-6
    assert cert["zeta_tail"] <= 1e-8


def test_moments(pairs1):
    m1 = verify_moments(pairs1[1], 2)["psi"]
    assert m1[0] <= 1e-6 and m1[1] <= 1e-6
    assert m1[2] > 1e-3
    m2 = verify_moments(pairs1[2], 3)["psi"]
    assert max(m2.values()) <= 1e-6


def test_two_scale_refines(pairs1):
    rep = verify_two_scale(pairs1[0])
    assert rep["residual"] <= 1e-5
    assert rep["refinement_ratio"] >= 4.0


def test_two_scale_zero_pair_guarded(pairs1, grid1):
    pair = pairs1[0]
    zero = type(pair)(pair.varphi.replace(np.zeros(grid1.shape)), pair.psi, pair.L, pair.d,
                      pair.support_radius, pair.phi_L, pair.psi_profile, pair.h_r)
    with pytest.raises(ValueError):
        verify_two_scale(zero)


@pytest.mark.parametrize("L,slope", [(1, 2.0), (2, 4.0)])
def test_fourier_slope(pairs1, L, slope):
    rep = fourier_decay_check(pairs1[L])
    assert rep["slope"] == pytest.approx(slope, abs=0.1)
    assert rep["C"] > 0


def test_build_rejects_bad_input(grid1):
    with pytest.raises(ValueError):
        build_window_pair(1, 4, grid1)
    with pytest.raises(ValueError):
        build_window_pair(1, 0, make_grid(1, 16.0, 1024))
    with pytest.raises(ValueError):
        build_window_pair(2, 0, grid1)


def test_pair_2d(pair2):
    assert pair2.varphi.integral() == pytest.approx(1.0, abs=1e-8)
    assert pair2.cert["two_scale_residual"] <= 1e-5
    assert np.all(pair2.psi.values[pair2.grid.radius() >= 2.0] == 0.0)
    m = verify_moments(pair2, 1)["psi"]
    assert max(m.values()) <= 1e-6


def test_certificate_json(pairs1):
    d = json.loads(pairs1[1].certificate_json())
    assert d["L"] == 1 and d["d"] == 1 and "two_scale_residual" in d


def test_telescoping_identity(pairs1, grid1):
    # 2^d varphi(2.) - varphi = Delta psi on grid nodes
    pair = pairs1[1]
    r = grid1.radius()
    lhs = 2.0 * pair.varphi_radial(2 * r) - pair.varphi_radial(r)
    lap = window_laplacian(pair, "psi").values
    assert np.max(np.abs(lhs - lap)) <= 1e-12 * pair.varphi.sup()


@pytest.mark.parametrize("k", [1, 2, 3])
def test_window_derivative_matches_spectral(pairs1, k):
    pair = pairs1[1]
    exact = window_derivative(pair, "varphi", (k,)).values
    spec = spectral_derivative(pair.varphi, (k,)).values
    assert np.max(np.abs(exact - spec)) <= 1e-8 * np.max(np.abs(exact))


def test_window_derivative_fd_converges():
    errs = []
    for N in (4096, 16384):
        pair = build_window_pair(1, 1, make_grid(1, 16.0, N))
        exact = window_derivative(pair, "varphi", (1,)).values
        errs.append(np.max(np.abs(exact - derivative(pair.varphi, (1,)).values)))
    assert errs[0] / errs[1] >= 64.0


def test_parametrix():
    g = make_grid(1, 4.0, 4096)
    K, resid = parametrix_1d(1, smooth_cutoff(g))
    x = g.axis()
    assert np.allclose(K.values[np.abs(x) <= 0.5], np.abs(x[np.abs(x) <= 0.5]) / 2)
    assert np.max(np.abs(resid.values[np.abs(x) > 1.0 + 2 * g.h])) <= 1e-8


def test_parametrix_reconstruction():
    g = make_grid(1, 4.0, 4096)
    K, resid = parametrix_1d(1, smooth_cutoff(g))
    f = sample(lambda x: np.exp(-x * x), g)
    f2 = sample(lambda x: (4 * x * x - 2) * np.exp(-x * x), g)
    rec = convolve(f2, K).values - convolve(f, resid).values
    inner = np.abs(g.axis()) <= 2.0
    assert np.max(np.abs(rec - f.values)[inner]) <= 1e-8


def test_parametrix_rejects_bad_cutoff():
    g = make_grid(1, 4.0, 1024)
    with pytest.raises(ValueError):
        parametrix_1d(1, smooth_cutoff(g, 0.25, 1.0))
    with pytest.raises(ValueError):
        parametrix_1d(0, smooth_cutoff(g))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 3), st.sampled_from([1, 2]))
def test_moment_count_property(L, d):
    mu, lam = recursion_coefficients(L, d)
    # each recursion step annihilates the next even moment: mu + lam 2^{-d-2k} = 0 at k = L+1
    assert math.isclose(mu, -lam * 2.0 ** (-d - 2 * (L + 1)), rel_tol=1e-12)
