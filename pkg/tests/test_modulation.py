"""Tests for parameter fitting, the right inverse, and the adjoint window."""

import math
import warnings

import numpy as np
import pytest

from equiflow.errors import ConfigError, FitError, NumericalError
from equiflow.evolve_llg import FlowConfig, SphereMap, run_vector
from equiflow.gauge import hasimoto_forward, reconstruct_v
from equiflow.harmonic_family import Mu, h_profile, l_s_apply
from equiflow.modulation import (
    bump_phi,
    fit_mu,
    mu_dot_diagnostic,
    normal_form_correction,
    psi_and_c,
    r_inverse,
)
from equiflow.radial_grid import build_grid, inner_product, norm

# adaptive-quadrature values of the bump normalization constant
# (scipy.integrate.quad on the closed-form integrand, abs err < 5e-14)
_NORM_CONST = {2: 0.517151452948885, 3: 0.593427086302337, 4: 0.686215150515544}


@pytest.fixture(scope="module")
def grid():
    return build_grid(-8.0, 16.0, 2048)


def smooth_field(rng, grid, decay=0.8):
    """Random smooth decaying field: Gaussian bumps under a sech envelope."""
    out = np.zeros(grid.n)
    for _ in range(4):
        c = rng.uniform(-2.0, 2.0)
        w = rng.uniform(0.5, 1.5)
        out += rng.normal() * np.exp(-(((grid.rho - c) / w) ** 2))
    return out / np.cosh(decay * grid.rho)


def test_bump_support_and_normalization(grid):
    for m in (2, 3, 4):
        phi = bump_phi(m, grid)
        vals = phi.paired_values(grid, 1.0)
        assert vals[grid.r < 0.499].max(initial=0.0) == 0.0
        assert vals[grid.r > 2.001].max(initial=0.0) == 0.0
        h1 = 1.0 / np.cosh(m * grid.rho)
        pairing = inner_product(vals, h1, grid)
        assert abs(pairing - 1.0) <= 1e-10


def test_bump_constant_regression(grid):
    """Grid-quadrature constant matches the adaptive-quadrature oracle."""
    for m in (2, 3, 4):
        phi = bump_phi(m, grid)
        assert abs(phi.norm_const - _NORM_CONST[m]) <= 1e-9 * _NORM_CONST[m]


def test_bump_requires_covering_grid():
    with pytest.raises(ConfigError):
        bump_phi(2, build_grid(0.0, 16.0, 256))


def test_right_inverse_identities(grid):
    """L o R is the identity; R o L projects out the kernel direction."""
    rng = np.random.default_rng(11)
    for m in (2, 3, 4):
        phi = bump_phi(m, grid)
        for s in (0.25, 1.0, 4.0):
            mu = Mu(s, 0.0, m)
            h1s = 1.0 / np.cosh(m * (grid.rho - math.log(s)))
            phiv = phi.paired_values(grid, s)
            for _ in range(3):
                g = smooth_field(rng, grid)
                u = r_inverse(g, phi, s, grid)
                lr = l_s_apply(u, mu, grid)
                assert np.abs(lr - g).max() <= 1e-7 * max(1.0, np.abs(g).max())
                # output is orthogonal to the window by construction
                assert abs(inner_product(u, phiv, grid)) <= 1e-9 * max(
                    1.0, np.abs(u).max()
                )
                z = smooth_field(rng, grid)
                rl = r_inverse(l_s_apply(z, mu, grid), phi, s, grid)
                zperp = z - h1s * inner_product(z, phiv, grid)
                assert np.abs(rl - zperp).max() <= 1e-7 * max(1.0, np.abs(z).max())


def test_right_inverse_zero_and_projector(grid):
    m = 3
    phi = bump_phi(m, grid)
    assert np.abs(r_inverse(np.zeros(grid.n), phi, 1.0, grid)).max() == 0.0
    # on fields already orthogonal to the window, R o L is the identity
    rng = np.random.default_rng(5)
    h1 = 1.0 / np.cosh(m * grid.rho)
    phiv = phi.paired_values(grid, 1.0)
    mu = Mu(1.0, 0.0, m)
    for _ in range(5):
        z = smooth_field(rng, grid)
        z = z - h1 * inner_product(z, phiv, grid)
        rl = r_inverse(l_s_apply(z, mu, grid), phi, 1.0, grid)
        assert np.abs(rl - z).max() <= 1e-7 * max(1.0, np.abs(z).max())


def test_right_inverse_bounded_uniformly_in_scale(grid):
    """X-norm operator bound is scale invariant: dilating the test field
    along with the window leaves the norm ratio unchanged."""
    rng = np.random.default_rng(19)
    shapes = [
        (rng.normal(size=3), rng.uniform(-2.0, 2.0, size=3), rng.uniform(0.5, 1.5, size=3))
        for _ in range(6)
    ]
    for m in (2, 3, 4):
        phi = bump_phi(m, grid)
        per_scale = []
        for s in (0.25, 1.0, 4.0):
            sigma = grid.rho - math.log(s)
            best = 0.0
            for amps, centers, widths in shapes:
                g = np.zeros(grid.n)
                for a0, c0, w0 in zip(amps, centers, widths):
                    g += a0 * np.exp(-(((sigma - c0) / w0) ** 2))
                g /= np.cosh(0.8 * sigma)
                u = r_inverse(g, phi, s, grid)
                best = max(best, norm(u, grid, kind="X") / norm(g, grid, kind="L2x"))
            per_scale.append(best)
        spread = (max(per_scale) - min(per_scale)) / max(per_scale)
        assert spread <= 0.05


def test_right_inverse_overflow_guard():
    g = build_grid(-200.0, 200.0, 512)
    phi = bump_phi(4, g)
    with pytest.raises(NumericalError):
        r_inverse(np.zeros(g.n), phi, 1.0, g)


def test_fit_exact_profile(grid):
    """A bare profile is fit exactly, with zero residual field."""
    m = 3
    mu0 = Mu(0.8, 0.9, m)
    phi = bump_phi(m, grid)
    state = fit_mu(SphereMap(h_profile(mu0, grid).h, m), mu0, phi, grid)
    assert state.mu.s == pytest.approx(mu0.s, rel=1e-13)
    assert state.mu.alpha == pytest.approx(mu0.alpha, abs=1e-13)
    assert np.abs(state.z).max() <= 1e-12
    assert state.iterations <= 2


def test_fit_orthogonality_and_gamma(grid):
    """After a fit the residual is window-orthogonal and gamma is small."""
    m = 3
    mu0 = Mu(1.0, 0.4, m)
    prof = h_profile(mu0, grid)
    pz = 0.1 * np.exp(-(((grid.rho - 0.6) / 0.8) ** 2))
    v = prof.h + pz[:, None] * prof.f.real
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    phi = bump_phi(m, grid)
    state = fit_mu(SphereMap(v, m), None, phi, grid)
    phiv = phi.paired_values(grid, state.mu.s)
    assert abs(inner_product(state.z, phiv, grid)) <= 1e-10
    assert np.abs(state.z).max() <= 0.3
    assert np.all(np.abs(state.gamma) <= np.abs(state.z) ** 2 + 1e-15)


def test_fit_roundtrip_recovery(grid):
    """Parameters survive reconstruct -> fit to tight tolerance."""
    m = 3
    mu0 = Mu(0.9, 0.5, m)
    phi = bump_phi(m, grid)
    q = (0.04 * np.exp(-(((grid.rho - 0.3) / 0.8) ** 2)) * (1.0 - 0.5j)).astype(
        complex
    )
    vrec, _ = reconstruct_v(mu0, q, phi, grid)
    state = fit_mu(vrec, None, phi, grid)
    assert abs(state.mu.as_complex - mu0.as_complex) <= 1e-10


def test_fit_uniqueness_across_guesses(grid):
    """Distinct admissible guesses land on the same parameters."""
    m = 2
    mu0 = Mu(1.1, 0.0, m)
    prof = h_profile(mu0, grid)
    pz = 0.08 * np.exp(-(((grid.rho + 0.2) / 1.0) ** 2))
    v = prof.h + pz[:, None] * prof.f.real
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    phi = bump_phi(m, grid)
    fit_a = fit_mu(SphereMap(v, m), Mu(1.0, 0.05, m), phi, grid)
    fit_b = fit_mu(SphereMap(v, m), Mu(1.3, -0.05, m), phi, grid)
    assert abs(fit_a.mu.as_complex - fit_b.mu.as_complex) <= 1e-10


def test_fit_pins_rotation_on_planar_maps(grid):
    """Great-circle data fixes the rotation angle at zero."""
    m = 2
    mu0 = Mu(1.3, 0.0, m)
    prof = h_profile(mu0, grid)
    pz = 0.06 * np.exp(-(((grid.rho - 0.4) / 0.9) ** 2))
    v = prof.h + pz[:, None] * prof.f.real
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    assert np.abs(v[:, 1]).max() == 0.0
    state = fit_mu(SphereMap(v, m), None, bump_phi(m, grid), grid)
    assert state.mu.alpha == 0.0


def test_fit_error_without_crossing(grid):
    """Maps that never cross the equator admit no seed."""
    v = np.tile(np.array([0.8, 0.0, 0.6]), (grid.n, 1))
    with pytest.raises(FitError):
        fit_mu(SphereMap(v, 3), None, bump_phi(3, grid), grid)


def test_fit_error_on_large_residual(grid):
    """Data far from every profile is rejected after the fit."""
    m = 2
    prof = h_profile(Mu(1.0, 0.0, m), grid)
    pz = 0.9 * np.exp(-(((grid.rho - 0.5) / 1.5) ** 2))
    v = prof.h + pz[:, None] * prof.f.real
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    with pytest.raises(FitError):
        fit_mu(SphereMap(v, m), None, bump_phi(m, grid), grid)


def test_psi_constant_and_tail(grid):
    """c matches the closed form at m=2; psi obeys its power tail law."""
    phi2 = bump_phi(2, grid)
    psi2 = psi_and_c(phi2, 2, grid)
    assert abs(psi2.c - 1.0 / math.pi**2) <= 1e-8
    h1 = 1.0 / np.cosh(2 * grid.rho)
    phiv = phi2.paired_values(grid, 1.0)
    assert abs(inner_product(phiv - psi2.c * h1, h1, grid)) <= 1e-10
    for m in (2, 3, 4):
        phi = bump_phi(m, grid)
        psi = psi_and_c(phi, m, grid)
        last_decade = grid.rho >= grid.rho_max - math.log(10.0)
        scaled = psi.psi[last_decade] * grid.r[last_decade] ** (m - 1)
        target = -psi.c / (m - 1)
        assert np.abs(scaled - target).max() <= 1e-3 * abs(target)


def test_psi_rejects_degree_one(grid):
    with pytest.raises(ConfigError):
        psi_and_c(bump_phi(1, grid), 1, grid)


def test_mu_dot_zero_on_profile(grid):
    m = 3
    mu0 = Mu(1.0, 0.7, m)
    vm = SphereMap(h_profile(mu0, grid).h, m)
    phi = bump_phi(m, grid)
    state = fit_mu(vm, mu0, phi, grid)
    gauge = hasimoto_forward(vm, state.mu, grid)
    md = mu_dot_diagnostic(state, gauge, 1.0, m)
    assert abs(md) <= 1e-7


def test_mu_dot_matches_run(grid):
    """The parameter-rate diagnostic tracks finite differences of the
    fitted parameters along a heat-flow run, and obeys the rate bound."""
    m = 3
    g = build_grid(-6.0, 10.0, 1024)
    mu0 = Mu(1.0, 0.3, m)
    prof = h_profile(mu0, g)
    pz = 0.05 * np.exp(-(((g.rho - 0.6) / 0.8) ** 2))
    pz2 = 0.03 * np.exp(-(((g.rho + 0.2) / 1.0) ** 2))
    v0 = prof.h + pz[:, None] * prof.f.real + pz2[:, None] * prof.f.imag
    v0 /= np.linalg.norm(v0, axis=1, keepdims=True)
    times = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30]
    series = run_vector(v0, g, m, FlowConfig(a=1.0, dt0=2e-3), 0.30, times)
    phi = bump_phi(m, g)
    fits, rates, ratios = [], [], []
    guess = None
    for k in range(len(times)):
        vm = series.map_at(k)
        state = fit_mu(vm, guess, phi, g)
        guess = state.mu
        gauge = hasimoto_forward(vm, state.mu, g)
        md = mu_dot_diagnostic(state, gauge, 1.0, m)
        fits.append(state.mu.as_complex)
        rates.append(md)
        ratios.append(
            state.mu.s * abs(md) / norm(gauge.q / g.r, g, kind="L2x")
        )
    for k in (2, 3, 4, 5):
        fd = (fits[k + 1] - fits[k - 1]) / (times[k + 1] - times[k - 1])
        assert abs(rates[k] - fd) <= 0.05 * abs(fd)
    assert max(ratios) <= 10.0


def test_normal_form_zero_field(grid):
    m = 3
    phi = bump_phi(m, grid)
    psi = psi_and_c(phi, m, grid)
    val = normal_form_correction(
        np.zeros(grid.n, complex), Mu(1.0, 0.0, m), 0.3, psi
    )
    assert val == 0.0


def test_normal_form_cauchy_schwarz(grid):
    """The correction never exceeds the product of the paired norms."""
    m = 3
    phi = bump_phi(m, grid)
    psi = psi_and_c(phi, m, grid)
    npsi = norm(psi.psi, grid, kind="L2x")
    rng = np.random.default_rng(23)
    for s in (0.5, 1.0, 2.0):
        q = (smooth_field(rng, grid) + 1j * smooth_field(rng, grid)).astype(complex)
        val = normal_form_correction(q, Mu(s, 0.0, m), 0.2, psi)
        bound = norm(q, grid, kind="L2x") * npsi
        assert abs(val) <= bound * (1.0 + 1e-9)


def test_normal_form_m2_growth():
    """At degree 2 the pairing grows with the outer radius like the
    iterated logarithm; increments follow the analytic tail rate."""
    m = 2
    c = 1.0 / math.pi**2
    vals = {}
    for rmax, n in ((1e3, 1024), (1e4, 1280), (1e5, 1536)):
        g = build_grid(-2.0, math.log(rmax), n)
        phi = bump_phi(m, g)
        psi = psi_and_c(phi, m, g)
        q = np.where(
            g.r >= 1.0, 1.0 / (g.r * (1.0 + np.log(np.maximum(g.r, 1.0)))), 0.0
        ).astype(complex)
        with pytest.warns(RuntimeWarning):
            vals[rmax] = normal_form_correction(q, Mu(1.0, 0.0, m), 0.0, psi).real
    assert abs(vals[1e4]) > abs(vals[1e3])
    assert abs(vals[1e5]) > abs(vals[1e4])
    for r1, r2 in ((1e3, 1e4), (1e4, 1e5)):
        inc = vals[r2] - vals[r1]
        pred = -2.0 * math.pi * c * math.log((1.0 + math.log(r2)) / (1.0 + math.log(r1)))
        assert abs(inc - pred) <= 0.02 * abs(pred)


def test_energy_norm_chain(grid):
    """Reconstructed residuals obey the X-norm bound by the field norm."""
    m = 3
    phi = bump_phi(m, grid)
    rng = np.random.default_rng(29)
    for amp in (0.02, 0.05):
        q = (
            amp
            * np.exp(-(((grid.rho - 0.4) / 0.9) ** 2))
            * (1.0 + 0.6j)
        ).astype(complex)
        vrec, gauge = reconstruct_v(Mu(1.0, 0.2, m), q, phi, grid)
        state = fit_mu(vrec, Mu(1.0, 0.2, m), phi, grid)
        zx = norm(state.z, grid, kind="X")
        budget = norm(gauge.q, grid, kind="L2x") + np.abs(
            state.z
        ).max() * zx
        assert zx <= 10.0 * budget
