"""Equivariant harmonic map family and its tangent frame.

The degree-m equivariant harmonic profile through the equator is, in log
coordinates sigma = log(r/s),

    h1(r) = sech(m sigma),   h3(r) = tanh(m sigma),

embedded as h[mu] = exp(alpha R) (h1, 0, h3) with R = rotation generator
about the vertical axis and parameter mu = m log s + i alpha. The family
tangent frame along h[mu] is

    f[mu] = exp(alpha R) [ (h3, 0, -h1) + i (0, 1, 0) ],

orthonormal, orthogonal to h[mu], with Im f = h x Re f, and the family
derivative is d h[mu] = h1 (d mu o f) where o pairs real and imaginary
parts. All maps here send r=0 to the south pole -k and r=inf to k.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import NumericalError
from .radial_grid import RadialGrid, d2_rho, deriv_r, quad_dr, quad_rdr

K_VERTICAL = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Mu:
    """Modulation parameter: scale s > 0 and rotation angle alpha, at equivariance degree m."""

    s: float
    alpha: float
    m: int

    def __post_init__(self):
        if not (self.s > 0 and np.isfinite(self.s)):
            raise ValueError(f"scale must be positive and finite, got {self.s}")
        if self.m < 1:
            raise ValueError(f"equivariance degree must be >= 1, got {self.m}")

    @property
    def log_s(self) -> float:
        return math.log(self.s)

    @property
    def as_complex(self) -> complex:
        return complex(self.m * math.log(self.s), self.alpha)

    @classmethod
    def from_complex(cls, mu: complex, m: int) -> "Mu":
        return cls(s=math.exp(mu.real / m), alpha=mu.imag, m=m)

    def shifted(self, dmu: complex) -> "Mu":
        return Mu.from_complex(self.as_complex + dmu, self.m)


def mu_distance(a: Mu, b: Mu) -> float:
    """Family metric: min(|d mu_1|, 1) + distance of d mu_2 to 2 pi Z."""
    d = a.as_complex - b.as_complex
    d2 = math.remainder(d.imag, 2 * math.pi)
    return min(abs(d.real), 1.0) + abs(d2)


@dataclass(frozen=True)
class HarmonicProfile:
    """h[mu] sampled on a grid, with scalar profiles and tangent frame."""

    mu: Mu
    h1s: np.ndarray
    h3s: np.ndarray
    h: np.ndarray  # (n, 3) unit vectors
    f: np.ndarray  # (n, 3) complex frame

    def dh(self, dmu: complex) -> np.ndarray:
        """Family derivative d h[mu] for an increment d mu (an (n,3) field)."""
        df = dmu.real * self.f.real + dmu.imag * self.f.imag
        return self.h1s[:, None] * df


def h_profile(mu: Mu, grid: RadialGrid) -> HarmonicProfile:
    sigma = grid.rho - mu.log_s
    x = mu.m * sigma
    h1s = 1.0 / np.cosh(x)
    h3s = np.tanh(x)
    ca, sa = math.cos(mu.alpha), math.sin(mu.alpha)
    h = np.stack([h1s * ca, h1s * sa, h3s], axis=1)
    f = np.stack(
        [h3s * ca - 1j * sa, h3s * sa + 1j * ca, -h1s + 0j],
        axis=1,
    )
    return HarmonicProfile(mu=mu, h1s=h1s, h3s=h3s, h=h, f=f)


def project_tangent(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """P^v w = w - (v.w) v, nodewise (v assumed unit)."""
    return w - np.sum(v * w, axis=1, keepdims=True) * v


def pa_apply(v: np.ndarray, w: np.ndarray, a: complex) -> np.ndarray:
    """P^v_a w = a1 P^v w + a2 v x w, nodewise."""
    out = a.real * project_tangent(v, w)
    if a.imag != 0.0:
        out = out + a.imag * np.cross(v, w)
    return out


def energy(v: np.ndarray, grid: RadialGrid, m: int) -> float:
    """Equivariant Dirichlet energy pi int (|v_r|^2 + m^2 (v1^2+v2^2)/r^2) r dr."""
    v = grid.check_field(v)
    vr = deriv_r(v, grid)
    integrand = (vr**2).sum(axis=1) + (m**2 / grid.r**2) * (v[:, 0] ** 2 + v[:, 1] ** 2)
    return math.pi * float(quad_rdr(integrand, grid))


def degree(v: np.ndarray, grid: RadialGrid, m: int, method: str = "boundary") -> float:
    """Topological degree of the equivariant map.

    boundary: (m/2) (v3(r_max) - v3(r_min)).
    integral: the same quantity from the bulk formula (m/2) int dv3/dr dr,
    which is the equivariant reduction of the usual degree integral.
    """
    v = grid.check_field(v)
    if method == "boundary":
        return 0.5 * m * float(v[-1, 2] - v[0, 2])
    if method == "integral":
        v3r = deriv_r(v[:, 2], grid)
        return 0.5 * m * float(quad_dr(v3r, grid))
    raise ValueError(f"unknown degree method {method!r}")


def laplace_m(v: np.ndarray, grid: RadialGrid, m: int) -> np.ndarray:
    """The equivariant tension field input: (d_rr + d_r/r + (m^2/r^2) R^2) v.

    In log coordinates this is e^(-2 rho) (v_rhorho - m^2 (v1, v2, 0)).
    """
    v = grid.check_field(v)
    out = d2_rho(v, grid)
    out[:, 0] -= m**2 * v[:, 0]
    out[:, 1] -= m**2 * v[:, 1]
    return out / np.exp(2 * grid.rho)[:, None]


def l_s_apply(g: np.ndarray, mu: Mu, grid: RadialGrid) -> np.ndarray:
    """Apply L^s = d_r + (m/r) h3^s through its integrating-factor form.

    L^s g = h1^s d_r (g / h1^s), exact as an operator identity because
    d_r log h1^s = -(m/r) h3^s. In this form the discrete operator
    annihilates h1^s to roundoff. cosh(m sigma) overflows only for
    m |sigma| beyond ~700, guarded here.
    """
    g = grid.check_field(g)
    sigma = grid.rho - mu.log_s
    x = mu.m * sigma
    if np.abs(x).max() > 690.0:
        raise NumericalError("profile weight overflows on this mesh; domain too wide for m |log r|")
    cosh_x = np.cosh(x)
    return deriv_r(g * cosh_x, grid) / cosh_x


def stationarity_residual(mu: Mu, grid: RadialGrid, a: complex = 1.0 + 0j) -> float:
    """sup norm of P^h_a applied to the tension field at v = h[mu].

    Vanishes in the continuum; measures the spatial discretization. For
    |a| = 1 the value is independent of a because |a1 P w + a2 J w|^2 =
    |a|^2 |P w|^2 pointwise.
    """
    prof = h_profile(mu, grid)
    res = pa_apply(prof.h, laplace_m(prof.h, grid, mu.m), complex(a))
    return float(np.abs(res).max())
