"""Transform between a sphere-valued radial map and its flat-frame field.

A complex tangent frame (two orthonormal tangent fields packed as real
and imaginary parts) is transported radially so that its covariant
radial derivative vanishes, normalized to (1, i, 0) at the outer edge.
In this frame the radial derivative of the map, with the equivariant
rotation term removed, becomes a single complex scalar field q; the
time-dependent part of the connection becomes a real phase integral S;
and the change of frame to the fitted harmonic profile becomes a
pointwise rotation M.  The reverse direction rebuilds the map from the
profile parameters and q by a damped fixed-point iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GaugeError, ReconstructionError
from .evolve_llg import SphereMap
from .harmonic_family import Mu, h_profile
from .modulation import BumpProfile, r_inverse
from .radial_grid import RadialGrid, cumint_dr, d2_rho, d_rho, norm

_RENORM_EVERY = 16
_DRIFT_LIMIT = 1e-3

# quintic interpolation to the midpoint of a cell from the six nearest
# nodes (offsets -2..3 relative to the cell's left node)
_MID6 = np.array([3.0, -25.0, 150.0, 150.0, -25.0, 3.0]) / 256.0


@dataclass
class GaugeState:
    """Flat-frame data of a map relative to a harmonic profile.

    e is the transported frame; w the rotation-free radial derivative;
    q and nu the frame coordinates of w and of the projected vertical
    direction; S the phase integral vanishing at the outer edge; Q the
    conserved-flow integrand whose weighted tail reproduces S when the
    flow is purely conservative; M the per-node rotation taking frame
    coordinates to profile-frame coordinates.  alpha_tilde is the angle
    of M at the innermost node.
    """

    e: np.ndarray
    w: np.ndarray
    q: np.ndarray
    nu: np.ndarray
    S: np.ndarray
    Q: np.ndarray
    M: np.ndarray
    v: np.ndarray
    a: complex
    alpha_tilde: float
    grid: RadialGrid


def _midpoints(field: np.ndarray, n: int) -> np.ndarray:
    """Quintic interpolation of nodal data to the n-1 cell midpoints."""
    idx = np.arange(n - 1)[:, None] + np.arange(-2, 4)[None, :]
    np.clip(idx, 0, n - 1, out=idx)
    return np.einsum("j,ij...->i...", _MID6, field[idx])


def _transport_frame(v: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Integrate the frame transport inward from the outer edge.

    Classical fourth-order explicit steps on the transport rule (the
    frame tilts only along the map, by the rate the map turns); the
    frame is re-orthonormalized every few nodes, and a drift beyond the
    tolerance between renormalizations signals unresolved data.
    """
    n = grid.n
    v_rho = d_rho(v, grid)
    vmid = _midpoints(v, n)
    vrmid = _midpoints(v_rho, n)
    e = np.empty((n, 3), dtype=complex)
    # anchor the frame at the outer edge: the reference direction
    # projected onto the tangent plane there, so that slowly decaying
    # far fields (where the map has not yet reached the pole) still
    # start from a legal frame
    vk = v[n - 1]
    re0 = np.array([1.0, 0.0, 0.0]) - vk[0] * vk
    scale = math.sqrt(re0 @ re0)
    if scale < 1e-6:
        raise GaugeError(
            "the map is within 1e-6 of the frame reference direction at "
            "the outer edge; the transported frame is not defined"
        )
    re0 /= scale
    ec = re0 + 1j * np.cross(vk, re0)
    e[n - 1] = ec
    h = -grid.drho
    since = 0
    for k in range(n - 2, -1, -1):
        k1 = -v[k + 1] * (v_rho[k + 1] @ ec)
        e2 = ec + 0.5 * h * k1
        k2 = -vmid[k] * (vrmid[k] @ e2)
        e3 = ec + 0.5 * h * k2
        k3 = -vmid[k] * (vrmid[k] @ e3)
        e4 = ec + h * k3
        k4 = -v[k] * (v_rho[k] @ e4)
        ec = ec + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        since += 1
        if since >= _RENORM_EVERY or k == 0:
            re, im = ec.real.copy(), ec.imag.copy()
            vk = v[k]
            drift = max(
                abs(float(re @ re) - 1.0),
                abs(float(im @ im) - 1.0),
                abs(float(re @ im)),
                abs(float(re @ vk)),
                abs(float(im @ vk)),
            )
            if drift > _DRIFT_LIMIT:
                raise GaugeError(
                    f"frame transport drifted by {drift:.2e} between "
                    "renormalizations: the map is not resolved on this grid"
                )
            re -= (re @ vk) * vk
            re /= math.sqrt(re @ re)
            im = np.cross(vk, re)
            ec = re + 1j * im
            since = 0
        e[k] = ec
    # the integration error between renormalizations leaves a small
    # orthonormality defect at the in-between nodes; project it out
    # everywhere at once (the transported phase is untouched)
    re = e.real - np.einsum("ij,ij->i", e.real, v)[:, None] * v
    re /= np.linalg.norm(re, axis=1, keepdims=True)
    return re + 1j * np.cross(v, re)


def _frame_coords(field: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Complex coordinate of a tangent vector field in the frame e."""
    return np.einsum("ij,ij->i", field, e.real) + 1j * np.einsum(
        "ij,ij->i", field, e.imag
    )


def _lstar(q: np.ndarray, v3: np.ndarray, m: int, grid: RadialGrid) -> np.ndarray:
    """Adjoint first-order factor: -dq/dr - q/r + m v3 q / r."""
    return (-d_rho(q, grid) - q + m * v3 * q) / grid.r


def phase_integral(
    q: np.ndarray,
    nu: np.ndarray,
    v3: np.ndarray,
    a: complex,
    m: int,
    grid: RadialGrid,
) -> np.ndarray:
    """Phase integral by direct quadrature, anchored to zero at the edge.

    The radial derivative of the phase is the pairing of q plus the
    rotation profile with the dissipative part of the flow; integrating
    inward from the outer edge fixes the constant.
    """
    drive = 1j * complex(a) * _lstar(q, v3, m, grid)
    integrand = ((q + (m / grid.r) * nu) * np.conj(drive)).real
    cum = cumint_dr(integrand, grid)
    return cum - cum[-1]


def hasimoto_forward(
    vmap: SphereMap, mu: Mu, grid: RadialGrid, a: complex = 1.0 + 0.0j
) -> GaugeState:
    """Transform a map to its flat-frame field relative to a profile.

    The flow coefficient a only affects the stored phase integral; for
    the conservative flow (a = i) the phase is evaluated in closed form
    from the integrand Q, otherwise by direct quadrature.
    """
    if vmap.m != mu.m:
        raise ConfigError("map and parameters disagree on the degree m")
    vmap.check_unit()
    a = complex(a)
    v = vmap.v
    m = vmap.m
    n = grid.n
    if v.shape[0] != n:
        raise ConfigError("map and grid sizes differ")

    e = _transport_frame(v, grid)
    v_rho = d_rho(v, grid)
    pk = -v * v[:, 2:3]
    pk[:, 2] += 1.0
    w = v_rho / grid.r[:, None] - (m / grid.r)[:, None] * pk
    # Both terms of w are tangent to the sphere for a unit map, so any
    # component along v is differentiation noise; removing it keeps the
    # identity w = (Re q) Re e + (Im q) Im e exact.
    w -= np.einsum("ij,ij->i", w, v)[:, None] * v
    q = _frame_coords(w, e)
    nu = _frame_coords(pk, e)

    f = h_profile(mu, grid).f
    mmat = np.empty((n, 2, 2))
    mmat[:, 0, 0] = np.einsum("ij,ij->i", f.real, e.real)
    mmat[:, 0, 1] = np.einsum("ij,ij->i", f.real, e.imag)
    mmat[:, 1, 0] = np.einsum("ij,ij->i", f.imag, e.real)
    mmat[:, 1, 1] = np.einsum("ij,ij->i", f.imag, e.imag)
    alpha_tilde = math.atan2(mmat[0, 1, 0], mmat[0, 0, 0])

    bigq = 0.5 * np.abs(q) ** 2 + m * w[:, 2] / grid.r
    if a == 1j:
        cum = cumint_dr(2.0 * bigq / grid.r, grid)
        s_field = bigq - (cum[-1] - cum)
    else:
        s_field = phase_integral(q, nu, v[:, 2], a, m, grid)

    return GaugeState(
        e=e,
        w=w,
        q=q,
        nu=nu,
        S=s_field,
        Q=bigq,
        M=mmat,
        v=v,
        a=a,
        alpha_tilde=alpha_tilde,
        grid=grid,
    )


def qeq_rhs(state: GaugeState, vmap: SphereMap, a: complex, m: int) -> np.ndarray:
    """Right-hand side of the flat-frame evolution equation for q.

    Returns i S q - a (second-order radial operator applied to q), with
    the operator in its expanded form: the flat (m-1)-equivariant
    Laplacian plus the vertical-deficit and derivative-coupling
    potentials.  If the requested flow coefficient differs from the one
    stored in the state, the phase integral is recomputed for it.
    """
    grid = state.grid
    a = complex(a)
    q = state.q
    v3 = vmap.v[:, 2]
    if a == state.a:
        s_field = state.S
    elif a == 1j:
        cum = cumint_dr(2.0 * state.Q / grid.r, grid)
        s_field = state.Q - (cum[-1] - cum)
    else:
        s_field = phase_integral(q, state.nu, v3, a, m, grid)
    r2 = grid.r**2
    op = (
        -d2_rho(q, grid) / r2
        + ((m - 1) ** 2 / r2) * q
        + (2.0 * m * (1.0 - v3) / r2) * q
        + (m / grid.r) * state.w[:, 2] * q
    )
    return 1j * s_field * q - a * op


def reconstruct_v(
    mu: Mu,
    q: np.ndarray,
    phi: BumpProfile,
    grid: RadialGrid,
    a: complex = 1.0 + 0.0j,
) -> tuple[SphereMap, GaugeState]:
    """Rebuild the map from profile parameters and the flat-frame field.

    Fixed-point iteration for the residual coordinate z: reassemble the
    map, transport the frame on it, rotate q into the profile frame, and
    invert the linearized radial operator on the window-free complement.
    The step is damped by half once z grows past 0.1 in sup norm, and
    abandoned past 0.3.
    """
    if phi.m != mu.m:
        raise ConfigError("bump window and parameters disagree on the degree m")
    m = mu.m
    q = grid.check_field(np.asarray(q, dtype=complex))
    prof = h_profile(mu, grid)
    f, hmap, h1s = prof.f, prof.h, prof.h1s
    z = np.zeros(grid.n, dtype=complex)
    for _ in range(200):
        gamma = np.sqrt(np.maximum(1.0 - np.abs(z) ** 2, 0.0)) - 1.0
        vres = (
            z.real[:, None] * f.real
            + z.imag[:, None] * f.imag
            + gamma[:, None] * hmap
        )
        v = hmap + vres
        e = _transport_frame(v, grid)
        eq = q.real[:, None] * e.real + q.imag[:, None] * e.imag
        mq = np.einsum("ij,ij->i", f.real, eq) + 1j * np.einsum(
            "ij,ij->i", f.imag, eq
        )
        rhs = mq - (m / grid.r) * vres[:, 2] * z + (m / grid.r) * h1s * gamma
        z_new = r_inverse(rhs, phi, mu.s, grid)
        zmax = float(np.max(np.abs(z_new)))
        if zmax > 0.3:
            raise ReconstructionError(
                f"fixed point left the contraction region (sup {zmax:.3f} "
                "> 0.3): the gauge field is too large for this profile"
            )
        if zmax > 0.1:
            z_new = z + 0.5 * (z_new - z)
        gap = norm(z_new - z, grid, kind="X")
        z = z_new
        if gap <= 1e-10:
            break
    else:
        raise ReconstructionError(
            "fixed point did not contract to tolerance within 200 iterations"
        )
    gamma = np.sqrt(np.maximum(1.0 - np.abs(z) ** 2, 0.0)) - 1.0
    v = (
        hmap
        + z.real[:, None] * f.real
        + z.imag[:, None] * f.imag
        + gamma[:, None] * hmap
    )
    vmap = SphereMap(v, m)
    return vmap, hasimoto_forward(vmap, mu, grid, a=a)
