"""Charge and current moments, the periodic Poisson solve and continuity diagnostics.

Spatial fields have the shape of ``SpatialGrid.shape``; phase-space
components have shape ``(*xgrid.shape, n, n, n)``.  The potential solves
``-Laplacian(phi) = rho`` with ``rho = int sqrt(mu) f2 dv``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import SpatialGrid, VelocityGrid, lp_x_norm, vel_inner, x_derivative


class NeutralityError(ValueError):
    """Charge density with nonzero mean: the periodic Poisson problem has no solution."""


@dataclass
class FieldState:
    rho: np.ndarray
    J: np.ndarray    # (3, *xshape)
    phi: np.ndarray


def moments(f2, vgrid: VelocityGrid) -> tuple[np.ndarray, np.ndarray]:
    """``rho = int sqrt(mu) f2 dv`` and ``J = int v sqrt(mu) f2 dv``."""
    f2 = np.asarray(f2, dtype=float)
    rho = vel_inner(vgrid, f2, vgrid.sqrt_mu)
    J = np.stack([vel_inner(vgrid, f2, vgrid.v[i] * vgrid.sqrt_mu) for i in range(3)])
    return rho, J


def _inverse_laplacian_hat(xgrid: SpatialGrid) -> np.ndarray:
    k2 = xgrid.k2
    out = np.zeros_like(k2)
    out[k2 > 0] = 1.0 / k2[k2 > 0]
    return out


def poisson_solve(rho, xgrid: SpatialGrid, tol: float = 1e-10) -> np.ndarray:
    """Zero-mean ``phi`` with ``-Laplacian(phi) = rho`` by spectral inversion.

    Raises
    ------
    NeutralityError
        If ``|mean(rho)| > tol * max(1, max|rho|)``.
    """
    rho = np.asarray(rho, dtype=float)
    mean = float(np.mean(rho))
    if abs(mean) > tol * max(1.0, float(np.max(np.abs(rho))) if rho.size else 1.0):
        raise NeutralityError(f"charge density has mean {mean:.3e}; the torus requires global neutrality")
    rh = np.fft.fftn(rho)
    return np.real(np.fft.ifftn(rh * _inverse_laplacian_hat(xgrid)))


def grad_x(phi, xgrid: SpatialGrid) -> np.ndarray:
    """Spectral gradient padded to three components, shape ``(3, *xshape)``."""
    out = np.zeros((3,) + xgrid.shape)
    for i in range(xgrid.dim):
        alpha = [0] * xgrid.dim
        alpha[i] = 1
        out[i] = x_derivative(phi, xgrid, alpha)
    return out


def div_x(J, xgrid: SpatialGrid) -> np.ndarray:
    """Spectral divergence of the first ``dim`` components of ``J``."""
    out = np.zeros(xgrid.shape)
    for i in range(xgrid.dim):
        alpha = [0] * xgrid.dim
        alpha[i] = 1
        out = out + x_derivative(J[i], xgrid, alpha)
    return out


def dt_phi(J, xgrid: SpatialGrid) -> np.ndarray:
    """``d_t phi = Laplacian^{-1} div J`` (from continuity and Poisson)."""
    d = np.fft.fftn(div_x(J, xgrid))
    return -np.real(np.fft.ifftn(d * _inverse_laplacian_hat(xgrid)))


def field_state(f2, vgrid: VelocityGrid, xgrid: SpatialGrid) -> FieldState:
    rho, J = moments(f2, vgrid)
    return FieldState(rho, J, poisson_solve(rho, xgrid))


def continuity_residual(f2_old, f2_new, dt: float, vgrid: VelocityGrid, xgrid: SpatialGrid) -> float:
    """``|| (rho_new - rho_old)/dt + div(J_old + J_new)/2 ||_2``."""
    r0, J0 = moments(f2_old, vgrid)
    r1, J1 = moments(f2_new, vgrid)
    res = (r1 - r0) / dt + div_x(0.5 * (J0 + J1), xgrid)
    return lp_x_norm(res, xgrid, 2)


def field_norms(phi, f2, vgrid: VelocityGrid, xgrid: SpatialGrid, J=None) -> dict:
    """``||grad phi||_2``, ``||grad phi||_inf``, ``||d_t phi||_inf`` and the elliptic bound ratio.

    The ratio is ``||grad phi||_inf / (||f2||_2 + ||grad_x f2||_2)`` (zero when
    the denominator vanishes).
    """
    f2 = np.asarray(f2, dtype=float)
    gp = grad_x(phi, xgrid)
    gmag = np.sqrt(np.sum(gp ** 2, axis=0))
    if J is None:
        _, J = moments(f2, vgrid)
    dphi = dt_phi(J, xgrid)
    w = vgrid.cell_weight * xgrid.cell_volume
    f2n = np.sqrt(w * np.sum(f2 ** 2))
    gf2 = 0.0
    for i in range(xgrid.dim):
        alpha = [0] * xgrid.dim
        alpha[i] = 1
        gf2 += w * np.sum(x_derivative(f2, xgrid, alpha) ** 2)
    denom = f2n + np.sqrt(gf2)
    linf = float(gmag.max())
    return {
        "l2_grad_phi": lp_x_norm(gmag, xgrid, 2),
        "linf_grad_phi": linf,
        "linf_dt_phi": float(np.max(np.abs(dphi))),
        "bound_ratio": linf / denom if denom > 0 else 0.0,
    }
