"""Velocity and spatial lattices, quadrature, derivatives and norm primitives.

Velocity space is always three dimensional and sampled on a cell-centred
lattice ``v = -V + (j + 1/2) h``.  Space is a periodic box of dimension 1, 2
or 3 sampled uniformly; x-derivatives are spectral, v-derivatives are
centred finite differences with zero extension outside the velocity box.

Array layout: a velocity function is an array whose last three axes are the
velocity axes.  A phase-space field has shape ``(*xshape, n, n, n)`` and a
two-component ``PhaseField`` stacks two of those along a leading axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

SQRT_PI3 = np.pi ** 1.5


class GridError(ValueError):
    """Raised when grid parameters or field shapes violate a contract."""


# ---------------------------------------------------------------------------
# velocity lattice


@dataclass(frozen=True)
class VelocityGrid:
    """Cell-centred symmetric lattice on ``(-V, V)^3``."""

    n_per_axis: int
    cutoff: float

    @property
    def spacing(self) -> float:
        return 2.0 * self.cutoff / self.n_per_axis

    @property
    def cell_weight(self) -> float:
        return self.spacing ** 3

    @property
    def shape(self) -> tuple[int, int, int]:
        n = self.n_per_axis
        return (n, n, n)

    @cached_property
    def axis(self) -> np.ndarray:
        h = self.spacing
        return -self.cutoff + (np.arange(self.n_per_axis) + 0.5) * h

    @cached_property
    def v(self) -> np.ndarray:
        """Node coordinates, shape ``(3, n, n, n)``."""
        a = self.axis
        return np.stack(np.meshgrid(a, a, a, indexing="ij"))

    @cached_property
    def v2(self) -> np.ndarray:
        return np.sum(self.v ** 2, axis=0)

    @cached_property
    def mu(self) -> np.ndarray:
        return np.exp(-self.v2)

    @cached_property
    def sqrt_mu(self) -> np.ndarray:
        return np.exp(-0.5 * self.v2)

    @cached_property
    def japanese(self) -> np.ndarray:
        """``<v> = sqrt(1 + |v|^2)`` on the nodes."""
        return np.sqrt(1.0 + self.v2)

    @cached_property
    def dual_axis(self) -> np.ndarray:
        """Cube-centre coordinates ``-V + (c + 1) h``, ``c = 0..n-2``."""
        h = self.spacing
        return -self.cutoff + (np.arange(self.n_per_axis - 1) + 1.0) * h

    @cached_property
    def dual_v(self) -> np.ndarray:
        a = self.dual_axis
        return np.stack(np.meshgrid(a, a, a, indexing="ij"))


def build_velocity_grid(n: int, V: float) -> VelocityGrid:
    """Build the cell-centred velocity lattice with ``n`` nodes per axis on ``(-V, V)``.

    ``n`` must be even so that the node set is closed under ``v -> -v`` and the
    origin is a cube centre of the dual lattice.
    """
    if int(n) != n or n < 2 or n % 2:
        raise GridError(f"velocity nodes per axis must be an even integer >= 2, got {n}")
    if not V > 0:
        raise GridError(f"velocity cutoff must be positive, got {V}")
    return VelocityGrid(int(n), float(V))


def maxwellian(v) -> np.ndarray:
    """Global Maxwellian ``exp(-|v|^2)``; ``v`` has the vector index first."""
    v = np.asarray(v, dtype=float)
    return np.exp(-np.sum(v ** 2, axis=0))


# ---------------------------------------------------------------------------
# spatial lattice


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic box ``[0, L)^dim`` with ``n_per_axis`` points per axis."""

    dim: int
    n_per_axis: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridError(f"spatial dimension must be 1, 2 or 3, got {self.dim}")
        if int(self.n_per_axis) != self.n_per_axis or self.n_per_axis < 1:
            raise GridError(f"spatial points per axis must be a positive integer, got {self.n_per_axis}")
        if not self.box_length > 0:
            raise GridError(f"box length must be positive, got {self.box_length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dim

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def volume(self) -> float:
        return self.box_length ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return np.arange(self.n_per_axis) * self.spacing

    @cached_property
    def x(self) -> np.ndarray:
        """Coordinates, shape ``(dim, *shape)``."""
        return np.stack(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers ``2 pi m / L``, shape ``(dim, *shape)``."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_per_axis, d=self.spacing)
        return np.stack(np.meshgrid(*([k] * self.dim), indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.wavenumbers ** 2, axis=0)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes whose odd derivatives are set to zero (Nyquist planes)."""
        mask = np.zeros(self.shape, dtype=bool)
        if self.n_per_axis % 2 == 0:
            half = self.n_per_axis // 2
            for ax in range(self.dim):
                idx = [slice(None)] * self.dim
                idx[ax] = half
                mask[tuple(idx)] = True
        return mask


# ---------------------------------------------------------------------------
# multi-indices and weights


@dataclass(frozen=True)
class MultiIndex:
    alpha: tuple[int, ...]
    beta: tuple[int, int, int]

    @property
    def order(self) -> int:
        return sum(self.alpha) + sum(self.beta)


def multi_indices(m: int, dim: int, *, velocity: bool = True) -> Iterator[MultiIndex]:
    """All ``(alpha, beta)`` with ``|alpha| + |beta| <= m``."""
    for a in _compositions_upto(m, dim):
        rest = m - sum(a)
        if velocity:
            for b in _compositions_upto(rest, 3):
                yield MultiIndex(a, b)
        else:
            yield MultiIndex(a, (0, 0, 0))


def _compositions_upto(m: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 0:
        yield ()
        return
    for first in range(m + 1):
        for tail in _compositions_upto(m - first, parts - 1):
            yield (first,) + tail


@dataclass(frozen=True)
class WeightSpec:
    """Velocity weight ``exp(q|v|^2/2) <v>^{2(l - a - b)}``."""

    l: float
    q: float = 0.0
    a: int = 0
    b: int = 0

    def __post_init__(self):
        if self.l < self.a + self.b:
            raise GridError(f"weight needs l >= |alpha|+|beta|, got l={self.l}, a+b={self.a + self.b}")
        if self.q < 0:
            raise GridError(f"weight exponent q must be nonnegative, got {self.q}")


def weight(spec: WeightSpec, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    v2 = np.sum(v ** 2, axis=0)
    return np.exp(0.5 * spec.q * v2) * (1.0 + v2) ** (spec.l - spec.a - spec.b)


# ---------------------------------------------------------------------------
# phase fields


@dataclass
class PhaseField:
    """Two-component perturbation; ``tag`` is ``"pm"`` for (f+, f-) or ``"sd"`` for (f1, f2)."""

    values: np.ndarray
    tag: str = "pm"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in ("pm", "sd"):
            raise GridError(f"unknown formulation tag {self.tag!r}")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != 2:
            raise GridError("a PhaseField holds exactly two components")
        if not np.all(np.isfinite(self.values)):
            raise GridError("PhaseField entries must be finite")

    def as_sd(self) -> "PhaseField":
        if self.tag == "sd":
            return self
        p, m = self.values
        return PhaseField(np.stack([p + m, p - m]), "sd", dict(self.meta))

    def as_pm(self) -> "PhaseField":
        if self.tag == "pm":
            return self
        s, d = self.values
        return PhaseField(np.stack([0.5 * (s + d), 0.5 * (s - d)]), "pm", dict(self.meta))


# ---------------------------------------------------------------------------
# inner products and norms


def _check_vgrid(grid: VelocityGrid, *arrays):
    for a in arrays:
        if np.shape(a)[-3:] != grid.shape:
            raise GridError(f"velocity axes {np.shape(a)[-3:]} do not match grid {grid.shape}")


def vel_inner(grid: VelocityGrid, u, g) -> np.ndarray:
    """Velocity L2 inner product ``h^3 sum u g`` over the last three axes."""
    _check_vgrid(grid, u, g)
    return grid.cell_weight * np.sum(np.asarray(u) * np.asarray(g), axis=(-3, -2, -1))


def l2_norm(field, vgrid: VelocityGrid, xgrid: SpatialGrid | None = None, weight_values=None) -> float:
    """L2 norm over velocity (and space if ``xgrid`` is given), optionally weighted.

    ``weight_values`` multiplies the field before squaring, so the result is
    ``||w f||_2``.
    """
    f = np.asarray(field)
    if weight_values is not None:
        f = f * weight_values
    s = vgrid.cell_weight * np.sum(f ** 2)
    if xgrid is not None:
        s *= xgrid.cell_volume
    return float(np.sqrt(s))


def lp_x_norm(field_x, xgrid: SpatialGrid, p=2) -> float:
    """Discrete ``L^p`` norm over the periodic box; ``p`` may be ``np.inf``."""
    f = np.abs(np.asarray(field_x))
    if np.isinf(p):
        return float(f.max()) if f.size else 0.0
    if p < 1:
        raise GridError(f"p must be >= 1, got {p}")
    return float((xgrid.cell_volume * np.sum(f ** p)) ** (1.0 / p))


# ---------------------------------------------------------------------------
# derivatives


def x_derivative(field, xgrid: SpatialGrid, alpha: Sequence[int], max_order: int | None = None) -> np.ndarray:
    """Spectral derivative ``d^alpha`` over the leading spatial axes of ``field``.

    ``field`` has shape ``(*xgrid.shape, ...)``.  Odd derivatives drop the
    Nyquist plane so that real fields stay real.
    """
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != xgrid.dim:
        raise GridError(f"alpha must have {xgrid.dim} entries, got {alpha}")
    if max_order is not None and sum(alpha) > max_order:
        raise GridError(f"derivative order {sum(alpha)} exceeds configured maximum {max_order}")
    f = np.asarray(field)
    if sum(alpha) == 0:
        return f.copy()
    axes = tuple(range(xgrid.dim))
    fh = np.fft.fftn(f, axes=axes)
    mult = np.ones(xgrid.shape, dtype=complex)
    for ax, a in enumerate(alpha):
        if a:
            mult = mult * (1j * xgrid.wavenumbers[ax]) ** a
    if sum(alpha) % 2:
        mult[xgrid.nyquist_mask] = 0.0
    mult = mult.reshape(xgrid.shape + (1,) * (f.ndim - xgrid.dim))
    return np.real(np.fft.ifftn(fh * mult, axes=axes))


def _shift_zero(f, axis, step):
    """``f`` shifted by ``step`` along ``axis`` with zero fill: out[j] = f[j + step]."""
    out = np.zeros_like(f)
    n = f.shape[axis]
    src = [slice(None)] * f.ndim
    dst = [slice(None)] * f.ndim
    if step > 0:
        src[axis] = slice(step, n)
        dst[axis] = slice(0, n - step)
    else:
        src[axis] = slice(0, n + step)
        dst[axis] = slice(-step, n)
    out[tuple(dst)] = f[tuple(src)]
    return out


def centered_diff(f, h: float, axis: int) -> np.ndarray:
    """First centred difference along ``axis`` with zero extension."""
    return (_shift_zero(f, axis, 1) - _shift_zero(f, axis, -1)) / (2.0 * h)


def second_diff(f, h: float, axis: int) -> np.ndarray:
    """Compact second difference along ``axis`` with zero extension."""
    return (_shift_zero(f, axis, 1) - 2.0 * f + _shift_zero(f, axis, -1)) / h ** 2


def v_derivative(field, vgrid: VelocityGrid, beta: Sequence[int], max_order: int | None = None) -> np.ndarray:
    """Finite-difference ``d_beta`` over the last three axes (second order).

    Per axis, even orders use powers of the compact second difference and odd
    orders add one centred first difference.
    """
    beta = tuple(int(b) for b in beta)
    if len(beta) != 3:
        raise GridError(f"beta must have 3 entries, got {beta}")
    if max_order is not None and sum(beta) > max_order:
        raise GridError(f"derivative order {sum(beta)} exceeds configured maximum {max_order}")
    f = np.asarray(field, dtype=float)
    h = vgrid.spacing
    for i, b in enumerate(beta):
        axis = f.ndim - 3 + i
        for _ in range(b // 2):
            f = second_diff(f, h, axis)
        if b % 2:
            f = centered_diff(f, h, axis)
    return f


# ---------------------------------------------------------------------------
# negative Sobolev norm


def neg_sobolev_norm(field_x, xgrid: SpatialGrid, s: float) -> float:
    """``||Lambda^{-s} f||_2`` on the torus with the zero mode excluded.

    Uses angular wavenumbers, so ``Lambda^2 = -Laplacian``, and Parseval
    normalisation ``||g||_2^2 = (|box| / N^2) sum |g_hat|^2`` with ``N`` the
    number of grid points.  A single mode ``A cos(k x)`` gives
    ``A |k|^{-s} sqrt(|box| / 2)``.  Extra trailing axes are summed over.
    """
    if not 0.0 < s < 1.5:
        raise GridError(f"negative Sobolev index must lie in (0, 3/2), got {s}")
    f = np.asarray(field_x)
    axes = tuple(range(xgrid.dim))
    fh = np.fft.fftn(f, axes=axes)
    k2 = xgrid.k2.copy()
    nonzero = k2 > 0
    mult = np.zeros_like(k2)
    mult[nonzero] = k2[nonzero] ** (-s)
    mult = mult.reshape(xgrid.shape + (1,) * (f.ndim - xgrid.dim))
    npts = np.prod(xgrid.shape)
    total = xgrid.volume / npts ** 2 * np.sum(mult * np.abs(fh) ** 2)
    return float(np.sqrt(total))
