"""Landau kernel, sigma tensor, linearised operators and the bilinear collision term.

Discretisation
--------------
Every operator is built from one weak form on the dual lattice of cube
centres ``x_c = -V + (c + 1) h`` (``c = 0..n-2`` per axis).  Each cube
carries eight gradient samples, one per vertex, formed from the three cube
edges that meet there.  Writing ``u = mu^{-1/2} g``, the sample value and
gradient are scaled by ``mu(x_c)^{1/2}``, so entries stay bounded near the
edge of the velocity box.

With ``W = h^3 mu(x_c) / 8`` per sample and the kernel ``Phi(x_c - x_c')``,

* ``<A* g, k>   = -sum_a W_a  grad_a(k) . sigma_c grad_a(g)``
* ``<K* g, k>   =  sum_ab W_a W_b grad_a(k) . Phi grad_b(g)``
* ``<G*(g,h),k> = -sum_ab W_a W_b grad_a(k) . Phi [u_g(b) grad_a(h) - u_h(a) grad_b(g)]``

where ``sigma_c = sum_c' h^3 mu(x_c') Phi(x_c - x_c')``.  Consequences,
exact up to round-off:

* ``L``, ``L1``, ``L2`` are symmetric and positive semidefinite;
* ``L1`` annihilates ``sqrt(mu) {1, v, |v|^2}`` and ``L2`` annihilates ``sqrt(mu)``;
* ``G*(g,h)`` has zero mass; its symmetric part also has zero momentum and energy;
* ``G*(sqrt(mu), h) = A* h`` and ``G*(g, sqrt(mu)) = K* g``.

The coincident-cube kernel value is the cube average of ``Phi``,
``(2/3) C_p h^p I``, with ``C_p`` the integral of ``|u|^p`` over the unit cube.
Outside the box the distribution is zero and no flux leaves it.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from .grid import VelocityGrid, centered_diff

SYM = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
_SYM_INDEX = {}
for _k, (_i, _j) in enumerate(SYM):
    _SYM_INDEX[(_i, _j)] = _k
    _SYM_INDEX[(_j, _i)] = _k

# vertex offsets of a cube, bit i is the offset along axis i
VERTICES = tuple((s >> 0 & 1, s >> 1 & 1, s >> 2 & 1) for s in range(8))


def fft_workers() -> int:
    env = os.environ.get("VPLK_THREADS")
    if env:
        return max(1, int(env))
    return 1


@dataclass(frozen=True)
class KernelSpec:
    """``Phi_p(v) = |v|^p (I - v v / |v|^2)``; ``p = -1`` is Coulomb."""

    p: float = -1.0

    def __post_init__(self):
        if not self.p > -3.0:
            raise ValueError(f"kernel exponent must exceed -3 for local integrability, got {self.p}")


def phi_kernel(v, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """Kernel matrix at ``v`` (vector index first); zero at ``v = 0``.

    Returns shape ``(3, 3, *v.shape[1:])``.
    """
    v = np.asarray(v, dtype=float)
    r2 = np.sum(v ** 2, axis=0)
    safe = np.where(r2 > 0, r2, 1.0)
    scale = np.where(r2 > 0, safe ** (0.5 * spec.p), 0.0)
    eye = np.eye(3).reshape((3, 3) + (1,) * (v.ndim - 1))
    proj = eye - v[:, None] * v[None, :] / safe
    return scale * proj


@lru_cache(maxsize=None)
def unit_cube_power_integral(p: float) -> float:
    """``int_{[-1/2,1/2]^3} |u|^p du`` via the divergence theorem on the faces."""
    # div(u |u|^p) = (3 + p)|u|^p; each face contributes (1/2) int |u|^p dS
    val, _ = integrate.dblquad(
        lambda z, y: (0.25 + y * y + z * z) ** (0.5 * p),
        -0.5, 0.5, -0.5, 0.5, epsabs=1e-13, epsrel=1e-13,
    )
    return 6.0 * 0.5 * val / (3.0 + p)


def self_cell_value(spec: KernelSpec, h: float) -> float:
    """Diagonal entry of the cube-averaged kernel (it is a multiple of I)."""
    return (2.0 / 3.0) * unit_cube_power_integral(spec.p) * h ** spec.p


def _kernel_on_offsets(d: np.ndarray, h: float, spec: KernelSpec) -> np.ndarray:
    """Symmetric components (6, ...) of the lattice kernel at integer offsets ``d``."""
    phi = phi_kernel(h * d, spec)
    comps = np.stack([phi[i, j] for i, j in SYM])
    origin = np.all(d == 0, axis=0)
    diag = self_cell_value(spec, h)
    for k in range(3):
        comps[k][origin] = diag
    return comps


class LatticeConvolution:
    """Discrete convolution ``out_c = sum_c' Phi(h (c - c')) a_c'`` on an ``M^3`` block.

    ``mode="fft"`` zero-pads to ``(2M)^3``; ``mode="direct"`` sums explicitly
    and is meant as an oracle on small lattices.
    """

    def __init__(self, M: int, h: float, spec: KernelSpec = KernelSpec(), mode: str = "fft"):
        if mode not in ("fft", "direct"):
            raise ValueError(f"conv_mode must be 'fft' or 'direct', got {mode!r}")
        self.M, self.h, self.spec, self.mode = M, h, spec, mode
        self.P = 2 * M

    @cached_property
    def kernel_hat(self) -> np.ndarray:
        P, M = self.P, self.M
        idx = np.arange(P)
        off = np.where(idx < M, idx, idx - P)
        d = np.stack(np.meshgrid(off, off, off, indexing="ij")).astype(float)
        comps = _kernel_on_offsets(d, self.h, self.spec)
        comps[:, np.any(np.abs(d) > M - 1, axis=0)] = 0.0
        return sfft.rfftn(comps, axes=(1, 2, 3))

    @cached_property
    def kernel_dense(self) -> np.ndarray:
        M = self.M
        if M ** 3 > 5000:
            raise ValueError("direct convolution is limited to small lattices")
        c = np.stack(np.meshgrid(*([np.arange(M)] * 3), indexing="ij")).reshape(3, -1)
        d = (c[:, :, None] - c[:, None, :]).astype(float)
        return _kernel_on_offsets(d, self.h, self.spec)

    def _fwd(self, a):
        P = self.P
        return sfft.rfftn(a, s=(P, P, P), axes=(-3, -2, -1), workers=fft_workers())

    def _inv(self, ah):
        # pruned inverse: only the first M outputs per axis are kept
        P, M, w = self.P, self.M, fft_workers()
        out = sfft.ifft(ah, axis=-3, workers=w)[..., :M, :, :]
        out = sfft.ifft(out, axis=-2, workers=w)[..., :M, :]
        return sfft.irfft(out, n=P, axis=-1, workers=w)[..., :M]

    def scalar(self, a) -> np.ndarray:
        """Matrix field ``Phi * a`` as symmetric components, shape ``(6, ...)``."""
        a = np.asarray(a, dtype=float)
        if self.mode == "direct":
            flat = a.reshape(a.shape[:-3] + (-1,))
            out = np.einsum("kcd,...d->k...c", self.kernel_dense, flat)
            return out.reshape((6,) + a.shape)
        ah = self._fwd(a)
        return np.stack([self._inv(self.kernel_hat[k] * ah) for k in range(6)])

    def vector(self, m) -> np.ndarray:
        """Vector field ``(Phi * m)_i = sum_j Phi_ij * m_j``; ``m`` has shape ``(3, ...)``."""
        m = np.asarray(m, dtype=float)
        if self.mode == "direct":
            flat = m.reshape(m.shape[:-3] + (-1,))
            K = self.kernel_dense
            out = np.stack([
                sum(np.einsum("cd,...d->...c", K[_SYM_INDEX[(i, j)]], flat[j]) for j in range(3))
                for i in range(3)
            ])
            return out.reshape(m.shape)
        mh = [self._fwd(m[j]) for j in range(3)]
        out = []
        for i in range(3):
            acc = sum(self.kernel_hat[_SYM_INDEX[(i, j)]] * mh[j] for j in range(3))
            out.append(self._inv(acc))
        return np.stack(out)


def sym_to_full(comps: np.ndarray) -> np.ndarray:
    """(6, ...) symmetric components to (3, 3, ...)."""
    return np.stack([np.stack([comps[_SYM_INDEX[(i, j)]] for j in range(3)]) for i in range(3)])


@dataclass
class SigmaField:
    """``sigma^{ij} = Phi^{ij} * mu`` at the velocity nodes, shape ``(3, 3, n, n, n)``."""

    grid: VelocityGrid
    values: np.ndarray


def build_sigma(grid: VelocityGrid, spec: KernelSpec = KernelSpec(), conv_mode: str = "fft") -> SigmaField:
    """Discrete ``Phi * mu`` on the node lattice (self-cell term by cube average)."""
    conv = LatticeConvolution(grid.n_per_axis, grid.spacing, spec, conv_mode)
    comps = grid.cell_weight * conv.scalar(grid.mu)
    return SigmaField(grid, sym_to_full(comps))


def sigma_at(point, grid: VelocityGrid, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """``sigma`` at an arbitrary point, shape ``(3, 3)``.

    Midpoint quadrature on the lattice ``point + h Z^3`` restricted to the
    velocity box; the cell containing ``point`` contributes the cube average
    of ``Phi``.  At lattice points this is the rule used by the operators.
    """
    point = np.asarray(point, dtype=float).reshape(3)
    h, V = grid.spacing, grid.cutoff
    axes = []
    for c in point:
        lo = int(np.ceil((-V + 0.5 * h - c) / h - 1e-12))
        hi = int(np.floor((V - 0.5 * h - c) / h + 1e-12))
        axes.append(np.arange(lo, hi + 1, dtype=float))
    d = np.stack(np.meshgrid(*axes, indexing="ij"))
    u = point.reshape(3, 1, 1, 1) + h * d
    mu = np.exp(-np.sum(u ** 2, axis=0))
    comps = _kernel_on_offsets(-d, h, spec)
    return sym_to_full(h ** 3 * np.sum(comps * mu, axis=(-3, -2, -1)))


# ---------------------------------------------------------------------------


@dataclass
class NullBasis:
    """Orthonormal bases of N(L) (pairs), N(L1) and N(L2)."""

    L: np.ndarray   # (6, 2, n, n, n)
    L1: np.ndarray  # (5, n, n, n)
    L2: np.ndarray  # (1, n, n, n)


def gram_schmidt(vectors: Sequence[np.ndarray], inner) -> np.ndarray:
    """Modified Gram-Schmidt, applied twice for orthonormality at round-off."""
    basis: list[np.ndarray] = []
    for v in vectors:
        w = np.array(v, dtype=float)
        for _ in range(2):
            for b in basis:
                w = w - inner(w, b) * b
        norm = np.sqrt(inner(w, w))
        if norm < 1e-14:
            raise ValueError("degenerate vector in Gram-Schmidt")
        basis.append(w / norm)
    return np.stack(basis)


class LandauOperator:
    """Discrete linearised and bilinear Landau operators on one velocity grid.

    Velocity functions may carry leading batch axes; all methods act on the
    last three axes.

    Parameters
    ----------
    grid : VelocityGrid
    spec : KernelSpec
        Kernel exponent.
    conv_mode : {"fft", "direct"}
        Convolution backend; ``direct`` is the brute-force oracle.
    """

    def __init__(self, grid: VelocityGrid, spec: KernelSpec = KernelSpec(), conv_mode: str = "fft"):
        if grid.n_per_axis < 2:
            raise ValueError("need at least two velocity nodes per axis")
        self.grid = grid
        self.spec = spec
        self.conv_mode = conv_mode
        self.h = grid.spacing
        self.M = grid.n_per_axis - 1
        self.conv = LatticeConvolution(self.M, self.h, spec, conv_mode)

        xc = grid.dual_v
        self.x2_c = np.sum(xc ** 2, axis=0)
        self.mu_c = np.exp(-self.x2_c)
        self.sqrt_mu_c = np.exp(-0.5 * self.x2_c)
        M = self.M
        v2 = grid.v2
        self.eps = np.stack([
            np.exp(-0.5 * self.x2_c + 0.5 * v2[s0:s0 + M, s1:s1 + M, s2:s2 + M])
            for s0, s1, s2 in VERTICES
        ])
        self.sigma_sym = grid.cell_weight * self.conv.scalar(self.mu_c)
        self.sigma_c = sym_to_full(self.sigma_sym)

    # -- sample machinery --------------------------------------------------

    def _values(self, g) -> list:
        """Scaled vertex values ``mu_c^{1/2} u(c + s)``: 8 arrays of shape ``(..., M, M, M)``."""
        M = self.M
        return [self.eps[k] * g[..., s0:s0 + M, s1:s1 + M, s2:s2 + M]
                for k, (s0, s1, s2) in enumerate(VERTICES)]

    def _grads(self, nu) -> list:
        """Vertex gradients ``[s][i]`` from vertex values (edge differences)."""
        inv_h = 1.0 / self.h
        edge = {}
        out = []
        for s in range(8):
            comps = []
            for i in range(3):
                lo = s & ~(1 << i)
                key = (lo, i)
                if key not in edge:
                    edge[key] = (nu[lo | (1 << i)] - nu[lo]) * inv_h
                comps.append(edge[key])
            out.append(comps)
        return out

    def _adjoint(self, F) -> np.ndarray:
        """Transpose of ``g -> _grads(_values(g))`` applied to sample vectors ``F[s][i]``."""
        inv_h = 1.0 / self.h
        # the two vertices of an edge share one gradient sample
        E = {}
        for s in range(8):
            for i in range(3):
                lo = s & ~(1 << i)
                if (lo, i) not in E:
                    E[(lo, i)] = (F[lo][i] + F[lo | (1 << i)][i]) * inv_h
        return self._scatter_edges(E)

    def _scatter_edges(self, E) -> np.ndarray:
        """Second half of :meth:`_adjoint`: edge samples ``E[(lo, i)]`` back to the nodes."""
        M, n = self.M, self.grid.n_per_axis
        batch = E[(0, 0)].shape[:-3]
        out = np.zeros(batch + (n, n, n))
        for s, (s0, s1, s2) in enumerate(VERTICES):
            T = 0.0
            for i in range(3):
                e = E[(s & ~(1 << i), i)]
                T = T + e if (s >> i) & 1 else T - e
            out[..., s0:s0 + M, s1:s1 + M, s2:s2 + M] += self.eps[s] * T
        return out

    @staticmethod
    def _matvec(S, x) -> list:
        """Symmetric components ``S`` (6, ...) times a vector given as 3 arrays."""
        k = _SYM_INDEX
        return [sum(S[k[(i, j)]] * x[j] for j in range(3)) for i in range(3)]

    # -- operators ---------------------------------------------------------

    def apply_A_star(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        gam = self._grads(self._values(g))
        flux = [self._matvec(self.sigma_sym, gam[s]) for s in range(8)]
        return -0.125 * self._adjoint(flux)

    def apply_L2(self, g) -> np.ndarray:
        return -2.0 * self.apply_A_star(g)

    def _bconv(self, gam) -> np.ndarray:
        m = np.stack([self.sqrt_mu_c * sum(gam[s][i] for s in range(8)) for i in range(3)])
        return 0.125 * self.grid.cell_weight * self.conv.vector(m)

    def apply_K_star(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        B = self.sqrt_mu_c * self._bconv(self._grads(self._values(g)))
        return 0.125 * self._adjoint([list(B)] * 8)

    def apply_L1(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        gam = self._grads(self._values(g))
        B = self.sqrt_mu_c * self._bconv(gam)
        flux = []
        for s in range(8):
            a = self._matvec(self.sigma_sym, gam[s])
            flux.append([B[i] - a[i] for i in range(3)])
        return -0.25 * self._adjoint(flux)

    def apply_L(self, g_pair) -> np.ndarray:
        """Two-species operator ``L_pm g = -(2 A* g_pm + K*(g_+ + g_-))``."""
        g_pair = np.asarray(g_pair, dtype=float)
        A = self.apply_A_star(g_pair)
        K = self.apply_K_star(g_pair[..., 0, :, :, :] + g_pair[..., 1, :, :, :])
        return -(2.0 * A + K[..., None, :, :, :])

    def gamma_star_many(self, g, hs: Sequence[np.ndarray]) -> list[np.ndarray]:
        """``[Gamma*(g, h) for h in hs]`` sharing the convolutions of ``g``."""
        g = np.asarray(g, dtype=float)
        H = np.stack([np.broadcast_to(np.asarray(h_, dtype=float), g.shape) for h_ in hs])
        nu_g = self._values(g)
        gam_g = self._grads(nu_g)
        A = 0.125 * self.grid.cell_weight * self.conv.scalar(self.sqrt_mu_c * sum(nu_g))
        B = self._bconv(gam_g)
        nu_h = self._values(H)
        gam_h = self._grads(nu_h)
        # flux_s = A gam_s - nu_s B, paired over the two vertices of each edge
        # (the adjoint of the gradient map) without forming per-vertex fluxes
        k = _SYM_INDEX
        inv_h = 1.0 / self.h
        E = {}
        for lo in range(8):
            for i in range(3):
                if lo & (1 << i):
                    continue
                hi = lo | (1 << i)
                acc = -(nu_h[lo] + nu_h[hi]) * B[i]
                for j in range(3):
                    gj = 2.0 * gam_h[lo][i] if j == i else gam_h[lo][j] + gam_h[hi][j]
                    acc += A[k[(i, j)]] * gj
                E[(lo, i)] = acc * inv_h
        return list(-0.125 * self._scatter_edges(E))

    def apply_Gamma_star(self, g, h) -> np.ndarray:
        return self.gamma_star_many(g, [h])[0]

    def apply_Gamma(self, g_pair, h_pair) -> np.ndarray:
        """``Gamma_pm(g, h) = Gamma*(g_+ + g_-, h_pm)``; the pair axis is ``-4``."""
        g_pair = np.asarray(g_pair, dtype=float)
        h_pair = np.asarray(h_pair, dtype=float)
        g1 = g_pair[..., 0, :, :, :] + g_pair[..., 1, :, :, :]
        res = self.gamma_star_many(g1, [h_pair[..., 0, :, :, :], h_pair[..., 1, :, :, :]])
        return np.stack(res, axis=-4)

    # -- null spaces and projections ---------------------------------------

    def inner(self, u, g):
        return self.grid.cell_weight * np.sum(np.asarray(u) * np.asarray(g))

    @cached_property
    def null_basis(self) -> NullBasis:
        grid = self.grid
        sm = grid.sqrt_mu
        inv = [sm, grid.v[0] * sm, grid.v[1] * sm, grid.v[2] * sm, grid.v2 * sm]
        b1 = gram_schmidt(inv, self.inner)
        b2 = gram_schmidt([sm], self.inner)
        zero = np.zeros_like(sm)
        pair_vectors = [np.stack([sm, zero]), np.stack([zero, sm])]
        pair_vectors += [np.stack([f, f]) for f in inv[1:]]
        bL = gram_schmidt(pair_vectors, self.inner)
        return NullBasis(bL, b1, b2)

    def project(self, g, basis_choice: str = "P"):
        """Return ``(P g, (I - P) g)`` for ``basis_choice`` in {"P", "P1", "P2"}.

        ``P`` acts on pairs ``(..., 2, n, n, n)``; ``P1``/``P2`` on scalars.
        """
        g = np.asarray(g, dtype=float)
        nb = self.null_basis
        basis = {"P": nb.L, "P1": nb.L1, "P2": nb.L2}[basis_choice]
        nd = basis.ndim - 1
        axes = tuple(range(-nd, 0))
        hw = self.grid.cell_weight
        coeff = [hw * np.sum(g * b, axis=axes) for b in basis]
        Pg = sum(c[(...,) + (None,) * nd] * b for c, b in zip(coeff, basis))
        return Pg, g - Pg

    # -- sigma norms ---------------------------------------------------------

    @cached_property
    def sigma_nodes(self) -> np.ndarray:
        return build_sigma(self.grid, self.spec, self.conv_mode).values

    @cached_property
    def _sigma_vv(self) -> np.ndarray:
        v = self.grid.v
        return np.einsum("ij...,i...,j...->...", self.sigma_nodes, v, v)

    def sigma_norm_sq(self, g, weight_nodes=None, weight_cubes=None) -> np.ndarray:
        """``int w^2 [sigma^{ij} d_i g d_j g + sigma^{ij} v_i v_j g^2] dv`` per batch entry.

        The gradient part uses the same vertex gradients as the operators
        (of ``g`` itself, at cube centres); the zeroth-order part lives on
        the nodes.
        """
        g = np.asarray(g, dtype=float)
        hw = self.grid.cell_weight
        M = self.M
        # unscaled vertex gradients of g
        vals = [g[..., s0:s0 + M, s1:s1 + M, s2:s2 + M] for s0, s1, s2 in VERTICES]
        gam = self._grads(vals)
        # sigma is constant on a cube, so contract the vertex sums first:
        # sum_s gam_s^T S gam_s = sum_ij S_ij sum_s gam_s,i gam_s,j
        k = _SYM_INDEX
        S = self.sigma_sym
        q = 0.0
        for i in range(3):
            for j in range(i, 3):
                if i == j:
                    # vertices s and s ^ (1 << i) share the edge sample
                    c = 2.0 * sum(gam[s][i] ** 2 for s in range(8) if not s & (1 << i))
                else:
                    c = sum(gam[s][i] * gam[s][j] for s in range(8))
                q = q + (1.0 if i == j else 2.0) * S[k[(i, j)]] * c
        wc2 = 1.0 if weight_cubes is None else np.asarray(weight_cubes) ** 2
        grad_part = np.sum(wc2 * q, axis=(-3, -2, -1)) * (hw / 8.0)
        wn2 = 1.0 if weight_nodes is None else np.asarray(weight_nodes) ** 2
        pot_part = hw * np.sum(wn2 * self._sigma_vv * g ** 2, axis=(-3, -2, -1))
        return grad_part + pot_part

    def weight_on_cubes(self, spec) -> np.ndarray:
        from .grid import weight
        return weight(spec, self.grid.dual_v)

    def split_norm_sq(self, g) -> np.ndarray:
        """``|<v>^{-1/2} g|^2 + |<v>^{-3/2} grad g . vhat|^2 + |<v>^{-1/2} grad g x vhat|^2``."""
        g = np.asarray(g, dtype=float)
        grid = self.grid
        h = grid.spacing
        nd = g.ndim
        grad = np.stack([centered_diff(g, h, nd - 3 + i) for i in range(3)])
        r = np.sqrt(grid.v2)
        vhat = (grid.v / r).reshape((3,) + (1,) * (nd - 3) + grid.shape)
        radial = np.sum(grad * vhat, axis=0)
        tang2 = np.sum(grad ** 2, axis=0) - radial ** 2
        jv = grid.japanese
        dens = g ** 2 / jv + radial ** 2 / jv ** 3 + tang2 / jv
        return grid.cell_weight * np.sum(dens, axis=(-3, -2, -1))


# ---------------------------------------------------------------------------
# measured constants


def _monomials(degree: int) -> list[tuple[int, int, int]]:
    return [m for m in itertools.product(range(degree + 1), repeat=3) if sum(m) <= degree]


def smooth_samples(grid: VelocityGrid, n_samples: int, seed: int = 0, degree: int = 4,
                   components: int = 1) -> np.ndarray:
    """Random ``sqrt(mu) * polynomial`` test functions.

    Coefficients depend only on ``seed``, so the same functions are sampled
    on every grid and measured constants can be compared under refinement.
    Returns ``(n_samples, n, n, n)`` or ``(n_samples, components, n, n, n)``.
    """
    monos = _monomials(degree)
    rng = np.random.default_rng(seed)
    coeff = rng.standard_normal((n_samples, components, len(monos)))
    v = grid.v
    basis = np.stack([v[0] ** a * v[1] ** b * v[2] ** c for a, b, c in monos])
    out = np.einsum("sck,k...->sc...", coeff, basis) * grid.sqrt_mu
    return out[:, 0] if components == 1 else out


def sigma_norm(op: LandauOperator, g, weight_spec=None) -> np.ndarray:
    """Weighted sigma norm ``|g|_{sigma,w}`` (square root of :meth:`LandauOperator.sigma_norm_sq`)."""
    if weight_spec is None:
        return np.sqrt(op.sigma_norm_sq(g))
    from .grid import weight
    wn = weight(weight_spec, op.grid.v)
    wc = weight(weight_spec, op.grid.dual_v)
    return np.sqrt(op.sigma_norm_sq(g, weight_nodes=wn, weight_cubes=wc))


def sigma_equivalence_interval(op: LandauOperator, n_samples: int = 100, seed: int = 0) -> tuple[float, float]:
    """Measured ``[c1, c2]`` for ``|g|_sigma^2 / split_norm_sq(g)`` over random ``g``."""
    X = smooth_samples(op.grid, n_samples, seed)
    r = op.sigma_norm_sq(X) / op.split_norm_sq(X)
    return float(r.min()), float(r.max())


def coercivity_constant(op: LandauOperator, n_samples: int = 50, seed: int = 0,
                        which: str = "L", tol: float = 1e-12) -> float:
    """``min <L g, g> / |(I - P) g|_sigma^2`` over random smooth samples.

    ``which`` selects ``L`` (pairs, projection P), ``L1`` (P1) or ``L2`` (P2).
    Samples with ``|(I - P) g|_sigma < tol`` are skipped.
    """
    if which == "L":
        X = smooth_samples(op.grid, n_samples, seed, components=2)
        _, micro = op.project(X, "P")
        den = op.sigma_norm_sq(micro).sum(axis=1)
        Lx = op.apply_L(X)
    elif which in ("L1", "L2"):
        X = smooth_samples(op.grid, n_samples, seed)
        _, micro = op.project(X, "P" + which[1])
        den = op.sigma_norm_sq(micro)
        Lx = op.apply_L1(X) if which == "L1" else op.apply_L2(X)
    else:
        raise ValueError(f"unknown operator {which!r}")
    num = op.grid.cell_weight * np.sum((Lx * X).reshape(n_samples, -1), axis=1)
    keep = np.sqrt(den) >= tol
    if not np.any(keep):
        raise ValueError("all samples degenerate")
    return float(np.min(num[keep] / den[keep]))


def gamma_estimate_ratio(op: LandauOperator, n_samples: int = 50, seed: int = 0, delta: float = 0.25) -> float:
    """``sup |<G*(g,h), k>| / (|mu^delta g|_2 |h|_sigma |k|_sigma)`` over random triples."""
    X = smooth_samples(op.grid, 3 * n_samples, seed).reshape((n_samples, 3) + op.grid.shape)
    g, h, k = X[:, 0], X[:, 1], X[:, 2]
    G = op.apply_Gamma_star(g, h)
    hw = op.grid.cell_weight
    num = np.abs(hw * np.sum((G * k).reshape(n_samples, -1), axis=1))
    mg = np.sqrt(hw * np.sum(((op.grid.mu ** delta) * g).reshape(n_samples, -1) ** 2, axis=1))
    den = mg * np.sqrt(op.sigma_norm_sq(h) * op.sigma_norm_sq(k))
    return float(np.max(num / den))
