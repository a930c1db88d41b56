"""Right-hand sides and time integration of the perturbed Vlasov-Poisson-Landau system.

Phase arrays have shape ``(2, *xgrid.shape, n, n, n)``; the leading axis holds
``(f+, f-)`` (``pm``) or ``(f1, f2) = (f+ + f-, f+ - f-)`` (``sd``).

One step is a Strang splitting ``C(dt/2) E(dt) C(dt/2)``:

* ``C`` is a two-stage L-stable SDIRK step for ``d_t f = -L f``
  (``L1``/``L2`` in ``sd``, the pair operator in ``pm``), solved by
  conjugate gradients or, on small velocity grids, by a precomputed dense
  propagator.  L-stability matters: the explicit ``Gamma`` term is
  anti-diffusive where ``f1 < 0`` and only strong damping of the stiff
  collision modes keeps the splitting stable;
* ``E`` is implicit midpoint for transport and field terms (transport
  inverted in Fourier space, field terms by fixed-point iteration) with the
  ``Gamma`` term evaluated once at the extrapolated step midpoint.

Every substep conserves mass and the total energy
``int |v|^2 sqrt(mu) f1 + ||grad phi||^2`` up to round-off and the
fixed-point tolerance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .field import FieldState, continuity_residual, field_state, grad_x, NeutralityError
from .grid import PhaseField, SpatialGrid, VelocityGrid, _shift_zero, x_derivative
from .landau import LandauOperator

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096
# L-stable two-stage SDIRK; stiff collision modes are damped, not reflected
SDIRK_GAMMA = 1.0 - 1.0 / np.sqrt(2.0)


class StepFailure(RuntimeError):
    """Implicit solve did not converge; ``diagnostics`` holds residual history."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class PositivityError(ValueError):
    def __init__(self, msg, max_epsilon):
        super().__init__(msg)
        self.max_epsilon = max_epsilon


@dataclass
class SchemeConfig:
    """Time-stepping parameters.

    ``implicit_solver`` is ``"cg"``, ``"dense"`` or ``"auto"`` (dense when the
    velocity grid has at most 4096 nodes).  The ``transport``, ``field``,
    ``collisions`` and ``nonlinear`` switches disable groups of terms.
    """

    dt: float
    t_end: float
    implicit_tol: float = 1e-10
    formulation: str = "sd"
    epsilon: float = 1e-3
    implicit_solver: str = "auto"
    max_cg_iter: int = 500
    transport: bool = True
    field: bool = True
    collisions: bool = True
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.implicit_tol <= 1e-6:
            raise ValueError(f"implicit_tol must lie in (0, 1e-6], got {self.implicit_tol}")
        if self.formulation not in ("pm", "sd"):
            raise ValueError(f"formulation must be 'pm' or 'sd', got {self.formulation!r}")
        if self.implicit_solver not in ("auto", "cg", "dense"):
            raise ValueError(f"unknown implicit solver {self.implicit_solver!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class SimState:
    """Time, phase fields and the derived potential.

    ``increment`` is the last transport/field substep increment, used to
    place the explicit ``Gamma`` evaluation at the step midpoint.
    """

    t: float
    fields: PhaseField
    field_state: FieldState
    increment: np.ndarray | None = None


@dataclass
class StepReport:
    implicit_iterations: int
    continuity_residual: float
    min_F: float
    cfl: float


def cfl_dt(vgrid: VelocityGrid, xgrid: SpatialGrid, cfl: float = 0.5) -> float:
    """``dt = cfl * dx / V``."""
    return cfl * xgrid.spacing / vgrid.cutoff


def difference_part(values, formulation: str) -> np.ndarray:
    return values[1] if formulation == "sd" else values[0] - values[1]


def min_F(values, formulation: str, vgrid: VelocityGrid) -> float:
    """``min over (x, v, species) of mu + sqrt(mu) f_pm``."""
    if formulation == "sd":
        fp, fm = 0.5 * (values[0] + values[1]), 0.5 * (values[0] - values[1])
    else:
        fp, fm = values[0], values[1]
    return float(min(np.min(vgrid.mu + vgrid.sqrt_mu * fp), np.min(vgrid.mu + vgrid.sqrt_mu * fm)))


def _sym(A):
    return 0.5 * (A + A.T)


def _spd_inverse(M):
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    c, info = sla.lapack.dpotrf(M, lower=False)
    if info != 0:
        raise np.linalg.LinAlgError(f"matrix is not positive definite (info={info})")
    inv, info = sla.lapack.dpotri(c, lower=False)
    if info != 0:
        raise np.linalg.LinAlgError(f"inversion failed (info={info})")
    return np.triu(inv) + np.triu(inv, 1).T


class ParityBasis:
    """Orthogonal change of basis to the 8 reflection-parity sectors of an ``n^3`` grid.

    The velocity lattice is symmetric under ``v_i -> -v_i`` and so are the
    discrete collision operators; in this basis their matrices are block
    diagonal with 8 blocks of size ``(n/2)^3``.
    """

    def __init__(self, n: int):
        h = n // 2
        P = np.zeros((n, n))
        for j in range(h):
            P[j, j] = P[j, n - 1 - j] = np.sqrt(0.5)
            P[h + j, j], P[h + j, n - 1 - j] = np.sqrt(0.5), -np.sqrt(0.5)
        self.n, self.h, self.P = n, h, P

    def forward(self, x) -> np.ndarray:
        """``(..., n, n, n)`` to ``(..., 8, (n/2)^3)``."""
        n, h, P = self.n, self.h, self.P
        y = self._apply_1d(P, x)
        nb = x.ndim - 3
        y = y.reshape(x.shape[:-3] + (2, h, 2, h, 2, h))
        y = y.transpose(tuple(range(nb)) + tuple(nb + i for i in (0, 2, 4, 1, 3, 5)))
        return y.reshape(x.shape[:-3] + (8, h ** 3))

    def inverse(self, y) -> np.ndarray:
        n, h, P = self.n, self.h, self.P
        batch = y.shape[:-2]
        nb = len(batch)
        x = y.reshape(batch + (2, 2, 2, h, h, h))
        x = x.transpose(tuple(range(nb)) + tuple(nb + i for i in (0, 3, 1, 4, 2, 5))).reshape(batch + (n, n, n))
        return self._apply_1d(P.T, x)

    @staticmethod
    def _apply_1d(P, x):
        # P acting on each of the three trailing axes, as BLAS products
        n = P.shape[0]
        x = x @ P.T
        x = P @ x
        return (P @ x.reshape(x.shape[:-3] + (n, n * n))).reshape(x.shape)

    def blocks(self, A, tol: float = 1e-11):
        """Diagonal blocks of the symmetric ``N x N`` matrix ``A``; ``None`` if ``A`` is not block diagonal."""
        n, m = self.n, self.h ** 3
        N = n ** 3
        At = self.forward(A.reshape((N, n, n, n))).reshape(N, N)
        At = self.forward(At.T.reshape((N, n, n, n))).reshape(N, N)
        out, off = [], 0.0
        scale = float(np.max(np.abs(At)))
        for b in range(8):
            sl = slice(b * m, (b + 1) * m)
            out.append(_sym(At[sl, sl]))
            row = At[sl].copy()
            row[:, sl] = 0.0
            off = max(off, float(np.max(np.abs(row))))
        return out if off <= tol * scale else None


def _batched_cg(apply, b, tol: float, maxiter: int, ndot: int):
    """Conjugate gradients for independent SPD systems stacked along leading axes.

    The last ``ndot`` axes form one system.  Starts from zero, so every
    iterate lies in the Krylov space of ``b``.
    """
    axes = tuple(range(-ndot, 0))

    def dot(a, c):
        return np.sum(a * c, axis=axes, keepdims=True)

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = dot(r, r)
    target = (tol ** 2) * rr
    it = 0
    history = [float(np.sqrt(rr.max()))]
    while np.any(rr > target) and np.any(rr > 0):
        if it >= maxiter:
            raise StepFailure(
                f"CG did not converge in {maxiter} iterations (residual {history[-1]:.3e})",
                {"residual_history": history},
            )
        Ap = apply(p)
        pAp = dot(p, Ap)
        active = rr > target
        alpha = np.where(active & (pAp > 0), rr / np.where(pAp > 0, pAp, 1.0), 0.0)
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = dot(r, r)
        beta = np.where(active, rr_new / np.where(rr > 0, rr, 1.0), 0.0)
        p = np.where(active, r + beta * p, p)
        rr = np.where(active, rr_new, rr)
        it += 1
        history.append(float(np.sqrt(rr.max())))
    return x, it


class Simulator:
    """Precomputed operators and propagators for one grid/scheme combination."""

    def __init__(self, vgrid: VelocityGrid, xgrid: SpatialGrid, cfg: SchemeConfig,
                 op: LandauOperator | None = None):
        self.vgrid, self.xgrid, self.cfg = vgrid, xgrid, cfg
        self.op = op if op is not None else LandauOperator(vgrid)
        self.sqrt_mu = vgrid.sqrt_mu
        self.inv_sqrt_mu = 1.0 / vgrid.sqrt_mu
        solver = cfg.implicit_solver
        if solver == "auto":
            solver = "dense" if vgrid.n_per_axis ** 3 <= DENSE_LIMIT else "cg"
        self.solver = solver
        self._dense = {}
        self._phase = {}
        self.parity = ParityBasis(vgrid.n_per_axis)

    # -- velocity-space pieces ---------------------------------------------

    def _collide(self, u, which):
        """``-L`` applied per formulation; ``u`` has the phase layout."""
        if self.cfg.formulation == "sd":
            return np.stack([self.op.apply_L1(u[0]), self.op.apply_L2(u[1])])
        pair = np.moveaxis(u, 0, -4)
        return np.moveaxis(self.op.apply_L(pair), -4, 0)

    def force(self, E, f) -> np.ndarray:
        """``E . (grad_v f - v f)`` discretised as ``mu^{-1/2} D(mu^{1/2} f)``.

        ``D`` is a face-flux difference with averaged face values and zero
        flux through the velocity cutoff, so species mass is conserved exactly.
        Interior rows coincide with the centred difference.
        """
        g = self.sqrt_mu * f
        out = np.zeros_like(f)
        h = self.vgrid.spacing
        xs = (1,) * 3
        for d in range(self.xgrid.dim):
            ax = f.ndim - 3 + d
            up = 0.5 * (g + _shift_zero(g, ax, 1))  # flux at face i+1/2
            idx = [slice(None)] * g.ndim
            idx[ax] = -1
            up[tuple(idx)] = 0.0
            Dg = (up - _shift_zero(up, ax, -1)) / h
            out += E[d].reshape(E[d].shape + xs) * Dg
        return out * self.inv_sqrt_mu

    def _source(self, E) -> np.ndarray:
        """``E . v sqrt(mu)`` as a phase-space component."""
        xs = (1,) * 3
        out = 0.0
        for d in range(self.xgrid.dim):
            out = out + E[d].reshape(E[d].shape + xs) * (self.vgrid.v[d] * self.sqrt_mu)
        return np.broadcast_to(out, self.xgrid.shape + self.vgrid.shape)

    def potential(self, u) -> FieldState:
        return field_state(difference_part(u, self.cfg.formulation), self.vgrid, self.xgrid)

    def explicit(self, u, fs: FieldState | None = None) -> np.ndarray:
        """Field and ``Gamma`` terms (everything except transport and ``-L``)."""
        cfg = self.cfg
        out = np.zeros_like(u)
        if cfg.field:
            fs = fs if fs is not None else self.potential(u)
            E = grad_x(fs.phi, self.xgrid)
            src = self._source(E)
            if cfg.formulation == "sd":
                out[0] += self.force(E, u[1])
                out[1] += self.force(E, u[0]) - 4.0 * src
            else:
                out[0] += self.force(E, u[0]) - 2.0 * src
                out[1] += -self.force(E, u[1]) + 2.0 * src
        if cfg.nonlinear:
            if cfg.formulation == "sd":
                g11, g12 = self.op.gamma_star_many(u[0], [u[0], u[1]])
                out[0] += g11
                out[1] += g12
            else:
                gp, gm = self.op.gamma_star_many(u[0] + u[1], [u[0], u[1]])
                out[0] += gp
                out[1] += gm
        return out

    def transport_rhs(self, u) -> np.ndarray:
        """Spectral ``-v . grad_x u``."""
        out = np.zeros_like(u)
        xs = self.xgrid
        for d in range(xs.dim):
            alpha = [0] * xs.dim
            alpha[d] = 1
            for c in range(2):
                out[c] -= self.vgrid.v[d] * x_derivative(u[c], xs, alpha)
        return out

    def rhs(self, u) -> np.ndarray:
        """Full time derivative of the phase array ``u``."""
        out = self.explicit(u)
        if self.cfg.transport:
            out += self.transport_rhs(u)
        if self.cfg.collisions:
            out -= self._collide(u, None)
        return out

    # -- free streaming ----------------------------------------------------

    @property
    def _x_axes(self):
        return tuple(range(1, 1 + self.xgrid.dim))

    def _kv(self):
        """``k . v`` on the half-spectrum layout, zero-padded marker for Nyquist modes."""
        if "kv" not in self._phase:
            xs, vg = self.xgrid, self.vgrid
            dim, n = xs.dim, xs.n_per_axis
            k = [2.0 * np.pi * np.fft.fftfreq(n, d=xs.spacing)] * (dim - 1)
            k.append(2.0 * np.pi * np.fft.rfftfreq(n, d=xs.spacing))
            kv = np.zeros(tuple(len(kk) for kk in k) + vg.shape)
            keep = np.ones(tuple(len(kk) for kk in k) + (1, 1, 1), dtype=bool)
            for d in range(dim):
                shape = [1] * dim + [1, 1, 1]
                shape[d] = len(k[d])
                vshape = [1] * dim + [1, 1, 1]
                vshape[dim + d] = vg.n_per_axis
                kv = kv + k[d].reshape(shape) * vg.axis.reshape(vshape)
                if n % 2 == 0:
                    # Nyquist content of odd operators is not representable on a real grid
                    nyq = np.zeros(len(k[d]), dtype=bool)
                    nyq[n // 2 if d < dim - 1 else -1] = True
                    keep = keep & ~nyq.reshape(shape)
            self._phase["kv"] = (kv, keep)
        return self._phase["kv"]

    def _cayley(self, tau):
        """Multipliers of ``(I + tau/2 T)`` and ``(I - tau/2 T)^{-1}`` with ``T = -v . grad_x``."""
        key = ("cayley", round(tau, 15))
        if key not in self._phase:
            kv, keep = self._kv()
            z = 0.5j * tau * kv
            fwd = np.where(keep, 1.0 - z, 0.0)
            inv = np.where(keep, 1.0 / (1.0 + z), 0.0)
            self._phase[key] = (fwd, inv)
        return self._phase[key]

    def _fft(self, u):
        return np.fft.rfftn(u, axes=self._x_axes)

    def _ifft(self, uh):
        return np.fft.irfftn(uh, s=self.xgrid.shape, axes=self._x_axes)

    # -- Vlasov-Poisson substep --------------------------------------------

    def field_terms(self, u) -> np.ndarray:
        """Field terms only: ``E`` forcing of both components and the ``E . v sqrt(mu)`` source."""
        out = np.zeros_like(u)
        fs = self.potential(u)
        E = grad_x(fs.phi, self.xgrid)
        src = self._source(E)
        if self.cfg.formulation == "sd":
            out[0] += self.force(E, u[1])
            out[1] += self.force(E, u[0]) - 4.0 * src
        else:
            out[0] += self.force(E, u[0]) - 2.0 * src
            out[1] += -self.force(E, u[1]) + 2.0 * src
        return out

    def gamma_terms(self, u) -> np.ndarray:
        if self.cfg.formulation == "sd":
            return np.stack(self.op.gamma_star_many(u[0], [u[0], u[1]]))
        return np.stack(self.op.gamma_star_many(u[0] + u[1], [u[0], u[1]]))

    def vp_step(self, u, dt, G=None, tol: float = 1e-14, maxiter: int = 60) -> tuple[np.ndarray, int]:
        """Implicit midpoint over ``dt`` for transport and field terms plus a frozen source ``G``.

        Transport is inverted exactly in Fourier space; the field terms are
        resolved by fixed-point iteration.  At convergence the step conserves
        ``int |v|^2 sqrt(mu) f1 + ||grad phi||^2`` and satisfies the discrete
        continuity equation exactly.
        """
        cfg = self.cfg
        if not cfg.transport and not cfg.field and G is None:
            return u, 0
        if cfg.transport:
            fwd, inv = self._cayley(dt)
        else:
            fwd = inv = 1.0
        to_h = self._fft if cfg.transport else (lambda a: a)
        from_h = self._ifft if cfg.transport else (lambda a: a)
        base = fwd * to_h(u)
        if G is not None:
            base = base + dt * to_h(G)
        new = from_h(inv * base)
        if not cfg.field:
            return new, 0
        scale = max(float(np.max(np.abs(u))), 1e-300)
        for it in range(1, maxiter + 1):
            N = self.field_terms(0.5 * (u + new))
            upd = from_h(inv * (base + dt * to_h(N)))
            change = float(np.max(np.abs(upd - new)))
            new = upd
            if change <= tol * scale:
                return new, it
        raise StepFailure(f"field fixed-point iteration did not converge in {maxiter} iterations",
                          {"last_change": change, "scale": scale})

    def explicit_step(self, u, dt, prev_increment=None) -> tuple[np.ndarray, np.ndarray]:
        """Transport, field and ``Gamma`` over ``dt``; returns the new state and its increment.

        ``Gamma`` is evaluated once at the midpoint extrapolated from the
        previous increment, which keeps the step second order.
        """
        G = None
        if self.cfg.nonlinear:
            mid = u if prev_increment is None else u + 0.5 * prev_increment
            G = self.gamma_terms(mid)
        new, self.last_vp_iterations = self.vp_step(u, dt, G)
        return new, new - u

    # -- implicit collisions -----------------------------------------------

    def _dense_step(self, tau, merged):
        """Propagator increments ``Q`` with ``R(tau) = I + Q`` (``merged`` gives ``R(tau)^2``).

        Returns one entry per collision channel (``L1``, ``L2``); each entry
        is a list of parity blocks, or a single full matrix when the operator
        is not reflection symmetric.
        """
        key = (round(tau, 15), merged)
        if key in self._dense:
            return self._dense[key]
        if merged:
            # R^2 - I = 2Q + Q^2
            self._dense[key] = [[_sym(2.0 * Q + Q @ Q) for Q in blocks] for blocks in self._dense_step(tau, False)]
            return self._dense[key]
        g = SDIRK_GAMMA
        # with M = I + g tau L: I - (1 - 2g) tau L = (1 + r) I - r M, r = (1 - 2g) / g
        r = (1.0 - 2.0 * g) / g
        mats = []
        for which in ("L1", "L2"):
            blocks = []
            for L in self._dense_blocks(which):
                Minv = _spd_inverse(np.eye(L.shape[0]) + g * tau * L)
                R = (1.0 + r) * (Minv @ Minv) - r * Minv
                R[np.diag_indices_from(R)] -= 1.0
                blocks.append(_sym(R))
            mats.append(blocks)
        self._dense[key] = mats
        return mats

    def _dense_blocks(self, which):
        key = ("blocks", which)
        if key not in self._dense:
            L = self._dense_matrix(which)
            blocks = self.parity.blocks(L)
            if blocks is None:
                log.warning("%s is not reflection symmetric to round-off; using the full matrix", which)
                blocks = [L]
            self._dense[key] = blocks
            self._dense.pop(("matrix", which))
        return self._dense[key]

    def _apply_dense(self, c, blocks):
        if len(blocks) == 1:
            N = blocks[0].shape[0]
            flat = c.reshape(-1, N)
            return c + (flat @ blocks[0]).reshape(c.shape)
        y = self.parity.forward(c)
        z = np.stack([y[..., b, :] @ Q for b, Q in enumerate(blocks)], axis=-2)
        return c + self.parity.inverse(z)

    def _dense_matrix(self, which):
        key = ("matrix", which)
        if key not in self._dense:
            N = self.vgrid.n_per_axis ** 3
            apply = self.op.apply_L1 if which == "L1" else self.op.apply_L2
            L = np.empty((N, N))
            shape = self.vgrid.shape
            chunk = 256
            for start in range(0, N, chunk):
                stop = min(N, start + chunk)
                E = np.zeros((stop - start, N))
                E[np.arange(stop - start), np.arange(start, stop)] = 1.0
                L[start:stop] = apply(E.reshape((stop - start,) + shape)).reshape(stop - start, N)
            self._dense[key] = 0.5 * (L + L.T)
        return self._dense[key]

    def collide(self, u, tau, merged=False) -> tuple[np.ndarray, int]:
        """SDIRK collision substep of length ``tau`` (twice if ``merged``)."""
        if not self.cfg.collisions or tau == 0:
            return u, 0
        if self.solver == "dense":
            Q1, Q2 = self._dense_step(tau, merged)
            if self.cfg.formulation == "sd":
                comps = [u[0], u[1]]
            else:
                comps = [u[0] + u[1], u[0] - u[1]]
            out = [self._apply_dense(c, Q) for c, Q in zip(comps, (Q1, Q2))]
            if self.cfg.formulation == "pm":
                out = [0.5 * (out[0] + out[1]), 0.5 * (out[0] - out[1])]
            return np.stack(out), 0
        iters = 0
        for _ in range(2 if merged else 1):
            u, it = self._collide_cg(u, tau)
            iters += it
        return u, iters

    def _collide_cg(self, u, tau):
        """Two-stage SDIRK for ``u' = -L u``, each stage solved for its increment by CG."""
        g = SDIRK_GAMMA

        def apply(p):
            return p + g * tau * self._collide(p, None)

        if self.cfg.formulation == "sd":
            solve = lambda b: _batched_cg(apply, b, self.cfg.implicit_tol, self.cfg.max_cg_iter, ndot=3)
        else:
            # pair systems: move the species axis next to velocity
            def apply_pm(p):
                return np.moveaxis(apply(np.moveaxis(p, -4, 0)), 0, -4)

            def solve(b):
                d, it = _batched_cg(apply_pm, np.moveaxis(b, 0, -4), self.cfg.implicit_tol,
                                    self.cfg.max_cg_iter, ndot=4)
                return np.moveaxis(d, -4, 0), it
        Lu = self._collide(u, None)
        d1, it1 = solve(-g * tau * Lu)
        y1 = u + d1
        d2, it2 = solve(-(1.0 - g) * tau * self._collide(y1, None) - g * tau * Lu)
        return u + d2, it1 + it2

    # -- full steps --------------------------------------------------------

    def advance(self, u, n_steps: int, prev_increment=None):
        """``n_steps`` Strang steps, merging adjacent collision half steps.

        Returns ``(u, implicit_iterations, last_increment)``.
        """
        dt = self.cfg.dt
        iters = 0
        if n_steps <= 0:
            return u, 0, prev_increment
        u, it = self.collide(u, 0.5 * dt)
        iters += it
        inc = prev_increment
        for k in range(n_steps):
            u, inc = self.explicit_step(u, dt, inc)
            u, it = self.collide(u, 0.5 * dt, merged=k < n_steps - 1)
            iters += it
        return u, iters, inc

    def make_state(self, t, values) -> SimState:
        pf = PhaseField(np.asarray(values, dtype=float), self.cfg.formulation)
        return SimState(t, pf, self.potential(pf.values))

    def step(self, state: SimState, n_steps: int = 1) -> tuple[SimState, StepReport]:
        """Advance ``n_steps``; the report describes the last step."""
        u0 = state.fields.values
        inc = state.increment
        if n_steps > 1:
            u0, _, inc = self.advance(u0, n_steps - 1, inc)
        u1, iters, inc = self.advance(u0, 1, inc)
        if not np.all(np.isfinite(u1)):
            raise StepFailure("non-finite values after step", {"t": state.t})
        f = self.cfg.formulation
        res = continuity_residual(difference_part(u0, f), difference_part(u1, f), self.cfg.dt,
                                  self.vgrid, self.xgrid)
        rep = StepReport(iters, res, min_F(u1, f, self.vgrid),
                         self.cfg.dt * (self.vgrid.cutoff - 0.5 * self.vgrid.spacing) / self.xgrid.spacing)
        new = self.make_state(state.t + n_steps * self.cfg.dt, u1)
        new.increment = inc
        return new, rep


def rhs(state: SimState, sim: Simulator) -> PhaseField:
    """Time derivative of ``state`` (potential recomputed from the difference part)."""
    if state.fields.tag != sim.cfg.formulation:
        raise ValueError(f"state is {state.fields.tag!r} but the scheme expects {sim.cfg.formulation!r}")
    return PhaseField(sim.rhs(state.fields.values), state.fields.tag)


def step_imex(state: SimState, sim: Simulator) -> tuple[SimState, StepReport]:
    if state.fields.tag != sim.cfg.formulation:
        raise ValueError(f"state is {state.fields.tag!r} but the scheme expects {sim.cfg.formulation!r}")
    return sim.step(state)


@dataclass
class RunResult:
    times: list
    snapshots: list
    reports: list
    series: dict = dc_field(default_factory=dict)
    error: str | None = None


def run(sim: Simulator, state: SimState, sample_every: int = 1,
        observer: Callable[[SimState, StepReport | None], dict] | None = None,
        keep_snapshots: bool = False) -> RunResult:
    """Integrate to ``t_end``, sampling every ``sample_every`` steps.

    ``observer(state, report)`` returns a dict of channel values per sample.
    A step failure stops the run; the partial result carries the message.
    """
    n_total = sim.cfg.n_steps
    res = RunResult([], [], [])

    def record(st, rep):
        res.times.append(st.t)
        res.reports.append(rep)
        if keep_snapshots:
            res.snapshots.append(st.fields.values.copy())
        if observer is not None:
            for k, v in observer(st, rep).items():
                res.series.setdefault(k, []).append(v)

    record(state, None)
    done = 0
    while done < n_total:
        k = min(sample_every, n_total - done)
        try:
            state, rep = sim.step(state, k)
        except StepFailure as exc:
            log.error("step failure at t=%.6g: %s", state.t, exc)
            res.error = str(exc)
            break
        done += k
        state = replace(state, t=done * sim.cfg.dt)
        record(state, rep)
    res.final = state
    return res


# ---------------------------------------------------------------------------
# initial data

FAMILIES = ("a", "b", "c")


def _profiles(vgrid: VelocityGrid):
    v2 = vgrid.v2
    temp = 0.5 * (v2 - 1.5)
    aniso = vgrid.v[0] ** 2 - v2 / 3.0
    return temp, aniso


def _family(kind: str, vgrid: VelocityGrid, xgrid: SpatialGrid):
    if kind not in FAMILIES:
        raise ValueError(f"unknown initial-data family {kind!r}; choose from {FAMILIES}")
    temp, aniso = _profiles(vgrid)
    one = np.ones(vgrid.shape)
    if kind == "a":
        p1, p2 = 2.0 * (temp + aniso), 2.0 * one
    elif kind == "b":
        p1, p2 = 0.0 * one, 2.0 * (one + aniso)
    else:
        p1, p2 = 2.0 * (temp + aniso), 0.0 * one
    xprof = np.cos(2.0 * np.pi * xgrid.x[0] / xgrid.box_length)
    xprof = xprof.reshape(xgrid.shape + (1, 1, 1))
    pp, pm = 0.5 * (p1 + p2), 0.5 * (p1 - p2)
    # F_pm = mu (1 + eps cos p_pm) >= 0 iff eps max(-cos p_pm) <= 1
    worst = max(float(np.max(-(xprof * pp[None]))), float(np.max(-(xprof * pm[None]))), 0.0)
    eps_max = np.inf if worst == 0 else 1.0 / worst
    return xprof, p1, p2, eps_max


def initial_data(kind: str, epsilon: float, vgrid: VelocityGrid, xgrid: SpatialGrid,
                 formulation: str = "sd", check_positivity: bool = True) -> PhaseField:
    """Built-in initial perturbations ``epsilon cos(2 pi x_1 / L) p_pm(v) sqrt(mu)``.

    * ``a``: both species, ``f1`` with a temperature (hydrodynamic) and an
      anisotropic (microscopic) part, ``f2`` with a charge part;
    * ``b``: ``f2`` only;
    * ``c``: ``f1`` only, so ``f2 = 0`` exactly.

    The ``cos`` profile has zero mean, so the data are globally neutral.

    Raises
    ------
    PositivityError
        If ``mu + sqrt(mu) f_pm < 0`` somewhere; carries the largest admissible epsilon.
    """
    if epsilon < 0 or not np.isfinite(epsilon):
        raise ValueError(f"epsilon must be finite and nonnegative, got {epsilon}")
    xprof, p1, p2, eps_max = _family(kind, vgrid, xgrid)
    if check_positivity and epsilon > eps_max:
        raise PositivityError(
            f"epsilon={epsilon:g} violates positivity; the largest admissible value is {eps_max:.6g}", eps_max)
    sm = vgrid.sqrt_mu
    f1 = epsilon * xprof * (p1 * sm)
    f2 = epsilon * xprof * (p2 * sm)
    pf = PhaseField(np.stack([f1, f2]), "sd")
    return pf if formulation == "sd" else pf.as_pm()


def max_admissible_epsilon(kind: str, vgrid: VelocityGrid, xgrid: SpatialGrid) -> float:
    """Largest ``epsilon`` keeping ``F_pm >= 0`` on the grid for family ``kind``."""
    return _family(kind, vgrid, xgrid)[3]
