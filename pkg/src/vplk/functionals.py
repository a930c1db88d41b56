"""Energy and dissipation functionals, macro-micro norms, ledgers and decay regression.

Phase pairs ``f`` are ``(f+, f-)`` arrays of shape ``(2, *xshape, n, n, n)``.
Spatial ``||grad^k g||^2`` uses the tensor convention
``sum_xi |xi|^{2k} |g_hat(xi)|^2`` (Parseval normalised).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .field import grad_x
from .grid import (
    SpatialGrid,
    VelocityGrid,
    WeightSpec,
    lp_x_norm,
    multi_indices,
    v_derivative,
    weight,
    x_derivative,
)
from .landau import LandauOperator


@dataclass
class FunctionalSeries:
    """Time-stamped named channels."""

    times: np.ndarray
    channels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for name, vals in self.channels.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != self.times.shape:
                raise ValueError(f"channel {name!r} has {vals.size} samples, expected {self.times.size}")
            self.channels[name] = vals

    def __getitem__(self, name):
        return self.channels[name]


@dataclass
class DecayFit:
    model: str
    params: dict
    residual: float
    window: tuple

    @property
    def rate(self) -> float:
        """Signed decay rate: ``-exponent`` or ``c``; negative for a growing channel."""
        return -self.params["exponent"] if self.model == "power" else self.params["rate"]


class Context:
    """Grids plus the collision operator used for sigma norms and projections."""

    def __init__(self, vgrid: VelocityGrid, xgrid: SpatialGrid, op: LandauOperator | None = None):
        self.vgrid, self.xgrid = vgrid, xgrid
        self.op = op if op is not None else LandauOperator(vgrid)
        self.w = vgrid.cell_weight * xgrid.cell_volume

    def l2sq(self, g, weight_values=None) -> float:
        g = np.asarray(g)
        if weight_values is not None:
            g = g * weight_values
        return float(self.w * np.sum(g * g))

    def sigma_sq(self, g, spec: WeightSpec | None = None) -> float:
        """``sum_x ||g(x)||_{sigma,w}^2 dx`` over any leading axes."""
        op = self.op
        if spec is None:
            vals = op.sigma_norm_sq(g)
        else:
            vals = op.sigma_norm_sq(g, weight_nodes=weight(spec, self.vgrid.v),
                                   weight_cubes=weight(spec, self.vgrid.dual_v))
        return float(self.xgrid.cell_volume * np.sum(vals))

    def grad_k_multipliers(self, k: int) -> np.ndarray:
        return self.xgrid.k2 ** k

    def grad_k_sq(self, g, k: int, sigma: bool = False) -> float:
        """``||grad_x^k g||^2`` in L2 or in the sigma norm; ``g`` has spatial axes first."""
        g = np.asarray(g, dtype=float)
        if k == 0:
            return self.sigma_sq(g) if sigma else self.l2sq(g)
        xs = self.xgrid
        if not sigma:
            axes = tuple(range(xs.dim))
            gh = np.fft.fftn(g, axes=axes)
            mult = (xs.k2 ** k).reshape(xs.shape + (1,) * (g.ndim - xs.dim))
            npts = np.prod(xs.shape)
            return float(self.vgrid.cell_weight * xs.volume / npts ** 2 * np.sum(mult * np.abs(gh) ** 2))
        total = 0.0
        for alpha in multi_indices(k, xs.dim, velocity=False):
            if alpha.order != k:
                continue
            a = alpha.alpha
            coef = math.factorial(k) / math.prod(math.factorial(i) for i in a)
            total += coef * self.sigma_sq(x_derivative(g, xs, a))
        return total


def _pair_check(f):
    f = np.asarray(f, dtype=float)
    if f.shape[0] != 2:
        raise ValueError("expected a (f+, f-) pair along the first axis")
    return f


def _grad_phi_sq(phi, ctx: Context) -> float:
    if phi is None:
        return 0.0
    return lp_x_norm(np.sqrt(np.sum(grad_x(phi, ctx.xgrid) ** 2, axis=0)), ctx.xgrid, 2) ** 2


def _deriv(f, alpha, beta, ctx: Context):
    if f.ndim == ctx.xgrid.dim + 4:
        return np.stack([_deriv(c, alpha, beta, ctx) for c in f])
    g = x_derivative(f, ctx.xgrid, alpha) if sum(alpha) else f
    return v_derivative(g, ctx.vgrid, beta) if sum(beta) else g


def _check_lm(m: int, l: float, q: float):
    if m < 0:
        raise ValueError("m must be nonnegative")
    if l < m:
        raise ValueError(f"weight index l={l} must be at least m={m}")
    if q < 0:
        raise ValueError("q must be nonnegative")


def energy_E(m: int, l: float, q: float, f, phi, ctx: Context) -> float:
    """``sum_{|a|+|b|<=m} ||d^a_b f||_{2,w(a,b)}^2 + ||grad phi||_2^2``."""
    _check_lm(m, l, q)
    f = _pair_check(f)
    total = 0.0
    for mi in multi_indices(m, ctx.xgrid.dim):
        w = weight(WeightSpec(l, q, sum(mi.alpha), sum(mi.beta)), ctx.vgrid.v)
        for c in range(2):
            total += ctx.l2sq(_deriv(f[c], mi.alpha, mi.beta, ctx), w)
    return total + _grad_phi_sq(phi, ctx)


def _pair_axis_last(f):
    # (2, *xs, n, n, n) -> (*xs, 2, n, n, n) for the pair projection
    return np.moveaxis(f, 0, -4)


def macro_micro(f, ctx: Context):
    """``(P f, (I - P) f)`` for a pair in phase layout."""
    Pf, micro = ctx.op.project(_pair_axis_last(f), "P")
    return np.moveaxis(Pf, -4, 0), np.moveaxis(micro, -4, 0)


def dissipation_parts(m: int, l: float, q: float, f, phi, ctx: Context) -> dict:
    """Terms shared by the dissipation variants.

    ``core`` is ``sum ||d^a_b (I-P) f||_{sigma,w}^2 + sum_{1<=|a|<=m} ||d^a P f||^2``;
    ``grad_phi``, ``difference`` and ``macro`` are ``||grad phi||^2``,
    ``||f+ - f-||^2`` and ``||P f||^2``.
    """
    _check_lm(m, l, q)
    f = _pair_check(f)
    Pf, micro = macro_micro(f, ctx)
    core = 0.0
    for mi in multi_indices(m, ctx.xgrid.dim):
        spec = WeightSpec(l, q, sum(mi.alpha), sum(mi.beta))
        core += ctx.sigma_sq(_deriv(micro, mi.alpha, mi.beta, ctx), spec)
        if sum(mi.beta) == 0 and sum(mi.alpha) >= 1:
            core += ctx.l2sq(_deriv(Pf, mi.alpha, mi.beta, ctx))
    return {"core": core, "grad_phi": _grad_phi_sq(phi, ctx),
            "difference": ctx.l2sq(f[0] - f[1]), "macro": ctx.l2sq(Pf)}


def combine_dissipation(parts: dict, variant: str = "full") -> float:
    if variant not in ("full", "tilde", "overline"):
        raise ValueError(f"unknown dissipation variant {variant!r}")
    total = parts["core"] + parts["grad_phi"]
    if variant == "full":
        total += parts["difference"]
    elif variant == "overline":
        total += parts["macro"]
    return total


def dissipation_D(m: int, l: float, q: float, f, phi, ctx: Context, variant: str = "full") -> float:
    """Dissipation rate; ``variant`` is ``full``, ``tilde`` or ``overline``.

    ``full`` = ``sum ||d^a_b (I-P) f||_{sigma,w}^2 + sum_{1<=|a|<=m} ||d^a P f||^2
    + ||grad phi||^2 + ||f+ - f-||^2``; ``tilde`` drops the last term and
    ``overline`` adds ``||P f||^2`` to ``tilde``.
    """
    if variant not in ("full", "tilde", "overline"):
        raise ValueError(f"unknown dissipation variant {variant!r}")
    return combine_dissipation(dissipation_parts(m, l, q, f, phi, ctx), variant)


def e0l_f2(ell: int, f2, phi, ctx: Context) -> float:
    """``sum_{k<=ell} ||grad^k f2||^2 + ||grad phi||^2``."""
    return sum(ctx.grad_k_sq(f2, k) for k in range(ell + 1)) + _grad_phi_sq(phi, ctx)


def elm_f1(ell: int, m: int, f1, ctx: Context) -> float:
    """``sum_{ell<=k<=m} ||grad^k f1||^2``."""
    return sum(ctx.grad_k_sq(f1, k) for k in range(ell, m + 1))


def ledger_dissipation(ell: int, f2, phi, ctx: Context) -> float:
    """``sum_{k<=ell} ||grad^k f2||_sigma^2 + ||grad phi||^2``."""
    return sum(ctx.grad_k_sq(f2, k, sigma=True) for k in range(ell + 1)) + _grad_phi_sq(phi, ctx)


@dataclass
class LedgerRecord:
    t0: float
    t1: float
    value: float
    energy: float
    flagged: bool


def monotone_ledger(times: Sequence[float], energies: Sequence[float], dissipations: Sequence[float],
                    violation_tol: float = 1e-8) -> list[LedgerRecord]:
    """Per interval ``dE/dt + D`` with ``D`` averaged over the endpoints.

    An interval is flagged when the value exceeds ``violation_tol`` times the
    larger endpoint energy.  ``energies``/``dissipations`` are samples of
    :func:`e0l_f2` and :func:`ledger_dissipation` (or any pair of channels).
    """
    t = np.asarray(times, dtype=float)
    E = np.asarray(energies, dtype=float)
    D = np.asarray(dissipations, dtype=float)
    if not (t.shape == E.shape == D.shape):
        raise ValueError("times, energies and dissipations must have equal lengths")
    out = []
    for i in range(len(t) - 1):
        dt = t[i + 1] - t[i]
        val = (E[i + 1] - E[i]) / dt + 0.5 * (D[i] + D[i + 1])
        scale = max(E[i], E[i + 1])
        out.append(LedgerRecord(float(t[i]), float(t[i + 1]), float(val), float(scale),
                                bool(val > violation_tol * scale)))
    return out


def macro_micro_norms(f, ctx: Context, m: int = 0) -> dict:
    """``||d^a P f||_2`` and ``||d^a (I-P) f||_sigma`` for ``|a| <= m`` plus the Pythagorean check."""
    f = _pair_check(f)
    Pf, micro = macro_micro(f, ctx)
    out = {"orders": []}
    for mi in multi_indices(m, ctx.xgrid.dim, velocity=False):
        out["orders"].append({
            "alpha": list(mi.alpha),
            "macro_l2": math.sqrt(ctx.l2sq(_deriv(Pf, mi.alpha, (0, 0, 0), ctx))),
            "micro_sigma": math.sqrt(ctx.sigma_sq(_deriv(micro, mi.alpha, (0, 0, 0), ctx))),
        })
    total = ctx.l2sq(f)
    out["pythagoras_residual"] = abs(total - ctx.l2sq(Pf) - ctx.l2sq(micro)) / max(total, 1e-300)
    return out


# ---------------------------------------------------------------------------
# decay regression


class FitError(ValueError):
    pass


def fit_decay(times, values, model: str = "power", t0: float | None = None,
              t_end: float | None = None, free_power: bool = False) -> DecayFit:
    """Least-squares decay law on ``[t0, t_end]``.

    ``power``: ``log y = log A + a log(1 + t)`` (``a`` is the signed exponent).
    ``stretched_exp``: ``log y = log A - c t^p`` with ``p = 2/3`` unless
    ``free_power``.  ``t0`` defaults to 10% into the series.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if model not in ("power", "stretched_exp"):
        raise FitError(f"unknown model {model!r}")
    if t0 is None:
        t0 = t[0] + 0.1 * (t[-1] - t[0])
    if t_end is None:
        t_end = t[-1]
    sel = (t >= t0 - 1e-12) & (t <= t_end + 1e-12)
    t, y = t[sel], y[sel]
    if t.size < 10:
        raise FitError(f"need at least 10 samples in the fit window, got {t.size}")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise FitError("fit window contains non-positive or non-finite values")
    ly = np.log(y)
    if model == "power":
        X = np.stack([np.ones_like(t), np.log1p(t)], axis=1)
        coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
        res = float(np.sqrt(np.mean((X @ coef - ly) ** 2)))
        return DecayFit("power", {"amplitude": float(np.exp(coef[0])), "exponent": float(coef[1])},
                        res, (float(t[0]), float(t[-1])))
    if not free_power:
        X = np.stack([np.ones_like(t), -t ** (2.0 / 3.0)], axis=1)
        coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
        res = float(np.sqrt(np.mean((X @ coef - ly) ** 2)))
        return DecayFit("stretched_exp", {"amplitude": float(np.exp(coef[0])), "rate": float(coef[1]),
                                          "power": 2.0 / 3.0}, res, (float(t[0]), float(t[-1])))
    from scipy.optimize import curve_fit

    def model_fn(tt, la, c, p):
        return la - c * tt ** p

    p0 = fit_decay(t, y, "stretched_exp", t0=t[0]).params
    popt, _ = curve_fit(model_fn, t, ly, p0=[math.log(p0["amplitude"]), p0["rate"], 2.0 / 3.0])
    res = float(np.sqrt(np.mean((model_fn(t, *popt) - ly) ** 2)))
    return DecayFit("stretched_exp", {"amplitude": float(np.exp(popt[0])), "rate": float(popt[1]),
                                      "power": float(popt[2])}, res, (float(t[0]), float(t[-1])))


# ---------------------------------------------------------------------------
# interpolation checks


def moment_interp_check(samples, l: float, ell: float, vgrid: VelocityGrid,
                        op: LandauOperator | None = None) -> dict:
    """Velocity-moment Hoelder check on velocity functions ``samples`` (leading batch axis).

    With ``A = 4(l - ell)`` and ``theta = A / (A + 1)`` reports
    ``max ||g|| / (||<v>^{-1/2} g||^theta ||<v>^A g||^{1-theta})`` (at most 1
    exactly) and, when ``op`` is given, the same ratio with the sigma norm.
    """
    A = 4.0 * (l - ell)
    if A <= 0:
        raise ValueError("need l > ell")
    theta = A / (A + 1.0)
    X = np.asarray(samples, dtype=float)
    jv = vgrid.japanese
    hw = vgrid.cell_weight
    axes = (-3, -2, -1)
    n2 = np.sqrt(hw * np.sum(X ** 2, axis=axes))
    lo = np.sqrt(hw * np.sum(X ** 2 / jv, axis=axes))
    hi = np.sqrt(hw * np.sum((jv ** A * X) ** 2, axis=axes))
    nz = n2 > 0
    ratio = np.zeros_like(n2)
    ratio[nz] = n2[nz] / (lo[nz] ** theta * hi[nz] ** (1 - theta))
    out = {"theta": theta, "max_ratio": float(ratio.max()) if ratio.size else 0.0}
    if op is not None:
        sg = np.sqrt(op.sigma_norm_sq(X))
        rs = np.zeros_like(n2)
        rs[nz] = n2[nz] / (sg[nz] ** theta * hi[nz] ** (1 - theta))
        out["max_ratio_sigma"] = float(rs.max()) if rs.size else 0.0
    return out


def band_limited_fields(xgrid: SpatialGrid, n_samples: int, seed: int = 0, kmax: int = 4) -> np.ndarray:
    """Random real trigonometric polynomials with integer mode numbers ``|m_i| <= kmax``.

    The coefficients depend on ``seed`` and ``kmax`` only, so the same
    continuum functions are sampled on every grid.
    """
    rng = np.random.default_rng(seed)
    dim = xgrid.dim
    modes = [m for m in np.ndindex(*([2 * kmax + 1] * dim))]
    modes = [tuple(int(i) - kmax for i in m) for m in modes]
    coef = rng.standard_normal((n_samples, len(modes), 2))
    out = np.zeros((n_samples,) + xgrid.shape)
    x = xgrid.x
    for j, m in enumerate(modes):
        phase = sum(2.0 * np.pi * m[d] * x[d] / xgrid.box_length for d in range(dim))
        out += coef[:, j, 0, None] * np.cos(phase)[None] + coef[:, j, 1, None] * np.sin(phase)[None]
    return out


def _grad_k_lp(g, xgrid: SpatialGrid, k: int, p) -> float:
    """``|| |grad^k g| ||_p`` with the tensor norm of all order-k derivatives."""
    if k == 0:
        return lp_x_norm(g, xgrid, p)
    acc = np.zeros(xgrid.shape)
    for alpha in multi_indices(k, xgrid.dim, velocity=False):
        if alpha.order != k:
            continue
        coef = math.factorial(k) / math.prod(math.factorial(i) for i in alpha.alpha)
        acc += coef * x_derivative(g, xgrid, alpha.alpha) ** 2
    return lp_x_norm(np.sqrt(acc), xgrid, p)


def gn_theta(k: int, ell: int, m: int, p: float, dim: int) -> float:
    """Exponent ``theta`` in ``||grad^k g||_p <~ ||grad^ell g||_2^theta ||grad^m g||_2^{1-theta}``."""
    # scaling: k + dim(1/2 - 1/p) = ell theta + m (1 - theta)
    return (m - k - dim * (0.5 - 1.0 / p)) / (m - ell)


def gagliardo_nirenberg_constant(xgrid: SpatialGrid, k: int, ell: int, m: int, p: float,
                                 n_samples: int = 200, seed: int = 0, kmax: int = 4) -> float:
    """``sup ||grad^k g||_p / (||grad^ell g||_2^theta ||grad^m g||_2^{1-theta})`` over zero-mean samples."""
    theta = gn_theta(k, ell, m, p, xgrid.dim)
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"(k, ell, m, p) = {(k, ell, m, p)} gives theta={theta} outside [0, 1]")
    G = band_limited_fields(xgrid, n_samples, seed, kmax)
    G = G - G.mean(axis=tuple(range(1, G.ndim)), keepdims=True)
    best = 0.0
    for g in G:
        num = _grad_k_lp(g, xgrid, k, p)
        den = _grad_k_lp(g, xgrid, ell, 2) ** theta * _grad_k_lp(g, xgrid, m, 2) ** (1 - theta)
        if den > 0:
            best = max(best, num / den)
    return best
