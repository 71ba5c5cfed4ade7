"""Reduction of the bulk energy to a surface-gradient density.

For W(F) = h(|det F|) + |F|^p the infimum over the third column is a
one-dimensional problem: with c the cross product of the two columns of
xi and a = |c| > 0, the determinant of (xi | zeta) is <c, zeta>, so only
the component of zeta along c/a matters and any tangential part just
inflates the norm.  The reduced density is

    w0(xi) = min_{t >= 0}  h(t a) + (|xi|^2 + t^2)^{p/2},

+inf exactly when a = 0.  The minimization is a bracketed golden
section in log t plus a parabolic polish; an independent 3D grid oracle
over the third column cross-checks the reduction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy_models import EnergyModel
from .tensor_kernel import ExtValue, INFINITE, as_mat32, wedge

__all__ = [
    "WEDGE_FLOOR",
    "ReducedDensity",
    "w0_closed_form",
    "w0_batch",
    "w0_bruteforce",
    "w0_growth_constant",
]

# below this column cross-product norm a 3x2 gradient counts as rank deficient
WEDGE_FLOOR = 1e-14

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_min_t(model: EnergyModel, a: np.ndarray, q: np.ndarray,
                  iters: int = 60, polish: int = 1):
    """Minimize h(t a) + (q + t^2)^{p/2} over t > 0, lanewise.

    a, q are equal-length 1D arrays with a > 0.  Runs in log t: the
    substitution preserves unimodality and keeps the barrier end of the
    bracket representable.  Returns (t_min, value) arrays.
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)

    def geval(s):
        t = np.exp(s)
        return model.barrier.values(t * a) + model.norm_power(q + t * t)

    # bracket: coercivity caps the minimizer by the t = 1 probe value,
    # the barrier pushes it far above exp(s_lo)
    g1 = model.barrier.values(a) + model.norm_power(q + 1.0)
    s_hi = np.log(g1 ** (1.0 / model.p) + 1.0)
    s_lo = -40.0 - np.log1p(a)

    x1, x4 = s_lo, s_hi
    d = _INVPHI * (x4 - x1)
    x2, x3 = x4 - d, x1 + d
    f2, f3 = geval(x2), geval(x3)
    for _ in range(iters):
        left = f2 < f3
        x4 = np.where(left, x3, x4)
        x1 = np.where(left, x1, x2)
        d = _INVPHI * (x4 - x1)
        x2, x3 = x4 - d, x1 + d
        f2, f3 = geval(x2), geval(x3)

    left = f2 < f3
    sm = np.where(left, x2, x3)
    fm = np.where(left, f2, f3)
    for _ in range(polish):
        f1, f4 = geval(x1), geval(x4)
        num = (sm - x1) ** 2 * (fm - f4) - (sm - x4) ** 2 * (fm - f1)
        den = (sm - x1) * (fm - f4) - (sm - x4) * (fm - f1)
        with np.errstate(invalid="ignore", divide="ignore"):
            sp = sm - 0.5 * num / den
        sp = np.where(np.isfinite(sp), np.clip(sp, x1, x4), sm)
        fp = geval(sp)
        better = fp < fm
        sm = np.where(better, sp, sm)
        fm = np.where(better, fp, fm)

    return np.exp(sm), fm


def w0_closed_form(model: EnergyModel, xi, *, return_witness: bool = False):
    """Reduced density at one surface gradient.

    Returns an ExtValue, or (ExtValue, zeta) with the minimizing third
    column when return_witness is set (zeta is None at +inf).
    """
    xi = as_mat32(xi)
    c = wedge(xi)
    a = float(np.linalg.norm(c))
    if a <= WEDGE_FLOOR:
        return (INFINITE, None) if return_witness else INFINITE
    q = float(np.sum(xi * xi))
    t, val = _golden_min_t(model, np.array([a]), np.array([q]), iters=80, polish=2)
    value = ExtValue(float(val[0]))
    if not return_witness:
        return value
    return value, float(t[0]) * c / a


def w0_batch(model: EnergyModel, xis: np.ndarray, iters: int = 48) -> np.ndarray:
    """Reduced density over a stack (N, 3, 2), as floats with +inf."""
    xis = np.asarray(xis, dtype=float).reshape(-1, 3, 2)
    u = xis[:, :, 0]
    v = xis[:, :, 1]
    c = np.stack([
        u[:, 1] * v[:, 2] - u[:, 2] * v[:, 1],
        u[:, 2] * v[:, 0] - u[:, 0] * v[:, 2],
        u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0],
    ], axis=1)
    a = np.linalg.norm(c, axis=1)
    q = np.sum(xis * xis, axis=(1, 2))
    out = np.full(xis.shape[0], np.inf)
    ok = a > WEDGE_FLOOR
    if np.any(ok):
        _, val = _golden_min_t(model, a[ok], q[ok], iters=iters)
        out[ok] = val
    return out


@dataclass(frozen=True)
class ReducedDensity:
    """Callable wrapper for the reduced density of one model."""

    model: EnergyModel

    def __call__(self, xi) -> ExtValue:
        return w0_closed_form(self.model, xi)

    def batch(self, xis: np.ndarray) -> np.ndarray:
        return w0_batch(self.model, xis)

    def minimizer(self, xi):
        return w0_closed_form(self.model, xi, return_witness=True)

    def floor(self, xi) -> float:
        """Exact lower bound |xi|^p.

        Holds pointwise because the fiber penalty is nonnegative, and it
        survives any convex splitting of xi, so lamination searches may
        clamp their estimates to it without losing soundness.
        """
        m = as_mat32(xi)
        return float(np.sum(m * m) ** (self.model.p / 2.0))


def _sharp_radius(w_probe: float, q: float, coercivity: float, p: float) -> float:
    """Any zeta with W(xi|zeta) <= w_probe has |zeta| <= this radius.

    From W >= coercivity * (|xi|^2 + |zeta|^2)^{p/2}; strictly positive
    because the probe itself is feasible.
    """
    bound = (w_probe / coercivity) ** (2.0 / p) - q
    return float(np.sqrt(max(bound, 0.0)))


def w0_bruteforce(w, xi, grid_n: int, *, coercivity: float | None = None,
                  p: float | None = None) -> ExtValue:
    """Grid oracle: min of W(xi|zeta) over a uniform grid in a ball.

    ``w`` is either an EnergyModel (fast vectorized path) or a callable
    ``(xi, zeta) -> float`` returning +inf on singular arguments.  The
    ball radius comes from coercivity and a fixed probe scan along the
    fiber normal, so it provably contains every minimizer; the grid is
    the restriction of linspace(-R, R, grid_n)^3 to the ball, hence
    nested under grid_n -> 2*(grid_n-1)+1 refinement.
    """
    xi = as_mat32(xi)
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")

    is_model = isinstance(w, EnergyModel)
    if is_model:
        coercivity = w.coercivity
        p = w.p
    elif coercivity is None or p is None:
        raise ValueError("coercivity and p are required for a bare evaluator")

    c = wedge(xi)
    a = float(np.linalg.norm(c))
    q = float(np.sum(xi * xi))

    if is_model and a <= WEDGE_FLOOR:
        # the determinant <c, zeta> vanishes identically
        return INFINITE

    # fixed probe scan, independent of the closed-form path
    if a > WEDGE_FLOOR:
        probe_dirs = (c / a)[None, :]
    else:
        probe_dirs = np.eye(3)
    ts = np.geomspace(1e-2, 1e2, 17)
    w_best = np.inf
    for d in probe_dirs:
        for t in ts:
            val = (w.third_column_values(xi, (t * d)[None, :])[0] if is_model
                   else float(w(xi, t * d)))
            w_best = min(w_best, val)
    if not np.isfinite(w_best):
        return INFINITE

    R = _sharp_radius(w_best, q, coercivity, p)
    axes = np.linspace(-R, R, grid_n)

    if is_model:
        cx, cy, cz = c
        sq = axes * axes
        rad_tol = R * R * (1.0 + 1e-12)
        best = np.inf
        block = max(1, 2_000_000 // (grid_n * grid_n))
        for i0 in range(0, grid_n, block):
            i1 = min(i0 + block, grid_n)
            D = (cx * axes[i0:i1, None, None] + cy * axes[None, :, None]
                 + cz * axes[None, None, :])
            S = (sq[i0:i1, None, None] + sq[None, :, None]
                 + sq[None, None, :])
            V = w.barrier.values(np.abs(D)) + w.norm_power(q + S)
            V = np.where(S <= rad_tol, V, np.inf)
            best = min(best, float(V.min()))
    else:
        best = np.inf
        rad_tol = R * R * (1.0 + 1e-12)
        for zx in axes:
            for zy in axes:
                for zz in axes:
                    if zx * zx + zy * zy + zz * zz > rad_tol:
                        continue
                    val = float(w(xi, np.array([zx, zy, zz])))
                    if val < best:
                        best = val

    if not np.isfinite(best):
        return INFINITE
    return ExtValue(best)


def w0_growth_constant(model: EnergyModel, delta: float) -> float:
    """Constant cbar with w0(xi) <= cbar*(1 + |xi|^p) whenever the wedge
    norm is at least delta.

    Witness: the unit fiber normal gives w0 <= h(a) + (|xi|^2 + 1)^{p/2}
    <= r(delta) + max(1, 2^{p/2-1}) * (1 + |xi|^p).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    return model.barrier.plateau(delta) + max(1.0, 2.0 ** (model.p / 2.0 - 1.0))
