"""Continuous out-of-plane director fields for piecewise-affine membranes.

A piecewise-affine map with full-rank cell gradients admits one shared
direction whose determinant against every cell gradient is bounded away
from zero. Pinning that sign per cell defines convex constraint sets in
which each cell minimizes the bulk energy over its third column, and a
distance-based blend of the shared direction with the per-cell minimizers
yields a continuous director whose energy integral converges down to the
integral of the reduced density as the constraint index and the blend
sharpness grow.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .energy_models import EnergyModel
from .fiber_reduction import WEDGE_FLOOR
from .pw_affine import PwAffineField
from .quadrature import integrate_adaptive
from .tensor_kernel import ExtValue, as_mat32

__all__ = [
    "InfeasibleError",
    "feasible_normal",
    "cell_min_constrained",
    "DirectorAssignment",
    "build_assignment",
    "cellwise_energy",
    "BlendedDirector",
    "blended_director",
    "nirf_value",
]

_ANGULAR_TOL = 1e-6


class InfeasibleError(RuntimeError):
    """No admissible direction or constraint set could be produced."""


# ---------------------------------------------------------------------------
# shared feasible direction

def _fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    z = 1.0 - (2.0 * k + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _icosahedron() -> np.ndarray:
    g = (1.0 + math.sqrt(5.0)) / 2.0
    pts = []
    for a in (-1.0, 1.0):
        for b in (-g, g):
            pts += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    arr = np.array(pts)
    return arr / np.linalg.norm(arr, axis=1)[:, None]


def _axes() -> np.ndarray:
    eye = np.eye(3)
    return np.concatenate([eye, -eye])


def _cap(center: np.ndarray, radius: float, n: int) -> np.ndarray:
    """Deterministic spiral of directions within an angular cap."""
    e = np.zeros(3)
    e[int(np.argmin(np.abs(center)))] = 1.0
    u = np.cross(center, e)
    u /= np.linalg.norm(u)
    w = np.cross(center, u)
    k = np.arange(n, dtype=float)
    theta = radius * np.sqrt((k + 1.0) / n)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    return (np.cos(theta)[:, None] * center
            + (np.sin(theta) * np.cos(phi))[:, None] * u
            + (np.sin(theta) * np.sin(phi))[:, None] * w)


def _cell_crosses(cells) -> np.ndarray:
    grads = np.asarray([as_mat32(c) for c in cells], dtype=float)
    crosses = np.cross(grads[:, :, 0], grads[:, :, 1])
    norms = np.linalg.norm(crosses, axis=1)
    if np.any(norms <= WEDGE_FLOOR):
        bad = int(np.argmin(norms))
        raise ValueError(
            f"cell {bad} has rank-deficient gradient; "
            "a full-rank plane requires independent columns")
    return crosses


def feasible_normal(cells) -> tuple[np.ndarray, int, np.ndarray]:
    """Shared direction with a certified determinant margin on every cell.

    Scans a deterministic sequence of unit vectors (coordinate axes,
    icosahedron vertices, Fibonacci spheres, then spiral refinement around
    the best cap) and keeps the direction maximizing the smallest
    unsigned determinant. Directions closer than the angular tolerance to
    any cell's degeneracy plane are rejected outright.

    Returns (direction, index, signs) where index is the smallest integer
    j with min_i |det| >= 1/j and signs holds the per-cell determinant
    signs at the returned direction.
    """
    crosses = _cell_crosses(cells)
    unit = crosses / np.linalg.norm(crosses, axis=1)[:, None]

    best_margin = -1.0
    best = None

    def consider(batch: np.ndarray):
        nonlocal best_margin, best
        dots = batch @ crosses.T
        angular = np.abs(batch @ unit.T).min(axis=1)
        margin = np.abs(dots).min(axis=1)
        margin[angular < _ANGULAR_TOL] = -1.0
        k = int(np.argmax(margin))
        if margin[k] > best_margin:
            best_margin = float(margin[k])
            best = batch[k]

    consider(_axes())
    consider(_icosahedron())
    for n in (64, 256, 1024):
        consider(_fibonacci_sphere(n))
    if best is None:
        raise InfeasibleError(
            "no direction clears the angular tolerance on all cells")
    radius = 0.3
    for _ in range(4):
        consider(_cap(best, radius, 128))
        radius /= 3.0

    dets = crosses @ best
    j_v = max(1, math.ceil(1.0 / best_margin))
    while 1.0 / j_v > best_margin:
        j_v += 1
    return best, j_v, np.sign(dets).astype(int)


# ---------------------------------------------------------------------------
# constrained per-cell minimization

def _fiber_argmin(model: EnergyModel, a: float, sq: float) -> float:
    """Unconstrained minimizer of h(t a) + (sq + t^2)^(p/2) over t > 0.

    The objective falls from +inf, crosses its single stationary point,
    and rises like t^p, so a sign bisection on the derivative converges
    to machine precision.
    """
    h = model.barrier
    p = model.p

    def slope(t: float) -> float:
        return (a * float(h.derivative(np.array([t * a]))[0])
                + p * t * (sq + t * t) ** (p / 2.0 - 1.0))

    lo, hi = 1e-12, 1.0
    while slope(hi) < 0.0:
        hi *= 2.0
        if hi > 1e12:
            raise InfeasibleError("fiber objective has no finite minimizer")
    while slope(lo) > 0.0:
        lo /= 2.0
        if lo < 1e-300:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if slope(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cell_min_constrained(model: EnergyModel, xi, sign: int,
                         j: int) -> tuple[float, np.ndarray]:
    """Minimum of the bulk energy over third columns with a pinned sign.

    The constraint set is {zeta : sign * det(xi|zeta) >= 1/j}. Splitting
    zeta along the cell normal shows the tangential part only inflates
    |zeta|, so the problem is one-dimensional in the normal coordinate t
    with the constraint t >= 1/(j a). Returns the value and a minimizer.
    """
    if j < 1:
        raise ValueError("constraint index must be >= 1")
    if sign not in (-1, 1):
        raise ValueError("sign must be -1 or +1")
    m = as_mat32(xi)
    cross = np.cross(m[:, 0], m[:, 1])
    a = float(np.linalg.norm(cross))
    if a <= WEDGE_FLOOR:
        raise ValueError("constrained minimization needs a full-rank cell")
    sq = float(np.sum(m * m))

    t_star = _fiber_argmin(model, a, sq)
    t = max(t_star, 1.0 / (j * a))
    value = float(model.barrier(t * a)) + (sq + t * t) ** (model.p / 2.0)
    zeta = (sign * t / a) * cross
    return value, zeta


# ---------------------------------------------------------------------------
# assignment of signs and minimizers

@dataclass(frozen=True)
class DirectorAssignment:
    """Immutable per-cell data backing a continuous director.

    gradients: (M, 3, 2) cell gradients
    areas: (M,) cell areas
    j: active constraint index (>= j_v)
    j_v: smallest feasible index for the shared direction
    signs: (M,) determinant signs, +-1
    zeta_bar: shared direction, feasible for every cell at index j_v
    zetas: (M, 3) per-cell constrained minimizers at index j
    values: (M,) per-cell constrained minimum energies at index j
    """

    gradients: np.ndarray
    areas: np.ndarray
    j: int
    j_v: int
    signs: np.ndarray
    zeta_bar: np.ndarray
    zetas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        crosses = np.cross(self.gradients[:, :, 0], self.gradients[:, :, 1])
        margin = 1.0 / self.j
        for label, vecs, need in (("shared direction",
                                   np.broadcast_to(self.zeta_bar,
                                                   crosses.shape),
                                   1.0 / self.j_v),
                                  ("cell minimizer", self.zetas, margin)):
            dets = np.einsum("ij,ij->i", crosses, vecs)
            if np.any(self.signs * dets < need - 1e-12):
                raise ValueError(f"{label} violates its determinant bound")
        for arr in (self.gradients, self.areas, self.signs, self.zeta_bar,
                    self.zetas, self.values):
            arr.setflags(write=False)

    @property
    def n_cells(self) -> int:
        return self.gradients.shape[0]

    def to_dict(self) -> dict:
        return {
            "j": self.j,
            "j_v": self.j_v,
            "zeta_bar": self.zeta_bar.tolist(),
            "cells": [{
                "gradient": self.gradients[i].tolist(),
                "area": float(self.areas[i]),
                "sign": int(self.signs[i]),
                "zeta": self.zetas[i].tolist(),
                "value": float(self.values[i]),
            } for i in range(self.n_cells)],
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)


def build_assignment(model: EnergyModel, field: PwAffineField,
                     j: int | None = None) -> DirectorAssignment:
    """Assign signs and constrained minimizers to every cell of a field."""
    grads = field.gradients()
    zeta_bar, j_v, signs = feasible_normal(grads)
    if j is None:
        j = j_v
    if j < j_v:
        raise ValueError(f"index {j} is below the feasibility index {j_v}")
    zetas = np.empty((grads.shape[0], 3))
    values = np.empty(grads.shape[0])
    for i in range(grads.shape[0]):
        values[i], zetas[i] = cell_min_constrained(model, grads[i],
                                                   int(signs[i]), j)
    return DirectorAssignment(gradients=grads, areas=field.mesh.areas.copy(),
                              j=int(j), j_v=int(j_v), signs=signs,
                              zeta_bar=zeta_bar, zetas=zetas, values=values)


def cellwise_energy(assignment: DirectorAssignment) -> float:
    """Sum of area times constrained minimum over the cells.

    This is the energy of the discontinuous cellwise-optimal director and
    the exact limit of the blended integral as the sharpness grows.
    """
    return float(np.dot(assignment.areas, assignment.values))


# ---------------------------------------------------------------------------
# continuous blend

def _segment_distances(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distance from each point to the boundary of one triangle."""
    out = np.full(points.shape[0], np.inf)
    for k in range(3):
        p0 = tri[k]
        d = tri[(k + 1) % 3] - p0
        t = ((points - p0) @ d) / (d @ d)
        foot = p0 + np.clip(t, 0.0, 1.0)[:, None] * d
        out = np.minimum(out, np.linalg.norm(points - foot, axis=1))
    return out


class BlendedDirector:
    """Continuous director: shared direction near edges, cell minimizer
    deeper than 1/n inside each cell.

    The blend weight is min(n * dist(x, cell boundary), 1), so the field
    equals the shared direction on the mesh skeleton and the per-cell
    constrained minimizer on the interior plateau. Both endpoints satisfy
    the cell's determinant bound and the bound is linear in the director,
    so every blended value stays feasible.
    """

    def __init__(self, field: PwAffineField, assignment: DirectorAssignment,
                 n: int):
        if n < 1:
            raise ValueError("blend sharpness must be >= 1")
        if assignment.n_cells != field.mesh.n_cells:
            raise ValueError("assignment does not match the field's mesh")
        self.field = field
        self.assignment = assignment
        self.n = int(n)
        self._corners = field.mesh.vertices[field.mesh.triangles]

    def alpha_in_cell(self, cell: int, points: np.ndarray) -> np.ndarray:
        d = _segment_distances(np.asarray(points, dtype=float),
                               self._corners[cell])
        return np.minimum(self.n * d, 1.0)

    def evaluate_in_cell(self, cell: int, points: np.ndarray) -> np.ndarray:
        a = self.alpha_in_cell(cell, points)[:, None]
        return ((1.0 - a) * self.assignment.zeta_bar[None]
                + a * self.assignment.zetas[cell][None])

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        cells = self.field.mesh.locate(pts)
        out = np.empty((pts.shape[0], 3))
        for c in np.unique(cells):
            mask = cells == c
            out[mask] = self.evaluate_in_cell(int(c), pts[mask])
        return out

    def __call__(self, point) -> np.ndarray:
        return self.evaluate(np.asarray(point, dtype=float)[None])[0]


def blended_director(field: PwAffineField, assignment: DirectorAssignment,
                     n: int) -> BlendedDirector:
    return BlendedDirector(field, assignment, n)


# ---------------------------------------------------------------------------
# energy of the blended director

def _cell_energy(model: EnergyModel, director: BlendedDirector, cell: int,
                 rel_tol: float, max_level: int) -> float:
    asn = director.assignment
    cross = np.cross(asn.gradients[cell, :, 0], asn.gradients[cell, :, 1])
    sq = float(np.sum(asn.gradients[cell] ** 2))
    p = model.p
    barrier = model.barrier

    def integrand(points: np.ndarray) -> np.ndarray:
        zeta = director.evaluate_in_cell(cell, points)
        det = np.abs(zeta @ cross)
        return (barrier.values(det)
                + (sq + np.einsum("ij,ij->i", zeta, zeta)) ** (p / 2.0))

    tri = director._corners[cell][None]
    return integrate_adaptive(integrand, tri, rel_tol=rel_tol,
                              max_level=max_level).value


def nirf_value(model: EnergyModel, field: PwAffineField, j: int, n: int,
               *, rel_tol: float = 1e-4, max_level: int = 8,
               threads: int = 1) -> ExtValue:
    """Energy of the blended continuous director over the whole mesh.

    Builds the assignment at index j (rejected below the feasibility
    index), blends with sharpness n, and integrates the bulk energy
    cell by cell with the adaptive midpoint rule. The value decreases
    toward the integral of the reduced density as j and n grow.
    """
    asn = build_assignment(model, field, j)
    director = BlendedDirector(field, asn, n)
    cells = range(asn.n_cells)

    def work(c):
        return _cell_energy(model, director, c, rel_tol, max_level)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, cells))
    else:
        parts = [work(c) for c in cells]
    return ExtValue(float(np.sum(parts)))
