"""Thin-film energies, thickness averaging, and the membrane limit.

A film of small thickness is rescaled to a fixed slab; its free energy
reads the bulk density on the rescaled gradient whose third column is
amplified by the inverse thickness. Averaging through the thickness maps
film configurations onto membrane fields, recovery lifts map membrane
fields back, and the sweep utilities compare near-minimizers on both
sides as the thickness shrinks.
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .director_field import InfeasibleError, blended_director, build_assignment
from .energy_models import EnergyModel
from .pw_affine import PwAffineField, TriMesh
from .quadrature import subdivide_triangles
from .tensor_kernel import ExtValue

__all__ = [
    "PrismField",
    "lift_membrane",
    "pi_eps_average",
    "thin_film_energy",
    "thin_film_load",
    "thin_film_total",
    "LoadPotential",
    "recovery_sequence",
    "director_membrane_energy",
    "lp_distance",
    "MinimizeResult",
    "minimize_thin_film",
    "minimize_membrane",
    "SweepRow",
    "SweepReport",
    "gamma_sweep",
]


# ---------------------------------------------------------------------------
# prism fields on the rescaled slab

class PrismField:
    """Nodal 3-vector values on base-mesh vertices times uniform layers.

    Values live on the rescaled slab: in-plane over the base mesh,
    through-thickness at layer heights spanning (-1/2, 1/2). The
    physical thickness enters only through the gradient rescaling.
    """

    __slots__ = ("mesh", "values", "eps")

    def __init__(self, mesh: TriMesh, values, eps: float):
        vals = np.array(values, dtype=float)
        if vals.ndim != 3 or vals.shape[1:] != (mesh.n_vertices, 3):
            raise ValueError(
                f"values must be (layers, {mesh.n_vertices}, 3), "
                f"got {vals.shape}")
        if vals.shape[0] < 3 or vals.shape[0] % 2 == 0:
            raise ValueError("layer count must be odd and at least 3")
        if not np.all(np.isfinite(vals)):
            raise ValueError("nodal values must be finite")
        if not eps > 0.0:
            raise ValueError("thickness must be positive")
        vals.setflags(write=False)
        object.__setattr__(self, "mesh", mesh)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "eps", float(eps))

    def __setattr__(self, name, value):
        raise AttributeError("PrismField is immutable")

    @property
    def n_layers(self) -> int:
        return self.values.shape[0]

    @property
    def layer_heights(self) -> np.ndarray:
        return np.linspace(-0.5, 0.5, self.n_layers)

    def layer_field(self, layer: int) -> PwAffineField:
        return PwAffineField(self.mesh, self.values[layer])

    def to_dict(self) -> dict:
        return {"mesh": self.mesh.to_dict(), "eps": self.eps,
                "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PrismField":
        return cls(TriMesh.from_dict(data["mesh"]),
                   np.array(data["values"]), data["eps"])

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load_json(cls, path) -> "PrismField":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def lift_membrane(v: PwAffineField, eps: float, layers: int = 5) -> PrismField:
    """Layer-constant film with every layer equal to the membrane field."""
    vals = np.broadcast_to(v.values, (layers,) + v.values.shape)
    return PrismField(v.mesh, vals.copy(), eps)


def pi_eps_average(u: PrismField) -> PwAffineField:
    """Thickness average: trapezoidal in the layers, exact for fields
    linear within each layer interval."""
    m = u.n_layers
    w = np.full(m, 1.0 / (m - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return PwAffineField(u.mesh, np.einsum("l,lvj->vj", w, u.values))


# ---------------------------------------------------------------------------
# rescaled gradients and the film energy

def _layer_gradients(u: PrismField) -> np.ndarray:
    """In-plane gradients, shape (layers, cells, 3, 2)."""
    T = u.mesh.triangles
    edge = np.stack([u.values[:, T[:, 1]] - u.values[:, T[:, 0]],
                     u.values[:, T[:, 2]] - u.values[:, T[:, 0]]], axis=-1)
    return np.einsum("lmkr,mrc->lmkc", edge, u.mesh._inv_jac)


def _prism_quadrature(u: PrismField, refine: int = 0):
    """Centroid-sampled rescaled gradients with their volume weights.

    Returns (weights, grads, points, heights, mids) flattened over
    (layer interval, sublayer, in-plane subcell): grads are (K, 3, 3)
    rescaled gradient samples, points the in-plane sample locations,
    heights the through-thickness sample heights, and mids the field
    values at the samples (what a load integrand sees).
    """
    if refine < 0:
        raise ValueError("refine must be >= 0")
    mesh = u.mesh
    m = u.n_layers
    delta = 1.0 / (m - 1)
    heights = u.layer_heights

    corners = mesh.vertices[mesh.triangles]
    for _ in range(refine):
        corners = subdivide_triangles(corners)
    sub_per_cell = corners.shape[0] // mesh.n_cells
    centroids = corners.mean(axis=1)                       # (S, 2)
    cell_of = np.repeat(np.arange(mesh.n_cells), sub_per_cell)

    # barycentric coordinates inside the known parent cell
    rel = centroids - mesh._p0[cell_of]
    lam12 = np.einsum("sij,sj->si", mesh._inv_jac[cell_of], rel)
    lam = np.concatenate([(1.0 - lam12.sum(axis=1))[:, None], lam12], axis=1)
    nodal = u.values[:, mesh.triangles[cell_of]]           # (m, S, 3, 3)
    at_pts = np.einsum("si,lsij->lsj", lam, nodal)         # (m, S, 3)

    grads_l = _layer_gradients(u)[:, cell_of]              # (m, S, 3, 2)

    n_sub = 2 ** refine
    s_mid = (np.arange(n_sub) + 0.5) / n_sub
    area_w = np.repeat(mesh.areas, sub_per_cell) / sub_per_cell

    out_g, out_w, out_p, out_h, out_v = [], [], [], [], []
    for l in range(m - 1):
        db = (at_pts[l + 1] - at_pts[l]) / (delta * u.eps)  # (S, 3)
        for s in s_mid:
            g = np.empty((centroids.shape[0], 3, 3))
            g[:, :, :2] = (1.0 - s) * grads_l[l] + s * grads_l[l + 1]
            g[:, :, 2] = db
            out_g.append(g)
            out_w.append(area_w * (delta / n_sub))
            out_p.append(centroids)
            out_h.append(np.full(centroids.shape[0], heights[l] + s * delta))
            out_v.append((1.0 - s) * at_pts[l] + s * at_pts[l + 1])
    return (np.concatenate(out_w), np.concatenate(out_g),
            np.concatenate(out_p), np.concatenate(out_h),
            np.concatenate(out_v))


def _bulk_values(model: EnergyModel, grads: np.ndarray) -> np.ndarray:
    dets = np.einsum("ki,ki->k", grads[:, :, 0],
                     np.cross(grads[:, :, 1], grads[:, :, 2], axis=1))
    sq = np.einsum("kij,kij->k", grads, grads)
    return model.barrier.values(np.abs(dets)) + sq ** (model.p / 2.0)


def thin_film_energy(u: PrismField, model: EnergyModel,
                     *, refine: int = 0) -> ExtValue:
    """Volume integral of the bulk density on the rescaled gradient.

    Centroid sampling per prism; ``refine`` subdivides each prism in
    plane (4-way) and through thickness (2-way) per level.
    """
    w, grads, _, _, _ = _prism_quadrature(u, refine)
    return ExtValue(float(np.dot(w, _bulk_values(model, grads))))


# ---------------------------------------------------------------------------
# loads

@dataclass(frozen=True)
class LoadPotential:
    """Potential <psi(x, x3), zeta> + |zeta|^p, coercive for p > 1.

    ``psi`` maps in-plane points (N, 2) and heights (N,) to (N, 3).
    """

    psi: object
    p: float = 2.0

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError("load exponent must exceed 1")

    @staticmethod
    def zero(p: float = 2.0) -> "LoadPotential":
        return LoadPotential(lambda pts, x3: np.zeros((len(pts), 3)), p)

    def psi_at(self, pts: np.ndarray, x3) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        h = np.broadcast_to(np.asarray(x3, dtype=float), pts.shape[0])
        out = np.asarray(self.psi(pts, h), dtype=float)
        if out.shape != (pts.shape[0], 3):
            raise ValueError("load field must return one 3-vector per point")
        return out

    def density(self, pts: np.ndarray, x3, zeta: np.ndarray) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=float)
        norms = np.linalg.norm(zeta, axis=1)
        return (np.einsum("nj,nj->n", self.psi_at(pts, x3), zeta)
                + norms ** self.p)


def thin_film_load(u: PrismField, load: LoadPotential,
                   *, refine: int = 0) -> float:
    w, _, pts, heights, mids = _prism_quadrature(u, refine)
    return float(np.dot(w, load.density(pts, heights, mids)))


def thin_film_total(model: EnergyModel, load: LoadPotential, u: PrismField,
                    *, refine: int = 0) -> float:
    energy = thin_film_energy(u, model, refine=refine)
    if not energy.is_finite:
        return math.inf
    return energy.finite + thin_film_load(u, load, refine=refine)


def membrane_load(v: PwAffineField, load: LoadPotential) -> float:
    """Load at the mid-surface with the same centroid quadrature."""
    mesh = v.mesh
    cen = mesh.vertices[mesh.triangles].mean(axis=1)
    vals = v.values[mesh.triangles].mean(axis=1)
    return float(np.dot(mesh.areas, load.density(cen, 0.0, vals)))


def lp_distance(a: PwAffineField, b: PwAffineField, p: float) -> float:
    """L^p distance of two fields on one mesh, centroid quadrature."""
    if a.mesh is not b.mesh and a.mesh.n_vertices != b.mesh.n_vertices:
        raise ValueError("fields must share a mesh")
    diff = a.values - b.values
    tri = a.mesh.triangles
    cen = diff[tri].mean(axis=1)
    norms = np.linalg.norm(cen, axis=1)
    return float(np.dot(a.mesh.areas, norms ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# recovery lifts

def _sample_director(phi, mesh: TriMesh) -> np.ndarray:
    if hasattr(phi, "evaluate"):
        return np.asarray(phi.evaluate(mesh.vertices), dtype=float)
    if callable(phi):
        return np.asarray(phi(mesh.vertices), dtype=float)
    arr = np.asarray(phi, dtype=float)
    if arr.shape == (3,):
        return np.broadcast_to(arr, (mesh.n_vertices, 3)).copy()
    if arr.shape == (mesh.n_vertices, 3):
        return arr.copy()
    raise ValueError("director must be a field, a callable, nodal values, "
                     "or one constant 3-vector")


def recovery_sequence(model: EnergyModel, v: PwAffineField, phi,
                      eps: float, *, layers: int = 5,
                      det_floor: float = 1e-6) -> tuple[PrismField, ExtValue]:
    """Film v(x) + eps * x3 * phi(x) on the rescaled slab and its energy.

    The director is sampled at mesh vertices, so refine the membrane
    field first when phi varies inside cells. Cells whose centroid
    determinant falls below the floor trigger a warning, not an error:
    the energy is still well-defined, merely large.
    """
    nodal_phi = _sample_director(phi, v.mesh)
    tri = v.mesh.triangles
    phi_cen = nodal_phi[tri].mean(axis=1)
    grads = v.gradients()
    dets = np.einsum("kj,kj->k", np.cross(grads[:, :, 0], grads[:, :, 1]),
                     phi_cen)
    worst = float(np.abs(dets).min())
    if worst < det_floor:
        warnings.warn(f"recovery director determinant fell to {worst:.3e} "
                      f"(floor {det_floor:.3e})", stacklevel=2)
    heights = np.linspace(-0.5, 0.5, layers)
    vals = (v.values[None] + eps * heights[:, None, None] * nodal_phi[None])
    u = PrismField(v.mesh, vals, eps)
    return u, thin_film_energy(u, model)


def director_membrane_energy(model: EnergyModel, v: PwAffineField,
                             phi) -> float:
    """Membrane-side target of the recovery lift: the bulk density on
    (gradient | director) with the director sampled like the lift."""
    nodal_phi = _sample_director(phi, v.mesh)
    tri = v.mesh.triangles
    phi_cen = nodal_phi[tri].mean(axis=1)
    grads = np.concatenate([v.gradients(), phi_cen[:, :, None]], axis=2)
    return float(np.dot(v.mesh.areas, _bulk_values(model, grads)))


# ---------------------------------------------------------------------------
# descent with a feasibility guard

@dataclass(frozen=True)
class MinimizeResult:
    field: object
    total: float
    energy: float
    load_value: float
    iterations: int


def _descent(value_grad, x0: np.ndarray, iters: int, guard=None):
    """Barzilai-Borwein descent with Armijo backtracking.

    ``value_grad`` returns (value, gradient, state); ``guard(state0,
    state1)`` vetoes a step (used to refuse determinant sign flips, which
    would tunnel through the infinite barrier wall). Accepted energies
    are nonincreasing by construction.
    """
    f, g, state = value_grad(x0)
    if not math.isfinite(f):
        raise InfeasibleError("starting configuration has infinite energy")
    x = x0
    prev_x = prev_g = None
    accepted = 0
    for _ in range(iters):
        gn2 = float(np.dot(g, g))
        if gn2 <= 1e-30:
            break
        if prev_x is None:
            t = 1.0 / max(1.0, math.sqrt(gn2))
        else:
            s = x - prev_x
            y = g - prev_g
            sy = float(np.dot(s, y))
            t = float(np.dot(s, s)) / sy if sy > 1e-30 else 1.0
        t = min(max(t, 1e-12), 1e3)
        ok = False
        for _ in range(60):
            x1 = x - t * g
            f1, g1, state1 = value_grad(x1)
            if (math.isfinite(f1) and f1 <= f - 1e-4 * t * gn2
                    and (guard is None or guard(state, state1))):
                ok = True
                break
            t *= 0.5
            if t < 1e-14:
                break
        if not ok:
            break
        prev_x, prev_g = x, g
        x, f, g, state = x1, f1, g1, state1
        accepted += 1
    return x, f, accepted


def _cofactor_columns(grads: np.ndarray) -> np.ndarray:
    c = np.empty_like(grads)
    c[:, :, 0] = np.cross(grads[:, :, 1], grads[:, :, 2], axis=1)
    c[:, :, 1] = np.cross(grads[:, :, 2], grads[:, :, 0], axis=1)
    c[:, :, 2] = np.cross(grads[:, :, 0], grads[:, :, 1], axis=1)
    return c


class _ThinObjective:
    """Total rescaled energy and its analytic nodal gradient."""

    def __init__(self, model: EnergyModel, load: LoadPotential,
                 mesh: TriMesh, layers: int, eps: float):
        self.model = model
        self.load = load
        self.mesh = mesh
        self.layers = layers
        self.eps = eps
        self.delta = 1.0 / (layers - 1)
        self.heights = np.linspace(-0.5, 0.5, layers)
        self.mid_heights = 0.5 * (self.heights[:-1] + self.heights[1:])
        self.centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        self.psi_mid = np.stack([load.psi_at(self.centroids, h)
                                 for h in self.mid_heights])

    def pack(self, u: PrismField) -> np.ndarray:
        return u.values.reshape(-1).copy()

    def unpack(self, x: np.ndarray) -> PrismField:
        vals = x.reshape(self.layers, self.mesh.n_vertices, 3)
        return PrismField(self.mesh, vals, self.eps)

    def __call__(self, x: np.ndarray):
        model, mesh = self.model, self.mesh
        m, delta, eps = self.layers, self.delta, self.eps
        vals = x.reshape(m, mesh.n_vertices, 3)
        T = mesh.triangles
        areas = mesh.areas
        p = model.p

        edge = np.stack([vals[:, T[:, 1]] - vals[:, T[:, 0]],
                         vals[:, T[:, 2]] - vals[:, T[:, 0]]], axis=-1)
        g_layer = np.einsum("lmkr,mrc->lmkc", edge, mesh._inv_jac)
        cen = vals[:, T].mean(axis=2)                       # (m, cells, 3)

        F = np.empty((m - 1, T.shape[0], 3, 3))
        F[:, :, :, :2] = 0.5 * (g_layer[:-1] + g_layer[1:])
        F[:, :, :, 2] = (cen[1:] - cen[:-1]) / (delta * eps)
        flat = F.reshape(-1, 3, 3)

        cof = _cofactor_columns(flat)
        dets = np.einsum("kj,kj->k", flat[:, :, 0], cof[:, :, 0])
        adet = np.abs(dets)
        if np.any(adet == 0.0):
            return math.inf, np.zeros_like(x), dets
        sq = np.einsum("kij,kij->k", flat, flat)
        w = np.tile(areas, m - 1) * delta
        bulk = model.barrier.values(adet) + sq ** (p / 2.0)
        value = float(np.dot(w, bulk))

        hp = model.barrier.derivative(adet) * np.sign(dets)
        D = (w * hp)[:, None, None] * cof
        D += (w * p * sq ** (p / 2.0 - 1.0))[:, None, None] * flat
        D = D.reshape(m - 1, T.shape[0], 3, 3)

        grad = np.zeros((m, mesh.n_vertices, 3))
        du = 0.5 * np.einsum("lmir,msr->lmis", D[:, :, :, :2],
                             mesh._inv_jac)
        for layer_slice in (slice(0, m - 1), slice(1, m)):
            np.add.at(grad, (layer_slice, T[:, 1]), du[:, :, :, 0])
            np.add.at(grad, (layer_slice, T[:, 2]), du[:, :, :, 1])
            np.add.at(grad, (layer_slice, T[:, 0]),
                      -du[:, :, :, 0] - du[:, :, :, 1])
        third = D[:, :, :, 2] / (delta * eps)
        for k in range(3):
            np.add.at(grad, (slice(1, m), T[:, k]), third / 3.0)
            np.add.at(grad, (slice(0, m - 1), T[:, k]), -third / 3.0)

        mid = 0.5 * (cen[:-1] + cen[1:])                    # (m-1, cells, 3)
        norms = np.linalg.norm(mid, axis=2)
        value += float(np.einsum("m,lm->", areas * delta,
                                 np.einsum("lmj,lmj->lm", self.psi_mid, mid)
                                 + norms ** self.load.p))
        pw = np.where(norms > 0.0, norms ** (self.load.p - 2.0), 0.0)
        dpsi = (self.psi_mid + self.load.p * pw[:, :, None] * mid)
        dpsi *= (areas * delta)[None, :, None]
        for layer_slice in (slice(0, m - 1), slice(1, m)):
            for k in range(3):
                np.add.at(grad, (layer_slice, T[:, k]), dpsi / 6.0)

        return value, grad.reshape(-1), dets


def _sign_guard(d0: np.ndarray, d1: np.ndarray) -> bool:
    return bool(np.all(np.sign(d0) == np.sign(d1)) and np.all(d1 != 0.0))


def _default_film_start(mesh: TriMesh, eps: float,
                        layers: int) -> PrismField:
    flat = np.zeros((mesh.n_vertices, 3))
    flat[:, :2] = mesh.vertices
    heights = np.linspace(-0.5, 0.5, layers)
    vals = np.repeat(flat[None], layers, axis=0)
    vals[:, :, 2] += eps * heights[:, None]
    return PrismField(mesh, vals, eps)


def minimize_thin_film(model: EnergyModel, load: LoadPotential, eps: float,
                       mesh: TriMesh | None = None, *,
                       start: PrismField | None = None, layers: int = 5,
                       iters: int = 200, seeds: int = 1, seed: int = 0,
                       jitter: float = 0.01) -> MinimizeResult:
    """Descend the total film energy from one or more feasible starts.

    The line search refuses steps that flip any prism determinant's
    sign: the barrier makes the zero-determinant set an infinite wall
    and hopping across it would silently change branch. Starts are the
    given field plus jittered copies; infeasible starts are skipped and
    all-infeasible raises.
    """
    if start is None:
        if mesh is None:
            raise ValueError("provide a start field or a mesh")
        start = _default_film_start(mesh, eps, layers)
    obj = _ThinObjective(model, load, start.mesh, start.n_layers, eps)
    x0 = obj.pack(start)
    rng = np.random.default_rng(seed)
    scale = jitter * max(1.0, float(np.sqrt(np.mean(x0 * x0))))

    best = None
    feasible = 0
    for k in range(max(1, seeds)):
        xk = x0 if k == 0 else x0 + scale * rng.standard_normal(x0.shape)
        try:
            x, fval, its = _descent(obj, xk, iters, guard=_sign_guard)
        except InfeasibleError:
            continue
        feasible += 1
        if best is None or fval < best[1]:
            best = (x, fval, its)
    if best is None:
        raise InfeasibleError("every start had infinite energy")
    x, fval, its = best
    u = obj.unpack(x)
    energy = thin_film_energy(u, model).as_float()
    return MinimizeResult(field=u, total=fval, energy=energy,
                          load_value=fval - energy, iterations=its)


class _MembraneObjective:
    """Tabulated envelope plus mid-surface load, numeric density slope."""

    def __init__(self, table, load: LoadPotential, mesh: TriMesh,
                 outside: str):
        self.table = table
        self.load = load
        self.mesh = mesh
        self.outside = outside
        self.centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        self.psi0 = load.psi_at(self.centroids, 0.0)
        self.h = 1e-5

    def pack(self, v: PwAffineField) -> np.ndarray:
        return v.values.reshape(-1).copy()

    def unpack(self, x: np.ndarray) -> PwAffineField:
        return PwAffineField(self.mesh, x.reshape(-1, 3))

    def _table_values(self, grads: np.ndarray) -> np.ndarray:
        if self.outside == "error":
            sig = np.linalg.svd(grads, compute_uv=False)
            if np.any(sig[:, 0] > self.table.sigma_max + 1e-12):
                raise InfeasibleError(
                    "a cell gradient left the tabulated envelope box; "
                    "rebuild the table with a larger radius or allow the "
                    "certificate extension")
        return self.table.values_at(grads)

    def __call__(self, x: np.ndarray):
        mesh = self.mesh
        vals = x.reshape(-1, 3)
        T = mesh.triangles
        areas = mesh.areas
        n = T.shape[0]

        edge = np.stack([vals[T[:, 1]] - vals[T[:, 0]],
                         vals[T[:, 2]] - vals[T[:, 0]]], axis=-1)
        grads = np.einsum("mkr,mrc->mkc", edge, mesh._inv_jac)
        value = float(np.dot(areas, self._table_values(grads)))

        h = self.h
        probes = np.repeat(grads[:, None], 12, axis=1)
        slot = 0
        for i in range(3):
            for j in range(2):
                probes[:, slot, i, j] += h
                probes[:, slot + 1, i, j] -= h
                slot += 2
        tv = self._table_values(probes.reshape(-1, 3, 2)).reshape(n, 12)
        dT = ((tv[:, 0::2] - tv[:, 1::2]) / (2.0 * h)).reshape(n, 3, 2)
        du = np.einsum("mir,msr->mis", areas[:, None, None] * dT,
                       mesh._inv_jac)

        grad = np.zeros_like(vals)
        np.add.at(grad, T[:, 1], du[:, :, 0])
        np.add.at(grad, T[:, 2], du[:, :, 1])
        np.add.at(grad, T[:, 0], -du[:, :, 0] - du[:, :, 1])

        cen = vals[T].mean(axis=1)
        norms = np.linalg.norm(cen, axis=1)
        value += float(np.dot(areas,
                              np.einsum("mj,mj->m", self.psi0, cen)
                              + norms ** self.load.p))
        pw = np.where(norms > 0.0, norms ** (self.load.p - 2.0), 0.0)
        dl = (self.psi0 + self.load.p * pw[:, None] * cen) * areas[:, None]
        for k in range(3):
            np.add.at(grad, T[:, k], dl / 3.0)

        return value, grad.reshape(-1), None


def minimize_membrane(table, load: LoadPotential, mesh: TriMesh, *,
                      start: PwAffineField | None = None, iters: int = 200,
                      seeds: int = 1, seed: int = 0, jitter: float = 0.01,
                      outside: str = "certificate") -> MinimizeResult:
    """Minimize tabulated-envelope energy plus mid-surface load.

    ``outside`` controls gradients beyond the tabulated ball:
    "certificate" uses the polynomial growth bound (coercive, so the
    descent is pulled back in), "error" refuses to evaluate there.
    """
    if outside not in ("certificate", "error"):
        raise ValueError('outside must be "certificate" or "error"')
    tab = table.table if hasattr(table, "table") else table
    obj = _MembraneObjective(tab, load, mesh, outside)
    if start is None:
        flat = np.zeros((mesh.n_vertices, 3))
        flat[:, :2] = mesh.vertices
        start = PwAffineField(mesh, flat)
    x0 = obj.pack(start)
    rng = np.random.default_rng(seed)
    scale = jitter * max(1.0, float(np.sqrt(np.mean(x0 * x0))))
    best = None
    for k in range(max(1, seeds)):
        xk = x0 if k == 0 else x0 + scale * rng.standard_normal(x0.shape)
        x, fval, its = _descent(obj, xk, iters)
        if best is None or fval < best[1]:
            best = (x, fval, its)
    x, fval, its = best
    v = obj.unpack(x)
    energy = float(np.dot(mesh.areas, tab.values_at(v.gradients())))
    return MinimizeResult(field=v, total=fval, energy=energy,
                          load_value=fval - energy, iterations=its)


# ---------------------------------------------------------------------------
# the thickness sweep

@dataclass(frozen=True)
class SweepRow:
    eps: float
    e3d: float
    emem: float
    gap: float
    lp_distance: float
    iterations: int


@dataclass(frozen=True)
class SweepReport:
    rows: tuple
    meta: dict = dc_field(default_factory=dict)

    def to_csv(self, path, header_lines=()) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("eps,e3d,emem,gap,lp_distance,iterations\n")
            for r in self.rows:
                fh.write(f"{r.eps:.17g},{r.e3d:.17g},{r.emem:.17g},"
                         f"{r.gap:.17g},{r.lp_distance:.17g},"
                         f"{r.iterations}\n")

    def to_dict(self) -> dict:
        return {"meta": self.meta,
                "rows": [{"eps": r.eps, "e3d": r.e3d, "emem": r.emem,
                          "gap": r.gap, "lp_distance": r.lp_distance,
                          "iterations": r.iterations} for r in self.rows]}

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)


def gamma_sweep(model: EnergyModel, table, load: LoadPotential,
                mesh: TriMesh, eps_schedule, *, layers: int = 5,
                j: int | None = None, blend_n: int = 64, iters: int = 200,
                seeds: int = 1, seed: int = 0, mode: str = "minimize",
                threads: int = 1) -> SweepReport:
    """Membrane minimum once, then one film run per thickness.

    Per thickness the report records the total film energy, the gap to
    the membrane minimum, and the L^p distance of the thickness average
    from the membrane minimizer. Mode "minimize" descends from the
    recovery lift of the membrane minimizer; mode "recovery" scores the
    lift itself (its gap is the recovery residual).
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if not eps_schedule:
        raise ValueError("thickness schedule is empty")
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("thickness schedule must be strictly decreasing")
    if mode not in ("minimize", "recovery"):
        raise ValueError('mode must be "minimize" or "recovery"')

    mem = minimize_membrane(table, load, mesh, iters=iters, seeds=seeds,
                            seed=seed)
    v_bar = mem.field
    # the requested index is a preference; the minimizer's own geometry
    # sets the feasibility floor, so clamp instead of failing the sweep
    assignment = build_assignment(model, v_bar, None)
    if j is not None and j > assignment.j:
        assignment = build_assignment(model, v_bar, j)
    director = blended_director(v_bar, assignment, blend_n)

    def run(idx_eps):
        idx, eps = idx_eps
        u0, _ = recovery_sequence(model, v_bar, director, eps,
                                  layers=layers)
        competitor = thin_film_total(model, load, u0)
        if mode == "recovery":
            u, total, its = u0, competitor, 0
        else:
            res = minimize_thin_film(model, load, eps, start=u0,
                                     iters=iters, seeds=seeds,
                                     seed=seed + 7919 * idx)
            u, total, its = res.field, res.total, res.iterations
            if total > competitor + 1e-9:
                raise RuntimeError(
                    "film minimization ended above its warm-start "
                    "competitor; the descent contract is broken")
        energy = thin_film_energy(u, model).as_float()
        dist = lp_distance(pi_eps_average(u), v_bar, model.p)
        return SweepRow(eps=eps, e3d=total, emem=mem.total,
                        gap=total - mem.total, lp_distance=dist,
                        iterations=its)

    jobs = list(enumerate(eps_schedule))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = tuple(pool.map(run, jobs))
    else:
        rows = tuple(run(job) for job in jobs)
    meta = {"mode": mode, "layers": layers, "j": assignment.j,
            "j_requested": j, "j_v": assignment.j_v, "blend_n": blend_n,
            "seed": seed, "iters": iters, "seeds": seeds,
            "membrane_total": mem.total,
            "membrane_iterations": mem.iterations}
    return SweepReport(rows=rows, meta=meta)
