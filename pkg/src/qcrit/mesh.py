"""Desk-scale P1 meshes, grid functions, and exhaustion schedules.

Supports uniform and log-graded segment meshes (optionally carrying a radial
measure weight r**(n-1) so 1D computations emulate radially symmetric problems
in n ambient dimensions) and structured triangulations of rectangles. Grid
functions are nodal P1 fields; gradients are exact per element and volume
integrals use the element-midpoint rule throughout, so energy, residual, and
norm computations elsewhere in the package are mutually consistent.

Meshes and grid functions are immutable once built (arrays are frozen), which
keeps every downstream computation deterministic and safe to share.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .util import ksum

__all__ = [
    "Mesh",
    "GridFunction",
    "ExhaustionSchedule",
    "build_mesh_1d",
    "build_mesh_1d_log",
    "build_mesh_2d",
    "submesh",
    "integrate",
    "gradient",
    "midpoint_values",
    "p_norm",
    "zero_extend",
    "make_exhaustion",
    "mesh_to_csv",
    "mesh_from_csv",
    "grid_function_to_csv",
    "grid_function_from_csv",
]


def _frozen(a, dtype=float):
    out = np.ascontiguousarray(np.asarray(a, dtype=dtype))
    out.flags.writeable = False
    return out


@dataclass(eq=False)
class Mesh:
    """Conforming P1 mesh: segments (dim 1) or triangles (dim 2).

    Attributes
    ----------
    dim : int
        Topological dimension, 1 or 2.
    nodes : ndarray
        Node coordinates, shape (N,) in 1D and (N, 2) in 2D.
    elements : ndarray
        Node indices per element, shape (M, dim+1).
    boundary : ndarray of bool
        Marks nodes where homogeneous or inhomogeneous data is imposed.
    measure_weight : ndarray
        Per-element weight multiplying the element measure in every
        integral. Defaults to 1; radial emulation uses midpoint**(n-1).
    ambient_n : int
        Dimension of the ambient space the mesh stands in for. Equals dim
        unless a 1D mesh emulates radial coordinates.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    measure_weight: np.ndarray
    ambient_n: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.nodes = _frozen(self.nodes)
        self.elements = _frozen(self.elements, dtype=np.int64)
        self.boundary = _frozen(self.boundary, dtype=bool)
        self.measure_weight = _frozen(self.measure_weight)
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.elements.shape[1] != self.dim + 1:
            raise ValueError("element arity does not match dim")

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def coords2(self) -> np.ndarray:
        """Node coordinates as (N, dim) even in 1D."""
        return self.nodes[:, None] if self.dim == 1 else self.nodes

    @property
    def element_measures(self) -> np.ndarray:
        if "measures" not in self._cache:
            if self.dim == 1:
                x = self.nodes[self.elements]
                m = x[:, 1] - x[:, 0]
            else:
                p = self.nodes[self.elements]
                d1 = p[:, 1] - p[:, 0]
                d2 = p[:, 2] - p[:, 0]
                m = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
            self._cache["measures"] = _frozen(m)
        return self._cache["measures"]

    @property
    def midpoints(self) -> np.ndarray:
        """Element barycenters, shape (M, dim)."""
        if "midpoints" not in self._cache:
            self._cache["midpoints"] = _frozen(self.coords2[self.elements].mean(axis=1))
        return self._cache["midpoints"]

    @property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the nodal basis per element, shape (M, dim+1, dim)."""
        if "bgrad" not in self._cache:
            if self.dim == 1:
                h = self.element_measures
                g = np.empty((self.n_elements, 2, 1))
                g[:, 0, 0] = -1.0 / h
                g[:, 1, 0] = 1.0 / h
            else:
                p = self.nodes[self.elements]
                g = np.empty((self.n_elements, 3, 2))
                area2 = 2.0 * self.element_measures
                for k in range(3):
                    a = p[:, (k + 1) % 3]
                    b = p[:, (k + 2) % 3]
                    # Gradient of the hat at vertex k is the inward normal of
                    # the opposite edge scaled by 1/(2 area).
                    g[:, k, 0] = (a[:, 1] - b[:, 1]) / area2
                    g[:, k, 1] = (b[:, 0] - a[:, 0]) / area2
            self._cache["bgrad"] = _frozen(g)
        return self._cache["bgrad"]

    @property
    def diam(self) -> float:
        if "diam" not in self._cache:
            c = self.coords2
            if self.dim == 1:
                d = float(c.max() - c.min())
            else:
                try:
                    from scipy.spatial import ConvexHull

                    hull = c[ConvexHull(c).vertices]
                except Exception:
                    hull = c
                diff = hull[:, None, :] - hull[None, :, :]
                d = float(np.sqrt((diff**2).sum(-1)).max())
            self._cache["diam"] = d
        return self._cache["diam"]

    @property
    def inradius(self) -> float:
        """Largest node-to-boundary distance (desk-scale approximation)."""
        if "inradius" not in self._cache:
            c = self.coords2
            b = c[self.boundary]
            diff = c[:, None, :] - b[None, :, :]
            self._cache["inradius"] = float(np.sqrt((diff**2).sum(-1)).min(axis=1).max())
        return self._cache["inradius"]

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    def nearest_node(self, point) -> tuple[int, float]:
        """Index of the node closest to ``point`` and the snap distance."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        d = np.sqrt(((self.coords2 - p[None, :]) ** 2).sum(-1))
        j = int(np.argmin(d))
        return j, float(d[j])


@dataclass(eq=False)
class GridFunction:
    """Immutable nodal P1 field on a mesh."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = _frozen(self.values)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError("values shape does not match mesh nodes")

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.mesh, values)


def build_mesh_1d(a: float, b: float, n: int, ambient_n: int = 1) -> Mesh:
    """Uniform segment mesh of (a, b) with n elements.

    With ambient_n > 1 the mesh emulates the radial coordinate of an
    ambient_n-dimensional ball or annulus: a must be nonnegative and every
    element carries the weight midpoint**(ambient_n - 1).
    """
    if not (a < b):
        raise ValueError("need a < b")
    n = int(n)
    if n < 2:
        raise ValueError("need at least 2 elements")
    if ambient_n > 1 and a < 0:
        raise ValueError("radial emulation needs a >= 0")
    nodes = np.linspace(a, b, n + 1)
    return _segment_mesh(nodes, ambient_n)


def build_mesh_1d_log(a: float, b: float, n: int, ambient_n: int = 1) -> Mesh:
    """Log-graded segment mesh of (a, b), a > 0; n elements."""
    if not (0 < a < b):
        raise ValueError("log grading needs 0 < a < b")
    if int(n) < 2:
        raise ValueError("need at least 2 elements")
    nodes = np.exp(np.linspace(math.log(a), math.log(b), int(n) + 1))
    return _segment_mesh(nodes, ambient_n)


def _segment_mesh(nodes: np.ndarray, ambient_n: int) -> Mesh:
    n = len(nodes) - 1
    elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    boundary = np.zeros(n + 1, dtype=bool)
    boundary[[0, -1]] = True
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    weight = mid ** (ambient_n - 1) if ambient_n > 1 else np.ones(n)
    return Mesh(1, nodes, elements, boundary, weight, int(ambient_n))


def build_mesh_2d(x0: float, y0: float, x1: float, y1: float, nx: int, ny: int) -> Mesh:
    """Structured triangulation of the rectangle (x0, x1) x (y0, y1).

    Each of the nx*ny cells is split into two triangles along the
    lower-left to upper-right diagonal.
    """
    if not (x0 < x1 and y0 < y1):
        raise ValueError("need x0 < x1 and y0 < y1")
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell per direction")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)

    def nid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            ll, lr = nid(i, j), nid(i + 1, j)
            ul, ur = nid(i, j + 1), nid(i + 1, j + 1)
            tris.append((ll, lr, ur))
            tris.append((ll, ur, ul))
    elements = np.asarray(tris, dtype=np.int64)
    boundary = (
        np.isclose(nodes[:, 0], x0)
        | np.isclose(nodes[:, 0], x1)
        | np.isclose(nodes[:, 1], y0)
        | np.isclose(nodes[:, 1], y1)
    )
    weight = np.ones(len(elements))
    return Mesh(2, nodes, elements, boundary, weight, 2)


def submesh(mesh: Mesh, keep_elements) -> tuple[Mesh, np.ndarray]:
    """Restrict a mesh to a subset of its elements.

    Returns the restricted mesh together with the map old-node -> new-node
    (-1 where dropped). Nodes on the frontier of the kept region are marked
    as boundary, in addition to surviving original boundary nodes.
    """
    keep = np.asarray(keep_elements)
    if keep.dtype == bool:
        keep = np.flatnonzero(keep)
    if len(keep) == 0:
        raise ValueError("empty submesh")
    elems = mesh.elements[keep]
    used = np.unique(elems)
    node_map = np.full(mesh.n_nodes, -1, dtype=np.int64)
    node_map[used] = np.arange(len(used))
    new_elems = node_map[elems]
    new_nodes = mesh.nodes[used]

    # Count element adjacency per node before and after; a kept node that
    # lost elements sits on the new frontier.
    old_count = np.bincount(mesh.elements.ravel(), minlength=mesh.n_nodes)
    new_count = np.bincount(elems.ravel(), minlength=mesh.n_nodes)
    frontier = (new_count > 0) & (new_count < old_count)
    new_boundary = (mesh.boundary | frontier)[used]
    new_weight = mesh.measure_weight[keep]
    sub = Mesh(mesh.dim, new_nodes, new_elems, new_boundary, new_weight, mesh.ambient_n)
    return sub, node_map


def midpoint_values(u: GridFunction) -> np.ndarray:
    """Element-midpoint values of the P1 interpolant (vertex average)."""
    return u.values[u.mesh.elements].mean(axis=1)


def gradient(u: GridFunction) -> np.ndarray:
    """Exact per-element gradient of the P1 field, shape (M, dim)."""
    return np.einsum("mk,mkd->md", u.values[u.mesh.elements], u.mesh.basis_gradients)


def integrate(f, mesh: Mesh | None = None) -> float:
    """Weighted integral by the element-midpoint rule.

    ``f`` may be a GridFunction (midpoint values of its interpolant are
    used), a per-element array, or a callable evaluated at element
    midpoints. Summation is compensated, so the result is independent of
    element order.
    """
    if isinstance(f, GridFunction):
        mesh = f.mesh
        vals = midpoint_values(f)
    elif callable(f):
        if mesh is None:
            raise ValueError("mesh required for callable integrands")
        pts = mesh.midpoints
        vals = np.asarray(f(pts[:, 0] if mesh.dim == 1 else pts), dtype=float)
    else:
        if mesh is None:
            raise ValueError("mesh required for array integrands")
        vals = np.asarray(f, dtype=float)
        if vals.shape != (mesh.n_elements,):
            raise ValueError("per-element array has wrong length")
    return ksum(vals * mesh.element_measures * mesh.measure_weight)


def p_norm(u: GridFunction, p: float) -> float:
    """(integral of |u|**p) ** (1/p) with midpoint quadrature."""
    mv = np.abs(midpoint_values(u))
    total = ksum(mv**p * u.mesh.element_measures * u.mesh.measure_weight)
    return total ** (1.0 / p)


def zero_extend(u: GridFunction, target: Mesh, inclusion: np.ndarray) -> GridFunction:
    """Extend u by zero onto a containing mesh via a node-inclusion map."""
    vals = np.zeros(target.n_nodes)
    vals[inclusion] = u.values
    return GridFunction(target, vals)


@dataclass(eq=False)
class ExhaustionSchedule:
    """Nested member meshes exhausting a limiting domain.

    inclusion[i] maps member i node indices into member i+1 (None when the
    grids do not match node-for-node; ``exact`` records which maps preserve
    coordinates exactly). x0 and x1 hold the per-member node index of the
    requested normalization and reference points, with snap distances.
    """

    kind: str
    params: dict
    meshes: list
    inclusion: list
    exact: list
    x0: list
    x0_snap: list
    x1: list
    x1_snap: list

    @property
    def count(self) -> int:
        return len(self.meshes)


def _inclusion_map(small: Mesh, big: Mesh, tol=1e-9):
    cs, cb = small.coords2, big.coords2
    d = np.sqrt(((cs[:, None, :] - cb[None, :, :]) ** 2).sum(-1))
    idx = d.argmin(axis=1)
    exact = bool((d[np.arange(len(cs)), idx] <= tol * max(big.diam, 1.0)).all())
    return idx.astype(np.int64), exact


def make_exhaustion(kind: str, params: dict | None = None, count: int = 2) -> ExhaustionSchedule:
    """Build a nested family of meshes.

    Kinds
    -----
    interval_growing
        Segments centered at ``center`` with radii growing harmonically
        (radius0 * i) or geometrically (radius0 * factor**(i-1)); fixed
        spacing ``h`` keeps members nested node-for-node.
    annulus
        1D radial annuli. Geometric mode: (growth**-i, growth**i) with
        ``nodes_per_log`` elements per log(growth), exactly nested on the
        shared exponential grid. Harmonic mode: (1/i, i) for i = start..,
        each log-graded with ``n`` elements (not node-nested).
    square_growing
        Squares (-r_i, r_i)^2 on a fixed grid spacing ``h``.

    count >= 2 members are required and each member must be strictly
    contained in the next.
    """
    params = dict(params or {})
    count = int(params.pop("count", count))
    if count < 2:
        raise ValueError("an exhaustion needs at least 2 members")

    meshes = []
    if kind == "interval_growing":
        center = float(params.pop("center", 0.0))
        r0 = float(params.pop("radius0", 1.0))
        h = float(params.pop("h", 0.125))
        growth = params.pop("growth", "harmonic")
        factor = float(params.pop("factor", 2.0))
        ambient = int(params.pop("ambient_n", 1))
        for i in range(1, count + 1):
            r = r0 * i if growth == "harmonic" else r0 * factor ** (i - 1)
            m = round(r / h)
            if abs(m * h - r) > 1e-9 * max(1.0, r):
                raise ValueError("radius must be a multiple of the spacing h")
            meshes.append(build_mesh_1d(center - r, center + r, 2 * m, ambient))
        x0_default = center
    elif kind == "annulus":
        mode = params.pop("mode", "geometric")
        ambient = int(params.pop("ambient_n", 3))
        if mode == "geometric":
            growth = float(params.pop("growth", 6.0))
            npl = int(params.pop("nodes_per_log", 128))
            if growth <= 1.0:
                raise ValueError("growth must exceed 1")
            hs = math.log(growth) / npl
            for i in range(1, count + 1):
                ks = np.arange(-i * npl, i * npl + 1)
                nodes = np.exp(ks * hs)
                meshes.append(_segment_mesh(nodes, ambient))
            x0_default = 1.0
        elif mode == "harmonic":
            start = int(params.pop("start", 2))
            n = int(params.pop("n", 256))
            for i in range(start, start + count):
                meshes.append(build_mesh_1d_log(1.0 / i, float(i), n, ambient))
            x0_default = 1.0
        else:
            raise ValueError(f"unknown annulus mode {mode!r}")
    elif kind == "square_growing":
        r0 = float(params.pop("radius0", 1.0))
        h = float(params.pop("h", 0.25))
        growth = params.pop("growth", "harmonic")
        factor = float(params.pop("factor", 2.0))
        for i in range(1, count + 1):
            r = r0 * i if growth == "harmonic" else r0 * factor ** (i - 1)
            m = round(r / h)
            if abs(m * h - r) > 1e-9 * max(1.0, r):
                raise ValueError("radius must be a multiple of the spacing h")
            meshes.append(build_mesh_2d(-r, -r, r, r, 2 * m, 2 * m))
        x0_default = (0.0, 0.0)
    else:
        raise ValueError(f"unknown exhaustion kind {kind!r}")
    if params:
        raise ValueError(f"unknown exhaustion parameters: {sorted(params)}")

    # Strict containment check on coordinate extents.
    for a, b in zip(meshes, meshes[1:]):
        ca, cb = a.coords2, b.coords2
        if not (ca.min(0) > cb.min(0) - 1e-12).all() or not (ca.max(0) < cb.max(0) + 1e-12).all():
            raise ValueError("members are not nested")
        if np.allclose(ca.min(0), cb.min(0)) and np.allclose(ca.max(0), cb.max(0)):
            raise ValueError("members must grow strictly")

    inclusion, exact = [], []
    for a, b in zip(meshes, meshes[1:]):
        m, ex = _inclusion_map(a, b)
        inclusion.append(m)
        exact.append(ex)

    x0_t = params.get("x0", x0_default)
    x1_t = params.get("x1", None)
    x0, x0_snap, x1, x1_snap = [], [], [], []
    for m in meshes:
        j, d = m.nearest_node(x0_t)
        x0.append(j)
        x0_snap.append(d)
        if x1_t is not None:
            j1, d1 = m.nearest_node(x1_t)
        else:
            j1, d1 = j, d
        x1.append(j1)
        x1_snap.append(d1)
    return ExhaustionSchedule(kind, params, meshes, inclusion, exact, x0, x0_snap, x1, x1_snap)


# ---------------------------------------------------------------------------
# CSV interchange


def mesh_to_csv(mesh: Mesh, nodes_path, elements_path):
    with open(nodes_path, "w", newline="") as fh:
        w = csv.writer(fh)
        cols = ["id", "x", "boundary_flag"] if mesh.dim == 1 else ["id", "x", "y", "boundary_flag"]
        w.writerow(cols)
        for i in range(mesh.n_nodes):
            xy = [repr(float(c)) for c in np.atleast_1d(mesh.coords2[i])]
            w.writerow([i, *xy, int(mesh.boundary[i])])
    with open(elements_path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["id"] + [f"node{k}" for k in range(mesh.dim + 1)] + ["weight"]
        w.writerow(head)
        for e in range(mesh.n_elements):
            w.writerow([e, *[int(j) for j in mesh.elements[e]], repr(float(mesh.measure_weight[e]))])


def mesh_from_csv(nodes_path, elements_path, ambient_n: int | None = None) -> Mesh:
    with open(nodes_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    dim = 2 if "y" in rows[0] else 1
    order = np.argsort([int(r["id"]) for r in rows])
    rows = [rows[i] for i in order]
    if dim == 1:
        nodes = np.array([float(r["x"]) for r in rows])
    else:
        nodes = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    boundary = np.array([bool(int(r["boundary_flag"])) for r in rows])
    with open(elements_path, newline="") as fh:
        erows = list(csv.DictReader(fh))
    order = np.argsort([int(r["id"]) for r in erows])
    erows = [erows[i] for i in order]
    elements = np.array([[int(r[f"node{k}"]) for k in range(dim + 1)] for r in erows], dtype=np.int64)
    weight = np.array([float(r["weight"]) for r in erows])
    if ambient_n is None:
        ambient_n = dim if dim == 2 or np.allclose(weight, 1.0) else 3
    return Mesh(dim, nodes, elements, boundary, weight, int(ambient_n))


def grid_function_to_csv(u: GridFunction, path):
    mesh = u.mesh
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "value"] if mesh.dim == 1 else ["id", "x", "y", "value"])
        for i in range(mesh.n_nodes):
            xy = [repr(float(c)) for c in np.atleast_1d(mesh.coords2[i])]
            w.writerow([i, *xy, repr(float(u.values[i]))])


def grid_function_from_csv(mesh: Mesh, path) -> GridFunction:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    vals = np.zeros(mesh.n_nodes)
    for r in rows:
        vals[int(r["id"])] = float(r["value"])
    return GridFunction(mesh, vals)
