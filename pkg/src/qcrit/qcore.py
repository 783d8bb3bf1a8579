"""Operator core: coefficient fields, energies, weak residuals, inequalities.

The operator acts on nodal P1 fields u through the energy

    Q[u] = integral( anorm(grad u)**p + V * |u|**p )

with anorm the anisotropic norm induced by a per-element SPD matrix field A
and V a scalar potential. Everything downstream (solvers, eigenpairs,
criticality probes) is phrased in terms of the three primitives here: energy,
weak residual against interior hat functions, and the pointwise vector
inequalities that make two-sided verification possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import GridFunction, Mesh, gradient, midpoint_values
from .util import ksum

__all__ = [
    "MatrixField",
    "PotentialField",
    "ProblemSpec",
    "anorm",
    "energy",
    "residual",
    "residual_scale",
    "lindqvist_gap",
    "lindqvist_integral",
    "negative_part_subsolution_check",
    "harnack_ratio",
    "monotone_flux_gap",
]


@dataclass(eq=False, frozen=True)
class MatrixField:
    """Per-element SPD coefficient matrices, defined by a small catalog.

    Kinds: identity; scalar {c}; diag {cx, cy}; table {values}.
    """

    kind: str = "identity"
    params: dict = field(default_factory=dict)

    @staticmethod
    def identity() -> "MatrixField":
        return MatrixField("identity", {})

    @staticmethod
    def scalar(c: float) -> "MatrixField":
        return MatrixField("scalar", {"c": float(c)})

    @staticmethod
    def diag(cx: float, cy: float) -> "MatrixField":
        return MatrixField("diag", {"cx": float(cx), "cy": float(cy)})

    @staticmethod
    def table(values) -> "MatrixField":
        return MatrixField("table", {"values": np.asarray(values, dtype=float)})

    def evaluate(self, mesh: Mesh) -> np.ndarray:
        d = mesh.dim
        m = mesh.n_elements
        if self.kind == "identity":
            out = np.broadcast_to(np.eye(d), (m, d, d)).copy()
        elif self.kind == "scalar":
            out = np.broadcast_to(self.params["c"] * np.eye(d), (m, d, d)).copy()
        elif self.kind == "diag":
            if d == 1:
                out = np.full((m, 1, 1), self.params["cx"])
            else:
                out = np.zeros((m, 2, 2))
                out[:, 0, 0] = self.params["cx"]
                out[:, 1, 1] = self.params["cy"]
        elif self.kind == "table":
            out = np.asarray(self.params["values"], dtype=float)
            if out.shape != (m, d, d):
                raise ValueError("matrix table shape does not match mesh")
            out = out.copy()
        else:
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        _check_spd(out)
        return out

    def to_dict(self) -> dict:
        p = {k: v for k, v in self.params.items() if k != "values"}
        return {"kind": self.kind, **p}


def _check_spd(a: np.ndarray):
    if not np.allclose(a, np.swapaxes(a, 1, 2), atol=1e-12):
        raise ValueError("matrix field is not symmetric")
    if a.shape[1] == 1:
        lmin = a[:, 0, 0]
    else:
        tr = a[:, 0, 0] + a[:, 1, 1]
        det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
        lmin = 0.5 * tr - np.sqrt(np.maximum((0.5 * tr) ** 2 - det, 0.0))
    if np.any(lmin <= 0):
        raise ValueError("matrix field is not positive definite")


def ellipticity_theta(a: np.ndarray) -> np.ndarray:
    """Per-element theta with theta*|xi| <= anorm(xi) <= |xi|/theta."""
    if a.shape[1] == 1:
        lmin = lmax = a[:, 0, 0]
    else:
        tr = a[:, 0, 0] + a[:, 1, 1]
        det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
        disc = np.sqrt(np.maximum((0.5 * tr) ** 2 - det, 0.0))
        lmin, lmax = 0.5 * tr - disc, 0.5 * tr + disc
    return np.minimum(np.sqrt(lmin), 1.0 / np.sqrt(lmax))


@dataclass(eq=False, frozen=True)
class PotentialField:
    """Scalar coefficient (or load) field from a small named catalog.

    Kinds: const {c}; hardy {beta} giving -beta * r**(-p); radial_power
    {c, alpha} giving c * r**alpha; step {c, lo, hi} (c on a box, else 0);
    hat {center, halfwidth} (tent, normalized to unit weighted integral);
    table {values}; linear {terms} for linear combinations.

    Radial kinds measure r as the euclidean norm of the midpoint
    coordinates, which on a radial 1D mesh is the radius itself.
    """

    kind: str = "const"
    params: dict = field(default_factory=dict)

    @staticmethod
    def const(c: float) -> "PotentialField":
        return PotentialField("const", {"c": float(c)})

    @staticmethod
    def zero() -> "PotentialField":
        return PotentialField.const(0.0)

    @staticmethod
    def hardy(beta: float) -> "PotentialField":
        return PotentialField("hardy", {"beta": float(beta)})

    @staticmethod
    def radial_power(c: float, alpha: float) -> "PotentialField":
        return PotentialField("radial_power", {"c": float(c), "alpha": float(alpha)})

    @staticmethod
    def step(c: float, lo, hi) -> "PotentialField":
        return PotentialField("step", {"c": float(c), "lo": tuple(np.atleast_1d(lo)), "hi": tuple(np.atleast_1d(hi))})

    @staticmethod
    def hat(center, halfwidth: float, normalize: bool = True) -> "PotentialField":
        return PotentialField("hat", {"center": tuple(np.atleast_1d(center)), "halfwidth": float(halfwidth), "normalize": bool(normalize)})

    @staticmethod
    def table(values) -> "PotentialField":
        return PotentialField("table", {"values": np.asarray(values, dtype=float)})

    @staticmethod
    def linear(terms) -> "PotentialField":
        return PotentialField("linear", {"terms": tuple((float(c), f) for c, f in terms)})

    def scaled(self, c: float) -> "PotentialField":
        return PotentialField.linear([(c, self)])

    def plus(self, other: "PotentialField", coef: float = 1.0) -> "PotentialField":
        return PotentialField.linear([(1.0, self), (coef, other)])

    def evaluate(self, mesh: Mesh, p: float) -> np.ndarray:
        pts = mesh.midpoints
        r = np.sqrt((pts**2).sum(axis=1))
        if self.kind == "const":
            return np.full(mesh.n_elements, self.params["c"])
        if self.kind == "hardy":
            return -self.params["beta"] * r ** (-p)
        if self.kind == "radial_power":
            return self.params["c"] * r ** self.params["alpha"]
        if self.kind == "step":
            lo = np.asarray(self.params["lo"])
            hi = np.asarray(self.params["hi"])
            inside = ((pts >= lo[None, :]) & (pts <= hi[None, :])).all(axis=1)
            return np.where(inside, self.params["c"], 0.0)
        if self.kind == "hat":
            c = np.asarray(self.params["center"])
            w = self.params["halfwidth"]
            dist = np.sqrt(((pts - c[None, :]) ** 2).sum(axis=1))
            vals = np.maximum(0.0, 1.0 - dist / w)
            if self.params.get("normalize", True):
                total = ksum(vals * mesh.element_measures * mesh.measure_weight)
                if total <= 0:
                    raise ValueError("hat support misses the mesh")
                vals = vals / total
            return vals
        if self.kind == "table":
            vals = np.asarray(self.params["values"], dtype=float)
            if vals.shape != (mesh.n_elements,):
                raise ValueError("potential table length does not match mesh")
            return vals.copy()
        if self.kind == "linear":
            out = np.zeros(mesh.n_elements)
            for coef, f in self.params["terms"]:
                out += coef * f.evaluate(mesh, p)
            return out
        raise ValueError(f"unknown potential kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear", "terms": [[c, f.to_dict()] for c, f in self.params["terms"]]}
        p = {k: v for k, v in self.params.items() if k != "values"}
        return {"kind": self.kind, **p}


@dataclass(eq=False)
class ProblemSpec:
    """Bundle of exponent p, mesh, matrix field A, and potential V."""

    p: float
    mesh: Mesh
    A: MatrixField = field(default_factory=MatrixField.identity)
    V: PotentialField = field(default_factory=PotentialField.zero)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("need p > 1")

    @property
    def a_elems(self) -> np.ndarray:
        if "a" not in self._cache:
            self._cache["a"] = self.A.evaluate(self.mesh)
        return self._cache["a"]

    @property
    def v_elems(self) -> np.ndarray:
        if "v" not in self._cache:
            self._cache["v"] = self.V.evaluate(self.mesh, self.p)
        return self._cache["v"]

    @property
    def theta(self) -> float:
        return float(ellipticity_theta(self.a_elems).min())

    def with_potential(self, V: PotentialField) -> "ProblemSpec":
        return ProblemSpec(self.p, self.mesh, self.A, V)

    def with_mesh(self, mesh: Mesh) -> "ProblemSpec":
        return ProblemSpec(self.p, mesh, self.A, self.V)

    def perturbed(self, U: PotentialField, t: float) -> "ProblemSpec":
        """Spec with potential V - t*U."""
        return self.with_potential(self.V.plus(U, -float(t)))

    def shifted(self, c: float) -> "ProblemSpec":
        """Spec with potential V + c."""
        return self.with_potential(self.V.plus(PotentialField.const(1.0), float(c)))


def anorm(xi: np.ndarray, a_elems: np.ndarray) -> np.ndarray:
    """Anisotropic norms sqrt(xi . A xi) per element; xi has shape (M, d)."""
    q = np.einsum("md,mde,me->m", xi, a_elems, xi)
    return np.sqrt(np.maximum(q, 0.0))


def load_values(g, mesh: Mesh, p: float) -> np.ndarray:
    """Per-element load values from a field, grid function, array, or None."""
    if g is None:
        return np.zeros(mesh.n_elements)
    if isinstance(g, PotentialField):
        return g.evaluate(mesh, p)
    if isinstance(g, GridFunction):
        return midpoint_values(g)
    vals = np.asarray(g, dtype=float)
    if vals.ndim == 0:
        return np.full(mesh.n_elements, float(vals))
    if vals.shape != (mesh.n_elements,):
        raise ValueError("load array length does not match mesh")
    return vals


def energy(spec: ProblemSpec, u: GridFunction, eps: float = 0.0) -> float:
    """Q[u]: weighted integral of anorm(grad u)**p + V |u|**p.

    eps > 0 replaces anorm**p by (anorm**2 + eps**2)**(p/2), the smooth
    surrogate used by the descent solver below p = 2.
    """
    g = gradient(u)
    q = np.einsum("md,mde,me->m", g, spec.a_elems, g)
    grad_part = (q + eps * eps) ** (0.5 * spec.p)
    mass_part = spec.v_elems * np.abs(midpoint_values(u)) ** spec.p
    mw = u.mesh.element_measures * u.mesh.measure_weight
    return ksum((grad_part + mass_part) * mw)


def _scatter(mesh: Mesh, contrib: np.ndarray) -> np.ndarray:
    """Accumulate per-element per-vertex contributions into nodal values."""
    out = np.zeros(mesh.n_nodes)
    for k in range(mesh.elements.shape[1]):
        out += np.bincount(mesh.elements[:, k], weights=contrib[:, k], minlength=mesh.n_nodes)
    return out


def _flux(spec: ProblemSpec, u: GridFunction, eps: float) -> np.ndarray:
    g = gradient(u)
    ag = np.einsum("mde,me->md", spec.a_elems, g)
    q = np.einsum("md,md->m", g, ag)
    if eps == 0.0 and spec.p < 2.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(q > 0.0, q ** (0.5 * spec.p - 1.0), 0.0)
    else:
        fac = (q + eps * eps) ** (0.5 * spec.p - 1.0)
    return fac[:, None] * ag


def residual(spec: ProblemSpec, v: GridFunction, g=None, eps: float = 0.0) -> np.ndarray:
    """Weak residual of Q'[v] = g against interior hat functions.

    Entry j is the pairing of the equation with the hat at node j:
    integral( anorm(grad v)**(p-2) A grad v . grad hat_j
              + V |v|**(p-2) v hat_j - g hat_j ).
    Boundary entries are zeroed. The element-midpoint rule evaluates the
    potential and load terms (hat value 1/(dim+1) at the barycenter).
    """
    mesh = v.mesh
    k = mesh.elements.shape[1]
    mw = mesh.element_measures * mesh.measure_weight
    fl = _flux(spec, v, eps)
    grad_contrib = np.einsum("md,mkd->mk", fl, mesh.basis_gradients) * mw[:, None]
    vm = midpoint_values(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        mass = np.where(vm == 0.0, 0.0, spec.v_elems * np.abs(vm) ** (spec.p - 2.0) * vm)
    ge = load_values(g, mesh, spec.p)
    pt_contrib = ((mass - ge) * mw / k)[:, None] * np.ones((1, k))
    out = _scatter(mesh, grad_contrib + pt_contrib)
    out[mesh.boundary] = 0.0
    return out


def residual_scale(spec: ProblemSpec, v: GridFunction, g=None, eps: float = 0.0) -> np.ndarray:
    """Nodal sums of absolute residual contributions; sets sign tolerances."""
    mesh = v.mesh
    k = mesh.elements.shape[1]
    mw = mesh.element_measures * mesh.measure_weight
    fl = _flux(spec, v, eps)
    grad_contrib = np.abs(np.einsum("md,mkd->mk", fl, mesh.basis_gradients)) * mw[:, None]
    vm = midpoint_values(v)
    mass = np.abs(spec.v_elems) * np.abs(vm) ** (spec.p - 1.0)
    ge = np.abs(load_values(g, mesh, spec.p))
    pt_contrib = ((mass + ge) * mw / k)[:, None] * np.ones((1, k))
    out = _scatter(mesh, grad_contrib + pt_contrib)
    out[mesh.boundary] = 0.0
    return out


def sign_tolerance(spec: ProblemSpec, v: GridFunction, g=None, rtol: float = 1e-8) -> np.ndarray:
    return rtol * (1.0 + residual_scale(spec, v, g))


# ---------------------------------------------------------------------------
# Pointwise vector inequalities


def _norms(alpha, beta, a_elems):
    na = anorm(alpha, a_elems)
    nb = anorm(beta, a_elems)
    nd = anorm(alpha - beta, a_elems)
    cross = np.einsum("md,mde,me->m", beta, a_elems, alpha - beta)
    return na, nb, nd, cross


def lindqvist_gap(alpha, beta, a_elems, p: float, c_p: float) -> np.ndarray:
    """Slack in the convexity inequality for anorm(.)**p.

    Computes lhs - c_p * rhs with
        lhs = anorm(alpha)**p - anorm(beta)**p
              - p anorm(beta)**(p-2) <beta, alpha - beta>_A
        rhs = anorm(alpha-beta)**p                      for p >= 2
        rhs = anorm(alpha-beta)**2 (anorm(alpha)+anorm(beta))**(p-2)
                                                        for p < 2,
    zero at alpha = beta = 0. A calibrated c_p keeps the gap nonnegative.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    na, nb, nd, cross = _norms(alpha, beta, a_elems)
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = np.where(nb > 0.0, nb ** (p - 2.0) * cross, 0.0)
    lhs = na**p - nb**p - p * mid
    if p >= 2.0:
        rhs = nd**p
    else:
        s = na + nb
        with np.errstate(divide="ignore", invalid="ignore"):
            rhs = np.where(s > 0.0, nd**2 * s ** (p - 2.0), 0.0)
    return lhs - c_p * rhs


def monotone_flux_gap(x, y, a_elems, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Both gaps in the flux monotonicity chain.

    Returns (outer, inner) with
        outer = (anorm(x)**(p-2) A x - anorm(y)**(p-2) A y) . (x - y)
                - (anorm(x)**(p-1) - anorm(y)**(p-1)) (anorm(x) - anorm(y))
        inner = (anorm(x)**(p-1) - anorm(y)**(p-1)) (anorm(x) - anorm(y)),
    both nonnegative pointwise.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = anorm(x, a_elems)
    ny = anorm(y, a_elems)
    ax = np.einsum("mde,me->md", a_elems, x)
    ay = np.einsum("mde,me->md", a_elems, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        fx = np.where(nx > 0.0, nx ** (p - 2.0), 0.0)[:, None] * ax
        fy = np.where(ny > 0.0, ny ** (p - 2.0), 0.0)[:, None] * ay
    pairing = np.einsum("md,md->m", fx - fy, x - y)
    inner = (nx ** (p - 1.0) - ny ** (p - 1.0)) * (nx - ny)
    return pairing - inner, inner


def lindqvist_integral(
    spec1: ProblemSpec,
    spec2: ProblemSpec,
    w1: GridFunction,
    w2: GridFunction,
    g1=None,
    g2=None,
    h: float = 0.0,
) -> tuple[float, float]:
    """Shifted comparison functional and its gradient-side lower-bound form.

    For nonnegative w1, w2 solving Q'[w_i] = g_i under their specs (sharing
    one mesh), returns (I_h, rhs) with

        I_h = integral( [ (g1 - V1 w1**(p-1)) / (w1+h)**(p-1)
                          - (g2 - V2 w2**(p-1)) / (w2+h)**(p-1) ]
                        * ((w1+h)**p - (w2+h)**p) )

    and rhs the weighted gradient expression

        integral( ((w1+h)**p + (w2+h)**p) * anorm(grad log ratio)**p )

    for p >= 2, with the two-factor degenerate variant below p = 2. A
    calibrated constant c_p makes I_h >= c_p * rhs on seeded batteries.
    h = 0 requires strictly positive w1, w2.
    """
    mesh = w1.mesh
    if w2.mesh is not mesh or spec1.mesh is not mesh or spec2.mesh is not mesh:
        raise ValueError("all inputs must share one mesh")
    if spec1.p != spec2.p:
        raise ValueError("specs must share p")
    p = spec1.p
    if h < 0:
        raise ValueError("h must be nonnegative")
    v1h = w1.values + h
    v2h = w2.values + h
    if np.any(v1h <= 0) or np.any(v2h <= 0):
        raise ValueError("shifted fields must be positive (h = 0 needs positive w)")

    m1 = midpoint_values(w1)
    m2 = midpoint_values(w2)
    m1h, m2h = m1 + h, m2 + h
    ge1 = load_values(g1, mesh, p)
    ge2 = load_values(g2, mesh, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        mp1 = np.where(m1 == 0.0, 0.0, np.abs(m1) ** (p - 2.0) * m1)
        mp2 = np.where(m2 == 0.0, 0.0, np.abs(m2) ** (p - 2.0) * m2)
    term1 = (ge1 - spec1.v_elems * mp1) / m1h ** (p - 1.0)
    term2 = (ge2 - spec2.v_elems * mp2) / m2h ** (p - 1.0)
    diff_p = m1h**p - m2h**p
    mw = mesh.element_measures * mesh.measure_weight
    i_h = ksum((term1 - term2) * diff_p * mw)

    l1 = gradient(GridFunction(mesh, np.log(v1h)))
    l2 = gradient(GridFunction(mesh, np.log(v2h)))
    a_elems = spec1.a_elems
    nd = anorm(l1 - l2, a_elems)
    wsum = m1h**p + m2h**p
    if p >= 2.0:
        rhs = ksum(wsum * nd**p * mw)
    else:
        s = anorm(l1, a_elems) + anorm(l2, a_elems)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(nd > 0.0, wsum * nd**2 * s ** (p - 2.0), 0.0)
        rhs = ksum(vals * mw)
    return i_h, rhs


def negative_part_subsolution_check(spec: ProblemSpec, v: GridFunction, rtol: float = 1e-8) -> dict:
    """Check that the negative part of a supersolution is a subsolution.

    Validates the precondition (v is a supersolution of the homogeneous
    equation), forms v_minus = max(-v, 0), and checks its residual is
    nonpositive up to scaled tolerance. Returns a report dict.
    """
    r_v = residual(spec, v)
    tol_v = sign_tolerance(spec, v, rtol=rtol)
    if np.any(r_v < -tol_v):
        raise ValueError("v is not a supersolution of the homogeneous equation")
    vminus = GridFunction(spec.mesh, np.maximum(-v.values, 0.0))
    r_m = residual(spec, vminus)
    tol_m = sign_tolerance(spec, vminus, rtol=rtol)
    viol = r_m - tol_m
    worst = int(np.argmax(viol))
    return {
        "passed": bool(np.all(r_m <= tol_m)),
        "max_violation": float(max(0.0, viol[worst])),
        "worst_node": worst,
        "negative_part_nonzero": bool(np.any(vminus.values > 0)),
    }


def harnack_ratio(u: GridFunction, inner, outer) -> float:
    """sup/inf of u over the inner node set; u must be positive on the outer.

    inner and outer are node index arrays or boolean masks; inner should be
    contained in outer, which should be compactly contained in the domain
    of positivity for the ratio to mean anything.
    """
    inner = np.asarray(inner)
    outer = np.asarray(outer)
    if inner.dtype == bool:
        inner = np.flatnonzero(inner)
    if outer.dtype == bool:
        outer = np.flatnonzero(outer)
    if len(inner) == 0 or len(outer) == 0:
        raise ValueError("empty node sets")
    if np.any(u.values[outer] <= 0):
        raise ValueError("u must be positive on the outer set")
    vals = u.values[inner]
    return float(vals.max() / vals.min())
