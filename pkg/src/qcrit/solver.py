"""Dirichlet solves by energy descent, with a direct sparse path at p = 2.

The discrete problem is the Euler-Lagrange system of

    J[u] = (1/p) * integral( (anorm(grad u)^2 + eps^2)^(p/2) + V |u|^p )
           - integral( g u )

over nodal P1 fields with fixed boundary values, so the gradient of J on the
free nodes is exactly the weak residual from qcore. Below p = 2 the energy
density is not C^1 at critical points, so the solve walks a decreasing
regularization ladder in eps and finishes unregularized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import GridFunction, Mesh, midpoint_values
from .qcore import PotentialField, ProblemSpec, energy, load_values, residual, residual_scale
from .util import ksum

__all__ = [
    "SolveOptions",
    "IterationTrace",
    "UnboundedBelowError",
    "solve_dirichlet",
    "monotone_iteration",
    "wcp_check",
    "assemble_quadratic",
    "load_vector",
]


class UnboundedBelowError(RuntimeError):
    """Energy descent ran away; evidence that the functional has no minimum."""

    def __init__(self, message: str, evidence: str = "supercritical"):
        super().__init__(message)
        self.evidence = evidence


@dataclass
class SolveOptions:
    tol_grad: float = 1e-10
    max_iter: int = 40000
    eps_regularization: float = 1e-8
    armijo: float = 1e-4
    max_backtracks: int = 60
    blowup_value: float = 1e14
    method: str = "auto"  # auto | newton | bb

    def eps_ladder(self, p: float) -> list:
        if p >= 2.0:
            return [0.0]
        out = []
        e = 1e-2
        while e > self.eps_regularization * (1 + 1e-12):
            out.append(e)
            e *= 0.1
        out.append(self.eps_regularization)
        out.append(0.0)
        return out


@dataclass
class IterationTrace:
    energies: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    eps_levels: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    message: str = ""

    def log(self, e: float, r: float, eps: float):
        self.energies.append(float(e))
        self.residual_norms.append(float(r))
        self.eps_levels.append(float(eps))
        self.n_iter += 1


def load_vector(spec: ProblemSpec, g) -> np.ndarray:
    """Nodal load vector: pairing of g with each hat (midpoint rule)."""
    mesh = spec.mesh
    k = mesh.elements.shape[1]
    ge = load_values(g, mesh, spec.p)
    mw = mesh.element_measures * mesh.measure_weight
    contrib = ge * mw / k
    out = np.zeros(mesh.n_nodes)
    for j in range(k):
        out += np.bincount(mesh.elements[:, j], weights=contrib, minlength=mesh.n_nodes)
    return out


def assemble_quadratic(spec: ProblemSpec) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Stiffness-plus-potential and plain mass matrices for p = 2 forms.

    Returns (S, M) with u.S.u = integral(anorm(grad u)^2 + V u_mid^2) and
    u.M.u = integral(u_mid^2), both over all nodes (no boundary reduction).
    """
    mesh = spec.mesh
    k = mesh.elements.shape[1]
    mw = mesh.element_measures * mesh.measure_weight
    b = mesh.basis_gradients
    stiff = np.einsum("mkd,mde,mle->mkl", b, spec.a_elems, b) * mw[:, None, None]
    mass_blk = np.ones((k, k)) / (k * k)
    mass = mass_blk[None, :, :] * mw[:, None, None]
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    n = mesh.n_nodes
    s_mat = sp.coo_matrix(((stiff + spec.v_elems[:, None, None] * mass).ravel(), (rows, cols)), shape=(n, n)).tocsr()
    m_mat = sp.coo_matrix((mass.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return s_mat, m_mat


def _objective(spec: ProblemSpec, u: GridFunction, bvec: np.ndarray, eps: float) -> float:
    return energy(spec, u, eps) / spec.p - ksum(bvec * u.values)


def _weighted_matrix(spec: ProblemSpec, a_eff: np.ndarray) -> sp.csr_matrix:
    """Stiffness built from per-element matrices plus positive-part potential mass."""
    mesh = spec.mesh
    k = mesh.elements.shape[1]
    mw = mesh.element_measures * mesh.measure_weight
    b = mesh.basis_gradients
    blocks = np.einsum("mkd,mde,mle->mkl", b, a_eff, b) * mw[:, None, None]
    v_plus = (spec.p - 1.0) * np.maximum(spec.v_elems, 0.0)
    blocks = blocks + (np.ones((k, k)) / (k * k))[None, :, :] * (mw * v_plus)[:, None, None]
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _precond_factor(spec: ProblemSpec, u: np.ndarray, eps: float, free_idx: np.ndarray):
    """Factorized Hessian of the regularized energy at u.

    Per element the gradient term contributes
    w A + (p-2) w / (q + eps^2) (A grad u)(A grad u)^T with
    w = (q + eps^2)^((p-2)/2), which is positive definite for every p > 1;
    the positive part of the potential mass keeps the whole model SPD, so
    solves against it give descent directions.  The scalar weight is
    clamped to a bounded condition range so flat spots of u cannot poison
    the factorization.
    """
    mesh = spec.mesh
    from .mesh import gradient as _gradient

    gr = _gradient(GridFunction(mesh, u))
    ag = np.einsum("mde,me->md", spec.a_elems, gr)
    q = np.einsum("md,md->m", gr, ag)
    p = spec.p
    with np.errstate(divide="ignore", over="ignore"):
        w = (q + eps * eps) ** (0.5 * p - 1.0)
    w = np.where(np.isfinite(w), w, 0.0)
    wmax = w.max()
    if wmax <= 0.0:
        return None
    w = np.clip(w, 1e-6 * wmax, wmax)
    denom = q + eps * eps
    coef = np.where(denom > 0.0, (p - 2.0) * w / np.where(denom > 0.0, denom, 1.0), 0.0)
    a_eff = w[:, None, None] * spec.a_elems + coef[:, None, None] * np.einsum("md,me->mde", ag, ag)
    mat = _weighted_matrix(spec, a_eff)
    pf = mat[free_idx][:, free_idx].tocsc()
    pf = pf + sp.identity(len(free_idx), format="csc") * (1e-14 * (abs(pf.diagonal()).max() + 1.0))
    try:
        return spla.splu(pf)
    except RuntimeError:
        return None


def _converged(spec, u, g, eps, rtol):
    r = residual(spec, u, g, eps)
    tol = rtol * (1.0 + residual_scale(spec, u, g, eps))
    slack = np.abs(r) - tol
    return bool(np.all(slack <= 0)), float(np.abs(r).max()), r


def _descend(spec, u0: np.ndarray, g, free: np.ndarray, eps: float, options: SolveOptions, trace: IterationTrace) -> np.ndarray:
    mesh = spec.mesh
    bvec = load_vector(spec, g)
    u = u0.copy()
    gf = GridFunction(mesh, u)
    jval = _objective(spec, gf, bvec, eps)
    j0 = abs(jval) + 1.0
    r = residual(spec, gf, g, eps)
    # the scale side of the tolerance moves slowly; refresh it sparingly and
    # always confirm convergence against a fresh one
    tol = options.tol_grad * (1.0 + residual_scale(spec, gf, g, eps))
    tol_age = 0
    use_newton = options.method == "newton" or (options.method == "auto" and spec.p != 2.0)
    free_idx = np.flatnonzero(free)
    step = None
    u_prev = None
    r_prev = None
    while True:
        if np.all(np.abs(r) <= tol):
            tol = options.tol_grad * (1.0 + residual_scale(spec, gf, g, eps))
            tol_age = 0
            if np.all(np.abs(r) <= tol):
                trace.converged = True
                trace.log(jval, float(np.abs(r).max()), eps)
                return u
        if trace.n_iter >= options.max_iter:
            trace.message = f"max_iter reached at eps={eps:g}"
            return u
        d = None
        newton_dir = False
        if use_newton:
            lu = _precond_factor(spec, u, eps, free_idx)
            if lu is not None:
                cand = np.zeros_like(u)
                cand[free_idx] = lu.solve(r[free_idx])
                gtd = ksum(r[free_idx] * cand[free_idx])
                if np.isfinite(gtd) and gtd > 0 and np.all(np.isfinite(cand)):
                    d = cand
                    t = 1.0
                    newton_dir = True
        if newton_dir and np.abs(d).max() <= 1e-15 * (1.0 + np.abs(u).max()):
            # the model asks for a sub-ulp correction: the iterate is the
            # best representable solution, whatever the requested tolerance
            rmax = float(np.abs(r).max())
            trace.converged = bool(np.all(np.abs(r) <= 1e4 * tol))
            trace.message = (
                "converged at representable precision"
                if trace.converged
                else "stalled at representable precision"
            )
            trace.log(jval, rmax, eps)
            return u
        if d is None:
            d = np.where(free, r, 0.0)
            gtd = ksum(r[free] * d[free])
            if gtd <= 0:
                trace.message = "descent direction degenerate"
                return u
            if step is None or u_prev is None:
                step = 1.0 / (1.0 + np.abs(d).max() / (1.0 + np.abs(u).max()))
            else:
                s = u - u_prev
                y = r - r_prev
                sy = ksum(s[free] * y[free])
                ss = ksum(s[free] * s[free])
                step = ss / sy if sy > 1e-300 * ss else step * 2.0
                step = float(np.clip(step, 1e-16, 1e16))
            t = step
        u_prev, r_prev = u.copy(), r.copy()
        # near stationarity the predicted decrease drops below the rounding
        # noise of J and the Armijo comparison turns into a coin flip; a unit
        # step against the SPD model is safe there, so take it outright
        noise_floor = 1e-13 * (abs(jval) + 1.0)
        if newton_dir and gtd <= noise_floor and np.abs(d).max() <= 1e-6 * (1.0 + np.abs(u).max()):
            u_try = u - d
            j_try = _objective(spec, GridFunction(mesh, u_try), bvec, eps)
        else:
            for _ in range(options.max_backtracks):
                u_try = u - t * d
                j_try = _objective(spec, GridFunction(mesh, u_try), bvec, eps)
                if j_try <= jval - options.armijo * t * gtd:
                    break
                t *= 0.5
            else:
                trace.message = "line search stalled"
                trace.log(jval, float(np.abs(r).max()), eps)
                return u
        u = u_try
        jval = j_try
        gf = GridFunction(mesh, u)
        if jval < -options.blowup_value * j0 or np.abs(u).max() > options.blowup_value:
            raise UnboundedBelowError(
                "energy descent is unbounded below; the form admits no minimizer "
                "on this mesh (supercritical evidence)"
            )
        r = residual(spec, gf, g, eps)
        trace.log(jval, float(np.abs(r).max()), eps)
        tol_age += 1
        if tol_age >= 25:
            tol = options.tol_grad * (1.0 + residual_scale(spec, gf, g, eps))
            tol_age = 0


def _boundary_values(mesh: Mesh, bc) -> np.ndarray:
    vals = np.zeros(mesh.n_nodes)
    if bc is None:
        return vals
    if np.isscalar(bc):
        vals[mesh.boundary] = float(bc)
        return vals
    arr = bc.values if isinstance(bc, GridFunction) else np.asarray(bc, dtype=float)
    if arr.shape != (mesh.n_nodes,):
        raise ValueError("boundary data must be scalar or a full nodal array")
    vals[mesh.boundary] = arr[mesh.boundary]
    return vals


def _solve_p2(spec: ProblemSpec, g, f_boundary, options: SolveOptions) -> tuple[GridFunction, IterationTrace]:
    mesh = spec.mesh
    s_mat, _ = assemble_quadratic(spec)
    bvec = load_vector(spec, g)
    u = _boundary_values(mesh, f_boundary)
    free = np.flatnonzero(~mesh.boundary)
    rhs = bvec[free] - (s_mat @ u)[free]
    a_ff = s_mat[free][:, free]
    with np.errstate(all="ignore"):
        u[free] = spla.spsolve(a_ff.tocsc(), rhs)
    if not np.all(np.isfinite(u)):
        # singular factorization; restart from the boundary lift and descend
        u = _boundary_values(mesh, f_boundary)
    gf = GridFunction(mesh, u)
    trace = IterationTrace()
    ok, rnorm, _ = _converged(spec, gf, g, 0.0, max(options.tol_grad, 1e-9))
    trace.log(_objective(spec, gf, bvec, 0.0), rnorm, 0.0)
    trace.converged = bool(ok)
    if not ok:
        # direct solve off tolerance signals an indefinite or near-singular
        # form; fall through to descent which can detect unboundedness
        u2 = _descend(spec, u, g, ~mesh.boundary, 0.0, options, trace)
        gf = GridFunction(mesh, u2)
    trace.message = trace.message or "direct sparse solve"
    return gf, trace


def solve_dirichlet(spec: ProblemSpec, g, f_boundary=None, options: SolveOptions | None = None, u0: GridFunction | None = None) -> tuple[GridFunction, IterationTrace]:
    """Solve the Dirichlet problem for Q'[u] = g with given boundary values.

    g is a PotentialField, per-element array, GridFunction, or None.
    f_boundary is None (zero), a scalar, or a nodal array. Returns the solution and an
    iteration trace. Raises UnboundedBelowError when descent detects that
    the energy has no minimum, which is the discrete symptom of an
    indefinite form.

    At p = 2 an assembled sparse solve is attempted first; a residual check
    guards it, and failing that the descent path takes over (the two paths
    double as independent solvers for uniqueness probes).
    """
    options = options or SolveOptions()
    if spec.p == 2.0 and u0 is None:
        return _solve_p2(spec, g, f_boundary, options)
    mesh = spec.mesh
    free = ~mesh.boundary
    u = _boundary_values(mesh, f_boundary)
    if u0 is not None:
        u = u0.values.copy()
        u[mesh.boundary] = _boundary_values(mesh, f_boundary)[mesh.boundary]
    else:
        # seed with the unit-weight linear surrogate; a flat start leaves the
        # p != 2 Hessian model degenerate and descent crawls out of it
        free_idx = np.flatnonzero(free)
        mat = _weighted_matrix(spec, spec.a_elems)
        rhs = load_vector(spec, g)[free_idx] - (mat @ u)[free_idx]
        with np.errstate(all="ignore"):
            try:
                corr = spla.spsolve(mat[free_idx][:, free_idx].tocsc(), rhs)
            except RuntimeError:
                corr = np.full(len(free_idx), np.nan)
        if np.all(np.isfinite(corr)):
            u = u.copy()
            u[free_idx] += corr
    trace = IterationTrace()
    ladder = options.eps_ladder(spec.p)
    if u0 is not None and spec.p < 2.0:
        # a warm start already sits near the unregularized minimizer
        ladder = [options.eps_regularization, 0.0]
    for eps in ladder:
        trace.converged = False
        u = _descend(spec, u, g, free, eps, options, trace)
        if not trace.converged and eps > 0:
            # an unconverged inner rung still warm-starts the next one
            continue
    if not trace.converged and not trace.message:
        trace.message = "descent did not converge"
    return GridFunction(mesh, u), trace


def _sweep(spec_abs, ge, v_minus, f_boundary, start: GridFunction, direction: str, options, tol, max_sweeps):
    """Iterate the coercive fixed-point map T from one ordered end."""
    p = spec_abs.p
    u = start
    trace = IterationTrace()
    sign = 1.0 if direction == "down" else -1.0
    for sweep in range(max_sweeps):
        um = midpoint_values(u)
        rhs = ge + 2.0 * v_minus * np.maximum(um, 0.0) ** (p - 1.0)
        warm = u if (sweep and p != 2.0) else None
        u_next, _ = solve_dirichlet(spec_abs, rhs, f_boundary, options=options, u0=warm)
        diff = sign * (u.values - u_next.values)
        scale = 1.0 + np.abs(u.values).max()
        monotone_ok = bool(np.all(diff >= -1e-9 * scale))
        trace.residual_norms.append(float(np.abs(diff).max()))
        trace.flags.append(monotone_ok)
        trace.n_iter += 1
        if not monotone_ok:
            bad = int(np.argmin(diff))
            raise ValueError(f"monotone ordering violated at node {bad} on sweep {sweep}")
        u = u_next
        if np.abs(diff).max() <= tol * scale:
            trace.converged = True
            break
    trace.message = direction
    return u, trace


def monotone_iteration(
    spec: ProblemSpec,
    g,
    f_boundary=None,
    psi: GridFunction | None = None,
    phi: GridFunction | None = None,
    options: SolveOptions | None = None,
    tol: float = 1e-10,
    max_sweeps: int = 200,
) -> tuple[GridFunction, GridFunction, dict]:
    """Two-sided sub/supersolution iteration for sign-changing potentials.

    Splits V = V_plus - V_minus and iterates the map T(v) = solution of
    Q'[w] = g + 2 V_minus v^(p-1) under the potential |V| and the given
    boundary values. Run upward from the subsolution psi and downward from
    the supersolution phi, each sweep is an ordered coercive solve, and the
    two limits bracket every solution between them. g must be nonnegative.

    Defaults: psi = 0 (a subsolution since g >= 0); phi = the constant
    (max g / min V)^(1/(p-1)), valid when V has a positive lower bound,
    otherwise phi must be passed. Returns (u_lower, u_upper, report); the
    report carries both traces, per-sweep monotonicity, ordering checks,
    and the fixed-point residuals against the original potential.
    """
    mesh = spec.mesh
    p = spec.p
    ge = load_values(g, mesh, p)
    if np.any(ge < 0):
        raise ValueError("monotone iteration needs a nonnegative load")
    fvals = _boundary_values(mesh, f_boundary)
    if np.any(fvals[mesh.boundary] < 0):
        raise ValueError("boundary data must be nonnegative")
    v_elems = spec.v_elems
    v_minus = np.maximum(-v_elems, 0.0)
    assert np.all(np.abs(v_elems) >= 0.0)
    spec_abs = spec.with_potential(PotentialField.table(np.abs(v_elems)))
    if psi is None:
        psi = GridFunction(mesh, np.zeros(mesh.n_nodes))
    if phi is None:
        vmin = v_elems.min()
        if vmin <= 0:
            raise ValueError("default supersolution needs min V > 0; pass phi")
        c = max((ge.max() / vmin) ** (1.0 / (p - 1.0)), fvals.max())
        phi = GridFunction(mesh, np.full(mesh.n_nodes, c))
    sc = 1.0 + np.abs(phi.values).max()
    if np.any(psi.values < -1e-12 * sc) or np.any(psi.values > phi.values + 1e-12 * sc):
        raise ValueError("need 0 <= psi <= phi")
    b = mesh.boundary
    if np.any(psi.values[b] > fvals[b] + 1e-12 * sc) or np.any(fvals[b] > phi.values[b] + 1e-12 * sc):
        raise ValueError("need psi <= f <= phi on the boundary")
    tol_sub = sign_tolerance_for(spec, psi, g)
    tol_sup = sign_tolerance_for(spec, phi, g)
    r_psi = residual(spec, psi, g)
    r_phi = residual(spec, phi, g)
    report = {
        "psi_subsolution": bool(np.all(r_psi <= tol_sub)),
        "phi_supersolution": bool(np.all(r_phi >= -tol_sup)),
    }
    if not report["psi_subsolution"]:
        raise ValueError("psi is not a subsolution")
    if not report["phi_supersolution"]:
        raise ValueError("phi is not a supersolution")
    u_lower, tr_lo = _sweep(spec_abs, ge, v_minus, f_boundary, psi, "up", options, tol, max_sweeps)
    u_upper, tr_up = _sweep(spec_abs, ge, v_minus, f_boundary, phi, "down", options, tol, max_sweeps)
    report.update(
        lower_trace=tr_lo,
        upper_trace=tr_up,
        converged=bool(tr_lo.converged and tr_up.converged),
        limits_ordered=bool(np.all(u_lower.values <= u_upper.values + 1e-9 * sc)),
        gap=float(np.abs(u_upper.values - u_lower.values).max()),
        lower_residual=float(np.abs(residual(spec, u_lower, g)).max()),
        upper_residual=float(np.abs(residual(spec, u_upper, g)).max()),
    )
    return u_lower, u_upper, report


def sign_tolerance_for(spec, u, g, rtol: float = 1e-8) -> np.ndarray:
    return rtol * (1.0 + residual_scale(spec, u, g))


def wcp_check(
    spec: ProblemSpec,
    u1: GridFunction,
    u2: GridFunction,
    g=None,
    lambda1: float | None = None,
    rtol: float = 1e-8,
) -> dict:
    """Weak comparison verdict: a subsolution stays below a solution.

    Preconditions, each reported as "inapplicable" rather than failure when
    violated: lambda1 > 0 when supplied; u2 solves Q'[u2] = g to tolerance;
    u1 is a subsolution of the same equation (residual <= +tol entrywise);
    u1 <= u2 at boundary nodes with u2 nonnegative there. Verdict "pass"
    iff u1 <= u2 + tol at every node, else "fail" with the violating nodes.
    """
    mesh = spec.mesh
    report = {"verdict": None, "margin": None, "why": "", "bad_nodes": []}
    if lambda1 is not None and lambda1 <= 0:
        report.update(verdict="inapplicable", why="lambda1 <= 0")
        return report
    bscale = np.abs(u1.values).max() + np.abs(u2.values).max() + 1.0
    b = mesh.boundary
    if np.any(u1.values[b] > u2.values[b] + 1e-12 * bscale):
        report.update(verdict="inapplicable", why="boundary values are not ordered")
        return report
    if np.any(u2.values[b] < -1e-12 * bscale):
        report.update(verdict="inapplicable", why="u2 negative on the boundary")
        return report
    r2 = residual(spec, u2, g)
    tol2 = rtol * (1.0 + residual_scale(spec, u2, g))
    if np.any(np.abs(r2) > tol2):
        report.update(verdict="inapplicable", why="u2 is not a solution to tolerance")
        return report
    r1 = residual(spec, u1, g)
    tol1 = rtol * (1.0 + residual_scale(spec, u1, g))
    if np.any(r1 > tol1):
        report.update(verdict="inapplicable", why="u1 is not a subsolution")
        return report
    excess = u1.values - u2.values
    margin = float(excess.max())
    tol = 1e-8 * bscale
    bad = np.flatnonzero(excess > tol)
    report.update(verdict="pass" if len(bad) == 0 else "fail", margin=margin, bad_nodes=bad.tolist())
    return report
