"""Ball-supremum potential norms and the uncertainty-type splitting.

The norm regimes switch on how the gradient exponent p compares with the
ambient dimension n: below n the scaling weight is a power of the ball
radius, at n it is a logarithm, above n the norm collapses to plain L^1.
All suprema are taken over node-centered balls with a dyadic radius
ladder, so every reported value is a lower bound of the continuum norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh, GridFunction, gradient, midpoint_values
from .qcore import PotentialField
from .util import ksum, stream_rng

__all__ = [
    "MorreyParams",
    "BallSampling",
    "morrey_norm",
    "morrey_norm_detail",
    "morrey_adams_split",
]


@dataclass(frozen=True)
class MorreyParams:
    """Exponent triple (p, n, q) with its derived norm regime.

    q is constrained by the regime: q > n/p below n, q > n at n, and it is
    ignored entirely above n where the norm is L^1.
    """

    p: float
    n: int
    q: float = 1.0
    regime: str = field(init=False)

    def __post_init__(self):
        p, n, q = float(self.p), int(self.n), float(self.q)
        if p <= 1.0:
            raise ValueError("need p > 1")
        if n < 1:
            raise ValueError("need n >= 1")
        if p < n:
            if q <= n / p:
                raise ValueError(f"regime p < n needs q > n/p = {n / p:g}, got q = {q:g}")
            regime = "p_lt_n"
        elif p == n:
            if q <= n:
                raise ValueError(f"regime p = n needs q > n, got q = {q:g}")
            regime = "p_eq_n"
        else:
            regime = "p_gt_n"
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "regime", regime)

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0) if self.q > 1.0 else math.inf

    def to_dict(self) -> dict:
        return {"p": self.p, "n": self.n, "q": self.q, "regime": self.regime}


@dataclass(frozen=True)
class BallSampling:
    """Centers and radii that discretize the ball supremum.

    Radii must lie strictly inside (0, diam); centers index mesh nodes.
    """

    centers: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.int64)
        r = np.asarray(sorted(set(float(x) for x in np.asarray(self.radii).ravel())), dtype=float)
        if c.ndim != 1 or len(c) == 0:
            raise ValueError("need at least one center")
        if len(r) == 0 or r[0] <= 0.0:
            raise ValueError("radii must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radii", r)
        self.centers.setflags(write=False)
        self.radii.setflags(write=False)

    @staticmethod
    def dyadic(mesh: Mesh, levels: int = 8, max_centers: int | None = None, seed: int = 0) -> "BallSampling":
        """Node centers with the radius ladder diam * 2**-k, k = 1..levels."""
        if levels < 4:
            raise ValueError("need at least 4 ladder levels")
        d = mesh.diam
        radii = d * 0.5 ** np.arange(1, levels + 1)
        centers = np.arange(mesh.n_nodes)
        if max_centers is not None and max_centers < len(centers):
            rng = stream_rng(seed, "ball_centers")
            centers = np.sort(rng.choice(centers, size=max_centers, replace=False))
        return BallSampling(centers, radii)

    def validate_for(self, mesh: Mesh) -> None:
        if self.centers.min() < 0 or self.centers.max() >= mesh.n_nodes:
            raise ValueError("center indices outside the mesh")
        if self.radii.max() >= mesh.diam:
            raise ValueError("radii must stay below the mesh diameter")


def _radius_factor(params: MorreyParams, radii: np.ndarray, diam: float) -> np.ndarray:
    if params.regime == "p_lt_n":
        return radii ** (-params.n / params.q_conj)
    # log weight; exponent q/n' with n' = n/(n-1)
    n_conj = params.n / (params.n - 1.0)
    return np.log(diam / radii) ** (params.q / n_conj)


def morrey_norm_detail(V: PotentialField, mesh: Mesh, params: MorreyParams, sampling: BallSampling | None = None) -> dict:
    """Norm plus the maximizing ball and regime bookkeeping.

    A mesh emulating a higher ambient dimension has no honest balls, so it
    falls back to the weighted L^1 norm and says so.
    """
    absv = np.abs(V.evaluate(mesh, params.p))
    mw = mesh.element_measures * mesh.measure_weight
    cell = absv * mw
    if mesh.ambient_n != mesh.dim:
        return {
            "norm": float(ksum(cell)),
            "regime": "p_gt_n",
            "fallback_l1": True,
            "argmax_center": None,
            "argmax_radius": None,
        }
    if params.n != mesh.dim:
        raise ValueError("params.n must match the mesh dimension")
    if params.regime == "p_gt_n":
        return {
            "norm": float(ksum(cell)),
            "regime": params.regime,
            "fallback_l1": False,
            "argmax_center": None,
            "argmax_radius": None,
        }
    sampling = sampling or BallSampling.dyadic(mesh)
    sampling.validate_for(mesh)
    factors = _radius_factor(params, sampling.radii, mesh.diam)
    mids = mesh.midpoints
    pts = mesh.coords2[sampling.centers]
    best = (0.0, None, None)
    # chunk the center-by-element distance matrix to bound memory
    step = max(1, int(4e6) // max(1, mesh.n_elements))
    for lo in range(0, len(sampling.centers), step):
        block = pts[lo : lo + step]
        dist = np.sqrt(((block[:, None, :] - mids[None, :, :]) ** 2).sum(axis=2))
        for r, f in zip(sampling.radii, factors):
            vals = f * ((dist <= r) @ cell)
            j = int(vals.argmax())
            if vals[j] > best[0]:
                best = (float(vals[j]), int(sampling.centers[lo + j]), float(r))
    return {
        "norm": best[0],
        "regime": params.regime,
        "fallback_l1": False,
        "argmax_center": best[1],
        "argmax_radius": best[2],
    }


def morrey_norm(V: PotentialField, mesh: Mesh, params: MorreyParams, sampling: BallSampling | None = None) -> float:
    """Discretized ball-supremum norm of V; a lower bound of the true sup."""
    return morrey_norm_detail(V, mesh, params, sampling)["norm"]


def morrey_adams_split(V: PotentialField, u: GridFunction, delta: float, params: MorreyParams, sampling: BallSampling | None = None, vnorm: float | None = None) -> tuple[float, float, float]:
    """Evaluate both sides of the uncertainty-type inequality.

    Returns (lhs, grad_term, mass_coeff) with
      lhs        = integral of |V| |u|^p,
      grad_term  = delta * ||grad u||_p^p  (Euclidean gradient),
      mass_coeff = delta^(-n/(pq-n)) * ||V||^(pq/(pq-n)) * ||u||_p^p.
    The caller multiplies mass_coeff by a calibrated constant; the claim is
    lhs <= grad_term + C * mass_coeff. Above n the effective q is 1.
    """
    if delta <= 0.0:
        raise ValueError("need delta > 0")
    mesh = u.mesh
    if np.any(u.values[mesh.boundary] != 0.0):
        raise ValueError("u must vanish on boundary nodes")
    p = params.p
    absv = np.abs(V.evaluate(mesh, p))
    um = np.abs(midpoint_values(u))
    mw = mesh.element_measures * mesh.measure_weight
    lhs = float(ksum(absv * um**p * mw))
    gr = gradient(u)
    gnorm = np.sqrt((gr**2).sum(axis=1))
    grad_term = float(delta * ksum(gnorm**p * mw))
    up = float(ksum(um**p * mw))
    q_eff = 1.0 if params.regime == "p_gt_n" else params.q
    if vnorm is None:
        vnorm = morrey_norm(V, mesh, params, sampling)
    denom = p * q_eff - params.n
    if denom <= 0.0:
        raise ValueError("exponent pq - n must be positive")
    mass_coeff = float(delta ** (-params.n / denom) * vnorm ** (p * q_eff / denom) * up)
    return lhs, grad_term, mass_coeff
