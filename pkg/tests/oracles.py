"""Independent reference values for the test suite.

Everything here is computed without touching the package's assembly or
solvers: closed forms, an ODE shooting integrator for the 1D nonlinear
eigenvalue, and textbook constants.
"""

import math

import numpy as np


def pi_p(p: float) -> float:
    return 2.0 * math.pi / (p * math.sin(math.pi / p))


def lambda1_interval(p: float, length: float = 1.0) -> float:
    """First Dirichlet eigenvalue of the 1D p-Laplacian on an interval."""
    return (p - 1.0) * (pi_p(p) / length) ** p


def torsion_1d(p: float, x: np.ndarray) -> np.ndarray:
    """Unit-load Dirichlet solution on (0,1): flux is linear in x."""
    pc = p / (p - 1.0)
    return (1.0 - 1.0 / p) * (0.5**pc - np.abs(x - 0.5) ** pc)


def membrane_1d(x: np.ndarray) -> np.ndarray:
    """Solution of -u'' + u = 1 on (0,1) with zero boundary values."""
    return 1.0 - np.cosh(x - 0.5) / np.cosh(0.5)


def green_ramp(x: np.ndarray, pole: float) -> np.ndarray:
    """Two-sided linear profile with a unit flux kink at the pole."""
    return np.where(x <= pole, x * (1.0 - pole), pole * (1.0 - x))


def shoot_eigenvalue(p: float, n_steps: int = 4000) -> float:
    """First eigenvalue on (0,1) by shooting on the first-order system.

    With s = |u'|^(p-2) u' the equation splits into u' = |s|^(1/(p-1)) sgn s,
    s' = -lam |u|^(p-2) u, which stays continuous through the turning point.
    Bisect lam on the sign of u(1).
    """

    def endpoint(lam: float) -> float:
        u, s = 0.0, 1.0
        h = 1.0 / n_steps
        ppow = 1.0 / (p - 1.0)

        def rhs(u, s):
            du = math.copysign(abs(s) ** ppow, s) if s != 0.0 else 0.0
            ds = -lam * math.copysign(abs(u) ** (p - 1.0), u) if u != 0.0 else 0.0
            return du, ds

        for _ in range(n_steps):
            k1u, k1s = rhs(u, s)
            k2u, k2s = rhs(u + 0.5 * h * k1u, s + 0.5 * h * k1s)
            k3u, k3s = rhs(u + 0.5 * h * k2u, s + 0.5 * h * k2s)
            k4u, k4s = rhs(u + h * k3u, s + h * k3s)
            u += h * (k1u + 2 * k2u + 2 * k3u + k4u) / 6.0
            s += h * (k1s + 2 * k2s + 2 * k3s + k4s) / 6.0
        return u

    lo = 1e-3
    hi = 2.0
    while endpoint(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise ArithmeticError("no sign change while bracketing")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if endpoint(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
