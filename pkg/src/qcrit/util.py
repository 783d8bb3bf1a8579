"""Shared plumbing: seeded RNG streams, compensated sums, sequence limits."""

from __future__ import annotations

import math
import zlib

import numpy as np

__all__ = ["stream_rng", "ksum", "extrapolate_limit"]


def stream_rng(seed: int, stream: str) -> np.random.Generator:
    """Counter-based generator for a named stream.

    Every random draw in the package flows from one user seed through
    Philox keyed by (seed, crc32(stream)), so independent components get
    independent, reproducible streams without coordination.
    """
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream.encode("utf-8")))
    return np.random.Generator(np.random.Philox(key=np.random.SeedSequence(key).generate_state(2, np.uint64)))


def ksum(values) -> float:
    """Order-independent compensated sum (exact for float64 inputs)."""
    return math.fsum(np.asarray(values, dtype=float).ravel())


def _power_fit(v, idx):
    # Model v_k = a + b * k**(-g) on the last three members; solve for g by
    # bisection on the difference ratio, then back out a.
    k1, k2, k3 = idx[-3], idx[-2], idx[-1]
    d1 = v[-2] - v[-3]
    d2 = v[-1] - v[-2]
    if d1 == 0.0 or d2 == 0.0:
        return None
    r = d2 / d1
    if not 0.0 < r < 1.0:
        return None

    def f(g):
        return (k2 ** (-g) - k3 ** (-g)) / (k1 ** (-g) - k2 ** (-g)) - r

    lo, hi = 1e-3, 16.0
    flo, fhi = f(lo), f(hi)
    if not np.isfinite(flo) or not np.isfinite(fhi) or flo * fhi > 0:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if not np.isfinite(fm):
            return None
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    g = 0.5 * (lo + hi)
    b = d2 / (k3 ** (-g) - k2 ** (-g))
    a = v[-1] - b * k3 ** (-g)
    return a, g


def extrapolate_limit(values, indices=None):
    """Estimate the limit of a convergent member sequence.

    Two model families are fitted by least squares on the tail window of
    the last five members: geometric a + b*rho**k with rho taken from the
    last difference ratio, and power a + b*k**(-g) over a small exponent
    grid seeded with the three-point solved exponent. The model with the
    smaller tail misfit wins. The disagreement between the two limits is
    reported as "spread" so callers can refuse to read more precision out
    of a near-zero limit than the extrapolation supports. Oscillating or
    badly fitted tails fall back to the last value.

    Returns (limit, info) where info records the method and candidates.
    """
    v = [float(x) for x in values]
    info = {"method": "last", "candidates": {}}
    if len(v) == 0:
        raise ValueError("empty sequence")
    if len(v) < 3:
        return v[-1], info
    idx = list(indices) if indices is not None else list(range(1, len(v) + 1))
    if len(idx) != len(v):
        raise ValueError("indices length mismatch")

    tail = np.diff(v[-4:] if len(v) >= 4 else v[-3:])
    if np.any(tail[:-1] * tail[1:] < 0):
        # Oscillating tail: no safe acceleration.
        info["method"] = "guarded"
        return v[-1], info

    m = min(5, len(v))
    ks = np.asarray(idx[-m:], dtype=float)
    ys = np.asarray(v[-m:], dtype=float)
    yscale = float(np.abs(ys).max()) + 1e-300
    cand, resid = {}, {}

    exponents = [0.5, 1.0, 1.5, 2.0, 3.0]
    pf = _power_fit(v, idx)
    if pf is not None and np.isfinite(pf[1]):
        exponents.append(float(pf[1]))
    best = None
    for g in exponents:
        X = np.stack([np.ones(m), ks ** (-g)], axis=1)
        co, *_ = np.linalg.lstsq(X, ys, rcond=None)
        r = float(np.abs(X @ co - ys).max())
        if np.isfinite(co[0]) and (best is None or r < best[1]):
            best = (float(co[0]), r, g)
    if best is not None:
        cand["power"], resid["power"] = best[0], best[1]
        info["power_exponent"] = best[2]

    d = np.diff(v)
    if len(d) >= 2 and d[-2] != 0.0:
        rho = d[-1] / d[-2]
        if 0.0 < rho < 1.0:
            X = np.stack([np.ones(m), rho ** ks], axis=1)
            co, *_ = np.linalg.lstsq(X, ys, rcond=None)
            r = float(np.abs(X @ co - ys).max())
            if np.isfinite(co[0]):
                cand["geometric"], resid["geometric"] = float(co[0]), r
                info["geometric_ratio"] = float(rho)

    info["candidates"] = dict(cand)
    info["residuals"] = dict(resid)
    if not cand:
        return v[-1], info
    name = min(resid, key=resid.get)
    if resid[name] > 0.25 * yscale:
        # neither model explains the tail; extrapolating would invent data
        info["method"] = "guarded"
        return v[-1], info
    info["method"] = name
    info["spread"] = float(max(cand.values()) - min(cand.values())) if len(cand) > 1 else 0.0
    return cand[name], info
