import math

import numpy as np
import pytest

from qcrit.util import extrapolate_limit, ksum, stream_rng


def test_stream_rng_reproducible():
    a = stream_rng(7, "alpha").normal(size=5)
    b = stream_rng(7, "alpha").normal(size=5)
    assert np.array_equal(a, b)


def test_stream_rng_streams_independent():
    a = stream_rng(7, "alpha").normal(size=5)
    b = stream_rng(7, "beta").normal(size=5)
    c = stream_rng(8, "alpha").normal(size=5)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_ksum_order_independent():
    rng = stream_rng(0, "ksum")
    vals = rng.normal(size=1000) * 10.0 ** rng.integers(-8, 8, size=1000)
    s1 = ksum(vals)
    s2 = ksum(vals[::-1])
    assert s1 == s2
    assert s1 == pytest.approx(math.fsum(vals.tolist()), abs=0.0)


def test_extrapolate_constant():
    lim, info = extrapolate_limit([3.0, 3.0, 3.0, 3.0, 3.0])
    assert lim == pytest.approx(3.0, abs=1e-12)


def test_extrapolate_geometric_exact():
    seq = (0.4 + 1.7 * 0.5 ** np.arange(1, 9)).tolist()
    lim, info = extrapolate_limit(seq)
    assert info["method"] == "geometric"
    assert lim == pytest.approx(0.4, abs=1e-10)


def test_extrapolate_algebraic_tail():
    # 2/i decays too slowly for difference-ratio acceleration alone
    seq = (2.0 / np.arange(1, 9)).tolist()
    lim, info = extrapolate_limit(seq)
    assert info["method"] == "power"
    assert abs(lim) < 0.02


def test_extrapolate_oscillating_guard():
    lim, info = extrapolate_limit([1.0, 0.5, 0.8, 0.6, 0.7])
    assert info["method"] == "guarded"
    assert lim == 0.7


def test_extrapolate_short_and_errors():
    lim, _ = extrapolate_limit([1.0, 2.0])
    assert lim == 2.0
    with pytest.raises(ValueError):
        extrapolate_limit([])
    with pytest.raises(ValueError):
        extrapolate_limit([1.0, 2.0, 3.0], indices=[1, 2])


def test_extrapolate_reports_spread():
    seq = (0.1 + 1.0 / np.arange(1, 9) ** 2).tolist()
    lim, info = extrapolate_limit(seq)
    assert "spread" in info
    assert info["spread"] >= 0.0
    assert lim == pytest.approx(0.1, abs=5 * info["spread"] + 1e-6)
