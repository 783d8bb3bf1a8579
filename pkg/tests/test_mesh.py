import numpy as np
import pytest

from qcrit.mesh import (
    GridFunction,
    build_mesh_1d,
    build_mesh_1d_log,
    build_mesh_2d,
    gradient,
    grid_function_from_csv,
    grid_function_to_csv,
    integrate,
    make_exhaustion,
    mesh_from_csv,
    mesh_to_csv,
    midpoint_values,
    p_norm,
    zero_extend,
)


def test_interval_mesh_basics():
    m = build_mesh_1d(0.0, 2.0, 8)
    assert m.n_nodes == 9
    assert m.n_elements == 8
    assert m.element_measures.sum() == pytest.approx(2.0)
    assert m.boundary[0] and m.boundary[-1]
    assert not m.boundary[1:-1].any()
    assert m.diam == pytest.approx(2.0)


def test_log_mesh_grading_and_radial_weight():
    m = build_mesh_1d_log(1.0, 8.0, 12, ambient_n=3)
    x = m.nodes
    assert np.all(np.diff(x) > 0)
    ratios = x[1:] / x[:-1]
    assert np.allclose(ratios, ratios[0])
    # radial emulation integrates against r^(n-1)
    assert np.allclose(m.measure_weight, m.midpoints[:, 0] ** 2)
    vol = integrate(lambda pts: np.ones(len(pts)), m)
    assert vol == pytest.approx((8.0**3 - 1.0) / 3.0, rel=1e-2)


def test_rect_mesh_counts_and_area():
    m = build_mesh_2d(0.0, 0.0, 2.0, 1.0, 6, 3)
    assert m.n_nodes == 7 * 4
    assert m.n_elements == 2 * 6 * 3
    assert m.element_measures.sum() == pytest.approx(2.0)
    on_edge = (
        np.isclose(m.nodes[:, 0], 0.0)
        | np.isclose(m.nodes[:, 0], 2.0)
        | np.isclose(m.nodes[:, 1], 0.0)
        | np.isclose(m.nodes[:, 1], 1.0)
    )
    assert np.array_equal(m.boundary, on_edge)


@pytest.mark.parametrize("builder", ["1d", "2d"])
def test_midpoint_and_gradient_exact_on_affine(builder):
    if builder == "1d":
        m = build_mesh_1d(-1.0, 3.0, 17)
        u = GridFunction(m, 2.5 * m.nodes - 0.75)
        assert np.allclose(gradient(u)[:, 0], 2.5)
        assert np.allclose(midpoint_values(u), 2.5 * m.midpoints[:, 0] - 0.75)
    else:
        m = build_mesh_2d(0.0, 0.0, 1.0, 1.0, 5, 7)
        vals = 1.5 * m.nodes[:, 0] - 0.5 * m.nodes[:, 1] + 2.0
        u = GridFunction(m, vals)
        g = gradient(u)
        assert np.allclose(g[:, 0], 1.5)
        assert np.allclose(g[:, 1], -0.5)


def test_integrate_and_p_norm():
    m = build_mesh_1d(0.0, 1.0, 400)
    val = integrate(lambda x: x**2, m)
    assert val == pytest.approx(1.0 / 3.0, rel=1e-5)
    u = GridFunction(m, np.full(m.n_nodes, -2.0))
    assert p_norm(u, 3.0) == pytest.approx(2.0, rel=1e-12)


def test_grid_function_csv_roundtrip(tmp_path):
    m = build_mesh_1d(0.0, 1.0, 7)
    u = GridFunction(m, np.sin(m.nodes) * 1e-7)
    path = tmp_path / "u.csv"
    grid_function_to_csv(u, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "id,x,value"
    assert len(lines) == m.n_nodes + 1
    v = grid_function_from_csv(m, path)
    assert np.array_equal(u.values, v.values)


def test_mesh_csv_roundtrip(tmp_path):
    m = build_mesh_1d_log(0.5, 4.0, 9, ambient_n=3)
    mesh_to_csv(m, tmp_path / "n.csv", tmp_path / "e.csv")
    back = mesh_from_csv(tmp_path / "n.csv", tmp_path / "e.csv")
    assert back.ambient_n == 3
    assert np.array_equal(back.nodes, m.nodes)
    assert np.array_equal(back.elements, m.elements)
    assert np.array_equal(back.measure_weight, m.measure_weight)


def test_exhaustion_interval_growing_harmonic():
    sched = make_exhaustion("interval_growing", {"radius0": 1.0, "h": 0.25}, count=3)
    for i, mesh in enumerate(sched.meshes, start=1):
        assert mesh.nodes[0] == pytest.approx(-float(i))
        assert mesh.nodes[-1] == pytest.approx(float(i))
    # fixed spacing keeps the grids nested node for node
    assert all(sched.exact)
    small, big = sched.meshes[0], sched.meshes[1]
    assert np.allclose(big.nodes[sched.inclusion[0]], small.nodes)


def test_exhaustion_interval_growing_geometric():
    sched = make_exhaustion(
        "interval_growing",
        {"radius0": 2.0, "growth": "geometric", "factor": 2.0, "h": 1.0 / 32.0},
        count=4,
    )
    radii = [m.nodes[-1] for m in sched.meshes]
    assert radii == pytest.approx([2.0, 4.0, 8.0, 16.0])
    assert all(sched.exact)


def test_exhaustion_annulus_nested():
    sched = make_exhaustion(
        "annulus", {"growth": 3.0, "nodes_per_log": 16, "ambient_n": 3}, count=3
    )
    for i, mesh in enumerate(sched.meshes, start=1):
        assert mesh.nodes[0] == pytest.approx(3.0**-i)
        assert mesh.nodes[-1] == pytest.approx(3.0**i)
        assert mesh.ambient_n == 3
    assert all(sched.exact)


def test_exhaustion_square_growing():
    sched = make_exhaustion("square_growing", {"radius0": 1.0, "h": 0.25}, count=2)
    m1, m2 = sched.meshes
    assert m1.dim == 2
    assert m2.nodes[:, 0].max() > m1.nodes[:, 0].max()


def test_exhaustion_rejects_bad_input():
    with pytest.raises(ValueError):
        make_exhaustion("interval_growing", {"radius0": 1.0}, count=1)
    with pytest.raises(ValueError):
        make_exhaustion("dodecahedron")
    with pytest.raises(ValueError):
        make_exhaustion("interval_growing", {"radius0": 1.0, "banana": 2})


def test_zero_extend():
    sched = make_exhaustion("interval_growing", {"radius0": 1.0, "h": 0.5}, count=2)
    small, big = sched.meshes
    u = GridFunction(small, np.ones(small.n_nodes))
    v = zero_extend(u, big, sched.inclusion[0])
    assert v.mesh is big
    assert v.values.sum() == pytest.approx(small.n_nodes)
    outside = np.setdiff1d(np.arange(big.n_nodes), sched.inclusion[0])
    assert np.all(v.values[outside] == 0.0)


def test_nearest_node():
    m = build_mesh_1d(0.0, 1.0, 10)
    idx, snap = m.nearest_node(0.301)
    assert m.nodes[idx] == pytest.approx(0.3)
    assert snap == pytest.approx(0.001)
