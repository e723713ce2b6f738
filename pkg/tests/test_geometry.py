import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hullopt.geometry import (HullCoefficients, build_grid, eval_hull, full_lattice,
                              hull_from_csv, hull_volume, normalize_volume,
                              read_hull_csv, wigley_hull, write_hull_csv, FlowParams)

from oracles import gauss_cell_integral


def test_node_counts():
    assert build_grid(2.0, 0.2, 100, 20).n_free == 99 * 19 + 99 == 1980
    assert build_grid(1.0, 1.0, 2, 2).n_free == 2
    assert build_grid(2.0, 0.2, 100, 30).n_free == 99 * 29 + 99 == 2970


@pytest.mark.parametrize("bad", [
    dict(length=0.0, draft=0.2, nx=4, nz=4),
    dict(length=2.0, draft=-1.0, nx=4, nz=4),
    dict(length=2.0, draft=0.2, nx=1, nz=4),
    dict(length=2.0, draft=0.2, nx=4, nz=1),
])
def test_build_grid_rejects_bad_inputs(bad):
    with pytest.raises(ValueError):
        build_grid(**bad)


def test_node_ordering_and_weights():
    grid = build_grid(2.0, 0.2, 6, 3)
    # interior nodes first (z outer ascending, x inner ascending), then waterline
    assert grid.n_interior == 10
    assert np.all(grid.node_z[:grid.n_interior] > 0.0)
    assert np.all(grid.node_z[grid.n_interior:] == 0.0)
    assert np.all(np.diff(grid.node_x[grid.n_interior:]) > 0.0)
    assert np.all(grid.alpha[:grid.n_interior] == 1.0)
    assert np.all(grid.alpha[grid.n_interior:] == 0.5)
    # free nodes strictly inside [-L/2, L/2] x [0, T)
    assert np.all(np.abs(grid.node_x) < grid.length / 2)
    assert np.all((grid.node_z >= 0.0) & (grid.node_z < grid.draft))


def test_grid_coordinates_exactly_mirror_symmetric():
    for nx in (6, 7, 100):
        grid = build_grid(2.0, 0.2, nx, 4)
        assert np.all(grid.xs + grid.xs[::-1] == 0.0)
        assert np.all(grid.node_x[grid.mirror_index] == -grid.node_x)
        assert np.all(grid.node_z[grid.mirror_index] == grid.node_z)


def test_eval_hull_reproduces_nodes_and_boundary(rng, tiny_grid):
    f = rng.uniform(0.0, 1.0, tiny_grid.n_free)
    got = eval_hull(tiny_grid, f, tiny_grid.node_x, tiny_grid.node_z)
    np.testing.assert_array_equal(got, f)
    assert eval_hull(tiny_grid, f, -tiny_grid.length / 2, 0.0) == 0.0
    assert eval_hull(tiny_grid, f, tiny_grid.length / 2, tiny_grid.draft) == 0.0


def test_eval_hull_hat_value_at_cell_center(tiny_grid):
    # one nonzero corner value c -> c/4 at the cell center
    c = 0.7
    f = np.zeros(tiny_grid.n_free)
    f[0] = c
    x = tiny_grid.node_x[0] + tiny_grid.dx / 2
    z = tiny_grid.node_z[0] + tiny_grid.dz / 2
    assert eval_hull(tiny_grid, f, x, z) == pytest.approx(c / 4, rel=1e-14)


def test_eval_hull_out_of_domain(tiny_grid):
    f = np.zeros(tiny_grid.n_free)
    with pytest.raises(ValueError):
        eval_hull(tiny_grid, f, tiny_grid.length, 0.1)
    with pytest.raises(ValueError):
        eval_hull(tiny_grid, f, 0.0, -0.1)


def test_eval_hull_nonnegative_for_nonnegative_coefficients(rng, tiny_grid):
    f = rng.uniform(0.0, 1.0, tiny_grid.n_free)
    x = rng.uniform(-1.0, 1.0, 200)
    z = rng.uniform(0.0, 0.2, 200)
    assert np.all(eval_hull(tiny_grid, f, x, z) >= 0.0)


def test_hull_volume_basics():
    grid = build_grid(2.0, 0.2, 100, 20)
    assert hull_volume(grid, np.zeros(grid.n_free)) == 0.0
    f = np.zeros(grid.n_free)
    f[0] = 1.0   # interior node: hat integral dx*dz
    assert hull_volume(grid, f) == pytest.approx(2e-4, rel=1e-14)
    with pytest.raises(ValueError):
        hull_volume(grid, np.zeros(5))


def test_hull_volume_wigley_second_order():
    # nodal sampling error of the smooth benchmark surface is O(dx^2 + dz^2)
    errors = {}
    for nx, nz in ((50, 10), (100, 20)):
        grid = build_grid(2.0, 0.2, nx, nz)
        errors[nx] = abs(hull_volume(grid, wigley_hull(grid, 0.03).values) - 0.03)
    assert errors[100] < 6e-5
    assert 3.0 < errors[50] / errors[100] < 5.0


def test_hull_volume_matches_quadrature_of_interpolant(rng, tiny_grid):
    f = rng.uniform(0.0, 1.0, tiny_grid.n_free)
    ref = gauss_cell_integral(tiny_grid, f, order=2)
    assert hull_volume(tiny_grid, f) == pytest.approx(ref, rel=1e-12)


def test_mirror_preserves_volume_exactly(rng):
    grid = build_grid(2.0, 0.2, 17, 6)
    f = rng.uniform(0.0, 1.0, grid.n_free)
    assert hull_volume(grid, f) == hull_volume(grid, f[grid.mirror_index])


def test_wigley_hull_values():
    grid = build_grid(2.0, 0.2, 100, 20)
    wig = wigley_hull(grid, 0.03)
    # beam from V = (2/9) B L T: B = 0.3375, midship waterline offset B/2
    assert eval_hull(grid, wig, 0.0, 0.0) == pytest.approx(0.16875, rel=1e-14)
    assert np.all(wig.values >= 0.0)
    zs = np.linspace(0.0, grid.draft, 7)
    np.testing.assert_allclose(eval_hull(grid, wig, -grid.length / 2, zs), 0.0)
    with pytest.raises(ValueError):
        wigley_hull(grid, 0.0)


def test_normalize_volume_examples(tiny_grid):
    wig = wigley_hull(tiny_grid, 0.06)
    halved = normalize_volume(tiny_grid, wig.values, wig.volume() / 2.0)
    np.testing.assert_allclose(halved.values, wig.values / 2.0, rtol=1e-14)
    same = normalize_volume(tiny_grid, wig.values, wig.volume())
    np.testing.assert_array_equal(same.values, wig.values)
    with pytest.raises(ValueError):
        normalize_volume(tiny_grid, np.zeros(tiny_grid.n_free), 0.03)
    with pytest.raises(ValueError):
        normalize_volume(tiny_grid, -wig.values, 0.03)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1e3))
def test_normalize_volume_property(seed, target):
    grid = build_grid(2.0, 0.2, 8, 4)
    f = np.random.default_rng(seed).uniform(0.0, 1.0, grid.n_free) + 1e-9
    out = normalize_volume(grid, f, target)
    assert hull_volume(grid, out.values) == pytest.approx(target, rel=1e-12)


def test_flow_params_consistency():
    flow = FlowParams.from_froude(0.6, 2.0)
    assert flow.kelvin == pytest.approx(1.0 / (0.36 * 2.0), rel=1e-14)
    assert flow.eps == pytest.approx(0.5 * 1000.0 * 1e-2 * flow.speed**2, rel=1e-14)
    flow2 = FlowParams.from_speed(flow.speed, 2.0)
    assert flow2.froude == pytest.approx(0.6, rel=1e-14)
    with pytest.raises(ValueError):
        FlowParams.from_froude(-0.5, 2.0)


def test_hull_coefficients_feasibility_check(tiny_grid):
    wig = wigley_hull(tiny_grid, 0.03)
    hull = normalize_volume(tiny_grid, wig.values, 0.03)
    hull.check_feasible(0.03)
    bad = HullCoefficients(tiny_grid, hull.values - 1e-3)
    with pytest.raises(ValueError):
        bad.check_feasible(0.03)


def test_hull_csv_roundtrip(tmp_path, rng, tiny_grid):
    f = rng.uniform(0.0, 0.5, tiny_grid.n_free)
    path = tmp_path / "hull.csv"
    write_hull_csv(path, tiny_grid, f)
    x, z, vals = read_hull_csv(path)
    assert x.size == (tiny_grid.nx + 1) * (tiny_grid.nz + 1)
    # row-major: z outer ascending, x inner ascending; boundary zeros present
    assert z[0] == 0.0 and z[-1] == tiny_grid.draft
    assert x[0] == -tiny_grid.length / 2 and x[tiny_grid.nx] == tiny_grid.length / 2
    lat = vals.reshape(tiny_grid.nz + 1, tiny_grid.nx + 1)
    np.testing.assert_array_equal(lat[:, 0], 0.0)
    np.testing.assert_array_equal(lat[-1, :], 0.0)
    # 17 significant digits round-trip exactly
    back = hull_from_csv(tiny_grid, path)
    np.testing.assert_array_equal(back.values, f)


def test_hull_csv_header_check(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_hull_csv(path)


def test_partition_of_unity(tiny_grid, rng):
    # hats of ALL lattice nodes sum to one; checked through the interpolant:
    # setting every free node to 1 must reproduce 1 wherever the boundary
    # hats vanish, i.e. on interior cell centers away from the boundary ring.
    ones = np.ones(tiny_grid.n_free)
    xc = tiny_grid.xs[1:-2] + tiny_grid.dx / 2
    zc = tiny_grid.zs[:-2] + tiny_grid.dz / 2
    inner = eval_hull(tiny_grid, ones, xc[1:], zc[None, :1].T)
    np.testing.assert_allclose(inner, 1.0, rtol=1e-14)
    lat = full_lattice(tiny_grid, ones)
    assert lat.shape == (tiny_grid.nz + 1, tiny_grid.nx + 1)
