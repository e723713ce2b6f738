import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hullopt.geometry import build_grid, eval_hull, wigley_hull, normalize_volume, hull_volume
from hullopt.wave import (LambdaQuadrature, SmoothBump, a_minus, a_plus, assemble_Mw,
                          b_minus, b_plus, build_quadrature, j_vector,
                          null_space_residual, singular_cell_weight, wave_resistance,
                          wave_resistance_direct, write_matrix_csv, write_quadrature_csv)

from oracles import (dblquad_j_component, lambda_weight_integral_1_2, quad_a_minus,
                     quad_a_plus, quad_b_minus, quad_b_plus, quad_j_component)


# ---------------------------------------------------------------------------
# closed forms vs adaptive quadrature
# ---------------------------------------------------------------------------

def _sample_ab(rng):
    lam = float(np.exp(rng.uniform(0.0, np.log(512.0))))
    v = float(np.exp(rng.uniform(np.log(0.05), np.log(50.0))))
    dx = float(np.exp(rng.uniform(np.log(1e-3), np.log(0.5))))
    x = float(rng.uniform(-1.0, 1.0))
    dz = float(np.exp(rng.uniform(np.log(1e-3), np.log(0.2))))
    s = lam * lam * v
    z = float(rng.uniform(dz, dz + min(0.4, 60.0 / s)))
    return lam, v, x, dx, z, dz


def test_closed_forms_match_quadrature(rng):
    for _ in range(80):
        lam, v, x, dx, z, dz = _sample_ab(rng)
        assert float(a_plus(lam, v, x, dx)) == pytest.approx(
            quad_a_plus(lam, v, x, dx), rel=1e-11, abs=1e-250)
        assert float(a_minus(lam, v, x, dx)) == pytest.approx(
            quad_a_minus(lam, v, x, dx), rel=1e-11, abs=1e-250)
        assert float(b_plus(lam, v, z, dz)) == pytest.approx(
            quad_b_plus(lam, v, z, dz), rel=1e-11, abs=1e-250)
        assert float(b_minus(lam, v, z, dz)) == pytest.approx(
            quad_b_minus(lam, v, z, dz), rel=1e-11, abs=1e-250)


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0, 100.0), st.floats(0.1, 20.0), st.floats(-1.0, 1.0),
       st.floats(1e-3, 0.4))
def test_a_forms_property(lam, v, x, dx):
    assert float(a_plus(lam, v, x, dx)) == pytest.approx(
        quad_a_plus(lam, v, x, dx), rel=1e-10, abs=1e-250)


def test_a_sum_at_origin():
    # a+ + a- at x = 0 equals 2(1 - cos(lam v dx)) / (lam v)^2; the quadrature
    # oracle fixes the normalization of the closed forms.
    lam, v, dx = 2.3, 0.8, 0.05
    w = lam * v
    total = float(a_plus(lam, v, 0.0, dx) + a_minus(lam, v, 0.0, dx))
    assert total == pytest.approx(2.0 * (1.0 - math.cos(w * dx)) / w**2, rel=1e-13)
    assert total == pytest.approx(
        quad_a_plus(lam, v, 0.0, dx) + quad_a_minus(lam, v, 0.0, dx), rel=1e-12)


def test_a_taylor_limit_small_frequency():
    # lam v dx -> 0: the pair integrates the hat exactly, area dx^2
    lam, v, dx, x = 1.0, 1e-4, 0.3, 0.37
    total = float(a_plus(lam, v, x, dx) + a_minus(lam, v, x, dx))
    assert total == pytest.approx(dx * dx * math.cos(lam * v * x), rel=1e-7)


def test_b_surface_node_is_zero():
    assert float(b_minus(3.0, 0.7, 0.0, 0.01)) == 0.0


def test_b_taylor_limit_small_decay():
    lam, v, dz, z = 1.0, 1e-4, 0.05, 0.12
    total = float(b_plus(lam, v, z, dz) + b_minus(lam, v, z, dz))
    assert total == pytest.approx(dz * dz * math.exp(-lam * lam * v * z), rel=1e-7)


# ---------------------------------------------------------------------------
# J vector
# ---------------------------------------------------------------------------

def test_j_vector_mirror_parity(tiny_grid):
    j = j_vector(tiny_grid, 0.9, 3.7)
    np.testing.assert_array_equal(j, j[tiny_grid.mirror_index])


def test_j_vector_matches_separable_quadrature(rng, tiny_grid):
    for lam, v in [(1.0, 0.5), (2.5, 2.0), (17.0, 0.3)]:
        j = j_vector(tiny_grid, v, lam)
        for idx in rng.choice(tiny_grid.n_free, size=8, replace=False):
            assert j[idx] == pytest.approx(
                quad_j_component(tiny_grid, v, lam, int(idx)), rel=1e-10, abs=1e-250)


def test_j_vector_matches_2d_quadrature(tiny_grid):
    for lam, v, idx in [(1.0, 0.5, 0), (3.0, 1.1, 9), (6.0, 0.4, 24)]:
        j = j_vector(tiny_grid, v, lam)
        assert j[idx] == pytest.approx(
            dblquad_j_component(tiny_grid, v, lam, idx), rel=1e-9, abs=1e-250)


def test_j_vector_depth_decay_ratio():
    # interior components at the same x decay exactly like exp(-lam^2 v dz)
    grid = build_grid(2.0, 0.2, 8, 10)
    lam, v = 6.0, 1.0
    assert lam * lam * v * grid.draft > 1.0
    j = j_vector(grid, v, lam)
    lat = grid.lattice_index
    shallow = j[lat[2, 3]]
    deep = j[lat[3, 3]]
    assert deep / shallow == pytest.approx(
        math.exp(-lam * lam * v * grid.dz), rel=1e-6)


def test_j_vector_validation(tiny_grid):
    with pytest.raises(ValueError):
        j_vector(tiny_grid, 1.0, 0.5)
    with pytest.raises(ValueError):
        j_vector(tiny_grid, -1.0, 2.0)


# ---------------------------------------------------------------------------
# lambda quadrature
# ---------------------------------------------------------------------------

def test_singular_cell_weight_positive_and_decreasing():
    w10, w80, w320 = (singular_cell_weight(n) for n in (10, 80, 320))
    assert w10 > w80 > w320 > 0.0
    # frozen from a 40-digit evaluation of the defining difference
    assert w80 == pytest.approx(0.047833954403855385, abs=1e-14)


def test_octave0_weight_sum_converges():
    ref = lambda_weight_integral_1_2()
    errors = []
    for n in (80, 160, 320):
        quad = build_quadrature(n, 1)
        errors.append(abs(float(quad.weights.sum()) - ref))
    # the subtracted integrand behaves like sqrt(lam-1) at the endpoint, so
    # the midpoint rule converges at order ~1.5 here, not its smooth order 2
    assert errors[0] > errors[1] > errors[2]
    for a, b in zip(errors, errors[1:]):
        assert 1.8 < a / b < 3.5


def test_build_quadrature_structure():
    quad = build_quadrature(16, 5)
    assert quad.lambda_max == 32.0
    assert quad.nodes.size == 1 + 16 * 5
    assert quad.nodes[0] == 1.0
    assert np.all(np.diff(quad.nodes) > 0.0)
    assert np.all(quad.weights > 0.0)
    mids, dl = 1.0 + (np.arange(1, 17) - 0.5) / 16.0, 1.0 / 16.0
    np.testing.assert_allclose(quad.nodes[1:17], mids, rtol=0.0)
    np.testing.assert_allclose(
        quad.weights[1:17], dl * mids**4 / np.sqrt(mids**2 - 1.0), rtol=1e-15)
    with pytest.raises(ValueError):
        build_quadrature(0, 4)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def test_assemble_single_node_rank_one(tiny_grid):
    single = LambdaQuadrature(nodes=np.array([1.0]),
                              weights=np.array([singular_cell_weight(8)]),
                              octaves=np.array([-1]), n_per_octave=8, k_lambda=1)
    wm = assemble_Mw(tiny_grid, 0.5, quadrature=single)
    eig = np.linalg.eigvalsh(wm.matrix)
    assert int(np.sum(eig > 1e-12 * eig[-1])) == 1


@pytest.mark.parametrize("froude", [0.5, 1.0])
def test_assemble_symmetric_psd(small_grid, froude):
    v = 1.0 / (froude * froude * small_grid.length)
    wm = assemble_Mw(small_grid, v, n_per_octave=20)
    assert np.max(np.abs(wm.matrix - wm.matrix.T)) == 0.0
    eig = np.linalg.eigvalsh(wm.matrix)
    assert eig[0] >= -1e-10 * eig[-1]


def test_strict_positivity_on_admissible_hulls(rng, tiny_grid):
    wm = assemble_Mw(tiny_grid, 0.5, n_per_octave=20)
    for _ in range(100):
        f = normalize_volume(tiny_grid, rng.uniform(0.0, 1.0, tiny_grid.n_free), 0.03)
        assert float(f.values @ wm.matrix @ f.values) > 0.0


@pytest.mark.parametrize("nx,nz", [(12, 5), (5, 12)])
def test_rank_lower_bound_both_orientations(nx, nz):
    grid = build_grid(2.0, 0.2, nx, nz)
    wm = assemble_Mw(grid, 0.5, n_per_octave=40)
    eig = np.linalg.eigvalsh(wm.matrix)
    assert int(np.sum(eig > 1e-12 * eig[-1])) >= max(nx, nz) - 1


def test_adaptive_octaves_match_fixed_prefix(tiny_grid):
    adaptive = assemble_Mw(tiny_grid, 0.5, n_per_octave=16, k_lambda_max=12, tol=1e-6)
    k = adaptive.quadrature.k_lambda
    assert k < 12   # loose tolerance stops before the cap
    fixed = assemble_Mw(tiny_grid, 0.5, quadrature=build_quadrature(16, k))
    np.testing.assert_array_equal(adaptive.matrix, fixed.matrix)


def test_wave_resistance_basics(tiny_grid):
    wm = assemble_Mw(tiny_grid, 0.5, n_per_octave=20)
    zeros = np.zeros(tiny_grid.n_free)
    assert wave_resistance(zeros, wm, 1000.0, 9.81) == 0.0
    wig = wigley_hull(tiny_grid, 0.03)
    r1 = wave_resistance(wig, wm, 1000.0, 9.81)
    r3 = wave_resistance(3.0 * wig.values, wm, 1000.0, 9.81)
    assert r1 > 0.0
    assert r3 == pytest.approx(9.0 * r1, rel=1e-12)
    with pytest.raises(ValueError):
        wave_resistance(np.zeros(5), wm, 1000.0, 9.81)
    with pytest.raises(ValueError):
        wave_resistance(zeros, wm, 1000.0, 9.81, v=0.7)


def test_matrix_path_matches_direct_quadrature():
    # benchmark hull at Fr = 0.5; both paths share the lambda quadrature, so
    # the comparison isolates the closed forms and the rank-one assembly
    grid = build_grid(2.0, 0.2, 40, 8)
    froude = 0.5
    v = 1.0 / (froude * froude * grid.length)
    quad = build_quadrature(12, 6)
    wm = assemble_Mw(grid, v, quadrature=quad)
    wig = wigley_hull(grid, 0.03)
    r_matrix = wave_resistance(wig, wm, 1000.0, 9.81)
    r_direct = wave_resistance_direct(
        lambda x, z: eval_hull(grid, wig, x, z), grid, v, 1000.0, 9.81, quad)
    assert r_matrix == pytest.approx(r_direct, rel=1e-6)


def test_direct_quadrature_odd_hull_has_zero_resistance(tiny_grid):
    odd = np.sin(2.0 * math.pi * tiny_grid.node_x / tiny_grid.length) \
        * (1.0 - tiny_grid.node_z / tiny_grid.draft)
    assert abs(hull_volume(tiny_grid, odd)) < 1e-15
    quad = build_quadrature(8, 4)
    r = wave_resistance_direct(
        lambda x, z: eval_hull(tiny_grid, odd, x, z), tiny_grid, 0.5, 1000.0, 9.81, quad)
    wig = wigley_hull(tiny_grid, 0.03)
    r_ref = wave_resistance_direct(
        lambda x, z: eval_hull(tiny_grid, wig, x, z), tiny_grid, 0.5, 1000.0, 9.81, quad)
    assert r < 1e-20 * r_ref
    # the antisymmetric moment of an odd hull is NOT zero
    r_full = wave_resistance_direct(
        lambda x, z: eval_hull(tiny_grid, odd, x, z), tiny_grid, 0.5, 1000.0, 9.81,
        quad, include_antisymmetric=True)
    assert r_full > 1e3 * r


def test_quadrature_refinement_convergence():
    # scalar resistance of a fixed hull under octave-count doubling; the
    # endpoint sqrt singularity limits the midpoint rule to order ~1.5
    grid = build_grid(2.0, 0.2, 24, 6)
    froude = 0.7
    v = 1.0 / (froude * froude * grid.length)
    wig = wigley_hull(grid, 0.03)
    ref = wave_resistance(wig, assemble_Mw(grid, v, quadrature=build_quadrature(320, 8)),
                          1000.0, 9.81)
    errors = [abs(wave_resistance(wig, assemble_Mw(grid, v, quadrature=build_quadrature(n, 8)),
                                  1000.0, 9.81) - ref) for n in (20, 40, 80)]
    assert errors[0] > errors[1] > errors[2]
    for a, b in zip(errors, errors[1:]):
        assert 2.0 < a / b < 6.0


# ---------------------------------------------------------------------------
# null direction
# ---------------------------------------------------------------------------

def test_null_space_residual_drops_under_refinement():
    bump = SmoothBump(-0.7, 0.5, 0.03, 0.17)
    quad = build_quadrature(20, 8)
    v = 2.0
    coarse = null_space_residual(build_grid(2.0, 0.2, 40, 8), v, bump, quad)
    fine = null_space_residual(build_grid(2.0, 0.2, 80, 16), v, bump, quad)
    assert coarse > 0.0 and fine > 0.0
    assert coarse / fine >= 4.0
    # recorded magnitude band of the coarse-grid residual
    assert 1e-8 < coarse < 1e-5


def test_null_space_residual_zero_bump(tiny_grid):
    bump = SmoothBump(-0.6, 0.6, 0.05, 0.15)
    zero = null_space_residual(tiny_grid, 1.0, bump, build_quadrature(4, 2))
    # the zero function: scale the bump away by evaluating h = 0 directly
    f = bump.d2_dx2(tiny_grid.node_x, tiny_grid.node_z) * 0.0
    assert float(f @ f) == 0.0
    assert zero >= 0.0


def test_null_space_residual_rejects_boundary_support(tiny_grid):
    with pytest.raises(ValueError):
        null_space_residual(tiny_grid, 1.0, SmoothBump(-1.0, 0.5, 0.05, 0.15))
    with pytest.raises(ValueError):
        null_space_residual(tiny_grid, 1.0, SmoothBump(-0.5, 0.5, 0.0, 0.15))


def test_smooth_bump_validation():
    with pytest.raises(ValueError):
        SmoothBump(0.5, -0.5, 0.0, 0.1)
    with pytest.raises(ValueError):
        SmoothBump(-0.5, 0.5, 0.05, 0.15, power=2)


# ---------------------------------------------------------------------------
# debug exports
# ---------------------------------------------------------------------------

def test_debug_exports(tmp_path, tiny_grid):
    quad = build_quadrature(4, 2)
    write_quadrature_csv(tmp_path / "quad.csv", quad)
    lines = (tmp_path / "quad.csv").read_text().splitlines()
    assert lines[0] == "lambda,weight"
    assert len(lines) == 1 + quad.nodes.size
    wm = assemble_Mw(tiny_grid, 0.5, quadrature=quad)
    write_matrix_csv(tmp_path / "mw.csv", wm.matrix)
    data = np.loadtxt(tmp_path / "mw.csv", delimiter=",")
    np.testing.assert_array_equal(data, wm.matrix)
    with pytest.raises(ValueError):
        write_matrix_csv(tmp_path / "big.csv", np.zeros((501, 501)))
