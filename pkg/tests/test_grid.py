import numpy as np
import pytest

from hrlab.grid import (Grid, StateField, cosine_mode, inner_l2,
                        laplacian_neumann, load_state_binary, load_state_csv,
                        norm_grad, norm_grad_sq, norm_h1, norm_l2, norm_l4,
                        random_smooth_field, save_state_binary,
                        save_state_csv, state_norm_e_sq, state_norm_h_sq)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((1.0, 1.0, 1.0, 1.0), (4, 4, 4, 4))
    with pytest.raises(ValueError):
        Grid(-1.0, 8)
    with pytest.raises(ValueError):
        Grid(1.0, 0)
    with pytest.raises(ValueError):
        Grid((1.0, 2.0), (8,))


@pytest.mark.parametrize("lengths,resolution", [
    (1.0, 128),
    ((1.0, 2.0), (16, 24)),
    ((1.0, 0.5, 2.0), (8, 6, 10)),
])
def test_quadrature_weights_sum_to_measure(lengths, resolution):
    g = Grid(lengths, resolution)
    assert np.sum(g.weights) == pytest.approx(g.measure, rel=1e-12)


def test_three_node_stencil_hand_value():
    g = Grid(2.0, 2)          # three nodes, h = 1
    out = laplacian_neumann(np.array([0.0, 1.0, 0.0]), g)
    assert np.array_equal(out, np.array([2.0, -2.0, 2.0]))


def test_constant_in_kernel(grid):
    f = np.full(grid.shape, 3.7)
    assert np.array_equal(laplacian_neumann(f, grid), np.zeros(grid.shape))


def test_cosine_eigenfunction_second_order():
    errs = []
    for n in (64, 128):
        g = Grid(1.0, n)
        x = g.axis_coords(0)
        f = np.cos(np.pi * x)
        err = np.max(np.abs(laplacian_neumann(f, g) + np.pi ** 2 * f))
        errs.append(err)
    ratio = errs[0] / errs[1]
    assert 3.0 < ratio < 5.0


def test_shape_mismatch_rejected(grid):
    with pytest.raises(ValueError):
        laplacian_neumann(np.zeros(7), grid)
    with pytest.raises(ValueError):
        norm_l2(np.zeros(7), grid)
    with pytest.raises(ValueError):
        StateField(np.zeros(3), np.zeros(4), np.zeros(3))


def test_norm_hand_values():
    g = Grid(2.0, 64)
    one = np.ones(g.shape)
    assert norm_l2(one, g) == pytest.approx(np.sqrt(2.0), rel=1e-12)
    assert norm_grad(one, g) == 0.0
    assert norm_h1(one, g) == pytest.approx(norm_l2(one, g))

    g1 = Grid(1.0, 128)
    x = g1.axis_coords(0)
    assert norm_grad(x, g1) == pytest.approx(1.0, rel=1e-12)

    two = np.full(g1.shape, 2.0)
    assert norm_l4(two, g1) == pytest.approx(2.0, rel=1e-12)
    assert norm_l2(np.zeros(g1.shape), g1) == 0.0


def test_cauchy_schwarz(grid, rng):
    for _ in range(20):
        f = rng.normal(size=grid.shape)
        g = rng.normal(size=grid.shape)
        lhs = abs(inner_l2(f, g, grid))
        rhs = norm_l2(f, grid) * norm_l2(g, grid)
        assert lhs <= rhs * (1.0 + 1e-12)


def test_summation_by_parts_and_symmetry(grid, rng):
    for _ in range(20):
        f = rng.normal(size=grid.shape)
        g = rng.normal(size=grid.shape)
        lap_f = laplacian_neumann(f, grid)
        lap_g = laplacian_neumann(g, grid)
        sbp = inner_l2(lap_f, f, grid) + norm_grad_sq(f, grid)
        assert abs(sbp) <= 1e-10 * norm_grad_sq(f, grid)
        sym = inner_l2(lap_f, g, grid) - inner_l2(f, lap_g, grid)
        scale = max(abs(inner_l2(lap_f, g, grid)), 1.0)
        assert abs(sym) <= 1e-10 * scale
        assert inner_l2(lap_f, f, grid) <= 0.0


def test_summation_by_parts_multid(rng):
    for g in (Grid((1.0, 2.0), (12, 20)), Grid((1.0, 0.7, 1.3), (6, 5, 8))):
        f = rng.normal(size=g.shape)
        sbp = inner_l2(laplacian_neumann(f, g), f, g) + norm_grad_sq(f, g)
        assert abs(sbp) <= 1e-10 * norm_grad_sq(f, g)


def test_cosine_mode_is_discrete_eigenvector():
    g = Grid((1.0, 2.0), (16, 12))
    f = cosine_mode(g, (2, 1))
    lap = laplacian_neumann(f, g)
    # exact discrete eigenvalue: sum over axes of (2 cos(pi k / n) - 2) / h^2
    lam = 0.0
    for ax, k in enumerate((2, 1)):
        n = g.resolution[ax]
        lam += (2.0 * np.cos(np.pi * k / n) - 2.0) / g.spacing[ax] ** 2
    assert np.allclose(lap, lam * f, atol=1e-10)


def test_h1_norm_identity(grid, rng):
    f = rng.normal(size=grid.shape)
    assert norm_h1(f, grid) ** 2 == pytest.approx(
        norm_l2(f, grid) ** 2 + norm_grad_sq(f, grid), rel=1e-12)


def test_sobolev_ratio_against_measured_constant(grid, rng):
    from hrlab.estimates import measure_rho
    rho_hat = measure_rho(grid, sample_count=32, seed=1)
    for _ in range(25):
        f = random_smooth_field(grid, rng)
        lhs = norm_l4(f, grid) ** 4
        rhs = rho_hat * (norm_l2(f, grid) ** 2 + norm_grad_sq(f, grid)) ** 2
        assert lhs <= rhs


def test_state_norms(grid, rng):
    s = StateField(rng.normal(size=grid.shape), rng.normal(size=grid.shape),
                   rng.normal(size=grid.shape))
    h = state_norm_h_sq(s, grid)
    e = state_norm_e_sq(s, grid)
    direct_h = sum(norm_l2(c, grid) ** 2 for c in s.components())
    direct_e = direct_h + sum(norm_grad_sq(c, grid) for c in s.components())
    assert h == pytest.approx(direct_h, rel=1e-12)
    assert e == pytest.approx(direct_e, rel=1e-12)


def test_binary_roundtrip(tmp_path, grid, rng):
    s = StateField(rng.normal(size=grid.shape), rng.normal(size=grid.shape),
                   rng.normal(size=grid.shape))
    path = tmp_path / "field.bin"
    save_state_binary(s, path)
    back = load_state_binary(path)
    assert np.array_equal(back.u, s.u)
    assert np.array_equal(back.v, s.v)
    assert np.array_equal(back.w, s.w)


def test_binary_roundtrip_2d(tmp_path, rng):
    g = Grid((1.0, 2.0), (6, 8))
    s = StateField(rng.normal(size=g.shape), rng.normal(size=g.shape),
                   rng.normal(size=g.shape))
    path = tmp_path / "field2.bin"
    save_state_binary(s, path)
    back = load_state_binary(path)
    assert back.u.shape == g.shape
    assert np.array_equal(back.w, s.w)


def test_csv_roundtrip(tmp_path, rng):
    g = Grid(1.0, 16)
    s = StateField(rng.normal(size=g.shape), rng.normal(size=g.shape),
                   rng.normal(size=g.shape))
    path = tmp_path / "field.csv"
    save_state_csv(s, g, path)
    back = load_state_csv(path, g)
    # repr round-trips doubles exactly
    assert np.array_equal(back.u, s.u)
    assert np.array_equal(back.v, s.v)
