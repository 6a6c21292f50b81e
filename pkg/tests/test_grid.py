"""Grid axes, quadrature weights, and windowed norms."""

import numpy as np
import pytest

from lagtransport.grid import (
    GridSpec,
    NormSpec,
    axis_weights,
    integrate_full,
    integrate_r,
    lp_norm,
    sup_in_time,
    suffix_weight_matrix,
)


def _grid_2d(nx=17, nr=9):
    return GridSpec(
        x_bounds=((-1.0, 1.0),),
        x_counts=(nx,),
        r_bounds=((0.0, 2.0),),
        r_counts=(nr,),
        time_nodes=np.array([0.0, 1.0]),
    )


# ---------------------------------------------------------------------
# axis weights
# ---------------------------------------------------------------------


def test_uniform_weights_sum_to_length():
    coords = np.linspace(-1.5, 2.5, 21)
    w = axis_weights(coords)
    assert w.shape == coords.shape
    assert np.all(w > 0)
    assert abs(np.sum(w) - 4.0) < 1e-13


def test_uniform_weights_integrate_cubics_exactly():
    # composite Simpson on an odd uniform axis is exact for cubics
    coords = np.linspace(0.0, 1.0, 33)
    w = axis_weights(coords)
    for m in range(4):
        exact = 1.0 / (m + 1)
        assert abs(np.sum(w * coords**m) - exact) < 1e-13


def test_even_count_weights_integrate_quadratics():
    # an even node count gets a Simpson body plus one trapezoid panel;
    # the panel is second order so quadratics are no longer exact, but
    # linears are, and the error for quadratics is one panel's worth
    coords = np.linspace(0.0, 1.0, 32)
    w = axis_weights(coords)
    assert abs(np.sum(w * coords) - 0.5) < 1e-13
    h = coords[1] - coords[0]
    assert abs(np.sum(w * coords**2) - 1.0 / 3.0) < h**3


def test_geometric_weights_integrate_log_polynomials():
    # on a geometric axis the rule is Simpson in v = ln(r), so functions
    # (ln r)^m / r (polynomials after substitution) integrate exactly
    coords = np.geomspace(1e-4, 1.0, 41)
    w = axis_weights(coords)
    assert np.all(w > 0)
    for m in range(4):
        vals = np.log(coords) ** m / coords
        exact = -((np.log(1e-4)) ** (m + 1)) / (m + 1)
        rel = abs(np.sum(w * vals) - exact) / abs(exact)
        assert rel < 1e-13


def test_geometric_weights_sum_close_to_length():
    coords = np.geomspace(1e-3, 1.0, 257)
    w = axis_weights(coords)
    # sum of weights is the quadrature of 1, exact only up to O(h^4) in
    # log coordinates; at this resolution that is far below one percent
    assert abs(np.sum(w) - (1.0 - 1e-3)) < 1e-5


def test_irregular_axis_falls_back_to_trapezoid():
    rng = np.random.default_rng(7)
    coords = np.sort(rng.uniform(0.0, 1.0, 15))
    w = axis_weights(coords)
    vals = 2.0 * coords + 1.0
    exact = np.trapezoid(vals, coords)
    assert abs(np.sum(w * vals) - exact) < 1e-14


def test_suffix_weight_matrix_rows_integrate_tails():
    coords = np.linspace(0.0, 1.0, 17)
    mat = suffix_weight_matrix(coords)
    assert mat.shape == (17, 17)
    # row m integrates over (coords[m], 1): check against linear tails
    for m in (0, 3, 8, 15):
        exact = 0.5 * (1.0 - coords[m] ** 2)
        assert abs(np.sum(mat[m] * coords) - exact) < 1e-13
    assert np.all(mat[-1] == 0.0)
    # strictly lower-triangular part vanishes
    for m in range(17):
        assert np.all(mat[m, :m] == 0.0)


# ---------------------------------------------------------------------
# GridSpec
# ---------------------------------------------------------------------


def test_grid_shapes_and_labels():
    grid = _grid_2d(nx=17, nr=9)
    assert grid.n == 1 and grid.j == 1
    assert grid.num_x == 17 and grid.num_r == 9
    assert grid.x_labels().shape == (17, 1)
    assert grid.r_labels().shape == (9, 1)
    assert grid.x_weights().shape == (17,)
    assert grid.r_weights().shape == (9,)


def test_grid_without_fiber():
    grid = GridSpec(
        x_bounds=((0.0, 1.0), (0.0, 2.0)),
        x_counts=(5, 7),
        time_nodes=np.array([0.0, 1.0]),
    )
    assert grid.n == 2 and grid.j == 0
    assert grid.num_x == 35 and grid.num_r == 1
    assert grid.r_labels().shape == (1, 0)
    assert grid.r_weights().shape == (1,)
    assert grid.r_weights()[0] == 1.0


def test_geometric_spacing_requires_positive_bounds():
    with pytest.raises(ValueError):
        GridSpec(
            x_bounds=((0.0, 1.0),),
            x_counts=(3,),
            r_bounds=((0.0, 1.0),),
            r_counts=(5,),
            time_nodes=np.array([0.0, 1.0]),
            r_spacing="geometric",
        )


def test_grid_rejects_decreasing_times():
    with pytest.raises(ValueError):
        GridSpec(
            x_bounds=((0.0, 1.0),),
            x_counts=(3,),
            time_nodes=np.array([0.0, -1.0]),
        )


def test_suffix_weights_need_one_dimensional_fiber():
    grid = GridSpec(
        x_bounds=((0.0, 1.0),),
        x_counts=(3,),
        r_bounds=((0.0, 1.0), (0.0, 1.0)),
        r_counts=(4, 4),
        time_nodes=np.array([0.0, 1.0]),
    )
    with pytest.raises(ValueError):
        grid.r_suffix_weights()


# ---------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------


def test_lp_norm_of_constant():
    grid = _grid_2d()
    vals = np.full((grid.num_x, grid.num_r), 3.0)
    spec = NormSpec(p=2.0)
    measure = 2.0 * 2.0
    assert abs(lp_norm(vals, grid, spec) - 3.0 * np.sqrt(measure)) < 1e-12
    assert abs(lp_norm(vals, grid, NormSpec(p=np.inf)) - 3.0) < 1e-14


def test_lp_norm_window_restricts_support():
    grid = _grid_2d(nx=33, nr=17)
    xs = grid.x_labels()[:, 0]
    vals = np.where(xs > 0.5, 1.0, 0.0)[:, None] * np.ones((1, grid.num_r))
    spec = NormSpec(p=np.inf, window=((-0.4, 0.4), (0.0, 2.0)))
    assert lp_norm(vals, grid, spec) == 0.0
    spec_full = NormSpec(p=np.inf)
    assert lp_norm(vals, grid, spec_full) == 1.0


def test_lp_norm_p1_matches_integral_of_abs():
    rng = np.random.default_rng(3)
    grid = _grid_2d()
    vals = rng.standard_normal((grid.num_x, grid.num_r))
    spec = NormSpec(p=1.0)
    w = grid.x_weights()[:, None] * grid.r_weights()[None, :]
    assert abs(lp_norm(vals, grid, spec) - np.sum(w * np.abs(vals))) < 1e-12


def test_sup_in_time_is_max_over_slices():
    rng = np.random.default_rng(11)
    grid = _grid_2d()
    vals = rng.standard_normal((4, grid.num_x, grid.num_r))
    spec = NormSpec(p=2.0)
    per_slice = [lp_norm(vals[k], grid, spec) for k in range(4)]
    assert abs(sup_in_time(vals, grid, spec) - max(per_slice)) < 1e-14


def test_integrate_r_and_full_factorize_for_products():
    grid = _grid_2d(nx=17, nr=33)
    xs = grid.x_labels()[:, 0]
    rs = grid.r_labels()[:, 0]
    vals = np.cos(xs)[:, None] * (rs**2)[None, :]
    # fiber integral of r^2 over (0, 2) is 8/3, Simpson-exact
    fiber = integrate_r(vals, grid)
    assert np.allclose(fiber, np.cos(xs) * (8.0 / 3.0), atol=1e-12)
    full = integrate_full(vals, grid)
    exact = 2.0 * np.sin(1.0) * (8.0 / 3.0)
    assert abs(full - exact) < 1e-4


def test_norm_spec_rejects_bad_exponent():
    with pytest.raises(ValueError):
        NormSpec(p=0.5)
