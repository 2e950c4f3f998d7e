"""Mesh construction and piecewise-constant density arithmetic."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqevl.mesh import (
    Density,
    Mesh,
    graded_mesh,
    integrate_product,
    project,
    uniform_density,
    uniform_mesh,
)


def test_mesh_validation():
    with pytest.raises(ValueError):
        Mesh(np.array([0.0]))
    with pytest.raises(ValueError):
        Mesh(np.array([0.0, 0.5, 0.9]))  # must end at 1
    with pytest.raises(ValueError):
        Mesh(np.array([0.1, 0.5, 1.0]))  # must start at 0
    with pytest.raises(ValueError):
        Mesh(np.array([0.0, 0.5, 0.5, 1.0]))  # strictly increasing


def test_uniform_mesh_basics():
    m = uniform_mesh(8)
    assert m.n_cells == 8
    np.testing.assert_allclose(m.widths, 0.125)
    np.testing.assert_allclose(m.midpoints, np.arange(8) / 8 + 1 / 16)


def test_graded_mesh_invariants(mesh1024):
    b = mesh1024.boundaries
    assert b[0] == 0.0 and b[-1] == 1.0
    assert mesh1024.n_cells == 1024
    w = mesh1024.widths
    assert np.all(w > 0)
    # grading: widths nondecreasing toward x = 1 (up to renormalization
    # rounding at the floored cells), finest cells near 0
    assert np.all(np.diff(w) >= -1e-20)
    assert w[0] < 1e-4 < w[-1]
    assert np.all(w >= 1e-8 * (1 - 1e-12))


def test_graded_mesh_validation():
    with pytest.raises(ValueError):
        graded_mesh(1024, ratio=1.0)
    with pytest.raises(ValueError):
        graded_mesh(1)


def test_cell_index_brute_force(mesh512):
    rng = np.random.default_rng(11)
    xs = np.concatenate([rng.random(500), mesh512.boundaries, [0.0, 1.0]])
    idx = mesh512.cell_index(xs)
    b = mesh512.boundaries
    for x, k in zip(xs, idx):
        if x == 1.0:
            assert k == mesh512.n_cells - 1
        else:
            assert b[k] <= x < b[k + 1]


def test_refined_splits_every_cell(mesh512):
    fine = mesh512.refined()
    assert fine.n_cells == 2 * mesh512.n_cells
    np.testing.assert_array_equal(fine.boundaries[0::2], mesh512.boundaries)
    np.testing.assert_allclose(fine.widths[0::2], fine.widths[1::2])


def test_fingerprint_distinguishes_meshes(mesh512, mesh1024):
    assert mesh512.fingerprint() != mesh1024.fingerprint()
    assert mesh512.fingerprint() == graded_mesh(512).fingerprint()


# ---------------------------------------------------------------- densities

def test_density_shape_validation(mesh512):
    with pytest.raises(ValueError):
        Density(mesh512, np.ones(7))


def test_uniform_density_has_unit_mass(mesh1024):
    f = uniform_density(mesh1024)
    assert f.mass == pytest.approx(1.0, abs=1e-15)
    assert f.cdf(0.0) == 0.0
    assert f.cdf(1.0) == pytest.approx(1.0, abs=1e-15)
    assert f.cdf(0.37) == pytest.approx(0.37, abs=1e-12)


def test_cdf_exact_on_cell_boundaries(mesh512):
    rng = np.random.default_rng(5)
    f = Density(mesh512, rng.random(512) + 0.1)
    b = mesh512.boundaries
    np.testing.assert_allclose(f.cdf(b), f.prefix_mass, rtol=0, atol=0)


def test_cdf_linear_inside_cells():
    m = uniform_mesh(4)
    f = Density(m, np.array([1.0, 2.0, 3.0, 4.0]))
    # inside cell 1 (x in [0.25, 0.5)) the cdf grows at slope 2
    assert f.cdf(0.3) == pytest.approx(0.25 + 2.0 * 0.05, abs=1e-15)
    assert f.interval_mass(0.3, 0.4) == pytest.approx(0.2, abs=1e-15)


def test_interval_mass_brute_force(mesh512):
    rng = np.random.default_rng(17)
    f = Density(mesh512, rng.standard_normal(512))
    lo, hi = 0.123, 0.777
    # brute force: overlap of [lo, hi] with each cell times the cell value
    b = mesh512.boundaries
    overlap = np.clip(np.minimum(hi, b[1:]) - np.maximum(lo, b[:-1]), 0.0, None)
    assert f.interval_mass(lo, hi) == pytest.approx(
        float(np.sum(overlap * f.values)), abs=1e-14)


def test_at_and_call(mesh512):
    f = uniform_density(mesh512)
    assert f.at(0.5) == 1.0
    assert f(np.array([0.1, 0.9])).tolist() == [1.0, 1.0]


def test_l1_distance_and_difference():
    m = uniform_mesh(4)
    f = Density(m, np.array([1.0, 1.0, 1.0, 1.0]))
    g = Density(m, np.array([1.0, 2.0, 0.0, 1.0]))
    assert f.l1_distance(g) == pytest.approx(0.5, abs=1e-15)
    d = f.difference(g)
    assert d.mass == pytest.approx(0.0, abs=1e-15)
    m2 = uniform_mesh(5)
    with pytest.raises(ValueError):
        f.l1_distance(uniform_density(m2))


def test_normalized(mesh512):
    f = Density(mesh512, np.full(512, 3.0))
    g = f.normalized()
    assert g.mass == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        Density(mesh512, np.zeros(512)).normalized()


def test_with_values_rebuilds_prefix(mesh512):
    f = uniform_density(mesh512)
    g = f.with_values(2.0 * f.values)
    assert g.mass == pytest.approx(2.0, abs=1e-12)
    assert f.mass == pytest.approx(1.0, abs=1e-15)  # original untouched


@given(x=st.floats(min_value=0.0, max_value=1.0))
@settings(max_examples=100, deadline=None)
def test_cdf_monotone_for_nonnegative_density(x):
    m = graded_mesh(64)
    f = Density(m, np.linspace(0.2, 1.8, 64))
    assert 0.0 <= f.cdf(x) <= f.mass + 1e-12
    assert f.cdf(x) <= f.cdf(min(1.0, x + 0.1)) + 1e-15


# -------------------------------------------------------------- projection

def test_project_exact_for_piecewise_constant(mesh512):
    rng = np.random.default_rng(23)
    f = Density(mesh512, rng.random(512))
    g = project(f, mesh512)
    np.testing.assert_allclose(g.values, f.values, rtol=0, atol=1e-13)


def test_project_polynomial_is_exact(mesh512):
    # degree 7 is integrated exactly by 8-point Gauss-Legendre
    g = project(lambda x: x ** 7, mesh512)
    b = mesh512.boundaries
    exact = (b[1:] ** 8 - b[:-1] ** 8) / 8.0 / mesh512.widths
    np.testing.assert_allclose(g.values, exact, rtol=1e-12)


def test_integrate_product_smooth(mesh1024):
    # midpoint rule, so the error is O(w^2) of the widest (~0.03) cell
    val = integrate_product(lambda x: x, lambda x: x, mesh1024)
    assert val == pytest.approx(1.0 / 3.0, abs=1e-5)
    val2 = integrate_product(np.sin, np.cos, mesh1024)
    assert val2 == pytest.approx(0.5 * np.sin(1.0) ** 2, abs=1e-5)
