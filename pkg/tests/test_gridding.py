"""Lattice measures: atoms, convolution, quadrature weights."""

import math

import numpy as np
import pytest

from mapinf import (
    ModelValidationError,
    SubDistribution,
    TimeGrid,
    deterministic,
    exponential,
    uniform,
)
from mapinf.gridding import (
    atoms_to_cdf,
    convolve_atoms,
    convolve_measure_curve,
    gridded_sub_cdf,
    lattice_survival,
    law_atoms,
    simpson_weights,
    sub_atoms,
    trapezoid_weights,
)


def grid(step=0.01, horizon=10.0):
    return TimeGrid(step, horizon)


def test_grid_points_and_index():
    g = TimeGrid(0.25, 2.0)
    assert g.n_cells == 8
    assert np.allclose(g.points, 0.25 * np.arange(9))
    assert g.index_of(0.0) == 0
    assert g.index_of(1.75) == 7
    with pytest.raises(ModelValidationError):
        g.index_of(0.3)
    with pytest.raises(ModelValidationError):
        g.index_of(2.25)


def test_atoms_are_cell_centered_masses():
    g = grid()
    law = exponential(1.0)
    atoms = law_atoms(law, g)
    h = g.step
    # atom 0 collects [0, h/2], atom n the cell (t_n - h/2, t_n + h/2]
    assert atoms[0] == pytest.approx(law.cdf(h / 2.0), abs=1e-15)
    n = 100
    want = law.cdf(n * h + h / 2.0) - law.cdf(n * h - h / 2.0)
    assert atoms[n] == pytest.approx(want, abs=1e-15)
    assert np.all(atoms >= 0.0)
    assert np.sum(atoms) <= 1.0 + 1e-12


def test_atoms_capture_point_masses():
    g = TimeGrid(0.25, 2.0)
    atoms = law_atoms(deterministic(1.0), g)
    want = np.zeros(9)
    want[4] = 1.0
    assert np.array_equal(atoms, want)


def test_atoms_to_cdf_and_survival():
    g = grid()
    atoms = law_atoms(exponential(2.0), g)
    cdf = atoms_to_cdf(atoms)
    assert np.all(np.diff(cdf) >= 0.0)
    surv = lattice_survival(atoms)
    assert np.allclose(cdf + surv, 1.0, atol=1e-12)
    # node values sit within half a cell of the exact law
    exact = exponential(2.0).cdf(g.points)
    assert np.max(np.abs(cdf - exact)) < 2.0 * g.step


def test_convolution_with_zero_mass_is_zero():
    g = grid(horizon=4.0)
    a = sub_atoms(SubDistribution(0.0, exponential(1.0)), g)
    b = law_atoms(exponential(1.0), g)
    assert np.all(convolve_atoms(a, b) == 0.0)


def test_convolution_with_unit_point_mass_is_identity():
    g = grid(horizon=4.0)
    a = sub_atoms(SubDistribution(1.0, exponential(1.0)), g)
    b = law_atoms(deterministic(0.0), g)
    assert np.allclose(convolve_atoms(a, b), a, atol=1e-15)


def test_convolution_matches_erlang():
    g = grid(step=0.005, horizon=20.0)
    e = law_atoms(exponential(1.0), g)
    conv = atoms_to_cdf(convolve_atoms(e, e))
    k = g.index_of(2.0)
    want = 1.0 - math.exp(-2.0) * 3.0  # Erlang(2, 1) at t=2
    assert abs(conv[k] - want) < 2.0 * g.step


def test_gridded_sub_cdf():
    g = grid(step=0.01, horizon=8.0)
    sub = SubDistribution(0.7, exponential(1.5))
    other = uniform(0.5, 1.5)
    direct = gridded_sub_cdf(sub, other, g)
    # definition: lattice masses of sub composed with the exact second factor
    want = convolve_measure_curve(sub_atoms(sub, g), other.cdf(g.points))
    assert np.allclose(direct, want, atol=1e-15)
    assert np.all(np.diff(direct) >= -1e-15)
    assert direct[-1] <= sub.weight + 1e-12
    # close to the all-atoms route at lattice resolution
    via_atoms = atoms_to_cdf(convolve_atoms(sub_atoms(sub, g), law_atoms(other, g)))
    assert np.max(np.abs(direct - via_atoms)) < 2.0 * g.step
    # second factor a point mass at zero: the sub-law's own lattice CDF
    same = gridded_sub_cdf(sub, deterministic(0.0), g)
    assert np.allclose(same, atoms_to_cdf(sub_atoms(sub, g)), atol=1e-15)


def test_convolve_measure_curve():
    g = grid(step=0.1, horizon=3.0)
    atoms = law_atoms(deterministic(1.0), g)
    curve = np.sin(g.points)
    out = convolve_measure_curve(atoms, curve)
    # convolving a curve with a unit mass at 1.0 shifts it by 1.0
    k = g.index_of(1.0)
    assert np.allclose(out[k:], curve[: len(curve) - k], atol=1e-12)
    assert np.allclose(out[:k], 0.0, atol=1e-12)


def test_trapezoid_weights_integrate_linear_exactly():
    g = grid(step=0.02, horizon=1.0)
    w = trapezoid_weights(g)
    assert w.shape == g.points.shape
    assert np.sum(w) == pytest.approx(1.0, abs=1e-12)
    assert np.dot(w, g.points) == pytest.approx(0.5, abs=1e-12)


def test_simpson_weights_integrate_cubic_exactly():
    g = grid(step=0.02, horizon=1.0)
    w = simpson_weights(g)
    assert np.sum(w) == pytest.approx(1.0, abs=1e-12)
    for p in (1, 2, 3):
        assert np.dot(w, g.points ** p) == pytest.approx(1.0 / (p + 1), abs=1e-10)


def test_quadrature_weights_on_smooth_integrand():
    g = grid(step=0.01, horizon=2.0)
    f = np.exp(-g.points)
    want = 1.0 - math.exp(-2.0)
    assert np.dot(trapezoid_weights(g), f) == pytest.approx(want, abs=1e-4)
    assert np.dot(simpson_weights(g), f) == pytest.approx(want, abs=1e-9)
