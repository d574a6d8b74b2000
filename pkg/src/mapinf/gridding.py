"""Uniform time grids and measure discretization.

The renewal layer works on a lattice: every law is reduced to point
masses at the grid times (cell-centered assignment: the mass of
(t_n - h/2, t_n + h/2] sits at t_n, with the cell around zero picking up
any atom at the origin).  Convolutions of lattice measures are then
exact, which keeps structural identities -- kernel mass bounds, renewal
telescoping, normalization of composed transforms -- true to machine
precision instead of quadrature accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelValidationError

MAX_GRID_CELLS = 1_000_000


@dataclass(frozen=True)
class TimeGrid:
    """Evenly spaced times 0, h, 2h, ..., n*h covering [0, horizon]."""

    step: float
    horizon: float
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.step > 0.0:
            raise ModelValidationError(f"grid step must be positive, got {self.step}")
        if not self.horizon > 0.0:
            raise ModelValidationError(f"grid horizon must be positive, got {self.horizon}")
        n = int(np.ceil(self.horizon / self.step - 1e-9))
        if n > MAX_GRID_CELLS:
            raise ModelValidationError(
                f"grid would need {n} cells (> {MAX_GRID_CELLS}); raise the step or shrink the horizon"
            )
        object.__setattr__(self, "points", self.step * np.arange(n + 1))

    @property
    def n_cells(self):
        return len(self.points) - 1

    def index_of(self, t):
        """Index of the grid point nearest to t (t must sit on the grid)."""
        idx = int(round(t / self.step))
        if idx < 0 or idx > self.n_cells or abs(t - idx * self.step) > 1e-9 * max(1.0, abs(t)) + 1e-12:
            raise ModelValidationError(f"time {t} does not lie on the grid (step {self.step})")
        return idx


def law_atoms(law, grid):
    """Cell-centered lattice masses of a law on the grid.

    Entry n is the probability of (t_n - h/2, t_n + h/2]; entry 0 is
    F(h/2) and so includes any atom at zero.  The tail mass beyond the
    last cell is deliberately not assigned.
    """
    h = grid.step
    cdf_hi = law.cdf(grid.points + 0.5 * h)
    atoms = np.empty(len(grid.points))
    atoms[0] = cdf_hi[0]
    atoms[1:] = np.diff(cdf_hi)
    return atoms


def sub_atoms(sub, grid):
    """Lattice masses of a weighted (defective) law."""
    return sub.weight * law_atoms(sub.law, grid)


def atoms_to_cdf(atoms):
    return np.cumsum(atoms)


def lattice_survival(atoms):
    """1 - cumulative mass; the lattice analogue of P(X > t_n)."""
    return 1.0 - np.cumsum(atoms)


def convolve_atoms(a, b, n_keep=None):
    """Convolution of two lattice measures, truncated to the grid."""
    if n_keep is None:
        n_keep = len(a)
    return np.convolve(a, b)[:n_keep]


def convolve_measure_curve(atoms, curve):
    """(measure * curve)(t_n) = sum_m atoms[m] curve[n-m], truncated."""
    return np.convolve(atoms, curve)[: len(curve)]


def gridded_sub_cdf(sub, other_law, grid):
    """Distribution function of (sub-law + other_law) on the grid.

    The defective law is reduced to lattice masses; the second factor is
    evaluated exactly.  Output is nondecreasing and bounded by the
    sub-distribution's weight.
    """
    atoms = sub_atoms(sub, grid)
    other_cdf = other_law.cdf(grid.points)
    return convolve_measure_curve(atoms, other_cdf)


def trapezoid_weights(grid):
    w = np.full(len(grid.points), grid.step)
    w[0] = 0.5 * grid.step
    w[-1] = 0.5 * grid.step
    return w


def simpson_weights(grid):
    """Composite Simpson weights; falls back to trapezoid on the last cell when n is odd."""
    n_points = len(grid.points)
    h = grid.step
    if n_points < 3:
        return trapezoid_weights(grid)
    w = np.zeros(n_points)
    n_cells = n_points - 1
    last_even = n_cells if n_cells % 2 == 0 else n_cells - 1
    w[0:last_even + 1:2] += 2.0 * h / 3.0
    w[1:last_even:2] += 4.0 * h / 3.0
    w[0] -= h / 3.0
    w[last_even] -= h / 3.0
    if last_even != n_cells:
        w[-2] += 0.5 * h
        w[-1] += 0.5 * h
    return w
