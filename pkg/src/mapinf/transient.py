"""Transient analysis of one working period (no catastrophe yet).

Everything here concerns a single environment state observed from a
fresh start: the matrix transform of (counts in service, counts served,
accumulated resources) and the factorial-moment matrices of the count of
type-r customers in service.

The transform satisfies a linear matrix ODE whose coefficient is affine
in the service-law CDFs, so a fixed-step RK4 with the CDFs sampled one-
sidedly at cell edges keeps fourth order even for laws with kinks or
atoms, provided the kinks sit on grid nodes.  A half-step companion pass
gives a Richardson error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RefinementError
from .mapproc import _check_unit_disk, stationary_vector

# Offset used to take one-sided CDF limits at cell edges without
# tripping over the ~1 ulp noise in n*h: tiny against any density scale,
# huge against rounding.
EDGE_NUDGE = 1e-9

ERROR_TOLERANCE = 1e-6


def _resource_args(state, s1, s2):
    k = state.resource_dim
    s1 = np.zeros(k) if s1 is None else np.broadcast_to(np.asarray(s1, dtype=float), (k,))
    s2 = np.zeros(k) if s2 is None else np.broadcast_to(np.asarray(s2, dtype=float), (k,))
    return s1, s2


def _pgf_args(state, z1, z2):
    kt = state.n_types
    one = np.ones(kt)
    z1 = one if z1 is None else np.broadcast_to(np.asarray(z1), (kt,)).astype(complex)
    z2 = one if z2 is None else np.broadcast_to(np.asarray(z2), (kt,)).astype(complex)
    return z1, z2


def rate_matrix(state, t, z1=None, z2=None, s1=None, s2=None, check_domain=True):
    """Instantaneous coefficient of the transform ODE at time t.

    The coefficient is d0 plus, per type r, the mark matrix scaled by a
    mixture of the in-service weight z1_r*E[exp(-s1.alpha_r)] and the
    already-served weight z2_r*E[exp(-s2.beta_r)], mixed by the service
    CDF at t (arrivals at age t have finished with probability B_r(t)).
    """
    z1, z2 = _pgf_args(state, z1, z2)
    if check_domain:
        _check_unit_disk(z1, state.n_types)
        _check_unit_disk(z2, state.n_types)
    s1, s2 = _resource_args(state, s1, s2)
    base, slopes = _affine_coefficients(state, z1, z2, s1, s2)
    out = base.copy()
    for r, law in enumerate(state.service):
        out = out + slopes[r] * law.cdf(np.asarray(float(t)))
    return out


def _affine_coefficients(state, z1, z2, s1, s2):
    """Split the ODE coefficient as base + sum_r slope_r * B_r(t)."""
    m = state.order
    base = state.arrivals.d0.astype(complex)
    slopes = []
    for r in range(state.n_types):
        c_alive = z1[r] * state.arrival_resources[r].joint_lst(s1)
        c_done = z2[r] * state.served_resources[r].joint_lst(s2)
        mark = state.arrivals.marks[r]
        base = base + c_alive * mark
        slopes.append((c_done - c_alive) * mark)
    return base.reshape(m, m), slopes


def _service_cdf_samples(state, grid):
    """Service CDFs at the RK4 sample offsets of every cell.

    Returns (right, q1, mid, q3, left) arrays of shape (K, n+1) resp.
    (K, n): one-sided limits at the nodes plus quarter-point values.
    Kinks are assumed to sit on nodes, so interior samples use the plain
    CDF.
    """
    pts = grid.points
    h = grid.step
    nudge = EDGE_NUDGE * h
    right = np.stack([law.cdf(pts + nudge) for law in state.service])
    left = np.stack([law.cdf(pts - nudge) for law in state.service])
    inner = pts[:-1]
    q1 = np.stack([law.cdf(inner + 0.25 * h) for law in state.service])
    mid = np.stack([law.cdf(inner + 0.5 * h) for law in state.service])
    q3 = np.stack([law.cdf(inner + 0.75 * h) for law in state.service])
    return right, q1, mid, q3, left


def _rk4_cell(y, h, deriv, b_start, b_mid, b_end):
    k1 = deriv(y, b_start)
    k2 = deriv(y + (0.5 * h) * k1, b_mid)
    k3 = deriv(y + (0.5 * h) * k2, b_mid)
    k4 = deriv(y + h * k3, b_end)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(y0, grid, deriv, samples, store=True):
    """Fixed-step RK4 with a half-step companion for error estimation.

    The fine pass (two substeps per cell) is the result; the one-substep
    pass only feeds the Richardson estimate |coarse - fine| / 15.
    """
    right, q1, mid, q3, left = samples
    h = grid.step
    n = grid.n_cells
    y_fine = y0.copy()
    y_coarse = y0.copy()
    values = np.empty((n + 1,) + y0.shape, dtype=y0.dtype) if store else None
    if store:
        values[0] = y0
    err = 0.0
    for i in range(n):
        y_fine = _rk4_cell(y_fine, 0.5 * h, deriv, right[:, i], q1[:, i], mid[:, i])
        y_fine = _rk4_cell(y_fine, 0.5 * h, deriv, mid[:, i], q3[:, i], left[:, i + 1])
        y_coarse = _rk4_cell(y_coarse, h, deriv, right[:, i], mid[:, i], left[:, i + 1])
        err = max(err, float(np.max(np.abs(y_coarse - y_fine))) / 15.0)
        if store:
            values[i + 1] = y_fine
    return values if store else y_fine, err


def _check_estimate(err, scale, grid, tol):
    rel = err / max(1.0, scale)
    if rel > tol:
        factor = 2 ** max(1, math.ceil(math.log2((rel / tol) ** 0.25)))
        raise RefinementError(
            f"step {grid.step} leaves an error estimate {rel:.3e} above {tol}",
            suggested_step=grid.step / factor,
        )
    return rel


@dataclass(frozen=True)
class TransientTransform:
    """Matrix transform of one working period over a time grid.

    values[n][i, j] is E[z1^N(t) z2^M(t) exp(-s1.alpha - s2.beta);
    phase j at t | phase i at 0] for t = grid.points[n]; N/M are the
    per-type counts in service / served, alpha/beta the accumulated
    resource vectors.
    """

    grid: object
    values: np.ndarray
    error_estimate: float
    z1: np.ndarray
    z2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    def at(self, t):
        return self.values[self.grid.index_of(t)]

    def contracted(self, weights):
        """Scalar transform curve: weights . values . 1 on the grid."""
        w = np.asarray(weights, dtype=complex)
        return np.einsum("i,nij->n", w, self.values)


def solve_pgf(state, grid, z1=None, z2=None, s1=None, s2=None, check_domain=True, tol=ERROR_TOLERANCE):
    """Integrate the transform ODE A' = [d0 + S(t)] A over the grid.

    Args:
        state: StateModel.
        grid: TimeGrid; distribution kinks should sit on its nodes.
        z1, z2: per-type marks on counts in service / counts served
            (scalars broadcast, default 1).  Restricted to the closed
            unit disk unless check_domain=False (finite-difference
            probing needs z slightly above 1).
        s1, s2: resource transform arguments (length-k, default 0).
        check_domain: validate |z| <= 1 and Re s >= 0.
        tol: Richardson estimate ceiling before a refinement error.

    Returns:
        TransientTransform with A(t) at every grid node.
    """
    z1, z2 = _pgf_args(state, z1, z2)
    if check_domain:
        _check_unit_disk(z1, state.n_types)
        _check_unit_disk(z2, state.n_types)
    s1, s2 = _resource_args(state, s1, s2)
    if check_domain and (np.any(s1 < -1e-12) or np.any(s2 < -1e-12)):
        raise DomainError("resource transform arguments need Re s >= 0")
    base, slopes = _affine_coefficients(state, z1, z2, s1, s2)
    slopes = np.stack(slopes) if slopes else np.zeros((0,) + base.shape, dtype=complex)

    def deriv(y, b):
        coeff = base if slopes.shape[0] == 0 else base + np.tensordot(b, slopes, axes=(0, 0))
        return coeff @ y

    m = state.order
    y0 = np.eye(m, dtype=complex)
    samples = _service_cdf_samples(state, grid)
    values, err = _integrate(y0, grid, deriv, samples)
    err = _check_estimate(err, 1.0, grid, tol)
    return TransientTransform(grid=grid, values=values, error_estimate=err,
                              z1=z1, z2=z2, s1=s1, s2=s2)


def transform_curve(state, grid, weights=None, **kwargs):
    """Scalar transform curve started from a phase distribution.

    weights defaults to the arrival process's stationary phase vector.
    """
    sol = solve_pgf(state, grid, **kwargs)
    if weights is None:
        weights = stationary_vector(state.arrivals)
    return sol.contracted(weights)


@dataclass(frozen=True)
class CountMoments:
    """First/second factorial moment matrices of in-service counts.

    first[r][n] and second[r][n] are m x m matrices; contracting with a
    start distribution on the left and ones on the right gives
    E[N_r(t)] and E[N_r(t)(N_r(t)-1)].  propagator[n] = exp(D t_n).
    """

    grid: object
    propagator: np.ndarray
    first: np.ndarray
    second: np.ndarray
    error_estimate: float

    def mean_curve(self, r, weights):
        w = np.asarray(weights, dtype=float)
        return np.einsum("i,nij->n", w, self.first[r])

    def second_factorial_curve(self, r, weights):
        w = np.asarray(weights, dtype=float)
        return np.einsum("i,nij->n", w, self.second[r])


def count_moments(state, grid, tol=ERROR_TOLERANCE):
    """Factorial-moment matrices of every type's in-service count.

    Solves, jointly with P(t) = exp(Dt),
        M1_r' = D M1_r + (1 - B_r(t)) D_r P(t),
        M2_r' = D M2_r + 2 (1 - B_r(t)) D_r M1_r(t),
    which is the z-derivative structure of the transform ODE at z = 1.
    """
    kt = state.n_types
    m = state.order
    gen = state.arrivals.generator
    marks = np.stack([state.arrivals.marks[r] for r in range(kt)])

    def deriv(y, b):
        out = np.einsum("ij,sjk->sik", gen, y)
        surv = 1.0 - b
        out[1:1 + kt] += surv[:, None, None] * np.einsum("rij,jk->rik", marks, y[0])
        out[1 + kt:] += 2.0 * surv[:, None, None] * np.einsum("rij,rjk->rik", marks, y[1:1 + kt])
        return out

    y0 = np.zeros((1 + 2 * kt, m, m))
    y0[0] = np.eye(m)
    samples = _service_cdf_samples(state, grid)
    values, err = _integrate(y0, grid, deriv, samples)
    scale = float(np.max(np.abs(values)))
    err = _check_estimate(err, scale, grid, tol)
    return CountMoments(grid=grid, propagator=values[:, 0],
                        first=np.moveaxis(values[:, 1:1 + kt], 1, 0),
                        second=np.moveaxis(values[:, 1 + kt:], 1, 0),
                        error_estimate=err)


def mean_in_system(state, r, grid, weights=None, moments=None):
    """E[N_r(t)] curve from a fresh start.

    With the stationary phase vector as the start this reduces to the
    closed form lambda_r * integral_0^t (1 - B_r), which metrics uses as
    an independent cross-check.
    """
    if moments is None:
        moments = count_moments(state, grid)
    if weights is None:
        weights = stationary_vector(state.arrivals)
    return moments.mean_curve(r, weights)


def second_factorial_moment(state, r, grid, weights=None, moments=None):
    """E[N_r(t)(N_r(t) - 1)] curve from a fresh start."""
    if moments is None:
        moments = count_moments(state, grid)
    if weights is None:
        weights = stationary_vector(state.arrivals)
    return moments.second_factorial_curve(r, weights)


def resource_mean(state, r, component, grid, weights=None, tol=ERROR_TOLERANCE):
    """E[accumulated resource component c over type-r customers in service].

    Same first-moment ODE as the count, with the forcing scaled by the
    mean of that resource component carried by one in-service customer.
    """
    gamma = state.arrival_resources[r].marginals[component].mean
    m = state.order
    gen = state.arrivals.generator
    mark = state.arrivals.marks[r]

    def deriv(y, b):
        out = np.einsum("ij,sjk->sik", gen, y)
        out[1] += gamma * (1.0 - b[r]) * (mark @ y[0])
        return out

    y0 = np.zeros((2, m, m))
    y0[0] = np.eye(m)
    samples = _service_cdf_samples(state, grid)
    values, err = _integrate(y0, grid, deriv, samples)
    _check_estimate(err, max(1.0, float(np.max(np.abs(values)))), grid, tol)
    if weights is None:
        weights = stationary_vector(state.arrivals)
    w = np.asarray(weights, dtype=float)
    return np.einsum("i,nij->n", w, values[:, 1])
