"""Product-form count distributions for per-state Poisson arrivals.

When every environment state feeds the station a plain (order-1) marked
Poisson stream, the in-service counts at working age u are independent
Poissons across types, with means
    a_jr(u) = alpha_jr * int_0^u (1 - B_jr(x)) dx.
The catastrophe composition then acts on explicit probabilities instead
of transforms, which gives closed-form count distributions cheap enough
to tabulate and compare against simulation histograms.
"""

from __future__ import annotations

import string

import numpy as np

from .environment import solve_environment, stationary_quadrature, stationary_weights
from .errors import UnsupportedFeatureError
from .gridding import trapezoid_weights
from .model import choose_grid

DEFAULT_CUTOFF = 30


def poisson_rates(model):
    """Per-state, per-type Poisson rates, or an error if not order-1.

    Any order-1 marked MAP is a superposition of independent Poisson
    streams (each event picks its type independently), which is exactly
    the product-form regime.
    """
    for j, st in enumerate(model.states):
        if st.order != 1:
            raise UnsupportedFeatureError(
                f"state {j} arrival process has {st.order} phases; the product form "
                "needs plain Poisson (single-phase) arrivals in every state"
            )
    return np.array([[st.arrivals.marks[r][0, 0] for r in range(st.n_types)]
                     for st in model.states])


def _in_service_means(model, grid):
    """a[j, r, n] = mean in-service count of type r at working age t_n in state j."""
    alpha = poisson_rates(model)
    d, kt = alpha.shape
    pts = grid.points
    a = np.empty((d, kt, pts.size))
    for j in range(d):
        for r in range(kt):
            a[j, r] = alpha[j, r] * model.states[j].service[r].integrated_survival(pts)
    return a


def _poisson_pmf_curves(mean_curve, n_max):
    """pois[n, t] = e^{-m(t)} m(t)^n / n! for n = 0..n_max, by recurrence."""
    out = np.empty((n_max + 1, mean_curve.size))
    out[0] = np.exp(-mean_curve)
    for n in range(1, n_max + 1):
        out[n] = out[n - 1] * mean_curve / n
    return out


def _counts_tuple(model, counts):
    kt = model.n_types
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(counts) != kt or any(c < 0 for c in counts):
        raise UnsupportedFeatureError(
            f"counts must be {kt} nonnegative integers, got {counts}"
        )
    return counts


def count_probability_curve(model, counts, grid=None, env=None):
    """P(in-service counts = counts at time t), composed over catastrophes.

    Returns (per_state, mixed) where per_state[i] is the curve started
    working in state i.  While the station repairs it is empty, so the
    all-zero count picks up the in-repair probability.
    """
    counts = _counts_tuple(model, counts)
    if grid is None:
        grid = choose_grid(model)
    if env is None:
        env = solve_environment(model, grid)
    a = _in_service_means(model, grid)
    d = model.n_states
    g = np.ones((d, grid.n_cells + 1))
    for j in range(d):
        for r, n_r in enumerate(counts):
            pmf = _poisson_pmf_curves(a[j, r], n_r)
            g[j] *= pmf[n_r]
    g = env.working_survival * g
    if all(c == 0 for c in counts):
        g = g + env.in_repair
    per_state = env.compose(g)
    mixed = model.initial @ per_state
    return per_state, mixed


def stationary_count_probability(model, counts, grid=None):
    """Long-run P(in-service counts = counts) under catastrophes."""
    counts = _counts_tuple(model, counts)
    if grid is None:
        grid = choose_grid(model)
    a = _in_service_means(model, grid)
    d = model.n_states
    curves = np.ones((d, grid.n_cells + 1))
    for j in range(d):
        for r, n_r in enumerate(counts):
            pmf = _poisson_pmf_curves(a[j, r], n_r)
            curves[j] *= pmf[n_r]
    rep = 1.0 if all(c == 0 for c in counts) else 0.0
    value, _ = stationary_quadrature(model, grid, curves, repair_value=rep)
    return float(value.real)


def stationary_count_table(model, cutoff=DEFAULT_CUTOFF, grid=None):
    """Joint stationary count distribution up to cutoff per type.

    Returns an array of shape (cutoff+1,) * K whose entry [n_1, ..., n_K]
    is the long-run probability of those in-service counts.  The sum
    falls short of 1 only by the Poisson mass beyond the cutoff.
    """
    if grid is None:
        grid = choose_grid(model)
    kt = model.n_types
    if kt > 8:
        raise UnsupportedFeatureError("joint count table supports at most 8 types")
    d = model.n_states
    pts = grid.points
    w = trapezoid_weights(grid)
    rho, _, _ = stationary_weights(model)
    a = _in_service_means(model, grid)
    horizon = np.asarray(grid.horizon)
    letters = string.ascii_lowercase[:kt]
    subs = ",".join(f"{c}t" for c in letters) + ",t->" + letters
    shape = (cutoff + 1,) * kt
    table = np.zeros(shape)
    norm = 0.0
    for j in range(d):
        # jump-averaged survival, same convention as stationary_quadrature
        surv = 1.0 - 0.5 * (model.sojourn_cdf(j, pts) + model.sojourn_cdf_left(j, pts))
        tail_mass = model.sojourn_mean(j) - float(model.sojourn_integrated_survival(j, horizon))
        repair_mass = model.mean_repair_after(j)
        pmfs = [_poisson_pmf_curves(a[j, r], cutoff) for r in range(kt)]
        table += rho[j] * np.einsum(subs, *pmfs, w * surv)
        # Frozen-tail correction: counts hold their horizon law.
        tail_block = pmfs[0][:, -1]
        for r in range(1, kt):
            tail_block = np.multiply.outer(tail_block, pmfs[r][:, -1])
        table += rho[j] * tail_mass * tail_block
        table[(0,) * kt] += rho[j] * repair_mass
        norm += rho[j] * (float(np.sum(w * surv)) + tail_mass + repair_mass)
    return table / norm
