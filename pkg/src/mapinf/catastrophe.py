"""Transforms of the system with catastrophes and repairs.

A catastrophe (environment jump) flushes every customer in service and
is followed by a repair with no arrivals.  The content observed at time
t therefore only depends on the current working period's age, so every
quantity composes out of three pieces: the clean single-period transform
from transient, the probability the first period is still running, and
the matrix renewal function of period starts from environment.

Compositions that must conserve probability exactly (transforms at
z = 1) run on the lattice, where survival + in-repair + completed-cycle
mass telescopes to machine precision.  Stationary values instead use
exact survival curves with closed-form tail and repair corrections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .environment import (build_kernel, solve_environment, stationary_quadrature,
                          stationary_weights)
from .errors import DomainError, HorizonError, UnsupportedFeatureError
from .gridding import TimeGrid, simpson_weights
from .mapproc import stationary_vector
from .model import choose_grid
from .transient import transform_curve

STATIONARY_TRUNCATION_TOL = 1e-6


def _clean_curves(model, grid, z1=None, z2=None, s1=None, s2=None, phase_init=None):
    """Per-state scalar transform of a fresh working period."""
    curves = np.empty((model.n_states, grid.n_cells + 1), dtype=complex)
    for i, st in enumerate(model.states):
        w = phase_init[i] if phase_init is not None else stationary_vector(st.arrivals)
        curves[i] = transform_curve(st, grid, weights=w, z1=z1, z2=z2, s1=s1, s2=s2)
    return curves


@dataclass(frozen=True)
class CatastropheTransform:
    """Composed transform curves of the system with catastrophes.

    per_state[i] is the curve started working in state i at time 0;
    mixed folds in the model's initial state distribution; first_period
    is the pre-composition ingredient (current working period running,
    or repairing) that the renewal composition consumed.
    """

    grid: object
    per_state: np.ndarray
    mixed: np.ndarray
    first_period: np.ndarray

    def normalization_residual(self):
        """Max |curve - 1| when evaluated at the normalization point."""
        return float(np.max(np.abs(self.per_state - 1.0)))


def transient_with_catastrophes(model, grid=None, z1=None, z2=None, s1=None, s2=None,
                                env=None, phase_init=None):
    """Transform of (counts, resources) at time t under catastrophes.

    Composes, per start state i,
        out_i = g_i + sum_l dH_il * g_l,
        g_l(t) = survival_l(t) p_l(t) + in_repair_l(t),
    where p_l is the clean one-period transform and the in-repair term
    contributes 1 per unit probability (the system is empty while
    repairing, so its transform is 1).
    """
    if grid is None:
        grid = choose_grid(model)
    if env is None:
        env = solve_environment(model, grid)
    clean = _clean_curves(model, grid, z1=z1, z2=z2, s1=s1, s2=s2, phase_init=phase_init)
    g = env.working_survival * clean + env.in_repair
    per_state = env.compose(g)
    mixed = model.initial.astype(complex) @ per_state
    return CatastropheTransform(grid=grid, per_state=per_state, mixed=mixed,
                                first_period=g)


def composition_residual(model, result, times, env=None):
    """Residual of the first-cycle identity out_i = g_i + sum_l Q_il * out_l.

    The renewal-composed curve (built through the renewal function H)
    must also solve the unsolved first-cycle equation, which restarts
    the full solution against the one-cycle kernel Q directly.  The
    right-hand side is evaluated here by direct lattice convolution with
    the cycle atoms, a path that never touches the renewal solve, so a
    defect in the forward substitution or in the composition shows up as
    a nonzero residual.

    Args:
        model: Model the result came from.
        result: CatastropheTransform.
        times: grid times to check at.
        env: optional EnvironmentSolution to reuse its kernel atoms.

    Returns:
        Array of max-over-states absolute residuals, one per time.
    """
    grid = result.grid
    d = model.n_states
    if env is not None:
        q_atoms = env.kernel.cycle_atoms
    else:
        q_atoms = build_kernel(model, grid).cycle_atoms
    out = result.per_state
    g = result.first_period
    res = np.empty(len(times))
    for m, t in enumerate(times):
        k = grid.index_of(t)
        rhs = g[:, k].astype(complex).copy()
        for i in range(d):
            for l in range(d):
                rhs[i] += np.sum(q_atoms[i, l, :k + 1] * out[l, k::-1])
        res[m] = float(np.max(np.abs(out[:, k] - rhs)))
    return res


def stationary_with_catastrophes(model, z1=None, z2=None, s1=None, s2=None,
                                 grid=None, phase_init=None, truncation_tol=STATIONARY_TRUNCATION_TOL):
    """Stationary transform of (counts, resources) under catastrophes.

    Cycle-averages the clean one-period transform over the stationary
    spread of (state, period age), with the repair stretch contributing
    transform 1.  Raises a horizon error when the truncation bound
    exceeds truncation_tol relative to the value.
    """
    if grid is None:
        grid = choose_grid(model)
    clean = _clean_curves(model, grid, z1=z1, z2=z2, s1=s1, s2=s2, phase_init=phase_init)
    value, bound = stationary_quadrature(model, grid, clean, repair_value=1.0)
    if bound > truncation_tol * max(abs(value), 1e-12):
        suggested = max(model.sojourn_tail_time(i, 1e-9) for i in range(model.n_states))
        raise HorizonError(
            f"horizon {grid.horizon} leaves a truncation bound {bound:.2e} on a value "
            f"{abs(value):.3e}; extend the horizon to about {suggested:.3g}"
        )
    return value, bound


def _exponential_rates(model):
    """Per-state sojourn rates, or an error if any sojourn is not exponential."""
    rates = np.empty(model.n_states)
    for i in range(model.n_states):
        row_rates = [sub.law for sub in model.kernel[i] if sub.weight > 0.0]
        if any(law.family != "exponential" for law in row_rates):
            raise UnsupportedFeatureError(
                f"state {i} sojourn is not exponential; the Laplace-domain path "
                "needs memoryless environment holding times"
            )
        vals = {law.params[0] for law in row_rates}
        if len(vals) != 1:
            raise UnsupportedFeatureError(
                f"state {i} branches carry different exponential rates {sorted(vals)}; "
                "the holding time must not depend on the destination"
            )
        rates[i] = row_rates[0].params[0]
    return rates


def _curve_laplace(curve, grid, s):
    """Laplace transform of a gridded curve, Simpson plus frozen tail."""
    w = simpson_weights(grid)
    decay = np.exp(-s * grid.points)
    head = np.sum(w * decay * curve)
    tail = curve[-1] * np.exp(-s * grid.horizon) / s
    return head + tail


def exponential_environment_lt(model, s, z1=None, z2=None, s1=None, s2=None,
                               grid=None, env=None, phase_init=None):
    """Laplace transform over t of the catastrophe transform, per start state.

    Only valid when every sojourn is exponential: then the composed
    transform's LT closes through the renewal function's transform.  The
    renewal LT uses the lattice atoms plus a constant-rate tail beyond
    the horizon (cycle starts settle to their long-run rate).

    Args:
        s: transform argument, Re s > 0 (complex allowed).

    Returns:
        (per_state, mixed): LT values per start state and under the
        model's initial distribution.
    """
    s = complex(s)
    if s.real <= 0.0:
        raise DomainError("time-Laplace argument needs Re s > 0")
    rates = _exponential_rates(model)
    if grid is None:
        grid = choose_grid(model)
    if env is None:
        env = solve_environment(model, grid)
    d = model.n_states
    clean = _clean_curves(model, grid, z1=z1, z2=z2, s1=s1, s2=s2, phase_init=phase_init)
    # LT of g_j = e^{-v_j t} p_j(t) + (in-repair term): the survival
    # factor shifts the argument; the repair term closes in law LSTs.
    g_lt = np.empty(d, dtype=complex)
    for j in range(d):
        head = _curve_laplace(clean[j], grid, s + rates[j])
        repair = 0.0 + 0.0j
        for l, sub in enumerate(model.kernel[j]):
            if sub.weight > 0.0:
                repair += sub.weight * sub.law.lst(s) * model.repairs[l].survival_lt(s)
        g_lt[j] = head + repair
    # LST of the renewal measure: lattice atoms plus Blackwell tail at
    # the long-run start rate of each state.
    rho, eta, _ = stationary_weights(model)
    start_rate = rho / float((rho * eta).sum())
    pts = grid.points
    decay = np.exp(-s * pts)
    h_lst = np.einsum("ijn,n->ij", env.renewal, decay)
    h_lst = h_lst + start_rate[None, :] * np.exp(-s * grid.horizon) / s
    per_state = g_lt + h_lst @ g_lt
    mixed = complex(model.initial @ per_state)
    return per_state, mixed


@dataclass(frozen=True)
class PoissonCatastropheResult:
    """Catastrophe transform when flushes arrive as a Poisson process.

    clean_curve is the no-catastrophe transform p(t); curve is the
    composed with-catastrophe transform; stationary its long-run limit.
    lt(s) gives the time-Laplace transform by the memoryless shift
    identity, lt_from_curve(s) by direct quadrature of curve -- the two
    agree up to quadrature error, which makes them a useful cross-check.
    """

    grid: object
    nu: float
    clean_curve: np.ndarray
    curve: np.ndarray
    stationary: complex

    def lt(self, s):
        s = complex(s)
        shifted = _curve_laplace(self.clean_curve, self.grid, s + self.nu)
        return (1.0 + self.nu / s) * shifted

    def lt_from_curve(self, s):
        return _curve_laplace(self.curve, self.grid, complex(s))


def poisson_catastrophe(model, nu, z1=None, s1=None, grid=None):
    """Catastrophe transform for a single state flushed at Poisson epochs.

    With exponential(nu) holding times and instant repair the renewal
    density is flat at nu, so the composition collapses to
        P(t) = e^{-nu t} p(t) + nu int_0^t e^{-nu u} p(u) du,
    and the stationary transform is nu times the clean transform's LT at
    nu.  Served-side arguments are marginalized (z2 = 1, s2 = 0): the
    flush resets the served counters.
    """
    if model.n_states != 1:
        raise UnsupportedFeatureError("Poisson-flush shortcut needs a single-state model")
    if nu <= 0.0:
        raise DomainError(f"flush rate must be positive, got {nu}")
    state = model.states[0]
    if grid is None:
        settle = max([law.tail_time(1e-10) for law in state.service if law.mean > 0.0] or [1.0])
        horizon = settle + 35.0 / nu
        means = [law.mean for law in state.service if law.mean > 0.0] or [1.0]
        step = min(min(means) / 100.0, horizon / 64.0)
        n = int(np.ceil(horizon / step))
        n += n % 2
        grid = TimeGrid(step=step, horizon=n * step)
    w = stationary_vector(state.arrivals)
    clean = transform_curve(state, grid, weights=w, z1=z1, s1=s1)
    damped = np.exp(-nu * grid.points) * clean
    # cumulative_simpson silently drops imaginary parts; integrate the
    # two components separately so complex arguments survive
    cum = integrate.cumulative_simpson(damped.real, dx=grid.step, initial=0.0) \
        + 1j * integrate.cumulative_simpson(damped.imag, dx=grid.step, initial=0.0)
    curve = damped + nu * cum
    stationary = nu * _curve_laplace(clean, grid, nu)
    return PoissonCatastropheResult(grid=grid, nu=float(nu), clean_curve=clean,
                                    curve=curve, stationary=stationary)
