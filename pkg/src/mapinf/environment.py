"""Semi-Markov environment: gridded kernel, renewal matrix, stationary law.

A working period in state i ends after the state's sojourn law fires; a
repair drawn from the entered state's law follows; then the next working
period starts.  The matrix renewal function of working-period starts
drives every composition in the catastrophe module, so it is computed
with exact lattice algebra: distributions become atom measures on a
uniform grid (cell-centered masses), convolution is discrete, and the
renewal equation is solved by forward substitution.  Within that
discretization the algebra is closed -- total masses telescope exactly,
which is what keeps normalization residuals at machine precision.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure
from .gridding import convolve_atoms, law_atoms, trapezoid_weights
from .mapproc import stationary_vector as _map_stationary

# Kernel mass unaccounted for at the horizon above this triggers a
# truncation warning: compositions then lean on absent renewals.
HORIZON_MASS_WARN = 1e-3


class HorizonWarning(UserWarning):
    """Grid horizon truncates visible kernel mass."""


@dataclass(frozen=True)
class KernelGrid:
    """Lattice atoms of the sojourn kernel and the full cycle kernel.

    sojourn_atoms[i, j, n]: mass of branch i->j sojourn lengths in cell n.
    cycle_atoms[i, j, n]: same for sojourn-plus-repair (one whole cycle).
    """

    grid: object
    sojourn_atoms: np.ndarray
    cycle_atoms: np.ndarray

    @property
    def n_states(self):
        return self.sojourn_atoms.shape[0]

    def cycle_mass(self):
        """Per-row kernel mass inside the horizon."""
        return self.cycle_atoms.sum(axis=(1, 2))


def build_kernel(model, grid):
    """Discretize the one-cycle semi-Markov kernel on the grid.

    Each branch law becomes cell-centered atoms; a repair law is folded
    in by discrete convolution, keeping the lattice algebra exact.
    """
    d = model.n_states
    n = grid.n_cells
    soj = np.zeros((d, d, n + 1))
    cyc = np.zeros((d, d, n + 1))
    for i in range(d):
        for j, sub in enumerate(model.kernel[i]):
            if sub.weight == 0.0:
                continue
            atoms = sub.weight * law_atoms(sub.law, grid)
            soj[i, j] = atoms
            cyc[i, j] = convolve_atoms(atoms, law_atoms(model.repairs[j], grid), n + 1)
    kern = KernelGrid(grid=grid, sojourn_atoms=soj, cycle_atoms=cyc)
    missing = 1.0 - kern.cycle_mass()
    worst = int(np.argmax(missing))
    if missing[worst] > HORIZON_MASS_WARN:
        warnings.warn(
            f"horizon {grid.horizon} truncates {missing[worst]:.2e} of the cycle kernel "
            f"mass out of state {worst}; raise the horizon",
            HorizonWarning,
            stacklevel=2,
        )
    return kern


def renewal_matrix(kernel):
    """Matrix renewal density of working-period starts, on the lattice.

    Solves dH = dQ + dQ * dH cell by cell (forward substitution); the
    result's cell n entry (i, j) is the expected number of working
    periods that start in state j during cell n, for a period that
    started in state i at 0.  No atom at the origin: the starting period
    itself is not counted as a renewal.
    """
    q = kernel.cycle_atoms
    d = q.shape[0]
    n_atoms = q.shape[2]
    eye = np.eye(d)
    head = eye - q[:, :, 0]
    if np.linalg.cond(head) > 1e12:
        raise NumericalFailure(
            "cycle kernel concentrates unit mass in the first grid cell; shrink the step"
        )
    head_inv = np.linalg.inv(head)
    # dH[n] = dQ[n] + sum_{m=1..n} dQ[m] dH[n-m], after moving the m=0
    # term to the left-hand side.
    q_cells = np.moveaxis(q, 2, 0)
    h_cells = np.zeros((n_atoms, d, d))
    h_cells[0] = head_inv @ q_cells[0]
    for n in range(1, n_atoms):
        rhs = q_cells[n] + np.einsum("mij,mjk->ik", q_cells[1:n + 1], h_cells[n - 1::-1][:n])
        h_cells[n] = head_inv @ rhs
    return np.moveaxis(h_cells, 0, 2)


@dataclass(frozen=True)
class EnvironmentSolution:
    """Everything the renewal architecture needs about the environment.

    Lattice curves are indexed [state, grid node].  working_survival is
    the probability the first sojourn is still running; in_repair is the
    probability the cycle is past its sojourn but still repairing, split
    by lattice algebra so working_survival + in_repair + cycles-complete
    telescopes exactly.
    """

    grid: object
    kernel: KernelGrid
    renewal: np.ndarray
    working_survival: np.ndarray
    in_repair: np.ndarray
    exact_survival: np.ndarray
    mean_sojourn: np.ndarray
    mean_cycle: np.ndarray
    embedded: np.ndarray
    visit_weights: np.ndarray
    state_weights: np.ndarray

    @property
    def n_states(self):
        return self.kernel.n_states

    def renewal_cdf(self):
        return np.cumsum(self.renewal, axis=2)

    def compose(self, curves):
        """Renewal composition out_i = g_i + sum_l conv(dH_il, g_l).

        curves has shape (d, n+1); entries may be complex.  The
        convolution pairs the renewal atoms with the curve values at the
        remaining time, which is exact on the lattice.
        """
        d, n_pts = curves.shape
        out = curves.astype(curves.dtype, copy=True)
        for i in range(d):
            for l in range(d):
                atoms = self.renewal[i, l]
                if not atoms.any():
                    continue
                out[i] += np.convolve(atoms, curves[l])[:n_pts]
        return out


def sojourn_curves(model, grid):
    """Exact working-period survival per state on the grid nodes."""
    pts = grid.points
    return np.stack([model.sojourn_survival(i, pts) for i in range(model.n_states)])


def stationary_weights(model):
    """Long-run fraction of time the environment spends working in each state.

    The embedded jump chain's stationary vector, weighted by mean cycle
    length (sojourn plus following repair), normalized.  Also returns
    the visit vector and mean cycle lengths: q_i = rho_i eta_i / sum.
    """
    p = model.weights
    rho = _embedded_stationary(p)
    eta = np.array([model.mean_cycle(i) for i in range(model.n_states)])
    mass = rho * eta
    return rho, eta, mass / mass.sum()


def _embedded_stationary(p):
    d = p.shape[0]
    if d == 1:
        return np.ones(1)
    a = np.vstack([(p.T - np.eye(d))[:-1], np.ones(d)])
    b = np.zeros(d)
    b[-1] = 1.0
    rho = np.linalg.solve(a, b)
    if np.any(rho < -1e-10):
        raise NumericalFailure("embedded chain stationary vector came out negative")
    rho = np.clip(rho, 0.0, None)
    return rho / rho.sum()


def solve_environment(model, grid):
    """Grid the kernel, solve the renewal equation, split the cycle.

    The in-repair curve r_i(t) = sum_j (sojourn-atoms_ij * repair-
    survival_j)(t) and the lattice working survival add up to the exact
    complement of the cycle-kernel CDF, so compositions built from the
    three pieces conserve probability on the lattice to machine
    precision.
    """
    kern = build_kernel(model, grid)
    renewal = renewal_matrix(kern)
    d = model.n_states
    n_pts = grid.n_cells + 1
    working = 1.0 - np.cumsum(kern.sojourn_atoms.sum(axis=1), axis=1)
    in_rep = np.zeros((d, n_pts))
    for i in range(d):
        for j in range(d):
            atoms = kern.sojourn_atoms[i, j]
            if not atoms.any():
                continue
            rep_surv = 1.0 - np.cumsum(law_atoms(model.repairs[j], grid))
            in_rep[i] += np.convolve(atoms, rep_surv)[:n_pts]
    rho, eta, q = stationary_weights(model)
    return EnvironmentSolution(
        grid=grid,
        kernel=kern,
        renewal=renewal,
        working_survival=working,
        in_repair=in_rep,
        exact_survival=sojourn_curves(model, grid),
        mean_sojourn=np.array([model.sojourn_mean(i) for i in range(d)]),
        mean_cycle=eta,
        embedded=model.weights,
        visit_weights=rho,
        state_weights=q,
    )


def stationary_quadrature(model, grid, curves, tails=None, repair_value=1.0):
    """Cycle-average a per-state curve against the exact sojourn survival.

    Computes sum_i q_i/eta_i * [trapz(survival_i * curve_i) + tail_i +
    repair_i], with eta_i rebuilt by the same quadrature operator plus
    closed-form corrections, so a curve identically 1 (with repair value
    1) integrates to exactly 1.

    Args:
        model: Model.
        grid: TimeGrid the curves live on.
        curves: shape (d, n+1), may be complex; curve_i(t) is the
            quantity at elapsed working time t in state i.
        tails: per-state value the curve holds past the horizon
            (default: its value at the horizon).
        repair_value: value of the quantity while the station repairs
            (1 for transforms of an empty system, 0 for count moments).
            Scalar or per-state array.

    Returns:
        (value, truncation_bound): the cycle average and a bound on the
        error of freezing the curve past the horizon.
    """
    d = model.n_states
    pts = grid.points
    w = trapezoid_weights(grid)
    horizon = np.asarray(grid.horizon)
    rho, _, _ = stationary_weights(model)
    if tails is None:
        tails = curves[:, -1]
    # Jump-averaged survival: at a CDF jump node the trapezoid rule
    # needs (S(t-) + S(t+))/2 so the one-sided errors of the two
    # adjacent cells cancel; elsewhere the two limits coincide.
    surv = np.stack([
        1.0 - 0.5 * (model.sojourn_cdf(i, pts) + model.sojourn_cdf_left(i, pts))
        for i in range(d)
    ])
    # Closed-form corrections: sojourn survival mass past the horizon,
    # and the repair stretch of the cycle, over which the system sits
    # empty at a known value.
    tail_mass = np.array([
        model.sojourn_mean(i) - float(model.sojourn_integrated_survival(i, horizon))
        for i in range(d)
    ])
    repair_mass = np.array([model.mean_repair_after(i) for i in range(d)])
    rep_val = np.broadcast_to(np.asarray(repair_value), (d,))
    eta = surv @ w + tail_mass + repair_mass
    numer = (surv * curves) @ w + tail_mass * tails + repair_mass * rep_val
    mass = rho * eta
    value = (rho * numer).sum() / mass.sum()
    bound = float((rho * tail_mass).sum() / mass.sum()) * 2.0
    return value, bound


def kernel_cdf_nodes(model, grid):
    """Cycle-kernel distribution functions at grid nodes, half-step rule.

    Independent of the lattice-atom route: each branch's sojourn law is
    integrated against the exact repair distribution by a Stieltjes
    trapezoid on a twice-refined grid,
        Q_il(t) = w_il int_0^t G_l(t - u) dF_il(u),
    so it shares no code with build_kernel/renewal_matrix and serves as
    a cross-check discretization for residual tests.
    """
    d = model.n_states
    n = grid.n_cells
    delta = 0.5 * grid.step
    fine = delta * np.arange(2 * n + 2)
    out = np.zeros((d, d, n + 1))
    for i in range(d):
        for l, sub in enumerate(model.kernel[i]):
            if sub.weight == 0.0:
                continue
            f_nodes = sub.law.cdf(fine)
            atom0 = f_nodes[0]
            df = np.diff(f_nodes)
            g = model.repairs[l].cdf(fine[:-1])
            c = np.convolve(df, g)
            k = np.arange(1, n + 1)
            vals = np.empty(n + 1)
            vals[0] = atom0 * g[0]
            vals[1:] = 0.5 * (c[2 * k] - df[2 * k] * g[0] + c[2 * k - 1]) \
                + atom0 * g[2 * k]
            out[i, l] = sub.weight * vals
    return out
