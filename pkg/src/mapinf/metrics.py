"""Performance measures: queue means/variances, resources, losses.

Everything stationary is a cycle average: the environment alternates
working periods and repairs, so a long-run quantity is the per-cycle
integral of the one-period curve weighted by the stationary spread of
(state, working age).  Transient curves compose the one-period curves
with the renewal function of period starts.

Two independent routes exist for the stationary per-type queue mean:
the limit of the composed transient curve (moment ODE path) and the
closed-form survival integral lambda_jr int (1-F_j)(1-B_jr); both are
computed and their gap is reported, since their agreement is the main
internal accuracy check of the analytic engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import solve_environment, stationary_quadrature, stationary_weights
from .errors import HorizonError, NumericalFailure, RefinementError
from .mapproc import arrival_rates, stationary_vector
from .model import choose_grid
from .transient import count_moments

NEGATIVE_VARIANCE_TOL = -1e-8
TRUNCATION_TOL = 1e-6


@dataclass
class MetricsReport:
    """Analytic performance measures of one model on one grid.

    curves maps metric names to arrays over grid.points; limits and
    bounds map names to scalars (bounds are truncation-error bounds of
    the stationary quadratures).
    """

    grid: object
    n_types: int
    resource_dim: int
    curves: dict = field(default_factory=dict)
    limits: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)

    def curve_at(self, name, t):
        return float(self.curves[name][self.grid.index_of(t)])

    def to_dict(self, t_points=None, max_points=201):
        """JSON-ready dict; curves sampled at t_points or decimated."""
        pts = self.grid.points
        if t_points is not None:
            idx = [self.grid.index_of(t) for t in t_points]
        else:
            stride = max(1, int(np.ceil(pts.size / max_points)))
            idx = list(range(0, pts.size, stride))
            if idx[-1] != pts.size - 1:
                idx.append(pts.size - 1)
        times = [float(pts[i]) for i in idx]
        return {
            "grid": {"step": self.grid.step, "horizon": self.grid.horizon},
            "t": times,
            "curves": {name: [float(c[i]) for i in idx] for name, c in sorted(self.curves.items())},
            "limits": {k: float(v) for k, v in sorted(self.limits.items())},
            "bounds": {k: float(v) for k, v in sorted(self.bounds.items())},
        }


def _composed(model, env, per_state_curves):
    """Initial-distribution mix of the renewal composition of real curves."""
    return model.initial @ env.compose(per_state_curves)


def compute_report(model, grid=None, env=None):
    """All measures of the model: curves over the grid plus limits.

    Metric names (suffix _type{r} per customer type, _component{c} per
    resource component):
        mean_in_service, variance_in_service, mean_resource_in_service
        (curves and steady_* limits); loss_rate (destroyed per unit
        time), losses_per_cycle; plus _total aggregates.
    """
    if grid is None:
        grid = choose_grid(model)
    if env is None:
        env = solve_environment(model, grid)
    kt = model.n_types
    kdim = model.resource_dim
    d = model.n_states
    pts = grid.points
    report = MetricsReport(grid=grid, n_types=kt, resource_dim=kdim)

    # One-period ingredients per state: ODE moment curves started from
    # the arrival process's stationary phase, and the closed-form mean
    # lambda_jr * integrated service survival.
    phase = [stationary_vector(st.arrivals) for st in model.states]
    rates = np.array([arrival_rates(st.arrivals) for st in model.states])
    moms = []
    for j, st in enumerate(model.states):
        try:
            moms.append(count_moments(st, grid))
        except RefinementError as exc:
            raise RefinementError(
                f"mean_in_service/variance_in_service curves for state {j + 1}: {exc}",
                suggested_step=exc.suggested_step,
            ) from None
    mean_ode = np.empty((d, kt, pts.size))
    sec_ode = np.empty((d, kt, pts.size))
    mean_exact = np.empty((d, kt, pts.size))
    for j in range(d):
        for r in range(kt):
            mean_ode[j, r] = moms[j].mean_curve(r, phase[j])
            sec_ode[j, r] = moms[j].second_factorial_curve(r, phase[j])
            mean_exact[j, r] = rates[j, r] * model.states[j].service[r].integrated_survival(pts)

    surv = env.exact_survival
    rho, eta, _ = stationary_weights(model)
    cycle_rate = rho / float((rho * eta).sum())
    mean_total_curve = np.zeros(pts.size)
    lq_total = 0.0
    loss_total = 0.0
    delta_total = np.zeros(kdim)
    for r in range(kt):
        name = f"type{r + 1}"
        mean_curve = _composed(model, env, surv * mean_ode[:, r])
        sec_curve = _composed(model, env, surv * sec_ode[:, r])
        var_curve = sec_curve + mean_curve * (1.0 - mean_curve)
        worst = float(var_curve.min())
        if worst < NEGATIVE_VARIANCE_TOL:
            raise NumericalFailure(
                f"variance curve of type {r + 1} dips to {worst}; moments are inconsistent"
            )
        var_curve = np.maximum(var_curve, 0.0)
        report.curves[f"mean_in_service_{name}"] = mean_curve
        report.curves[f"variance_in_service_{name}"] = var_curve
        mean_total_curve = mean_total_curve + mean_curve

        lq_exact, b1 = stationary_quadrature(model, grid, mean_exact[:, r], repair_value=0.0)
        lq_ode, _ = stationary_quadrature(model, grid, mean_ode[:, r], repair_value=0.0)
        sec_lim, b2 = stationary_quadrature(model, grid, sec_ode[:, r], repair_value=0.0)
        lq_exact = float(lq_exact)
        report.limits[f"steady_mean_in_service_{name}"] = lq_exact
        report.limits[f"transient_limit_gap_{name}"] = float(lq_ode) - lq_exact
        report.limits[f"steady_variance_{name}"] = float(sec_lim) + lq_exact * (1.0 - lq_exact)
        report.bounds[f"steady_mean_in_service_{name}"] = float(b1)
        report.bounds[f"steady_variance_{name}"] = float(b2)
        if abs(b1) > TRUNCATION_TOL * max(abs(lq_exact), 1e-12):
            raise HorizonError(
                f"truncation bound {b1:.2e} exceeds tolerance on steady mean of type {r + 1}"
            )
        lq_total += lq_exact

        # Destroyed-customer rate: mean count at the catastrophe epoch,
        # integrated against the sojourn law (lattice Stieltjes), at the
        # long-run rate of cycles of each state.
        loss = 0.0
        for j in range(d):
            atoms = env.kernel.sojourn_atoms[j].sum(axis=0)
            head = float(np.sum(atoms * mean_exact[j, r]))
            tail = float(model.sojourn_survival(j, np.asarray(grid.horizon))) * \
                rates[j, r] * model.states[j].service[r].mean
            loss += cycle_rate[j] * (head + tail)
        report.limits[f"loss_rate_{name}"] = loss
        report.limits[f"losses_per_cycle_{name}"] = loss * float((rho * eta).sum())
        loss_total += loss

        for c in range(kdim):
            cname = f"{name}_component{c + 1}"
            cbar = np.array([model.states[j].arrival_resources[r].marginals[c].mean
                             for j in range(d)])
            res_curves = cbar[:, None] * mean_exact[:, r]
            res_curve = _composed(model, env, surv * res_curves)
            report.curves[f"mean_resource_in_service_{cname}"] = res_curve
            val, b3 = stationary_quadrature(model, grid, res_curves, repair_value=0.0)
            report.limits[f"steady_resource_{cname}"] = float(val)
            report.bounds[f"steady_resource_{cname}"] = float(b3)
            delta_total[c] += float(val)

    report.curves["mean_in_service_total"] = mean_total_curve
    report.limits["steady_mean_in_service_total"] = lq_total
    report.limits["loss_rate_total"] = loss_total
    report.limits["losses_per_cycle_total"] = loss_total * float((rho * eta).sum())
    for c in range(kdim):
        report.limits[f"steady_resource_total_component{c + 1}"] = delta_total[c]
    report.limits["mean_cycle_length"] = float((rho * eta).sum())
    return report
