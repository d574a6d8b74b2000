"""Full model description: environment, per-state arrival dynamics, laws.

The system alternates working periods and repairs.  While working in
environment state i, customers of K types arrive by that state's marked
MAP, occupy one of infinitely many servers for a type- and state-
dependent service time, and carry random resource vectors.  When the
environment jumps, every customer in service is destroyed, the station
repairs for a time drawn from the entered state's repair law (no
arrivals meanwhile), and service restarts empty with a fresh phase.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph

from .errors import ModelValidationError
from .gridding import MAX_GRID_CELLS, TimeGrid
from .laws import Law, ResourceVectorLaw, SubDistribution
from .mapproc import MarkedMap

# Default step divisor and tail mass used when the caller does not pin
# the grid: step = min(mean sojourn, mean service)/100, horizon out to
# where every sojourn survival is below 1e-8.
GRID_STEP_DIVISOR = 100.0
HORIZON_TAIL_MASS = 1e-8


class GridAlignmentWarning(UserWarning):
    """A distribution breakpoint does not sit on the integration grid."""


@dataclass(frozen=True)
class StateModel:
    """Arrival process, service laws and resource laws of one state."""

    arrivals: MarkedMap
    service: tuple
    arrival_resources: tuple
    served_resources: tuple

    def __post_init__(self):
        k_types = self.arrivals.n_types
        if len(self.service) != k_types:
            raise ModelValidationError(
                f"state has {len(self.service)} service laws but {k_types} customer types"
            )
        if len(self.arrival_resources) != k_types or len(self.served_resources) != k_types:
            raise ModelValidationError("need one resource vector law per customer type")
        dims = {rv.dim for rv in self.arrival_resources} | {rv.dim for rv in self.served_resources}
        if len(dims) != 1:
            raise ModelValidationError(f"resource vector dimensions differ across types: {sorted(dims)}")

    @property
    def n_types(self):
        return self.arrivals.n_types

    @property
    def resource_dim(self):
        return self.arrival_resources[0].dim

    @property
    def order(self):
        return self.arrivals.order


@dataclass(frozen=True)
class Model:
    """Semi-Markov environment with per-state arrival/service dynamics.

    kernel[i][j] is the sub-distribution of (next state j, sojourn length)
    out of state i; repairs[j] is the repair law suffered on entering j;
    initial is the distribution of the state the system starts working in.
    """

    kernel: tuple
    repairs: tuple
    initial: np.ndarray
    states: tuple

    def __post_init__(self):
        d = len(self.states)
        if d == 0:
            raise ModelValidationError("model needs at least one environment state")
        if len(self.kernel) != d or any(len(row) != d for row in self.kernel):
            raise ModelValidationError(f"kernel must be {d}x{d} to match the state count")
        if len(self.repairs) != d:
            raise ModelValidationError("need one repair law per environment state")
        initial = np.array(self.initial, dtype=float)
        if initial.shape != (d,):
            raise ModelValidationError(f"initial distribution must have length {d}")
        if np.any(initial < 0.0) or abs(initial.sum() - 1.0) > 1e-9:
            raise ModelValidationError("initial distribution must be nonnegative and sum to 1")
        initial.setflags(write=False)
        object.__setattr__(self, "initial", initial)
        for i, row in enumerate(self.kernel):
            mass = sum(sub.weight for sub in row)
            if abs(mass - 1.0) > 1e-9:
                raise ModelValidationError(f"kernel row {i} weights sum to {mass}, expected 1")
        types = {s.n_types for s in self.states}
        if len(types) != 1:
            raise ModelValidationError(f"customer type count differs across states: {sorted(types)}")
        dims = {s.resource_dim for s in self.states}
        if len(dims) != 1:
            raise ModelValidationError(f"resource dimension differs across states: {sorted(dims)}")
        if d > 1:
            adj = (self.weights > 0.0).astype(np.int8)
            n_comp, labels = csgraph.connected_components(adj, directed=True, connection="strong")
            if n_comp > 1:
                classes = [list(np.flatnonzero(labels == c)) for c in range(n_comp)]
                raise ModelValidationError(
                    f"environment jump chain is reducible; communicating classes {classes}"
                )

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_types(self):
        return self.states[0].n_types

    @property
    def resource_dim(self):
        return self.states[0].resource_dim

    @property
    def weights(self):
        """Embedded jump-chain transition matrix (branch weights)."""
        d = self.n_states
        return np.array([[self.kernel[i][j].weight for j in range(d)] for i in range(d)])

    # -- exact sojourn/repair summaries ---------------------------------------

    def sojourn_cdf(self, i, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for sub in self.kernel[i]:
            if sub.weight > 0.0:
                out = out + sub.weight * sub.law.cdf(t)
        return out

    def sojourn_cdf_left(self, i, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for sub in self.kernel[i]:
            if sub.weight > 0.0:
                out = out + sub.weight * sub.law.cdf_left(t)
        return out

    def sojourn_survival(self, i, t):
        return 1.0 - self.sojourn_cdf(i, t)

    def sojourn_mean(self, i):
        return sum(sub.mean_mass for sub in self.kernel[i])

    def sojourn_integrated_survival(self, i, t):
        t = np.asarray(t, dtype=float)
        out = np.asarray(t, dtype=float).copy()
        for sub in self.kernel[i]:
            if sub.weight > 0.0:
                out = out - sub.weight * (t - sub.law.integrated_survival(t))
        return out

    def mean_repair_after(self, i):
        """Expected repair length following a catastrophe out of state i."""
        return sum(
            sub.weight * self.repairs[j].mean for j, sub in enumerate(self.kernel[i])
        )

    def mean_cycle(self, i):
        """Closed-form mean time between working starts out of state i."""
        return self.sojourn_mean(i) + self.mean_repair_after(i)

    def sojourn_tail_time(self, i, eps):
        """Doubling search for T with P(sojourn_i > T) <= eps."""
        t = max(self.sojourn_mean(i), 1e-6)
        for _ in range(80):
            if self.sojourn_survival(i, np.array(t)) <= eps:
                return float(t)
            t *= 2.0
        raise ModelValidationError(f"sojourn survival of state {i} never falls below {eps}")

    def breakpoints(self):
        pts = set()
        for i in range(self.n_states):
            for sub in self.kernel[i]:
                if sub.weight > 0.0:
                    pts.update(sub.law.breakpoints())
            pts.update(self.repairs[i].breakpoints())
            for law in self.states[i].service:
                pts.update(law.breakpoints())
        return sorted(pts)


def single_state_model(state, sojourn, repair=None, initial_phase=None):
    """Wrap one StateModel in a trivial one-state environment."""
    del initial_phase
    if repair is None:
        from .laws import deterministic

        repair = deterministic(0.0)
    return Model(
        kernel=((SubDistribution(1.0, sojourn),),),
        repairs=(repair,),
        initial=np.array([1.0]),
        states=(state,),
    )


def choose_grid(model, step=None, horizon=None, at_least=None):
    """Pick an integration grid for a model.

    The default step is min(mean sojourn, mean service)/100 snapped so
    the smallest distribution breakpoint falls on a whole number of
    cells (fixed-step integration assumes kinks sit on grid nodes); the
    default horizon stretches until every state's sojourn survival is
    below 1e-8, so stationary quadratures carry negligible tails.

    Args:
        model: Model instance.
        step: override for the grid step.
        horizon: override for the horizon.
        at_least: make the horizon cover this time even if tails die sooner.

    Returns:
        TimeGrid.
    """
    means = [model.sojourn_mean(i) for i in range(model.n_states)]
    for st in model.states:
        means.extend(law.mean for law in st.service if law.mean > 0.0)
    means = [m for m in means if m > 0.0]
    if not means:
        raise ModelValidationError("cannot choose a grid: every time scale in the model is zero")
    if step is None:
        step = min(means) / GRID_STEP_DIVISOR
        brk = model.breakpoints()
        if brk:
            smallest = brk[0]
            step = smallest / math.ceil(smallest / step - 1e-9)
    if step <= 0.0:
        raise ModelValidationError(f"grid step must be positive, got {step}")
    brk = model.breakpoints()
    for b in brk:
        ratio = b / step
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            warnings.warn(
                f"distribution breakpoint {b} is not aligned with the grid step {step}; "
                "fixed-step accuracy degrades near it",
                GridAlignmentWarning,
                stacklevel=2,
            )
    if horizon is None:
        horizon = max(model.sojourn_tail_time(i, HORIZON_TAIL_MASS) for i in range(model.n_states))
        for st in model.states:
            for law in st.service:
                if law.mean > 0.0:
                    horizon = max(horizon, law.tail_time(HORIZON_TAIL_MASS))
    if at_least is not None:
        horizon = max(horizon, at_least)
    horizon = max(horizon, 2.0 * step)
    n = math.ceil(horizon / step - 1e-9)
    if n > MAX_GRID_CELLS:
        raise ModelValidationError(
            f"grid would need {n} cells; raise the step or shrink the horizon"
        )
    # Snap the horizon to a whole number of cells.
    return TimeGrid(step=step, horizon=n * step)
