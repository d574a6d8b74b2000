"""Markov arrival processes with marked (multi-type) arrivals.

A marked MAP of order m is a substochastic phase generator ``d0``
(stable: negative diagonal, nonnegative off-diagonal) together with one
nonnegative mark matrix per customer type; their sum is a conservative
irreducible generator.  Independent single-type MAPs combine into one
marked process on the Kronecker product phase space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.sparse import csgraph

from .errors import DomainError, ModelValidationError, NumericalFailure

MAX_SUPERPOSED_ORDER = 4096

_Z_SLACK = 1e-12
_COND_LIMIT = 1e12


def _frozen_array(a):
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _check_generator_parts(d0, marks, where):
    m = d0.shape[0]
    if d0.shape != (m, m):
        raise ModelValidationError(f"{where}: d0 must be square, got shape {d0.shape}")
    for r, mk in enumerate(marks):
        if mk.shape != (m, m):
            raise ModelValidationError(
                f"{where}: mark matrix {r} has shape {mk.shape}, expected {(m, m)}"
            )
        bad = np.argwhere(mk < 0.0)
        if bad.size:
            i, j = bad[0]
            raise ModelValidationError(f"{where}: mark matrix {r} entry [{i}][{j}] is negative")
    for i in range(m):
        if not d0[i, i] < 0.0:
            raise ModelValidationError(f"{where}: d0[{i}][{i}] must be negative")
        for j in range(m):
            if i != j and d0[i, j] < 0.0:
                raise ModelValidationError(f"{where}: d0[{i}][{j}] must be nonnegative")
    scale = max(1.0, float(np.max(np.abs(d0))))
    total = d0 + sum(marks)
    rowsums = total.sum(axis=1)
    worst = int(np.argmax(np.abs(rowsums)))
    if abs(rowsums[worst]) > 1e-10 * scale:
        raise ModelValidationError(
            f"{where}: generator row {worst} sums to {rowsums[worst]:.3e}, expected 0"
        )
    # Strong connectivity of the full generator's transition graph.
    adj = (total > 1e-14 * scale) & ~np.eye(m, dtype=bool)
    n_comp, labels = csgraph.connected_components(adj.astype(np.int8), directed=True, connection="strong")
    if n_comp > 1:
        classes = [[int(i) for i in np.flatnonzero(labels == c)] for c in range(n_comp)]
        raise ModelValidationError(f"{where}: generator is reducible; communicating classes {classes}")


@dataclass(frozen=True)
class MarkedMap:
    """Phase generator plus one arrival-mark matrix per customer type."""

    d0: np.ndarray
    marks: tuple

    def __post_init__(self):
        d0 = _frozen_array(self.d0)
        marks = tuple(_frozen_array(mk) for mk in self.marks)
        if len(marks) == 0:
            raise ModelValidationError("marked MAP needs at least one mark matrix")
        _check_generator_parts(d0, marks, "marked MAP")
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "marks", marks)

    @property
    def order(self):
        return self.d0.shape[0]

    @property
    def n_types(self):
        return len(self.marks)

    @property
    def generator(self):
        return self.d0 + sum(self.marks)


@dataclass(frozen=True)
class SingleMap:
    """An unmarked MAP (one customer type)."""

    d0: np.ndarray
    d1: np.ndarray

    def __post_init__(self):
        d0 = _frozen_array(self.d0)
        d1 = _frozen_array(self.d1)
        _check_generator_parts(d0, (d1,), "MAP")
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "d1", d1)

    @property
    def order(self):
        return self.d0.shape[0]

    def as_marked(self):
        return MarkedMap(self.d0, (self.d1,))


@dataclass(frozen=True)
class ThinningProfile:
    """Per-type retention probabilities as functions of one argument."""

    probs: tuple


def poisson_map(rate):
    """Order-1 MAP generating a Poisson stream."""
    return SingleMap(np.array([[-float(rate)]]), np.array([[float(rate)]]))


def superpose(components, max_order=MAX_SUPERPOSED_ORDER):
    """Combine independent single-type MAPs into one marked MAP.

    Component r keeps generating type-r arrivals; the joint phase is the
    tuple of component phases, so the result lives on the Kronecker
    product space with ``d0`` the Kronecker sum of the component ``d0``
    blocks and mark r acting as component r's arrival matrix there.

    Args:
        components: sequence of SingleMap, one per customer type.
        max_order: guard against phase-space blowup.

    Returns:
        MarkedMap of order prod(component orders) with len(components) types.
    """
    comps = list(components)
    if not comps:
        raise ModelValidationError("superpose needs at least one component")
    orders = [c.order for c in comps]
    total = int(np.prod(orders))
    if total > max_order:
        raise ModelValidationError(
            f"superposed order {total} exceeds the cap {max_order}"
        )
    d0 = np.zeros((total, total))
    marks = []
    for r, comp in enumerate(comps):
        left = int(np.prod(orders[:r])) if r else 1
        right = int(np.prod(orders[r + 1:])) if r + 1 < len(orders) else 1
        lift = np.kron(np.kron(np.eye(left), comp.d0), np.eye(right))
        d0 = d0 + lift
        marks.append(np.kron(np.kron(np.eye(left), comp.d1), np.eye(right)))
    return MarkedMap(d0, tuple(marks))


def stationary_vector(generator):
    """Stationary probability row vector of an irreducible generator.

    Accepts a MarkedMap (its full generator is used) or a square matrix.
    Solved as the augmented linear system; a condition estimate above
    1e12 is rejected rather than silently returned.
    """
    if isinstance(generator, MarkedMap):
        gen = generator.generator
    elif isinstance(generator, SingleMap):
        gen = generator.d0 + generator.d1
    else:
        gen = np.asarray(generator, dtype=float)
    m = gen.shape[0]
    aug = gen.T.copy()
    aug[-1, :] = 1.0
    cond = np.linalg.cond(aug)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise NumericalFailure(
            f"stationary vector system is ill-conditioned (cond ~ {cond:.2e}); "
            "the generator is numerically reducible"
        )
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    pi = np.linalg.solve(aug, rhs)
    if np.any(pi < -1e-10):
        raise NumericalFailure(f"stationary vector has a negative entry: {pi}")
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


def arrival_rates(marked):
    """Long-run arrival rate per type: pi D_r 1."""
    pi = stationary_vector(marked)
    return np.array([float(pi @ mk @ np.ones(marked.order)) for mk in marked.marks])


def _check_unit_disk(z, n_types):
    z = np.asarray(z, dtype=complex).reshape(-1)
    if z.size == 1 and n_types > 1:
        z = np.repeat(z, n_types)
    if z.size != n_types:
        raise DomainError(f"need one transform variable per type ({n_types}), got {z.size}")
    if np.any(np.abs(z) > 1.0 + _Z_SLACK):
        raise DomainError("transform variables must lie in the closed unit disk")
    return z


def generator_pgf(marked, z, check_domain=True):
    """Mark-weighted generator d0 + sum_r z_r D_r."""
    if check_domain:
        z = _check_unit_disk(z, marked.n_types)
    else:
        z = np.asarray(z, dtype=complex).reshape(-1)
    out = marked.d0.astype(complex).copy()
    for zr, mk in zip(z, marked.marks):
        out += zr * mk
    if np.max(np.abs(out.imag)) == 0.0:
        return out.real
    return out


def counting_pgf(marked, z, t, check_domain=True):
    """Joint factorial transform of the counts over [0, t]: expm(t (d0 + sum z_r D_r)).

    Rows index the starting phase, columns the phase at t; at z = 1 this
    is the phase transition matrix of the underlying chain.
    """
    if t < 0.0:
        raise DomainError(f"time must be nonnegative, got {t}")
    return expm(generator_pgf(marked, z, check_domain=check_domain) * t)


def thin(marked, profile, z, x):
    """Generator of the process after state-dependent Bernoulli thinning.

    Type-r arrivals are kept with probability probs[r](x) and tagged by
    z_r; dropped arrivals revert to unmarked phase transitions.
    """
    if len(profile.probs) != marked.n_types:
        raise ModelValidationError(
            f"thinning profile has {len(profile.probs)} entries, expected {marked.n_types}"
        )
    z = _check_unit_disk(z, marked.n_types)
    out = marked.d0.astype(complex).copy()
    for zr, p_fn, mk in zip(z, profile.probs, marked.marks):
        p = float(p_fn(x))
        if not 0.0 <= p <= 1.0:
            raise ModelValidationError(f"thinning probability {p} outside [0, 1]")
        out += (1.0 - p + zr * p) * mk
    if np.max(np.abs(out.imag)) == 0.0:
        return out.real
    return out
