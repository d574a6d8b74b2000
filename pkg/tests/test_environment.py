"""Environment cycles: kernel gridding, renewal solve, stationary weights."""

import math

import numpy as np
import pytest

from mapinf import (
    HorizonWarning,
    Model,
    SubDistribution,
    TimeGrid,
    build_kernel,
    canonical_test_models,
    deterministic,
    exponential,
    renewal_matrix,
    simulate_environment_only,
    solve_environment,
    stationary_quadrature,
    stationary_weights,
    uniform,
)
from mapinf.environment import kernel_cdf_nodes
from mapinf.gridding import atoms_to_cdf

from test_model import poisson_state, two_state_model


def one_state(sojourn, repair=None):
    return Model(
        kernel=((SubDistribution(1.0, sojourn),),),
        repairs=(repair or deterministic(0.0),),
        initial=np.array([1.0]),
        states=(poisson_state(),),
    )


def test_kernel_without_repair_equals_sojourn():
    m = two_state_model()
    g = TimeGrid(0.01, 12.0)
    no_rep = Model(kernel=m.kernel, repairs=(deterministic(0.0), deterministic(0.0)),
                   initial=m.initial, states=m.states)
    kern = build_kernel(no_rep, g)
    assert np.allclose(kern.cycle_atoms, kern.sojourn_atoms, atol=1e-15)


def test_kernel_hypoexponential_branch():
    # sojourn exp(1) then repair exp(2): cycle CDF 1 + e^{-2t} - 2 e^{-t}
    m = one_state(exponential(1.0), repair=exponential(2.0))
    g = TimeGrid(0.002, 25.0)
    kern = build_kernel(m, g)
    cdf = atoms_to_cdf(kern.cycle_atoms[0, 0])
    k = g.index_of(1.0)
    want = 1.0 + math.exp(-2.0) - 2.0 * math.exp(-1.0)
    assert abs(cdf[k] - want) < 1e-3


def test_kernel_zero_weight_branch_is_empty():
    m = two_state_model()
    g = TimeGrid(0.01, 12.0)
    kern = build_kernel(m, g)
    # state-2 row has weight 0 on the second branch
    assert np.all(kern.cycle_atoms[1, 1] == 0.0)
    assert np.all(kern.sojourn_atoms[1, 1] == 0.0)


def test_kernel_cdf_nodes_matches_lattice_at_grid_resolution():
    doc = canonical_test_models()["env2-cat"]
    g = TimeGrid(0.005, 12.0)
    kern = build_kernel(doc.model, g)
    lattice = np.cumsum(kern.cycle_atoms, axis=2)
    nodes = kernel_cdf_nodes(doc.model, g)
    # node-exact evaluation sits within half a cell of the lattice CDF
    assert np.max(np.abs(lattice - nodes)) < 2.0 * g.step


def test_renewal_before_second_cycle_equals_kernel():
    # deterministic sojourn 1, no repair: H has its first two renewals at 1, 2
    m = one_state(deterministic(1.0))
    g = TimeGrid(0.05, 3.0)
    kern = build_kernel(m, g)
    h_cdf = np.cumsum(renewal_matrix(kern), axis=2)[0, 0]
    q_cdf = atoms_to_cdf(kern.cycle_atoms[0, 0])
    below = g.points < 2.0 - 1e-12
    assert np.allclose(h_cdf[below], q_cdf[below], atol=1e-12)
    # unit jumps at 1, 2, 3
    assert h_cdf[g.index_of(0.95)] == pytest.approx(0.0, abs=1e-12)
    assert h_cdf[g.index_of(1.0)] == pytest.approx(1.0, abs=1e-12)
    assert h_cdf[g.index_of(2.0)] == pytest.approx(2.0, abs=1e-12)
    assert h_cdf[g.index_of(3.0)] == pytest.approx(3.0, abs=1e-12)


def test_renewal_poisson_linear_growth():
    # exponential(1) cycles: renewals by time t average t; the horizon
    # cuts the kernel tail, which the builder warns about but H(5) only
    # needs the kernel on [0, 5]
    m = one_state(exponential(1.0))
    g = TimeGrid(0.01, 5.0)
    with pytest.warns(HorizonWarning):
        h5 = np.sum(renewal_matrix(build_kernel(m, g))[0, 0])
    assert abs(h5 - 5.0) / 5.0 < 0.02


def test_renewal_first_order_convergence():
    m = one_state(exponential(1.0))
    errs = []
    for step in (0.04, 0.02, 0.01):
        g = TimeGrid(step, 5.0)
        with pytest.warns(HorizonWarning):
            h5 = np.sum(renewal_matrix(build_kernel(m, g))[0, 0])
        errs.append(abs(h5 - 5.0))
    # error shrinks roughly linearly with the step
    assert errs[2] < errs[0] / 2.5
    assert errs[2] < errs[1]


def test_renewal_cyclic_deterministic_states():
    # two states handing off with deterministic sojourn 1: returns at 2, 4
    m = Model(
        kernel=(
            (SubDistribution(0.0, deterministic(1.0)), SubDistribution(1.0, deterministic(1.0))),
            (SubDistribution(1.0, deterministic(1.0)), SubDistribution(0.0, deterministic(1.0))),
        ),
        repairs=(deterministic(0.0), deterministic(0.0)),
        initial=np.array([1.0, 0.0]),
        states=(poisson_state(1.0), poisson_state(1.0)),
    )
    g = TimeGrid(0.125, 5.0)
    h = renewal_matrix(build_kernel(m, g))
    h11 = np.cumsum(h[0, 0])
    assert h11[g.index_of(1.875)] == pytest.approx(0.0, abs=1e-12)
    assert h11[g.index_of(2.0)] == pytest.approx(1.0, abs=1e-12)
    assert h11[g.index_of(3.875)] == pytest.approx(1.0, abs=1e-12)
    assert h11[g.index_of(4.0)] == pytest.approx(2.0, abs=1e-12)
    h12 = np.cumsum(h[0, 1])
    assert h12[g.index_of(1.0)] == pytest.approx(1.0, abs=1e-12)
    assert h12[g.index_of(3.0)] == pytest.approx(2.0, abs=1e-12)


def test_stationary_weights_cases():
    rho, eta, q = stationary_weights(one_state(exponential(2.0)))
    assert np.allclose(rho, [1.0]) and np.allclose(q, [1.0])
    assert eta[0] == pytest.approx(0.5)

    # flip-flop chain with mean cycles 1 and 3: q weighted by time
    m = Model(
        kernel=(
            (SubDistribution(0.0, exponential(1.0)), SubDistribution(1.0, exponential(1.0))),
            (SubDistribution(1.0, exponential(1.0 / 3.0)), SubDistribution(0.0, exponential(1.0 / 3.0))),
        ),
        repairs=(deterministic(0.0), deterministic(0.0)),
        initial=np.array([0.5, 0.5]),
        states=(poisson_state(1.0), poisson_state(1.0)),
    )
    rho, eta, q = stationary_weights(m)
    assert np.allclose(rho, [0.5, 0.5], atol=1e-12)
    assert np.allclose(eta, [1.0, 3.0], atol=1e-12)
    assert np.allclose(q, [0.25, 0.75], atol=1e-12)


def test_stationary_weights_symmetric_two_state():
    m = two_state_symmetric()
    rho, eta, q = stationary_weights(m)
    assert np.allclose(q, [0.5, 0.5], atol=1e-12)
    assert eta[0] == pytest.approx(eta[1])


def two_state_symmetric():
    s = exponential(1.0)
    return Model(
        kernel=(
            (SubDistribution(0.5, s), SubDistribution(0.5, s)),
            (SubDistribution(0.5, s), SubDistribution(0.5, s)),
        ),
        repairs=(exponential(4.0), exponential(4.0)),
        initial=np.array([0.5, 0.5]),
        states=(poisson_state(2.0), poisson_state(2.0)),
    )


def test_solve_environment_splits_the_cycle():
    doc = canonical_test_models()["env2-cat"]
    g = TimeGrid(0.005, 12.0)
    env = solve_environment(doc.model, g)
    kern_cdf = np.cumsum(env.kernel.cycle_atoms.sum(axis=1), axis=1)
    # working + repairing + completed-cycle mass telescopes to one exactly
    total = env.working_survival + env.in_repair + kern_cdf
    assert np.max(np.abs(total - 1.0)) < 1e-12
    assert np.all(env.working_survival >= -1e-15)
    assert np.all(env.in_repair >= -1e-15)
    # lattice working survival tracks the exact one at grid resolution
    assert np.max(np.abs(env.working_survival - env.exact_survival)) < 2.0 * g.step


def test_compose_handles_constant_curves():
    # renewal composition of the cycle-complement is identically one
    doc = canonical_test_models()["env2-cat"]
    g = TimeGrid(0.005, 12.0)
    env = solve_environment(doc.model, g)
    kern_cdf = np.cumsum(env.kernel.cycle_atoms.sum(axis=1), axis=1)
    base = 1.0 - kern_cdf
    composed = env.compose(base)
    assert np.max(np.abs(composed - 1.0)) < 1e-10


def test_stationary_quadrature_normalizes_constant():
    doc = canonical_test_models()["env2-cat"]
    g = TimeGrid(0.005, 30.0)
    ones = np.ones((2, g.n_cells + 1))
    value, bound = stationary_quadrature(doc.model, g, ones)
    assert value == pytest.approx(1.0, abs=1e-12)
    assert bound < 1e-6


def test_simulated_occupancy_matches_weights():
    m = two_state_model()
    rho, eta, q = stationary_weights(m)
    occ = simulate_environment_only(m, transitions=40000, seed=99)
    for i in range(2):
        est = occ.estimate(i)
        assert abs(est.value - q[i]) <= 3.0 * est.se + 1e-3


def test_symmetric_renewal_is_symmetric():
    m = two_state_symmetric()
    g = TimeGrid(0.02, 10.0)
    h = renewal_matrix(build_kernel(m, g))
    assert np.allclose(h[0, 1], h[1, 0], atol=1e-12)
    assert np.allclose(h[0, 0], h[1, 1], atol=1e-12)
