"""Distribution-law surface: CDFs, transforms, moments, sampling."""

import math

import numpy as np
import pytest

from mapinf import (
    Law,
    ModelValidationError,
    ResourceVectorLaw,
    SubDistribution,
    deterministic,
    erlang,
    exponential,
    hyperexponential,
    uniform,
)

ALL_LAWS = (
    exponential(2.0),
    erlang(2, 3.0),
    deterministic(1.5),
    uniform(1.0, 3.0),
    hyperexponential((0.3, 0.7), (1.0, 2.0)),
)


def test_cdf_values():
    assert exponential(2.0).cdf(0.0) == 0.0
    assert deterministic(1.5).cdf(2.0) == 1.0
    # Erlang(2, 3) at t=1: 1 - e^{-3}(1 + 3)
    want = 1.0 - math.exp(-3.0) * 4.0
    assert erlang(2, 3.0).cdf(1.0) == pytest.approx(want, abs=1e-12)
    assert uniform(1.0, 3.0).cdf(2.0) == pytest.approx(0.5, abs=1e-12)


def test_cdf_is_right_continuous_at_jump():
    d = deterministic(1.5)
    assert d.cdf(1.5) == 1.0
    assert d.cdf_left(1.5) == 0.0
    assert d.cdf(1.5 - 1e-12) == 0.0


def test_cdf_vectorized_and_monotone():
    t = np.linspace(0.0, 6.0, 241)
    for law in ALL_LAWS:
        f = law.cdf(t)
        assert f.shape == t.shape
        assert f[0] == 0.0
        assert np.all(np.diff(f) >= -1e-15)
        assert np.all((0.0 <= f) & (f <= 1.0))
        assert law.cdf(-1.0) == 0.0


def test_lst_values():
    assert exponential(1.0).lst(1.0) == pytest.approx(0.5, abs=1e-12)
    assert deterministic(1.0).lst(math.log(2.0)) == pytest.approx(0.5, abs=1e-12)
    for law in ALL_LAWS:
        assert law.lst(0.0) == pytest.approx(1.0, abs=1e-12)


def test_lst_closed_forms_at_complex_argument():
    s = 0.7 + 0.3j
    assert exponential(2.0).lst(s) == pytest.approx(2.0 / (2.0 + s), abs=1e-12)
    assert erlang(2, 3.0).lst(s) == pytest.approx((3.0 / (3.0 + s)) ** 2, abs=1e-12)
    assert deterministic(1.5).lst(s) == pytest.approx(np.exp(-1.5 * s), abs=1e-12)
    a, b = 1.0, 3.0
    want = (np.exp(-a * s) - np.exp(-b * s)) / (s * (b - a))
    assert uniform(a, b).lst(s) == pytest.approx(want, abs=1e-12)
    w = 0.3 * 1.0 / (1.0 + s) + 0.7 * 2.0 / (2.0 + s)
    assert hyperexponential((0.3, 0.7), (1.0, 2.0)).lst(s) == pytest.approx(w, abs=1e-12)


def test_integrated_survival():
    for law in ALL_LAWS:
        assert law.integrated_survival(0.0) == 0.0
    # exponential(mu): (1 - e^{-mu t}) / mu -> 1/mu
    assert exponential(2.0).integrated_survival(20.0) == pytest.approx(0.5, abs=1e-8)
    d = deterministic(1.5)
    assert d.integrated_survival(3.0) == 1.5
    assert d.integrated_survival(1.0) == 1.0
    # large-t limit is the mean for every family
    for law in ALL_LAWS:
        t = law.tail_time(1e-12)
        assert law.integrated_survival(t) == pytest.approx(law.mean, rel=1e-9)


def test_integrated_survival_matches_quadrature():
    # midpoint rule against the exact integral on a kink-free window
    for law in ALL_LAWS:
        t_hi = 0.9
        u = np.linspace(0.0, t_hi, 9001)
        mids = 0.5 * (u[1:] + u[:-1])
        approx = np.sum(law.survival(mids)) * (u[1] - u[0])
        assert law.integrated_survival(t_hi) == pytest.approx(approx, abs=1e-7)


def test_survival_lt_closed_forms():
    # integral of e^{-st} S(t) dt; for exponential(mu) it is 1/(s+mu)
    assert complex(exponential(1.0).survival_lt(1.0)) == pytest.approx(0.5, abs=1e-12)
    for law in ALL_LAWS:
        assert complex(law.survival_lt(0.0)) == pytest.approx(law.mean, rel=1e-10)
        # consistency with the LST: s * LT[S](s) = 1 - lst(s)
        for s in (0.5, 2.0, 1.0 + 1.0j):
            lhs = s * complex(law.survival_lt(s))
            assert lhs == pytest.approx(1.0 - complex(law.lst(s)), abs=1e-9)


def test_moments():
    assert exponential(2.0).mean == 0.5
    assert exponential(2.0).second_moment == 0.5
    assert erlang(2, 3.0).mean == pytest.approx(2.0 / 3.0)
    assert erlang(2, 3.0).second_moment == pytest.approx(6.0 / 9.0)
    assert uniform(1.0, 3.0).mean == 2.0
    assert uniform(1.0, 3.0).second_moment == pytest.approx(13.0 / 3.0)
    h = hyperexponential((0.3, 0.7), (1.0, 2.0))
    assert h.mean == pytest.approx(0.3 + 0.35)
    assert h.second_moment == pytest.approx(2.0 * 0.3 + 2.0 * 0.7 / 4.0)


def test_tail_time_bounds_survival():
    for law in ALL_LAWS:
        t = law.tail_time(1e-8)
        assert law.survival(t) <= 1e-8 + 1e-15
        assert law.survival(max(t - 1e-6, 0.0) * 0.5) > 1e-8 or law.mean == 0.0


def test_breakpoints():
    assert deterministic(1.5).breakpoints() == (1.5,)
    assert deterministic(0.0).breakpoints() == ()
    assert uniform(1.0, 3.0).breakpoints() == (1.0, 3.0)
    assert exponential(1.0).breakpoints() == ()
    assert erlang(3, 1.0).breakpoints() == ()


def test_sampling_deterministic_and_reproducible():
    rng = np.random.default_rng(11)
    assert np.all(deterministic(1.5).sample(rng, 8) == 1.5)
    a = exponential(2.0).sample(np.random.default_rng(42), 100)
    b = exponential(2.0).sample(np.random.default_rng(42), 100)
    assert np.array_equal(a, b)


def test_sampling_matches_law():
    rng = np.random.default_rng(2026)
    n = 10 ** 6
    draws = uniform(1.0, 3.0).sample(rng, n)
    assert abs(np.mean(draws) - 2.0) < 0.01
    for law in ALL_LAWS:
        d = law.sample(np.random.default_rng(5), 200000)
        assert np.all(d >= 0.0)
        se = math.sqrt(max(law.second_moment - law.mean ** 2, 0.0) / 200000)
        assert abs(np.mean(d) - law.mean) < max(4.0 * se, 1e-12)


def test_constructor_validation():
    with pytest.raises(ModelValidationError):
        exponential(-1.0)
    with pytest.raises(ModelValidationError):
        exponential(0.0)
    with pytest.raises(ModelValidationError):
        erlang(1.5, 2.0)
    with pytest.raises(ModelValidationError):
        erlang(0, 2.0)
    with pytest.raises(ModelValidationError):
        uniform(3.0, 1.0)
    with pytest.raises(ModelValidationError):
        uniform(-1.0, 1.0)
    with pytest.raises(ModelValidationError):
        hyperexponential((0.3, 0.3), (1.0, 2.0))
    with pytest.raises(ModelValidationError):
        hyperexponential((0.5, 0.5), (1.0, -2.0))
    # validation errors are ValueErrors so plain try/except ValueError works
    assert issubclass(ModelValidationError, ValueError)


def test_deterministic_zero_is_allowed():
    z = deterministic(0.0)
    assert z.cdf(0.0) == 1.0
    assert z.mean == 0.0
    assert z.lst(3.0) == pytest.approx(1.0)


def test_sub_distribution():
    sub = SubDistribution(0.25, exponential(1.0))
    assert sub.cdf(1e9) == pytest.approx(0.25)
    assert sub.mean_mass == pytest.approx(0.25)
    zero = SubDistribution(0.0, exponential(1.0))
    assert zero.cdf(5.0) == 0.0
    with pytest.raises(ModelValidationError):
        SubDistribution(1.5, exponential(1.0))
    with pytest.raises(ModelValidationError):
        SubDistribution(-0.1, exponential(1.0))


def test_resource_vector_law():
    r = ResourceVectorLaw((exponential(2.0), deterministic(1.0)))
    assert r.dim == 2
    assert np.allclose(r.mean_vector, [0.5, 1.0])
    # joint LST factors over independent components
    got = r.joint_lst((1.0, 0.5))
    want = (2.0 / 3.0) * math.exp(-0.5)
    assert got == pytest.approx(want, abs=1e-12)
    assert r.joint_lst((0.0, 0.0)) == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    v = r.sample(rng)
    assert v.shape == (2,) and v[1] == 1.0
    with pytest.raises(ModelValidationError):
        ResourceVectorLaw(())


def test_law_is_frozen_value_object():
    a = exponential(2.0)
    b = exponential(2.0)
    assert a == b
    assert isinstance(a, Law)
    with pytest.raises(AttributeError):
        a.params = (3.0,)
