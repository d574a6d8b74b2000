"""Service-time, sojourn-time, repair-time and resource-amount laws.

Every law exposes the same small surface: distribution function, its
left limit, Laplace-Stieltjes transform, mean, integrated survival
function int_0^t P(X > u) du, and sampling.  These are the only
primitives the analytic engine and the simulator consume, and each one
is available in closed form for the supported families:

    exponential(rate)
    erlang(shape, rate)
    deterministic(value)
    uniform(lower, upper)
    hyperexponential(weights, rates)

All time arguments broadcast like numpy arrays.  Transform arguments
may be complex with nonnegative real part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, ModelValidationError

FAMILIES = ("exponential", "erlang", "deterministic", "uniform", "hyperexponential")

# Analytic continuation slack for transform arguments: lets exact zero
# and tiny negative roundoff through, nothing more.
_RE_S_SLACK = 1e-12


def _as_time(t):
    t = np.asarray(t, dtype=float)
    return t


@dataclass(frozen=True)
class Law:
    """A nonnegative random variable from one of the supported families.

    Instances are immutable value objects; build them with the module
    constructors (``exponential``, ``erlang``, ...) which validate the
    parameters.
    """

    family: str
    params: tuple

    # -- structural helpers -------------------------------------------------

    def _hyper_parts(self):
        n = len(self.params) // 2
        w = np.asarray(self.params[:n])
        mu = np.asarray(self.params[n:])
        return w, mu

    def breakpoints(self):
        """Times where the distribution function has a jump or a kink."""
        if self.family == "deterministic":
            v = self.params[0]
            return (v,) if v > 0.0 else ()
        if self.family == "uniform":
            a, b = self.params
            return tuple(x for x in (a, b) if x > 0.0)
        return ()

    # -- distribution surface ------------------------------------------------

    @property
    def mean(self):
        if self.family == "exponential":
            return 1.0 / self.params[0]
        if self.family == "erlang":
            k, mu = self.params
            return k / mu
        if self.family == "deterministic":
            return self.params[0]
        if self.family == "uniform":
            a, b = self.params
            return 0.5 * (a + b)
        w, mu = self._hyper_parts()
        return float(np.sum(w / mu))

    @property
    def second_moment(self):
        if self.family == "exponential":
            return 2.0 / self.params[0] ** 2
        if self.family == "erlang":
            k, mu = self.params
            return k * (k + 1) / mu ** 2
        if self.family == "deterministic":
            return self.params[0] ** 2
        if self.family == "uniform":
            a, b = self.params
            return (a * a + a * b + b * b) / 3.0
        w, mu = self._hyper_parts()
        return float(np.sum(2.0 * w / mu ** 2))

    def cdf(self, t):
        """P(X <= t), right-continuous, vectorized over t."""
        t = _as_time(t)
        if self.family == "exponential":
            (mu,) = self.params
            return np.where(t >= 0.0, -np.expm1(-mu * np.maximum(t, 0.0)), 0.0)
        if self.family == "erlang":
            k, mu = self.params
            return np.where(t >= 0.0, special.gammainc(k, mu * np.maximum(t, 0.0)), 0.0)
        if self.family == "deterministic":
            return (t >= self.params[0]).astype(float)
        if self.family == "uniform":
            a, b = self.params
            return np.clip((t - a) / (b - a), 0.0, 1.0)
        w, mu = self._hyper_parts()
        tc = np.maximum(t[..., None], 0.0)
        val = np.sum(w * -np.expm1(-mu * tc), axis=-1)
        return np.where(t >= 0.0, val, 0.0)

    def cdf_left(self, t):
        """P(X < t): differs from cdf only where the law has an atom."""
        if self.family == "deterministic":
            t = _as_time(t)
            return (t > self.params[0]).astype(float)
        return self.cdf(t)

    def survival(self, t):
        return 1.0 - self.cdf(t)

    def integrated_survival(self, t):
        """int_0^t P(X > u) du, exact per family; tends to the mean."""
        t = _as_time(t)
        tc = np.maximum(t, 0.0)
        if self.family == "exponential":
            (mu,) = self.params
            return -np.expm1(-mu * tc) / mu
        if self.family == "erlang":
            k, mu = self.params
            acc = np.zeros_like(tc)
            for j in range(1, int(k) + 1):
                acc = acc + special.gammainc(j, mu * tc)
            return acc / mu
        if self.family == "deterministic":
            return np.minimum(tc, self.params[0])
        if self.family == "uniform":
            a, b = self.params
            mid = a + (tc - a) - (tc - a) ** 2 / (2.0 * (b - a))
            return np.where(tc <= a, tc, np.where(tc >= b, self.mean, mid))
        w, mu = self._hyper_parts()
        return np.sum(w * -np.expm1(-mu * tc[..., None]) / mu, axis=-1)

    def lst(self, s):
        """Laplace-Stieltjes transform E[exp(-s X)].

        Args:
            s: scalar or array, complex allowed, Re(s) >= 0.

        Returns:
            Transform value with the same shape as s.
        """
        s = np.asarray(s, dtype=complex)
        if np.any(s.real < -_RE_S_SLACK):
            raise DomainError("transform argument must satisfy Re(s) >= 0")
        if self.family == "exponential":
            (mu,) = self.params
            return mu / (mu + s)
        if self.family == "erlang":
            k, mu = self.params
            return (mu / (mu + s)) ** k
        if self.family == "deterministic":
            return np.exp(-s * self.params[0])
        if self.family == "uniform":
            a, b = self.params
            width = b - a
            small = np.abs(s) * max(b, 1.0) < 1e-7
            ssafe = np.where(small, 1.0, s)
            exact = (np.exp(-ssafe * a) - np.exp(-ssafe * b)) / (ssafe * width)
            m1 = self.mean
            m2 = (a * a + a * b + b * b) / 3.0
            series = 1.0 - s * m1 + s * s * m2 / 2.0
            return np.where(small, series, exact)
        w, mu = self._hyper_parts()
        return np.sum(w * mu / (mu + s[..., None]), axis=-1)

    def survival_lt(self, s):
        """Ordinary Laplace transform of the survival: (1 - lst(s)) / s.

        Stable at small |s| via the moment series, where the direct
        quotient cancels catastrophically.
        """
        s = np.asarray(s, dtype=complex)
        small = np.abs(s) * max(self.mean, 1.0) < 1e-8
        ssafe = np.where(small, 1.0, s)
        direct = (1.0 - self.lst(ssafe)) / ssafe
        series = self.mean - s * self.second_moment / 2.0
        out = np.where(small, series, direct)
        return out if out.ndim else complex(out)

    def tail_time(self, eps):
        """Smallest grid-friendly T with P(X > T) <= eps."""
        if self.family == "deterministic":
            return self.params[0]
        if self.family == "uniform":
            return self.params[1]
        if self.family == "exponential":
            return -math.log(eps) / self.params[0]
        if self.family == "erlang":
            k, mu = self.params
            return float(special.gammainccinv(k, eps)) / mu
        w, mu = self._hyper_parts()
        # Crude but safe: slowest phase carries the tail.
        return float(np.max(-np.log(eps / np.maximum(w, eps)) / mu))

    def sample(self, rng, size=None):
        """Draw from the law using the supplied numpy Generator."""
        if self.family == "exponential":
            return rng.exponential(1.0 / self.params[0], size=size)
        if self.family == "erlang":
            k, mu = self.params
            return rng.gamma(k, 1.0 / mu, size=size)
        if self.family == "deterministic":
            v = self.params[0]
            return v if size is None else np.full(size, v)
        if self.family == "uniform":
            a, b = self.params
            return rng.uniform(a, b, size=size)
        w, mu = self._hyper_parts()
        idx = rng.choice(len(w), size=size, p=w)
        return rng.exponential(1.0, size=size) / mu[idx]


def exponential(rate):
    if not rate > 0.0:
        raise ModelValidationError(f"exponential rate must be positive, got {rate}")
    return Law("exponential", (float(rate),))


def erlang(shape, rate):
    if int(shape) != shape or shape < 1:
        raise ModelValidationError(f"erlang shape must be a positive integer, got {shape}")
    if not rate > 0.0:
        raise ModelValidationError(f"erlang rate must be positive, got {rate}")
    return Law("erlang", (int(shape), float(rate)))


def deterministic(value):
    if value < 0.0:
        raise ModelValidationError(f"deterministic value must be nonnegative, got {value}")
    return Law("deterministic", (float(value),))


def uniform(lower, upper):
    if lower < 0.0 or not upper > lower:
        raise ModelValidationError(
            f"uniform support must satisfy 0 <= lower < upper, got ({lower}, {upper})"
        )
    return Law("uniform", (float(lower), float(upper)))


def hyperexponential(weights, rates):
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(rates, dtype=float)
    if w.ndim != 1 or w.shape != mu.shape or w.size == 0:
        raise ModelValidationError("hyperexponential weights and rates must be equal-length vectors")
    if np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-9:
        raise ModelValidationError("hyperexponential weights must be nonnegative and sum to 1")
    if np.any(mu <= 0.0):
        raise ModelValidationError("hyperexponential rates must be positive")
    return Law("hyperexponential", tuple(w) + tuple(mu))


@dataclass(frozen=True)
class SubDistribution:
    """A defective law: ``weight`` times a proper law's distribution.

    Semi-Markov kernels are matrices of these; the weight is the
    probability of taking the branch and the law is the conditional
    holding time.
    """

    weight: float
    law: Law

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0 + 1e-12:
            raise ModelValidationError(f"sub-distribution weight must lie in [0, 1], got {self.weight}")

    def cdf(self, t):
        return self.weight * self.law.cdf(t)

    @property
    def mean_mass(self):
        """weight * conditional mean = int_0^inf (weight - cdf(u)) du."""
        return self.weight * self.law.mean


@dataclass(frozen=True)
class ResourceVectorLaw:
    """Independent marginals for each component of a resource vector."""

    marginals: tuple

    def __post_init__(self):
        if len(self.marginals) == 0:
            raise ModelValidationError("resource vector needs at least one component")

    @property
    def dim(self):
        return len(self.marginals)

    @property
    def mean_vector(self):
        return np.array([m.mean for m in self.marginals])

    def joint_lst(self, s):
        """E[exp(-s . X)] for a vector argument s of length dim."""
        s = np.asarray(s, dtype=complex)
        if s.shape != (self.dim,):
            raise DomainError(f"transform argument must have length {self.dim}, got shape {s.shape}")
        out = 1.0 + 0.0j
        for comp, sval in zip(self.marginals, s):
            out = out * complex(comp.lst(sval))
        return out

    def sample(self, rng):
        return np.array([m.sample(rng) for m in self.marginals])
