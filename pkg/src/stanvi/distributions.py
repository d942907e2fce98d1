"""Log-densities, samplers and support metadata for the built-in distributions.

Log-densities keep their full normalizing constants (Stan drops constants
under ``~``; we keep them so ELBO values are comparable across guides and to
closed-form oracles).  Values and parameters may be plain numpy values or
tape variables; scalar parameters broadcast against vector values.

Samplers draw from an explicit ``numpy.random.Generator`` using documented
algorithms built on ``rng.random()`` uniforms:

* normal: Box-Muller, two uniforms per draw, ``sqrt(-2 ln u1) * cos(2 pi u2)``
* gamma: Marsaglia-Tsang squeeze (boosted by ``u**(1/alpha)`` for shape < 1)
* discrete distributions: inverse-CDF walk

so a test oracle can reproduce draws from the same seed independently.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import asvalue
from .errors import InvalidParameter
from .transforms import ConstraintSpec

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
NEG_INF = float("-inf")


def _require(cond, msg):
    if not cond:
        raise InvalidParameter(msg)


def _masked(inside, logp):
    """Apply a support mask: -inf outside, formula value inside."""
    if np.all(inside):
        return logp
    return ad.where(inside, logp, NEG_INF)


def _safe(inside, value, fill):
    """Replace out-of-support entries so the formula stays NaN-free."""
    if np.all(inside):
        return value
    return ad.where(inside, value, fill)


class Distribution:
    """Base class; subclasses define elementwise log-density and a sampler."""

    name = "?"
    discrete = False

    def elementwise_log_prob(self, value):
        raise NotImplementedError

    def log_prob(self, value):
        """Total log-density/mass of ``value`` (summed over components)."""
        lp = self.elementwise_log_prob(value)
        if np.ndim(asvalue(lp)) == 0:
            return lp
        return ad.vsum(lp)

    def sample(self, rng):
        raise NotImplementedError

    def support(self) -> ConstraintSpec:
        return ConstraintSpec.none()


# -- scalar uniform/normal building blocks -------------------------------------

def _uniform01(rng):
    u = rng.random()
    # guard against exactly 0, which would break log() in inversion formulas
    return u if u > 0.0 else np.nextafter(0.0, 1.0)


def standard_normal(rng, size=None):
    """Box-Muller standard normals (vectorized; two uniforms per draw)."""
    if size is None:
        u1 = _uniform01(rng)
        u2 = rng.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    n = int(np.prod(size)) if not np.isscalar(size) else int(size)
    u1 = rng.random(n)
    u1 = np.where(u1 > 0.0, u1, np.nextafter(0.0, 1.0))
    u2 = rng.random(n)
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return z.reshape(size)


def _gamma_sample(rng, alpha):
    """Marsaglia-Tsang for shape >= 1; shape boost below 1. Unit rate."""
    if alpha < 1.0:
        u = _uniform01(rng)
        return _gamma_sample(rng, alpha + 1.0) * u ** (1.0 / alpha)
    d = alpha - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = standard_normal(rng)
        t = 1.0 + c * x
        if t <= 0.0:
            continue
        v = t * t * t
        u = _uniform01(rng)
        if math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
            return d * v


# -- continuous families --------------------------------------------------------

class Normal(Distribution):
    name = "normal"

    def __init__(self, loc, scale):
        _require(np.all(asvalue(scale) > 0.0), "normal: scale must be > 0")
        self.loc = loc
        self.scale = scale

    def elementwise_log_prob(self, value):
        z = (value - self.loc) / self.scale
        return -HALF_LOG_2PI - ad.log(self.scale) - 0.5 * z * z

    def sample(self, rng):
        return asvalue(self.loc) + asvalue(self.scale) * standard_normal(rng)


class LogNormal(Distribution):
    name = "lognormal"

    def __init__(self, loc, scale):
        _require(np.all(asvalue(scale) > 0.0), "lognormal: scale must be > 0")
        self.loc = loc
        self.scale = scale

    def support(self):
        return ConstraintSpec.lower_bound(0.0)

    def elementwise_log_prob(self, value):
        inside = asvalue(value) > 0.0
        x = _safe(inside, value, 1.0)
        lx = ad.log(x)
        z = (lx - self.loc) / self.scale
        lp = -lx - ad.log(self.scale) - HALF_LOG_2PI - 0.5 * z * z
        return _masked(inside, lp)

    def sample(self, rng):
        return math.exp(asvalue(self.loc) + asvalue(self.scale) * standard_normal(rng))


class StudentT(Distribution):
    name = "student_t"

    def __init__(self, df, loc, scale):
        _require(np.all(asvalue(df) > 0.0), "student_t: df must be > 0")
        _require(np.all(asvalue(scale) > 0.0), "student_t: scale must be > 0")
        self.df = df
        self.loc = loc
        self.scale = scale

    def elementwise_log_prob(self, value):
        nu = self.df
        z = (value - self.loc) / self.scale
        return (ad.lgamma((nu + 1.0) / 2.0) - ad.lgamma(nu / 2.0)
                - 0.5 * ad.log(nu * math.pi) - ad.log(self.scale)
                - (nu + 1.0) / 2.0 * ad.log1p(z * z / nu))

    def sample(self, rng):
        z = standard_normal(rng)
        nu = float(asvalue(self.df))
        chi2 = 2.0 * _gamma_sample(rng, nu / 2.0)
        return float(asvalue(self.loc)) + float(asvalue(self.scale)) * z / math.sqrt(chi2 / nu)


class Cauchy(Distribution):
    name = "cauchy"

    def __init__(self, loc, scale):
        _require(np.all(asvalue(scale) > 0.0), "cauchy: scale must be > 0")
        self.loc = loc
        self.scale = scale

    def elementwise_log_prob(self, value):
        z = (value - self.loc) / self.scale
        return -math.log(math.pi) - ad.log(self.scale) - ad.log1p(z * z)

    def sample(self, rng):
        u = rng.random()
        return float(asvalue(self.loc)) + float(asvalue(self.scale)) * math.tan(math.pi * (u - 0.5))


class Uniform(Distribution):
    name = "uniform"

    def __init__(self, low, high):
        _require(np.all(asvalue(low) < asvalue(high)), "uniform: low must be < high")
        self.low = low
        self.high = high

    def support(self):
        return ConstraintSpec.interval(float(asvalue(self.low)), float(asvalue(self.high)))

    def elementwise_log_prob(self, value):
        v = asvalue(value)
        inside = (v >= asvalue(self.low)) & (v <= asvalue(self.high))
        lp = -ad.log(self.high - self.low) + 0.0 * value
        return _masked(inside, lp)

    def sample(self, rng):
        lo = float(asvalue(self.low))
        hi = float(asvalue(self.high))
        return lo + (hi - lo) * rng.random()


class Exponential(Distribution):
    name = "exponential"

    def __init__(self, rate):
        _require(np.all(asvalue(rate) > 0.0), "exponential: rate must be > 0")
        self.rate = rate

    def support(self):
        return ConstraintSpec.lower_bound(0.0)

    def elementwise_log_prob(self, value):
        inside = asvalue(value) >= 0.0
        lp = ad.log(self.rate) - self.rate * value
        return _masked(inside, lp)

    def sample(self, rng):
        return -math.log(_uniform01(rng)) / float(asvalue(self.rate))


class Gamma(Distribution):
    """Shape/rate parameterization, Stan-style."""

    name = "gamma"

    def __init__(self, shape, rate):
        _require(np.all(asvalue(shape) > 0.0), "gamma: shape must be > 0")
        _require(np.all(asvalue(rate) > 0.0), "gamma: rate must be > 0")
        self.shape_ = shape
        self.rate = rate

    def support(self):
        return ConstraintSpec.lower_bound(0.0)

    def elementwise_log_prob(self, value):
        inside = asvalue(value) > 0.0
        x = _safe(inside, value, 1.0)
        lp = (self.shape_ * ad.log(self.rate) - ad.lgamma(self.shape_)
              + (self.shape_ - 1.0) * ad.log(x) - self.rate * x)
        return _masked(inside, lp)

    def sample(self, rng):
        return _gamma_sample(rng, float(asvalue(self.shape_))) / float(asvalue(self.rate))


class Beta(Distribution):
    name = "beta"

    def __init__(self, a, b):
        _require(np.all(asvalue(a) > 0.0), "beta: a must be > 0")
        _require(np.all(asvalue(b) > 0.0), "beta: b must be > 0")
        self.a = a
        self.b = b

    def support(self):
        return ConstraintSpec.interval(0.0, 1.0)

    def elementwise_log_prob(self, value):
        v = asvalue(value)
        inside = (v > 0.0) & (v < 1.0)
        x = _safe(inside, value, 0.5)
        lp = (ad.lgamma(self.a + self.b) - ad.lgamma(self.a) - ad.lgamma(self.b)
              + (self.a - 1.0) * ad.log(x) + (self.b - 1.0) * ad.log1p(-x))
        return _masked(inside, lp)

    def sample(self, rng):
        x = _gamma_sample(rng, float(asvalue(self.a)))
        y = _gamma_sample(rng, float(asvalue(self.b)))
        return x / (x + y)


# -- discrete families -----------------------------------------------------------

class Bernoulli(Distribution):
    name = "bernoulli"
    discrete = True

    def __init__(self, p):
        pv = asvalue(p)
        _require(np.all((pv >= 0.0) & (pv <= 1.0)), "bernoulli: p must be in [0, 1]")
        self.p = p

    def elementwise_log_prob(self, value):
        v = asvalue(value)
        inside = (v == 0) | (v == 1)
        # branch on the (constant) outcome so p = 0 or 1 stays NaN-free
        lp = ad.where(v == 1, ad.log(self.p), ad.log1p(-self.p))
        return _masked(inside, lp)

    def sample(self, rng):
        return int(rng.random() < float(asvalue(self.p)))


class BernoulliLogit(Distribution):
    name = "bernoulli_logit"
    discrete = True

    def __init__(self, logit_p):
        self.logit_p = logit_p

    def elementwise_log_prob(self, value):
        v = asvalue(value)
        inside = (v == 0) | (v == 1)
        lp = value * self.logit_p - ad.softplus(self.logit_p)
        return _masked(inside, lp)

    def sample(self, rng):
        p = 1.0 / (1.0 + math.exp(-float(asvalue(self.logit_p))))
        return int(rng.random() < p)


class Binomial(Distribution):
    name = "binomial"
    discrete = True

    def __init__(self, n, p):
        nv = asvalue(n)
        pv = asvalue(p)
        _require(np.all(nv >= 0), "binomial: n must be >= 0")
        _require(np.all((pv >= 0.0) & (pv <= 1.0)), "binomial: p must be in [0, 1]")
        self.n = n
        self.p = p

    def elementwise_log_prob(self, value):
        v = asvalue(value)
        nv = asvalue(self.n)
        inside = (v >= 0) & (v <= nv)
        comb = ad.lgamma(nv + 1.0) - ad.lgamma(value + 1.0) - ad.lgamma(nv - value + 1.0)
        lp = comb + value * ad.log(self.p) + (nv - value) * ad.log1p(-self.p)
        return _masked(inside, lp)

    def sample(self, rng):
        n = int(asvalue(self.n))
        p = float(asvalue(self.p))
        u = rng.random()
        acc = 0.0
        for k in range(n + 1):
            acc += math.exp(
                math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
                + (k * math.log(p) if p > 0 else (0.0 if k == 0 else NEG_INF))
                + ((n - k) * math.log1p(-p) if p < 1 else (0.0 if k == n else NEG_INF)))
            if u <= acc:
                return k
        return n


class Poisson(Distribution):
    name = "poisson"
    discrete = True

    def __init__(self, rate):
        _require(np.all(asvalue(rate) > 0.0), "poisson: rate must be > 0")
        self.rate = rate

    def elementwise_log_prob(self, value):
        v = asvalue(value)
        inside = v >= 0
        lp = value * ad.log(self.rate) - self.rate - ad.lgamma(value + 1.0)
        return _masked(inside, lp)

    def sample(self, rng):
        lam = float(asvalue(self.rate))
        u = rng.random()
        acc = 0.0
        k = 0
        logterm = -lam
        while True:
            acc += math.exp(logterm)
            if u <= acc or k > 1_000_000:
                return k
            k += 1
            logterm += math.log(lam) - math.log(k)


class Categorical(Distribution):
    """1-based categories over an explicit probability vector, Stan-style."""

    name = "categorical"
    discrete = True

    def __init__(self, p):
        pv = np.asarray(asvalue(p), dtype=np.float64)
        _require(pv.ndim == 1 and pv.size >= 1, "categorical: p must be a vector")
        _require(np.all(pv >= 0.0), "categorical: probabilities must be >= 0")
        _require(abs(pv.sum() - 1.0) <= 1e-8, "categorical: probabilities must sum to 1")
        self.p = p

    def elementwise_log_prob(self, value):
        v = np.asarray(asvalue(value))
        k = asvalue(self.p).shape[0]
        inside = (v >= 1) & (v <= k)
        idx = np.clip(v.astype(int) - 1, 0, k - 1)
        lp = ad.log(self.p)[idx]
        return _masked(inside, lp)

    def sample(self, rng):
        pv = np.asarray(asvalue(self.p), dtype=np.float64)
        u = rng.random()
        acc = 0.0
        for i, pi in enumerate(pv):
            acc += pi
            if u <= acc:
                return i + 1
        return len(pv)


REGISTRY = {
    cls.name: cls
    for cls in (Normal, LogNormal, StudentT, Cauchy, Uniform, Exponential,
                Gamma, Beta, Bernoulli, BernoulliLogit, Binomial, Poisson,
                Categorical)
}

# arity of each distribution's parameter list, for the typechecker
ARITY = {
    "normal": 2, "lognormal": 2, "student_t": 3, "cauchy": 2, "uniform": 2,
    "exponential": 1, "gamma": 2, "beta": 2, "bernoulli": 1,
    "bernoulli_logit": 1, "binomial": 2, "poisson": 1, "categorical": 1,
}


def make(name, *params) -> Distribution:
    try:
        cls = REGISTRY[name]
    except KeyError:
        raise InvalidParameter(f"unknown distribution {name!r}") from None
    return cls(*params)


def log_prob(d: Distribution, value):
    return d.log_prob(value)


def sample(d: Distribution, rng):
    return d.sample(rng)


def support(d: Distribution) -> ConstraintSpec:
    return d.support()
