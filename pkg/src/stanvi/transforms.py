"""Bijections between constrained parameter space and unconstrained R^n.

Every transform maps a flat unconstrained vector to the constrained flat
value plus the log-abs-det Jacobian correction that makes the log-joint a
density over unconstrained space.  All forward maps are total on finite
inputs; inverses raise :class:`OutOfSupport` outside the constraint's
interior.

The math helpers from :mod:`stanvi.autodiff` are used throughout, so forward
transforms are differentiable when handed tape variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import OutOfSupport


@dataclass(frozen=True)
class ConstraintSpec:
    """Declared constraint of a parameter or distribution support."""

    kind: str  # none | lower | upper | interval | simplex | ordered
    lower: float | None = None
    upper: float | None = None

    @staticmethod
    def none():
        return ConstraintSpec("none")

    @staticmethod
    def lower_bound(b):
        return ConstraintSpec("lower", lower=float(b))

    @staticmethod
    def upper_bound(b):
        return ConstraintSpec("upper", upper=float(b))

    @staticmethod
    def interval(a, b):
        return ConstraintSpec("interval", lower=float(a), upper=float(b))

    @staticmethod
    def simplex():
        return ConstraintSpec("simplex")

    @staticmethod
    def ordered():
        return ConstraintSpec("ordered")


class Transform:
    """Base: flat unconstrained vector (or scalar) <-> constrained value."""

    kind = "identity"

    def __init__(self, n):
        self.n = int(n)  # constrained component count

    @property
    def unconstrained_length(self):
        return self.n

    def forward(self, u):
        """Return (constrained value, log|det J|)."""
        raise NotImplementedError

    def inverse(self, x):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"


class IdentityTransform(Transform):
    kind = "identity"

    def forward(self, u):
        return u, 0.0

    def inverse(self, x):
        return np.asarray(x, dtype=np.float64)


class LowerTransform(Transform):
    kind = "lower"

    def __init__(self, n, bound):
        super().__init__(n)
        self.bound = np.asarray(bound, dtype=np.float64)

    def forward(self, u):
        x = self.bound + ad.exp(u)
        return x, ad.vsum(u)

    def inverse(self, x):
        x = np.asarray(x, dtype=np.float64)
        if np.any(x <= self.bound):
            raise OutOfSupport(f"value not strictly above lower bound {self.bound}")
        return np.log(x - self.bound)


class UpperTransform(Transform):
    kind = "upper"

    def __init__(self, n, bound):
        super().__init__(n)
        self.bound = np.asarray(bound, dtype=np.float64)

    def forward(self, u):
        x = self.bound - ad.exp(u)
        return x, ad.vsum(u)

    def inverse(self, x):
        x = np.asarray(x, dtype=np.float64)
        if np.any(x >= self.bound):
            raise OutOfSupport(f"value not strictly below upper bound {self.bound}")
        return np.log(self.bound - x)


class IntervalTransform(Transform):
    kind = "interval"

    def __init__(self, n, low, high):
        super().__init__(n)
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)

    def forward(self, u):
        width = self.high - self.low
        x = self.low + width * ad.sigmoid(u)
        # log sigmoid(u) + log sigmoid(-u) == -softplus(u) - softplus(-u)
        ladj = ad.vsum(np.log(width) - ad.softplus(u) - ad.softplus(-u))
        return x, ladj

    def inverse(self, x):
        x = np.asarray(x, dtype=np.float64)
        if np.any(x <= self.low) or np.any(x >= self.high):
            raise OutOfSupport(f"value outside open interval ({self.low}, {self.high})")
        z = (x - self.low) / (self.high - self.low)
        return np.log(z) - np.log1p(-z)


class SimplexTransform(Transform):
    """Stan's centered stick-breaking map; K components from K-1 reals."""

    kind = "simplex"

    @property
    def unconstrained_length(self):
        return self.n - 1

    def forward(self, u):
        k = self.n
        parts = []
        ladj = 0.0
        rem = 1.0
        for i in range(k - 1):
            # the -log(K-k) offset centers u = 0 on the uniform simplex
            z = ad.sigmoid(u[i] - np.log(k - i - 1))
            xi = rem * z
            ladj = ladj + ad.log(z) + ad.log1p(-z) + ad.log(rem)
            parts.append(xi)
            rem = rem * (1.0 - z)
        parts.append(rem)
        return ad.stack(parts), ladj

    def inverse(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,) or np.any(x <= 0.0) or abs(x.sum() - 1.0) > 1e-8:
            raise OutOfSupport("not a strictly positive unit simplex point")
        u = np.empty(self.n - 1)
        rem = 1.0
        for i in range(self.n - 1):
            z = x[i] / rem
            if z <= 0.0 or z >= 1.0:
                raise OutOfSupport("stick-breaking ratio outside (0, 1)")
            u[i] = np.log(z) - np.log1p(-z) + np.log(self.n - i - 1)
            rem -= x[i]
        return u


class OrderedTransform(Transform):
    """First component free, positive increments via exp for the rest."""

    kind = "ordered"

    def forward(self, u):
        if self.n == 1:
            return u, 0.0
        steps = ad.index_update(u, slice(1, None), ad.exp(u[1:]))
        x = ad.cumsum(steps)
        return x, ad.vsum(u[1:])

    def inverse(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise OutOfSupport(f"expected {self.n} ordered components")
        if self.n == 1:
            return x.copy()
        d = np.diff(x)
        if np.any(d <= 0.0):
            raise OutOfSupport("components not strictly increasing")
        u = np.empty(self.n)
        u[0] = x[0]
        u[1:] = np.log(d)
        return u


def make_transform(spec: ConstraintSpec, n: int) -> Transform:
    """Concrete transform for a constraint over ``n`` scalar components."""
    if spec.kind == "none":
        return IdentityTransform(n)
    if spec.kind == "lower":
        return LowerTransform(n, spec.lower)
    if spec.kind == "upper":
        return UpperTransform(n, spec.upper)
    if spec.kind == "interval":
        return IntervalTransform(n, spec.lower, spec.upper)
    if spec.kind == "simplex":
        return SimplexTransform(n)
    if spec.kind == "ordered":
        return OrderedTransform(n)
    raise ValueError(f"unknown constraint kind {spec.kind!r}")


def transform_forward(t: Transform, u):
    """Module-level convenience mirroring ``t.forward``."""
    return t.forward(u)


def transform_inverse(t: Transform, x):
    return t.inverse(x)
