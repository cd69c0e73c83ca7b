"""Lifetime distributions for the fluid model and the event simulator.

Each family knows its CDF and complement, the integrated survival function
x -> int_0^x sf(y) dy with its inverse, the equilibrium (stationary-excess)
distribution, and deterministic inverse-CDF sampling.  All of the solver's
distributional inputs flow through this module.

Conventions:
  * support_end is the supremum of the support (math.inf when unbounded);
  * integrated_sf_total is int_0^inf sf(y) dy, which equals the mean for
    nonnegative lifetimes and is allowed to be math.inf;
  * +inf is a first-class sentinel: consumers must branch on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri


class DistributionError(ValueError):
    """Invalid distribution parameters or an unsupported role."""


# Bisection controls for the integrated-sf inverse.  The integrated survival
# function is 1-Lipschitz (its density is sf <= 1), so an x-tolerance of
# 1e-12 bounds the y-error by the same amount.
_INV_TOL = 1e-12
_INV_MAX_ITER = 200


@dataclass(frozen=True)
class DistStats:
    """Summary constants consumed by the fluid solver and validators."""

    mean: float
    support_end: float          # sup{x : F(x) < 1}, inf when unbounded
    integrated_sf_total: float  # int_0^inf sf(y) dy, inf allowed
    lipschitz_bound: float      # Lipschitz constant of the CDF, inf if none
    hazard_bound: float         # sup of the hazard rate, inf if unbounded

    @property
    def is_lipschitz(self) -> bool:
        return math.isfinite(self.lipschitz_bound)

    @property
    def has_bounded_hazard(self) -> bool:
        return math.isfinite(self.hazard_bound)


def _maybe_scalar(x):
    """Return a python float for 0-d results, the array otherwise."""
    arr = np.asarray(x)
    return float(arr) if arr.ndim == 0 else arr


class DistributionSpec:
    """Base class for parametric lifetime distributions."""

    #: True when the CDF has a jump (only the Deterministic family here).
    has_atoms = False

    # -- core functions -------------------------------------------------

    def cdf(self, x):
        """P(lifetime <= x); 0 for x < 0, nondecreasing."""
        raise NotImplementedError

    def sf(self, x):
        """Complement 1 - cdf(x)."""
        return _maybe_scalar(1.0 - np.asarray(self.cdf(x)))

    def pdf(self, x):
        """Density where one exists."""
        raise NotImplementedError

    def hazard(self, x):
        """pdf / sf below the support end, 0 beyond."""
        x = np.asarray(x, dtype=float)
        end = self.stats().support_end
        sf = np.asarray(self.sf(x))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where((x < end) & (sf > 0.0), np.asarray(self.pdf(x)) / sf, 0.0)
        return _maybe_scalar(out)

    def quantile(self, u):
        """Inverse CDF on [0, 1)."""
        raise NotImplementedError

    @property
    def mean(self) -> float:
        return self.stats().mean

    def stats(self) -> DistStats:
        raise NotImplementedError

    # -- derived objects -------------------------------------------------

    def integrated_sf(self, x):
        """int_0^x sf(y) dy; nondecreasing, concave, 1-Lipschitz."""
        raise NotImplementedError

    def integrated_sf_inverse(self, y):
        """Inverse of integrated_sf on [0, integrated_sf_total).

        For y >= integrated_sf_total, returns support_end (which may be the
        +inf sentinel).  Default is bisection on the strictly increasing
        stretch; families with closed forms override.
        """
        st = self.stats()
        if y <= 0.0:
            return 0.0
        if y >= st.integrated_sf_total:
            return st.support_end
        lo, hi = 0.0, 1.0
        while self.integrated_sf(hi) < y:
            hi *= 2.0
            if hi > 1e300:  # unreachable for y < integrated_sf_total
                return st.support_end
        for _ in range(_INV_MAX_ITER):
            mid = 0.5 * (lo + hi)
            if self.integrated_sf(mid) < y:
                lo = mid
            else:
                hi = mid
            if hi - lo <= _INV_TOL:
                break
        return 0.5 * (lo + hi)

    def equilibrium_cdf(self, x):
        """Stationary-excess distribution: integrated_sf(x) / mean."""
        m = self.mean
        if not (0.0 < m < math.inf):
            raise DistributionError("invalid service distribution: mean must be positive and finite")
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.integrated_sf(np.maximum(x, 0.0))) / m
        return _maybe_scalar(np.clip(out, 0.0, 1.0))

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-CDF sampling; identical seed gives identical draws."""
        return self.quantile(rng.random(size))

    # -- role validation ---------------------------------------------------

    def validate_as_service(self) -> None:
        """Service distributions must be continuous with finite positive mean."""
        if self.has_atoms:
            raise DistributionError("invalid service distribution: CDF has atoms")
        m = self.mean
        if not (0.0 < m < math.inf):
            raise DistributionError("invalid service distribution: mean must be positive and finite")

    def validate_as_patience(self) -> None:
        """Patience distributions need a Lipschitz CDF or a bounded hazard rate."""
        st = self.stats()
        if not (st.is_lipschitz or st.has_bounded_hazard):
            raise DistributionError(
                "invalid patience distribution: CDF is neither Lipschitz nor of bounded hazard"
            )

    def time_scaled(self, factor: float) -> "DistributionSpec":
        """The law of factor * lifetime (used to scale interarrival times by 1/n)."""
        raise NotImplementedError

    # -- config literals --------------------------------------------------

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(spec: dict) -> "DistributionSpec":
        return distribution_from_dict(spec)


@dataclass(frozen=True)
class Exponential(DistributionSpec):
    rate: float

    def __post_init__(self):
        if not self.rate > 0.0:
            raise DistributionError("exponential rate must be positive")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _maybe_scalar(np.where(x > 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return _maybe_scalar(np.where(x > 0.0, np.exp(-self.rate * np.maximum(x, 0.0)), 1.0))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _maybe_scalar(np.where(x >= 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return _maybe_scalar(-np.log1p(-u) / self.rate)

    def integrated_sf(self, x):
        x = np.asarray(x, dtype=float)
        return _maybe_scalar(-np.expm1(-self.rate * np.maximum(x, 0.0)) / self.rate)

    def integrated_sf_inverse(self, y):
        if y <= 0.0:
            return 0.0
        if y >= 1.0 / self.rate:
            return math.inf
        return -math.log1p(-self.rate * y) / self.rate

    def stats(self) -> DistStats:
        return DistStats(
            mean=1.0 / self.rate,
            support_end=math.inf,
            integrated_sf_total=1.0 / self.rate,
            lipschitz_bound=self.rate,
            hazard_bound=self.rate,
        )

    def time_scaled(self, factor: float) -> "Exponential":
        return Exponential(self.rate / factor)

    def to_dict(self) -> dict:
        return {"family": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Deterministic(DistributionSpec):
    value: float
    has_atoms = True

    def __post_init__(self):
        if not self.value > 0.0:
            raise DistributionError("deterministic value must be positive")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _maybe_scalar(np.where(x >= self.value, 1.0, 0.0))

    def pdf(self, x):
        raise DistributionError("deterministic distribution has no density")

    def hazard(self, x):
        raise DistributionError("deterministic distribution has no hazard rate")

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return _maybe_scalar(np.full_like(u, self.value))

    def integrated_sf(self, x):
        x = np.asarray(x, dtype=float)
        return _maybe_scalar(np.clip(x, 0.0, self.value))

    def integrated_sf_inverse(self, y):
        if y <= 0.0:
            return 0.0
        return min(y, self.value)

    def stats(self) -> DistStats:
        return DistStats(
            mean=self.value,
            support_end=self.value,
            integrated_sf_total=self.value,
            lipschitz_bound=math.inf,   # step CDF: flagged not-Lipschitz
            hazard_bound=math.inf,
        )

    def time_scaled(self, factor: float) -> "Deterministic":
        return Deterministic(self.value * factor)

    def to_dict(self) -> dict:
        return {"family": "deterministic", "value": self.value}


@dataclass(frozen=True)
class Uniform(DistributionSpec):
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi):
            raise DistributionError("uniform requires 0 <= lo < hi")

    @property
    def _width(self) -> float:
        return self.hi - self.lo

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _maybe_scalar(np.clip((x - self.lo) / self._width, 0.0, 1.0))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _maybe_scalar(np.where((x >= self.lo) & (x <= self.hi), 1.0 / self._width, 0.0))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return _maybe_scalar(self.lo + u * self._width)

    def integrated_sf(self, x):
        x = np.asarray(x, dtype=float)
        xl = np.clip(x, 0.0, self.lo)
        u = np.clip(x - self.lo, 0.0, self._width)
        return _maybe_scalar(xl + u - u * u / (2.0 * self._width))

    def integrated_sf_inverse(self, y):
        if y <= 0.0:
            return 0.0
        total = self.stats().integrated_sf_total
        if y >= total:
            return self.hi
        if y <= self.lo:
            return y
        # solve u - u^2/(2w) = y - lo for u in (0, w)
        w = self._width
        u = w - math.sqrt(w * w - 2.0 * w * (y - self.lo))
        return self.lo + u

    def stats(self) -> DistStats:
        mean = 0.5 * (self.lo + self.hi)
        return DistStats(
            mean=mean,
            support_end=self.hi,
            integrated_sf_total=mean,
            lipschitz_bound=1.0 / self._width,
            hazard_bound=math.inf,  # 1/(hi - x) blows up at the support end
        )

    def time_scaled(self, factor: float) -> "Uniform":
        return Uniform(self.lo * factor, self.hi * factor)

    def to_dict(self) -> dict:
        return {"family": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class LogNormal(DistributionSpec):
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise DistributionError("lognormal sigma must be positive")

    @classmethod
    def from_mean_cv(cls, mean: float, cv: float) -> "LogNormal":
        """Parameterize by mean and coefficient of variation."""
        if not (mean > 0.0 and cv > 0.0):
            raise DistributionError("lognormal mean and cv must be positive")
        sigma2 = math.log(1.0 + cv * cv)
        return cls(mu=math.log(mean) - 0.5 * sigma2, sigma=math.sqrt(sigma2))

    def _z(self, x):
        with np.errstate(divide="ignore"):
            return (np.log(x) - self.mu) / self.sigma

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        pos = x > 0.0
        out = np.zeros_like(x)
        if np.any(pos):
            out = np.where(pos, ndtr(self._z(np.where(pos, x, 1.0))), 0.0)
        return _maybe_scalar(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        pos = x > 0.0
        out = np.ones_like(x)
        if np.any(pos):
            out = np.where(pos, ndtr(-self._z(np.where(pos, x, 1.0))), 1.0)
        return _maybe_scalar(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        pos = x > 0.0
        xs = np.where(pos, x, 1.0)
        z = self._z(xs)
        out = np.where(pos, np.exp(-0.5 * z * z) / (xs * self.sigma * math.sqrt(2.0 * math.pi)), 0.0)
        return _maybe_scalar(out)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return _maybe_scalar(np.exp(self.mu + self.sigma * ndtri(u)))

    def integrated_sf(self, x):
        # int_0^x sf = x sf(x) + E[Y] Phi((ln x - mu)/sigma - sigma),
        # by parts plus the lognormal partial-expectation identity.
        x = np.asarray(x, dtype=float)
        pos = x > 0.0
        xs = np.where(pos, x, 1.0)
        z = self._z(xs)
        out = np.where(pos, xs * ndtr(-z) + self.mean * ndtr(z - self.sigma), 0.0)
        return _maybe_scalar(out)

    def stats(self) -> DistStats:
        mean = math.exp(self.mu + 0.5 * self.sigma**2)
        # max density sits at the mode exp(mu - sigma^2)
        lip = math.exp(0.5 * self.sigma**2 - self.mu) / (self.sigma * math.sqrt(2.0 * math.pi))
        return DistStats(
            mean=mean,
            support_end=math.inf,
            integrated_sf_total=mean,
            lipschitz_bound=lip,
            hazard_bound=math.inf,  # Lipschitz route is the one that applies
        )

    def time_scaled(self, factor: float) -> "LogNormal":
        return LogNormal(self.mu + math.log(factor), self.sigma)

    def to_dict(self) -> dict:
        return {"family": "lognormal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class HyperExponential(DistributionSpec):
    weights: tuple
    rates: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        r = tuple(float(v) for v in self.rates)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)
        if len(w) != len(r) or not w:
            raise DistributionError("hyperexponential weights and rates must match and be nonempty")
        if any(v <= 0.0 for v in w) or any(v <= 0.0 for v in r):
            raise DistributionError("hyperexponential weights and rates must be positive")
        if abs(sum(w) - 1.0) > 1e-9:
            raise DistributionError("hyperexponential weights must sum to 1")

    def _w(self):
        return np.asarray(self.weights), np.asarray(self.rates)

    def cdf(self, x):
        w, r = self._w()
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)
        out = -np.sum(w * np.expm1(-np.multiply.outer(xp, r)), axis=-1)
        return _maybe_scalar(np.where(x > 0.0, out, 0.0))

    def pdf(self, x):
        w, r = self._w()
        x = np.asarray(x, dtype=float)
        out = np.sum(w * r * np.exp(-np.multiply.outer(np.maximum(x, 0.0), r)), axis=-1)
        return _maybe_scalar(np.where(x >= 0.0, out, 0.0))

    def quantile(self, u):
        # single-uniform inverse CDF via vectorized bisection; the mixture CDF
        # is strictly increasing, and sf(x) <= exp(-min(rates) x) brackets it.
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        lo = np.zeros_like(u)
        hi = -np.log1p(-u) / min(self.rates)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = np.asarray(self.cdf(mid)) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        return float(out[0]) if scalar else out

    def integrated_sf(self, x):
        w, r = self._w()
        x = np.asarray(x, dtype=float)
        out = -np.sum((w / r) * np.expm1(-np.multiply.outer(np.maximum(x, 0.0), r)), axis=-1)
        return _maybe_scalar(out)

    def stats(self) -> DistStats:
        w, r = self._w()
        mean = float(np.sum(w / r))
        return DistStats(
            mean=mean,
            support_end=math.inf,
            integrated_sf_total=mean,
            lipschitz_bound=float(np.sum(w * r)),  # density is maximal at 0
            hazard_bound=float(max(self.rates)),
        )

    def time_scaled(self, factor: float) -> "HyperExponential":
        return HyperExponential(self.weights, tuple(r / factor for r in self.rates))

    def to_dict(self) -> dict:
        return {"family": "hyperexponential", "weights": list(self.weights), "rates": list(self.rates)}


_FAMILIES = {
    "exponential": (Exponential, ("rate",)),
    "deterministic": (Deterministic, ("value",)),
    "uniform": (Uniform, ("lo", "hi")),
    "lognormal": (LogNormal, ("mu", "sigma")),
    "hyperexponential": (HyperExponential, ("weights", "rates")),
}


def distribution_from_dict(spec: dict) -> DistributionSpec:
    """Build a distribution from a config literal like {"family": "exponential", "rate": 1.0}."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise DistributionError("distribution literal must be an object with a 'family' key")
    family = spec["family"]
    if family == "lognormal" and "mean" in spec:
        extra = set(spec) - {"family", "mean", "cv"}
        if extra:
            raise DistributionError(f"unknown distribution parameter(s): {sorted(extra)}")
        return LogNormal.from_mean_cv(spec["mean"], spec.get("cv", 1.0))
    if family not in _FAMILIES:
        raise DistributionError(f"unknown distribution family: {family!r}")
    cls, params = _FAMILIES[family]
    extra = set(spec) - {"family", *params}
    if extra:
        raise DistributionError(f"unknown distribution parameter(s): {sorted(extra)}")
    missing = [p for p in params if p not in spec]
    if missing:
        raise DistributionError(f"distribution family {family!r} requires {missing}")
    kwargs = {p: spec[p] for p in params}
    if family == "hyperexponential":
        kwargs = {"weights": tuple(kwargs["weights"]), "rates": tuple(kwargs["rates"])}
    return cls(**kwargs)
