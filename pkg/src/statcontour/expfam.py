"""Canonical exponential families for scalar image features.

A member is written in canonical form

    p(y, eta) = h(y) * exp(<eta, T(y)> - A(eta))

and is described by its sufficient statistic ``T``, log-normalizer ``A``,
the mean map ``grad A`` and its inverse ``psi``. The maximum likelihood
estimate of ``eta`` over a set of samples is ``psi(mean T)``.

Three members are shipped: Gaussian (k=2), Poisson (k=1) and Rayleigh (k=1).
New members subclass :class:`ExpFamilyModel`.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .exceptions import DegenerateRegionError, DomainError, ParameterError

ML = "ml"
MOMENTS = "moments"

# Knuth's product method is used up to this rate; above it the rejection
# sampler of the numpy Generator takes over.
KNUTH_MAX_RATE = 30.0

# Degenerate-moment floors, relative to the whole-image moment.
RELATIVE_FLOOR = 1e-6
ABSOLUTE_FLOOR = 1e-12


class ExpFamilyModel:
    """Base class for a k-parameter canonical exponential family over scalars.

    Subclasses implement the canonical triplet plus the conversions between
    the natural parameter and the usual ("classical") parameterization.
    Every method accepts scalars or arrays of observations.
    """

    family_id = None
    k = None
    support = None

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))

    # -- canonical form -------------------------------------------------
    def prepare(self, y):
        """Map raw observations onto the support, raising on violations."""
        raise NotImplementedError

    def sufficient_stat(self, y):
        """Return T(y) with a trailing axis of length ``k``."""
        raise NotImplementedError

    def log_carrier(self, y):
        """Return log h(y)."""
        raise NotImplementedError

    def log_partition(self, eta):
        """Return A(eta)."""
        raise NotImplementedError

    def mean_stat(self, eta):
        """Return grad A(eta) = E[T(Y)]."""
        raise NotImplementedError

    def natural_from_mean(self, mu):
        """Return psi(mu), the inverse of :meth:`mean_stat`."""
        raise NotImplementedError

    def in_natural_space(self, eta):
        raise NotImplementedError

    def in_mean_space(self, mu):
        raise NotImplementedError

    # -- classical parameters --------------------------------------------
    def natural_from_params(self, *params):
        raise NotImplementedError

    def params_from_natural(self, eta):
        raise NotImplementedError

    def floor_mean(self, mu, reference):
        """Clamp a sample moment into the mean space.

        ``reference`` is the same moment over the whole image and sets the
        scale of the floor.
        """
        raise NotImplementedError

    def sample(self, eta, rng, size=None):
        raise NotImplementedError

    def to_support(self, y):
        """Project an arbitrary real field onto the support.

        Used when a model is applied to data it did not generate (for example
        Rayleigh on Poisson counts that contain zeros).
        """
        return np.asarray(y, dtype=np.float64)

    # -- shared machinery --------------------------------------------------
    def check_eta(self, eta):
        eta = np.asarray(eta, dtype=np.float64).reshape(self.k)
        if not np.all(np.isfinite(eta)) or not self.in_natural_space(eta):
            raise ParameterError(
                f"{self.family_id}: eta={eta.tolist()} is outside the natural parameter space"
            )
        return eta

    def log_pdf(self, y, eta):
        """Log density (or log mass) at ``y`` for natural parameter ``eta``."""
        eta = self.check_eta(eta)
        y = self.prepare(y)
        return self.log_carrier(y) + self.sufficient_stat(y) @ eta - self.log_partition(eta)


class Gaussian(ExpFamilyModel):
    """Normal law with unknown mean and variance.

    ``eta = (mu / s2, -1 / (2 s2))``, ``T(y) = (y, y**2)`` and the carrier is
    folded into ``A`` so that ``h(y) = 1``.
    """

    family_id = "gaussian"
    k = 2
    support = "real line"

    def prepare(self, y):
        y = np.asarray(y, dtype=np.float64)
        if not np.all(np.isfinite(y)):
            raise DomainError("gaussian: observations must be finite")
        return y

    def sufficient_stat(self, y):
        y = self.prepare(y)
        return np.stack([y, y * y], axis=-1)

    def log_carrier(self, y):
        return np.zeros_like(np.asarray(y, dtype=np.float64))

    def log_partition(self, eta):
        e1, e2 = eta
        return -e1 * e1 / (4.0 * e2) - 0.5 * np.log(-2.0 * e2) + 0.5 * np.log(2.0 * np.pi)

    def mean_stat(self, eta):
        e1, e2 = self.check_eta(eta)
        mean = -e1 / (2.0 * e2)
        var = -1.0 / (2.0 * e2)
        return np.array([mean, mean * mean + var])

    def natural_from_mean(self, mu):
        m1, m2 = np.asarray(mu, dtype=np.float64).reshape(2)
        var = m2 - m1 * m1
        if not var > 0:
            raise DegenerateRegionError(f"gaussian: non-positive variance {var!r}")
        return np.array([m1 / var, -0.5 / var])

    def in_natural_space(self, eta):
        return bool(eta[1] < 0)

    def in_mean_space(self, mu):
        return bool(mu[1] - mu[0] ** 2 > 0)

    def natural_from_params(self, mean, var):
        if not var > 0:
            raise ParameterError(f"gaussian: variance must be positive, got {var!r}")
        return np.array([mean / var, -0.5 / var])

    def params_from_natural(self, eta):
        e1, e2 = self.check_eta(eta)
        var = -0.5 / e2
        return e1 * var, var

    def floor_mean(self, mu, reference):
        m1, m2 = np.asarray(mu, dtype=np.float64)
        r1, r2 = np.asarray(reference, dtype=np.float64)
        floor = max(RELATIVE_FLOOR * max(r2 - r1 * r1, 0.0), ABSOLUTE_FLOOR)
        var = max(m2 - m1 * m1, floor)
        return np.array([m1, m1 * m1 + var])

    def sample(self, eta, rng, size=None):
        mean, var = self.params_from_natural(eta)
        # Box-Muller on two independent uniforms in (0, 1]
        u1 = 1.0 - rng.random(size)
        u2 = rng.random(size)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return mean + np.sqrt(var) * z


class Poisson(ExpFamilyModel):
    """Poisson counts; real-valued inputs are rounded to the nearest integer."""

    family_id = "poisson"
    k = 1
    support = "non-negative integers"

    def prepare(self, y):
        y = np.floor(np.asarray(y, dtype=np.float64) + 0.5)
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise DomainError("poisson: observations must round to non-negative integers")
        return y

    def sufficient_stat(self, y):
        return self.prepare(y)[..., None]

    def log_carrier(self, y):
        return -gammaln(np.asarray(y, dtype=np.float64) + 1.0)

    def log_partition(self, eta):
        return np.exp(eta[0])

    def mean_stat(self, eta):
        return np.exp(self.check_eta(eta))

    def natural_from_mean(self, mu):
        (m,) = np.asarray(mu, dtype=np.float64).reshape(1)
        if not m > 0:
            raise DegenerateRegionError(f"poisson: non-positive mean {m!r}")
        return np.array([np.log(m)])

    def in_natural_space(self, eta):
        return True

    def in_mean_space(self, mu):
        return bool(mu[0] > 0)

    def natural_from_params(self, rate):
        if not rate > 0:
            raise ParameterError(f"poisson: rate must be positive, got {rate!r}")
        return np.array([np.log(rate)])

    def params_from_natural(self, eta):
        return (float(np.exp(self.check_eta(eta)[0])),)

    def floor_mean(self, mu, reference):
        floor = max(RELATIVE_FLOOR * abs(float(np.asarray(reference).reshape(1)[0])), ABSOLUTE_FLOOR)
        return np.maximum(np.asarray(mu, dtype=np.float64).reshape(1), floor)

    def to_support(self, y):
        return np.maximum(np.asarray(y, dtype=np.float64), 0.0)

    def sample(self, eta, rng, size=None):
        (rate,) = self.params_from_natural(eta)
        if rate > KNUTH_MAX_RATE:
            return rng.poisson(rate, size).astype(np.float64)
        return _knuth_poisson(rate, rng, size)


class Rayleigh(ExpFamilyModel):
    """Rayleigh law with scale ``theta``.

    ``eta = -1 / (2 theta**2)``, ``T(y) = y**2``, ``A(eta) = -log(-2 eta)`` and
    ``h(y) = y``, which reproduces ``y / theta**2 * exp(-y**2 / (2 theta**2))``.
    """

    family_id = "rayleigh"
    k = 1
    support = "positive reals"

    def prepare(self, y):
        y = np.asarray(y, dtype=np.float64)
        if not np.all(np.isfinite(y)) or np.any(y <= 0):
            raise DomainError("rayleigh: observations must be strictly positive")
        return y

    def sufficient_stat(self, y):
        y = self.prepare(y)
        return (y * y)[..., None]

    def log_carrier(self, y):
        return np.log(y)

    def log_partition(self, eta):
        return -np.log(-2.0 * eta[0])

    def mean_stat(self, eta):
        return -1.0 / self.check_eta(eta)

    def natural_from_mean(self, mu):
        (m,) = np.asarray(mu, dtype=np.float64).reshape(1)
        if not m > 0:
            raise DegenerateRegionError(f"rayleigh: non-positive second moment {m!r}")
        return np.array([-1.0 / m])

    def in_natural_space(self, eta):
        return bool(eta[0] < 0)

    def in_mean_space(self, mu):
        return bool(mu[0] > 0)

    def natural_from_params(self, scale):
        if not scale > 0:
            raise ParameterError(f"rayleigh: scale must be positive, got {scale!r}")
        return np.array([-0.5 / (scale * scale)])

    def params_from_natural(self, eta):
        return (float(np.sqrt(-0.5 / self.check_eta(eta)[0])),)

    def floor_mean(self, mu, reference):
        floor = max(RELATIVE_FLOOR * abs(float(np.asarray(reference).reshape(1)[0])), ABSOLUTE_FLOOR)
        return np.maximum(np.asarray(mu, dtype=np.float64).reshape(1), floor)

    def to_support(self, y):
        y = np.asarray(y, dtype=np.float64)
        positive = y[y > 0]
        if positive.size == 0:
            return np.ones_like(y)
        # non-positive values move to half the smallest positive observation
        return np.where(y > 0, y, 0.5 * positive.min())

    def sample(self, eta, rng, size=None):
        (scale,) = self.params_from_natural(eta)
        return rayleigh_inverse_cdf(1.0 - rng.random(size), scale)


FAMILIES = {cls.family_id: cls for cls in (Gaussian, Poisson, Rayleigh)}


def get_family(name):
    """Look up a family by id (``"gaussian"``, ``"poisson"``, ``"rayleigh"``)."""
    if isinstance(name, ExpFamilyModel):
        return name
    key = str(name).lower()
    if key in ("gauss", "normal"):
        key = "gaussian"
    try:
        return FAMILIES[key]()
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


def rayleigh_inverse_cdf(u, scale):
    """Map uniforms in (0, 1] to Rayleigh draws: ``scale * sqrt(-2 log u)``."""
    return scale * np.sqrt(-2.0 * np.log(u))


def _knuth_poisson(rate, rng, size):
    # vectorized product-of-uniforms method: count draws until the running
    # product drops below exp(-rate)
    threshold = np.exp(-rate)
    n = 1 if size is None else int(np.prod(size))
    counts = np.zeros(n)
    prod = rng.random(n)
    active = prod > threshold
    while np.any(active):
        idx = np.flatnonzero(active)
        counts[idx] += 1
        prod[idx] *= rng.random(idx.size)
        active[idx] = prod[idx] > threshold
    if size is None:
        return float(counts[0])
    return counts.reshape(size)


# -- functional API ---------------------------------------------------------

def log_pdf(model, y, eta):
    return get_family(model).log_pdf(y, eta)


def sufficient_stat(model, y):
    return get_family(model).sufficient_stat(y)


def sample(model, eta, rng, size=None):
    """Draw from ``model`` at natural parameter ``eta`` using generator ``rng``."""
    return get_family(model).sample(eta, rng, size)


def ml_estimate(model, sum_T, count):
    """Maximum likelihood natural parameter from sufficient-statistic sums.

    The ML estimate solves ``grad A(eta) = sum_T / count``. Raises
    :class:`DegenerateRegionError` when the sample moment has no preimage.
    """
    model = get_family(model)
    if count < model.k:
        raise DegenerateRegionError(f"need at least {model.k} samples, got {count}")
    mu = np.asarray(sum_T, dtype=np.float64).reshape(model.k) / count
    return model.natural_from_mean(mu)


def moments_estimate_rayleigh(sum_y, count):
    """Method-of-moments Rayleigh scale: ``sqrt(2/pi) * sum_y / count``."""
    if count < 1:
        raise DegenerateRegionError("empty region")
    if not sum_y > 0:
        raise DegenerateRegionError(f"rayleigh moments estimate needs a positive sum, got {sum_y!r}")
    return np.sqrt(2.0 / np.pi) * sum_y / count


@dataclass
class RegionEstimate:
    """Sufficient-statistic accumulators and the fitted parameter of a region.

    ``sum_y`` and ``sum_y2`` are kept for every region because the Rayleigh
    moments estimator and its shape-derivative correction need raw moments.
    """

    sum_T: np.ndarray
    count: int
    eta_hat: np.ndarray
    estimator: str = ML
    sum_y: float = 0.0
    sum_y2: float = 0.0
    floored: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def mean_T(self):
        return self.sum_T / self.count

    @property
    def mean_y(self):
        return self.sum_y / self.count

    @property
    def mean_y2(self):
        return self.sum_y2 / self.count


def fit_region(model, values, estimator=ML, reference=None):
    """Fit ``model`` to the 1-D array ``values`` of one region.

    ``reference`` holds whole-image moments ``(mean T, mean y)``; when given,
    degenerate moments are floored relative to it instead of raising.
    """
    model = get_family(model)
    y = model.prepare(values)
    if y.size == 0:
        raise DegenerateRegionError("empty region")
    T = model.sufficient_stat(y)
    return estimate_from_sums(
        model, T.sum(axis=0), int(y.size), float(y.sum()), float(np.dot(y, y)), estimator, reference
    )


def estimate_from_sums(model, sum_T, count, sum_y, sum_y2, estimator=ML, reference=None):
    """Build a :class:`RegionEstimate` from accumulated region sums."""
    model = get_family(model)
    if count < 1:
        raise DegenerateRegionError("empty region")
    sum_T = np.asarray(sum_T, dtype=np.float64).reshape(model.k)
    floored = False

    if estimator == ML:
        mu = sum_T / count
        if not model.in_mean_space(mu) or count < model.k:
            if reference is None:
                raise DegenerateRegionError(f"{model.family_id}: degenerate region moments {mu.tolist()}")
            mu = model.floor_mean(mu, reference[0])
            floored = True
        eta = model.natural_from_mean(mu)
    elif estimator == MOMENTS:
        if not isinstance(model, Rayleigh):
            raise ValueError("the moments estimator is only available for the Rayleigh family")
        if sum_y <= 0:
            if reference is None:
                raise DegenerateRegionError("rayleigh: non-positive region mean")
            sum_y = count * max(RELATIVE_FLOOR * float(reference[1]), ABSOLUTE_FLOOR)
            floored = True
        theta = moments_estimate_rayleigh(sum_y, count)
        eta = model.natural_from_params(theta)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")

    return RegionEstimate(
        sum_T=sum_T,
        count=int(count),
        eta_hat=eta,
        estimator=estimator,
        sum_y=float(sum_y),
        sum_y2=float(sum_y2),
        floored=floored,
    )


def reference_moments(model, field):
    """Whole-image ``(mean T, mean y)`` used to scale degenerate-region floors."""
    model = get_family(model)
    y = model.prepare(np.ravel(field))
    return model.sufficient_stat(y).mean(axis=0), float(y.mean())
