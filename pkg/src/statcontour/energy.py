"""Region energies, evolution speeds and the Bhattacharyya contrast.

Conventions: the inner region is where the level-set function is positive.
A *speed* is the decrease in total region energy obtained by moving one
pixel from the outer region to the inner one, so a positive speed means the
pixel is better explained by the inner model and the contour should grow
over it.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .exceptions import DegenerateRegionError, ParameterError
from .expfam import (
    ML,
    MOMENTS,
    ExpFamilyModel,
    Gaussian,
    Poisson,
    Rayleigh,
    RegionEstimate,
    estimate_from_sums,
    fit_region,
    get_family,
)

CHAN_VESE = "chanvese"
SPEED_KINDS = (ML, MOMENTS, CHAN_VESE)


@dataclass(frozen=True)
class EnergyReport:
    """Two-region energy ``sum(region_terms) + lam * boundary_term``."""

    region_terms: tuple
    boundary_term: float
    lam: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "region_terms", tuple(float(t) for t in self.region_terms))
        object.__setattr__(self, "total", sum(self.region_terms) + self.lam * self.boundary_term)


# -- pointwise speeds --------------------------------------------------------

def region_neg_loglik(field, mask, model, estimate):
    """Negative log-likelihood of the masked pixels under ``estimate``."""
    model = get_family(model)
    values = np.asarray(field, dtype=np.float64)[np.asarray(mask, dtype=bool)]
    return float(-np.sum(model.log_pdf(values, estimate.eta_hat)))


def speed_ml(y, eta_in, eta_out, model):
    """Log-likelihood ratio ``log p(y, eta_in) - log p(y, eta_out)``.

    With ML estimates the parameter-dependence of the region energy drops
    out of its domain derivative, so this ratio is the whole speed.
    """
    model = get_family(model)
    eta_in = model.check_eta(eta_in)
    eta_out = model.check_eta(eta_out)
    y = model.prepare(y)
    T = model.sufficient_stat(y)
    # the carrier h(y) cancels
    return T @ (eta_in - eta_out) - (model.log_partition(eta_in) - model.log_partition(eta_out))


def rayleigh_moment_correction(y, mean_y, mean_y2):
    """Extra boundary term of a Rayleigh region fitted by the moments method.

    Returns ``(2 - (pi/2) * mean_y2 / mean_y**2) * (1 - y / mean_y)``. Adding
    a pixel ``y`` to such a region changes its energy by
    ``-(log p(y, theta_mo) + correction)``. The term vanishes when the
    region's moment ratio equals the Rayleigh value ``4/pi``, where the
    moments and ML estimates coincide.
    """
    if not mean_y > 0:
        raise DegenerateRegionError(f"region mean must be positive, got {mean_y!r}")
    ratio = mean_y2 / (mean_y * mean_y)
    return (2.0 - 0.5 * np.pi * ratio) * (1.0 - np.asarray(y, dtype=np.float64) / mean_y)


def speed_moments_rayleigh(y, est_in, est_out):
    """Speed for Rayleigh regions fitted with the moments estimator."""
    model = Rayleigh()
    y = model.prepare(y)
    inner = model.log_pdf(y, est_in.eta_hat) + rayleigh_moment_correction(y, est_in.mean_y, est_in.mean_y2)
    outer = model.log_pdf(y, est_out.eta_hat) + rayleigh_moment_correction(y, est_out.mean_y, est_out.mean_y2)
    return inner - outer


def speed_chan_vese(y, c_in, c_out):
    """Piecewise-constant two-phase speed ``(y - c_out)**2 - (y - c_in)**2``."""
    y = np.asarray(y, dtype=np.float64)
    return (y - c_out) ** 2 - (y - c_in) ** 2


# -- speed laws ----------------------------------------------------------------

@dataclass(frozen=True)
class SpeedLaw:
    """A region functional together with the way its parameters are estimated.

    Parameters
    ----------
    kind : {"ml", "moments", "chanvese"}
        ``"ml"`` uses the negative log-likelihood with ML estimates,
        ``"moments"`` the Rayleigh negative log-likelihood with moments
        estimates, ``"chanvese"`` the piecewise-constant squared error.
    model : ExpFamilyModel or str, optional
        Required for the likelihood laws; ignored by Chan-Vese.
    data_weight : float, optional
        Chan-Vese only: multiplier of the squared error, 1 by default.
        ``None`` means ``1 / (2 * var(image))``, which puts the squared error
        on the scale of a Gaussian log-likelihood with the global variance.
    """

    kind: str = ML
    model: ExpFamilyModel = None
    data_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in SPEED_KINDS:
            raise ValueError(f"unknown speed law {self.kind!r}; choose from {SPEED_KINDS}")
        if self.kind == CHAN_VESE:
            object.__setattr__(self, "model", None)
            return
        if self.model is None:
            raise ValueError(f"speed law {self.kind!r} needs a model")
        object.__setattr__(self, "model", get_family(self.model))
        if self.kind == MOMENTS and not isinstance(self.model, Rayleigh):
            raise ValueError("the moments speed law is only defined for the Rayleigh family")

    @classmethod
    def from_name(cls, name):
        """Parse names such as ``"poisson"``, ``"rayleigh-moments"``, ``"chanvese"``."""
        name = str(name).lower()
        if name in (CHAN_VESE, "chan-vese", "cv"):
            return cls(CHAN_VESE)
        family, _, estimator = name.partition("-")
        return cls(estimator or ML, family)

    @property
    def name(self):
        if self.kind == CHAN_VESE:
            return CHAN_VESE
        if self.kind == ML:
            return self.model.family_id
        return f"{self.model.family_id}-{self.kind}"

    def prepare_field(self, field):
        """Project the image onto the support of the model."""
        field = np.asarray(field, dtype=np.float64)
        if self.model is None:
            return field
        return self.model.to_support(field)

    def context(self, field):
        """Whole-image quantities the law needs.

        Besides the floors (likelihood laws) or the squared-error weight
        (Chan-Vese), this holds a per-pixel statistics matrix so that region
        sums reduce to one matrix-vector product per step.
        """
        y = np.ravel(np.asarray(field, dtype=np.float64))
        if self.kind == CHAN_VESE:
            weight = self.data_weight
            if weight is None:
                var = float(np.var(y))
                weight = 0.5 / var if var > 0 else 1.0
            stats = np.column_stack([y, y * y])
            return {"weight": weight, "stats": stats, "total": stats.sum(axis=0)}
        model = self.model
        y = model.prepare(y)
        T = model.sufficient_stat(y)
        stats = np.column_stack([T, y, y * y, model.log_carrier(y)])
        return {
            "reference": (T.mean(axis=0), float(y.mean())),
            "stats": stats,
            "total": stats.sum(axis=0),
        }

    def fit_sums(self, sums, count, context):
        """Fit a region from its column sums of ``context["stats"]``."""
        if self.kind == CHAN_VESE:
            if count < 1:
                raise DegenerateRegionError("empty region")
            return RegionEstimate(
                sum_T=np.array([sums[0]]),
                count=int(count),
                eta_hat=np.array([sums[0] / count]),
                estimator="mean",
                sum_y=float(sums[0]),
                sum_y2=float(sums[1]),
            )
        k = self.model.k
        return estimate_from_sums(
            self.model, sums[:k], count, sums[k], sums[k + 1], self.kind, context["reference"]
        )

    def energy_sums(self, sums, estimate, context):
        """Region energy from the same column sums used by :meth:`fit_sums`."""
        n = estimate.count
        if self.kind == CHAN_VESE:
            c = estimate.eta_hat[0]
            return float(context["weight"] * (sums[1] - 2.0 * c * sums[0] + n * c * c))
        k = self.model.k
        eta = estimate.eta_hat
        return float(-(sums[k + 2] + np.dot(sums[:k], eta) - n * self.model.log_partition(eta)))

    def fit(self, values, context):
        """Fit one region directly from its pixel values."""
        if self.kind == CHAN_VESE:
            values = np.asarray(values, dtype=np.float64)
            return self.fit_sums((values.sum(), np.dot(values, values)), values.size, context)
        return fit_region(self.model, values, self.kind, context["reference"])

    def speed(self, y, est_in, est_out, context):
        if self.kind == CHAN_VESE:
            return context["weight"] * speed_chan_vese(y, est_in.eta_hat[0], est_out.eta_hat[0])
        if self.kind == MOMENTS:
            return speed_moments_rayleigh(y, est_in, est_out)
        return speed_ml(y, est_in.eta_hat, est_out.eta_hat, self.model)

    def region_energy(self, values, estimate, context):
        """Region energy evaluated pixel by pixel."""
        if self.kind == CHAN_VESE:
            values = np.asarray(values, dtype=np.float64)
            return float(context["weight"] * np.sum((values - estimate.eta_hat[0]) ** 2))
        return float(-np.sum(self.model.log_pdf(values, estimate.eta_hat)))


# -- Bhattacharyya distance ----------------------------------------------------

def bhattacharyya(model, eta_f, eta_o):
    """Closed-form Bhattacharyya distance ``-log int sqrt(p_f p_o)``."""
    model = get_family(model)
    eta_f = model.check_eta(eta_f)
    eta_o = model.check_eta(eta_o)
    if isinstance(model, Poisson):
        (lf,), (lo,) = model.params_from_natural(eta_f), model.params_from_natural(eta_o)
        return 0.5 * (np.sqrt(lf) - np.sqrt(lo)) ** 2
    if isinstance(model, Rayleigh):
        (tf,), (to,) = model.params_from_natural(eta_f), model.params_from_natural(eta_o)
        return float(np.log((tf * tf + to * to) / (2.0 * tf * to)))
    if isinstance(model, Gaussian):
        mf, vf = model.params_from_natural(eta_f)
        mo, vo = model.params_from_natural(eta_o)
        return float(
            (mf - mo) ** 2 / (4.0 * (vf + vo)) + 0.5 * np.log((vf + vo) / (2.0 * np.sqrt(vf * vo)))
        )
    # any canonical family sharing a carrier
    return float(0.5 * (model.log_partition(eta_f) + model.log_partition(eta_o))
                 - model.log_partition(0.5 * (eta_f + eta_o)))


def bhattacharyya_numeric(model, eta_f, eta_o):
    """Bhattacharyya distance by quadrature (densities) or summation (counts).

    Independent of :func:`bhattacharyya`; used to validate the closed forms.
    """
    model = get_family(model)
    eta_f = model.check_eta(eta_f)
    eta_o = model.check_eta(eta_o)

    if isinstance(model, Poisson):
        (lf,), (lo,) = model.params_from_natural(eta_f), model.params_from_natural(eta_o)
        top = max(lf, lo)
        y = np.arange(0, int(np.ceil(top + 40.0 * np.sqrt(top) + 50)))
        # pmf evaluated directly, not through the canonical form
        log_pf = -lf + y * np.log(lf) - gammaln(y + 1.0)
        log_po = -lo + y * np.log(lo) - gammaln(y + 1.0)
        return float(-np.log(np.sum(np.exp(0.5 * (log_pf + log_po)))))

    if isinstance(model, Rayleigh):
        (tf,), (to,) = model.params_from_natural(eta_f), model.params_from_natural(eta_o)

        def dens(y, t):
            return y / (t * t) * np.exp(-y * y / (2.0 * t * t))

        upper = 20.0 * max(tf, to)
        coef, _ = integrate.quad(
            lambda y: np.sqrt(dens(y, tf) * dens(y, to)), 0.0, upper,
            points=[tf, to], epsabs=1e-13, epsrel=1e-12, limit=200,
        )
        return float(-np.log(coef))

    if isinstance(model, Gaussian):
        mf, vf = model.params_from_natural(eta_f)
        mo, vo = model.params_from_natural(eta_o)
        sf, so = np.sqrt(vf), np.sqrt(vo)

        def dens(y, m, s):
            return np.exp(-0.5 * ((y - m) / s) ** 2) / (s * np.sqrt(2.0 * np.pi))

        spread = 10.0 * max(sf, so)
        coef, _ = integrate.quad(
            lambda y: np.sqrt(dens(y, mf, sf) * dens(y, mo, so)),
            min(mf, mo) - spread, max(mf, mo) + spread,
            points=[mf, mo], epsabs=1e-13, epsrel=1e-12, limit=200,
        )
        return float(-np.log(coef))

    raise ParameterError(f"no numeric Bhattacharyya oracle for {model!r}")
