"""scikit-learn style wrapper around :func:`statcontour.levelset.segment`."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .energy import CHAN_VESE, SpeedLaw
from .evaluation import fpf_tpf
from .levelset import EvolveConfig, initial_mask, segment
from .validation import check_field, check_mask


class RegionCompetitionSegmenter(BaseEstimator):
    """Two-region segmentation by a statistical active contour.

    ``fit`` evolves a level set on one image. The fitted region models can
    then label the pixels of other images one at a time (``predict``), and
    ``transform`` returns the per-pixel speed, i.e. the evidence for the
    foreground.

    Parameters
    ----------
    model : {"gaussian", "poisson", "rayleigh", "chanvese"}
    estimator : {"ml", "moments"}
        ``"moments"`` is only available for ``model="rayleigh"``.
    lam : float
        Weight of the contour length.
    dt, epsilon, max_iter, reinit_every, converge_tol
        Evolution settings, see :class:`~statcontour.levelset.EvolveConfig`.
    init : {"threshold", "grid"} or array-like
        Initial mask, by name or given explicitly.
    polarity : {"bright", "inner"}
        Which region is reported as foreground.

    Attributes
    ----------
    mask_ : ndarray of bool
        Foreground of the fitted image.
    status_ : str
        ``"converged"``, ``"max_iter"`` or ``"collapsed"``.
    n_iter_ : int
    energy_trace_ : list of EnergyReport
    estimates_ : tuple of RegionEstimate
        Foreground and background fits, in that order.
    """

    def __init__(self, model="gaussian", estimator="ml", lam=2.0, dt=0.5, epsilon=1.5,
                 max_iter=2000, reinit_every=20, converge_tol=0, init="threshold",
                 polarity="bright"):
        self.model = model
        self.estimator = estimator
        self.lam = lam
        self.dt = dt
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.reinit_every = reinit_every
        self.converge_tol = converge_tol
        self.init = init
        self.polarity = polarity

    def _law(self):
        if self.model == CHAN_VESE:
            return SpeedLaw(CHAN_VESE)
        return SpeedLaw(self.estimator, self.model)

    def fit(self, X, y=None):
        """Segment image ``X``; ``y`` is ignored."""
        X = check_field(X, name="X")
        law = self._law()
        config = EvolveConfig(
            speed_law=law, lam=self.lam, dt=self.dt, epsilon=self.epsilon,
            max_iter=self.max_iter, reinit_every=self.reinit_every,
            converge_tol=self.converge_tol,
        )
        if isinstance(self.init, str):
            start = initial_mask(X, self.init)
        else:
            start = check_mask(self.init, X.shape, name="init")
        result = segment(X, start, config, polarity=self.polarity)
        self.law_ = law
        self.mask_ = result.mask
        self.phi_ = result.phi
        self.status_ = result.status
        self.n_iter_ = result.n_iter
        self.energy_trace_ = result.trace
        est_in, est_out = result.estimates
        self.estimates_ = (est_out, est_in) if result.flipped else (est_in, est_out)
        self._context = law.context(law.prepare_field(X))
        return self

    def transform(self, X):
        """Per-pixel speed: positive where the foreground model fits better."""
        check_is_fitted(self, "mask_")
        X = check_field(X, name="X")
        y = self.law_.prepare_field(X).ravel()
        speed = self.law_.speed(y, self.estimates_[0], self.estimates_[1], self._context)
        return np.asarray(speed, dtype=np.float64).reshape(X.shape)

    def predict(self, X):
        """Pixelwise labels of ``X`` from the fitted region models."""
        return self.transform(X) > 0

    def fit_predict(self, X, y=None):
        """Segment ``X`` and return its foreground mask."""
        return self.fit(X).mask_.copy()

    def score(self, X, y):
        """TPF - FPF of ``predict(X)`` against the ground-truth mask ``y``."""
        fpf, tpf = fpf_tpf(self.predict(X), y)
        return tpf - fpf
