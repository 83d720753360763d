"""Synthetic phantoms, contrast calibration and noise corruption."""

from dataclasses import dataclass, field

import numpy as np

from .energy import bhattacharyya, bhattacharyya_numeric
from .expfam import get_family

NOISE_TYPES = ("poisson", "rayleigh", "gaussian")

DEFAULT_BG = {"poisson": (9.0,), "rayleigh": (1.0,), "gaussian": (0.0, 1.0)}

# tolerance of the runtime check of a calibration against quadrature
ORACLE_TOL = 1e-6


@dataclass(frozen=True)
class Shape:
    """A disk (``size`` = radius) or rectangle (``size`` = (height, width)).

    ``center`` is given as (row, column).
    """

    kind: str
    center: tuple
    size: object

    def __post_init__(self):
        if self.kind not in ("disk", "rectangle"):
            raise ValueError(f"unknown shape kind {self.kind!r}")

    def bbox(self):
        cy, cx = self.center
        if self.kind == "disk":
            r = float(self.size)
            return cy - r, cx - r, cy + r, cx + r
        h, w = self.size
        top, left = cy - h // 2, cx - w // 2
        return top, left, top + h - 1, left + w - 1

    def rasterize(self, shape):
        yy, xx = np.mgrid[: shape[0], : shape[1]]
        cy, cx = self.center
        if self.kind == "disk":
            r = float(self.size)
            return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        top, left, bottom, right = self.bbox()
        return (yy >= top) & (yy <= bottom) & (xx >= left) & (xx <= right)


def default_shapes():
    return [
        Shape("disk", (32, 34), 18),
        Shape("rectangle", (30, 94), (26, 36)),
        Shape("disk", (93, 92), 22),
        Shape("rectangle", (96, 30), (34, 22)),
    ]


@dataclass
class BenchmarkSpec:
    """Phantom geometry plus the noise protocol of one benchmark.

    ``bg_param`` is the background's classical parameter tuple: ``(rate,)``
    for Poisson, ``(scale,)`` for Rayleigh, ``(mean, std)`` for Gaussian.
    """

    width: int = 128
    height: int = 128
    shapes: list = field(default_factory=default_shapes)
    noise: str = "poisson"
    bg_param: tuple = None
    target_D: float = 0.5
    realizations: int = 50
    base_seed: int = 0

    def __post_init__(self):
        if self.noise not in NOISE_TYPES:
            raise ValueError(f"unknown noise {self.noise!r}; choose from {NOISE_TYPES}")
        if self.bg_param is None:
            self.bg_param = DEFAULT_BG[self.noise]
        self.bg_param = tuple(float(p) for p in np.atleast_1d(self.bg_param))
        self.validate()

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if self.target_D < 0:
            raise ValueError("target_D must be non-negative")
        if self.realizations < 1:
            raise ValueError("realizations must be positive")
        _check_params(self.noise, self.bg_param)
        occupied = np.zeros((self.height, self.width), dtype=bool)
        for s in self.shapes:
            top, left, bottom, right = s.bbox()
            if top <= 0 or left <= 0 or bottom >= self.height - 1 or right >= self.width - 1:
                raise ValueError(f"{s} does not lie strictly inside the image")
            region = s.rasterize((self.height, self.width))
            if np.any(occupied & region):
                raise ValueError(f"{s} overlaps another shape")
            occupied |= region

    @property
    def shape(self):
        return (self.height, self.width)


def _check_params(noise, params):
    params = tuple(params)
    want = 2 if noise == "gaussian" else 1
    if len(params) != want:
        raise ValueError(f"{noise} needs {want} parameter(s), got {params}")
    if noise == "gaussian":
        if not params[1] > 0:
            raise ValueError("gaussian std must be positive")
    elif not params[0] > 0:
        raise ValueError(f"{noise} parameter must be positive")
    return params


def natural_params(noise, params):
    """Natural parameter of the family ``noise`` at classical ``params``."""
    params = _check_params(noise, np.atleast_1d(params))
    model = get_family(noise)
    if noise == "gaussian":
        mean, std = params
        return model.natural_from_params(mean, std * std)
    return model.natural_from_params(params[0])


def make_phantom(spec):
    """Return ``(labels, gt_mask)``; both are True on the shapes."""
    spec.validate()
    labels = np.zeros(spec.shape, dtype=bool)
    for s in spec.shapes:
        labels |= s.rasterize(spec.shape)
    return labels, labels.copy()


def clean_image(labels, noise, fg_param, bg_param):
    """Noise-free image holding each region's distribution mean."""
    means = []
    for params in (fg_param, bg_param):
        p = _check_params(noise, np.atleast_1d(params))
        if noise == "rayleigh":
            means.append(p[0] * np.sqrt(np.pi / 2.0))
        else:
            means.append(p[0])
    return np.where(labels, means[0], means[1]).astype(np.float64)


def calibrate(noise, bg_param, target_D, verify=True):
    """Foreground parameters at Bhattacharyya distance ``target_D`` from the background.

    The foreground is always the higher-parameter region. The closed-form
    inverse is checked against the closed-form distance (1e-9) and against
    numerical quadrature (1e-6) unless ``verify`` is False.
    """
    if target_D < 0:
        raise ValueError("target_D must be non-negative")
    bg = _check_params(noise, np.atleast_1d(bg_param))
    D = float(target_D)
    if noise == "poisson":
        fg = ((np.sqrt(bg[0]) + np.sqrt(2.0 * D)) ** 2,)
    elif noise == "rayleigh":
        fg = (bg[0] * (np.exp(D) + np.sqrt(np.expm1(2.0 * D))),)
    else:
        mean, std = bg
        fg = (mean + std * np.sqrt(8.0 * D), std)
    fg = tuple(float(p) for p in fg)

    if verify:
        eta_f, eta_o = natural_params(noise, fg), natural_params(noise, bg)
        closed = bhattacharyya(noise, eta_f, eta_o)
        if abs(closed - D) > 1e-9:
            raise ArithmeticError(f"calibration off: D={closed!r}, wanted {D!r}")
        numeric = bhattacharyya_numeric(noise, eta_f, eta_o)
        if abs(numeric - D) > ORACLE_TOL:
            raise ArithmeticError(f"closed form disagrees with quadrature: {numeric!r} vs {D!r}")
    return fg


def realization_seed(base_seed, *keys):
    """Child seed for a realization, derived by counter-based spawning."""
    return np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in keys))


def corrupt(labels, noise, fg_param, bg_param, seed):
    """Draw every pixel independently from its region's distribution."""
    labels = np.asarray(labels, dtype=bool)
    rng = np.random.default_rng(seed)
    model = get_family(noise)
    out = np.empty(labels.shape, dtype=np.float64)
    n_fg = int(labels.sum())
    # background first, then foreground, in raster order
    out[~labels] = model.sample(natural_params(noise, bg_param), rng, labels.size - n_fg)
    out[labels] = model.sample(natural_params(noise, fg_param), rng, n_fg)
    return out
