"""Two-region level-set evolution driven by a :class:`~statcontour.energy.SpeedLaw`.

The contour is the zero level set of ``phi``; ``phi > 0`` is the inner
region. One step applies

    phi <- phi + dt_eff * delta_eps(phi) * (speed - lam * kappa)

where ``kappa`` is the curvature of the inner region (positive on convex
parts), so the ``-lam * kappa`` term is the descent direction of the contour
length. Region parameters are frozen during a step and refitted after it.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .energy import EnergyReport, SpeedLaw
from .exceptions import DegenerateRegionError, InitializationError
from .validation import check_field, check_mask

logger = logging.getLogger(__name__)

RUNNING = "running"
CONVERGED = "converged"
MAX_ITER = "max_iter"
COLLAPSED = "collapsed"

GRADIENT_FLOOR = 1e-8
# a unit grid cannot resolve curvature above one per pixel
MAX_CURVATURE = 1.0
# explicit stability of the curvature (diffusion-like) term
DIFFUSION_LIMIT = 0.25
# a quiet front pixel that would cross within this many steps blocks convergence
HORIZON = 10


@dataclass
class EvolveConfig:
    """Numerical settings of one segmentation run.

    ``lam`` weights the contour length; ``max_update`` caps the per-pixel
    change of ``phi`` in a step (updates beyond it are saturated).
    """

    speed_law: SpeedLaw = field(default_factory=lambda: SpeedLaw("ml", "gaussian"))
    lam: float = 2.0
    dt: float = 0.5
    epsilon: float = 1.5
    max_iter: int = 2000
    reinit_every: int = 20
    converge_tol: int = 0
    patience: int = 5
    max_update: float = 0.45

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.dt <= 0 or self.epsilon <= 0 or self.max_update <= 0:
            raise ValueError("dt, epsilon and max_update must be positive")
        if self.max_iter < 1 or self.reinit_every < 1 or self.patience < 1:
            raise ValueError("max_iter, reinit_every and patience must be positive")
        if self.converge_tol < 0:
            raise ValueError("converge_tol must be non-negative")


@dataclass
class LevelSetState:
    phi: np.ndarray
    iter: int
    estimates: tuple
    energy_trace: list
    band_changes: int = 0
    status: str = RUNNING
    stable_steps: int = 0
    last_update: float = 0.0
    last_reinit: int = 0
    last_change: int = 0

    @property
    def mask(self):
        return self.phi > 0


@dataclass
class SegmentResult:
    mask: np.ndarray
    trace: list
    status: str
    n_iter: int
    phi: np.ndarray
    estimates: tuple
    flipped: bool = False

    @property
    def collapsed(self):
        return self.status == COLLAPSED

    @property
    def converged(self):
        return self.status == CONVERGED


# -- geometry ------------------------------------------------------------------

def init_phi(mask):
    """Signed Euclidean distance to the mask boundary, positive inside.

    The interface sits halfway between inside and outside pixel centres, so
    pixels touching it have ``|phi| = 0.5``.
    """
    mask = check_mask(mask)
    if not mask.any() or mask.all():
        raise InitializationError("mask must contain both inside and outside pixels")
    inside = ndimage.distance_transform_edt(mask)
    outside = ndimage.distance_transform_edt(~mask)
    return np.where(mask, inside - 0.5, -(outside - 0.5))


def reinitialize(phi):
    """Replace ``phi`` by the signed distance to its current zero crossing.

    Pixels next to a sign change keep a sub-pixel distance obtained by
    linear interpolation of the crossing along grid edges; every other
    pixel gets the Euclidean distance to its nearest such pixel plus that
    pixel's own distance.
    """
    phi = np.asarray(phi, dtype=np.float64)
    inside = phi > 0
    if not inside.any() or inside.all():
        raise InitializationError("cannot reinitialize a single-signed level set")

    along = []
    for axis in (0, 1):
        d = np.full(phi.shape, np.inf)
        for step in (1, -1):
            nb = np.roll(phi, step, axis=axis)
            nb_in = np.roll(inside, step, axis=axis)
            edge = [slice(None), slice(None)]
            edge[axis] = 0 if step == 1 else -1
            cross = inside != nb_in
            cross[tuple(edge)] = False
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(cross, phi / (phi - nb), np.inf)
            d = np.minimum(d, np.abs(t))
        along.append(d)
    dy, dx = along
    both = np.isfinite(dx) & np.isfinite(dy)
    with np.errstate(invalid="ignore"):
        # a pixel sitting exactly on the front has dx = dy = 0
        hyp = np.maximum(np.sqrt(dx * dx + dy * dy), GRADIENT_FLOOR)
        dist = np.where(both, dx * dy / hyp, np.minimum(dx, dy))
    front = np.isfinite(dist)

    out = np.empty_like(phi)
    for side, sign in ((inside, 1.0), (~inside, -1.0)):
        seeds = front & side
        if not seeds.any():
            # a side with no crossing pixel cannot occur when both signs exist
            raise InitializationError("no interface pixels found")
        gap, (iy, ix) = ndimage.distance_transform_edt(~seeds, return_indices=True)
        out[side] = sign * (gap[side] + dist[iy[side], ix[side]])
    return out


def _curvature_stencil(padded, iy, ix):
    # (iy, ix) index the unpadded grid; padded has a one-pixel edge border
    iy = iy + 1
    ix = ix + 1
    c = padded[iy, ix]
    n, s = padded[iy - 1, ix], padded[iy + 1, ix]
    w, e = padded[iy, ix - 1], padded[iy, ix + 1]
    px = 0.5 * (e - w)
    py = 0.5 * (s - n)
    pxx = e - 2.0 * c + w
    pyy = s - 2.0 * c + n
    pxy = 0.25 * (padded[iy + 1, ix + 1] - padded[iy + 1, ix - 1]
                  - padded[iy - 1, ix + 1] + padded[iy - 1, ix - 1])
    num = pxx * py * py - 2.0 * pxy * px * py + pyy * px * px
    den = np.maximum(np.sqrt(px * px + py * py), GRADIENT_FLOOR) ** 3
    return -num / den


def curvature(phi, points=None):
    """Curvature of the ``phi > 0`` region's level lines, positive where convex.

    Computed as ``-div(grad phi / |grad phi|)`` with central differences
    (edge-replicated border) and ``|grad phi|`` floored at 1e-8. With
    ``points=(rows, cols)`` only those grid points are evaluated.
    """
    phi = np.asarray(phi, dtype=np.float64)
    padded = np.pad(phi, 1, mode="edge")
    if points is None:
        iy, ix = np.indices(phi.shape)
        return _curvature_stencil(padded, iy, ix)
    iy, ix = (np.asarray(p) for p in points)
    return _curvature_stencil(padded, iy, ix)


def heaviside(phi, epsilon):
    """Smoothed step ``H_eps`` whose derivative is :func:`dirac`."""
    phi = np.asarray(phi, dtype=np.float64)
    p = np.clip(phi, -epsilon, epsilon)
    h = 0.5 * (1.0 + p / epsilon + np.sin(np.pi * p / epsilon) / np.pi)
    # exact 0 and 1 outside the band
    return np.where(phi >= epsilon, 1.0, np.where(phi <= -epsilon, 0.0, h))


def dirac(phi, epsilon):
    """Compactly supported cosine bump of width ``epsilon``."""
    phi = np.asarray(phi, dtype=np.float64)
    p = np.clip(phi, -epsilon, epsilon)
    return (1.0 + np.cos(np.pi * p / epsilon)) / (2.0 * epsilon)


def contour_length(phi, epsilon):
    """Contour length estimate ``sum |grad H_eps(phi)|``."""
    gy, gx = np.gradient(heaviside(phi, epsilon))
    return float(np.sum(np.sqrt(gx * gx + gy * gy)))


def circle_grid_mask(shape, radius=5, spacing=16):
    """Grid of disks covering the image; the default initialization."""
    h, w = shape
    if radius <= 0 or spacing <= 2 * radius:
        raise ValueError("need 0 < 2 * radius < spacing")
    yy, xx = np.mgrid[:h, :w]
    cy = (yy % spacing) - (spacing - 1) / 2.0
    cx = (xx % spacing) - (spacing - 1) / 2.0
    return cy * cy + cx * cx <= radius * radius


def threshold_mask(field, sigma=2.0):
    """Pixels whose Gaussian-smoothed value exceeds the image mean.

    Independent of the speed law, so every functional can share it.
    """
    field = np.asarray(field, dtype=np.float64)
    smooth = ndimage.gaussian_filter(field, sigma) if sigma > 0 else field
    mask = smooth > field.mean()
    if not mask.any() or mask.all():
        raise InitializationError("cannot threshold a constant image")
    return mask


INIT_METHODS = ("grid", "threshold")


def initial_mask(field, method="grid"):
    """Build a starting mask by name (``"grid"`` or ``"threshold"``)."""
    if method == "grid":
        return circle_grid_mask(np.shape(field))
    if method == "threshold":
        return threshold_mask(field)
    raise ValueError(f"unknown init method {method!r}; choose from {INIT_METHODS}")


# -- evolution -----------------------------------------------------------------

def fit_regions(law, mask, context):
    """Fit inner and outer models; returns ``(estimates, sums)``.

    Raises :class:`DegenerateRegionError` when either region is empty.
    """
    flat = np.ravel(mask)
    n_in = int(np.count_nonzero(flat))
    n_out = flat.size - n_in
    if n_in == 0 or n_out == 0:
        raise DegenerateRegionError("one of the two regions is empty")
    inner = flat.astype(np.float64) @ context["stats"]
    outer = context["total"] - inner
    estimates = (law.fit_sums(inner, n_in, context), law.fit_sums(outer, n_out, context))
    return estimates, (inner, outer)


def energy_report(law, phi, estimates, sums, context, lam, epsilon):
    terms = (
        law.energy_sums(sums[0], estimates[0], context),
        law.energy_sums(sums[1], estimates[1], context),
    )
    return EnergyReport(terms, contour_length(phi, epsilon), lam)


def initial_state(field, init_mask, config, context=None):
    """Build the state for ``init_mask``; ``field`` must already be on the model support."""
    law = config.speed_law
    if context is None:
        context = law.context(field)
    phi = init_phi(init_mask)
    estimates, sums = fit_regions(law, phi > 0, context)
    report = energy_report(law, phi, estimates, sums, context, config.lam, config.epsilon)
    return LevelSetState(phi=phi, iter=0, estimates=estimates, energy_trace=[report])


def _front_approaching(phi, iy, ix, update, horizon):
    """True if a pixel next to the zero crossing would reach it within ``horizon`` steps.

    A slow pixel can stay quiet for a while and still cross, so a quiet
    stretch alone does not mean the run is at rest.
    """
    inside = phi > 0
    padded = np.pad(inside, 1, mode="edge")
    h, w = inside.shape
    front = np.zeros_like(inside)
    for dy, dx in ((0, 1), (2, 1), (1, 0), (1, 2)):
        front |= padded[dy:dy + h, dx:dx + w] != inside
    p = phi[iy, ix]
    return bool(np.any(front[iy, ix] & (p * update < 0) & (horizon * np.abs(update) >= np.abs(p))))


def evolve_step(state, field, config, context=None):
    """Advance ``state`` by one explicit step and return the new state.

    A step that would empty either region is not applied; the returned
    state keeps the previous ``phi`` and carries the ``collapsed`` status.
    """
    law = config.speed_law
    if context is None:
        context = law.context(field)
    phi = state.phi
    eps = config.epsilon

    iy, ix = np.nonzero(np.abs(phi) <= eps)
    p = phi[iy, ix]
    delta = (1.0 + np.cos(np.pi * p / eps)) / (2.0 * eps)
    force = law.speed(field[iy, ix], state.estimates[0], state.estimates[1], context)
    dt_eff = config.dt
    if config.lam > 0:
        kappa = np.clip(curvature(phi, (iy, ix)), -MAX_CURVATURE, MAX_CURVATURE)
        force = force - config.lam * kappa
        dt_eff = min(dt_eff, DIFFUSION_LIMIT * eps / config.lam)
    rate = delta * force

    # saturate pixel by pixel: scaling the whole step by the largest rate
    # lets one outlier freeze the front
    update = np.clip(dt_eff * rate, -config.max_update, config.max_update)
    new_phi = phi.copy()
    new_phi[iy, ix] = p + update

    new_mask = new_phi > 0
    if not new_mask.any() or new_mask.all():
        return replace(state, status=COLLAPSED)

    changes = int(np.count_nonzero((p > 0) != (new_phi[iy, ix] > 0)))
    it = state.iter + 1
    last_change = it if changes else state.last_change
    stable = state.stable_steps + 1 if changes <= config.converge_tol else 0
    last_reinit = state.last_reinit
    status = RUNNING
    force_reinit = False
    if stable >= config.patience:
        # a quiet stretch only counts on a phi that is a distance function:
        # after sign changes, pixels just past the band edge have zero Dirac
        # weight until the next reinitialization
        settled = it - last_reinit >= config.patience
        fresh = last_reinit >= it - stable or last_change <= last_reinit
        if settled and fresh:
            if not _front_approaching(new_phi, iy, ix, update, HORIZON):
                status = CONVERGED
        elif not fresh:
            force_reinit = True
    if force_reinit or it % config.reinit_every == 0:
        new_phi = reinitialize(new_phi)
        last_reinit = it

    estimates, sums = fit_regions(law, new_mask, context)
    report = energy_report(law, new_phi, estimates, sums, context, config.lam, eps)
    return LevelSetState(
        phi=new_phi,
        iter=it,
        estimates=estimates,
        energy_trace=state.energy_trace + [report],
        band_changes=changes,
        status=status,
        stable_steps=stable,
        last_update=float(np.max(np.abs(update))) if update.size else 0.0,
        last_reinit=last_reinit,
        last_change=last_change,
    )


def segment(field, init_mask, config, polarity="inner"):
    """Evolve from ``init_mask`` until convergence, collapse or ``max_iter``.

    Returns a :class:`SegmentResult`; on collapse the mask is the last one
    before the collapsing step. With ``polarity="bright"`` the returned mask
    is whichever of the two regions has the larger mean intensity, instead
    of the ``phi > 0`` region.
    """
    if polarity not in ("inner", "bright"):
        raise ValueError(f"polarity must be 'inner' or 'bright', got {polarity!r}")
    field = check_field(field)
    init_mask = check_mask(init_mask, field.shape, name="init_mask")
    law = config.speed_law
    field = law.prepare_field(field)
    context = law.context(field)
    state = initial_state(field, init_mask, config, context)

    while state.status == RUNNING and state.iter < config.max_iter:
        state = evolve_step(state, field, config, context)

    status = state.status
    if status == RUNNING:
        status = MAX_ITER
    logger.debug("segment: %s after %d iterations", status, state.iter)
    mask = state.phi > 0
    flipped = polarity == "bright" and state.estimates[0].mean_y < state.estimates[1].mean_y
    return SegmentResult(
        mask=~mask if flipped else mask,
        trace=state.energy_trace,
        status=status,
        n_iter=state.iter,
        phi=state.phi,
        estimates=state.estimates,
        flipped=flipped,
    )
