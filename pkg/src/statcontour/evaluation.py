"""FPF/TPF scoring, the benchmark sweep and its aggregation."""

import csv
import io
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .energy import SpeedLaw
from .exceptions import EvaluationError
from .levelset import EvolveConfig, initial_mask, segment
from .synth import NOISE_TYPES, calibrate, corrupt, make_phantom
from .validation import check_mask

SWEEP_HEADER = (
    "noise", "D", "functional", "seed", "fpf", "tpf",
    "iterations", "final_energy", "collapsed",
)
AGGREGATE_HEADER = (
    "noise", "D", "functional", "mean_fpf", "std_fpf", "mean_tpf", "std_tpf", "n",
)

DEFAULT_D_VALUES = (0.125, 0.25, 0.5, 1.0)
DEFAULT_FUNCTIONALS = ("poisson", "rayleigh", "gaussian", "chanvese")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_masks(cls, seg, gt):
        gt = check_mask(gt, name="gt")
        seg = check_mask(seg, gt.shape, name="seg")
        tp = int(np.count_nonzero(seg & gt))
        fp = int(np.count_nonzero(seg & ~gt))
        fn = int(np.count_nonzero(~seg & gt))
        return cls(tp, fp, gt.size - tp - fp - fn, fn)

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpf(self):
        if self.tp + self.fn == 0:
            raise EvaluationError("ground truth has no foreground pixel")
        return self.tp / (self.tp + self.fn)

    @property
    def fpf(self):
        if self.fp + self.tn == 0:
            raise EvaluationError("ground truth has no background pixel")
        return self.fp / (self.fp + self.tn)


def fpf_tpf(seg, gt):
    """Return ``(fpf, tpf)``; FPF is normalized by the background size."""
    counts = ConfusionCounts.from_masks(seg, gt)
    return counts.fpf, counts.tpf


@dataclass(frozen=True)
class SweepRow:
    noise: str
    D: float
    functional: str
    seed: int
    fpf: float
    tpf: float
    iterations: int
    final_energy: float
    collapsed: bool
    initial_energy: float = float("nan")
    status: str = ""

    @property
    def key(self):
        return (self.noise, self.D, self.functional, self.seed)

    def csv_fields(self):
        return (
            self.noise, repr(float(self.D)), self.functional, str(self.seed),
            repr(float(self.fpf)), repr(float(self.tpf)), str(self.iterations),
            repr(float(self.final_energy)), str(int(self.collapsed)),
        )


class SweepResult:
    """Rows of a sweep, kept sorted by (noise, D, functional, seed)."""

    def __init__(self, rows):
        self.rows = sorted(rows, key=lambda r: r.key)
        for r in self.rows:
            if not (0.0 <= r.fpf <= 1.0 and 0.0 <= r.tpf <= 1.0):
                raise EvaluationError(f"fraction out of range in row {r}")

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __add__(self, other):
        return SweepResult(self.rows + list(other.rows))

    def to_csv(self, path=None):
        """Write the per-run CSV; returns the text when ``path`` is None."""
        return _write_csv(SWEEP_HEADER, [r.csv_fields() for r in self.rows], path)


def _write_csv(header, rows, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if path is None:
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def read_sweep_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != SWEEP_HEADER:
            raise ValueError(f"unexpected sweep header {header}")
        rows = [
            SweepRow(
                noise=n, D=float(d), functional=f, seed=int(s), fpf=float(fp),
                tpf=float(tp), iterations=int(it), final_energy=float(e),
                collapsed=bool(int(c)),
            )
            for n, d, f, s, fp, tp, it, e, c in reader
        ]
    return SweepResult(rows)


def cell_seed(base_seed, noise, D, realization):
    """Integer seed of one noisy image, spawned from ``base_seed``.

    The key uses the noise index and D in micro-units, so a cell's image does
    not depend on which other cells are in the sweep.
    """
    key = (NOISE_TYPES.index(noise), int(round(D * 1e6)), int(realization))
    ss = np.random.SeedSequence(int(base_seed), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _as_laws(functionals):
    return [f if isinstance(f, SpeedLaw) else SpeedLaw.from_name(f) for f in functionals]


def _run_cell(spec, labels, gt, D, realization, laws, config, init):
    fg = calibrate(spec.noise, spec.bg_param, D)
    seed = cell_seed(spec.base_seed, spec.noise, D, realization)
    image = corrupt(labels, spec.noise, fg, spec.bg_param, seed)
    start = initial_mask(image, init)
    rows = []
    for law in laws:
        cfg = replace(config, speed_law=law)
        result = segment(image, start, cfg, polarity="bright")
        fpf, tpf = fpf_tpf(result.mask, gt)
        rows.append(SweepRow(
            noise=spec.noise, D=float(D), functional=law.name, seed=seed,
            fpf=fpf, tpf=tpf, iterations=result.n_iter,
            final_energy=result.trace[-1].total, collapsed=result.collapsed,
            initial_energy=result.trace[0].total, status=result.status,
        ))
    return rows


def run_sweep(spec, D_values=DEFAULT_D_VALUES, functionals=DEFAULT_FUNCTIONALS,
              config=None, init="threshold", n_jobs=1):
    """Segment ``spec.realizations`` noisy images per D with every functional.

    All functionals start from the same initial mask of a given image. The
    foreground estimate of each run is the brighter of the two regions.
    Collapsed runs stay in the result with ``collapsed=True``.
    """
    config = EvolveConfig() if config is None else config
    laws = _as_laws(functionals)
    if not laws:
        raise ValueError("need at least one functional")
    D_values = [float(d) for d in D_values]
    if any(d < 0 for d in D_values):
        raise ValueError("D values must be non-negative")
    labels, gt = make_phantom(spec)
    jobs = (
        delayed(_run_cell)(spec, labels, gt, D, r, laws, config, init)
        for D in D_values
        for r in range(spec.realizations)
    )
    cells = Parallel(n_jobs=n_jobs)(jobs)
    return SweepResult([row for cell in cells for row in cell])


@dataclass(frozen=True)
class AggregateRow:
    noise: str
    D: float
    functional: str
    mean_fpf: float
    std_fpf: float
    mean_tpf: float
    std_tpf: float
    n: int

    def csv_fields(self):
        return (
            self.noise, repr(float(self.D)), self.functional,
            repr(self.mean_fpf), repr(self.std_fpf),
            repr(self.mean_tpf), repr(self.std_tpf), str(self.n),
        )


def aggregate(result):
    """Mean and population std of FPF and TPF per (noise, D, functional)."""
    rows = list(result)
    if not rows:
        raise EvaluationError("cannot aggregate an empty sweep")
    groups = {}
    for r in rows:
        groups.setdefault((r.noise, r.D, r.functional), []).append(r)
    out = []
    for (noise, D, functional), members in sorted(groups.items()):
        fpf = np.array([m.fpf for m in members])
        tpf = np.array([m.tpf for m in members])
        out.append(AggregateRow(
            noise, D, functional,
            float(fpf.mean()), float(fpf.std()),
            float(tpf.mean()), float(tpf.std()), len(members),
        ))
    return out


def aggregate_to_csv(table, path=None):
    return _write_csv(AGGREGATE_HEADER, [r.csv_fields() for r in table], path)


def lookup(table, noise, D, functional):
    """The aggregate row of one group."""
    for r in table:
        if r.noise == noise and r.D == float(D) and r.functional == functional:
            return r
    raise KeyError((noise, D, functional))
