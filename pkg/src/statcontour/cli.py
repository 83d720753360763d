"""Command-line interface: ``statcontour {generate,segment,sweep,evaluate}``.

Exit codes: 0 success, 1 input error, 2 no convergence within max_iter,
3 region collapse.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields, replace

from .energy import SpeedLaw, bhattacharyya
from .evaluation import (
    DEFAULT_D_VALUES,
    DEFAULT_FUNCTIONALS,
    aggregate,
    aggregate_to_csv,
    cell_seed,
    fpf_tpf,
    read_sweep_csv,
    run_sweep,
)
from .exceptions import StatContourError
from .fileio import read_image, read_mask, to_view, write_grid, write_mask, write_pgm
from .levelset import COLLAPSED, CONVERGED, INIT_METHODS, EvolveConfig, initial_mask, segment
from .synth import BenchmarkSpec, calibrate, clean_image, corrupt, make_phantom, natural_params

log = logging.getLogger("statcontour")

EXIT_OK, EXIT_INPUT, EXIT_MAX_ITER, EXIT_COLLAPSE = 0, 1, 2, 3

MODELS = ("gauss", "poisson", "rayleigh", "chanvese")
ESTIMATORS = ("ml", "moments")


def _floats(text):
    return tuple(float(v) for v in str(text).replace(",", " ").split())


@dataclass
class RunConfig:
    """Every setting of a run; each has a default so a file can be partial."""

    noise: str = "poisson"
    noises: tuple = ("poisson", "rayleigh")
    bg_param: tuple = None
    d: float = 0.5
    d_values: tuple = DEFAULT_D_VALUES
    realizations: int = 10
    seed: int = 0
    width: int = 128
    height: int = 128
    model: str = "gauss"
    estimator: str = "ml"
    functionals: tuple = DEFAULT_FUNCTIONALS
    lam: float = 2.0
    dt: float = 0.5
    epsilon: float = 1.5
    max_iter: int = 2000
    reinit_every: int = 20
    converge_tol: int = 0
    init: str = "grid"
    sweep_init: str = "threshold"
    polarity: str = "inner"
    n_jobs: int = 1
    out: str = "."

    _parsers = {
        "noises": lambda v: tuple(s for s in str(v).replace(",", " ").split()),
        "functionals": lambda v: tuple(s for s in str(v).replace(",", " ").split()),
        "bg_param": _floats,
        "d_values": _floats,
    }
    _aliases = {"lambda": "lam", "base_seed": "seed", "d-values": "d_values"}

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    def update(self, values):
        """Return a copy with ``values`` (strings or typed) applied."""
        known = {f.name: f for f in fields(self)}
        changes = {}
        for key, value in values.items():
            if value is None:
                continue
            name = self._aliases.get(key, key).replace("-", "_")
            if name not in known:
                raise ValueError(f"unknown config key {key!r}")
            parse = self._parsers.get(name)
            if parse is not None:
                value = parse(value)
            else:
                default = getattr(type(self), name)
                if isinstance(default, bool):
                    value = str(value).lower() in ("1", "true", "yes")
                elif isinstance(default, int):
                    value = int(value)
                elif isinstance(default, float):
                    value = float(value)
                else:
                    value = str(value)
            changes[name] = value
        return replace(self, **changes)

    def speed_law(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.model == "chanvese":
            return SpeedLaw("chanvese")
        return SpeedLaw(self.estimator, self.model)

    def evolve_config(self, law=None):
        return EvolveConfig(
            speed_law=law if law is not None else self.speed_law(),
            lam=self.lam, dt=self.dt, epsilon=self.epsilon, max_iter=self.max_iter,
            reinit_every=self.reinit_every, converge_tol=self.converge_tol,
        )

    def benchmark(self, noise=None, target_D=None):
        noise = noise or self.noise
        # a background given for one noise type does not carry over to another
        bg = self.bg_param if noise == self.noise else None
        return BenchmarkSpec(
            width=self.width, height=self.height, noise=noise, bg_param=bg,
            target_D=self.d if target_D is None else target_D,
            realizations=self.realizations, base_seed=self.seed,
        )


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            values[key.strip()] = value.strip()
    return values


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _shared(p):
    p.add_argument("--config", metavar="PATH", help="flat key=value file; flags override it")
    p.add_argument("--seed", type=int, help="base random seed")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")


def _evolve_flags(p, with_model=True):
    if with_model:
        p.add_argument("--model", choices=MODELS, help="region functional")
        p.add_argument("--estimator", choices=ESTIMATORS,
                       help="parameter estimator (moments: Rayleigh only)")
    p.add_argument("--lambda", dest="lam", type=float, help="contour-length weight")
    p.add_argument("--dt", type=float, help="time step before the CFL clamp")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="iteration cap")


def build_parser():
    parser = _Parser(prog="statcontour", description="Statistical region-based active contours.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a phantom, its ground truth and noisy realizations")
    _shared(g)
    g.add_argument("--noise", choices=("poisson", "rayleigh", "gaussian"), help="contaminating noise")
    g.add_argument("--d", type=float, help="target Bhattacharyya distance")
    g.add_argument("--realizations", type=int, help="number of noisy images")
    g.add_argument("--view", action="store_true", help="also write 16-bit graymaps for viewing")

    s = sub.add_parser("segment", help="segment one image")
    _shared(s)
    s.add_argument("image", help="P5/P2 graymap or text grid")
    _evolve_flags(s)
    s.add_argument("--init", choices=INIT_METHODS, help="initial contour")
    s.add_argument("--polarity", choices=("inner", "bright"),
                   help="return the phi>0 region or the brighter region")

    w = sub.add_parser("sweep", help="benchmark every functional over D values and realizations")
    _shared(w)
    _evolve_flags(w, with_model=False)
    w.add_argument("--d-values", dest="d_values", metavar="CSV", help="comma-separated D values")
    w.add_argument("--realizations", type=int, help="noisy images per D")
    w.add_argument("--noises", metavar="CSV", help="noise types, e.g. poisson,rayleigh")
    w.add_argument("--functionals", metavar="CSV", help="e.g. poisson,rayleigh,gaussian,chanvese")
    w.add_argument("--n-jobs", dest="n_jobs", type=int, help="worker processes")

    e = sub.add_parser("evaluate", help="score a mask, or aggregate a results CSV")
    _shared(e)
    e.add_argument("seg", nargs="?", help="segmentation mask")
    e.add_argument("gt", nargs="?", help="ground-truth mask")
    e.add_argument("--results", metavar="CSV", help="per-run sweep CSV to aggregate")
    return parser


_NOT_CONFIG = {"command", "config", "verbose", "image", "view", "seg", "gt", "results"}


def resolve_config(args):
    cfg = RunConfig()
    if args.config:
        cfg = cfg.update(read_config_file(args.config))
    flags = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    return cfg.update(flags)


def _outdir(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def cmd_generate(cfg, view=False):
    spec = cfg.benchmark()
    out = _outdir(cfg)
    labels, gt = make_phantom(spec)
    fg = calibrate(spec.noise, spec.bg_param, spec.target_D)
    achieved = bhattacharyya(
        spec.noise, natural_params(spec.noise, fg), natural_params(spec.noise, spec.bg_param)
    )
    write_grid(os.path.join(out, "phantom.txt"), clean_image(labels, spec.noise, fg, spec.bg_param))
    write_mask(os.path.join(out, "gt.pgm"), gt)
    files = []
    for r in range(spec.realizations):
        seed = cell_seed(spec.base_seed, spec.noise, spec.target_D, r)
        image = corrupt(labels, spec.noise, fg, spec.bg_param, seed)
        name = f"noisy_{r:03d}.txt"
        write_grid(os.path.join(out, name), image)
        if view:
            write_pgm(os.path.join(out, f"noisy_{r:03d}.pgm"), to_view(image), maxval=65535)
        files.append({"file": name, "seed": seed})
    manifest = {
        "noise": spec.noise,
        "width": spec.width,
        "height": spec.height,
        "bg_param": list(spec.bg_param),
        "fg_param": list(fg),
        "target_D": spec.target_D,
        "achieved_D": achieved,
        "base_seed": spec.base_seed,
        "shapes": [{"kind": s.kind, "center": list(s.center), "size": s.size} for s in spec.shapes],
        "phantom": "phantom.txt",
        "ground_truth": "gt.pgm",
        "realizations": files,
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def cmd_segment(cfg, image_path):
    image = read_image(image_path)
    config = cfg.evolve_config()
    start = initial_mask(image, cfg.init)
    result = segment(image, start, config, polarity=cfg.polarity)
    out = _outdir(cfg)
    stem = os.path.splitext(os.path.basename(image_path))[0]
    write_mask(os.path.join(out, f"{stem}_mask.pgm"), result.mask)
    with open(os.path.join(out, f"{stem}_energy.csv"), "w") as fh:
        fh.write("iteration,region_in,region_out,boundary,lambda,total\n")
        for i, rep in enumerate(result.trace):
            r_in, r_out = rep.region_terms
            fh.write(f"{i},{r_in!r},{r_out!r},{rep.boundary_term!r},{rep.lam!r},{rep.total!r}\n")
    log.info("%s after %d iterations", result.status, result.n_iter)
    if result.status == CONVERGED:
        return EXIT_OK
    if result.status == COLLAPSED:
        return EXIT_COLLAPSE
    return EXIT_MAX_ITER


PLOT_TEMPLATE = '''"""Plot FPF and TPF against D, one curve per functional.

Usage: python {script} [output.png]
"""
import csv
import os
import sys

import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
ROWS = list(csv.DictReader(open(os.path.join(HERE, "{aggregate}"))))
NOISES = {noises!r}

fig, axes = plt.subplots(len(NOISES), 2, figsize=(10, 4 * len(NOISES)), squeeze=False)
for i, noise in enumerate(NOISES):
    rows = [r for r in ROWS if r["noise"] == noise]
    for j, metric in enumerate(("fpf", "tpf")):
        ax = axes[i][j]
        for functional in sorted({{r["functional"] for r in rows}}):
            pts = sorted((float(r["D"]), float(r["mean_" + metric])) for r in rows
                         if r["functional"] == functional)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=functional)
        ax.set_xlabel("Bhattacharyya distance")
        ax.set_ylabel(metric.upper())
        ax.set_title(noise + " noise")
        ax.legend()
fig.tight_layout()
if len(sys.argv) > 1:
    fig.savefig(sys.argv[1])
else:
    plt.show()
'''


def cmd_sweep(cfg):
    out = _outdir(cfg)
    config = cfg.evolve_config(law=SpeedLaw.from_name("gaussian"))
    result = None
    for noise in cfg.noises:
        part = run_sweep(
            cfg.benchmark(noise=noise), cfg.d_values, cfg.functionals, config,
            init=cfg.sweep_init, n_jobs=cfg.n_jobs,
        )
        result = part if result is None else result + part
    if result is None or len(result) == 0:
        print("sweep produced no rows", file=sys.stderr)
        return EXIT_INPUT
    result.to_csv(os.path.join(out, "results.csv"))
    aggregate_to_csv(aggregate(result), os.path.join(out, "aggregate.csv"))
    with open(os.path.join(out, "plot_sweep.py"), "w") as fh:
        fh.write(PLOT_TEMPLATE.format(script="plot_sweep.py", aggregate="aggregate.csv",
                                      noises=list(cfg.noises)))
    return EXIT_OK


def cmd_evaluate(cfg, seg=None, gt=None, results=None):
    if results:
        table = aggregate(read_sweep_csv(results))
        text = aggregate_to_csv(table)
        if cfg.out and cfg.out != ".":
            aggregate_to_csv(table, os.path.join(_outdir(cfg), "aggregate.csv"))
        sys.stdout.write(text)
        return EXIT_OK
    if not (seg and gt):
        raise ValueError("evaluate needs SEG and GT masks, or --results")
    fpf, tpf = fpf_tpf(read_mask(seg), read_mask(gt))
    print(f"fpf,tpf\n{fpf!r},{tpf!r}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "generate":
            return cmd_generate(cfg, view=args.view)
        if args.command == "segment":
            return cmd_segment(cfg, args.image)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_evaluate(cfg, args.seg, args.gt, args.results)
    except (OSError, ValueError, StatContourError, ArithmeticError) as exc:
        print(f"statcontour: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
