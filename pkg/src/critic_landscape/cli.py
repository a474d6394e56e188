"""Command-line runner: train, landscape, indices, perf, plot and compare.

Exit codes: 0 success, 1 failed comparison checks, 2 validation error,
3 degeneracy or rank error, 4 I/O error.  Relative output paths are resolved
against ``$CRITIC_LANDSCAPE_ROOT`` when it is set.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from . import config as config_mod
from . import landscape as ls
from . import metrics, rundir
from .adhdp import train
from .exceptions import (BoundsError, ConfigError, DegeneracyError, FitError, RankError)
from .rundir import RunDirectory, json_text, load_run, read_json

ROOT_ENV = "CRITIC_LANDSCAPE_ROOT"
DEFAULT_TAG = "pca_final"

EXIT_OK, EXIT_CHECKS, EXIT_VALIDATION, EXIT_DEGENERATE, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("critic_landscape")


def resolve_root(path):
    path = Path(path)
    if path.is_absolute():
        return path
    base = os.environ.get(ROOT_ENV)
    return Path(base) / path if base else path


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args):
    cfg, raw = config_mod.load(args.config)
    out = args.output or raw.get("output_dir") or f"runs/{cfg.system}-seed{cfg.seed}"
    rd = RunDirectory(resolve_root(out), force=args.force)
    # Fail before the (possibly long) training if the snapshot would clash.
    rd.write("config.json", cfg.to_json())

    def progress(lg):
        if not args.quiet:
            print(f"episode {lg.episode:4d}: {len(lg):6d} steps ({lg.status})", flush=True)

    art = train(cfg.task, cfg.train, cfg.critic_hidden, cfg.actor_hidden, progress=progress)
    rundir.write_training(rd, cfg, art)
    if art.stopped_early:
        print(f"training stopped after episode {len(art.logs)} ({art.stop_reason})")
    print(f"run directory: {rd.root}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# landscape
# ---------------------------------------------------------------------------

def compute_landscape(run, projection, seed, reference, n_alpha, n_beta, span_factor, bounds, workers):
    """``(tag, LossGrid)`` for a loaded run."""
    traj = run.trajectory
    if len(traj) < 3:
        raise RankError(f"landscape needs a weight trajectory of length >= 3, got {len(traj)}")
    k_ref = config_mod.parse_reference(reference)
    if k_ref is None:
        row, episode = len(traj) - 1, traj.episodes[-1]
    else:
        if k_ref not in traj.episodes:
            raise ConfigError("reference", f"episode {k_ref} is not in the weight trajectory "
                                           f"(episodes {traj.episodes[0]}..{traj.episodes[-1]})")
        row, episode = traj.index_of(k_ref), k_ref
    if projection == ls.PCA:
        plane = ls.pca_plane(traj)
    else:
        plane = ls.random_plane(run.critic_shape.n_params, seed)
    plane = plane.recentered(traj[row])
    spec = None
    if any(b is not None for b in bounds):
        if any(b is None for b in bounds):
            raise ConfigError("grid", "give all four of --alpha-min/--alpha-max/--beta-min/--beta-max or none")
        try:
            spec = ls.GridSpec(*bounds, n_alpha, n_beta)
        except ValueError as exc:
            raise ConfigError("grid", str(exc)) from None
    log_ref = run.log(episode)
    grid = ls.snapshot(traj, row, plane, log_ref, run.critic_shape, run.config.train.gamma, spec=spec,
                       span_factor=span_factor, n_alpha=n_alpha, n_beta=n_beta, workers=workers)
    tag = rundir.landscape_tag(projection, seed, k_ref)
    return tag, grid


def cmd_landscape(args):
    run = load_run(resolve_root(args.run))
    d = run.config.landscape
    projection = args.projection or d["projection"]
    seed = args.seed if args.seed is not None else d["random_seed"]
    reference = args.reference or d["reference"]
    n_alpha = args.n_alpha or d["n_alpha"]
    n_beta = args.n_beta or d["n_beta"]
    span = args.span_factor or d["span_factor"]
    workers = args.workers or d["workers"]
    bounds = (args.alpha_min, args.alpha_max, args.beta_min, args.beta_max)
    tag, grid = compute_landscape(run, projection, seed, reference, n_alpha, n_beta, span, bounds, workers)
    rd = RunDirectory(run.root, force=args.force)
    rundir.write_landscape(rd, tag, grid, {"projection": projection, "reference": reference,
                                           "span_factor": span})
    rd.update_manifest()
    ev = grid.plane.explained_variance
    if ev is not None:
        print(f"explained variance: PC1 {ev[0]:.4f}, PC2 {ev[1]:.4f} (sum {ev[0] + ev[1]:.4f})")
    if grid.meta.get("saturated_cells"):
        print(f"warning: {grid.meta['saturated_cells']} saturated cells replaced by a sentinel")
    print(f"landscape {tag}: L* = {grid.L_star:.6g}, written to {rd.path('landscape/' + tag)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# indices / perf
# ---------------------------------------------------------------------------

def evaluate_run(run, horizon=None, gamma=None):
    cfg = run.config
    pc = metrics.PerfConfig(horizon=horizon or cfg.perf.horizon,
                            gamma=gamma if gamma is not None else cfg.perf.gamma)
    policy = metrics.actor_policy(run.final_actor, cfg.task)
    ro, value = metrics.evaluate_policy(policy, cfg.task, pc, cfg.eval_state)
    return pc, ro, value


def cmd_indices(args):
    run = load_run(resolve_root(args.run))
    grid = rundir.read_landscape(run.root, args.landscape)
    base = run.config.indices
    overrides = {k: getattr(args, k) for k in ("epsilon", "rho", "r_fit", "n_angles")
                 if getattr(args, k) is not None}
    try:
        icfg = metrics.IndexConfig(**{**base.__dict__, **overrides})
    except ValueError as exc:
        raise ConfigError("indices", str(exc)) from None
    surface = metrics.normalize_surface(grid)
    resolved = icfg.resolve(surface)
    idx = metrics.landscape_indices(surface, icfg)
    pc, ro, value = evaluate_run(run)
    result = {
        "system": run.config.system, "landscape": args.landscape,
        "sharpness": idx.sharpness, "basin_area": idx.basin_area, "log_kappa": idx.log_kappa,
        "indefinite": idx.indefinite, "normalized_cost": value,
        "iqr": surface.iqr, "L_star": grid.L_star,
        "epsilon": resolved.epsilon, "rho": resolved.rho, "r_fit": resolved.r_fit,
        "n_angles": resolved.n_angles, "horizon": pc.horizon, "perf_gamma": pc.gamma,
        "t_fail": ro.t_fail, "explained_variance": grid.plane.explained_variance,
    }
    rd = RunDirectory(run.root, force=args.force)
    rd.write(f"landscape/{args.landscape}/indices.json", json_text(result))
    rd.update_manifest()
    print(format_table([run.config.system], [result]))
    return EXIT_OK


def cmd_perf(args):
    run = load_run(resolve_root(args.run))
    pc, ro, value = evaluate_run(run, args.horizon, args.gamma)
    rd = RunDirectory(run.root, force=args.force)
    names = rundir.state_names(run.config.system)
    m = ro.controls.shape[1]
    rows = [[str(t)] + list(x) + list(u) + [c] for t, (x, u, c) in enumerate(zip(ro.states, ro.controls, ro.costs))]
    rd.write("rollout.csv", rundir.csv_text(["t"] + names + [f"u{i}" for i in range(m)] + ["cost"], rows))
    rd.write("perf.json", json_text({"normalized_cost": value, "horizon": pc.horizon, "gamma": pc.gamma,
                                     "t_fail": ro.t_fail, "steps": len(ro.costs),
                                     "initial_state": run.config.eval_state}))
    rd.update_manifest()
    fail = "no failure" if ro.t_fail is None else f"failure at step {ro.t_fail}"
    print(f"normalized cost J_H = {value:.6f} over H = {pc.horizon} ({fail})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

_LOAD = '''import csv
from pathlib import Path
import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent


def load(name):
    with open(HERE / name) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))


_, g = load("grid.csv")
alphas = np.unique(g[:, 0])
betas = np.unique(g[:, 1])
loss = g[:, 2].reshape(betas.size, alphas.size)
A, B = np.meshgrid(alphas, betas)
'''

_SURFACE = _LOAD + '''
fig = plt.figure(figsize=(7, 5))
ax = fig.add_subplot(projection="3d")
ax.plot_surface(A, B, loss, cmap="viridis", linewidth=0, antialiased=True)
ax.set_xlabel("alpha")
ax.set_ylabel("beta")
ax.set_zlabel("match loss")
ax.set_title("{title}")
fig.tight_layout()
fig.savefig(HERE / "surface.png", dpi=150)
'''

_CONTOUR = _LOAD + '''
fig, ax = plt.subplots(figsize=(6, 5))
cs = ax.contour(A, B, loss, levels={levels}, cmap="viridis")
ax.clabel(cs, inline=True, fontsize=7)
{path_layer}ax.plot([0.0], [0.0], "r*", markersize=12, label="center")
ax.set_xlabel("alpha")
ax.set_ylabel("beta")
ax.set_title("{title}")
ax.legend(loc="best")
fig.tight_layout()
fig.savefig(HERE / "contour.png", dpi=150)
'''

_PATH_LAYER = '''_, p = load("path.csv")
ax.plot(p[:, 1], p[:, 2], "-", color="0.4", linewidth=0.8, label="path")
dots = p[(p[:, 0] % {every} == 0) | (np.arange(len(p)) == 0)]
ax.plot(dots[:, 1], dots[:, 2], "o", color="k", markersize=3, label="every {every} episodes")
'''


def plot_scripts(title, path_length, every, levels=30):
    layer = _PATH_LAYER.format(every=every) if path_length > 1 else ""
    return (_SURFACE.format(title=title),
            _CONTOUR.format(title=title, levels=levels, path_layer=layer))


def cmd_plot(args):
    root = resolve_root(args.run)
    grid = rundir.read_landscape(root, args.landscape)
    if args.dot_every < 1:
        raise ConfigError("dot-every", "must be >= 1")
    title = f"{read_json(root / 'config.json')['system']} {args.landscape}"
    n = 0 if grid.path is None else grid.path.shape[0]
    if n <= 1:
        print("warning: weight path has fewer than 2 points; contour script omits the path layer")
    surface, contour = plot_scripts(title, n, args.dot_every)
    rd = RunDirectory(root, force=args.force)
    base = f"landscape/{args.landscape}"
    rd.write(f"{base}/plot_surface.py", surface)
    rd.write(f"{base}/plot_contour.py", contour)
    rd.update_manifest()
    print(f"wrote {rd.path(base + '/plot_surface.py')} and {rd.path(base + '/plot_contour.py')}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

ROWS = (("Sharpness", "sharpness"), ("Basin area", "basin_area"),
        ("Local anisotropy (log k)", "log_kappa"), ("Normalized cost", "normalized_cost"))


def _cell(v):
    if v is None:
        return "inf"
    return f"{v:.6g}"


def format_table(labels, results):
    rows = [("Index", list(labels))]
    rows += [(name, [_cell(r.get(key)) for r in results]) for name, key in ROWS]
    ev = [r.get("explained_variance") for r in results]
    if any(e is not None for e in ev):
        rows.append(("Explained variance (%)",
                     ["-" if e is None else f"{100 * e[0]:.1f}/{100 * e[1]:.1f}" for e in ev]))
    width = max(len(c) for _, cells in rows for c in cells) + 2
    return "\n".join(f"{name:<26}" + "".join(f"{c:>{width}}" for c in cells) for name, cells in rows)


def _num(v):
    return float("inf") if v is None else float(v)


def order_checks(converged, divergent, min_variance=0.85):
    """``[(description, passed)]`` for the expected converged-vs-divergent relations."""
    checks = [
        ("normalized cost: converged < divergent",
         _num(converged["normalized_cost"]) < _num(divergent["normalized_cost"])),
        ("log kappa: converged < divergent", _num(converged["log_kappa"]) < _num(divergent["log_kappa"])),
        ("basin area: converged < divergent", _num(converged["basin_area"]) < _num(divergent["basin_area"])),
    ]
    for label, r in (("converged", converged), ("divergent", divergent)):
        ev = r.get("explained_variance")
        total = None if ev is None else ev[0] + ev[1]
        checks.append((f"top-2 explained variance of {label} run >= {min_variance}",
                       total is not None and total >= min_variance))
    return checks


def cmd_compare(args):
    results, labels = [], []
    for run in (args.converged, args.divergent):
        root = resolve_root(run)
        path = root / "landscape" / args.landscape / "indices.json"
        results.append(read_json(path))
        labels.append(results[-1].get("system", root.name))
    print(format_table(labels, results))
    print()
    ok = True
    for desc, passed in order_checks(*results, min_variance=args.min_variance):
        ok &= passed
        print(f"[{'PASS' if passed else 'FAIL'}] {desc}")
    return EXIT_OK if ok else EXIT_CHECKS


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="critic-landscape",
                                description="ADHDP training and critic loss-landscape analysis.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train an actor-critic pair and write a run directory")
    t.add_argument("config", help="JSON configuration file")
    t.add_argument("-o", "--output", help=f"run directory (relative paths use ${ROOT_ENV})")
    t.add_argument("-q", "--quiet", action="store_true", help="do not print per-episode survival")
    t.add_argument("--force", action="store_true", help="replace differing artifacts")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("landscape", help="sample the critic match loss on a projection plane")
    g.add_argument("run")
    g.add_argument("--projection", choices=(ls.PCA, ls.RANDOM))
    g.add_argument("--seed", type=int, help="seed of the random plane")
    g.add_argument("--reference", help="'final' or 'episode=K'")
    g.add_argument("--n-alpha", type=int)
    g.add_argument("--n-beta", type=int)
    g.add_argument("--span-factor", type=float)
    for name in ("alpha-min", "alpha-max", "beta-min", "beta-max"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--workers", type=int, help="threads for grid rows")
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_landscape)

    i = sub.add_parser("indices", help="landscape indices and normalized cost")
    i.add_argument("run")
    i.add_argument("--landscape", default=DEFAULT_TAG, help="landscape tag (default %(default)s)")
    i.add_argument("--epsilon", type=float)
    i.add_argument("--rho", type=float)
    i.add_argument("--r-fit", type=float)
    i.add_argument("--n-angles", type=int)
    i.add_argument("--force", action="store_true")
    i.set_defaults(func=cmd_indices)

    f = sub.add_parser("perf", help="evaluate the frozen final policy")
    f.add_argument("run")
    f.add_argument("--horizon", type=int)
    f.add_argument("--gamma", type=float)
    f.add_argument("--force", action="store_true")
    f.set_defaults(func=cmd_perf)

    s = sub.add_parser("plot", help="write matplotlib scripts for a landscape")
    s.add_argument("run")
    s.add_argument("--landscape", default=DEFAULT_TAG)
    s.add_argument("--dot-every", type=int, default=10, help="episodes between path dots")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_plot)

    c = sub.add_parser("compare", help="side-by-side indices and order checks")
    c.add_argument("converged", help="run directory of the converged run")
    c.add_argument("divergent", help="run directory of the divergent run")
    c.add_argument("--landscape", default=DEFAULT_TAG)
    c.add_argument("--min-variance", type=float, default=0.85)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DegeneracyError, RankError, FitError, BoundsError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, ValueError) as exc:
        code = EXIT_IO if isinstance(exc, OSError) else EXIT_VALIDATION
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
