"""Run directory persistence.

Layout::

    config.json                 materialized configuration snapshot
    summary.json                survival counts, statuses, network shapes
    weights.csv                 episode,w0..w{P-1}: episode-end critic vectors
    params.json                 initial and final actor/critic weights
    episodes/episode_NNNN.jsonl one JSON record per step (first line: metadata)
    perf.json, rollout.csv      frozen-policy evaluation
    landscape/<tag>/            grid.csv, path.csv, plane.json, plane_vectors.csv,
                                indices.json, plot scripts
    manifest.json               sha256 of every other file

Floats in CSV files are written with 17 significant digits and JSON floats
use the shortest round-trip representation, so every value reads back
bit-for-bit.  Non-finite JSON values are stored as ``null``.
"""

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import net
from .adhdp import EpisodeLog, WeightTrajectory
from .exceptions import CriticLandscapeError
from .landscape import GridSpec, LossGrid, ProjectionPlane

MANIFEST = "manifest.json"


class ArtifactExistsError(CriticLandscapeError, OSError):
    """An artifact exists with different content and ``force`` was not given."""


class MissingArtifactError(CriticLandscapeError, FileNotFoundError):
    pass


def fmt(x):
    return format(float(x), ".17g")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def json_text(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def csv_text(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(c if isinstance(c, str) else fmt(c) for c in row) for row in rows)
    return "\n".join(lines) + "\n"


def read_csv(path):
    """``(header, float matrix)`` of a CSV written by :func:`csv_text`."""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"missing file {path}")
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        body = fh.read()
    if not body.strip():
        return header, np.zeros((0, len(header)))
    return header, np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"missing file {path}")
    with open(path) as fh:
        return json.load(fh)


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class RunDirectory:
    """Write-once view of a run directory.

    :meth:`write` leaves identical files untouched and refuses to replace a
    file with different content unless ``force`` is set.
    """

    def __init__(self, root, force=False):
        self.root = Path(root)
        self.force = force

    def path(self, rel):
        return self.root / rel

    def write(self, rel, text):
        target = self.path(rel)
        data = text.encode()
        if target.exists():
            if target.read_bytes() == data:
                return False
            if not self.force:
                raise ArtifactExistsError(f"{target} exists with different content (use --force to replace)")
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        return True

    def files(self):
        if not self.root.is_dir():
            return []
        return sorted(p.relative_to(self.root).as_posix() for p in self.root.rglob("*")
                      if p.is_file() and p.name != MANIFEST)

    def update_manifest(self):
        """Rewrite the checksum manifest; it always tracks the current files."""
        entries = {rel: sha256(self.path(rel)) for rel in self.files()}
        self.path(MANIFEST).write_text(json_text({"files": entries}))
        return entries

    def verify_manifest(self):
        """List of files whose checksum no longer matches the manifest."""
        manifest = read_json(self.path(MANIFEST))["files"]
        bad = [rel for rel, digest in manifest.items()
               if not self.path(rel).is_file() or sha256(self.path(rel)) != digest]
        return bad + [rel for rel in self.files() if rel not in manifest]


# ---------------------------------------------------------------------------
# Training artifacts
# ---------------------------------------------------------------------------

def state_names(system):
    if system == "cartpole":
        return ["psi", "psi_dot", "x", "x_dot"]
    return ["theta1", "theta2", "theta3", "omega1", "omega2", "omega3"]


def _shape_dict(shape):
    return {"n_inputs": shape.n_inputs, "n_hidden": shape.n_hidden, "n_outputs": shape.n_outputs,
            "output_activation": shape.output_activation}


def _params_dict(p):
    return {"W1": p.W1, "W2": p.W2}


def episode_text(log):
    meta = {"episode": log.episode, "status": log.status, "steps": len(log), "critic_lr": log.critic_lr}
    lines = [json.dumps(_clean(meta), sort_keys=True, allow_nan=False)]
    for t in range(log.states.shape[0]):
        rec = {"t": t, "state": log.states[t], "u": log.u[t], "applied": log.applied[t], "r": log.r[t],
               "J": log.J[t], "J_prev": log.J_prev[t], "e_c": log.e_c[t], "critic_loss": log.critic_loss[t]}
        lines.append(json.dumps(_clean(rec), sort_keys=True, allow_nan=False))
    return "\n".join(lines) + "\n"


def episode_file(k):
    return f"episodes/episode_{k:04d}.jsonl"


def write_training(rd, cfg, art):
    """Persist a finished training run to ``rd``."""
    rd.write("config.json", cfg.to_json())
    for lg in art.logs:
        rd.write(episode_file(lg.episode), episode_text(lg))
    P = art.critic_shape.n_params
    rows = [[str(k)] + list(w) for k, w in zip(art.trajectory.episodes, art.trajectory.weights)]
    rd.write("weights.csv", csv_text(["episode"] + [f"w{i}" for i in range(P)], rows))
    rd.write("params.json", json_text({
        "critic_shape": _shape_dict(art.critic_shape), "actor_shape": _shape_dict(art.actor_shape),
        "initial_critic": _params_dict(art.initial_critic), "initial_actor": _params_dict(art.initial_actor),
        "final_critic": _params_dict(art.final_critic), "final_actor": _params_dict(art.final_actor),
    }))
    rd.write("summary.json", json_text({
        "system": cfg.system, "seed": cfg.seed, "episodes_run": len(art.logs),
        "survival": art.survival, "status": [lg.status for lg in art.logs],
        "stopped_early": art.stopped_early, "stop_reason": art.stop_reason,
        "final_critic_lr": art.final_critic_lr,
        "state_names": state_names(cfg.system),
    }))
    rd.update_manifest()


@dataclass
class Run:
    """A training run read back from disk."""

    root: Path
    config: object
    critic_shape: net.MlpShape
    actor_shape: net.MlpShape
    trajectory: WeightTrajectory
    final_critic: net.MlpParams
    final_actor: net.MlpParams
    summary: dict

    def log(self, episode):
        return read_episode(self.root / episode_file(episode))


def _shape(d):
    return net.MlpShape(d["n_inputs"], d["n_hidden"], d["n_outputs"], d["output_activation"])


def _params(d):
    return net.MlpParams(np.array(d["W1"], dtype=np.float64), np.array(d["W2"], dtype=np.float64))


def _nan(v):
    return np.nan if v is None else v


def read_episode(path):
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"missing episode log {path}")
    with open(path) as fh:
        meta = json.loads(fh.readline())
        recs = [json.loads(line) for line in fh if line.strip()]
    col = lambda k: np.array([[_nan(v) for v in r[k]] for r in recs], dtype=np.float64)  # noqa: E731
    sca = lambda k: np.array([_nan(r[k]) for r in recs], dtype=np.float64)  # noqa: E731
    return EpisodeLog(episode=meta["episode"], states=col("state"), u=col("u"), applied=col("applied"),
                      r=sca("r"), J=sca("J"), J_prev=sca("J_prev"), e_c=sca("e_c"),
                      critic_loss=sca("critic_loss"), status=meta["status"],
                      critic_lr=_nan(meta["critic_lr"]))


def load_run(root):
    root = Path(root)
    if not (root / "config.json").is_file():
        raise MissingArtifactError(f"{root} is not a run directory (no config.json)")
    cfg = config_mod.from_dict(read_json(root / "config.json"))
    params = read_json(root / "params.json")
    _, W = read_csv(root / "weights.csv")
    traj = WeightTrajectory()
    for row in W:
        traj.append(int(row[0]), row[1:])
    return Run(root=root, config=cfg, critic_shape=_shape(params["critic_shape"]),
               actor_shape=_shape(params["actor_shape"]), trajectory=traj,
               final_critic=_params(params["final_critic"]), final_actor=_params(params["final_actor"]),
               summary=read_json(root / "summary.json"))


# ---------------------------------------------------------------------------
# Landscape artifacts
# ---------------------------------------------------------------------------

def landscape_tag(projection, seed, reference_episode):
    head = "pca" if projection == "pca" else f"random-seed{seed}"
    tail = "final" if reference_episode is None else f"episode{reference_episode}"
    return f"{head}_{tail}"


def write_landscape(rd, tag, grid, extra):
    base = f"landscape/{tag}"
    A, B = np.meshgrid(grid.alphas, grid.betas)  # row-major: beta outer, alpha inner
    rows = zip(A.ravel(), B.ravel(), grid.loss.ravel())
    rd.write(f"{base}/grid.csv", csv_text(["alpha", "beta", "loss"], rows))
    path_rows = [[str(e), a, b] for e, (a, b) in zip(grid.path_episodes, grid.path)]
    rd.write(f"{base}/path.csv", csv_text(["episode", "alpha", "beta"], path_rows))
    pl = grid.plane
    s = grid.spec
    info = {
        "kind": pl.kind, "seed": pl.seed, "explained_variance": pl.explained_variance,
        "spectrum": pl.spectrum, "n_params": pl.dim, "center_norm": float(np.linalg.norm(pl.center)),
        "L_star": grid.L_star,
        "reference_episode": grid.reference_episode,
        "grid": {"alpha_min": s.alpha_min, "alpha_max": s.alpha_max, "beta_min": s.beta_min,
                 "beta_max": s.beta_max, "n_alpha": s.n_alpha, "n_beta": s.n_beta},
        "saturated_cells": grid.meta.get("saturated_cells", 0), "sentinel": grid.meta.get("sentinel"),
    }
    info.update(extra)
    rd.write(f"{base}/plane.json", json_text(info))
    rd.write(f"{base}/plane_vectors.csv",
             csv_text(["center", "delta", "eta"], np.column_stack([pl.center, pl.delta, pl.eta])))


def read_landscape(root, tag):
    """Rebuild the :class:`LossGrid` stored under ``landscape/<tag>``."""
    base = Path(root) / "landscape" / tag
    if not base.is_dir():
        raise MissingArtifactError(f"no landscape {tag!r} in {root} (run the landscape command first)")
    info = read_json(base / "plane.json")
    g = info["grid"]
    spec = GridSpec(g["alpha_min"], g["alpha_max"], g["beta_min"], g["beta_max"], g["n_alpha"], g["n_beta"])
    _, data = read_csv(base / "grid.csv")
    if data.shape[0] != spec.n_alpha * spec.n_beta:
        raise ValueError(f"{base / 'grid.csv'} has {data.shape[0]} rows, expected {spec.n_alpha * spec.n_beta}")
    loss = data[:, 2].reshape(spec.n_beta, spec.n_alpha)
    sentinel = info.get("sentinel")
    saturated = loss == sentinel if sentinel is not None else np.zeros(loss.shape, dtype=bool)
    _, vec = read_csv(base / "plane_vectors.csv")
    ev = info.get("explained_variance")
    plane = ProjectionPlane(vec[:, 0], vec[:, 1], vec[:, 2], kind=info["kind"],
                            explained_variance=tuple(ev) if ev is not None else None,
                            spectrum=np.array(info["spectrum"]) if info.get("spectrum") is not None else None,
                            seed=info.get("seed"))
    _, path = read_csv(base / "path.csv")
    return LossGrid(spec=spec, loss=loss, L_star=info["L_star"], plane=plane, path=path[:, 1:],
                    path_episodes=[int(e) for e in path[:, 0]], saturated=saturated,
                    reference_episode=info.get("reference_episode"), meta=info)
