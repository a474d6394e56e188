"""Critic match loss landscapes on a 2-D slice of critic parameter space.

The loss at plane coordinates ``(alpha, beta)`` is the critic match loss of
the weights ``center + alpha * delta + beta * eta`` on a frozen reference
batch: inputs and bootstrapped TD targets taken from one episode and never
recomputed while the grid is scanned.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import net
from .exceptions import RankError

PCA = "pca"
RANDOM = "random"


@dataclass(frozen=True)
class ProjectionPlane:
    """Affine plane ``center + alpha * delta + beta * eta``.

    ``explained_variance`` holds the top-2 variance fractions and
    ``spectrum`` the fractions of every principal component (PCA planes only).
    """

    center: np.ndarray
    delta: np.ndarray
    eta: np.ndarray
    kind: str = PCA
    explained_variance: tuple = None
    spectrum: np.ndarray = None
    seed: int = None

    def __post_init__(self):
        c, d, e = (np.asarray(v, dtype=np.float64) for v in (self.center, self.delta, self.eta))
        if not c.shape == d.shape == e.shape or c.ndim != 1:
            raise ValueError("center, delta and eta must be vectors of one length")
        if abs(np.linalg.norm(d) - 1) > 1e-12 or abs(np.linalg.norm(e) - 1) > 1e-12 or abs(d @ e) > 1e-12:
            raise ValueError("delta and eta must be orthonormal")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "eta", e)

    @property
    def dim(self):
        return self.center.shape[0]

    def point(self, alpha, beta):
        return self.center + alpha * self.delta + beta * self.eta

    def recentered(self, center):
        return replace(self, center=np.asarray(center, dtype=np.float64))


def _fix_sign(v):
    # Largest-magnitude component positive, so directions do not depend on
    # the sign convention of the SVD routine.
    return -v if v[np.argmax(np.abs(v))] < 0 else v


def _orthonormalize(a, b):
    d = a / np.linalg.norm(a)
    e = b - (b @ d) * d
    e = e - (e @ d) * d
    return d, e / np.linalg.norm(e)


def pca_plane(trajectory, rtol=1e-10):
    """Top-2 principal directions of the episode-end weights.

    The trajectory is mean-centered before the SVD; the plane center is the
    last recorded weight vector.  Raises :class:`RankError` when the
    centered trajectory does not span two directions.
    """
    W = np.asarray(getattr(trajectory, "matrix", trajectory), dtype=np.float64)
    if W.ndim != 2 or W.shape[0] < 3:
        raise RankError(f"PCA needs at least 3 weight vectors, got {W.shape[0] if W.ndim == 2 else 0}")
    X = W - W.mean(axis=0)
    _, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0:
        raise RankError("weight trajectory is constant (rank 0)")
    if s.size < 2 or s[1] <= rtol * s[0]:
        raise RankError("weight trajectory has rank 1: all episode-end weights lie on one line")
    var = s ** 2
    spectrum = var / var.sum()
    delta, eta = _orthonormalize(_fix_sign(Vt[0]), _fix_sign(Vt[1]))
    return ProjectionPlane(center=W[-1].copy(), delta=delta, eta=eta, kind=PCA,
                           explained_variance=(float(spectrum[0]), float(spectrum[1])),
                           spectrum=spectrum)


def random_plane(dim, seed, center=None):
    """Two standard-normal directions, Gram-Schmidt orthonormalized."""
    if dim < 2:
        raise ValueError("random plane needs dim >= 2")
    rng = np.random.default_rng(seed)
    while True:
        a = rng.standard_normal(dim)
        b = rng.standard_normal(dim)
        residual = b - (b @ a) / (a @ a) * a
        if np.linalg.norm(residual) > 1e-8 * np.linalg.norm(b):
            break
    delta, eta = _orthonormalize(a, b)
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=np.float64)
    return ProjectionPlane(center=center, delta=delta, eta=eta, kind=RANDOM, seed=seed)


def project_path(trajectory, plane):
    """Plane coordinates ``(alpha_k, beta_k)`` of every trajectory vector."""
    W = np.atleast_2d(np.asarray(getattr(trajectory, "matrix", trajectory), dtype=np.float64))
    if W.shape[1] != plane.dim:
        raise ValueError(f"trajectory width {W.shape[1]} does not match plane dimension {plane.dim}")
    D = W - plane.center
    return np.column_stack([D @ plane.delta, D @ plane.eta])


@dataclass(frozen=True)
class ReferenceBatch:
    inputs: np.ndarray
    targets: np.ndarray
    episode: int = None
    gamma: float = None

    def __post_init__(self):
        x = np.array(self.inputs, dtype=np.float64)
        y = np.array(self.targets, dtype=np.float64)
        if x.ndim != 2 or y.shape != (x.shape[0],) or x.shape[0] == 0:
            raise ValueError("reference batch needs N x d inputs and N targets with N >= 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("reference batch contains non-finite values")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    def __len__(self):
        return self.targets.shape[0]


def critic_outputs(params, inputs):
    """Critic output for every row of ``inputs``."""
    return np.tanh(0.5 * (inputs @ params.W1.T)) @ params.W2[0]


def build_reference_batch(episode_log, critic, gamma):
    """Frozen (input, target) pairs of one episode.

    The pair for transition ``t`` is the critic input ``x(t-1) + u(t-1)`` and
    the target ``r(t) + gamma * J_ref(x(t) + u(t))`` with ``J_ref`` the given
    critic, so the residual reproduces the TD error with ``J(t-1)`` as the
    prediction.
    """
    states, u = episode_log.states, episode_log.u
    if states.shape[0] < 2:
        raise ValueError(f"episode {episode_log.episode} has no transition to build a batch from")
    X = np.hstack([states, u])
    targets = episode_log.r[1:] + gamma * critic_outputs(critic, X[1:])
    return ReferenceBatch(X[:-1], targets, episode=episode_log.episode, gamma=gamma)


def match_loss(weights, batch, shape):
    """``mean(0.5 * (y - J_w(x))**2)`` over the reference batch."""
    params = weights if isinstance(weights, net.MlpParams) else net.unflatten(weights, shape)
    if params.W1.shape[1] != batch.inputs.shape[1]:
        raise ValueError("critic input width does not match the batch")
    resid = batch.targets - critic_outputs(params, batch.inputs)
    with np.errstate(over="ignore", invalid="ignore"):
        # overflow shows up as inf and is handled as a saturated cell by the grid
        return float(np.mean(0.5 * resid * resid))


@dataclass(frozen=True)
class GridSpec:
    alpha_min: float
    alpha_max: float
    beta_min: float
    beta_max: float
    n_alpha: int = 51
    n_beta: int = 51

    def __post_init__(self):
        if not (self.alpha_max > self.alpha_min and self.beta_max > self.beta_min):
            raise ValueError("grid max must exceed min on both axes")
        for n in (self.n_alpha, self.n_beta):
            if n < 3 or n % 2 == 0:
                raise ValueError("grid counts must be odd and >= 3")

    @staticmethod
    def _axis(lo, hi, n):
        # i / (n - 1) keeps coincident lattice points bitwise equal when n is refined
        return np.array([lo + (hi - lo) * (i / (n - 1)) for i in range(n)])

    @property
    def alphas(self):
        return self._axis(self.alpha_min, self.alpha_max, self.n_alpha)

    @property
    def betas(self):
        return self._axis(self.beta_min, self.beta_max, self.n_beta)

    @property
    def cell_area(self):
        return ((self.alpha_max - self.alpha_min) / (self.n_alpha - 1)
                * (self.beta_max - self.beta_min) / (self.n_beta - 1))

    @classmethod
    def around(cls, path, span_factor=1.2, n_alpha=51, n_beta=51):
        """Symmetric spans of ``span_factor`` times the largest path coordinate."""
        path = np.atleast_2d(np.asarray(path, dtype=np.float64))
        half = span_factor * np.max(np.abs(path), axis=0) if path.size else np.zeros(2)
        half = np.where(half > 0, half, 1.0)
        return cls(-half[0], half[0], -half[1], half[1], n_alpha, n_beta)


@dataclass
class LossGrid:
    """Loss sampled on a plane lattice; ``loss[i, j]`` is at ``(alphas[j], betas[i])``."""

    spec: GridSpec
    loss: np.ndarray
    L_star: float
    plane: ProjectionPlane
    path: np.ndarray = None
    path_episodes: list = None
    saturated: np.ndarray = None
    reference_episode: int = None
    meta: dict = field(default_factory=dict)

    @property
    def alphas(self):
        return self.spec.alphas

    @property
    def betas(self):
        return self.spec.betas


def _grid_row(plane, batch, shape, alphas, beta):
    row = np.empty(alphas.shape[0])
    for j, a in enumerate(alphas):
        row[j] = match_loss(plane.point(a, beta), batch, shape)
    return row


def evaluate_grid(plane, batch, spec, shape, trajectory=None, workers=1):
    """Sample the match loss on every lattice point of ``spec``.

    Rows are independent; ``workers > 1`` evaluates them on a thread pool
    and gives the same matrix as the sequential loop.  Non-finite cells are
    replaced by ten times the largest finite value and flagged.
    """
    if plane.dim != shape.n_params:
        raise ValueError(f"plane dimension {plane.dim} does not match critic size {shape.n_params}")
    alphas, betas = spec.alphas, spec.betas
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda b: _grid_row(plane, batch, shape, alphas, b), betas))
    else:
        rows = [_grid_row(plane, batch, shape, alphas, b) for b in betas]
    loss = np.vstack(rows)
    saturated = ~np.isfinite(loss)
    sentinel = None
    if saturated.any():
        finite = loss[~saturated]
        sentinel = 10.0 * float(finite.max()) if finite.size else 1.0
        loss[saturated] = sentinel
    L_star = match_loss(plane.center, batch, shape)
    path = episodes = None
    if trajectory is not None:
        path = project_path(trajectory, plane)
        episodes = list(getattr(trajectory, "episodes", range(1, path.shape[0] + 1)))
    meta = {"saturated_cells": int(saturated.sum()), "sentinel": sentinel}
    return LossGrid(spec=spec, loss=loss, L_star=L_star, plane=plane, path=path, path_episodes=episodes,
                    saturated=saturated, reference_episode=batch.episode, meta=meta)


def final_landscape(trajectory, log, shape, gamma, plane=None, spec=None, span_factor=1.2,
                    n_alpha=51, n_beta=51, workers=1):
    """Landscape of the reference episode ``log`` around the last recorded critic."""
    plane = plane if plane is not None else pca_plane(trajectory)
    critic = net.unflatten(plane.center, shape)
    batch = build_reference_batch(log, critic, gamma)
    if spec is None:
        spec = GridSpec.around(project_path(trajectory, plane), span_factor, n_alpha, n_beta)
    return evaluate_grid(plane, batch, spec, shape, trajectory=trajectory, workers=workers)


def snapshot(trajectory, k, plane, log, shape, gamma, spec=None, span_factor=1.2,
             n_alpha=51, n_beta=51, workers=1):
    """Landscape re-centered at the end-of-episode critic of trajectory row ``k``.

    The directions of ``plane`` are kept (it should come from the whole
    trajectory); the reference batch is episode ``log`` with targets from the
    critic at ``k``.
    """
    W = np.asarray(getattr(trajectory, "matrix", trajectory))
    if not 0 <= k < W.shape[0]:
        raise IndexError(f"trajectory row {k} out of range (0..{W.shape[0] - 1})")
    local = plane.recentered(W[k])
    critic = net.unflatten(W[k], shape)
    batch = build_reference_batch(log, critic, gamma)
    if spec is None:
        spec = GridSpec.around(project_path(trajectory, local), span_factor, n_alpha, n_beta)
    return evaluate_grid(local, batch, spec, shape, trajectory=trajectory, workers=workers)
