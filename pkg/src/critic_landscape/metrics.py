"""Landscape indices and the normalized finite-horizon performance index."""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import net
from .exceptions import BoundsError, DegeneracyError, DivergenceError, FitError, SingularityError


@dataclass
class NormalizedSurface:
    """``(L - L*) / IQR`` on the grid; ``values[i, j]`` sits at ``(alphas[j], betas[i])``."""

    values: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    iqr: float = 1.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        self.betas = np.asarray(self.betas, dtype=np.float64)
        if self.values.shape != (self.betas.size, self.alphas.size):
            raise ValueError("values must be shaped (len(betas), len(alphas))")

    @classmethod
    def from_function(cls, f, alphas, betas, center=(0.0, 0.0)):
        """Tabulate ``f(alpha, beta)`` directly as a normalized surface."""
        A, B = np.meshgrid(alphas, betas)
        return cls(f(A, B), alphas, betas, 1.0, center)

    @property
    def half_extent(self):
        return 0.5 * min(np.ptp(self.alphas), np.ptp(self.betas))

    @property
    def cell_area(self):
        return (np.ptp(self.alphas) / (self.alphas.size - 1)) * (np.ptp(self.betas) / (self.betas.size - 1))


@dataclass(frozen=True)
class IndexConfig:
    """Index parameters.  ``epsilon``/``r_fit`` of ``None`` resolve to a
    fraction of the grid half-extent (``r_fit`` no smaller than two cells of
    the coarser axis)."""

    epsilon: float = None
    rho: float = 0.5
    r_fit: float = None
    n_angles: int = 64
    epsilon_fraction: float = 0.05
    r_fit_fraction: float = 0.10

    def __post_init__(self):
        for name in ("epsilon", "r_fit"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.rho <= 0 or self.n_angles < 1:
            raise ValueError("rho and n_angles must be positive")
        if not (0 < self.epsilon_fraction <= 1 and 0 < self.r_fit_fraction <= 1):
            raise ValueError("fractions must lie in (0, 1]")

    def resolve(self, surface):
        h = surface.half_extent
        eps = self.epsilon if self.epsilon is not None else self.epsilon_fraction * h
        if self.r_fit is not None:
            r_fit = self.r_fit
        else:
            # at least two cells of the coarser axis so the fit has enough support
            spacing = max(np.ptp(surface.alphas) / (surface.alphas.size - 1),
                          np.ptp(surface.betas) / (surface.betas.size - 1))
            r_fit = max(self.r_fit_fraction * h, 2.0 * spacing)
        return IndexConfig(epsilon=eps, rho=self.rho, r_fit=r_fit, n_angles=self.n_angles,
                           epsilon_fraction=self.epsilon_fraction, r_fit_fraction=self.r_fit_fraction)


@dataclass(frozen=True)
class LandscapeIndices:
    sharpness: float
    basin_area: float
    log_kappa: float
    indefinite: bool


@dataclass(frozen=True)
class PerfConfig:
    horizon: int
    gamma: float = 0.99
    c_max: float = 1.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.c_max != 1.0:
            raise ValueError("c_max is the normalized worst case and must be 1")


def iqr(values):
    """Interquartile range with linear-interpolation quantiles (type 7)."""
    q75, q25 = np.percentile(values, [75, 25], method="linear")
    return float(q75 - q25)


def normalize_surface(grid):
    """Shift a :class:`LossGrid` by ``L*`` and scale by the IQR of the shift.

    Saturated cells are excluded from the quartiles.  Raises
    :class:`DegeneracyError` for a surface with zero IQR.
    """
    delta = np.asarray(grid.loss, dtype=np.float64) - grid.L_star
    mask = np.isfinite(delta)
    if getattr(grid, "saturated", None) is not None:
        mask &= ~grid.saturated
    if not mask.any():
        raise DegeneracyError("no finite cells on the surface")
    spread = iqr(delta[mask])
    if not spread > 0:
        raise DegeneracyError("loss surface has zero interquartile range (constant surface)")
    return NormalizedSurface(delta / spread, grid.alphas, grid.betas, spread, (0.0, 0.0))


def _interpolator(surface):
    return RegularGridInterpolator((surface.betas, surface.alphas), surface.values,
                                   method="linear", bounds_error=False, fill_value=np.nan)


def ring_values(surface, radius, n_angles):
    """Bilinear samples of the surface on ``n_angles`` rays at ``radius``."""
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    a = surface.center[0] + radius * np.cos(theta)
    b = surface.center[1] + radius * np.sin(theta)
    tol = 1e-12 * max(1.0, surface.half_extent)
    if (a.min() < surface.alphas[0] - tol or a.max() > surface.alphas[-1] + tol
            or b.min() < surface.betas[0] - tol or b.max() > surface.betas[-1] + tol):
        raise BoundsError(f"radius {radius} around {surface.center} leaves the grid")
    a = np.clip(a, surface.alphas[0], surface.alphas[-1])
    b = np.clip(b, surface.betas[0], surface.betas[-1])
    return _interpolator(surface)(np.column_stack([b, a]))


def sharpness(surface, cfg=IndexConfig()):
    """Largest normalized loss on the circle of radius ``epsilon`` around the center."""
    cfg = cfg.resolve(surface)
    return float(np.max(ring_values(surface, cfg.epsilon, cfg.n_angles)))


def basin_area(surface, cfg=IndexConfig()):
    """Cell count with normalized loss ``<= rho`` times the cell area.

    Every qualifying cell counts, connected to the center or not.
    """
    cfg = cfg.resolve(surface)
    return float(np.count_nonzero(surface.values <= cfg.rho) * surface.cell_area)


def fit_quadratic(surface, r_fit):
    """Least-squares coefficients ``(a, b, c, d, e, f0)`` of
    ``a x^2 + b y^2 + c x y + d x + e y + f0`` over cells within ``r_fit``."""
    A, B = np.meshgrid(surface.alphas - surface.center[0], surface.betas - surface.center[1])
    mask = A ** 2 + B ** 2 <= r_fit ** 2 * (1 + 1e-12)
    mask &= np.isfinite(surface.values)
    if mask.sum() < 6:
        raise FitError(f"only {int(mask.sum())} cells within r_fit={r_fit}; need at least 6")
    x, y, z = A[mask], B[mask], surface.values[mask]
    design = np.column_stack([x * x, y * y, x * y, x, y, np.ones_like(x)])
    coef, _, rank, _ = np.linalg.lstsq(design, z, rcond=None)
    if rank < 6:
        raise FitError(f"quadratic fit is rank deficient (rank {rank})")
    return coef


def anisotropy(surface, cfg=IndexConfig()):
    """``(log(lambda_max / lambda_min), indefinite)`` of the fitted 2x2 Hessian.

    A non-positive smallest eigenvalue gives ``(inf, True)``.
    """
    cfg = cfg.resolve(surface)
    a, b, c = fit_quadratic(surface, cfg.r_fit)[:3]
    lam = np.linalg.eigvalsh(np.array([[2 * a, c], [c, 2 * b]]))
    if lam[0] <= 0:
        return float("inf"), True
    return float(np.log(lam[1] / lam[0])), False


def landscape_indices(surface, cfg=IndexConfig()):
    log_kappa, indefinite = anisotropy(surface, cfg)
    return LandscapeIndices(sharpness(surface, cfg), basin_area(surface, cfg), log_kappa, indefinite)


def performance_index(costs, cfg, t_fail=None):
    """Normalized discounted cost over ``cfg.horizon`` steps, in [0, 1].

    Steps from ``t_fail`` on are charged ``c_max``; ``costs`` must cover
    every step before that.
    """
    H = cfg.horizon
    costs = np.asarray(costs, dtype=np.float64)
    if np.any(~np.isfinite(costs)) or np.any(costs < 0) or np.any(costs > 1):
        raise ValueError("stage costs must lie in [0, 1]")
    if t_fail is not None and not 0 <= t_fail <= H:
        raise ValueError(f"t_fail={t_fail} outside [0, {H}]")
    end = H if t_fail is None else t_fail
    if costs.shape[0] < end:
        raise ValueError(f"need {end} stage costs, got {costs.shape[0]}")
    c = np.full(H, cfg.c_max)
    c[:end] = costs[:end]
    weights = cfg.gamma ** np.arange(H)
    # same reduction for numerator and denominator: all-penalty gives exactly 1
    return float((weights * c).sum() / weights.sum())


@dataclass
class Rollout:
    states: np.ndarray
    controls: np.ndarray
    costs: np.ndarray
    t_fail: int = None


def actor_policy(actor, task):
    """Frozen actor mapped to plant controls the same way as in training."""
    def policy(state):
        u, _, _, _ = net.actor_forward(actor, state)
        return task.apply(u)
    return policy


def rollout(policy, task, horizon, initial_state):
    """Deterministic closed-loop run for up to ``horizon`` steps.

    Stops at the first failed state (``t_fail``); a plant blow-up counts as
    a failure at the step it would have produced.
    """
    x = np.asarray(initial_state, dtype=np.float64)
    states, controls, costs = [], [], []
    t_fail = None
    for t in range(horizon):
        if task.failed(x):
            t_fail = t
            break
        u = policy(x)
        states.append(x)
        controls.append(u)
        costs.append(task.cost(x, u))
        try:
            x = task.step(x, u)
        except (DivergenceError, SingularityError):
            t_fail = t + 1 if t + 1 < horizon else None
            break
    n = task.n_state
    return Rollout(np.array(states).reshape(-1, n), np.array(controls).reshape(-1, task.n_action),
                   np.array(costs), t_fail)


def evaluate_policy(policy, task, cfg, initial_state=None):
    """Roll out a frozen policy and return ``(rollout, normalized index)``.

    ``policy`` maps a state to a plant control; use :func:`actor_policy` for
    a trained actor.
    """
    x0 = task.initial_state(None) if initial_state is None else initial_state
    ro = rollout(policy, task, cfg.horizon, x0)
    return ro, performance_index(ro.costs, cfg, ro.t_fail)
