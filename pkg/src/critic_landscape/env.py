"""Cart-pole and rigid spacecraft attitude simulators.

States are plain float arrays with a fixed component order:

* cart-pole: ``[psi, psi_dot, x, x_dot]`` (pole angle from vertical in rad,
  its rate, cart position in m, cart velocity),
* spacecraft: ``[theta1, theta2, theta3, omega1, omega2, omega3]`` (3-2-1
  Euler angles in rad and body rates in rad/s).

Every step function is pure: the input array is never modified.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .exceptions import DivergenceError, SingularityError

CARTPOLE = "cartpole"
SPACECRAFT = "spacecraft"
SYSTEMS = (CARTPOLE, SPACECRAFT)

CARTPOLE_STATE_DIM = 4
SPACECRAFT_STATE_DIM = 6

DEFAULT_INERTIA = ((1.0, 0.1, 0.1), (0.1, 0.1, 0.1), (0.1, 0.1, 0.9))


@dataclass(frozen=True)
class CartPoleParams:
    """Physical constants of the cart-pole benchmark (SI units)."""

    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    cart_friction: float = 0.0005
    pole_friction: float = 0.000002
    gravity: float = 9.8
    force_magnitude: float = 10.0
    dt: float = 0.02

    def __post_init__(self):
        if min(self.cart_mass, self.pole_mass, self.half_length) <= 0:
            raise ValueError("masses and half_length must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.cart_friction < 0 or self.pole_friction < 0:
            raise ValueError("friction coefficients must be non-negative")
        if self.force_magnitude <= 0:
            raise ValueError("force_magnitude must be positive")


@dataclass(frozen=True)
class SpacecraftParams:
    """Rigid-body attitude model.

    ``singularity_margin`` is the smallest ``|cos(theta2)|`` accepted by the
    Euler-angle kinematics.
    """

    inertia: tuple = DEFAULT_INERTIA
    dt: float = 0.01
    torque_bound: float = 1.0
    singularity_margin: float = 1e-3

    def __post_init__(self):
        J = self.inertia_matrix
        if J.shape != (3, 3):
            raise ValueError("inertia must be 3x3")
        if not np.allclose(J, J.T, rtol=0, atol=1e-12):
            raise ValueError("inertia must be symmetric")
        if np.linalg.eigvalsh(J).min() <= 0:
            raise ValueError("inertia must be positive definite")
        if self.dt <= 0 or self.torque_bound <= 0:
            raise ValueError("dt and torque_bound must be positive")
        if not 0 < self.singularity_margin < 1:
            raise ValueError("singularity_margin must lie in (0, 1)")

    @property
    def inertia_matrix(self):
        return np.array(self.inertia, dtype=float)

    @property
    def inertia_inverse(self):
        return np.linalg.inv(self.inertia_matrix)


@dataclass(frozen=True)
class RewardParams:
    """Quadratic stage-cost weights ``x'Px + u'Qu``.

    ``P`` and ``Q`` are scalars or per-component diagonals.  ``cost_bound``
    normalizes the stage cost into [0, 1]; ``None`` means "the cost at the
    failure boundary", resolved with :func:`failure_cost_bound`.
    """

    P: object = 0.01
    Q: object = 0.0
    cost_bound: object = None

    def __post_init__(self):
        if np.any(np.asarray(self.P, dtype=float) < 0) or np.any(np.asarray(self.Q, dtype=float) < 0):
            raise ValueError("P and Q must be non-negative")
        if self.cost_bound is not None and self.cost_bound <= 0:
            raise ValueError("cost_bound must be positive")


@dataclass(frozen=True)
class FailureLimits:
    """Absolute bound per state component; ``inf`` disables a component."""

    bounds: tuple = field(default=())

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        if b.ndim != 1 or b.size == 0 or np.any(~(b > 0)):
            raise ValueError("failure bounds must be a non-empty vector of positive values")

    @property
    def array(self):
        return np.asarray(self.bounds, dtype=float)

    @classmethod
    def cartpole(cls, angle_deg=12.0, position=2.4):
        return cls((np.deg2rad(angle_deg), np.inf, position, np.inf))

    @classmethod
    def spacecraft(cls, angle=1.0, rate=1.0):
        return cls((angle,) * 3 + (rate,) * 3)


# ---------------------------------------------------------------------------
# Cart-pole
# ---------------------------------------------------------------------------

@njit(cache=True)
def _cartpole_accel(psi, psi_dot, x_dot, force, mc, m, l, muc, mup, g):
    cos_psi = np.cos(psi)
    sin_psi = np.sin(psi)
    total = mc + m
    inner = (-force - m * l * psi_dot * psi_dot * sin_psi + muc * np.sign(x_dot)) / total
    num = g * sin_psi + cos_psi * inner - mup * psi_dot / (m * l)
    psi_acc = num / (l * (4.0 / 3.0 - m * cos_psi * cos_psi / total))
    x_acc = (force + m * l * (psi_dot * psi_dot * sin_psi - psi_acc * cos_psi)
             - muc * np.sign(x_dot)) / total
    return psi_acc, x_acc


def cartpole_accelerations(state, force, params):
    """Return ``(psi_ddot, x_ddot)`` at ``state`` under horizontal ``force``."""
    p = params
    psi, psi_dot, _, x_dot = np.asarray(state, dtype=float)
    return _cartpole_accel(psi, psi_dot, x_dot, float(force), p.cart_mass, p.pole_mass,
                           p.half_length, p.cart_friction, p.pole_friction, p.gravity)


def cartpole_step(state, force, params):
    """Advance the cart-pole by one explicit Euler step of ``params.dt``.

    All derivatives are evaluated at the incoming state.  Raises
    :class:`DivergenceError` if the result is not finite.
    """
    state = np.asarray(state, dtype=float)
    if state.shape != (CARTPOLE_STATE_DIM,):
        raise ValueError(f"cart-pole state must have shape (4,), got {state.shape}")
    if not np.all(np.isfinite(state)):
        raise DivergenceError("non-finite cart-pole state", state)
    if abs(force) > params.force_magnitude * (1 + 1e-12):
        raise ValueError(f"|force| {abs(force)} exceeds force_magnitude {params.force_magnitude}")
    psi_acc, x_acc = cartpole_accelerations(state, force, params)
    dt = params.dt
    out = np.array([
        state[0] + dt * state[1],
        state[1] + dt * psi_acc,
        state[2] + dt * state[3],
        state[3] + dt * x_acc,
    ])
    if not np.all(np.isfinite(out)):
        raise DivergenceError("cart-pole integration produced non-finite values", out)
    return out


def cartpole_initial_state(rng, max_angle_deg=3.0):
    """Pole angle uniform in +-``max_angle_deg``, everything else at rest."""
    psi = rng.uniform(-max_angle_deg, max_angle_deg) * np.pi / 180.0
    return np.array([psi, 0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# Spacecraft
# ---------------------------------------------------------------------------

@njit(cache=True)
def _spacecraft_rhs(s, torque, J, J_inv, margin):
    t1 = s[0]
    t2 = s[1]
    w1 = s[3]
    w2 = s[4]
    w3 = s[5]
    c2 = np.cos(t2)
    out = np.empty(6)
    if abs(c2) < margin:
        out[:] = np.nan
        return out, False
    s1 = np.sin(t1)
    c1 = np.cos(t1)
    s2 = np.sin(t2)
    out[0] = (c2 * w1 + s1 * s2 * w2 + c1 * s2 * w3) / c2
    out[1] = (c1 * c2 * w2 - s1 * c2 * w3) / c2
    out[2] = (s1 * w2 + c1 * w3) / c2
    w = s[3:]
    h = J @ w
    gyro = np.array([w2 * h[2] - w3 * h[1], w3 * h[0] - w1 * h[2], w1 * h[1] - w2 * h[0]])
    out[3:] = J_inv @ (torque - gyro)
    return out, True


@njit(cache=True)
def _spacecraft_rk4(s, torque, J, J_inv, dt, margin):
    k1, ok1 = _spacecraft_rhs(s, torque, J, J_inv, margin)
    k2, ok2 = _spacecraft_rhs(s + 0.5 * dt * k1, torque, J, J_inv, margin)
    k3, ok3 = _spacecraft_rhs(s + 0.5 * dt * k2, torque, J, J_inv, margin)
    k4, ok4 = _spacecraft_rhs(s + dt * k3, torque, J, J_inv, margin)
    out = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return out, ok1 and ok2 and ok3 and ok4


def spacecraft_derivatives(state, torque, params):
    """Time derivative ``[theta_dot, omega_dot]`` of the attitude state."""
    state = np.asarray(state, dtype=float)
    torque = np.asarray(torque, dtype=float)
    rhs, ok = _spacecraft_rhs(state, torque, params.inertia_matrix, params.inertia_inverse,
                              params.singularity_margin)
    if not ok:
        raise SingularityError(f"|cos(theta2)| below {params.singularity_margin} at theta2={state[1]}")
    return rhs


def spacecraft_step(state, torque, params):
    """Advance the attitude state by one classical RK4 step of ``params.dt``.

    ``torque`` is held constant over the step.  Raises
    :class:`SingularityError` if any stage lands within the pitch singularity
    margin and :class:`DivergenceError` on non-finite output.
    """
    state = np.asarray(state, dtype=float)
    torque = np.asarray(torque, dtype=float)
    if state.shape != (SPACECRAFT_STATE_DIM,):
        raise ValueError(f"spacecraft state must have shape (6,), got {state.shape}")
    if torque.shape != (3,):
        raise ValueError(f"torque must have shape (3,), got {torque.shape}")
    if not np.all(np.isfinite(state)):
        raise DivergenceError("non-finite spacecraft state", state)
    if np.any(np.abs(torque) > params.torque_bound * (1 + 1e-12)):
        raise ValueError(f"torque {torque} exceeds torque_bound {params.torque_bound}")
    if abs(np.cos(state[1])) < params.singularity_margin:
        raise SingularityError(f"theta2={state[1]} is at the Euler-angle singularity")
    out, ok = _spacecraft_rk4(state, torque, params.inertia_matrix, params.inertia_inverse,
                              params.dt, params.singularity_margin)
    if not ok:
        raise SingularityError("RK4 stage crossed the Euler-angle singularity")
    if not np.all(np.isfinite(out)):
        raise DivergenceError("spacecraft integration produced non-finite values", out)
    return out


def spacecraft_initial_state(theta0=(0.1, -0.1, 0.05), omega0=(0.0, 0.0, 0.0)):
    return np.concatenate([np.asarray(theta0, dtype=float), np.asarray(omega0, dtype=float)])


def pd_control(state, Kp, Kd, torque_bound=np.inf):
    """PD attitude law toward the zero state: ``u = -(Kp theta + Kd omega)``, clamped."""
    state = np.asarray(state, dtype=float)
    u = -(np.asarray(Kp, dtype=float) @ state[:3] + np.asarray(Kd, dtype=float) @ state[3:])
    return np.clip(u, -torque_bound, torque_bound)


def angular_momentum(state, params):
    return params.inertia_matrix @ np.asarray(state, dtype=float)[3:]


def kinetic_energy(state, params):
    w = np.asarray(state, dtype=float)[3:]
    return 0.5 * w @ params.inertia_matrix @ w


# ---------------------------------------------------------------------------
# Failure and cost
# ---------------------------------------------------------------------------

def check_failure(state, limits):
    """True iff some component strictly exceeds its bound in absolute value."""
    state = np.asarray(state, dtype=float)
    bounds = limits.array
    if state.shape != bounds.shape:
        raise ValueError(f"state shape {state.shape} does not match limits {bounds.shape}")
    return bool(np.any(np.abs(state) > bounds))


def _quadratic(v, weight):
    v = np.asarray(v, dtype=float)
    w = np.broadcast_to(np.asarray(weight, dtype=float), v.shape)
    return float(np.sum(w * v * v))


def spacecraft_reward(state, torque, reward):
    """Raw training signal ``x'Px + u'Qu`` with a zero reference."""
    return _quadratic(state, reward.P) + _quadratic(torque, reward.Q)


def failure_cost_bound(reward, limits, torque_bound):
    """Stage cost with every state at its failure bound and full torque."""
    bounds = limits.array
    if not np.all(np.isfinite(bounds)):
        raise ValueError("failure-boundary cost needs finite bounds on every state")
    bound = _quadratic(bounds, reward.P) + _quadratic(np.full(3, torque_bound), reward.Q)
    if bound <= 0:
        raise ValueError("failure-boundary cost is zero; set cost_bound explicitly")
    return bound


def stage_cost(state, action, system, reward=None, limits=None, torque_bound=1.0):
    """Normalized stage cost in [0, 1].

    Spacecraft: ``clip((x'Px + u'Qu) / cost_bound, 0, 1)``.  Cart-pole: the
    failure indicator (1 when ``limits`` are exceeded, else 0).
    """
    if system == CARTPOLE:
        if limits is None:
            raise ValueError("cart-pole cost needs failure limits")
        return 1.0 if check_failure(state, limits) else 0.0
    if system == SPACECRAFT:
        reward = reward or RewardParams()
        bound = reward.cost_bound
        if bound is None:
            if limits is None:
                raise ValueError("cost_bound is unset and no limits were given")
            bound = failure_cost_bound(reward, limits, torque_bound)
        c = spacecraft_reward(state, action, reward) / bound
        return float(min(max(c, 0.0), 1.0))
    raise ValueError(f"unknown system {system!r}")


# ---------------------------------------------------------------------------
# Control tasks: action mapping, training signal, failure and cost per system
# ---------------------------------------------------------------------------

BANG_BANG = "bang-bang"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class CartPoleTask:
    """Cart-pole balancing with the binary failure signal.

    The actor output ``u`` in (-1, 1) becomes ``+-force_magnitude`` (bang-bang,
    ``u >= 0`` pushes right) or ``force_magnitude * u`` (continuous).
    """

    params: CartPoleParams = CartPoleParams()
    limits: FailureLimits = FailureLimits.cartpole()
    action_mapping: str = BANG_BANG
    initial_angle_deg: float = 3.0

    name = CARTPOLE
    n_state = CARTPOLE_STATE_DIM
    n_action = 1

    def __post_init__(self):
        if self.action_mapping not in (BANG_BANG, CONTINUOUS):
            raise ValueError(f"unknown action mapping {self.action_mapping!r}")
        if self.limits.array.shape != (CARTPOLE_STATE_DIM,):
            raise ValueError("cart-pole limits need 4 bounds")

    def apply(self, u):
        f = self.params.force_magnitude
        if self.action_mapping == BANG_BANG:
            return np.array([f if u[0] >= 0 else -f])
        return np.array([f * u[0]])

    def step(self, state, applied):
        return cartpole_step(state, applied[0], self.params)

    def failed(self, state):
        return check_failure(state, self.limits)

    def reward(self, state, applied, failed):
        return -1.0 if failed else 0.0

    def cost(self, state, applied):
        return stage_cost(state, applied, CARTPOLE, limits=self.limits)

    def initial_state(self, rng):
        return cartpole_initial_state(rng, self.initial_angle_deg)


@dataclass(frozen=True)
class SpacecraftTask:
    """Attitude stabilization with the quadratic state-error signal.

    The applied torque is ``torque_bound * u`` per axis.
    """

    params: SpacecraftParams = SpacecraftParams()
    limits: FailureLimits = FailureLimits.spacecraft()
    reward_params: RewardParams = RewardParams()
    theta0: tuple = (0.1, -0.1, 0.05)
    omega0: tuple = (0.0, 0.0, 0.0)

    name = SPACECRAFT
    n_state = SPACECRAFT_STATE_DIM
    n_action = 3

    def __post_init__(self):
        if self.limits.array.shape != (SPACECRAFT_STATE_DIM,):
            raise ValueError("spacecraft limits need 6 bounds")

    @property
    def cost_bound(self):
        if self.reward_params.cost_bound is not None:
            return float(self.reward_params.cost_bound)
        return failure_cost_bound(self.reward_params, self.limits, self.params.torque_bound)

    def apply(self, u):
        return self.params.torque_bound * np.asarray(u, dtype=float)

    def step(self, state, applied):
        return spacecraft_step(state, applied, self.params)

    def failed(self, state):
        return check_failure(state, self.limits)

    def reward(self, state, applied, failed):
        return spacecraft_reward(state, applied, self.reward_params)

    def cost(self, state, applied):
        c = spacecraft_reward(state, applied, self.reward_params) / self.cost_bound
        return float(min(max(c, 0.0), 1.0))

    def initial_state(self, rng=None):
        return spacecraft_initial_state(self.theta0, self.omega0)
