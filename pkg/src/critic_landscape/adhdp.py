"""Online ADHDP training: TD error, per-step inner epochs, episodes, runs.

One environment transition drives ``epochs_per_step`` epochs.  Each epoch
first moves the critic down the gradient of ``e_c^2 / 2`` with
``e_c = r(t) + gamma J(t) - J(t-1)`` (``J(t-1)`` is frozen), then moves the
actor down the gradient of ``e_a^2 / 2`` with ``e_a = J(t)``, chained
through the freshly updated critic.  There is no replay, no target network
and no exploration noise.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import net
from .env import BANG_BANG, CONTINUOUS
from .exceptions import DivergenceError, SingularityError

log = logging.getLogger(__name__)

COMPLETED = "completed"
FAILED = "failed"
DIVERGED = "diverged"

STOP_NON_FINITE = "non-finite-weights"
STOP_NORM_LIMIT = "weight-norm-limit"


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.95
    critic_lr: float = 1e-2
    actor_lr: float = 1e-3
    epochs_per_step: int = 30
    episodes: int = 100
    max_steps_per_episode: int = 5000
    lr_scale_ratio: float = 1.0
    lr_scale_bound: float = 1.0
    seed: int = 0
    action_mapping: str = BANG_BANG
    init_scale: float = 0.5
    weight_norm_limit: float = None

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.critic_lr < 0 or self.actor_lr < 0:
            raise ValueError("learning rates must be non-negative")
        if self.epochs_per_step < 1 or self.max_steps_per_episode < 1 or self.episodes < 0:
            raise ValueError("epochs_per_step and max_steps_per_episode must be >= 1, episodes >= 0")
        if self.lr_scale_ratio < 1 or self.lr_scale_bound < 1:
            raise ValueError("lr_scale_ratio and lr_scale_bound must be >= 1")
        if self.action_mapping not in (BANG_BANG, CONTINUOUS):
            raise ValueError(f"unknown action mapping {self.action_mapping!r}")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.weight_norm_limit is not None and not self.weight_norm_limit > 0:
            raise ValueError("weight_norm_limit must be positive or None")


@dataclass
class Agent:
    critic: net.MlpParams
    actor: net.MlpParams
    critic_lr: float
    actor_lr: float

    def copy(self):
        return Agent(self.critic.copy(), self.actor.copy(), self.critic_lr, self.actor_lr)


@dataclass
class EpisodeLog:
    """Per-step records of one episode, stored column-wise.

    Row 0 is the reset state: its action and ``J`` are the networks' output
    before any update, and ``r``, ``J_prev``, ``e_c`` and ``critic_loss`` are
    NaN.  Row ``t >= 1`` holds the state reached by transition ``t``, the
    reward of that transition, and the action/``J``/``e_c`` after that step's
    inner epochs.  ``applied[t]`` is the control sent to the plant from row
    ``t`` (never applied on the terminal row).
    """

    episode: int
    states: np.ndarray
    u: np.ndarray
    applied: np.ndarray
    r: np.ndarray
    J: np.ndarray
    J_prev: np.ndarray
    e_c: np.ndarray
    critic_loss: np.ndarray
    status: str
    critic_lr: float = float("nan")

    def __len__(self):
        return self.states.shape[0] - 1

    @property
    def t(self):
        return np.arange(self.states.shape[0])

    @property
    def t_end(self):
        return len(self)

    @property
    def failed(self):
        return self.status != COMPLETED


@dataclass
class WeightTrajectory:
    """Episode-end critic parameter vectors, one row per executed episode."""

    episodes: list = field(default_factory=list)
    weights: list = field(default_factory=list)

    def append(self, episode, vector):
        vector = np.asarray(vector, dtype=np.float64)
        if self.weights and vector.shape != self.weights[0].shape:
            raise ValueError("all trajectory vectors must share one length")
        self.episodes.append(int(episode))
        self.weights.append(vector.copy())

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, i):
        return self.weights[i]

    @property
    def matrix(self):
        if not self.weights:
            return np.zeros((0, 0))
        return np.vstack(self.weights)

    def index_of(self, episode):
        return self.episodes.index(int(episode))


@dataclass
class RunArtifacts:
    config: TrainConfig
    critic_shape: net.MlpShape
    actor_shape: net.MlpShape
    logs: list
    trajectory: WeightTrajectory
    initial_critic: net.MlpParams
    initial_actor: net.MlpParams
    final_critic: net.MlpParams
    final_actor: net.MlpParams
    final_critic_lr: float
    stopped_early: bool = False
    stop_reason: str = None

    @property
    def survival(self):
        return [len(lg) for lg in self.logs]


def td_error(r, J_t, J_prev, gamma):
    """``[r + gamma J(t)] - J(t-1)``."""
    return (r + gamma * J_t) - J_prev


def adapt_critic_lr(current, ratio, bound, base):
    """One multiplicative learning-rate increase, capped at ``base * bound``."""
    if ratio < 1 or bound < 1:
        raise ValueError("ratio and bound must be >= 1")
    return min(current * ratio, base * bound)


@njit(cache=True)
def _train_step_kernel(Wc1, Wc2, Wa1, Wa2, s, r, J_prev, gamma, lc, la, epochs):
    # Updates the four weight arrays in place.  e_c_hist[k] is the TD error
    # seen at the start of epoch k; e_c_hist[epochs] is the residual after
    # the last update.
    n_state = s.shape[0]
    n_action = Wa2.shape[0]
    x = np.empty(n_state + n_action)
    x[:n_state] = s
    e_c_hist = np.empty(epochs + 1)
    for k in range(epochs):
        u, _, _, _ = net.actor_forward_kernel(Wa1, Wa2, s)
        x[n_state:] = u
        J, _, _ = net.critic_forward_kernel(Wc1, Wc2, x)
        e_c = r + gamma * J - J_prev
        e_c_hist[k] = e_c
        dW1, dW2 = net.critic_gradients_kernel(Wc1, Wc2, x, e_c, gamma)
        Wc1 -= lc * dW1
        Wc2 -= lc * dW2
        e_a, _, _ = net.critic_forward_kernel(Wc1, Wc2, x)
        dA1, dA2 = net.actor_gradients_kernel(Wa1, Wa2, Wc1, Wc2, s, e_a)
        Wa1 -= la * dA1
        Wa2 -= la * dA2
    u, _, _, _ = net.actor_forward_kernel(Wa1, Wa2, s)
    x[n_state:] = u
    J, _, _ = net.critic_forward_kernel(Wc1, Wc2, x)
    e_c_hist[epochs] = r + gamma * J - J_prev
    ok = np.all(np.isfinite(Wc1)) and np.all(np.isfinite(Wc2)) and \
        np.all(np.isfinite(Wa1)) and np.all(np.isfinite(Wa2)) and np.isfinite(J)
    return u, J, e_c_hist, ok


@dataclass
class StepResult:
    agent: Agent
    u: np.ndarray
    J: float
    e_c: float
    epoch_e_c: np.ndarray

    @property
    def epoch_losses(self):
        return 0.5 * self.epoch_e_c ** 2


def train_step(agent, state, r, J_prev, gamma, epochs):
    """Run the inner epochs for one observed transition into ``state``.

    Returns a :class:`StepResult` holding a new agent; the input agent is not
    modified.  ``u`` and ``J`` are the post-update action and critic output
    at ``state``; ``e_c`` is the post-update TD residual.  Raises
    :class:`DivergenceError` if any weight becomes non-finite.
    """
    new = agent.copy()
    s = np.asarray(state, dtype=np.float64)
    u, J, hist, ok = _train_step_kernel(new.critic.W1, new.critic.W2, new.actor.W1, new.actor.W2,
                                        s, float(r), float(J_prev), float(gamma),
                                        float(agent.critic_lr), float(agent.actor_lr), int(epochs))
    if not ok:
        raise DivergenceError("non-finite weights after update", s)
    return StepResult(new, u, float(J), float(hist[-1]), hist)


def _evaluate(agent, state):
    u, _, _, _ = net.actor_forward_kernel(agent.actor.W1, agent.actor.W2, state)
    x = np.concatenate([state, u])
    J, _, _ = net.critic_forward_kernel(agent.critic.W1, agent.critic.W2, x)
    return u, J


def run_episode(agent, task, config, initial_state, episode=0):
    """Run one online-learning episode from ``initial_state``.

    Returns ``(log, agent_after, weights_diverged)``.  The input agent is not
    modified.  An environment blow-up ends the episode with status
    ``diverged``; a non-finite weight update does the same, keeps the last
    finite weights, and sets ``weights_diverged`` so the caller can stop.
    """
    agent = agent.copy()
    n, m = task.n_state, task.n_action
    T = config.max_steps_per_episode
    states = np.full((T + 1, n), np.nan)
    us = np.full((T + 1, m), np.nan)
    applied = np.full((T + 1, m), np.nan)
    rs = np.full(T + 1, np.nan)
    Js = np.full(T + 1, np.nan)
    J_prevs = np.full(T + 1, np.nan)
    e_cs = np.full(T + 1, np.nan)

    gamma = float(config.gamma)
    epochs = int(config.epochs_per_step)
    Wc1, Wc2 = agent.critic.W1, agent.critic.W2
    Wa1, Wa2 = agent.actor.W1, agent.actor.W2
    lc, la = float(agent.critic_lr), float(agent.actor_lr)

    state = np.asarray(initial_state, dtype=np.float64).copy()
    states[0] = state
    u, J = _evaluate(agent, state)
    us[0], Js[0] = u, J
    applied[0] = task.apply(u)
    status = COMPLETED
    weights_diverged = False
    last = 0
    if task.failed(state):
        status = FAILED
    else:
        for t in range(1, T + 1):
            try:
                nxt = task.step(state, applied[t - 1])
            except (DivergenceError, SingularityError) as exc:
                log.debug("episode %d: plant diverged at t=%d (%s)", episode, t, exc)
                status = DIVERGED
                break
            failed = task.failed(nxt)
            r = task.reward(nxt, applied[t - 1], failed)
            backup = (Wc1.copy(), Wc2.copy(), Wa1.copy(), Wa2.copy())
            u, J_new, hist, ok = _train_step_kernel(Wc1, Wc2, Wa1, Wa2, nxt, r, J, gamma, lc, la, epochs)
            if not ok:
                for dst, src in zip((Wc1, Wc2, Wa1, Wa2), backup):
                    dst[...] = src
                log.warning("episode %d: weights diverged at t=%d", episode, t)
                status = DIVERGED
                weights_diverged = True
                break
            last = t
            states[t] = nxt
            rs[t] = r
            J_prevs[t] = J
            us[t] = u
            Js[t] = J_new
            e_cs[t] = (r + gamma * J_new) - J
            applied[t] = task.apply(u)
            state, J = nxt, J_new
            if failed:
                status = FAILED
                break
    rows = slice(0, last + 1)
    e = e_cs[rows]
    episode_log = EpisodeLog(
        episode=episode, states=states[rows], u=us[rows], applied=applied[rows], r=rs[rows],
        J=Js[rows], J_prev=J_prevs[rows], e_c=e, critic_loss=0.5 * e * e, status=status,
        critic_lr=lc)
    return episode_log, agent, weights_diverged


def initial_agent(critic_shape, actor_shape, config):
    rng = np.random.default_rng([config.seed, 0])
    critic = net.init_params(critic_shape, rng, config.init_scale)
    actor = net.init_params(actor_shape, rng, config.init_scale)
    return Agent(critic, actor, config.critic_lr, config.actor_lr)


def train(task, config, critic_hidden, actor_hidden, progress=None):
    """Run ``config.episodes`` online episodes on ``task``.

    Each episode resets the plant (initial states come from a seed-derived
    stream independent of the weights) while the networks carry over.  The
    critic learning rate is adapted once per episode when
    ``lr_scale_ratio > 1``.  Training stops early if a weight update turns
    non-finite or the episode-end critic weight norm exceeds
    ``weight_norm_limit``; plant divergence just ends the episode.
    """
    critic_shape = net.critic_shape(task.n_state, task.n_action, critic_hidden)
    actor_shape = net.actor_shape(task.n_state, task.n_action, actor_hidden)
    agent = initial_agent(critic_shape, actor_shape, config)
    init_critic, init_actor = agent.critic.copy(), agent.actor.copy()
    ic_rng = np.random.default_rng([config.seed, 1])
    logs = []
    trajectory = WeightTrajectory()
    stopped, reason = False, None
    for k in range(1, config.episodes + 1):
        x0 = task.initial_state(ic_rng)
        episode_log, agent, weights_diverged = run_episode(agent, task, config, x0, episode=k)
        logs.append(episode_log)
        trajectory.append(k, net.flatten(agent.critic))
        if progress is not None:
            progress(episode_log)
        if weights_diverged:
            stopped, reason = True, STOP_NON_FINITE
            break
        limit = config.weight_norm_limit
        if limit is not None and np.linalg.norm(trajectory[-1]) > limit:
            log.warning("episode %d: critic weight norm %.3g exceeds %.3g, stopping", k,
                        np.linalg.norm(trajectory[-1]), limit)
            stopped, reason = True, STOP_NORM_LIMIT
            break
        if config.lr_scale_ratio > 1:
            agent.critic_lr = adapt_critic_lr(agent.critic_lr, config.lr_scale_ratio,
                                              config.lr_scale_bound, config.critic_lr)
    return RunArtifacts(config=config, critic_shape=critic_shape, actor_shape=actor_shape,
                        logs=logs, trajectory=trajectory, initial_critic=init_critic,
                        initial_actor=init_actor, final_critic=agent.critic, final_actor=agent.actor,
                        final_critic_lr=agent.critic_lr, stopped_early=stopped, stop_reason=reason)
