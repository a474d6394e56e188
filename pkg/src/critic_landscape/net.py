"""One-hidden-layer perceptrons for the ADHDP critic and actor.

Both networks use the symmetric sigmoid ``(1 - exp(-q)) / (1 + exp(-q))``,
which is ``tanh(q / 2)``, on the hidden layer.  The critic output is linear;
the actor output goes through the same symmetric sigmoid.  There are no bias
terms: the last critic input columns are the action components.

Gradients are the closed-form backpropagation expressions, not autodiff.
The ``_kernel`` functions operate on raw arrays so the training loop can call
them from compiled code; the public wrappers take :class:`MlpParams`.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

LINEAR = "linear"
SYMMETRIC_SIGMOID = "sigmoid-symmetric"


@dataclass(frozen=True)
class MlpShape:
    n_inputs: int
    n_hidden: int
    n_outputs: int = 1
    output_activation: str = LINEAR

    def __post_init__(self):
        if min(self.n_inputs, self.n_hidden, self.n_outputs) < 1:
            raise ValueError("layer sizes must be >= 1")
        if self.output_activation not in (LINEAR, SYMMETRIC_SIGMOID):
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def n_params(self):
        return self.n_hidden * self.n_inputs + self.n_outputs * self.n_hidden


def critic_shape(n_state, n_action, n_hidden):
    return MlpShape(n_state + n_action, n_hidden, 1, LINEAR)


def actor_shape(n_state, n_action, n_hidden):
    return MlpShape(n_state, n_hidden, n_action, SYMMETRIC_SIGMOID)


@dataclass
class MlpParams:
    """Weights ``W1`` (hidden x inputs) and ``W2`` (outputs x hidden)."""

    W1: np.ndarray
    W2: np.ndarray

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        if self.W1.ndim != 2 or self.W2.ndim != 2 or self.W2.shape[1] != self.W1.shape[0]:
            raise ValueError(f"inconsistent layer shapes {self.W1.shape}, {self.W2.shape}")

    def copy(self):
        return MlpParams(self.W1.copy(), self.W2.copy())

    def matches(self, shape):
        return self.W1.shape == (shape.n_hidden, shape.n_inputs) and \
            self.W2.shape == (shape.n_outputs, shape.n_hidden)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.W1)) and np.all(np.isfinite(self.W2)))


@dataclass
class GradientSet:
    dW1: np.ndarray
    dW2: np.ndarray


def zeros(shape):
    return MlpParams(np.zeros((shape.n_hidden, shape.n_inputs)), np.zeros((shape.n_outputs, shape.n_hidden)))


def init_params(shape, rng, scale=0.5):
    """Independent uniform draws in ``[-scale, scale]``; W1 is drawn first."""
    W1 = rng.uniform(-scale, scale, size=(shape.n_hidden, shape.n_inputs))
    W2 = rng.uniform(-scale, scale, size=(shape.n_outputs, shape.n_hidden))
    return MlpParams(W1, W2)


def flatten(params):
    """Parameter vector: ``W1`` row-major followed by ``W2`` row-major."""
    return np.concatenate([params.W1.ravel(), params.W2.ravel()])


def unflatten(vector, shape):
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (shape.n_params,):
        raise ValueError(f"expected {shape.n_params} parameters, got {vector.shape}")
    k = shape.n_hidden * shape.n_inputs
    return MlpParams(vector[:k].reshape(shape.n_hidden, shape.n_inputs).copy(),
                     vector[k:].reshape(shape.n_outputs, shape.n_hidden).copy())


# ---------------------------------------------------------------------------
# Compiled kernels
# ---------------------------------------------------------------------------

# Explicit loops: BLAS call overhead dominates at these layer sizes.

@njit(cache=True)
def _matvec(W, x):
    out = np.zeros(W.shape[0])
    for i in range(W.shape[0]):
        acc = 0.0
        for j in range(W.shape[1]):
            acc += W[i, j] * x[j]
        out[i] = acc
    return out


@njit(cache=True)
def _outer(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = a[i] * b[j]
    return out


@njit(cache=True)
def act_sym_kernel(q):
    return np.tanh(0.5 * q)


@njit(cache=True)
def critic_forward_kernel(W1, W2, x):
    q = _matvec(W1, x)
    p = np.tanh(0.5 * q)
    J = _matvec(W2, p)[0]
    return J, p, q


@njit(cache=True)
def critic_gradients_kernel(W1, W2, x, e_c, gamma):
    # dE_c/dW2_i = gamma e_c p_i ; dE_c/dW1_ij = gamma e_c W2_i (1 - p_i^2)/2 x_j
    _, p, _ = critic_forward_kernel(W1, W2, x)
    dW2 = np.empty_like(W2)
    dW2[0, :] = gamma * e_c * p
    back = gamma * e_c * W2[0] * 0.5 * (1.0 - p * p)
    dW1 = _outer(back, x)
    return dW1, dW2


@njit(cache=True)
def actor_forward_kernel(W1, W2, s):
    h = _matvec(W1, s)
    g = np.tanh(0.5 * h)
    v = _matvec(W2, g)
    u = np.tanh(0.5 * v)
    return u, g, h, v


@njit(cache=True)
def dJ_du_kernel(Wc1, Wc2, x, n_state):
    """Critic sensitivity to each action input at critic input ``x``."""
    _, p, _ = critic_forward_kernel(Wc1, Wc2, x)
    back = Wc2[0] * 0.5 * (1.0 - p * p)
    n_action = x.shape[0] - n_state
    out = np.zeros(n_action)
    for i in range(back.shape[0]):
        for k in range(n_action):
            out[k] += back[i] * Wc1[i, n_state + k]
    return out


@njit(cache=True)
def actor_gradients_kernel(Wa1, Wa2, Wc1, Wc2, s, e_a):
    n_state = s.shape[0]
    u, g, _, _ = actor_forward_kernel(Wa1, Wa2, s)
    x = np.empty(n_state + u.shape[0])
    x[:n_state] = s
    x[n_state:] = u
    dJdu = dJ_du_kernel(Wc1, Wc2, x, n_state)
    # e_a * dJ/du_k * du_k/dv_k for every action component
    dv = e_a * dJdu * 0.5 * (1.0 - u * u)
    dW2 = _outer(dv, g)
    back = _matvec(Wa2.T, dv) * 0.5 * (1.0 - g * g)
    dW1 = _outer(back, s)
    return dW1, dW2


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def act_sym(q):
    """Symmetric sigmoid ``(1 - e^-q) / (1 + e^-q)``, evaluated as ``tanh(q/2)``."""
    return np.tanh(0.5 * np.asarray(q, dtype=np.float64))


def act_sym_derivative(q):
    f = act_sym(q)
    return 0.5 * (1.0 - f * f)


def _vector(x, n, what):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"{what} must have length {n}, got shape {x.shape}")
    return x


def critic_forward(params, x):
    """Return ``(J, p, q)``: output, hidden activations, hidden pre-activations."""
    x = _vector(x, params.W1.shape[1], "critic input")
    if params.W2.shape[0] != 1:
        raise ValueError("critic must have a single output")
    return critic_forward_kernel(params.W1, params.W2, x)


def actor_forward(params, state):
    """Return ``(u, g, h, v)`` with ``u`` in (-1, 1) per action component."""
    s = _vector(state, params.W1.shape[1], "actor input")
    return actor_forward_kernel(params.W1, params.W2, s)


def critic_gradients(params, x, e_c, gamma):
    """Partials of ``E_c = e_c^2 / 2`` where only ``J(t)`` depends on the weights.

    With ``e_c = r + gamma J(t) - J(t-1)`` the chain rule gives a factor
    ``gamma`` in front of every critic output sensitivity.
    """
    x = _vector(x, params.W1.shape[1], "critic input")
    dW1, dW2 = critic_gradients_kernel(params.W1, params.W2, x, float(e_c), float(gamma))
    return GradientSet(dW1, dW2)


def dJ_du(critic, state, u):
    state = np.asarray(state, dtype=np.float64)
    x = _vector(np.concatenate([state, np.atleast_1d(u)]), critic.W1.shape[1], "critic input")
    return dJ_du_kernel(critic.W1, critic.W2, x, state.shape[0])


def actor_gradients(actor, critic, state, e_a):
    """Partials of ``E_a = e_a^2 / 2`` with respect to the actor weights.

    The actor output is fed to the critic's action columns; ``dJ/du`` is
    chained through them and summed over action components.
    """
    s = _vector(state, actor.W1.shape[1], "actor input")
    if critic.W1.shape[1] != s.shape[0] + actor.W2.shape[0]:
        raise ValueError("critic input width must equal state + action dimension")
    dW1, dW2 = actor_gradients_kernel(actor.W1, actor.W2, critic.W1, critic.W2, s, float(e_a))
    return GradientSet(dW1, dW2)
