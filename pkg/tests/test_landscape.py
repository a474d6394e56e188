import numpy as np
import pytest
import scipy.linalg

from critic_landscape import adhdp, env, net
from critic_landscape import landscape as ls
from critic_landscape.adhdp import Agent, TrainConfig, WeightTrajectory
from critic_landscape.exceptions import RankError

CS = net.critic_shape(4, 1, 6)


@pytest.fixture(scope="module")
def small_run():
    cfg = TrainConfig(episodes=6, max_steps_per_episode=150, seed=11)
    return adhdp.train(env.CartPoleTask(), cfg, 6, 4)


# ---------------------------------------------------------------------------
# Planes
# ---------------------------------------------------------------------------

def test_pca_matches_covariance_eigenvectors():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((3, 10))
    plane = ls.pca_plane(W)
    C = np.cov(W, rowvar=False)
    vals, vecs = scipy.linalg.eigh(C)
    top = vecs[:, ::-1][:, :2]
    for got, ref in zip((plane.delta, plane.eta), top.T):
        s = np.sign(got @ ref)
        np.testing.assert_allclose(got, s * ref, atol=1e-8)
    np.testing.assert_allclose(plane.explained_variance, vals[::-1][:2] / vals.sum(), atol=1e-12)
    np.testing.assert_array_equal(plane.center, W[-1])


def test_pca_sign_convention():
    W = np.random.default_rng(1).standard_normal((6, 8))
    plane = ls.pca_plane(W)
    for v in (plane.delta, plane.eta):
        assert v[np.argmax(np.abs(v))] > 0


def test_pca_rank_one_raises():
    w0, d = np.arange(5.0), np.array([1.0, -2.0, 0.5, 0.0, 3.0])
    W = np.array([w0 + k * d for k in range(6)])
    with pytest.raises(RankError):
        ls.pca_plane(W)
    with pytest.raises(RankError):
        ls.pca_plane(np.ones((4, 5)))
    with pytest.raises(RankError):
        ls.pca_plane(np.random.default_rng(0).standard_normal((2, 5)))


def test_pca_variance_ordering():
    W = np.random.default_rng(2).standard_normal((20, 12)) * np.arange(1, 13)
    plane = ls.pca_plane(W)
    ev = plane.explained_variance
    assert ev[0] >= ev[1] >= plane.spectrum[2]
    assert plane.spectrum.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("seed", [0, 7, 123])
def test_random_plane_orthonormal_and_deterministic(seed):
    p = ls.random_plane(36, seed)
    q = ls.random_plane(36, seed)
    assert abs(np.linalg.norm(p.delta) - 1) < 1e-12 and abs(np.linalg.norm(p.eta) - 1) < 1e-12
    assert abs(p.delta @ p.eta) < 1e-12
    assert np.array_equal(p.delta, q.delta) and np.array_equal(p.eta, q.eta)


def test_random_plane_dim2_is_complete():
    p = ls.random_plane(2, 5)
    w = np.array([[0.3, -1.7]])
    a, b = ls.project_path(w, p)[0]
    np.testing.assert_allclose(p.point(a, b), w[0], atol=1e-14)


def test_project_path_examples():
    p = ls.random_plane(10, 3, center=np.arange(10.0))
    np.testing.assert_allclose(ls.project_path(p.center[None], p), [[0.0, 0.0]], atol=0)
    np.testing.assert_allclose(ls.project_path((p.center + 2 * p.delta)[None], p), [[2.0, 0.0]], atol=1e-14)
    w = np.random.default_rng(9).standard_normal(10)
    a, b = ls.project_path(w[None], p)[0]
    resid = w - p.point(a, b)
    assert abs(resid @ p.delta) < 1e-10 and abs(resid @ p.eta) < 1e-10


# ---------------------------------------------------------------------------
# Reference batch and match loss
# ---------------------------------------------------------------------------

def test_two_step_episode_gives_one_pair(small_run):
    lg = small_run.logs[0]
    short = adhdp.EpisodeLog(lg.episode, lg.states[:2], lg.u[:2], lg.applied[:2], lg.r[:2], lg.J[:2],
                             lg.J_prev[:2], lg.e_c[:2], lg.critic_loss[:2], lg.status)
    batch = ls.build_reference_batch(short, small_run.final_critic, 0.95)
    assert len(batch) == 1


def test_gamma_zero_targets_are_rewards(small_run):
    lg = small_run.logs[-1]
    batch = ls.build_reference_batch(lg, small_run.final_critic, 0.0)
    np.testing.assert_array_equal(batch.targets, lg.r[1:])


def test_batch_is_read_only(small_run):
    batch = ls.build_reference_batch(small_run.logs[-1], small_run.final_critic, 0.95)
    with pytest.raises(ValueError):
        batch.targets[0] = 1.0


def test_residuals_replay_logged_td_errors():
    # With frozen learning rates the reference critic is the critic that
    # produced the log, so its residuals are the logged TD errors.
    rng = np.random.default_rng(4)
    critic = net.init_params(CS, rng)
    actor = net.init_params(net.actor_shape(4, 1, 4), rng)
    agent = Agent(critic, actor, 0.0, 0.0)
    lg, _, _ = adhdp.run_episode(agent, env.CartPoleTask(), TrainConfig(max_steps_per_episode=300),
                                 np.array([0.04, 0, 0, 0]), episode=1)
    batch = ls.build_reference_batch(lg, critic, 0.95)
    resid = batch.targets - ls.critic_outputs(critic, batch.inputs)
    np.testing.assert_allclose(resid, lg.e_c[1:], rtol=0, atol=1e-9)


def test_match_loss_examples():
    rng = np.random.default_rng(6)
    p = net.init_params(CS, rng)
    X = rng.uniform(-1, 1, (3, 5))
    perfect = ls.ReferenceBatch(X, ls.critic_outputs(p, X))
    assert ls.match_loss(net.flatten(p), perfect, CS) == 0.0
    y = np.array([0.5, -1.0, 2.0])
    batch = ls.ReferenceBatch(X, y)
    assert ls.match_loss(np.zeros(36), batch, CS) == pytest.approx(np.mean(0.5 * y ** 2), abs=1e-15)
    # hand-computed residuals
    J = [float(p.W2[0] @ np.tanh(0.5 * (p.W1 @ x))) for x in X]
    hand = sum(0.5 * (yi - Ji) ** 2 for yi, Ji in zip(y, J)) / 3
    assert ls.match_loss(net.flatten(p), batch, CS) == pytest.approx(hand, abs=1e-12)


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def _batch_and_plane(small_run):
    traj = small_run.trajectory
    plane = ls.pca_plane(traj)
    batch = ls.build_reference_batch(small_run.logs[-1], net.unflatten(plane.center, CS), 0.95)
    return plane, batch


def test_center_cell_is_exact(small_run):
    plane, batch = _batch_and_plane(small_run)
    grid = ls.evaluate_grid(plane, batch, ls.GridSpec(-1, 1, -1, 1, 3, 3), CS)
    assert grid.alphas[1] == 0.0 and grid.betas[1] == 0.0
    assert grid.loss[1, 1] == ls.match_loss(plane.center, batch, CS)
    assert grid.loss[1, 1] == grid.L_star


def test_parallel_equals_sequential(small_run):
    plane, batch = _batch_and_plane(small_run)
    spec = ls.GridSpec(-0.5, 0.5, -0.3, 0.3, 21, 15)
    a = ls.evaluate_grid(plane, batch, spec, CS, workers=1)
    b = ls.evaluate_grid(plane, batch, spec, CS, workers=4)
    assert np.array_equal(a.loss, b.loss)


def test_refinement_keeps_coincident_points(small_run):
    plane, batch = _batch_and_plane(small_run)
    coarse = ls.evaluate_grid(plane, batch, ls.GridSpec(-0.7, 0.7, -0.4, 0.4, 11, 5), CS)
    fine = ls.evaluate_grid(plane, batch, ls.GridSpec(-0.7, 0.7, -0.4, 0.4, 21, 5), CS)
    assert np.array_equal(fine.alphas[::2], coarse.alphas)
    assert np.array_equal(fine.loss[:, ::2], coarse.loss)


def test_loss_is_quadratic_along_a_w2_direction():
    rng = np.random.default_rng(8)
    center = net.flatten(net.init_params(CS, rng))
    delta = np.zeros(36)
    delta[31] = 1.0  # a W2 coordinate: J is linear in it
    eta = np.zeros(36)
    eta[2] = 1.0
    plane = ls.ProjectionPlane(center, delta, eta, kind=ls.RANDOM)
    X = rng.uniform(-1, 1, (40, 5))
    batch = ls.ReferenceBatch(X, np.full(40, 0.7))
    spec = ls.GridSpec(-2, 2, -1, 1, 41, 3)
    grid = ls.evaluate_grid(plane, batch, spec, CS)
    row = grid.loss[1]
    coef = np.polyfit(grid.alphas, row, 2)
    assert np.max(np.abs(np.polyval(coef, grid.alphas) - row)) < 1e-10


def test_saturated_cells_get_sentinel(small_run):
    plane, batch = _batch_and_plane(small_run)
    spec = ls.GridSpec(-1e300, 1e300, -1, 1, 5, 3)
    grid = ls.evaluate_grid(plane, batch, spec, CS)
    if grid.saturated.any():
        finite = grid.loss[~grid.saturated]
        assert np.all(grid.loss[grid.saturated] == grid.meta["sentinel"])
        assert grid.meta["sentinel"] == 10 * finite.max()
    assert np.all(np.isfinite(grid.loss))


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        ls.GridSpec(-1, 1, -1, 1, 4, 5)
    with pytest.raises(ValueError):
        ls.GridSpec(1, -1, -1, 1)


def test_grid_around_path_is_symmetric():
    spec = ls.GridSpec.around(np.array([[0.2, -0.5], [-1.0, 0.1]]), 1.2, 51, 51)
    assert spec.alpha_max == -spec.alpha_min == pytest.approx(1.2)
    assert spec.beta_max == pytest.approx(0.6)
    assert spec.alphas[25] == 0.0 and spec.betas[25] == 0.0


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

def test_final_snapshot_equals_final_landscape(small_run):
    traj = small_run.trajectory
    plane = ls.pca_plane(traj)
    lg = small_run.logs[-1]
    final = ls.final_landscape(traj, lg, CS, 0.95, n_alpha=11, n_beta=11)
    snap = ls.snapshot(traj, len(traj) - 1, plane, lg, CS, 0.95, n_alpha=11, n_beta=11)
    assert np.array_equal(final.loss, snap.loss)
    assert np.array_equal(final.path, snap.path)


def test_snapshot_center_is_critic_at_k(small_run):
    traj = small_run.trajectory
    plane = ls.pca_plane(traj)
    k = 2
    lg = small_run.logs[k]
    snap = ls.snapshot(traj, k, plane, lg, CS, 0.95, n_alpha=11, n_beta=11)
    own = ls.build_reference_batch(lg, net.unflatten(traj[k], CS), 0.95)
    assert snap.loss[5, 5] == ls.match_loss(traj[k], own, CS)
    np.testing.assert_allclose(snap.path[k], [0.0, 0.0], atol=1e-15)


def test_trajectory_container():
    t = WeightTrajectory()
    t.append(1, np.zeros(3))
    t.append(2, np.ones(3))
    assert t.index_of(2) == 1 and t.matrix.shape == (2, 3)
    with pytest.raises(ValueError):
        t.append(3, np.zeros(4))
