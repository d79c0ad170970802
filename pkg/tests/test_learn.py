import numpy as np
import pytest

from fd_oracle import check_actor, check_critic, random_problem
from vecsim.config import desk_config
from vecsim.env import VecEnv
from vecsim.learn import (AgentPair, AgentView, CheckpointError, Mlp, NumericError, ReplayBuffer,
                          Sgd, TrainConfig, act_greedy, actor_objective_and_grad, actor_update,
                          backward, critic_input, critic_loss_and_grad, critic_targets,
                          critic_update, episode_seed, forward, gradients, load_checkpoint,
                          save_checkpoint, soft_update, train_maddpg)

TINY = dict(actor_widths=(8,), critic_widths=(8,), batch_size=16, buffer_size=500)


def tiny_env(**kw):
    return VecEnv(desk_config(episode_length=8, **kw))


# -- forward / backward ---------------------------------------------------------

def test_zero_actor_outputs_zero():
    net = Mlp([4, 5, 3], "tanh")
    assert np.array_equal(forward(net, np.ones(4)), np.zeros(3))


def test_identity_layer():
    net = Mlp([3, 3], "identity")
    net.params[0] = np.eye(3)
    x = np.array([0.5, -2.0, 7.0])
    assert np.array_equal(forward(net, x), x)


def test_actor_output_bounded(rng):
    net = Mlp([4, 16, 2], "tanh", rng)
    net.params[-2] *= 1000
    for scale in (1, 1e3, 1e6):
        y = forward(net, rng.normal(size=(20, 4)) * scale)
        assert np.all(np.abs(y) <= 1.0)


def test_input_width_checked():
    with pytest.raises(ValueError, match="input width"):
        forward(Mlp([4, 2]), np.zeros(3))


def test_non_finite_names_layer():
    net = Mlp([2, 2, 1], "identity")
    net.params[0][:] = np.inf
    with pytest.raises(NumericError, match="layer 0"):
        forward(net, np.ones(2))


def test_zero_loss_gives_zero_gradient(rng):
    net = Mlp([3, 4, 2], "identity", rng)
    for g in gradients(net, rng.normal(size=(5, 3)), np.zeros((5, 2))):
        assert not g.any()


def test_dead_relu_contributes_nothing():
    net = Mlp([1, 1, 1], "identity")
    net.params[0][:] = 1.0
    net.params[1][:] = -5.0  # pre-activation -4 at x=1
    net.params[2][:] = 2.0
    g = gradients(net, np.array([1.0]), np.array([1.0]))
    assert g[0][0, 0] == 0.0 and g[1][0] == 0.0
    assert g[3][0] == 1.0


def test_backward_input_gradient(rng):
    net = Mlp([3, 5, 1], "identity", rng)
    x = rng.normal(size=3)
    _, acts = forward(net, x, cache=True)
    _, gin = backward(net, acts, np.array([1.0]))
    h = 1e-6
    num = [(forward(net, x + h * e)[0] - forward(net, x - h * e)[0]) / (2 * h) for e in np.eye(3)]
    assert np.allclose(gin, num, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_finite_difference_gradients(seed):
    rng = np.random.default_rng(seed)
    for _ in range(4):
        pb = random_problem(rng)
        assert check_critic(pb) <= 1e-4
        assert check_actor(pb) <= 1e-4


# -- critic and actor updates -----------------------------------------------------

def pair(S=2, A=1, K=1, rng=None, widths=(4,)):
    hp = TrainConfig(actor_widths=widths, critic_widths=widths)
    return AgentPair.create(S, A, K, hp, rng or np.random.default_rng(0))


def batch_of(X, K, S, A, rng):
    return {"s": rng.normal(size=(X, K, S)), "a": rng.uniform(-1, 1, (X, K, A)),
            "r": rng.normal(size=(X, K)), "s2": rng.normal(size=(X, K, S))}


def test_gamma_zero_targets_are_rewards(rng):
    ag = [pair(rng=rng)]
    b = batch_of(6, 1, 2, 1, rng)
    assert np.array_equal(critic_targets(ag, 0, b, 0.0), b["r"][:, 0])


def test_perfect_fit_zero_loss(rng):
    ag = pair(rng=rng)
    b = batch_of(5, 1, 2, 1, rng)
    inp = critic_input(b["s"], b["a"])
    y = forward(ag.critic, inp)[:, 0]
    loss, grads = critic_loss_and_grad(ag.critic, inp, y)
    assert loss == 0.0 and all(not g.any() for g in grads)


def test_scalar_toy_critic_loss():
    # Q(s, a) = w * a with one weight, y = r (gamma 0)
    critic = Mlp([2, 1], "identity")
    critic.params[0][:] = [[0.0], [1.5]]
    inp = np.array([[0.3, 2.0]])
    loss, grads = critic_loss_and_grad(critic, inp, np.array([1.0]))
    assert loss == pytest.approx((3.0 - 1.0) ** 2)
    assert grads[0][1, 0] == pytest.approx(2 * (3.0 - 1.0) * 2.0)


def test_critic_update_reduces_loss(rng):
    ag = [pair(rng=rng)]
    ag[0].critic_opt = Sgd(0.05)
    b = batch_of(32, 1, 2, 1, rng)
    first = critic_update(ag, 0, b, 0.0)
    for _ in range(50):
        last = critic_update(ag, 0, b, 0.0)
    assert last < first


def test_not_ready_returns_none():
    ag = [pair()]
    assert critic_update(ag, 0, None, 0.9) is None
    assert actor_update(ag, 0, None) is None
    buf = ReplayBuffer(10, 1, 2, 1)
    assert buf.sample(4) is None


def test_constant_critic_zero_actor_gradient(rng):
    ag = pair(rng=rng)
    for i in range(0, len(ag.critic.params), 2):
        ag.critic.params[i][:] = 0.0
    ag.critic.params[-1][:] = 3.0
    b = batch_of(4, 1, 2, 1, rng)
    obj, grads = actor_objective_and_grad(ag.actor, ag.critic, b["s"], b["a"], 0)
    assert obj == pytest.approx(3.0)
    assert all(not g.any() for g in grads)


def test_quadratic_toy_drives_theta_to_zero():
    # mu = tanh(theta) on a constant zero input, Q(a) = -a^2. Each step the
    # critic is the exact tangent of Q at the current action, so the analytic
    # actor gradient must equal dQ/dtheta = -2a(1 - a^2).
    actor = Mlp([1, 1], "tanh")
    actor.params[1][:] = 1.2
    opt = Sgd(0.5)
    for _ in range(200):
        a = float(np.tanh(actor.params[1][0]))
        critic = Mlp([2, 1], "identity")  # input [s, a]
        critic.params[0][:] = [[0.0], [-2 * a]]
        _, grads = actor_objective_and_grad(actor, critic, np.zeros((1, 1, 1)),
                                            np.zeros((1, 1, 1)), 0)
        assert grads[1][0] == pytest.approx(-2 * a * (1 - a * a), rel=1e-12)
        opt.step(actor.params, [-g for g in grads])
    assert abs(actor.params[1][0]) < 1e-3


def test_actor_objective_is_mean_q_at_policy_actions(rng):
    K, S, A = 2, 3, 2
    ags = [pair(S, A, K, rng) for _ in range(K)]
    b = batch_of(7, K, S, A, rng)
    obj, _ = actor_objective_and_grad(ags[1].actor, ags[1].critic, b["s"], b["a"], 1)
    acts = b["a"].copy()
    acts[:, 1] = forward(ags[1].actor, b["s"][:, 1])
    assert obj == pytest.approx(float(forward(ags[1].critic, critic_input(b["s"], acts)).mean()))


def test_actor_update_isolated(rng):
    K, S, A = 3, 3, 2
    ags = [pair(S, A, K, rng) for _ in range(K)]
    before = [[p.copy() for p in ag.actor.params + ag.critic.params] for ag in ags]
    actor_update(ags, 1, batch_of(8, K, S, A, rng))
    for j, ag in enumerate(ags):
        same = all(np.array_equal(p, q) for p, q in zip(ag.actor.params + ag.critic.params, before[j]))
        assert same == (j != 1)


# -- soft updates -------------------------------------------------------------------

def nets(a, b):
    on, tg = Mlp([1, 1]), Mlp([1, 1])
    on.params[0][:] = a
    tg.params[0][:] = b
    return on, tg


def test_soft_update_examples():
    on, tg = nets(1.0, 0.0)
    assert soft_update(on, tg, 0.01).params[0][0, 0] == pytest.approx(0.01)
    on, tg = nets(1.0, 0.0)
    assert soft_update(on, tg, 1.0).params[0][0, 0] == 1.0
    on, tg = nets(1.0, 0.25)
    assert soft_update(on, tg, 0.0).params[0][0, 0] == 0.25


def test_soft_update_errors():
    with pytest.raises(ValueError):
        soft_update(Mlp([1, 1]), Mlp([1, 1]), 1.5)
    with pytest.raises(ValueError):
        soft_update(Mlp([1, 1]), Mlp([1, 2]), 0.5)


def test_target_lag_closed_form():
    on, tg = nets(2.0, -1.0)
    for _ in range(40):
        soft_update(on, tg, 0.05)
    assert tg.params[0][0, 0] == pytest.approx(2.0 + 0.95**40 * (-1.0 - 2.0), rel=1e-12)


# -- replay ---------------------------------------------------------------------------

def test_replay_fifo_eviction():
    buf = ReplayBuffer(3, 1, 1, 1)
    for i in range(5):
        buf.add([[i]], [[i]], [i], [[i]])
    assert len(buf) == 3
    assert sorted(buf.r[:, 0].tolist()) == [2.0, 3.0, 4.0]


def test_replay_sampling_without_replacement():
    buf = ReplayBuffer(50, 1, 1, 1, np.random.default_rng(1))
    for i in range(50):
        buf.add([[i]], [[0]], [i], [[0]])
    b = buf.sample(50)
    assert sorted(b["r"][:, 0].tolist()) == list(range(50))


def test_replay_uniformity():
    n = 20
    buf = ReplayBuffer(n, 1, 1, 1, np.random.default_rng(7))
    for i in range(n):
        buf.add([[i]], [[0]], [i], [[0]])
    counts = np.zeros(n)
    for _ in range(10_000):  # 10^5 draws
        counts[buf.sample(10)["idx"]] += 1
    expected = 100_000 / n
    assert np.all(np.abs(counts - expected) <= 0.05 * expected)


@pytest.mark.parametrize("episodes", [1, 40, 2000])
def test_buffer_size_after_episodes(episodes):
    T = 30
    buf = ReplayBuffer(30000, 1, 1, 1)
    for _ in range(episodes * T):
        buf.add([[0]], [[0]], [0], [[0]])
    assert len(buf) == min(episodes * T, 30000)


# -- training loop ----------------------------------------------------------------------

def test_zero_step_sizes_leave_parameters_unchanged():
    hp = TrainConfig(episodes=4, lr_actor=0.0, lr_critic=0.0, seed=3, **TINY)
    hp.batch_size = 8
    init = train_maddpg(tiny_env, TrainConfig.from_dict({**hp.to_dict(), "episodes": 0}))
    done = train_maddpg(tiny_env, hp)
    assert not np.isnan(done.log[-1]["critic_loss"])
    for a, b in zip(init.agents, done.agents):
        for role in ("actor", "critic"):
            for p, q in zip(getattr(a, role).params, getattr(b, role).params):
                assert np.array_equal(p, q)


def test_training_is_deterministic():
    hp = TrainConfig(episodes=3, seed=5, **{**TINY, "batch_size": 8})
    a, b = train_maddpg(tiny_env, hp), train_maddpg(tiny_env, hp)
    assert a.log == b.log
    for x, y in zip(a.agents, b.agents):
        assert all(np.array_equal(p, q) for p, q in zip(x.actor.params, y.actor.params))


def test_training_log_fields():
    tr = train_maddpg(tiny_env, TrainConfig(episodes=2, seed=0, **TINY))
    assert list(tr.log[0])[:4] == ["episode", "mean_reward", "critic_loss", "actor_objective"]
    assert {"reward_0", "reward_1", "reward_2"} <= set(tr.log[0])


def test_greedy_actions_deterministic_and_shaped():
    tr = train_maddpg(tiny_env, TrainConfig(episodes=1, seed=0, **TINY))
    env = tiny_env()
    obs = env.reset(0)
    a, b = tr.act(obs), tr.act(obs)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert [len(x) for x in a] == [env.action_dim] * env.K


def test_ddpg_is_one_agent_over_the_fleet():
    env = tiny_env()
    view = AgentView("ddpg", env.K, env.state_dim, env.action_dim)
    assert view.n_agents == 1
    assert view.state_dim == env.K * env.state_dim
    tr = train_maddpg(tiny_env, TrainConfig(episodes=2, seed=0, mode="ddpg", **TINY))
    assert len(tr.agents) == 1
    assert tr.agents[0].critic.widths[0] == env.K * (env.state_dim + env.action_dim)
    obs = env.reset(1)
    joint = act_greedy(tr.agents, view.states(obs))[0]
    assert np.array_equal(np.concatenate(tr.act(obs)), joint)
    assert view.rewards([1.0, 2.0, 3.0]).tolist() == [2.0]


def test_episode_seeds_differ():
    seeds = {episode_seed(0, e) for e in range(100)}
    assert len(seeds) == 100
    assert episode_seed(0, 0, "eval") != episode_seed(0, 0, "train")


# -- checkpoints ------------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    tr = train_maddpg(tiny_env, TrainConfig(episodes=2, seed=0, **TINY))
    save_checkpoint(tmp_path / "m.npz", tr)
    back = load_checkpoint(tmp_path / "m.npz")
    assert back.hp == tr.hp
    obs = tiny_env().reset(4)
    assert all(np.array_equal(x, y) for x, y in zip(back.act(obs), tr.act(obs)))


def test_checkpoint_corruption(tmp_path):
    p = tmp_path / "bad.npz"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.npz")


def test_checkpoint_version_checked(tmp_path):
    import json
    tr = train_maddpg(tiny_env, TrainConfig(episodes=1, seed=0, **TINY))
    save_checkpoint(tmp_path / "m.npz", tr)
    with np.load(tmp_path / "m.npz") as z:
        data = {k: z[k] for k in z.files}
    meta = json.loads(bytes(data["meta"]).decode())
    meta["format_version"] = 99
    data["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(tmp_path / "v.npz", **data)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "v.npz")
