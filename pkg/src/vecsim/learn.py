"""Numpy actor-critic networks, replay, and the MADDPG / DDPG training loops."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .scenario import stream

FORMAT_VERSION = 1


class NumericError(FloatingPointError):
    pass


class CheckpointError(ValueError):
    pass


# ---------------------------------------------------------------------------
# networks


class Mlp:
    """Fully connected net with ReLU hidden layers.

    ``out`` is ``"tanh"`` (actor) or ``"identity"`` (critic). Parameters are
    kept as a flat list ``[W0, b0, W1, b1, ...]`` with ``W`` shaped (in, out).
    """

    def __init__(self, widths, out="identity", rng=None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError("need at least input and output widths, all >= 1")
        if out not in ("tanh", "identity"):
            raise ValueError(f"unknown output activation {out!r}")
        self.widths = widths
        self.out = out
        self.params = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            if rng is None:
                W = np.zeros((a, b))
            else:
                # fan-in uniform init; small last layer keeps early outputs near zero
                lim = 3e-3 if i == len(widths) - 2 else 1.0 / np.sqrt(a)
                W = rng.uniform(-lim, lim, size=(a, b))
            self.params += [W, np.zeros(b)]

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def copy(self) -> "Mlp":
        net = Mlp.__new__(Mlp)
        net.widths = list(self.widths)
        net.out = self.out
        net.params = [p.copy() for p in self.params]
        return net


def forward(net: Mlp, x, cache: bool = False):
    """Evaluate ``net`` on ``x`` (vector or batch of rows)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.widths[0]:
        raise ValueError(f"input width {x.shape[-1]} != {net.widths[0]}")
    acts = [x]
    h = x
    last = len(net.widths) - 2
    for i in range(last + 1):
        W, b = net.params[2 * i], net.params[2 * i + 1]
        z = h @ W + b
        if i < last:
            h = np.maximum(z, 0.0)
        else:
            h = np.tanh(z) if net.out == "tanh" else z
        if not np.isfinite(h).all():
            raise NumericError(f"non-finite activation at layer {i}")
        acts.append(h)
    return (h, acts) if cache else h


def backward(net: Mlp, acts, grad_out):
    """Reverse pass: parameter gradients and the gradient w.r.t. the input."""
    g = np.asarray(grad_out, dtype=float)
    grads = [None] * len(net.params)
    last = len(net.widths) - 2
    for i in range(last, -1, -1):
        h_out = acts[i + 1]
        if i == last:
            if net.out == "tanh":
                g = g * (1.0 - h_out**2)
        else:
            g = g * (h_out > 0)
        h_in = acts[i]
        if h_in.ndim == 1:
            grads[2 * i] = np.outer(h_in, g)
            grads[2 * i + 1] = g.copy()
        else:
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.params[2 * i].T
        if not (np.isfinite(grads[2 * i]).all() and np.isfinite(g).all()):
            raise NumericError(f"non-finite gradient at layer {i}")
    return grads, g


def gradients(net: Mlp, x, grad_out):
    """Gradient of ``sum(grad_out * net(x))`` with respect to every parameter."""
    _, acts = forward(net, x, cache=True)
    return backward(net, acts, grad_out)[0]


# ---------------------------------------------------------------------------
# optimizers


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads):
        if self.lr == 0:
            return
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.lr == 0:
            return
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, lr: float):
    if kind == "adam":
        return Adam(lr)
    if kind == "sgd":
        return Sgd(lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def soft_update(online: Mlp, target: Mlp, delta: float):
    """target <- delta * online + (1 - delta) * target, in place."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if online.widths != target.widths:
        raise ValueError("online and target shapes differ")
    for p, q in zip(online.params, target.params):
        q *= 1.0 - delta
        q += delta * p
    return target


# ---------------------------------------------------------------------------
# replay


class ReplayBuffer:
    """FIFO ring of joint transitions (per-agent states, actions, rewards)."""

    def __init__(self, capacity: int, n_agents: int, state_dim: int, action_dim: int, rng=None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.s = np.zeros((capacity, n_agents, state_dim))
        self.a = np.zeros((capacity, n_agents, action_dim))
        self.r = np.zeros((capacity, n_agents))
        self.s2 = np.zeros((capacity, n_agents, state_dim))
        self.inserted = 0
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, s, a, r, s2):
        i = self.inserted % self.capacity
        self.s[i], self.a[i], self.r[i], self.s2[i] = s, a, r, s2
        self.inserted += 1

    def sample(self, batch: int):
        """Uniform minibatch without replacement, or None if not enough data."""
        n = len(self)
        if n < batch:
            return None
        idx = self.rng.choice(n, size=batch, replace=False)
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx], "s2": self.s2[idx], "idx": idx}


# ---------------------------------------------------------------------------
# agents


@dataclass
class TrainConfig:
    episodes: int = 5000
    actor_widths: tuple = (64, 32)
    critic_widths: tuple = (128, 64, 32)
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    optimizer: str = "adam"
    batch_size: int = 128
    buffer_size: int = 30000
    gamma: float = 0.95
    delta: float = 0.01
    noise_start: float = 0.3
    noise_end: float = 0.02
    updates_per_episode: int = 4
    mode: str = "maddpg"  # or "ddpg": one agent over the concatenated fleet
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["actor_widths"] = list(self.actor_widths)
        d["critic_widths"] = list(self.critic_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = sorted(set(d) - known)
        if bad:
            raise ValueError(f"unknown training fields: {', '.join(bad)}")
        d = dict(d)
        for key in ("actor_widths", "critic_widths"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


FULL_SCALE_WIDTHS = {"actor_widths": (500, 128), "critic_widths": (1024, 512, 300)}


@dataclass
class AgentPair:
    actor: Mlp
    critic: Mlp
    target_actor: Mlp
    target_critic: Mlp
    actor_opt: object = None
    critic_opt: object = None

    @classmethod
    def create(cls, state_dim, action_dim, n_agents, hp: TrainConfig, rng):
        actor = Mlp([state_dim, *hp.actor_widths, action_dim], "tanh", rng)
        critic = Mlp([n_agents * (state_dim + action_dim), *hp.critic_widths, 1], "identity", rng)
        return cls(actor, critic, actor.copy(), critic.copy(),
                   make_optimizer(hp.optimizer, hp.lr_actor), make_optimizer(hp.optimizer, hp.lr_critic))


def critic_input(states, actions):
    """Rows ``[s_1..s_K, a_1..a_K]`` from (X, K, S) states and (X, K, A) actions."""
    X = states.shape[0]
    return np.concatenate([states.reshape(X, -1), actions.reshape(X, -1)], axis=1)


def critic_targets(agents, k: int, batch, gamma: float):
    s2 = batch["s2"]
    a2 = np.stack([forward(ag.target_actor, s2[:, j]) for j, ag in enumerate(agents)], axis=1)
    q2 = forward(agents[k].target_critic, critic_input(s2, a2))[:, 0]
    return batch["r"][:, k] + gamma * q2


def critic_loss_and_grad(critic: Mlp, inputs, y):
    """Mean squared TD error and its parameter gradient."""
    q, acts = forward(critic, inputs, cache=True)
    err = q[:, 0] - y
    loss = float(np.mean(err**2))
    grads, _ = backward(critic, acts, (2.0 * err / len(y))[:, None])
    return loss, grads


def actor_objective_and_grad(actor: Mlp, critic: Mlp, states, actions, k: int):
    """Mean critic value with agent ``k``'s recorded action replaced by its
    policy output, and the gradient of that mean w.r.t. the actor parameters.
    """
    X, K, A = actions.shape
    mu, a_acts = forward(actor, states[:, k], cache=True)
    acts = actions.copy()
    acts[:, k] = mu
    q, c_acts = forward(critic, critic_input(states, acts), cache=True)
    objective = float(np.mean(q))
    _, g_in = backward(critic, c_acts, np.full((X, 1), 1.0 / X))
    off = K * states.shape[2] + k * A
    grads, _ = backward(actor, a_acts, g_in[:, off:off + A])
    return objective, grads


def critic_update(agents, k: int, batch, gamma: float):
    """One gradient step on agent ``k``'s critic; returns the pre-step loss."""
    if batch is None:
        return None
    y = critic_targets(agents, k, batch, gamma)
    ag = agents[k]
    loss, grads = critic_loss_and_grad(ag.critic, critic_input(batch["s"], batch["a"]), y)
    ag.critic_opt.step(ag.critic.params, grads)
    return loss


def actor_update(agents, k: int, batch):
    """One ascent step on agent ``k``'s actor; returns the pre-step objective."""
    if batch is None:
        return None
    ag = agents[k]
    obj, grads = actor_objective_and_grad(ag.actor, ag.critic, batch["s"], batch["a"], k)
    ag.actor_opt.step(ag.actor.params, [-g for g in grads])
    return obj


def act_greedy(agents, states):
    """Noise-free joint action, one row per agent."""
    return [forward(ag.actor, np.asarray(s, dtype=float)) for ag, s in zip(agents, states)]


# ---------------------------------------------------------------------------
# fleet <-> agent views (DDPG treats the whole fleet as one agent)


class AgentView:
    def __init__(self, mode: str, K: int, state_dim: int, action_dim: int):
        if mode not in ("maddpg", "ddpg"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode, self.K = mode, K
        self.vehicle_state, self.vehicle_action = state_dim, action_dim
        joint = mode == "ddpg"
        self.n_agents = 1 if joint else K
        self.state_dim = K * state_dim if joint else state_dim
        self.action_dim = K * action_dim if joint else action_dim

    def states(self, obs):
        obs = np.asarray(obs, dtype=float)
        return obs.reshape(1, -1) if self.mode == "ddpg" else obs

    def actions(self, agent_actions):
        a = np.asarray(agent_actions, dtype=float)
        return list(a.reshape(self.K, self.vehicle_action))

    def rewards(self, r):
        r = np.asarray(r, dtype=float)
        return np.array([r.mean()]) if self.mode == "ddpg" else r


@dataclass
class Trained:
    agents: list
    hp: TrainConfig
    view: AgentView
    log: list = field(default_factory=list)

    def act(self, obs):
        return self.view.actions(act_greedy(self.agents, self.view.states(obs)))


def episode_seed(seed: int, episode: int, purpose: str = "train") -> int:
    tag = {"train": 0, "eval": 1}[purpose]
    return int(np.random.SeedSequence([int(seed), tag, int(episode)]).generate_state(1)[0])


def train_maddpg(env_factory, hp: TrainConfig, episodes: int | None = None, progress=None) -> Trained:
    """Train one actor-critic pair per vehicle (or one for the fleet in DDPG mode).

    Each episode collects transitions with Gaussian exploration noise, then
    runs ``updates_per_episode`` rounds of critic and actor updates per agent
    followed by one soft target update.
    """
    env = env_factory()
    episodes = hp.episodes if episodes is None else episodes
    view = AgentView(hp.mode, env.K, env.state_dim, env.action_dim)
    init = stream(hp.seed, "init")
    agents = [AgentPair.create(view.state_dim, view.action_dim, view.n_agents, hp, init)
              for _ in range(view.n_agents)]
    buf = ReplayBuffer(hp.buffer_size, view.n_agents, view.state_dim, view.action_dim,
                       stream(hp.seed, "replay"))
    noise = stream(hp.seed, "explore")
    log = []
    for ep in range(episodes):
        frac = ep / max(1, episodes - 1)
        sigma = hp.noise_start + (hp.noise_end - hp.noise_start) * frac
        obs = view.states(env.reset(episode_seed(hp.seed, ep)))
        done = False
        total = np.zeros(env.K)
        steps = 0
        while not done:
            a = np.array(act_greedy(agents, obs))
            a = np.clip(a + sigma * noise.standard_normal(a.shape), -1.0, 1.0)
            nxt, r, done, _ = env.step(view.actions(a))
            nxt = view.states(nxt)
            buf.add(obs, a, view.rewards(r), nxt)
            obs = nxt
            total += r
            steps += 1
        closs, aobj = [], []
        for _ in range(hp.updates_per_episode):
            for k in range(view.n_agents):
                batch = buf.sample(hp.batch_size)
                if batch is None:
                    break
                closs.append(critic_update(agents, k, batch, hp.gamma))
                aobj.append(actor_update(agents, k, batch))
        if closs:
            for ag in agents:
                soft_update(ag.actor, ag.target_actor, hp.delta)
                soft_update(ag.critic, ag.target_critic, hp.delta)
        row = {"episode": ep, "mean_reward": float(total.mean() / max(steps, 1)),
               "critic_loss": float(np.mean(closs)) if closs else float("nan"),
               "actor_objective": float(np.mean(aobj)) if aobj else float("nan")}
        for k in range(env.K):
            row[f"reward_{k}"] = float(total[k] / max(steps, 1))
        log.append(row)
        if progress is not None:
            progress(row)
    return Trained(agents, hp, view, log)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, trained: Trained, extra: dict | None = None):
    meta = {"format_version": FORMAT_VERSION, "hyperparams": trained.hp.to_dict(),
            "mode": trained.view.mode, "K": trained.view.K,
            "vehicle_state_dim": trained.view.vehicle_state,
            "vehicle_action_dim": trained.view.vehicle_action, "extra": extra or {}}
    arrays = {"meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for i, ag in enumerate(trained.agents):
        for role in ("actor", "critic", "target_actor", "target_critic"):
            net = getattr(ag, role)
            arrays[f"{i}/{role}/widths"] = np.array(net.widths, dtype=np.int64)
            for j, p in enumerate(net.params):
                arrays[f"{i}/{role}/{j}"] = p.astype(np.float64)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> Trained:
    try:
        with np.load(path, allow_pickle=False) as z:
            data = {k: z[k] for k in z.files}
        meta = json.loads(bytes(data["meta"]).decode())
    except Exception as exc:
        raise CheckpointError(f"{path}: not a readable checkpoint ({exc})") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')}")
    try:
        hp = TrainConfig.from_dict(meta["hyperparams"])
        view = AgentView(meta["mode"], meta["K"], meta["vehicle_state_dim"], meta["vehicle_action_dim"])
        agents = []
        for i in range(view.n_agents):
            nets = {}
            for role, out in (("actor", "tanh"), ("critic", "identity"),
                              ("target_actor", "tanh"), ("target_critic", "identity")):
                widths = data[f"{i}/{role}/widths"].tolist()
                net = Mlp(widths, out)
                for j in range(len(net.params)):
                    p = data[f"{i}/{role}/{j}"]
                    if p.shape != net.params[j].shape or not np.all(np.isfinite(p)):
                        raise CheckpointError(f"{path}: bad parameter {i}/{role}/{j}")
                    net.params[j] = p.astype(float)
                nets[role] = net
            agents.append(AgentPair(**nets, actor_opt=make_optimizer(hp.optimizer, hp.lr_actor),
                                    critic_opt=make_optimizer(hp.optimizer, hp.lr_critic)))
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing entry {exc}") from exc
    return Trained(agents, hp, view)
