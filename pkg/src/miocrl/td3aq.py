"""Twin-delayed actor-Q learning for parallel continuous/discrete actions.

The actor emits the continuous action; each critic maps ``(state, a_c)`` to one
value per discrete action and the discrete action is the argmax head. Target
smoothing, clipped double Q and delayed actor/target updates follow TD3.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from .hev_env import HevEnv, HybridAction
from .neural import Adam, Mlp, soft_update

STATE_DIM = 4


@dataclass
class AgentConfig:
    gamma: float = 0.99
    rho: float = 0.001
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    buffer_capacity: int = 200_000
    batch: int = 128
    explore_noise_sigma: float = 0.02
    target_noise_sigma: float = 0.1
    target_noise_low: float = -0.25
    target_noise_high: float = 0.25
    policy_delay: int = 2
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.25
    warmup: int = 1000
    hidden: int = 64
    n_actions: int = 6
    reward_scale: float = 1.0
    # soft wall on the actor's pre-tanh output; beyond it the tanh gradient
    # falls under Adam's epsilon and the actor can no longer move
    saturation_weight: float = 1.0
    saturation_threshold: float = 3.5

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        if self.batch > self.buffer_capacity:
            raise ValueError("batch cannot exceed buffer_capacity")
        if self.target_noise_low > self.target_noise_high:
            raise ValueError("target noise bounds are reversed")

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Batch:
    s: np.ndarray
    a_d: np.ndarray
    a_c: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.r)


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity, state_dim=STATE_DIM):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, state_dim))
        self.s2 = np.zeros((self.capacity, state_dim))
        self.a_d = np.zeros(self.capacity, dtype=np.int64)
        self.a_c = np.zeros(self.capacity)
        self.r = np.zeros(self.capacity)
        self.done = np.zeros(self.capacity)
        self.ptr = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a_d, a_c, r, s2, done):
        i = self.ptr
        self.s[i] = s
        self.a_d[i] = a_d
        self.a_c[i] = a_c
        self.r[i] = r
        self.s2[i] = s2
        self.done[i] = float(done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n, rng) -> Batch:
        if self.size < n:
            raise ValueError(f"cannot sample {n} from a buffer holding {self.size}")
        idx = rng.integers(0, self.size, size=n)
        return Batch(self.s[idx], self.a_d[idx], self.a_c[idx], self.r[idx], self.s2[idx], self.done[idx])


def _critic_input(s, a_c):
    return np.concatenate([s, np.reshape(a_c, (-1, 1))], axis=1)


def critic_loss_and_grads(critic: Mlp, s, a_d, a_c, y):
    """Mean squared error of the ``a_d``-indexed head against ``y``."""
    q, tape = critic.forward(_critic_input(s, a_c))
    rows = np.arange(len(y))
    err = q[rows, a_d] - y
    dq = np.zeros_like(q)
    dq[rows, a_d] = 2.0 * err / len(y)
    grads, _ = critic.backward(tape, dq)
    return float(np.mean(err * err)), grads


def actor_objective_and_grads(actor: Mlp, critic: Mlp, s, sat_weight=0.0, sat_threshold=3.5):
    """J = mean_i max_d Q(s_i, d, mu(s_i)) and its gradient w.r.t. the actor.

    Only the winning head carries gradient back into the actor. With
    ``sat_weight > 0`` the objective also subtracts
    ``sat_weight * mean(max(|z| - sat_threshold, 0)^2)`` over the actor's
    pre-tanh outputs ``z``.
    """
    a, tape_a = actor.forward(s)
    q, tape_q = critic.forward(_critic_input(s, a))
    rows = np.arange(len(s))
    heads = np.argmax(q, axis=1)
    dq = np.zeros_like(q)
    dq[rows, heads] = 1.0 / len(s)
    _, dx = critic.backward(tape_q, dq)
    J = float(np.mean(q[rows, heads]))
    dz = None
    if sat_weight > 0.0:
        z = Mlp.preactivation(tape_a)
        over = np.maximum(np.abs(z) - sat_threshold, 0.0)
        J -= sat_weight * float(np.mean(over * over))
        dz = -2.0 * sat_weight * over * np.sign(z) / len(s)
    grads, _ = actor.backward(tape_a, dx[:, -1:], dz)
    return J, grads


class TD3AQAgent:
    def __init__(self, cfg: AgentConfig | None = None, rng=None, state_dim=STATE_DIM):
        self.cfg = cfg or AgentConfig()
        rng = rng if rng is not None else np.random.default_rng()
        h, k = self.cfg.hidden, self.cfg.n_actions
        self.actor = Mlp((state_dim, h, h, 1), "tanh", rng)
        self.critic1 = Mlp((state_dim + 1, h, h, k), "identity", rng)
        self.critic2 = Mlp((state_dim + 1, h, h, k), "identity", rng)
        self.actor_target = self.actor.clone()
        self.critic1_target = self.critic1.clone()
        self.critic2_target = self.critic2.clone()
        self.actor_opt = Adam(self.actor.params, self.cfg.lr_actor)
        self.critic1_opt = Adam(self.critic1.params, self.cfg.lr_critic)
        self.critic2_opt = Adam(self.critic2.params, self.cfg.lr_critic)
        self.buffer = ReplayBuffer(self.cfg.buffer_capacity, state_dim)
        self.critic_updates = 0
        self.actor_updates = 0

    # -- acting -------------------------------------------------------------
    def select_action(self, s, mode="greedy", rng=None, eps=0.0) -> HybridAction:
        a_c = float(self.actor(s)[0])
        if mode == "explore":
            a_c += rng.normal(0.0, self.cfg.explore_noise_sigma)
        a_c = min(max(a_c, -1.0), 1.0)
        if mode == "explore" and rng.random() < eps:
            return HybridAction(a_c, int(rng.integers(self.cfg.n_actions)))
        q = self.critic1(np.append(s, a_c))
        return HybridAction(a_c, int(np.argmax(q)))

    # -- learning -----------------------------------------------------------
    def target_action(self, s2, rng):
        """Smoothed target action and the clipped noise that produced it."""
        c = self.cfg
        eps = rng.normal(0.0, c.target_noise_sigma, size=(len(s2), 1))
        noise = np.clip(eps, c.target_noise_low, c.target_noise_high)
        a = np.clip(self.actor_target(s2) + noise, -1.0, 1.0)
        return a, noise

    def compute_target(self, batch: Batch, rng):
        a2, _ = self.target_action(batch.s2, rng)
        x2 = _critic_input(batch.s2, a2)
        q1 = self.critic1_target(x2).max(axis=1)
        q2 = self.critic2_target(x2).max(axis=1)
        r = batch.r * self.cfg.reward_scale
        return r + self.cfg.gamma * (1.0 - batch.done) * np.minimum(q1, q2)

    def critic_update(self, batch: Batch, y):
        l1, g1 = critic_loss_and_grads(self.critic1, batch.s, batch.a_d, batch.a_c, y)
        l2, g2 = critic_loss_and_grads(self.critic2, batch.s, batch.a_d, batch.a_c, y)
        self.critic1_opt.update(self.critic1.params, g1)
        self.critic2_opt.update(self.critic2.params, g2)
        self.critic_updates += 1
        return l1, l2

    def actor_update(self, batch: Batch):
        c = self.cfg
        J, grads = actor_objective_and_grads(self.actor, self.critic1, batch.s,
                                             c.saturation_weight, c.saturation_threshold)
        # ascent on J == descent on -J
        self.actor_opt.update(self.actor.params, [-g for g in grads])
        self.actor_updates += 1
        return J

    def soft_update_targets(self):
        rho = self.cfg.rho
        soft_update(self.critic1_target, self.critic1, rho)
        soft_update(self.critic2_target, self.critic2, rho)
        soft_update(self.actor_target, self.actor, rho)

    def learn(self, rng):
        """One learning iteration: critics every call, actor and targets every K."""
        batch = self.buffer.sample(self.cfg.batch, rng)
        y = self.compute_target(batch, rng)
        l1, l2 = self.critic_update(batch, y)
        J = None
        if self.critic_updates % self.cfg.policy_delay == 0:
            J = self.actor_update(batch)
            self.soft_update_targets()
        return {"critic1_loss": l1, "critic2_loss": l2, "actor_objective": J}

    # -- persistence --------------------------------------------------------
    def networks(self):
        return {"actor": self.actor, "critic1": self.critic1, "critic2": self.critic2,
                "actor_target": self.actor_target, "critic1_target": self.critic1_target,
                "critic2_target": self.critic2_target}

    def snapshot(self):
        return {"actor": self.actor.clone(), "critic1": self.critic1.clone()}


class GreedyPolicy:
    """Deterministic policy from an actor and the first critic."""

    def __init__(self, actor: Mlp, critic: Mlp):
        self.actor = actor
        self.critic = critic

    def __call__(self, state) -> HybridAction:
        s = HevEnv.observe(state)
        a_c = min(max(float(self.actor(s)[0]), -1.0), 1.0)
        q = self.critic(np.append(s, a_c))
        return HybridAction(a_c, int(np.argmax(q)))


def epsilon_at(step, cfg: AgentConfig, total_steps):
    decay = max(1, int(cfg.eps_decay_frac * total_steps))
    frac = min(step / decay, 1.0)
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


@dataclass
class TrainResult:
    episodes: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)
    best: dict | None = None
    best_return: float = -np.inf


def train(agent: TD3AQAgent, env: HevEnv, cycle, total_steps, *, soc0=0.6,
          eval_interval=10_000, explore_rng=None, learn_rng=None,
          on_eval: Callable | None = None) -> TrainResult:
    """Interact for ``total_steps`` steps, learning after the warmup.

    Every ``eval_interval`` steps one greedy episode is run and the actor and
    first critic with the highest return are kept in ``result.best``.
    """
    from .evaluation import run_episode

    cfg = agent.cfg
    explore_rng = explore_rng if explore_rng is not None else np.random.default_rng()
    learn_rng = learn_rng if learn_rng is not None else np.random.default_rng()
    result = TrainResult()
    state = env.reset(cycle, soc0)
    obs = env.observe(state)
    ep_return = ep_fuel = 0.0
    ep_index = 0
    last = {"critic1_loss": None, "critic2_loss": None, "actor_objective": None}
    for step in range(total_steps):
        eps = epsilon_at(step, cfg, total_steps)
        if step < cfg.warmup:
            action = HybridAction(float(explore_rng.uniform(-1.0, 1.0)),
                                  int(explore_rng.integers(cfg.n_actions)))
        else:
            action = agent.select_action(obs, "explore", explore_rng, eps)
        out = env.step(state, action)
        obs2 = env.observe(out.next_state)
        agent.buffer.add(obs, action.a_d, action.a_c, out.reward, obs2, out.done)
        if step >= cfg.warmup and len(agent.buffer) >= cfg.batch:
            m = agent.learn(learn_rng)
            last["critic1_loss"], last["critic2_loss"] = m["critic1_loss"], m["critic2_loss"]
            if m["actor_objective"] is not None:
                last["actor_objective"] = m["actor_objective"]
        ep_return += out.reward
        ep_fuel += out.fuel
        if out.done:
            result.episodes.append({
                "step": step + 1, "episode": ep_index, "return": ep_return, "fuel": ep_fuel,
                "terminal_soc": out.next_state.soc, "epsilon": eps, **last})
            ep_index += 1
            ep_return = ep_fuel = 0.0
            state = env.reset(cycle, soc0)
            obs = env.observe(state)
        else:
            state, obs = out.next_state, obs2
        if (step + 1) % eval_interval == 0:
            policy = GreedyPolicy(agent.actor, agent.critic1)
            report, _ = run_episode(policy, cycle, env.model, soc0, env=HevEnv(env.model))
            row = {"step": step + 1, "return": report.total_return, "fuel": report.total_fuel,
                   "terminal_soc": report.terminal_soc}
            result.evaluations.append(row)
            if report.total_return > result.best_return:
                result.best_return = report.total_return
                result.best = agent.snapshot()
            if on_eval is not None:
                on_eval(row)
    return result
