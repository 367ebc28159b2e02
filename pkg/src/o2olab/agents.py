"""TD3 agents: pretraining (behavior cloning + fitted Q evaluation, or
behavior-regularized TD3) and the shared online update rule.

The actor update minimizes ``-lambda * Q1(s, actor(s)) + beta * MSE(actor(s),
batch actions)`` where lambda is 1/mean|Q1| when Q-normalization is on.
beta = 0 with normalization off recovers plain TD3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import nn
from .data import OfflineDataset, ReplayBuffer, TransitionBatch
from .errors import NumericError
from .fsio import write_json_atomic
from .seeding import rng_for

DEFAULT_HIDDEN = (64, 64)


@dataclass(frozen=True)
class Td3Hyper:
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    target_noise: float = 0.2
    noise_clip: float = 0.5
    explore_noise: float = 0.1
    batch: int = 256
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    hidden: tuple[int, ...] = DEFAULT_HIDDEN

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "Td3Hyper":
        data = dict(data)
        data["hidden"] = tuple(data.get("hidden", DEFAULT_HIDDEN))
        return cls(**data)


@dataclass(frozen=True)
class RegularizerConfig:
    bc_coefficient: float = 0.0  # beta; 0 recovers plain TD3
    q_normalization: bool = False

    def __post_init__(self):
        if self.bc_coefficient < 0:
            raise ValueError("bc_coefficient must be >= 0")


@dataclass
class Td3Agent:
    actor: nn.DenseNet
    critic1: nn.DenseNet
    critic2: nn.DenseNet
    target_actor: nn.DenseNet
    target_critic1: nn.DenseNet
    target_critic2: nn.DenseNet
    actor_opt: nn.AdamState
    critic1_opt: nn.AdamState
    critic2_opt: nn.AdamState
    hyper: Td3Hyper
    update_count: int = 0

    @property
    def obs_dim(self) -> int:
        return self.actor.in_dim

    @property
    def action_dim(self) -> int:
        return self.actor.out_dim


def _net_seeds(seed: int) -> list[int]:
    return list(rng_for("agent-nets", seed).integers(0, 2**31, size=3))


def make_td3_agent(
    obs_dim: int, action_dim: int, hyper: Td3Hyper | None = None, seed: int = 0
) -> Td3Agent:
    hyper = hyper or Td3Hyper()
    actor_seed, c1_seed, c2_seed = _net_seeds(seed)
    actor = nn.init_net(
        (obs_dim, *hyper.hidden, action_dim),
        hidden_activation="relu",
        output_activation="tanh",
        seed=actor_seed,
    )
    critic_sizes = (obs_dim + action_dim, *hyper.hidden, 1)
    critic1 = nn.init_net(critic_sizes, "relu", "linear", seed=c1_seed)
    critic2 = nn.init_net(critic_sizes, "relu", "linear", seed=c2_seed)
    return Td3Agent(
        actor=actor,
        critic1=critic1,
        critic2=critic2,
        target_actor=actor.copy(),
        target_critic1=critic1.copy(),
        target_critic2=critic2.copy(),
        actor_opt=nn.AdamState.for_net(actor, hyper.actor_lr),
        critic1_opt=nn.AdamState.for_net(critic1, hyper.critic_lr),
        critic2_opt=nn.AdamState.for_net(critic2, hyper.critic_lr),
        hyper=hyper,
    )


def reset_parameters(agent: Td3Agent, seed: int) -> Td3Agent:
    """Re-initialize the agent in place, as if freshly constructed with
    ``seed``: new weights, zeroed optimizers, targets equal to online nets."""
    fresh = make_td3_agent(agent.obs_dim, agent.action_dim, agent.hyper, seed)
    agent.actor = fresh.actor
    agent.critic1 = fresh.critic1
    agent.critic2 = fresh.critic2
    agent.target_actor = fresh.target_actor
    agent.target_critic1 = fresh.target_critic1
    agent.target_critic2 = fresh.target_critic2
    agent.actor_opt = fresh.actor_opt
    agent.critic1_opt = fresh.critic1_opt
    agent.critic2_opt = fresh.critic2_opt
    agent.update_count = 0
    return agent


def act(
    agent: Td3Agent,
    obs: np.ndarray,
    explore: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Deterministic actor output, plus clipped Gaussian noise when exploring."""
    a = nn.forward(agent.actor, np.asarray(obs, dtype=np.float64)[None, :])[0]
    if explore:
        if rng is None:
            raise ValueError("explore=True requires an rng")
        a = a + rng.normal(0.0, agent.hyper.explore_noise, size=a.shape)
    return np.clip(a, -1.0, 1.0)


def policy_fn(agent: Td3Agent):
    """The agent's evaluation policy (no exploration noise)."""
    return lambda obs: act(agent, obs, explore=False)


def _critic_targets(agent: Td3Agent, batch: TransitionBatch, rng) -> np.ndarray:
    h = agent.hyper
    next_a = nn.forward(agent.target_actor, batch.next_obs)
    noise = np.clip(
        rng.normal(0.0, h.target_noise, size=next_a.shape), -h.noise_clip, h.noise_clip
    )
    next_a = np.clip(next_a + noise, -1.0, 1.0)
    x_next = np.concatenate([batch.next_obs, next_a], axis=1)
    q_next = np.minimum(
        nn.forward(agent.target_critic1, x_next), nn.forward(agent.target_critic2, x_next)
    )[:, 0]
    # bootstrap is masked on termination but not on time-limit truncation
    return batch.reward + h.gamma * (1.0 - batch.terminated) * q_next


def _actor_gradients(agent: Td3Agent, batch: TransitionBatch, reg: RegularizerConfig):
    """Gradient of the (optionally BC-regularized) actor loss; returns
    (Gradients, loss value, lambda)."""
    n = len(batch)
    a = nn.forward(agent.actor, batch.obs)
    x = np.concatenate([batch.obs, a], axis=1)
    q1 = nn.forward(agent.critic1, x)[:, 0]
    if reg.q_normalization:
        lam = 1.0 / max(float(np.mean(np.abs(q1))), 1e-8)
    else:
        lam = 1.0
    bc_err = a - batch.action
    loss = -lam * float(np.mean(q1)) + reg.bc_coefficient * float(np.mean(bc_err**2))
    # d(mean q1)/da through the critic's action inputs
    dq_din = nn.input_gradient(agent.critic1, x, np.full((n, 1), 1.0 / n))
    da = -lam * dq_din[:, agent.obs_dim :]
    if reg.bc_coefficient:
        da = da + (2.0 * reg.bc_coefficient / (n * agent.action_dim)) * bc_err
    return nn.backward(agent.actor, batch.obs, da), loss, lam


def td3_update(
    agent: Td3Agent,
    batch: TransitionBatch,
    reg: RegularizerConfig,
    rng: np.random.Generator,
) -> dict:
    """One TD3 step: twin-critic regression, delayed actor update, Polyak
    targets. Returns a loss report; raises NumericError on blow-up."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    h = agent.hyper
    n = len(batch)
    y = _critic_targets(agent, batch, rng)
    if not np.all(np.isfinite(y)):
        raise NumericError("non-finite critic target")

    x = np.concatenate([batch.obs, batch.action], axis=1)
    report = {}
    for name, critic, opt in (
        ("critic1_loss", agent.critic1, agent.critic1_opt),
        ("critic2_loss", agent.critic2, agent.critic2_opt),
    ):
        q = nn.forward(critic, x)[:, 0]
        err = q - y
        loss = float(np.mean(err**2))
        if not np.isfinite(loss):
            raise NumericError(
                f"critic loss is not finite at update {agent.update_count + 1}"
            )
        grads = nn.backward(critic, x, (2.0 / n) * err[:, None])
        nn.adam_step(critic, grads, opt)
        report[name] = loss

    agent.update_count += 1
    report["actor_loss"] = None
    if agent.update_count % h.policy_delay == 0:
        grads, actor_loss, lam = _actor_gradients(agent, batch, reg)
        if not np.isfinite(actor_loss):
            raise NumericError(
                f"actor loss is not finite at update {agent.update_count}"
            )
        nn.adam_step(agent.actor, grads, agent.actor_opt)
        report["actor_loss"] = actor_loss
        report["q_scale"] = lam

    nn.polyak_update(agent.target_actor, agent.actor, h.tau)
    nn.polyak_update(agent.target_critic1, agent.critic1, h.tau)
    nn.polyak_update(agent.target_critic2, agent.critic2, h.tau)
    return report


# --- pretraining ---


def bc_pretrain(
    dataset: OfflineDataset,
    steps: int,
    seed: int,
    hyper: Td3Hyper | None = None,
) -> nn.DenseNet:
    """Behavior cloning: regress the actor onto dataset actions."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    hyper = hyper or Td3Hyper()
    spec = dataset.env
    actor = nn.init_net(
        (spec.obs_dim, *hyper.hidden, spec.action_dim), "relu", "tanh",
        seed=_net_seeds(seed)[0],
    )
    opt = nn.AdamState.for_net(actor, hyper.actor_lr)
    buf = ReplayBuffer.from_dataset(dataset)
    rng = rng_for("bc", seed)
    n = hyper.batch
    for _ in range(steps):
        batch = buf.sample(n, rng)
        pred = nn.forward(actor, batch.obs)
        err = pred - batch.action
        grads = nn.backward(actor, batch.obs, (2.0 / (n * spec.action_dim)) * err)
        nn.adam_step(actor, grads, opt)
    return actor


def fqe(
    policy_net: nn.DenseNet,
    dataset: OfflineDataset,
    steps: int,
    seed: int,
    hyper: Td3Hyper | None = None,
    gamma: float | None = None,
) -> nn.DenseNet:
    """Fitted Q evaluation of a fixed policy from dataset transitions."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    hyper = hyper or Td3Hyper()
    g = hyper.gamma if gamma is None else gamma
    spec = dataset.env
    critic = nn.init_net(
        (spec.obs_dim + spec.action_dim, *hyper.hidden, 1), "relu", "linear",
        seed=_net_seeds(seed)[1],
    )
    target = critic.copy()
    opt = nn.AdamState.for_net(critic, hyper.critic_lr)
    buf = ReplayBuffer.from_dataset(dataset)
    rng = rng_for("fqe", seed)
    n = hyper.batch
    for _ in range(steps):
        batch = buf.sample(n, rng)
        next_a = nn.forward(policy_net, batch.next_obs)
        x_next = np.concatenate([batch.next_obs, next_a], axis=1)
        y = batch.reward + g * (1.0 - batch.terminated) * nn.forward(target, x_next)[:, 0]
        x = np.concatenate([batch.obs, batch.action], axis=1)
        q = nn.forward(critic, x)[:, 0]
        grads = nn.backward(critic, x, (2.0 / n) * (q - y)[:, None])
        nn.adam_step(critic, grads, opt)
        nn.polyak_update(target, critic, hyper.tau)
    return critic


def agent_from_bc_fqe(
    actor: nn.DenseNet, critic: nn.DenseNet, hyper: Td3Hyper | None = None
) -> Td3Agent:
    """Wrap a cloned actor and an FQE critic (duplicated into the twin slot)
    as a full agent ready for fine-tuning."""
    hyper = hyper or Td3Hyper()
    critic2 = critic.copy()
    return Td3Agent(
        actor=actor,
        critic1=critic,
        critic2=critic2,
        target_actor=actor.copy(),
        target_critic1=critic.copy(),
        target_critic2=critic2.copy(),
        actor_opt=nn.AdamState.for_net(actor, hyper.actor_lr),
        critic1_opt=nn.AdamState.for_net(critic, hyper.critic_lr),
        critic2_opt=nn.AdamState.for_net(critic2, hyper.critic_lr),
        hyper=hyper,
    )


def offline_rl_pretrain(
    dataset: OfflineDataset,
    steps: int,
    beta: float,
    seed: int,
    hyper: Td3Hyper | None = None,
) -> Td3Agent:
    """Behavior-regularized TD3 trained purely on dataset batches."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be > 0 for offline pretraining")
    hyper = hyper or Td3Hyper()
    spec = dataset.env
    agent = make_td3_agent(spec.obs_dim, spec.action_dim, hyper, seed)
    reg = RegularizerConfig(bc_coefficient=beta, q_normalization=True)
    buf = ReplayBuffer.from_dataset(dataset)
    rng = rng_for("offline-rl", seed)
    for _ in range(steps):
        td3_update(agent, buf.sample(hyper.batch, rng), reg, rng)
    return agent


# --- checkpoints ---

_NET_NAMES = (
    "actor",
    "critic1",
    "critic2",
    "target_actor",
    "target_critic1",
    "target_critic2",
)
_OPT_NAMES = ("actor_opt", "critic1_opt", "critic2_opt")


def save_agent(agent: Td3Agent, directory, beta: float | None = None, extra: dict | None = None) -> None:
    """Write one JSON file per net/optimizer plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in _NET_NAMES:
        write_json_atomic(directory / f"{name}.json", nn.net_to_dict(getattr(agent, name)))
    for name in _OPT_NAMES:
        write_json_atomic(directory / f"{name}.json", nn.adam_to_dict(getattr(agent, name)))
    manifest = {
        "hyper": agent.hyper.to_dict(),
        "update_count": agent.update_count,
        "beta": beta,
    }
    if extra:
        manifest.update(extra)
    write_json_atomic(directory / "manifest.json", manifest)


def load_agent(directory) -> Td3Agent:
    directory = Path(directory)
    with open(directory / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    nets = {}
    for name in _NET_NAMES:
        with open(directory / f"{name}.json", encoding="utf-8") as fh:
            nets[name] = nn.net_from_dict(json.load(fh))
    opts = {}
    for name in _OPT_NAMES:
        with open(directory / f"{name}.json", encoding="utf-8") as fh:
            opts[name] = nn.adam_from_dict(json.load(fh))
    return Td3Agent(
        **nets,
        **opts,
        hyper=Td3Hyper.from_dict(manifest["hyper"]),
        update_count=int(manifest["update_count"]),
    )
