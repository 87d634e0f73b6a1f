"""Off-policy actor-critic training with a replay ring buffer.

Critic target: y = r + gamma * (1 - done) * Q'(o', mu'(o')); the actor
ascends mean Q(o, mu(o)); both target networks track the online ones by
soft updates.  The ego stage learns from the ego-safety and goal terms
only; the social stage adds the zone-intersection term and warm-starts
from ego parameters.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .lidar import HISTORY_LEN
from .networks import (
    ACTION_DIM,
    ACTION_SCALE,
    Actor,
    Critic,
    NetworkSpec,
    copy_params,
    default_network_spec,
    featurize,
    save_checkpoint,
    soft_update,
)
from .world import EnvConfig, NavEnv, Status

STAGE_REWARD_WEIGHTS = {
    "ego": (1.0, 0.0, 1.0),
    "social": (1.0, 1.0, 1.0),
}


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


class ReplayBuffer:
    """Uniform-sampling FIFO ring buffer of transitions.

    Observations are stored at half precision (ranges are normalized to
    [0.01, 1] so the quantization error is far below sensor resolution);
    reward parts are kept separate so either stage can recombine them.
    """

    def __init__(self, capacity: int, feature_shape: tuple[int, int]):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        k, b = feature_shape
        self.feat = np.zeros((capacity, k, b), np.float16)
        self.goal = np.zeros((capacity, 2), np.float32)
        self.action = np.zeros((capacity, ACTION_DIM), np.float32)
        self.reward_parts = np.zeros((capacity, 3), np.float32)
        self.next_feat = np.zeros((capacity, k, b), np.float16)
        self.next_goal = np.zeros((capacity, 2), np.float32)
        self.done = np.zeros(capacity, np.float32)
        self.pos = 0
        self.size = 0

    def add(self, feat, goal, action, reward_parts, next_feat, next_goal, done: bool):
        i = self.pos
        self.feat[i] = feat
        self.goal[i] = goal
        self.action[i] = action
        self.reward_parts[i] = reward_parts
        self.next_feat[i] = next_feat
        self.next_goal[i] = next_goal
        self.done[i] = float(done)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator, reward_weights) -> dict:
        if batch_size > self.size:
            raise ValueError("batch size exceeds buffer occupancy")
        idx = rng.integers(0, self.size, batch_size)
        w = np.asarray(reward_weights, np.float32)
        return {
            "feat": self.feat[idx].astype(np.float32),
            "goal": self.goal[idx],
            "action": self.action[idx],
            "reward": self.reward_parts[idx] @ w,
            "next_feat": self.next_feat[idx].astype(np.float32),
            "next_goal": self.next_goal[idx],
            "done": self.done[idx],
        }


@dataclass(frozen=True)
class DDPGConfig:
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    batch_size: int = 128
    buffer_capacity: int = 200_000
    # L2 pull on pre-squash logits; without it the actor can wedge into a
    # tanh rail corner where gradients vanish and clipped exploration
    # noise never samples the opposite side
    logit_penalty: float = 1e-3


class DDPG:
    """Actor-critic pair with target networks and Adam optimizers."""

    def __init__(self, spec: NetworkSpec, config: DDPGConfig, rng, dtype=np.float32):
        from .nn import Adam

        self.spec = spec
        self.config = config
        self.actor = Actor(spec, rng, dtype)
        self.critic = Critic(spec, rng, dtype)
        self.target_actor = Actor(spec, rng, dtype)
        self.target_critic = Critic(spec, rng, dtype)
        copy_params(self.actor, self.target_actor)
        copy_params(self.critic, self.target_critic)
        self.opt_actor = Adam(self.actor.params(), config.lr_actor)
        self.opt_critic = Adam(self.critic.params(), config.lr_critic)
        self.updates = 0

    def act(self, feat, goal) -> np.ndarray:
        a, _ = self.actor.forward(feat[None], goal[None])
        return a[0]

    def update(self, batch: dict) -> tuple[float, float]:
        """One critic step, one actor step, then soft target updates."""
        cfg = self.config
        n = batch["feat"].shape[0]
        # the first-layer patch matrices depend only on the inputs, so
        # every network consuming the same batch can share them
        cols_o = self.critic.trunk.im2col1(batch["feat"])
        cols_next = self.target_critic.trunk.im2col1(batch["next_feat"])

        a_next, _ = self.target_actor.forward(batch["next_feat"], batch["next_goal"], cols_next)
        q_next, _ = self.target_critic.forward(
            batch["next_feat"], batch["next_goal"], a_next, cols_next
        )
        y = batch["reward"] + cfg.gamma * (1.0 - batch["done"]) * q_next

        q, cache = self.critic.forward(batch["feat"], batch["goal"], batch["action"], cols_o)
        diff = q - y
        critic_loss = float(np.mean(diff * diff))
        _, cgrads = self.critic.backward((2.0 / n) * diff, cache, param_grads=True)
        self.opt_critic.step(cgrads)

        a, acache = self.actor.forward(batch["feat"], batch["goal"], cols_o)
        q_pi, ccache = self.critic.forward(batch["feat"], batch["goal"], a, cols_o)
        dq_da, _ = self.critic.backward(np.full(n, -1.0 / n, dtype=q_pi.dtype), ccache, param_grads=False)
        logit_grad = (2.0 * cfg.logit_penalty / n) * self.actor.logits(acache)
        agrads = self.actor.backward(dq_da, acache, logit_grad=logit_grad)
        self.opt_actor.step(agrads)

        soft_update(self.target_actor, self.actor, cfg.tau)
        soft_update(self.target_critic, self.critic, cfg.tau)
        self.updates += 1
        return critic_loss, float(np.mean(q_pi))

    # -- persistence

    def named_parts(self) -> dict:
        return {
            "actor": self.actor.params(),
            "critic": self.critic.params(),
            "target_actor": self.target_actor.params(),
            "target_critic": self.target_critic.params(),
            "opt_actor": self.opt_actor.state_dict(),
            "opt_critic": self.opt_critic.state_dict(),
        }

    def save(self, path, meta: dict) -> None:
        meta = dict(meta)
        meta["network_spec"] = self.spec.to_dict()
        meta["config_hash"] = self.spec.config_hash()
        save_checkpoint(path, self.named_parts(), meta)

    def load_parts(self, parts: dict, networks_only: bool = False) -> None:
        for name, net in (
            ("actor", self.actor),
            ("critic", self.critic),
            ("target_actor", self.target_actor),
            ("target_critic", self.target_critic),
        ):
            if name not in parts:
                continue
            ps = net.params()
            for k, v in parts[name].items():
                ps[k][...] = v
        if not networks_only:
            if "opt_actor" in parts:
                self.opt_actor.load_state_dict(parts["opt_actor"])
            if "opt_critic" in parts:
                self.opt_critic.load_state_dict(parts["opt_critic"])


# ---------------------------------------------------------------------------
# Training loop


@dataclass(frozen=True)
class TrainConfig:
    total_env_steps: int = 300_000
    warmup_steps: int = 1_000
    update_every: int = 2
    noise_sigma_start: float = 0.5
    noise_sigma_end: float = 0.05
    random_action_prob: float = 0.05  # occasional uniform action, escapes rail lock-in
    eval_every: int = 10_000
    eval_episodes: int = 5
    eval_env_config: EnvConfig | None = None  # probe distribution, else the training one
    early_stop_success: float | None = None
    checkpoint_every: int = 50_000
    scenario_cycle: tuple = (None,)
    # per-episode start placed at a random fraction of the start-goal
    # distance; frequent early arrivals bootstrap the value of reaching
    start_distance_fractions: tuple[float, float] | None = None
    divergence_threshold: float = 1e6
    ddpg: DDPGConfig = field(default_factory=DDPGConfig)


def evaluate_policy(actor: Actor, env_config: EnvConfig, episodes: int, seed: int) -> float:
    """Noise-free success rate over freshly randomized episodes."""
    ss = np.random.SeedSequence(seed)
    seeds = ss.generate_state(2 * episodes)
    successes = 0
    for e in range(episodes):
        env = NavEnv(env_config)
        obs = env.reset(map_seed=int(seeds[2 * e]), crowd_seed=int(seeds[2 * e + 1]))
        initial = max(obs.goal_vector[0], 1e-6)
        while True:
            feat, goal = featurize(obs, initial)
            a, _ = actor.forward(feat[None], goal[None])
            outcome = env.step(a[0])
            obs = outcome.observation
            if outcome.done is not Status.RUNNING:
                successes += outcome.done is Status.REACHED
                break
    return successes / episodes


def train(
    stage: str,
    env_config: EnvConfig,
    train_config: TrainConfig,
    seed: int,
    warm_start_parts: dict | None = None,
    out_dir: str | None = None,
    allow_cold_social: bool = False,
):
    """Run one training stage; returns (learner, curve records).

    Writes periodic checkpoints and an append-only JSONL curve when
    out_dir is given.  A zero budget returns the initialization (or the
    warm start) unchanged.
    """
    if stage not in STAGE_REWARD_WEIGHTS:
        raise ValueError(f"unknown stage {stage!r}")
    if stage == "social" and warm_start_parts is None and not allow_cold_social:
        raise ValueError("social stage requires an ego warm start (or an explicit override)")

    weights = STAGE_REWARD_WEIGHTS[stage]
    tc = train_config
    ss = np.random.SeedSequence(seed)
    init_ss, noise_ss, buffer_ss, env_ss, eval_ss = ss.spawn(5)
    init_rng = np.random.default_rng(init_ss)
    noise_rng = np.random.default_rng(noise_ss)
    buffer_rng = np.random.default_rng(buffer_ss)
    env_seed_rng = np.random.default_rng(env_ss)
    eval_seed = int(np.random.default_rng(eval_ss).integers(2**31))

    spec = default_network_spec(HISTORY_LEN, env_config.beam_count)
    learner = DDPG(spec, tc.ddpg, init_rng)
    if warm_start_parts is not None:
        learner.load_parts(warm_start_parts, networks_only=True)

    buffer = ReplayBuffer(min(tc.ddpg.buffer_capacity, max(tc.total_env_steps, 1)), spec.feature_shape)
    curve: list[dict] = []
    curve_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        curve_path = os.path.join(out_dir, f"curve_{stage}.jsonl")
        open(curve_path, "w").close()

    def emit(record: dict):
        curve.append(record)
        if curve_path is not None:
            with open(curve_path, "a") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")

    def checkpoint(tag: str, env_steps: int):
        if out_dir is None:
            return None
        path = os.path.join(out_dir, f"checkpoint_{stage}_{tag}.npz")
        learner.save(
            path,
            {
                "stage": stage,
                "env_steps": env_steps,
                "updates": learner.updates,
                "beam_count": env_config.beam_count,
            },
        )
        return path

    checkpoint("init", 0)
    env_steps = 0
    episode = 0
    last_eval_at = 0
    last_ckpt_at = 0
    stop = tc.total_env_steps <= 0
    best_eval = -1.0

    while not stop:
        kind = tc.scenario_cycle[episode % len(tc.scenario_cycle)]
        cfg = replace(env_config, scenario=kind)
        if tc.start_distance_fractions is not None:
            frac = float(env_seed_rng.uniform(*tc.start_distance_fractions))
            gx, gy = cfg.goal
            sx, sy = cfg.start
            cfg = replace(cfg, start=(gx + (sx - gx) * frac, gy + (sy - gy) * frac))
        env = NavEnv(cfg)
        obs = env.reset(
            map_seed=int(env_seed_rng.integers(2**31)),
            crowd_seed=int(env_seed_rng.integers(2**31)),
        )
        initial = max(obs.goal_vector[0], 1e-6)
        feat, goal = featurize(obs, initial)
        ep_return = 0.0
        ep_closs = math.nan
        outcome = None

        while True:
            sigma = tc.noise_sigma_start + (tc.noise_sigma_end - tc.noise_sigma_start) * min(
                1.0, env_steps / max(tc.total_env_steps, 1)
            )
            if env_steps < tc.warmup_steps or noise_rng.random() < tc.random_action_prob:
                action = noise_rng.uniform(-ACTION_SCALE, ACTION_SCALE, ACTION_DIM)
            else:
                action = learner.act(feat, goal)
                action = np.clip(
                    action + noise_rng.normal(0.0, sigma, ACTION_DIM),
                    -ACTION_SCALE,
                    ACTION_SCALE,
                )
            outcome = env.step(action)
            next_feat, next_goal = featurize(outcome.observation, initial)
            terminal = outcome.done in (Status.REACHED, Status.COLLIDED)
            buffer.add(
                feat,
                goal,
                action.astype(np.float32),
                outcome.reward_parts,
                next_feat,
                next_goal,
                terminal,
            )
            ep_return += float(np.dot(weights, outcome.reward_parts))
            feat, goal = next_feat, next_goal
            env_steps += 1

            if env_steps >= tc.warmup_steps and env_steps % tc.update_every == 0 and buffer.size >= tc.ddpg.batch_size:
                closs, aobj = learner.update(buffer.sample(tc.ddpg.batch_size, buffer_rng, weights))
                ep_closs = closs
                if not math.isfinite(closs) or closs > tc.divergence_threshold:
                    checkpoint("diverged", env_steps)
                    raise TrainingDiverged(
                        f"critic loss {closs:.3e} exceeded {tc.divergence_threshold:.1e}",
                        {"env_steps": env_steps, "updates": learner.updates, "critic_loss": closs},
                    )

            if env_steps - last_eval_at >= tc.eval_every:
                last_eval_at = env_steps
                probe_cfg = tc.eval_env_config if tc.eval_env_config is not None else env_config
                success = evaluate_policy(learner.actor, probe_cfg, tc.eval_episodes, eval_seed)
                if success > best_eval:
                    best_eval = success
                    checkpoint("best", env_steps)
                emit({"kind": "eval", "env_steps": env_steps, "success_rate": success})
                if tc.early_stop_success is not None and success >= tc.early_stop_success:
                    stop = True
            if env_steps - last_ckpt_at >= tc.checkpoint_every:
                last_ckpt_at = env_steps
                checkpoint(f"step{env_steps}", env_steps)
            if env_steps >= tc.total_env_steps:
                stop = True
            if stop or outcome.done is not Status.RUNNING:
                break

        emit(
            {
                "kind": "episode",
                "episode": episode,
                "env_steps": env_steps,
                "return": ep_return,
                "outcome": outcome.done.value if outcome else "none",
                "steps": env.steps,
                "critic_loss": None if math.isnan(ep_closs) else ep_closs,
                "noise_sigma": sigma if env_steps else tc.noise_sigma_start,
            }
        )
        episode += 1

    final_path = checkpoint("final", env_steps)
    emit(
        {
            "kind": "done",
            "env_steps": env_steps,
            "episodes": episode,
            "final_checkpoint": os.path.basename(final_path) if final_path else None,
        }
    )
    return learner, curve
