"""Episode rollouts, reward shaping, PPO updates, and the grid curriculum.

Rewards combine a movement penalty proportional to normalized step
distance, a fixed bonus per newly scanned target, and a terminal goal
reward.  The optimizer sees rewards divided by the goal reward so value
regression operates near unit scale; trajectories keep the raw rewards.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .agent import NetConfig, PlanningTask, PolicyValueNet, build_model
from .autodiff import backward
from .graphenc import EncoderConfig
from .ground import goal_satisfied
from .model import Adam, GraphBatch, save_checkpoint
from .worlds import InstanceSpec, gen_scan, gen_simple, load_domain
from . import autodiff as ad

METRICS_COLUMNS = ["iter", "grid_size", "train_success", "eval_success",
                   "eval_mean_reward", "mean_plan_len", "kl", "entropy"]


class NonFiniteLoss(Exception):
    pass


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.1
    scan_bonus: float = 10.0
    goal_reward: float = 100.0
    step_limit_factor: int = 4  # episode step limit = factor * W

    def step_limit(self, W: int) -> int:
        return self.step_limit_factor * W


@dataclass(frozen=True)
class PPOConfig:
    lr: float = 1e-4
    gamma: float = 0.99
    clip: float = 0.2
    entropy_coef: float = 0.01
    kl_cutoff: float = 0.01
    gae_lambda: float = 0.95
    epochs: int = 20
    episodes_per_iter: int = 100
    hidden: int = 512


@dataclass
class Trajectory:
    """One episode: per-step records plus everything needed to replay updates."""

    states: list = field(default_factory=list)
    action_uids: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    logps: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    graphs: list = field(default_factory=list)
    action_sets: list = field(default_factory=list)  # applicable uids per step
    chosen: list = field(default_factory=list)  # index into the applicable set
    success: bool = False
    terminal: str = "step_limit"  # "success" | "step_limit" | "dead_end"
    bonus_reward: float = 0.0  # terminal reward of a zero-step success
    task: PlanningTask | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards)) + self.bonus_reward


def step_reward(task: PlanningTask, prev_state, action, next_state,
                cfg: RewardConfig) -> float:
    """Movement penalty + scan bonus + terminal goal reward for one transition."""
    before = task.unit_cells(prev_state)
    after = task.unit_cells(next_state)
    r = 0.0
    for unit, cell in after.items():
        old = before.get(unit)
        if old is not None and old != cell:
            dist = float(np.hypot(cell[0] - old[0], cell[1] - old[1]))
            r -= cfg.alpha * dist / task.W
    new_scans = len((next_state - prev_state) & task.scanned_ids)
    r += cfg.scan_bonus * new_scans
    if goal_satisfied(next_state, task.ground.goal):
        r += cfg.goal_reward
    return r


def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
        gamma: float, lam: float):
    """Generalized advantage estimation over one episode (no normalization)."""
    T = len(rewards)
    adv = np.zeros(T, dtype=np.float64)
    running = 0.0
    for t in range(T - 1, -1, -1):
        next_v = values[t + 1] if t + 1 < T else 0.0
        delta = rewards[t] + gamma * next_v * (1.0 - dones[t]) - values[t]
        running = delta + gamma * lam * running * (1.0 - dones[t])
        adv[t] = running
    return adv, adv + values[:T]


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    if len(adv) <= 1:
        return np.zeros_like(adv)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def compute_advantages(traj: Trajectory, cfg: PPOConfig):
    """(advantages, returns) for one trajectory, normalized over the episode."""
    adv, ret = gae(np.asarray(traj.rewards, dtype=np.float64),
                   np.asarray(traj.values, dtype=np.float64),
                   np.asarray(traj.dones, dtype=np.float64),
                   cfg.gamma, cfg.gae_lambda)
    return normalize_advantages(adv), ret


@dataclass(frozen=True)
class CurriculumState:
    base_size: int
    threshold: int = 25
    max_size: int = 30
    curriculum_step: int = 0
    success_in_row: int = 0

    @property
    def current_size(self) -> int:
        return min(self.base_size + self.curriculum_step, self.max_size)


def curriculum_update(c: CurriculumState, success: bool) -> CurriculumState:
    """Advance one grid cell after `threshold` consecutive successes; any
    failure resets the streak.  Size never shrinks and never passes the cap."""
    if not success:
        return replace(c, success_in_row=0)
    streak = c.success_in_row + 1
    if streak >= c.threshold:
        return replace(c, success_in_row=0, curriculum_step=c.curriculum_step + 1)
    return replace(c, success_in_row=streak)


# ---------------------------------------------------------------------------
# PPO update


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    epochs_ran: int


def ppo_update(trajs: list, cfg: PPOConfig, net: PolicyValueNet,
               optimizer: Adam, value_scale: float = 1.0) -> UpdateStats:
    """Full-batch clipped-surrogate updates, early-stopped by mean KL.

    value_scale divides rewards before GAE so the value head regresses
    near-unit targets regardless of the terminal reward magnitude.
    """
    trajs = [t for t in trajs if len(t)]
    if not trajs:
        return UpdateStats(0.0, 0.0, 0.0, 0.0, 0)

    adv_parts, ret_parts = [], []
    for traj in trajs:
        adv, ret = gae(np.asarray(traj.rewards, dtype=np.float64) / value_scale,
                       np.asarray(traj.values, dtype=np.float64),
                       np.asarray(traj.dones, dtype=np.float64),
                       cfg.gamma, cfg.gae_lambda)
        adv_parts.append(adv)
        ret_parts.append(ret)
    advantages = normalize_advantages(np.concatenate(adv_parts)).astype(np.float32)
    returns = np.concatenate(ret_parts).astype(np.float32)
    old_logp = np.concatenate([np.asarray(t.logps, dtype=np.float32)
                               for t in trajs])

    graphs = [g for t in trajs for g in t.graphs]
    batch = GraphBatch.from_graphs(graphs)
    action_features = [[t.task.features[uid] for uid in uids]
                       for t in trajs for uids in t.action_sets]
    chosen_local = [c for t in trajs for c in t.chosen]

    stats = UpdateStats(0.0, 0.0, 0.0, 0.0, 0)
    for _ in range(cfg.epochs):
        net.store.zero_grad()
        out = net.forward(batch, action_features)
        chosen_rows = out.action_offsets + np.asarray(chosen_local, dtype=np.int64)
        logp_new = ad.gather_rows(out.logp, chosen_rows)
        approx_kl = float(np.mean(old_logp - logp_new.data))
        stats.approx_kl = approx_kl
        if approx_kl > cfg.kl_cutoff:
            break
        ratio = ad.exp(ad.sub(logp_new, old_logp))
        unclipped = ad.mul(ratio, advantages)
        clipped = ad.mul(ad.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), advantages)
        policy_loss = ad.neg(ad.tmean(ad.minimum(unclipped, clipped)))
        value_loss = ad.tmean(ad.square(ad.sub(out.value, returns)))
        entropy = ad.tmean(out.entropy)
        loss = ad.sub(ad.add(policy_loss, ad.mul(value_loss, 0.5)),
                      ad.mul(entropy, cfg.entropy_coef))
        if not np.isfinite(loss.data):
            raise NonFiniteLoss(f"loss={loss.data}, kl={approx_kl}")
        backward(loss)
        optimizer.step()
        stats.policy_loss = float(policy_loss.data)
        stats.value_loss = float(value_loss.data)
        stats.entropy = float(entropy.data)
        stats.epochs_ran += 1
    return stats


# ---------------------------------------------------------------------------
# Trainer


@dataclass(frozen=True)
class TrainConfig:
    domain: str = "simple"  # "simple" or "scan"
    mode: str = "curriculum"  # "curriculum" or "random"
    min_size: int = 5
    max_size: int = 9
    iters: int = 100
    seed: int = 1
    density: float = 0.0
    num_targets: int = 2  # scan domain only
    # 25-streaks gate advancement at a sustained ~90% per-episode success
    # rate for 60-100 episode iterations; small thresholds advance on chance
    # streaks long before the current size is mastered
    curriculum_threshold: int = 25
    eval_every: int = 1
    eval_episodes: int = 20
    eval_size: int | None = None  # None: evaluate at the current training size
    ppo: PPOConfig = field(default_factory=PPOConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    net: NetConfig | None = None  # None: hidden widths from ppo.hidden

    def resolved_net(self) -> NetConfig:
        if self.net is not None:
            return self.net
        return NetConfig(hidden=self.ppo.hidden, head_hidden=self.ppo.hidden)


@dataclass
class IterationStats:
    iteration: int
    grid_size: int
    train_success: float
    eval_success: float
    eval_mean_reward: float
    mean_plan_len: float
    kl: float
    entropy: float
    env_steps: int

    def row(self) -> list:
        return [self.iteration, self.grid_size, self.train_success,
                self.eval_success, self.eval_mean_reward, self.mean_plan_len,
                self.kl, self.entropy]


class Trainer:
    def __init__(self, cfg: TrainConfig, run_dir: str | None = None):
        if cfg.domain not in ("simple", "scan"):
            raise ValueError(f"unknown domain '{cfg.domain}'")
        if cfg.mode not in ("curriculum", "random"):
            raise ValueError(f"unknown training mode '{cfg.mode}'")
        self.cfg = cfg
        self.domain = load_domain(cfg.domain)
        targets = cfg.num_targets if cfg.domain == "scan" else 0
        enc = cfg.encoder
        if enc.max_targets < targets:
            enc = EncoderConfig(enc.mode, enc.goal_aware, targets)
        self.enc_cfg = enc
        self.net_cfg = cfg.resolved_net()
        self.store, self.net, self.model_config = build_model(
            self.domain, enc, self.net_cfg, cfg.seed)
        self.model_config["train"] = {
            "domain": cfg.domain, "mode": cfg.mode, "min_size": cfg.min_size,
            "max_size": cfg.max_size, "seed": cfg.seed,
        }
        self.optimizer = Adam(self.store.parameters(), lr=cfg.ppo.lr)
        self.rng = np.random.default_rng(cfg.seed)
        self.curriculum = CurriculumState(base_size=cfg.min_size,
                                          threshold=cfg.curriculum_threshold,
                                          max_size=cfg.max_size)
        self.env_steps = 0
        self.iteration = 0
        self.history: list[IterationStats] = []
        self._task_cache: dict = {}
        self._train_instance = 0
        self._eval_instance = 0
        self.run_dir = run_dir
        self._metrics_fh = None
        if run_dir is not None:
            os.makedirs(run_dir, exist_ok=True)
            self._write_config_snapshot()
            self._metrics_fh = open(os.path.join(run_dir, "metrics.csv"), "w",
                                    newline="")
            self._metrics = csv.writer(self._metrics_fh)
            self._metrics.writerow(METRICS_COLUMNS)
            self._metrics_fh.flush()

    # -- instances -----------------------------------------------------------

    def _episode_size(self) -> int:
        if self.cfg.mode == "random":
            return int(self.rng.integers(self.cfg.min_size, self.cfg.max_size + 1))
        return self.curriculum.current_size

    def _make_task(self, W: int, instance_seed: int) -> PlanningTask:
        spec = InstanceSpec(W=W, obstacle_density=self.cfg.density,
                            num_targets=(self.cfg.num_targets
                                         if self.cfg.domain == "scan" else 0),
                            seed=instance_seed)
        if self.cfg.domain == "scan":
            problem, _ = gen_scan(spec)
        else:
            problem, _ = gen_simple(spec)
        key = (self.cfg.domain, W)
        template = self._task_cache.get(key)
        if template is not None:
            try:
                return template.rebind(problem)
            except ValueError:
                pass
        task = PlanningTask(self.domain, problem, self.enc_cfg)
        self._task_cache[key] = task
        return task

    def _next_train_task(self, W: int) -> PlanningTask:
        self._train_instance += 1
        return self._make_task(W, self.cfg.seed * 1_000_003 + self._train_instance)

    def _next_eval_task(self, W: int) -> PlanningTask:
        self._eval_instance += 1
        return self._make_task(W, (self.cfg.seed + 7_777_777) * 2_000_003
                               + self._eval_instance)

    # -- rollouts ------------------------------------------------------------

    def _policy_step(self, task: PlanningTask, state):
        actions = task.applicable_actions(state)
        if not actions:
            return None
        feats = [task.features[a.uid] for a in actions]
        with ad.no_grad():
            graph = task.encoder.encode(state)
            out = self.net.forward(GraphBatch.single(graph), [feats])
        return graph, actions, out.logp.data, float(out.value.data[0])

    def rollout(self, task: PlanningTask, greedy: bool = False,
                count_env_steps: bool = True) -> Trajectory:
        traj = Trajectory(task=task)
        state = task.ground.init
        if goal_satisfied(state, task.ground.goal):
            traj.success = True
            traj.terminal = "success"
            traj.bonus_reward = self.cfg.reward.goal_reward
            return traj
        limit = self.cfg.reward.step_limit(task.W)
        for _ in range(limit):
            stepped = self._policy_step(task, state)
            if stepped is None:
                traj.terminal = "dead_end"
                if traj.dones:
                    traj.dones[-1] = 1.0
                break
            graph, actions, logp, value = stepped
            probs = np.exp(logp.astype(np.float64))
            probs = probs / probs.sum()
            idx = int(np.argmax(probs)) if greedy else int(
                self.rng.choice(len(probs), p=probs))
            action = actions[idx]
            next_state = (state - action.delete) | action.add
            reward = step_reward(task, state, action, next_state, self.cfg.reward)
            done = goal_satisfied(next_state, task.ground.goal)
            traj.states.append(state)
            traj.action_uids.append(action.uid)
            traj.rewards.append(reward)
            traj.logps.append(float(logp[idx]))
            traj.values.append(value)
            traj.graphs.append(graph)
            traj.action_sets.append([a.uid for a in actions])
            traj.chosen.append(idx)
            traj.dones.append(0.0)
            if count_env_steps:
                self.env_steps += 1
            state = next_state
            if done:
                traj.success = True
                traj.terminal = "success"
                break
        if traj.dones:
            traj.dones[-1] = 1.0
        return traj

    # -- iteration loop ------------------------------------------------------

    def run_iteration(self) -> IterationStats:
        self.iteration += 1
        cfg = self.cfg
        trajs = []
        successes = 0
        size_seen = self._episode_size()
        for _ in range(cfg.ppo.episodes_per_iter):
            W = self._episode_size()
            size_seen = W
            task = self._next_train_task(W)
            traj = self.rollout(task, greedy=False)
            trajs.append(traj)
            successes += traj.success
            if cfg.mode == "curriculum":
                self.curriculum = curriculum_update(self.curriculum, traj.success)
        stats = ppo_update(trajs, cfg.ppo, self.net, self.optimizer,
                           value_scale=cfg.reward.goal_reward)

        eval_success = float("nan")
        eval_reward = float("nan")
        plan_len = float("nan")
        if cfg.eval_every and self.iteration % cfg.eval_every == 0:
            eval_success, eval_reward, plan_len = self.evaluate()

        grid = (size_seen if cfg.mode == "random"
                else self.curriculum.current_size)
        it = IterationStats(self.iteration, grid,
                            successes / cfg.ppo.episodes_per_iter,
                            eval_success, eval_reward, plan_len,
                            stats.approx_kl, stats.entropy, self.env_steps)
        self.history.append(it)
        if self._metrics_fh is not None:
            self._metrics.writerow(it.row())
            self._metrics_fh.flush()
            if self.iteration % 10 == 0:
                self.save(os.path.join(self.run_dir, f"ckpt-{self.iteration:04d}.bin"))
        return it

    def run(self) -> list:
        for _ in range(self.cfg.iters):
            self.run_iteration()
        if self.run_dir is not None:
            self.save(os.path.join(self.run_dir, "final.bin"))
            self._metrics_fh.close()
            self._metrics_fh = None
        return self.history

    def evaluate(self, size: int | None = None, episodes: int | None = None):
        """Greedy rollouts on fresh instances: (success rate, mean reward,
        mean successful plan length)."""
        cfg = self.cfg
        W = size or cfg.eval_size or self._episode_size()
        n = episodes or cfg.eval_episodes
        wins = 0
        rewards = []
        lengths = []
        for _ in range(n):
            task = self._next_eval_task(W)
            traj = self.rollout(task, greedy=True, count_env_steps=False)
            wins += traj.success
            rewards.append(traj.total_reward)
            if traj.success:
                lengths.append(len(traj))
        mean_len = float(np.mean(lengths)) if lengths else float("nan")
        return wins / n, float(np.mean(rewards)), mean_len

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        save_checkpoint(path, self.store, self.model_config, self.cfg.seed)

    def _write_config_snapshot(self) -> None:
        lines = []
        cfg = self.cfg
        flat = {
            "domain": cfg.domain, "mode": cfg.mode, "min_size": cfg.min_size,
            "max_size": cfg.max_size, "iters": cfg.iters, "seed": cfg.seed,
            "density": cfg.density, "num_targets": cfg.num_targets,
            "curriculum_threshold": cfg.curriculum_threshold,
            "eval_every": cfg.eval_every, "eval_episodes": cfg.eval_episodes,
            "eval_size": cfg.eval_size,
            "lr": cfg.ppo.lr, "gamma": cfg.ppo.gamma, "clip": cfg.ppo.clip,
            "entropy_coef": cfg.ppo.entropy_coef, "kl_cutoff": cfg.ppo.kl_cutoff,
            "gae_lambda": cfg.ppo.gae_lambda, "epochs": cfg.ppo.epochs,
            "episodes_per_iter": cfg.ppo.episodes_per_iter,
            "alpha": cfg.reward.alpha, "scan_bonus": cfg.reward.scan_bonus,
            "goal_reward": cfg.reward.goal_reward,
            "step_limit_factor": cfg.reward.step_limit_factor,
            "encoder_mode": self.enc_cfg.mode,
            "goal_aware": self.enc_cfg.goal_aware,
            "max_targets": self.enc_cfg.max_targets,
            "latent": self.net_cfg.latent, "hidden": self.net_cfg.hidden,
            "mlp_layers": self.net_cfg.mlp_layers,
            "head_hidden": self.net_cfg.head_hidden,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        for k, v in flat.items():
            lines.append(f"{k}={v}")
        with open(os.path.join(self.run_dir, "config.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
