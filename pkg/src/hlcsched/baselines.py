"""Reference schedulers and the softmax reuse-probability rule.

The comparison suite: the deterministic queue-weighted greedy expert, the
single-policy trainer (no reuse), the heuristic-reuse trainer (softmax
probabilities, network still trained), and the full hybrid trainer.  All
runners emit the same metrics schema and derive their rng streams from one
master seed via ``split_seed`` so traces are pairable across algorithms.
"""

from dataclasses import dataclass

import numpy as np

from .env import EnvConfig, SchedulerEnv, encode_state, split_seed
from .metrics import MetricsRow, RewardWindow
from .policy import DK_STD_DEFAULT, GaussianPolicy, HybridPolicy, action_to_weights, dk_mean
from .trainer import SSCATrainer, TrainerConfig

GAIN_EMA = 0.95


def heuristic_reuse_probs(gains, temperature: float) -> np.ndarray:
    """Softmax reuse probabilities Pr(pi_n) = exp(nu W_n) / sum_j exp(nu W_j)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    w = np.asarray(gains, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("gains must be finite")
    z = temperature * w
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass
class ReuseGains:
    """Per-component average reward (exponential moving average) and visits."""

    gains: np.ndarray
    counts: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ReuseGains":
        return cls(gains=np.zeros(n), counts=np.zeros(n, dtype=int))

    def update(self, component: int, value: float):
        if self.counts[component] == 0:
            self.gains[component] = value
        else:
            self.gains[component] = GAIN_EMA * self.gains[component] + (1.0 - GAIN_EMA) * value
        self.counts[component] += 1


def _eval_row(iteration, env, reward, window):
    return MetricsRow(iteration=iteration, slot=env.slot, reward=reward,
                      ma_reward=window.mean(), drop_prob=env.drop_probability,
                      p=(1.0,), j_tilde=float("nan"))


def run_dk_greedy(env: SchedulerEnv, slots: int, seed) -> "list[MetricsRow]":
    """Queue-weighted greedy scheduling, one row per slot, no policy noise."""
    env_seed, _, _ = split_seed(seed)
    state = env.reset(env_seed)
    window = RewardWindow()
    rows = []
    for t in range(slots):
        state, sample = env.step(dk_mean(state, env.config))
        reward = -sample.cost
        window.push(reward)
        rows.append(_eval_row(t + 1, env, reward, window))
    return rows


def build_hybrid_policy(config: EnvConfig, seed, old_policies=(),
                        include_dk: bool = True,
                        dk_std: float = DK_STD_DEFAULT) -> HybridPolicy:
    """Fresh hybrid policy with a seed-determined network initialization."""
    _, _, init_seed = split_seed(seed)
    net = GaussianPolicy(config.feature_dim, config.k)
    gamma0 = net.init_params(np.random.default_rng(init_seed))
    return HybridPolicy(config, gamma0, old_policies=old_policies,
                        include_dk=include_dk, dk_std=dk_std, net=net)


def run_training(env: SchedulerEnv, slots: int, seed, tcfg: TrainerConfig,
                 old_policies=(), include_dk: bool = True,
                 dk_std: float = DK_STD_DEFAULT, heuristic_reuse: bool = False,
                 learn: bool = True):
    """Shared training/evaluation loop; returns (rows, trainer)."""
    env_seed, policy_seed, _ = split_seed(seed)
    env.reset(env_seed)
    policy = build_hybrid_policy(env.config, seed, old_policies, include_dk, dk_std)
    trainer = SSCATrainer(env, policy, tcfg, np.random.default_rng(policy_seed),
                          heuristic_reuse=heuristic_reuse)
    rows = trainer.train(slots, learn=learn)
    return rows, trainer


def run_single_policy(env: SchedulerEnv, slots: int, seed, tcfg: TrainerConfig):
    """Trainer restricted to the new policy alone: p = (1), no reuse."""
    return run_training(env, slots, seed, tcfg, old_policies=(), include_dk=False)


def run_heuristic_reuse(env: SchedulerEnv, slots: int, seed, tcfg: TrainerConfig,
                        old_policies=(), include_dk: bool = True,
                        dk_std: float = DK_STD_DEFAULT):
    """Same mixture as the full hybrid, but p follows the softmax rule."""
    return run_training(env, slots, seed, tcfg, old_policies=old_policies,
                        include_dk=include_dk, dk_std=dk_std, heuristic_reuse=True)


def run_frozen_eval(env: SchedulerEnv, slots: int, seed, policy: HybridPolicy,
                    tcfg: TrainerConfig, refresh_probs: bool = False) -> "list[MetricsRow]":
    """Frozen-policy rollout: no parameter learning, actions are component means.

    Mixtures first set p by probing each component for warmup_window slots and
    taking the reward softmax; with ``refresh_probs`` the probabilities keep
    following the moving gains (heuristic mode), otherwise they stay fixed.
    """
    env_seed, policy_seed, _ = split_seed(seed)
    env.reset(env_seed)
    rng = np.random.default_rng(policy_seed)
    window = RewardWindow()
    rows = []
    q_scale = env.config.q_scale_bits
    n = policy.n_components
    gains = ReuseGains.zeros(n)

    def act(component):
        feats = encode_state(env.state, env.config)
        action = policy.component_mean(feats, component)
        _, sample = env.step(action_to_weights(action))
        reward = -sample.cost
        window.push(reward)
        gains.update(component, reward / q_scale)
        return reward

    def emit(iteration, reward):
        rows.append(MetricsRow(iteration=iteration, slot=env.slot, reward=reward,
                               ma_reward=window.mean(), drop_prob=env.drop_probability,
                               p=tuple(float(v) for v in policy.p),
                               j_tilde=float("nan")))

    iteration = 0
    if n > 1 and tcfg.warmup_window > 0:
        averages = np.zeros(n)
        for m in range(n):
            rewards = []
            while len(rewards) < tcfg.warmup_window and env.slot < slots:
                iteration += 1
                rewards.append(act(m))
                emit(iteration, rewards[-1])
            averages[m] = np.mean(rewards) / q_scale if rewards else 0.0
        policy.set_reuse_probs(heuristic_reuse_probs(averages, tcfg.reuse_temperature))
        gains.gains = averages.copy()
    while env.slot < slots:
        iteration += 1
        m = int(rng.choice(n, p=policy.p)) if n > 1 else 0
        reward = act(m)
        if refresh_probs and n > 1:
            policy.set_reuse_probs(heuristic_reuse_probs(gains.gains,
                                                         tcfg.reuse_temperature))
        emit(iteration, reward)
    return rows
