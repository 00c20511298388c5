"""Stochastic successive convex approximation trainer for the hybrid policy.

Each iteration reuses the latest 2L stored experiences: the sample-average
cost J_bar and the score-weighted gradient g_bar are folded into recursively
smoothed estimates (J_tilde, g_tilde), a quadratic surrogate

    J_c(theta) = J_tilde + g_tilde^T (theta - theta_l) + sigma ||theta - theta_l||^2

is minimized in closed form over the feasible set (probability simplex for
the reuse part, coordinate box for the network part), and theta moves a step
eta_l toward the minimizer.  Step sizes chi_l = l^-kappa1, eta_l = l^-kappa2
with 0.5 < kappa1 < kappa2 <= 1.

Costs are stored normalized by COST_NORMALIZATION times the environment's
q_scale so that with the default surrogate weight (sigma = 1) the closed-form
step g/(2 sigma) stays at the scale of the feasible sets (probability simplex,
unit-ish network coordinates) regardless of packet-size units.  Reuse gains
for the softmax initialization use plain q_scale units.
"""

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .env import SchedulerEnv, encode_state
from .metrics import MetricsRow, RewardWindow
from .policy import PARAM_BOX, HybridPolicy, action_to_weights


# Extra cost-unit divisor on top of q_scale; sized so that the per-iteration
# surrogate step g/(2 sigma) moves p by fractions of the simplex rather than
# saturating at a vertex.
COST_NORMALIZATION = 10.0


@dataclass
class TrainerConfig:
    horizon: int = 32  # L; buffer capacity is 2L
    batch_size: int = 8  # new experiences per iteration
    surrogate_weight: float = 1.0  # sigma in the quadratic surrogate
    kappa1: float = 0.6  # chi_l = l^-kappa1
    kappa2: float = 0.7  # eta_l = l^-kappa2
    reuse_temperature: float = 5.0  # nu in the reuse-probability softmax
    warmup_window: int = 200  # slots per candidate when initializing p
    paper_j_normalization: bool = False  # 1/L over 2L terms instead of the mean

    def __post_init__(self):
        if self.horizon < 1 or self.batch_size < 1:
            raise ValueError("horizon and batch size must be >= 1")
        if self.surrogate_weight <= 0:
            raise ValueError("surrogate weight must be positive")
        if not 0.5 < self.kappa1 < 1.0:
            raise ValueError("kappa1 must lie in (0.5, 1)")
        if not 0.5 < self.kappa2 <= 1.0:
            raise ValueError("kappa2 must lie in (0.5, 1]")
        if not self.kappa1 < self.kappa2:
            raise ValueError("kappa1 must be smaller than kappa2")
        if self.reuse_temperature <= 0:
            raise ValueError("reuse temperature must be positive")
        if self.warmup_window < 0:
            raise ValueError("warmup window must be >= 0")


class TrainerDiverged(RuntimeError):
    """Raised when the smoothed estimates stop being finite."""


@dataclass
class Experience:
    features: np.ndarray
    action: np.ndarray
    component: int
    cost: float


class ExperienceBuffer:
    """Ring of the latest 2L experiences, oldest first."""

    def __init__(self, horizon: int):
        self.horizon = int(horizon)
        self._ring: deque = deque(maxlen=2 * self.horizon)

    def __len__(self) -> int:
        return len(self._ring)

    @property
    def full(self) -> bool:
        return len(self._ring) == 2 * self.horizon

    def push(self, features, action, component, cost):
        self._ring.append(Experience(np.asarray(features, dtype=float),
                                     np.asarray(action, dtype=float),
                                     int(component), float(cost)))

    def arrays(self):
        """(features, actions, components, costs), oldest first."""
        if not self.full:
            raise ValueError("estimators require a full buffer (2L experiences)")
        feats = np.stack([e.features for e in self._ring])
        actions = np.stack([e.action for e in self._ring])
        components = np.array([e.component for e in self._ring], dtype=int)
        costs = np.array([e.cost for e in self._ring])
        return feats, actions, components, costs


def step_sizes(iteration: int, kappa1: float = 0.6, kappa2: float = 0.7):
    """(chi_l, eta_l) = (l^-kappa1, l^-kappa2) for l >= 1."""
    if iteration < 1:
        raise ValueError("iteration index starts at 1")
    return iteration ** (-kappa1), iteration ** (-kappa2)


def estimate_j_bar(buffer: ExperienceBuffer, paper_normalization: bool = False) -> float:
    """Sample-average cost over the 2L stored experiences.

    The mean doubles as the per-step baseline in the truncated returns; the
    alternative 1/L normalization over 2L terms (twice the mean) is kept
    behind a flag for comparison.
    """
    _, _, _, costs = buffer.arrays()
    mean = float(np.mean(costs))
    return 2.0 * mean if paper_normalization else mean


def q_estimates(costs: np.ndarray, j_bar: float, horizon: int) -> np.ndarray:
    """Truncated centered returns for the older half, r = 1..L.

    Q_r = sum_{r'=0}^{L-1} (C_{r+r'} - j_bar) over the 2L-cost window.
    """
    cumulative = np.concatenate([[0.0], np.cumsum(costs)])
    return cumulative[horizon:2 * horizon] - cumulative[0:horizon] - horizon * j_bar


def estimate_q(buffer: ExperienceBuffer, r: int, j_bar: float) -> float:
    """Q estimate for the r-th (1-based) stored experience, r in [1, L]."""
    if not 1 <= r <= buffer.horizon:
        raise ValueError("r must index the older half of the buffer")
    _, _, _, costs = buffer.arrays()
    return float(q_estimates(costs, j_bar, buffer.horizon)[r - 1])


def estimate_g_bar(buffer: ExperienceBuffer, policy: HybridPolicy, j_bar: float) -> np.ndarray:
    """(1/L) sum_r Q_r * grad log pi_theta(a_r | s_r) over the older half.

    Scores are evaluated at the current theta on the stored pairs
    (experience reuse, no importance weighting).
    """
    feats, actions, _, costs = buffer.arrays()
    horizon = buffer.horizon
    q = q_estimates(costs, j_bar, horizon)
    return policy.score_batch(feats[:horizon], actions[:horizon], q / horizon)


def smooth(prev_j: float, prev_g: np.ndarray, j_bar: float, g_bar: np.ndarray,
           chi: float):
    """Recursive estimates: new = chi * fresh + (1 - chi) * previous."""
    if not 0.0 < chi <= 1.0:
        raise ValueError("chi must lie in (0, 1]")
    j_tilde = chi * j_bar + (1.0 - chi) * prev_j
    g_tilde = chi * g_bar + (1.0 - chi) * prev_g
    return j_tilde, g_tilde


def project_simplex(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {p >= 0, sum p = 1} (sorted-threshold rule).

    The projection is invariant to adding a constant to every coordinate, so
    the input is shifted by its maximum first; this keeps the threshold
    arithmetic exact even for extreme gradient-step inputs.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project a non-finite vector")
    shifted = x - x.max()
    u = np.sort(shifted)[::-1]
    css = np.cumsum(u) - 1.0
    ranks = np.arange(1, x.size + 1)
    rho = np.nonzero(u - css / ranks > 0)[0][-1]
    threshold = css[rho] / (rho + 1.0)
    return np.maximum(shifted - threshold, 0.0)


def surrogate_value(theta: np.ndarray, theta_l: np.ndarray, j_tilde: float,
                    g_tilde: np.ndarray, sigma: float) -> float:
    """J_c(theta) around theta_l."""
    delta = np.asarray(theta, dtype=float) - np.asarray(theta_l, dtype=float)
    return float(j_tilde + g_tilde @ delta + sigma * delta @ delta)


def solve_surrogate(theta: np.ndarray, g_tilde: np.ndarray, sigma: float,
                    n_p: int, box: float = PARAM_BOX) -> np.ndarray:
    """Closed-form minimizer of the surrogate over simplex x box.

    The quadratic separates per block: unconstrained minimum theta - g/(2 sigma),
    then Euclidean projection (simplex for p, coordinate clamp for gamma).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    raw = np.asarray(theta, dtype=float) - np.asarray(g_tilde, dtype=float) / (2.0 * sigma)
    p_c = project_simplex(raw[:n_p])
    gamma_c = np.clip(raw[n_p:], -box, box)
    return np.concatenate([p_c, gamma_c])


def update_theta(theta: np.ndarray, theta_c: np.ndarray, eta: float, n_p: int) -> np.ndarray:
    """Convex combination (1-eta) theta + eta theta_c; p re-projected and renormalized."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    out = (1.0 - eta) * np.asarray(theta, dtype=float) + eta * np.asarray(theta_c, dtype=float)
    p = project_simplex(out[:n_p])
    out[:n_p] = p / p.sum()
    return out


class SSCATrainer:
    """Runs the hybrid policy in an environment and optimizes theta = [p; gamma0].

    With ``heuristic_reuse=True`` the reuse probabilities are refreshed each
    iteration from a softmax over per-component reward averages instead of
    the surrogate update (the network part is still trained).
    """

    def __init__(self, env: SchedulerEnv, policy: HybridPolicy, cfg: TrainerConfig,
                 policy_rng: np.random.Generator, heuristic_reuse: bool = False):
        self.env = env
        self.policy = policy
        self.cfg = cfg
        self.rng = policy_rng
        self.heuristic_reuse = heuristic_reuse
        self.buffer = ExperienceBuffer(cfg.horizon)
        self.gain_scale = env.config.q_scale_bits
        self.cost_scale = COST_NORMALIZATION * env.config.q_scale_bits
        self.iteration = 0
        self.j_tilde = 0.0
        self.g_tilde = np.zeros(policy.n_theta)
        self.reward_window = RewardWindow()
        self.rows: "list[MetricsRow]" = []
        self._gains = None  # set by _init_reuse_probs / heuristic mode

    # -- experience collection ----------------------------------------------

    def _act_once(self, forced_component: "int | None" = None, store: bool = True) -> float:
        feats = encode_state(self.env.state, self.env.config)
        if forced_component is None:
            action, component = self.policy.sample_action_features(feats, self.rng)
        else:
            component = forced_component
            action = self.policy.sample_component_action(feats, component, self.rng)
        _, sample = self.env.step(action_to_weights(action))
        reward = -sample.cost
        self.reward_window.push(reward)
        if store:
            self.buffer.push(feats, action, component, sample.cost / self.cost_scale)
        if self._gains is not None:
            self._gains.update(component, reward / self.gain_scale)
        return reward

    def _emit_row(self, rewards: "list[float]", j_tilde: float, started: float):
        self.rows.append(MetricsRow(
            iteration=self.iteration,
            slot=self.env.slot,
            reward=float(np.mean(rewards)) if rewards else 0.0,
            ma_reward=self.reward_window.mean(),
            drop_prob=self.env.drop_probability,
            p=tuple(float(v) for v in self.policy.p),
            j_tilde=j_tilde,
            wall_clock_ms=(time.perf_counter() - started) * 1e3,
        ))

    # -- initialization ------------------------------------------------------

    def _init_reuse_probs(self, total_slots: int):
        """Probe each component for warmup_window slots, then softmax the
        normalized average rewards (probe slots are not stored: the buffer
        must be filled under the initial hybrid policy)."""
        from .baselines import ReuseGains, heuristic_reuse_probs

        window = self.cfg.warmup_window
        n = self.policy.n_components
        if self.heuristic_reuse or n > 1:
            self._gains = ReuseGains.zeros(n)
        if window == 0 or n == 1:
            return
        averages = np.zeros(n)
        for component in range(n):
            started = time.perf_counter()
            rewards = []
            for _ in range(window):
                if self.env.slot >= total_slots:
                    break
                rewards.append(self._act_once(forced_component=component, store=False))
            averages[component] = np.mean(rewards) / self.gain_scale if rewards else 0.0
            self._emit_row(rewards, float("nan"), started)
        p0 = heuristic_reuse_probs(averages, self.cfg.reuse_temperature)
        self.policy.set_reuse_probs(p0)
        if self._gains is not None:
            self._gains.gains = averages.copy()
            self._gains.counts = np.full(n, max(1, window))
        if not self.heuristic_reuse:
            self._gains = None

    # -- main loop ------------------------------------------------------------

    def train(self, total_slots: int, learn: bool = True) -> "list[MetricsRow]":
        """Run until ``total_slots`` environment slots; returns metric rows.

        With ``learn=False`` no parameter is updated and the loop reduces to
        frozen-policy evaluation with the same metrics schema.
        """
        if self.env.state is None:
            raise RuntimeError("reset the environment before training")
        cfg = self.cfg
        if learn:
            self._init_reuse_probs(total_slots)
            started = time.perf_counter()
            rewards = []
            while not self.buffer.full and self.env.slot < total_slots:
                rewards.append(self._act_once())
            if rewards:
                self._emit_row(rewards, float("nan"), started)
        while self.env.slot < total_slots:
            started = time.perf_counter()
            rewards = []
            for _ in range(cfg.batch_size):
                if self.env.slot >= total_slots:
                    break
                rewards.append(self._act_once(store=learn))
            if learn and self.buffer.full:
                self._update()
            else:
                self.iteration += 1
            self._emit_row(rewards, self.j_tilde if learn else float("nan"), started)
        return self.rows

    def _update(self):
        cfg = self.cfg
        self.iteration += 1
        chi, eta = step_sizes(self.iteration, cfg.kappa1, cfg.kappa2)
        j_bar = estimate_j_bar(self.buffer, cfg.paper_j_normalization)
        g_bar = estimate_g_bar(self.buffer, self.policy, j_bar)
        if self.iteration == 1:
            self.j_tilde, self.g_tilde = j_bar, g_bar
        else:
            self.j_tilde, self.g_tilde = smooth(self.j_tilde, self.g_tilde,
                                                j_bar, g_bar, chi)
        if not np.isfinite(self.j_tilde) or not np.all(np.isfinite(self.g_tilde)):
            raise TrainerDiverged(
                f"non-finite estimates at iteration {self.iteration}: "
                f"j_tilde={self.j_tilde}")
        n_p = self.policy.n_components
        theta = self.policy.theta()
        theta_c = solve_surrogate(theta, self.g_tilde, cfg.surrogate_weight, n_p)
        theta_next = update_theta(theta, theta_c, eta, n_p)
        if self.heuristic_reuse:
            from .baselines import heuristic_reuse_probs

            theta_next[:n_p] = heuristic_reuse_probs(self._gains.gains,
                                                     cfg.reuse_temperature)
        self.policy.set_theta(theta_next)
