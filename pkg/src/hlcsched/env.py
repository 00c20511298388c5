"""Average-cost scheduling environment.

State is the pair of fixed-layout queue vectors plus the current channel
matrix; the action is a per-user priority weight vector; the per-slot cost is
the negated effective throughput (sum of original sizes of packets delivered
before their deadlines).

The channel is AR(1) Rayleigh block fading with per-user path loss:

    H' = rho * H + sqrt(1 - rho^2) * W,   W_ij ~ CN(0, g_i),

which stands in for a full geometry-based model while keeping runs
reproducible at desk scale; the channel interface is pluggable.

The scheduler may observe a noisy channel estimate (``csi_nmse`` > 0); the
precoder and user selection then use the estimate while realized rates are
computed on the true channel.
"""

from dataclasses import dataclass, field

import numpy as np

from .mimo_phy import LinkBudget, dbm_to_watt, default_alpha, rates
from .traffic import BITS_PER_KBIT, SlotOutcome, UserQueue, hlc_et_reward, queue_state_vectors
from .wsr import floor_weights, greedy_wsr


def split_seed(seed):
    """Independent (env, policy, init) seed sequences from one master seed.

    The environment stream is consumed identically per slot no matter which
    scheduler is acting, so runs that share a master seed see the same
    traffic and channel realization (paired comparisons across algorithms).
    """
    return tuple(np.random.SeedSequence(seed).spawn(3))


@dataclass
class EnvConfig:
    """Scenario constants of one environment instance."""

    n_t: int
    deadlines: "tuple[int, ...]"  # D_i, slots
    arrival_mean_kbit: "tuple[float, ...]"  # lambda_i, Kbit
    arrival_prob: float  # PA
    path_loss_db: "tuple[float, ...]"
    bandwidth_hz: float = 58e6
    tx_power_dbm: float = 12.0
    noise_variance_w: float = 1e-16
    channel_rho: float = 0.9
    csi_nmse: float = 0.0
    tau: float = 1.0  # slot duration in slot units (reward normalization)
    slot_seconds: float = 1e-3  # physical slot length; converts bits/s to bits/slot
    rzf_alpha: "float | None" = None  # None -> default_alpha(link)

    def __post_init__(self):
        self.deadlines = tuple(int(d) for d in self.deadlines)
        self.arrival_mean_kbit = tuple(float(x) for x in self.arrival_mean_kbit)
        self.path_loss_db = tuple(float(x) for x in self.path_loss_db)
        k = len(self.deadlines)
        if k < 1:
            raise ValueError("need at least one user")
        if len(self.arrival_mean_kbit) != k or len(self.path_loss_db) != k:
            raise ValueError("per-user fields must all have the same length")
        if self.n_t < 1:
            raise ValueError("need at least one transmit antenna")
        if any(d < 1 for d in self.deadlines):
            raise ValueError("deadlines must be >= 1 slot")
        if any(lam <= 0 for lam in self.arrival_mean_kbit):
            raise ValueError("arrival means must be positive")
        if not 0.0 <= self.arrival_prob <= 1.0:
            raise ValueError("arrival probability must be in [0, 1]")
        if not 0.0 <= self.channel_rho < 1.0:
            raise ValueError("channel correlation must be in [0, 1)")
        if self.csi_nmse < 0.0:
            raise ValueError("CSI NMSE must be >= 0")
        if self.tau <= 0.0 or self.slot_seconds <= 0.0:
            raise ValueError("tau and slot_seconds must be positive")
        # Validates power/noise/path-loss sanity as a side effect.
        self.link_budget()

    @property
    def k(self) -> int:
        return len(self.deadlines)

    @property
    def sum_deadlines(self) -> int:
        return sum(self.deadlines)

    @property
    def q_scale_bits(self) -> float:
        """Feature normalization constant: the largest mean packet size in bits."""
        return max(self.arrival_mean_kbit) * BITS_PER_KBIT

    @property
    def feature_dim(self) -> int:
        return 2 * self.sum_deadlines + 2 * self.k * self.n_t

    def queue_offsets(self) -> "list[int]":
        """Start index of each user's block in the queue vectors."""
        offsets, acc = [], 0
        for d in self.deadlines:
            offsets.append(acc)
            acc += d
        return offsets

    def link_budget(self) -> LinkBudget:
        return LinkBudget(
            noise_variance_w=self.noise_variance_w,
            bandwidth_hz=self.bandwidth_hz,
            total_power_w=dbm_to_watt(self.tx_power_dbm),
            path_loss_db=np.asarray(self.path_loss_db),
        )

    def alpha(self) -> float:
        if self.rzf_alpha is not None:
            return float(self.rzf_alpha)
        return default_alpha(self.link_budget())


@dataclass
class State:
    queue_bits: np.ndarray  # remaining sizes, layout per queue_state_vectors
    queue_original_bits: np.ndarray
    channel: np.ndarray  # (k, n_t) complex


@dataclass
class CostSample:
    state: State
    action: np.ndarray
    cost: float  # -reward, never positive


def draw_channel(rng: np.random.Generator, row_scale: np.ndarray, n_t: int) -> np.ndarray:
    """I.i.d. CN(0, row_scale_i^2) channel matrix."""
    k = row_scale.size
    real = rng.standard_normal((k, n_t))
    imag = rng.standard_normal((k, n_t))
    return row_scale[:, None] * (real + 1j * imag) / np.sqrt(2.0)


def evolve_channel(h: np.ndarray, rho: float, rng: np.random.Generator,
                   row_scale: np.ndarray) -> np.ndarray:
    """Gauss-Markov step H' = rho H + sqrt(1-rho^2) W; preserves CN(0, g_i)."""
    w = draw_channel(rng, row_scale, h.shape[1])
    return rho * h + np.sqrt(1.0 - rho * rho) * w


def observe_csi(h: np.ndarray, csi_nmse: float, rng: np.random.Generator,
                row_scale: np.ndarray) -> np.ndarray:
    """Noisy channel estimate with E||H - H_hat||^2 / E||H||^2 = csi_nmse.

    The estimation error is scaled per user so that weak users see
    proportionate errors.  csi_nmse = 0 returns H itself without consuming
    random numbers.
    """
    if csi_nmse == 0.0:
        return h
    noise = draw_channel(rng, row_scale, h.shape[1])
    return h + np.sqrt(csi_nmse) * noise


def encode_state(state: State, config: EnvConfig) -> np.ndarray:
    """Real feature vector: scaled queue vectors + interleaved re/im channel.

    Queue entries are divided by q_scale_bits; channel rows are divided by
    their path-loss amplitude so entries are unit-scale regardless of the
    link budget.  Length is 2*sum(D_i) + 2*k*n_t.
    """
    q_scale = config.q_scale_bits
    row_scale = config.link_budget().channel_row_scale()
    h_norm = (state.channel / row_scale[:, None]).ravel()
    channel_feats = np.empty(2 * h_norm.size)
    channel_feats[0::2] = h_norm.real
    channel_feats[1::2] = h_norm.imag
    return np.concatenate([
        state.queue_bits / q_scale,
        state.queue_original_bits / q_scale,
        channel_feats,
    ])


class SchedulerEnv:
    """Single-replica environment; owns queues, channel and an rng stream.

    Exact integer counters (bits and packets) are maintained for bit
    conservation audits and the drop-probability metric.
    """

    def __init__(self, config: EnvConfig):
        self.config = config
        self._link = config.link_budget()
        self._row_scale = self._link.channel_row_scale()
        self._alpha = config.alpha()
        self.rng: "np.random.Generator | None" = None
        self.state: "State | None" = None
        self.queues: "list[UserQueue]" = []
        self.slot = 0
        self.last_outcome: "SlotOutcome | None" = None
        self.reward_log: "list[float]" = []
        self._zero_counters()

    def _zero_counters(self):
        self.arrived_bits = 0
        self.delivered_original_bits = 0
        self.dropped_remaining_bits = 0
        self.dropped_served_bits = 0
        self.arrived_packets = 0
        self.delivered_packets = 0
        self.dropped_packets = 0

    def reset(self, seed) -> State:
        """Fresh episode: empty queues, i.i.d. channel, deterministic per seed."""
        self.rng = np.random.default_rng(seed)
        cfg = self.config
        self.queues = [UserQueue(i, d) for i, d in enumerate(cfg.deadlines)]
        self.slot = 0
        self.last_outcome = None
        self.reward_log = []
        self._zero_counters()
        h = draw_channel(self.rng, self._row_scale, cfg.n_t)
        zeros = np.zeros(cfg.sum_deadlines, dtype=np.int64)
        self.state = State(zeros, zeros.copy(), h)
        return self.state

    @property
    def drop_probability(self) -> float:
        if self.arrived_packets == 0:
            return 0.0
        return self.dropped_packets / self.arrived_packets

    def step(self, action) -> "tuple[State, CostSample]":
        """Advance one slot: expire, arrive, schedule, serve, cost, evolve."""
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        cfg = self.config
        w = floor_weights(np.asarray(action, dtype=float))
        if w.shape != (cfg.k,):
            raise ValueError(f"action length {w.shape} does not match {cfg.k} users")
        prev_state = self.state
        slot = self.slot

        dropped = []
        for q in self.queues:
            for packet in q.expire(slot):
                dropped.append((q.user, packet))
                self.dropped_packets += 1
                self.dropped_remaining_bits += packet.remaining_bits
                self.dropped_served_bits += packet.original_bits - packet.remaining_bits
        for q, lam in zip(self.queues, cfg.arrival_mean_kbit):
            packet = q.arrive(slot, self.rng, cfg.arrival_prob, lam)
            if packet is not None:
                self.arrived_packets += 1
                self.arrived_bits += packet.original_bits

        h_hat = observe_csi(self.state.channel, cfg.csi_nmse, self.rng, self._row_scale)
        decision = greedy_wsr(h_hat, w, self._link, self._alpha)
        if decision.scheduled:
            # Realized rates use the true channel with the precoder/power chosen
            # from the estimate.
            true_rates = rates(self.state.channel, decision.scheduled,
                               decision.precoder, decision.powers, self._link)
        else:
            true_rates = np.zeros(cfg.k)

        budgets = np.zeros(cfg.k, dtype=np.int64)
        bits_served = np.zeros(cfg.k, dtype=np.int64)
        delivered = []
        for i in decision.scheduled:
            budgets[i] = int(true_rates[i] * cfg.slot_seconds * cfg.tau)
            before = self.queues[i].backlog_bits()
            for packet in self.queues[i].serve(budgets[i]):
                delivered.append((i, packet))
                self.delivered_packets += 1
                self.delivered_original_bits += packet.original_bits
            bits_served[i] = before - self.queues[i].backlog_bits()

        outcome = SlotOutcome(delivered=delivered, dropped=dropped,
                              bits_served=bits_served, budget_bits=budgets)
        reward = hlc_et_reward(outcome, cfg.tau)
        cost = -reward

        h_next = evolve_channel(self.state.channel, cfg.channel_rho, self.rng,
                                self._row_scale)
        queue_bits, queue_orig = queue_state_vectors(self.queues, slot)
        self.state = State(queue_bits, queue_orig, h_next)
        self.slot = slot + 1
        self.last_outcome = outcome
        self.reward_log.append(reward)
        return self.state, CostSample(state=prev_state, action=w, cost=cost)

    def residual_bits(self) -> "tuple[int, int]":
        """(remaining, already served) bits of packets still queued."""
        remaining = sum(q.backlog_bits() for q in self.queues)
        served = sum(p.original_bits - p.remaining_bits
                     for q in self.queues for p in q.packets)
        return remaining, served
