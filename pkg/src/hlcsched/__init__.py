"""Hard-latency-constrained MU-MIMO downlink scheduling.

Deterministic queueing/PHY simulator, hybrid-policy trainer (stochastic
successive convex approximation over reuse probabilities and a Gaussian
policy network), and baseline schedulers for head-to-head comparison.
"""

from .env import CostSample, EnvConfig, SchedulerEnv, State, encode_state, split_seed
from .mimo_phy import LinkBudget, dbm_to_watt, equal_power, rates, rzf_precoder
from .policy import (GaussianPolicy, HybridPolicy, action_to_weights, dk_mean,
                     load_policy, save_policy)
from .traffic import Packet, SlotOutcome, UserQueue, hlc_et_reward, queue_state_vectors
from .trainer import (ExperienceBuffer, SSCATrainer, TrainerConfig, TrainerDiverged,
                      estimate_g_bar, estimate_j_bar, estimate_q, project_simplex,
                      smooth, solve_surrogate, step_sizes, update_theta)
from .wsr import ScheduleDecision, greedy_wsr, wsr_value

__version__ = "0.1.0"
