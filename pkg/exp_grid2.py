"""Scratch experiment: (L, batch, CN) grid on the multi-slot desk scenario."""
import itertools
from dataclasses import replace
from multiprocessing import Pool

import numpy as np

import hlcsched.trainer as T
from hlcsched.baselines import build_hybrid_policy, run_dk_greedy
from hlcsched.config import preset_desk
from hlcsched.env import SchedulerEnv, split_seed
from hlcsched.trainer import SSCATrainer


def one(job):
    L, batch, cn, seed = job
    T.COST_NORMALIZATION = cn
    base = preset_desk()
    env_cfg = replace(base.env, slot_seconds=0.25e-3)
    tcfg = replace(base.trainer, horizon=L, batch_size=batch)
    env = SchedulerEnv(env_cfg)
    env_seed, policy_seed, _ = split_seed(seed)
    env.reset(env_seed)
    policy = build_hybrid_policy(env_cfg, seed, (), include_dk=True, dk_std=0.05)
    policy.gamma0 = policy.net.init_params(
        np.random.default_rng(split_seed(seed)[2]), log_std_init=float(np.log(0.25)))
    tr = SSCATrainer(env, policy, tcfg, np.random.default_rng(policy_seed))
    rows = tr.train(20000)
    env2 = SchedulerEnv(env_cfg)
    dk = run_dk_greedy(env2, 20000, seed)
    return (L, batch, cn, seed, rows[-1].ma_reward / dk[-1].ma_reward,
            float(policy.p[0]))


if __name__ == "__main__":
    jobs = list(itertools.product((8, 16), (4, 8), (10.0, 5.0), (1, 2)))
    with Pool(2) as pool:
        for r in pool.imap_unordered(one, jobs):
            print(f"L={r[0]} batch={r[1]} cn={r[2]} seed={r[3]} ratio={r[4]:.3f} p_new={r[5]:.3f}",
                  flush=True)
