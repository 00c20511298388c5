"""Scratch experiment: knob grid for hybrid-vs-DK final ratio. Not part of the package."""
import itertools
import sys
from dataclasses import replace
from multiprocessing import Pool

import numpy as np

import hlcsched.trainer as T
from hlcsched.baselines import build_hybrid_policy, run_dk_greedy
from hlcsched.config import preset_desk
from hlcsched.env import SchedulerEnv, split_seed
from hlcsched.trainer import SSCATrainer


def one(job):
    dk_std, ls_init, cn, batch, seed = job
    T.COST_NORMALIZATION = cn
    sc = preset_desk()
    tcfg = replace(sc.trainer, batch_size=batch)
    env = SchedulerEnv(sc.env)
    env_seed, policy_seed, _ = split_seed(seed)
    env.reset(env_seed)
    policy = build_hybrid_policy(sc.env, seed, (), include_dk=True, dk_std=dk_std)
    policy.gamma0 = policy.net.init_params(
        np.random.default_rng(split_seed(seed)[2]), log_std_init=float(np.log(ls_init)))
    tr = SSCATrainer(env, policy, tcfg, np.random.default_rng(policy_seed))
    rows = tr.train(20000)
    env2 = SchedulerEnv(sc.env)
    dk = run_dk_greedy(env2, 20000, seed)
    ma2k = [r.ma_reward for r in rows if r.slot >= 2000][0]
    return (dk_std, ls_init, cn, batch, seed, rows[-1].ma_reward / dk[-1].ma_reward,
            float(policy.p[0]), ma2k)


if __name__ == "__main__":
    jobs = list(itertools.product((0.05, 0.3), (0.5, 0.25), (10.0, 5.0), (8,), (1, 2, 3)))
    with Pool(2) as pool:
        for res in pool.imap_unordered(one, jobs):
            print(f"dk_std={res[0]} ls={res[1]} cn={res[2]} batch={res[3]} seed={res[4]}"
                  f" ratio={res[5]:.3f} p_new={res[6]:.3f} ma2k={res[7]:.0f}", flush=True)
