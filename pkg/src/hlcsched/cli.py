"""Command-line harness: train, eval, make-old-policy, presets.

Every run is fully determined by (config, seed): rerunning a command with the
same inputs produces a byte-identical metrics CSV.
"""

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .baselines import (build_hybrid_policy, run_dk_greedy, run_frozen_eval,
                        run_single_policy)
from .config import ConfigError, PRESET_NAMES, dump_config, get_preset, resolve_config
from .env import SchedulerEnv, split_seed
from .metrics import MetricsRow, write_metrics_csv
from .policy import load_policy, save_policy
from .trainer import SSCATrainer, TrainerDiverged

EVAL_BASELINES = ("dk", "single", "heuristic", "hybrid")


def _add_common(parser):
    parser.add_argument("--config", default="desk",
                        help=f"preset name {PRESET_NAMES} or path to an INI file")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--slots", type=int, help="override the slot budget")
    parser.add_argument("--batch", type=int, help="override the trainer batch size")
    parser.add_argument("--csi-nmse", type=float, dest="csi_nmse",
                        help="override the channel-estimate NMSE")
    parser.add_argument("--out", help="output CSV path (policy file for make-old-policy)")


def _apply_overrides(sc, args):
    if getattr(args, "seed", None) is not None:
        sc = replace(sc, seed=args.seed)
    if getattr(args, "slots", None) is not None:
        sc = replace(sc, slots=args.slots)
    if getattr(args, "batch", None) is not None:
        sc = replace(sc, trainer=replace(sc.trainer, batch_size=args.batch))
    if getattr(args, "csi_nmse", None) is not None:
        sc = replace(sc, env=replace(sc.env, csi_nmse=args.csi_nmse))
    if getattr(args, "ablate_dk", False):
        sc = replace(sc, ablate_dk=True)
    if getattr(args, "ablate_old", False):
        sc = replace(sc, ablate_old=True)
    if getattr(args, "old_policy", None):
        for path in args.old_policy:
            if not os.path.exists(path):
                raise ConfigError(f"old policy file {path!r} not found")
        sc = replace(sc, old_policy_paths=sc.old_policy_paths + tuple(args.old_policy))
    return sc


def _load_old_policies(sc):
    if sc.ablate_old:
        return []
    out = []
    for path in sc.old_policy_paths:
        with open(path, "rb") as fh:
            out.append(load_policy(fh.read()))
    return out


def _diagnostic_row(trainer, exc):
    nan = float("nan")
    return MetricsRow(iteration=trainer.iteration, slot=trainer.env.slot,
                      reward=nan, ma_reward=nan, drop_prob=trainer.env.drop_probability,
                      p=tuple(float(v) for v in trainer.policy.p), j_tilde=nan)


def cmd_train(args) -> int:
    sc = _apply_overrides(resolve_config(args.config), args)
    old = _load_old_policies(sc)
    env = SchedulerEnv(sc.env)
    env_seed, policy_seed, _ = split_seed(sc.seed)
    env.reset(env_seed)
    policy = build_hybrid_policy(sc.env, sc.seed, old, include_dk=not sc.ablate_dk,
                                 dk_std=sc.dk_std)
    trainer = SSCATrainer(env, policy, sc.trainer, np.random.default_rng(policy_seed))
    code = 0
    try:
        trainer.train(sc.slots)
    except TrainerDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        trainer.rows.append(_diagnostic_row(trainer, exc))
        code = 2
    out = args.out or f"{sc.name}_seed{sc.seed}.csv"
    write_metrics_csv(out, trainer.rows)
    if code == 0:
        policy_out = args.policy_out or out + ".policy.bin"
        with open(policy_out, "wb") as fh:
            fh.write(save_policy(policy.net, policy.gamma0))
        print(f"wrote {out} and {policy_out}")
    return code


def cmd_eval(args) -> int:
    sc = _apply_overrides(resolve_config(args.config), args)
    env = SchedulerEnv(sc.env)
    target = args.target
    if target == "dk":
        rows = run_dk_greedy(env, sc.slots, sc.seed)
    else:
        if target == "single":
            policy = build_hybrid_policy(sc.env, sc.seed, (), include_dk=False,
                                         dk_std=sc.dk_std)
        elif target in ("hybrid", "heuristic"):
            old = _load_old_policies(sc)
            policy = build_hybrid_policy(sc.env, sc.seed, old,
                                         include_dk=not sc.ablate_dk, dk_std=sc.dk_std)
        elif os.path.exists(target):
            with open(target, "rb") as fh:
                net, gamma = load_policy(fh.read())
            from .policy import HybridPolicy

            policy = HybridPolicy(sc.env, gamma, (), include_dk=False, net=net)
        else:
            print(f"error: unknown baseline or policy file {target!r}; "
                  f"expected one of {EVAL_BASELINES} or an existing file",
                  file=sys.stderr)
            return 2
        if args.policy and target in ("hybrid", "heuristic"):
            with open(args.policy, "rb") as fh:
                net, gamma = load_policy(fh.read())
            if not net.same_arch(policy.net):
                print("error: --policy architecture does not match the scenario",
                      file=sys.stderr)
                return 2
            policy.gamma0 = gamma.copy()
        rows = run_frozen_eval(env, sc.slots, sc.seed, policy, sc.trainer,
                               refresh_probs=(target == "heuristic"))
    out = args.out or f"{sc.name}_eval_seed{sc.seed}.csv"
    write_metrics_csv(out, rows)
    print(f"wrote {out}")
    return 0


def cmd_make_old_policy(args) -> int:
    from .config import variant_env

    sc = _apply_overrides(resolve_config(args.config), args)
    env_cfg = variant_env(sc.env, pl_offset_db=args.pl_offset_db,
                          lambda_scale=args.lambda_scale)
    env = SchedulerEnv(env_cfg)
    try:
        _, trainer = run_single_policy(env, sc.slots, sc.seed, sc.trainer)
    except TrainerDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out or f"{sc.name}_old_seed{sc.seed}.policy.bin"
    with open(out, "wb") as fh:
        fh.write(save_policy(trainer.policy.net, trainer.policy.gamma0))
    print(f"wrote {out}")
    return 0


def cmd_presets(_args) -> int:
    for name in PRESET_NAMES:
        print(f"# ---- preset: {name} ----")
        print(dump_config(get_preset(name)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hlcsched",
        description="Hard-latency-constrained MU-MIMO scheduling simulator and trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the hybrid policy")
    _add_common(p_train)
    p_train.add_argument("--ablate-dk", action="store_true",
                         help="drop the expert component from the mixture")
    p_train.add_argument("--ablate-old", action="store_true",
                         help="drop the reloaded old policies from the mixture")
    p_train.add_argument("--old-policy", action="append",
                         help="add a saved policy file as a frozen component")
    p_train.add_argument("--policy-out", help="where to save the trained network")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="frozen-policy evaluation")
    p_eval.add_argument("target",
                        help=f"one of {EVAL_BASELINES} or a saved policy file")
    _add_common(p_eval)
    p_eval.add_argument("--ablate-dk", action="store_true")
    p_eval.add_argument("--ablate-old", action="store_true")
    p_eval.add_argument("--old-policy", action="append")
    p_eval.add_argument("--policy", help="saved network for the mixture's new component")
    p_eval.set_defaults(func=cmd_eval)

    p_old = sub.add_parser("make-old-policy",
                           help="train a single policy under a perturbed scenario and save it")
    _add_common(p_old)
    p_old.add_argument("--pl-offset-db", type=float, default=0.0,
                       help="path-loss offset of the variant environment")
    p_old.add_argument("--lambda-scale", type=float, default=1.0,
                       help="arrival-size scaling of the variant environment")
    p_old.set_defaults(func=cmd_make_old_policy)

    p_presets = sub.add_parser("presets", help="print the built-in scenario presets")
    p_presets.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
