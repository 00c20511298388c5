"""Scenario configuration: INI-style files and built-in presets.

A scenario file is flat key/value sections plus repeated per-user and
per-old-policy sections:

    [scenario]            name, seed, slots, ablate_dk, ablate_old
    [env]                 n_t, arrival_prob, tau, slot_seconds, bandwidth_hz,
                          tx_power_dbm, noise_variance_w, channel_rho,
                          csi_nmse, rzf_alpha
    [trainer]             horizon, batch_size, surrogate_weight, kappa1,
                          kappa2, dk_std, reuse_temperature, warmup_window,
                          paper_j_normalization
    [user.0] .. [user.K-1]        deadline, arrival_mean_kbit, path_loss_db
    [old_policy.0] ..             path

Unknown sections or keys are rejected with their path.  Three presets are
built in: "config1" and "config2" (8 users, 4 antennas, 58 MHz) and "desk"
(4 users, 2 antennas, 10 MHz; finishes a full training run in minutes).
"""

import configparser
import io
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .env import EnvConfig
from .policy import DK_STD_DEFAULT
from .trainer import TrainerConfig

PRESET_NAMES = ("desk", "config1", "config2")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    name: str
    env: EnvConfig
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    dk_std: float = DK_STD_DEFAULT
    seed: int = 1
    slots: int = 20000
    old_policy_paths: "tuple[str, ...]" = ()
    ablate_dk: bool = False
    ablate_old: bool = False


_SCENARIO_KEYS = {"name", "seed", "slots", "ablate_dk", "ablate_old"}
_ENV_KEYS = {"n_t", "arrival_prob", "tau", "slot_seconds", "bandwidth_hz",
             "tx_power_dbm", "noise_variance_w", "channel_rho", "csi_nmse",
             "rzf_alpha"}
_TRAINER_KEYS = {"horizon", "batch_size", "surrogate_weight", "kappa1", "kappa2",
                 "dk_std", "reuse_temperature", "warmup_window",
                 "paper_j_normalization"}
_USER_KEYS = {"deadline", "arrival_mean_kbit", "path_loss_db"}
_OLD_KEYS = {"path"}

_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False,
                "yes": True, "no": False}


def _parse_bool(raw: str, path: str) -> bool:
    try:
        return _BOOL_VALUES[raw.strip().lower()]
    except KeyError:
        raise ConfigError(f"{path}: expected a boolean, got {raw!r}") from None


def _parse_num(raw: str, path: str, cast):
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"{path}: expected a number, got {raw!r}") from None


def _check_keys(section: str, items, allowed):
    for key in items:
        if key not in allowed:
            raise ConfigError(f"[{section}] {key}: unknown key")


def load_config(path) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    return parse_config(parser, origin=str(path))


def parse_config_text(text: str, origin: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    return parse_config(parser, origin=origin)


def parse_config(parser: configparser.ConfigParser, origin: str = "?") -> ScenarioConfig:
    users = {}
    old_paths = {}
    for section in parser.sections():
        if section == "scenario":
            _check_keys(section, parser[section], _SCENARIO_KEYS)
        elif section == "env":
            _check_keys(section, parser[section], _ENV_KEYS)
        elif section == "trainer":
            _check_keys(section, parser[section], _TRAINER_KEYS)
        elif section.startswith("user."):
            _check_keys(section, parser[section], _USER_KEYS)
            idx = _parse_num(section.split(".", 1)[1], section, int)
            users[idx] = parser[section]
        elif section.startswith("old_policy."):
            _check_keys(section, parser[section], _OLD_KEYS)
            idx = _parse_num(section.split(".", 1)[1], section, int)
            old_paths[idx] = parser[section]
        else:
            raise ConfigError(f"[{section}]: unknown section")

    if not users:
        raise ConfigError("at least one [user.N] section is required")
    if sorted(users) != list(range(len(users))):
        raise ConfigError("[user.N] sections must be numbered 0..K-1 without gaps")
    deadlines, means, losses = [], [], []
    for idx in range(len(users)):
        sec = users[idx]
        for key in _USER_KEYS:
            if key not in sec:
                raise ConfigError(f"[user.{idx}] {key}: missing key")
        deadlines.append(_parse_num(sec["deadline"], f"[user.{idx}] deadline", int))
        means.append(_parse_num(sec["arrival_mean_kbit"], f"[user.{idx}] arrival_mean_kbit", float))
        losses.append(_parse_num(sec["path_loss_db"], f"[user.{idx}] path_loss_db", float))

    env_kwargs = {"deadlines": tuple(deadlines),
                  "arrival_mean_kbit": tuple(means),
                  "path_loss_db": tuple(losses)}
    env_sec = parser["env"] if parser.has_section("env") else {}
    for key in _ENV_KEYS:
        if key not in env_sec:
            continue
        if key == "n_t":
            env_kwargs[key] = _parse_num(env_sec[key], f"[env] {key}", int)
        else:
            env_kwargs[key] = _parse_num(env_sec[key], f"[env] {key}", float)
    if "n_t" not in env_kwargs:
        raise ConfigError("[env] n_t: missing key")
    try:
        env = EnvConfig(**env_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[env]: {exc}") from exc

    trainer_kwargs = {}
    dk_std = DK_STD_DEFAULT
    if parser.has_section("trainer"):
        sec = parser["trainer"]
        for key in ("horizon", "batch_size", "warmup_window"):
            if key in sec:
                trainer_kwargs[key] = _parse_num(sec[key], f"[trainer] {key}", int)
        for key in ("surrogate_weight", "kappa1", "kappa2", "reuse_temperature"):
            if key in sec:
                trainer_kwargs[key] = _parse_num(sec[key], f"[trainer] {key}", float)
        if "paper_j_normalization" in sec:
            trainer_kwargs["paper_j_normalization"] = _parse_bool(
                sec["paper_j_normalization"], "[trainer] paper_j_normalization")
        if "dk_std" in sec:
            dk_std = _parse_num(sec["dk_std"], "[trainer] dk_std", float)
    try:
        trainer = TrainerConfig(**trainer_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[trainer]: {exc}") from exc
    if dk_std < 0:
        raise ConfigError("[trainer] dk_std: must be >= 0")

    name, seed, slots = os.path.basename(str(origin)), 1, 20000
    ablate_dk = ablate_old = False
    if parser.has_section("scenario"):
        sec = parser["scenario"]
        name = sec.get("name", name)
        seed = _parse_num(sec["seed"], "[scenario] seed", int) if "seed" in sec else seed
        slots = _parse_num(sec["slots"], "[scenario] slots", int) if "slots" in sec else slots
        if "ablate_dk" in sec:
            ablate_dk = _parse_bool(sec["ablate_dk"], "[scenario] ablate_dk")
        if "ablate_old" in sec:
            ablate_old = _parse_bool(sec["ablate_old"], "[scenario] ablate_old")

    paths = []
    for idx in sorted(old_paths):
        raw = old_paths[idx]["path"]
        if not os.path.exists(raw):
            raise ConfigError(f"[old_policy.{idx}] path: {raw!r} not found")
        paths.append(raw)

    return ScenarioConfig(name=name, env=env, trainer=trainer, dk_std=dk_std,
                          seed=seed, slots=slots, old_policy_paths=tuple(paths),
                          ablate_dk=ablate_dk, ablate_old=ablate_old)


def dump_config(sc: ScenarioConfig) -> str:
    """Deterministic INI rendering of a scenario (inverse of parse)."""
    out = io.StringIO()
    out.write("[scenario]\n")
    out.write(f"name = {sc.name}\nseed = {sc.seed}\nslots = {sc.slots}\n")
    out.write(f"ablate_dk = {str(sc.ablate_dk).lower()}\n")
    out.write(f"ablate_old = {str(sc.ablate_old).lower()}\n\n")
    env = sc.env
    out.write("[env]\n")
    out.write(f"n_t = {env.n_t}\narrival_prob = {env.arrival_prob!r}\n")
    out.write(f"tau = {env.tau!r}\nslot_seconds = {env.slot_seconds!r}\n")
    out.write(f"bandwidth_hz = {env.bandwidth_hz!r}\ntx_power_dbm = {env.tx_power_dbm!r}\n")
    out.write(f"noise_variance_w = {env.noise_variance_w!r}\n")
    out.write(f"channel_rho = {env.channel_rho!r}\ncsi_nmse = {env.csi_nmse!r}\n")
    if env.rzf_alpha is not None:
        out.write(f"rzf_alpha = {env.rzf_alpha!r}\n")
    tr = sc.trainer
    out.write("\n[trainer]\n")
    out.write(f"horizon = {tr.horizon}\nbatch_size = {tr.batch_size}\n")
    out.write(f"surrogate_weight = {tr.surrogate_weight!r}\n")
    out.write(f"kappa1 = {tr.kappa1!r}\nkappa2 = {tr.kappa2!r}\n")
    out.write(f"dk_std = {sc.dk_std!r}\nreuse_temperature = {tr.reuse_temperature!r}\n")
    out.write(f"warmup_window = {tr.warmup_window}\n")
    out.write(f"paper_j_normalization = {str(tr.paper_j_normalization).lower()}\n")
    for i in range(env.k):
        out.write(f"\n[user.{i}]\n")
        out.write(f"deadline = {env.deadlines[i]}\n")
        out.write(f"arrival_mean_kbit = {env.arrival_mean_kbit[i]!r}\n")
        out.write(f"path_loss_db = {env.path_loss_db[i]!r}\n")
    for i, path in enumerate(sc.old_policy_paths):
        out.write(f"\n[old_policy.{i}]\npath = {path}\n")
    return out.getvalue()


def preset_desk() -> ScenarioConfig:
    """Small scenario sized so a 20k-slot training run finishes in minutes."""
    env = EnvConfig(
        n_t=2,
        deadlines=(3, 4, 3, 4),
        arrival_mean_kbit=(8.0, 12.0, 8.0, 12.0),
        arrival_prob=0.3,
        path_loss_db=tuple(np.linspace(120.0, 140.0, 4)),
        bandwidth_hz=10e6,
    )
    return ScenarioConfig(name="desk", env=env)


def preset_config1() -> ScenarioConfig:
    env = EnvConfig(
        n_t=4,
        deadlines=(4, 5, 6, 7, 4, 5, 6, 7),
        arrival_mean_kbit=(22.0, 42.0, 62.0, 82.0, 22.0, 42.0, 62.0, 82.0),
        arrival_prob=0.3,
        path_loss_db=tuple(np.linspace(130.0, 150.0, 8)),
        bandwidth_hz=58e6,
    )
    return ScenarioConfig(name="config1", env=env)


def preset_config2() -> ScenarioConfig:
    env = EnvConfig(
        n_t=4,
        deadlines=(4, 5, 6, 7, 4, 5, 6, 7),
        arrival_mean_kbit=(30.0, 50.0, 70.0, 90.0, 30.0, 50.0, 70.0, 90.0),
        arrival_prob=0.3,
        path_loss_db=tuple(np.linspace(130.0, 150.0, 8)),
        bandwidth_hz=58e6,
    )
    return ScenarioConfig(name="config2", env=env)


def get_preset(name: str) -> ScenarioConfig:
    try:
        return {"desk": preset_desk, "config1": preset_config1,
                "config2": preset_config2}[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}") from None


def resolve_config(name_or_path: str) -> ScenarioConfig:
    """Preset name or path to an INI file."""
    if name_or_path in PRESET_NAMES:
        return get_preset(name_or_path)
    return load_config(name_or_path)


def variant_env(env: EnvConfig, pl_offset_db: float = 0.0,
                lambda_scale: float = 1.0) -> EnvConfig:
    """Perturbed environment for training reusable old policies."""
    if lambda_scale <= 0:
        raise ConfigError("lambda scale must be positive")
    return replace(
        env,
        path_loss_db=tuple(p + pl_offset_db for p in env.path_loss_db),
        arrival_mean_kbit=tuple(m * lambda_scale for m in env.arrival_mean_kbit),
    )
