"""Run configuration: one flat record covering every tunable, loadable from a
TOML or JSON file with FOGFLOW_* environment overrides."""

import dataclasses
import json
import os
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

ENV_PREFIX = "FOGFLOW_"


@dataclass
class TrainConfig:
    # datasets and outputs
    synthetic_manifest: str = ""
    clean_manifest: str = ""
    fog_manifest: str = ""
    out_dir: str = "runs/fogflow"
    log_csv: str = ""  # defaults to <out_dir>/losses.csv

    # schedule
    seed: int = 0
    batch_size: int = 3
    crop_height: int = 256
    crop_width: int = 512
    total_cycles: int = 1000
    checkpoint_every: int = 1000
    keep_checkpoints: int = 3

    # optimizer
    lr: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999

    # loss weights
    w_epe_sup: float = 1.0
    w_l1_sup: float = 1.0
    w_con: float = 10.0
    w_epe_cross: float = 1.0
    w_gan: float = 0.5
    w_hazeline: float = 1.0
    w_flow_con: float = 1.0

    # switches
    multiscale_epe: bool = True
    use_hazeline: bool = True
    use_mask_clean: bool = True
    use_mask_fog: bool = True
    use_transform: bool = True
    mask_tau: float = 0.05

    # synthetic fog ranges
    beta_min: float = 0.02
    beta_max: float = 0.12
    atmo_base_min: float = 0.6
    atmo_base_max: float = 0.9
    atmo_spread: float = 0.1

    # network
    d_max: int = 4
    patch_size: int = 15
    device: str = "cpu"

    def crop_size(self):
        return (self.crop_height, self.crop_width)

    def resolved_log_csv(self):
        return self.log_csv or os.path.join(self.out_dir, "losses.csv")

    def validate(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.crop_height % 64 or self.crop_width % 64:
            raise ValueError("crop size must be divisible by 64")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.beta_min <= self.beta_max):
            raise ValueError("need 0 <= beta_min <= beta_max")
        if self.total_cycles < 1:
            raise ValueError("total_cycles must be >= 1")
        if self.mask_tau <= 0:
            raise ValueError("mask_tau must be positive")
        return self

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def _coerce(value, target_type):
    if target_type is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {value!r}")
    return target_type(value)


def _field_types():
    defaults = TrainConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in dataclasses.fields(TrainConfig)}


def _from_mapping(mapping):
    types = _field_types()
    values = {}
    for key, value in mapping.items():
        if key not in types:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = _coerce(value, types[key])
    return TrainConfig(**values)


def load_config(path=None, env=None):
    """Defaults, overlaid with a TOML/JSON file, overlaid with FOGFLOW_* env vars."""
    mapping = {}
    if path is not None:
        with open(path, "rb") as fh:
            if str(path).endswith(".json"):
                mapping = json.load(fh)
            else:
                mapping = tomllib.load(fh)
    config = _from_mapping(mapping)
    env = os.environ if env is None else env
    types = _field_types()
    overrides = {}
    for name, field_type in types.items():
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            overrides[name] = _coerce(env[env_key], field_type)
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config
