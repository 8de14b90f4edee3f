"""Pipeline configuration: one JSON file, environment overrides, CLI flags.

Precedence, lowest to highest: built-in defaults, the config file, the
ARIDPROB_SEED / ARIDPROB_OUT environment variables, command-line flags.
A master seed (env or flag) sets synth.seed, network.seed and
train.shuffle_seed to seed, seed+1, seed+2.
"""

import json
import os
from dataclasses import dataclass

from .errors import ValidationError
from .grid import DEFAULT_SPEC, GridSpec, SynthConfig
from .network import TrainConfig
from .pipeline import BasisConfig

ENV_SEED = "ARIDPROB_SEED"
ENV_OUT = "ARIDPROB_OUT"


def default_config_dict() -> dict:
    """The documented defaults: study domain, basis and training settings."""
    return {
        "grid": {
            "lat_min": DEFAULT_SPEC.lat_min,
            "lat_max": DEFAULT_SPEC.lat_max,
            "lon_min": DEFAULT_SPEC.lon_min,
            "lon_max": DEFAULT_SPEC.lon_max,
            "resolution": DEFAULT_SPEC.resolution,
            "year_start": DEFAULT_SPEC.year_start,
            "year_end": DEFAULT_SPEC.year_end,
        },
        "synth": {
            "seed": 42,
            "precip_gradient": 0.8,
            "precip_base": 8.0,
            "noise_sd": 1.0,
            "temp_base": 28.0,
            "temp_lapse": 0.4,
            "seasonal_amp": 0.3,
        },
        "basis": {
            "spatial_grid_side": 5,
            "temporal_count": 5,
            "bandwidth_rule": "max_distance",
            "standardize_covariates": True,
            "clamp_pr": None,
        },
        "network": {
            "hidden_widths": None,  # null: two hidden layers as wide as the input
            "dropout_rate": 0.5,
            "seed": 7,
        },
        "train": {
            "epochs": 100,
            "batch_size": 1024,
            "shuffle_seed": 99,
            "early_stop_patience": 10,
            "validation_fraction": 0.1,
            "learning_rate": 0.001,
            "beta1": 0.9,
            "beta2": 0.999,
            "epsilon": 1e-8,
        },
        "years": {
            "train": [1960, 1970],
            "test": [1971, 1989],
        },
        "output": {
            "out_dir": "aridprob_out",
            "format": "binary",
            "render_scale": 1,
            "render_palette": "viridis",
        },
    }


@dataclass(frozen=True)
class PipelineConfig:
    spec: GridSpec
    synth: SynthConfig
    basis: BasisConfig
    hidden_widths: tuple
    dropout_rate: float
    network_seed: int
    train: TrainConfig
    train_years: tuple
    test_years: tuple
    out_dir: str
    output_format: str
    render_scale: int
    render_palette: str

    def __post_init__(self):
        t0, t1 = self.train_years
        s0, s1 = self.test_years
        if t1 < t0 or s1 < s0:
            raise ValidationError("year ranges must be start <= end")
        if not (t1 < s0 or s1 < t0):
            raise ValidationError(
                f"train years {t0}..{t1} and test years {s0}..{s1} must be disjoint"
            )
        for name, (a, b) in (("train", self.train_years), ("test", self.test_years)):
            if a < self.spec.year_start or b > self.spec.year_end:
                raise ValidationError(
                    f"{name} years {a}..{b} fall outside the grid years "
                    f"{self.spec.year_start}..{self.spec.year_end}"
                )
        if self.output_format not in ("binary", "csv"):
            raise ValidationError(f"unknown output format {self.output_format!r}")


def _merge(defaults: dict, override: dict, path="") -> dict:
    out = dict(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise ValidationError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def load_pipeline_config(path=None, seed=None, out_dir=None) -> PipelineConfig:
    """Resolve defaults, file, environment, and flags into a PipelineConfig."""
    data = default_config_dict()
    if path is not None:
        if not os.path.exists(path):
            raise ValidationError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(user, dict):
            raise ValidationError(f"config file {path} must hold a JSON object")
        data = _merge(data, user)

    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None:
        try:
            master = int(env_seed)
        except ValueError:
            raise ValidationError(f"{ENV_SEED} must be an integer, got {env_seed!r}")
    else:
        master = None
    if seed is not None:
        master = seed
    if master is not None:
        data["synth"]["seed"] = master
        data["network"]["seed"] = master + 1
        data["train"]["shuffle_seed"] = master + 2

    env_out = os.environ.get(ENV_OUT)
    if env_out is not None:
        data["output"]["out_dir"] = env_out
    if out_dir is not None:
        data["output"]["out_dir"] = out_dir

    spec = GridSpec(**data["grid"])
    synth = SynthConfig(spec=spec, **data["synth"])
    basis_data = dict(data["basis"])
    if basis_data.get("clamp_pr") is not None:
        basis_data["clamp_pr"] = tuple(basis_data["clamp_pr"])
    basis_cfg = BasisConfig(**basis_data)
    net = data["network"]
    hidden = net["hidden_widths"]
    return PipelineConfig(
        spec=spec,
        synth=synth,
        basis=basis_cfg,
        hidden_widths=None if hidden is None else tuple(int(w) for w in hidden),
        dropout_rate=float(net["dropout_rate"]),
        network_seed=int(net["seed"]),
        train=TrainConfig(**data["train"]),
        train_years=tuple(data["years"]["train"]),
        test_years=tuple(data["years"]["test"]),
        out_dir=data["output"]["out_dir"],
        output_format=data["output"]["format"],
        render_scale=int(data["output"]["render_scale"]),
        render_palette=data["output"]["render_palette"],
    )
