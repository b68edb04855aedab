"""Run configuration: named presets plus YAML overrides.

A config is a nested dict with sections ``ladder``, ``data``,
``autoencoder`` and ``gan``. ``configs/example.yaml`` in the repository
documents every key.
"""
from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .pointcloud import ResolutionLadder
from .training import TrainConfig

PRESETS = {
    # hyperparameters of the published ShapeNet runs
    "paper": {
        "ladder": {"n0": 512, "K": 2, "latent_dims": [128, 128, 128]},
        "data": {
            "n_shapes": 9000,
            "kinds": ["sphere", "torus", "box", "cylinder"],
            "test_fraction": 0.15,
            "nested": True,
            "train_set_sizes": {"airplane": 3046, "table": 7509, "chair": 5778, "car": 6497,
                                "sofa": 4348, "multiclass": 9000},
        },
        "autoencoder": {"epochs": 500, "learning_rate": 5e-4, "beta1": 0.9, "batch_size": 50},
        "gan": {"epochs": 200, "learning_rate": 1e-4, "beta1": 0.9, "batch_size": 50,
                "gan_loss": "nonsaturating", "condition_discriminator": True,
                "rough_source": "ground_truth", "generator_final_scale": 0.1},
    },
    # laptop-scale: 200 synthetic shapes, 64 -> 128 -> 256 points
    "desk": {
        "ladder": {"n0": 64, "K": 2, "latent_dims": [128, 128, 128]},
        "data": {"n_shapes": 200, "kinds": ["sphere", "torus", "box", "cylinder"],
                 "test_fraction": 0.25, "nested": True},
        "autoencoder": {"epochs": 100, "learning_rate": 5e-4, "beta1": 0.9, "batch_size": 10},
        # decoded rough codes match what the generators see at sampling time
        "gan": {"epochs": 1000, "learning_rate": 1e-4, "beta1": 0.9, "batch_size": 10,
                "gan_loss": "nonsaturating", "condition_discriminator": True,
                "rough_source": "decoded", "generator_final_scale": 0.0},
    },
}

_TRAIN_KEYS = set(TrainConfig.__dataclass_fields__)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, preset: str | None = None) -> dict:
    """Preset (``desk`` unless the file or argument names one) overlaid with
    the YAML file at ``path``."""
    override = {}
    if path is not None:
        override = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(override, dict):
            raise ValueError(f"{path}: config must be a mapping")
    name = preset or override.pop("preset", None) or "desk"
    override.pop("preset", None)
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    unknown = set(override) - {"ladder", "data", "autoencoder", "gan", "seed"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    cfg = _merge(PRESETS[name], override)
    cfg["preset"] = name
    ladder_of(cfg)  # validate early
    return cfg


def ladder_of(cfg: dict) -> ResolutionLadder:
    return ResolutionLadder.from_dict(cfg["ladder"])


def train_config(cfg: dict, section: str, seed: int = 0) -> TrainConfig:
    """:class:`TrainConfig` for ``autoencoder`` or ``gan``; extra keys of the
    section (GAN options) are ignored here."""
    values = {k: v for k, v in cfg[section].items() if k in _TRAIN_KEYS}
    values.setdefault("seed", seed)
    return TrainConfig(**values)
