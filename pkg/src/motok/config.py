"""Run configuration: presets, YAML files, ``key=value`` overrides and hashing."""

import copy
import hashlib
import json
from pathlib import Path

import yaml

DESK = {
    "seed": 0,
    "corpus": "corpus.jsonl",
    "checkpoint_dir": "checkpoints",
    "output_dir": "outputs",
    "data": {
        "n_entries": 1000,
        "n_joints": 8,
        "mirror": True,
        "crops_per_entry": 2,
    },
    "vq": {
        "codebook_size": 64,
        "code_dim": 32,
        "hidden": 128,
        "beta": 1.0,
        "n_steps": 2000,
        "batch_size": 32,
        "window": 64,
        "window_stride": 1,
        "lr_decay": False,
        "clip_norm": None,
        "lr": 1e-3,
        "dead_code_steps": 256,
        "dtype": "float32",
    },
    "m2t": {
        "d_model": 128,
        "n_heads": 4,
        "n_enc": 2,
        "n_dec": 2,
        "dropout": 0.1,
        "n_steps": 2000,
        "batch_size": 32,
        "lr": 5e-4,
        "beam_size": 2,
        "max_len": 30,
        "dtype": "float32",
    },
    "t2m": {
        "word_dim": 64,
        "enc_hidden": 64,
        "dec_hidden": 256,
        "att_dim": 128,
        "teacher_forcing": 0.4,
        "ia_weight": 1.0,
        "tau_start": 1.0,
        "tau_end": 0.1,
        "n_steps": 1500,
        "batch_size": 32,
        "lr": 1e-3,
        "max_tokens": 50,
        "dtype": "float32",
    },
    "extractors": {
        "word_dim": 64,
        "hidden": 128,
        "feature_dim": 64,
        "margin": 10.0,
        "n_steps": 1500,
        "batch_size": 32,
        "lr": 1e-3,
        "dtype": "float32",
    },
    "eval": {
        "repetitions": 20,
        "diversity_size": 50,
        "mm_size": 10,
        "mm_texts": 16,
    },
}

PAPER_SCALE = {
    "vq": {"codebook_size": 1024, "code_dim": 512, "hidden": 512, "n_steps": 100000, "lr": 2e-4, "dtype": "float64"},
    "m2t": {"d_model": 512, "n_heads": 8, "n_enc": 3, "n_dec": 3, "n_steps": 100000, "lr": 2e-4, "dtype": "float64"},
    "t2m": {"word_dim": 300, "enc_hidden": 256, "dec_hidden": 1024, "att_dim": 1024, "n_steps": 100000,
            "lr": 2e-4, "dtype": "float64"},
    "extractors": {"word_dim": 300, "hidden": 1024, "feature_dim": 512, "n_steps": 50000, "lr": 2e-4,
                   "dtype": "float64"},
    "eval": {"diversity_size": 300, "mm_texts": 100},
}

PRESETS = {"desk": DESK, "paper-scale": PAPER_SCALE}
STAGES = ("vq", "m2t", "t2m", "extractors")


class ConfigError(ValueError):
    pass


def merge(base, update):
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return merge(DESK, PRESETS[name]) if name != "desk" else copy.deepcopy(DESK)


def _check_keys(cfg, ref, path=""):
    """Reject unknown keys; read numeric strings (YAML takes "1e-3" as text) as numbers."""
    for key, value in cfg.items():
        if key not in ref:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(ref[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path + key!r} must be a mapping")
            _check_keys(value, ref[key], path + key + ".")
        elif isinstance(ref[key], (int, float)) and not isinstance(ref[key], bool) and isinstance(value, str):
            try:
                cfg[key] = float(value)
            except ValueError:
                raise ConfigError(f"config key {path + key!r} must be a number, got {value!r}") from None


def parse_override(text):
    """``section.key=value`` with the value parsed as YAML (numbers, bools, strings)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    out = yaml.safe_load(raw)
    for part in reversed(key.strip().split(".")):
        out = {part: out}
    return out


def load_config(path=None, preset_name="desk", overrides=()):
    """Resolve preset, then file values (which may name their own ``preset``), then overrides."""
    file_cfg = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} does not exist")
        file_cfg = yaml.safe_load(p.read_text()) or {}
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        preset_name = file_cfg.pop("preset", preset_name)
    cfg = preset(preset_name)
    _check_keys(file_cfg, cfg)
    cfg = merge(cfg, file_cfg)
    for text in overrides:
        o = parse_override(text)
        _check_keys(o, cfg)
        cfg = merge(cfg, o)
    if cfg.get("seed") is None:
        raise ConfigError("a seed is mandatory")
    return cfg


def config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


PATH_KEYS = ("corpus", "checkpoint_dir", "output_dir")


def settings_hash(cfg):
    """Hash of the settings that affect results; file locations are left out."""
    return config_hash({k: v for k, v in cfg.items() if k not in PATH_KEYS})


def stage_hash(cfg, stage, upstream=()):
    """Hash of everything a stage's result depends on, including upstream artifact hashes."""
    return config_hash({"seed": cfg["seed"], "data": cfg["data"], stage: cfg[stage], "upstream": list(upstream)})


def dump_config(cfg):
    return yaml.safe_dump(cfg, sort_keys=True)
