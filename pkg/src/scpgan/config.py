"""Training configuration and the ablation mode grid.

The JSON form mirrors the dataclasses field for field.  Unknown keys and
invalid values raise ``ConfigError`` carrying the dotted path of the field.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dsp import StftParams
from .errors import ConfigError, InvalidParams
from .losses import GenLossConfig

SC_CHOICES = ("off", "sc2", "sc3")

# Ablation rows in the order they are reported.
MODES = {
    "baseline": (False, "off", False),
    "nd": (True, "off", False),
    "sc2": (False, "sc2", False),
    "cp": (False, "off", True),
    "nd-sc3": (True, "sc3", False),
    "nd-cp": (True, "off", True),
    "sc2-cp": (False, "sc2", True),
    "nd-sc3-cp": (True, "sc3", True),
}


@dataclass(frozen=True)
class ModeFlags:
    nd: bool = False
    sc: str = "off"
    cp: bool = False

    @classmethod
    def from_name(cls, name):
        if name not in MODES:
            raise ConfigError("mode", f"unknown mode {name!r}; choose from {', '.join(MODES)}")
        nd, sc, cp = MODES[name]
        return cls(nd, sc, cp)

    @property
    def name(self):
        for key, flags in MODES.items():
            if flags == (self.nd, self.sc, self.cp):
                return key
        return None

    @property
    def disc_mode(self):
        return "baseline" if self.sc == "off" else self.sc


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class NetConfig:
    gen_channels: int = 8
    disc_channels: int = 8
    kernel: int = 5
    disc_freq_pool: int = 4


@dataclass(frozen=True)
class TrainConfig:
    manifest: str = "corpus/manifest.jsonl"
    mode: ModeFlags = field(default_factory=ModeFlags)
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0
    stft: StftParams = field(default_factory=StftParams)
    gen_loss: GenLossConfig = field(default_factory=GenLossConfig)
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    nets: NetConfig = field(default_factory=NetConfig)
    d_steps: int = 1
    g_steps: int = 1
    eval_every: int = 1
    eval_split: str = "test"
    checkpoint_dir: str = "runs/default"

    def __post_init__(self):
        validate(self)

    def with_mode(self, name):
        return dataclasses.replace(self, mode=ModeFlags.from_name(name))

    def gen_loss_config(self):
        return dataclasses.replace(self.gen_loss, cp_enabled=self.mode.cp)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["gen_loss"].pop("cp_enabled")
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_NESTED = {"mode": ModeFlags, "stft": StftParams, "gen_loss": GenLossConfig,
           "optimizer": OptimConfig, "nets": NetConfig}


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected an object, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    if cls is GenLossConfig:
        names.pop("cp_enabled")
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in names:
            hint = " (set mode.cp instead)" if key == "cp_enabled" else ""
            raise ConfigError(where, f"unknown field{hint}")
        if cls is TrainConfig and key in _NESTED:
            value = _build(_NESTED[key], value, where)
        else:
            value = _check_scalar(names[key], value, where)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (InvalidParams, TypeError, ValueError) as exc:
        raise ConfigError(path or "<root>", str(exc)) from exc


def _check_scalar(f, value, where):
    default = f.default if f.default is not dataclasses.MISSING else None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(where, f"expected a boolean, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(where, f"expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, f"expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(where, f"expected a string, got {value!r}")
    return value


def validate(cfg: TrainConfig):
    m = cfg.mode
    if m.sc not in SC_CHOICES:
        raise ConfigError("mode.sc", f"must be one of {SC_CHOICES}")
    if m.sc == "sc3" and not m.nd:
        raise ConfigError("mode.sc", "sc3 requires mode.nd = true (the noisy part must exist)")
    if m.name is None:
        raise ConfigError("mode", f"nd={m.nd}, sc={m.sc}, cp={m.cp} is not one of the ablation rows")
    for name in ("epochs", "batch_size", "d_steps", "g_steps", "eval_every"):
        if getattr(cfg, name) < 1:
            raise ConfigError(name, "must be >= 1")
    if cfg.eval_split not in ("train", "test"):
        raise ConfigError("eval_split", "must be 'train' or 'test'")
    try:
        cfg.stft.validate()
    except InvalidParams as exc:
        raise ConfigError("stft", str(exc)) from exc
    o = cfg.optimizer
    if o.lr <= 0 or not 0 <= o.beta1 < 1 or not 0 <= o.beta2 < 1 or o.eps <= 0:
        raise ConfigError("optimizer", "lr, eps must be > 0 and betas in [0, 1)")
    n = cfg.nets
    if min(n.gen_channels, n.disc_channels, n.disc_freq_pool) < 1 or n.kernel < 1 or n.kernel % 2 == 0:
        raise ConfigError("nets", "channel counts and pooling must be >= 1, kernel odd")


def from_dict(data) -> TrainConfig:
    return _build(TrainConfig, data, "")


def load_config(path) -> TrainConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
    return from_dict(data)
