"""Model configuration: defaults, INI-style config files, env overrides.

The config file is flat key/value text with sections (``[model]``,
``[optim]``, ``[ikd]``, ``[sdmoe]``, ``[ablation]``, ``[data]``). Missing
keys take the defaults below; unknown keys are rejected by name. Environment
variables prefixed ``SUMMER_`` override file values, e.g. ``SUMMER_OPTIM_LR``
maps to key ``lr`` in section ``optim``.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError

ENV_PREFIX = "SUMMER_"

MODALITIES = ("text", "audio", "visual")


@dataclass
class ModelConfig:
    """All architecture and training hyperparameters in one validated record."""

    # [model] dimensions
    d_t: int = 100
    d_a: int = 100
    d_v: int = 256
    d_s: int = 100
    attn_width: int = 0          # 0 -> d_s
    ffn_hidden: int = 0          # 0 -> 4 * d_s
    heads: int = 4
    fusion_layers: int = 6
    experts: int = 4
    gru_hidden: int = 0          # 0 -> d_s
    classes: int = 6

    # [optim]
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    weight_decay: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    # [ikd]
    kappa1: float = 0.4
    kappa2: float = 0.3
    kappa3: float = 0.3
    epsilon: float = 0.1
    literal_eq9: bool = False

    # [sdmoe]
    tau: float = 0.5
    alpha: float = 2.0
    one_sided_band: bool = False

    # [ablation] module toggles
    sdmoe: bool = True
    hcmf: bool = True
    ikd: bool = True
    branches: str = "all"        # "all" | "text"

    # [data] synthetic-corpus and split knobs
    num_speakers: int = 2
    dialogues: int = 20
    dialogue_length: int = 10
    overlap: float = 0.0
    imbalance: float = 0.0
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1

    def __post_init__(self):
        self.validate()

    # -- derived dimensions ------------------------------------------------

    @property
    def attention_width(self) -> int:
        return self.attn_width if self.attn_width else self.d_s

    @property
    def ffn_width(self) -> int:
        return self.ffn_hidden if self.ffn_hidden else 4 * self.d_s

    @property
    def gru_width(self) -> int:
        return self.gru_hidden if self.gru_hidden else self.d_s

    @property
    def head_dim(self) -> int:
        return self.attention_width // self.heads

    def feature_dim(self, modality: str) -> int:
        return {"text": self.d_t, "audio": self.d_a, "visual": self.d_v}[modality]

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        positive_ints = [
            "d_t", "d_a", "d_v", "d_s", "heads", "fusion_layers", "experts",
            "classes", "batch_size", "epochs", "num_speakers", "dialogues",
            "dialogue_length",
        ]
        for name in positive_ints:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("attn_width", "ffn_hidden", "gru_hidden"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0 (0 selects the default)")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        for name in ("weight_decay", "kappa1", "kappa2", "kappa3", "imbalance"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.alpha <= 0:
            raise ConfigError("alpha must be > 0")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")
        if not 0.0 <= self.overlap < 1.0:
            raise ConfigError("overlap must lie in [0, 1)")
        if self.branches not in ("all", "text"):
            raise ConfigError("branches must be 'all' or 'text'")
        if self.attention_width % self.heads != 0:
            raise ConfigError(
                f"attention width {self.attention_width} must be divisible by heads {self.heads}"
            )
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs):
            raise ConfigError("split fractions must be >= 0")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key: {sorted(unknown)[0]}")
        return cls(**data)


_SECTIONS = {
    "model": [
        "d_t", "d_a", "d_v", "d_s", "attn_width", "ffn_hidden", "heads",
        "fusion_layers", "experts", "gru_hidden", "classes",
    ],
    "optim": [
        "lr", "batch_size", "epochs", "weight_decay",
        "adam_beta1", "adam_beta2", "adam_eps",
    ],
    "ikd": ["kappa1", "kappa2", "kappa3", "epsilon", "literal_eq9"],
    "sdmoe": ["tau", "alpha", "one_sided_band"],
    "ablation": ["sdmoe", "hcmf", "ikd", "branches"],
    "data": [
        "num_speakers", "dialogues", "dialogue_length", "overlap", "imbalance",
        "train_frac", "val_frac", "test_frac",
    ],
}

_FIELD_SECTION = {key: section for section, keys in _SECTIONS.items() for key in keys}
_FIELD_TYPES = {f.name: f.type for f in fields(ModelConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {raw!r}")
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
    if kind == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {raw!r}") from None
    return raw


def _env_overrides(environ) -> dict:
    out = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        remainder = name[len(ENV_PREFIX):].lower()
        section, _, key = remainder.partition("_")
        if section not in _SECTIONS or key not in _SECTIONS[section]:
            raise ConfigError(f"unknown config key in environment: {name}")
        out[key] = _parse_value(key, raw)
    return out


def load_config(path: str | None = None, environ=None) -> ModelConfig:
    """Load a ModelConfig from an INI-style file plus SUMMER_* env overrides.

    ``path=None`` yields the defaults (still subject to env overrides).
    """
    values: dict = {}
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from None
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section: {section}")
            for key, raw in parser.items(section):
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"unknown config key: {section}.{key}")
                values[key] = _parse_value(key, raw)
    values.update(_env_overrides(os.environ if environ is None else environ))
    return ModelConfig(**values)


def format_config(config: ModelConfig) -> str:
    """Render the resolved config as section.key = value lines."""
    lines = []
    for section, keys in _SECTIONS.items():
        for key in keys:
            lines.append(f"{section}.{key} = {getattr(config, key)}")
    return "\n".join(lines)
