"""Run configuration: model/train/distortion sections with strict JSON I/O.

Loading rejects unknown keys so config typos fail loudly instead of
silently running defaults. The serialized form is deterministic (sorted
keys) because checkpoints embed a copy.
"""

import json
from dataclasses import asdict, dataclass, field, fields

from .alphabet import N_LABELS
from .backbone import BackboneConfig
from .dropout import AdaptiveDropoutState
from .errors import ConfigError
from .synth import DistortConfig


@dataclass(frozen=True)
class ModelConfig:
    image_h: int = 32
    image_w: int = 128
    channels: tuple = (16, 32, 64, 64)
    strides: tuple = (1, 2, 2, 2)
    deformable_stages: tuple = (3, 4)
    d: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_len: int = 16

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "strides", tuple(self.strides))
        object.__setattr__(
            self, "deformable_stages", tuple(sorted(self.deformable_stages))
        )
        if self.d % 2 != 0:
            raise ConfigError(f"model dim must be even for the PE table, got {self.d}")
        if self.d % self.n_heads != 0:
            raise ConfigError(
                f"model dim {self.d} not divisible by {self.n_heads} heads"
            )
        if self.n_layers < 0 or self.d_ff < 1:
            raise ConfigError(
                f"bad encoder geometry: n_layers={self.n_layers}, d_ff={self.d_ff}"
            )
        total = 1
        for s in self.strides:
            total *= s
        if self.image_h % total or self.image_w % total:
            raise ConfigError(
                f"image {self.image_h}x{self.image_w} not divisible by the "
                f"total stride {total}"
            )
        if self.image_w // total != self.max_len:
            raise ConfigError(
                f"sequence length {self.image_w // total} (image_w/total stride) "
                f"must equal max_len {self.max_len}"
            )

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(
            channels=self.channels,
            strides=self.strides,
            deformable_stages=frozenset(self.deformable_stages),
        )

    @property
    def n_labels(self) -> int:
        return N_LABELS


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    use_crf: bool = True
    use_retrieval: bool = False
    dropout: AdaptiveDropoutState = field(default_factory=AdaptiveDropoutState)

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(
                f"Adam betas must be in [0, 1), got ({self.beta1}, {self.beta2})"
            )
        if self.eps <= 0:
            raise ConfigError(f"Adam eps must be positive, got {self.eps}")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")


_PATH_KEYS = ("data", "val", "out_dir", "checkpoint", "lexicon")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    distort: DistortConfig = field(default_factory=DistortConfig)
    paths: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key in self.paths:
            if key not in _PATH_KEYS:
                raise ConfigError(
                    f"unknown paths key {key!r}; known keys: {_PATH_KEYS}"
                )


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
    return data


def run_config_from_dict(doc: dict) -> RunConfig:
    """Strictly validated RunConfig from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be an object, got {type(doc).__name__}")
    for key in doc:
        if key not in ("model", "train", "distort", "paths"):
            raise ConfigError(f"config: unknown section {key!r}")
    model = ModelConfig(**_build(ModelConfig, doc.get("model", {}), "model"))
    train_raw = dict(_build(TrainConfig, doc.get("train", {}), "train"))
    if "dropout" in train_raw:
        train_raw["dropout"] = AdaptiveDropoutState(
            **_build(AdaptiveDropoutState, train_raw["dropout"], "train.dropout")
        )
    train = TrainConfig(**train_raw)
    distort = DistortConfig(**_build(DistortConfig, doc.get("distort", {}), "distort"))
    paths = doc.get("paths", {})
    if not isinstance(paths, dict):
        raise ConfigError("paths: expected an object")
    return RunConfig(model=model, train=train, distort=distort, paths=dict(paths))


def load_run_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as ex:
            raise ConfigError(f"{path}: invalid JSON ({ex})") from None
    return run_config_from_dict(doc)


def run_config_to_dict(cfg: RunConfig) -> dict:
    doc = {
        "model": asdict(cfg.model),
        "train": asdict(cfg.train),
        "distort": asdict(cfg.distort),
        "paths": dict(cfg.paths),
    }
    doc["model"]["channels"] = list(cfg.model.channels)
    doc["model"]["strides"] = list(cfg.model.strides)
    doc["model"]["deformable_stages"] = list(cfg.model.deformable_stages)
    return doc


def run_config_to_json(cfg: RunConfig) -> str:
    return json.dumps(run_config_to_dict(cfg), sort_keys=True)
