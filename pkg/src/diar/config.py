"""Flat key-value run configuration with dotted section names.

The file format is one ``key = value`` pair per line, ``#`` comments,
booleans as true/false. parse -> serialize -> parse is the identity on
the typed mapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .encoder import EncoderConfig
from .errors import ConfigError
from .scoring import InferenceConfig
from .ta import CombinerKind, TaConfig
from .training import TrainConfig

Value = bool | int | float | str


def parse_value(text: str) -> Value:
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def format_value(value: Value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str) -> dict[str, Value]:
    values: dict[str, Value] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {line_number}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"config line {line_number}: empty key")
        values[key] = parse_value(value)
    return values


def serialize_config(values: dict[str, Value]) -> str:
    lines = [f"{key} = {format_value(values[key])}" for key in sorted(values)]
    return "\n".join(lines) + "\n"


def load_config_file(path) -> dict[str, Value]:
    return parse_config(Path(path).read_text())


def _is_beta_key(key: str) -> bool:
    prefix = "simulate.beta."
    return key.startswith(prefix) and key[len(prefix):].isdigit()


DEFAULTS: dict[str, Value] = {
    "model.attractor": "ta",
    "encoder.num_blocks": 4,
    "encoder.model_dim": 256,
    "encoder.heads": 4,
    "encoder.ff_dim": 1024,
    "encoder.conv_kernel": 15,
    "encoder.use_csv_token": True,
    "encoder.dropout": 0.1,
    "encoder.input_dim": 23,
    "ta.num_decoder_layers": 3,
    "ta.heads": 4,
    "ta.ff_dim": 1024,
    "ta.combiner": "amp",
    "ta.alpha": 1.0,
    "ta.max_speakers": 4,
    "ta.dropout": 0.1,
    "eda.hard_cap": 20,
    "lambda": 1.0,
    "optimizer.mode": "adam-fixed",
    "optimizer.lr": 1e-3,
    "optimizer.warmup": 1000,
    "optimizer.weight_decay": 0.0,
    "crop_frames": 500,
    "epochs": 10,
    "batch_size": 8,
    "precision": "f32",
    "checkpoint_interval": 1,
    "inference.diar_threshold": 0.5,
    "inference.exist_threshold": 0.5,
    "inference.collar_s": 0.0,
    "inference.min_segment_s": 0.0,
    "inference.subsample_factor": 10,
    "simulate.n": 100,
    "simulate.speaker_min": 1,
    "simulate.speaker_max": 4,
    "simulate.duration_s": 30.0,
    "simulate.frame_shift_s": 0.1,
    "simulate.feature_dim": 23,
    "simulate.noise_sigma": 0.3,
    "paths.manifest": "",
    "paths.val_manifest": "",
    "paths.checkpoint_dir": "checkpoints",
    "paths.out_dir": "out",
    "seed": 0,
}


@dataclass
class RunConfig:
    """Typed view over the flat config mapping, with validation."""

    values: dict[str, Value] = field(default_factory=dict)

    def __post_init__(self):
        unknown = sorted(
            key
            for key in set(self.values) - set(DEFAULTS)
            if not _is_beta_key(key)
        )
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        merged = dict(DEFAULTS)
        merged.update(self.values)
        self.values = merged
        self._validate()

    def _validate(self):
        attractor = self["model.attractor"]
        if attractor not in ("eda", "eda_csv", "ta"):
            raise ConfigError(f"model.attractor must be eda, eda_csv, or ta; got {attractor!r}")
        if attractor == "eda_csv" and not self["encoder.use_csv_token"]:
            raise ConfigError("model.attractor = eda_csv requires encoder.use_csv_token = true")
        if attractor == "ta" and self["ta.combiner"] != "none" and not self["encoder.use_csv_token"]:
            raise ConfigError(
                f"ta.combiner = {self['ta.combiner']} requires encoder.use_csv_token = true"
            )
        # constructing the dataclasses validates the numeric fields
        self.encoder_config()
        if attractor == "ta":
            self.ta_config()
        self.train_config()
        self.inference_config()

    def __getitem__(self, key: str) -> Value:
        return self.values[key]

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            num_blocks=int(self["encoder.num_blocks"]),
            model_dim=int(self["encoder.model_dim"]),
            heads=int(self["encoder.heads"]),
            ff_dim=int(self["encoder.ff_dim"]),
            conv_kernel=int(self["encoder.conv_kernel"]),
            use_csv_token=bool(self["encoder.use_csv_token"]),
            dropout=float(self["encoder.dropout"]),
            input_dim=int(self["encoder.input_dim"]),
        )

    def ta_config(self) -> TaConfig:
        return TaConfig(
            num_decoder_layers=int(self["ta.num_decoder_layers"]),
            heads=int(self["ta.heads"]),
            ff_dim=int(self["ta.ff_dim"]),
            combiner=CombinerKind(str(self["ta.combiner"]), float(self["ta.alpha"])),
            max_speakers=int(self["ta.max_speakers"]),
            dropout=float(self["ta.dropout"]),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=int(self["epochs"]),
            lambda_exist=float(self["lambda"]),
            optimizer_mode=str(self["optimizer.mode"]),
            lr=float(self["optimizer.lr"]),
            warmup=int(self["optimizer.warmup"]),
            weight_decay=float(self["optimizer.weight_decay"]),
            crop_frames=int(self["crop_frames"]),
            batch_size=int(self["batch_size"]),
            seed=int(self["seed"]),
            checkpoint_interval=int(self["checkpoint_interval"]),
            precision=str(self["precision"]),
        )

    def inference_config(self) -> InferenceConfig:
        return InferenceConfig(
            diar_threshold=float(self["inference.diar_threshold"]),
            exist_threshold=float(self["inference.exist_threshold"]),
            collar_s=float(self["inference.collar_s"]),
            min_segment_s=float(self["inference.min_segment_s"]),
            subsample_factor=int(self["inference.subsample_factor"]),
        )

    def beta_table(self) -> dict[int, float]:
        """Pause-length means per speaker count; defaults follow the 2/2/5/9 pattern."""
        from .simulate import DEFAULT_BETAS

        table = {
            int(key.rsplit(".", 1)[1]): float(value)
            for key, value in self.values.items()
            if _is_beta_key(key)
        }
        if not table:
            table = dict(DEFAULT_BETAS)
        lo, hi = int(self["simulate.speaker_min"]), int(self["simulate.speaker_max"])
        for count in range(lo, hi + 1):
            if count not in table:
                raise ConfigError(
                    f"missing config key simulate.beta.{count} for speaker count {count}"
                )
        return table

    def build_model(self):
        from .model import DiarizationModel

        attractor = str(self["model.attractor"])
        return DiarizationModel(
            attractor=attractor,
            encoder_cfg=self.encoder_config(),
            ta_cfg=self.ta_config() if attractor == "ta" else None,
            seed=int(self["seed"]),
            eda_hard_cap=int(self["eda.hard_cap"]),
        )
