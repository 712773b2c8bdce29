"""Experiment presets: the published hyperparameter grid, ids 1-18.

Each preset fixes the STFT frequency scale, the magnitude value scale, the
architecture, noise augmentation, mask kind, loss, curriculum usage, and the
conditioning variant (with its context source).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidInput
from .model import UNetConfig


@dataclass(frozen=True)
class ExperimentPreset:
    id: int
    stft_freq_scale: str  # linear | log
    stft_value_scale: str  # db_norm | log
    model: str  # unet | mhunet
    noise_augment: bool
    mask: str  # ratio | binary
    loss: str  # l2 | bce
    curriculum: bool
    conditioning: str  # none | film_* | label_multiply | final_multiply
    context_kind: str = "none"  # none | label | visual | motion
    motion_mode: str = "lstm"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "stft_freq_scale": self.stft_freq_scale,
            "stft_value_scale": self.stft_value_scale,
            "model": self.model,
            "noise_augment": self.noise_augment,
            "mask": self.mask,
            "loss": self.loss,
            "curriculum": self.curriculum,
            "conditioning": self.conditioning,
            "context_kind": self.context_kind,
            "motion_mode": self.motion_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPreset":
        return cls(**d)

    def unet_config(self, base_channels: int = 16) -> UNetConfig:
        return UNetConfig(
            base_channels=base_channels,
            heads="single" if self.model == "unet" else "multi",
            conditioning=self.conditioning,
            context_kind=self.context_kind,
            motion_mode=self.motion_mode,
        )


def _p(id, freq, value, model, noise, mask, loss, curriculum, conditioning,
       context="none", motion="lstm"):
    return ExperimentPreset(
        id, freq, value, model, noise, mask, loss, curriculum, conditioning,
        context, motion,
    )


PRESETS = {
    1: _p(1, "log", "db_norm", "unet", False, "ratio", "l2", False, "none"),
    2: _p(2, "log", "db_norm", "unet", False, "ratio", "l2", True, "none"),
    3: _p(3, "log", "db_norm", "unet", False, "binary", "bce", False, "none"),
    4: _p(4, "log", "db_norm", "unet", True, "ratio", "l2", False, "none"),
    5: _p(5, "log", "log", "unet", False, "ratio", "l2", False, "none"),
    6: _p(6, "linear", "db_norm", "unet", False, "ratio", "l2", False, "none"),
    7: _p(7, "log", "db_norm", "mhunet", False, "ratio", "l2", False, "none"),
    8: _p(8, "linear", "db_norm", "unet", False, "ratio", "l2", False, "film_bottleneck", "label"),
    9: _p(9, "linear", "db_norm", "unet", False, "ratio", "l2", False, "film_encoder", "label"),
    10: _p(10, "linear", "db_norm", "unet", False, "ratio", "l2", False, "film_final", "label"),
    11: _p(11, "linear", "db_norm", "unet", False, "ratio", "l2", False, "label_multiply", "label"),
    12: _p(12, "linear", "db_norm", "unet", False, "ratio", "l2", False, "film_encoder", "visual"),
    13: _p(13, "linear", "db_norm", "unet", False, "ratio", "l2", False, "film_final", "motion", "lstm"),
    14: _p(14, "linear", "db_norm", "unet", False, "ratio", "l2", False, "film_bottleneck", "motion", "lstm"),
    15: _p(15, "linear", "db_norm", "unet", False, "ratio", "l2", False, "film_bottleneck", "motion", "maxpool"),
    16: _p(16, "linear", "db_norm", "unet", False, "ratio", "l2", False, "final_multiply", "visual"),
    17: _p(17, "linear", "db_norm", "unet", False, "ratio", "l2", False, "film_bottleneck", "visual"),
    18: _p(18, "linear", "db_norm", "unet", False, "ratio", "l2", False, "film_final", "visual"),
}


def get_preset(preset_id: int) -> ExperimentPreset:
    try:
        return PRESETS[int(preset_id)]
    except (KeyError, ValueError):
        raise InvalidInput(f"unknown preset id {preset_id!r}") from None
