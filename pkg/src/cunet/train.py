"""Mix-and-separate training loop."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import dsp, masks
from .autodiff import Adam, Tensor
from .checkpoint import save_checkpoint
from .errors import InvalidInput
from .features import read_features
from .losses import LossConfig, class_balance_lambda, mask_loss
from .mixgen import (
    MAX_SOURCES,
    MixtureSample,
    ScheduleState,
    SourceLibrary,
    sample_mixture,
    schedule_update,
)
from .model import Model, build, motion_context, pool_visual_context
from .presets import ExperimentPreset
from .types import N_INSTRUMENTS, Waveform
from .util import atomic_write_bytes

_NOISE_SIGMA_FRACTION = 0.01  # of the segment peak


def derived_seed(master: int, stream: int, index: int) -> int:
    """Deterministic child seed; stable across processes (unlike hash())."""
    return int(np.random.SeedSequence([master, stream, index]).generate_state(1)[0])


@dataclass
class TrainConfig:
    iterations: int = 200
    batch_size: int = 2
    lr: float = 1e-5
    seed: int = 0
    base_channels: int = 16
    val_every: int = 50
    val_samples: int = 4
    min_sources: int = 2
    max_sources: int = MAX_SOURCES
    curriculum_start: int = 2

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1:
            raise InvalidInput("iterations and batch_size must be positive")
        if not 1 <= self.min_sources <= self.max_sources <= MAX_SOURCES:
            raise InvalidInput("source bounds must satisfy 1 <= min <= max <= 7")


@dataclass
class TrainResult:
    model: Model
    optimizer: Adam
    state: ScheduleState
    log_rows: list = field(default_factory=list)
    iteration: int = 0


def network_input(mixture: Waveform, preset: ExperimentPreset) -> np.ndarray:
    """Mixture waveform -> scaled magnitude the network consumes."""
    mag = dsp.stft(mixture).magnitude()
    if preset.stft_freq_scale == "log":
        mag = dsp.warp_freq_axis(mag, "log")
    mag = dsp.scale_magnitude(mag, preset.stft_value_scale)
    return mag.values.astype(np.float32)


def target_masks(sample: MixtureSample, preset: ExperimentPreset) -> np.ndarray:
    """Ground-truth masks (one per instrument) on the network's frequency grid."""
    mix_mag = dsp.stft(sample.mixture).magnitude()
    if preset.stft_freq_scale == "log":
        mix_mag = dsp.warp_freq_axis(mix_mag, "log")
    gt = np.zeros((N_INSTRUMENTS,) + mix_mag.shape, dtype=np.float32)
    for inst in range(N_INSTRUMENTS):
        if not sample.labels[inst]:
            continue
        src_mag = dsp.stft(Waveform(sample.sources[inst])).magnitude()
        if preset.stft_freq_scale == "log":
            src_mag = dsp.warp_freq_axis(src_mag, "log")
        if preset.mask == "binary":
            gt[inst] = masks.ideal_binary_mask(src_mag, mix_mag, inst).values
        else:
            gt[inst] = masks.ideal_ratio_mask(src_mag, mix_mag, inst).values
    return gt


def _sample_features(lib: SourceLibrary, sample: MixtureSample) -> np.ndarray:
    """Stack per-source feature sequences for the recordings a sample drew from."""
    from .types import INSTRUMENTS

    rows = []
    for inst, rec in sample.provenance:
        name = INSTRUMENTS[inst]
        paths = lib.feature_paths.get(name) or []
        if rec >= len(paths) or paths[rec] is None:
            raise InvalidInput(
                f"visual conditioning needs a feature file for {name} recording {rec}; "
                "add a \"features\" entry to the manifest"
            )
        rows.append(read_features(paths[rec]))
    n_frames = min(r.shape[1] for r in rows)
    return np.concatenate([r[:, :n_frames] for r in rows], axis=0)


def _batch_context(model: Model, lib: SourceLibrary, batch: list, preset: ExperimentPreset):
    kind = model.config.context_kind
    if model.config.conditioning == "none":
        return None
    if kind == "label":
        return np.stack([s.labels for s in batch]).astype(np.float32)
    rows = []
    for s in batch:
        feats = _sample_features(lib, s)
        if kind == "visual":
            rows.append(Tensor(pool_visual_context(feats[:, 0]).payload[None].astype(np.float32)))
        elif preset.motion_mode == "maxpool":
            rows.append(Tensor(motion_context(feats, "maxpool").payload[None].astype(np.float32)))
        else:
            rows.append(model.motion_encoder.encode(feats))
    return ad.concat(rows, axis=0)


def _batch_loss(model, lib, batch, preset, loss_cfg, training, rng):
    inputs = np.stack([network_input(_augmented(s, preset, rng), preset) for s in batch])
    gts = np.stack([target_masks(s, preset) for s in batch])
    context = _batch_context(model, lib, batch, preset)
    pred = model.forward(inputs, context, training=training, rng=rng)
    cfg = loss_cfg
    if preset.loss == "bce":
        cfg = LossConfig("bce", class_balance_lambda(gts), loss_cfg.clamp_eps)
    return mask_loss(pred, gts, cfg)


def _augmented(sample: MixtureSample, preset: ExperimentPreset, rng) -> Waveform:
    if not preset.noise_augment:
        return sample.mixture
    peak = float(np.abs(sample.mixture.samples).max())
    noise = rng.normal(0.0, _NOISE_SIGMA_FRACTION * max(peak, 1e-8), size=len(sample.mixture))
    return Waveform(sample.mixture.samples + noise, sample.mixture.sample_rate)


def train(
    preset: ExperimentPreset,
    lib: SourceLibrary,
    cfg: TrainConfig,
    log_path=None,
    resume: dict | None = None,
    progress=None,
) -> TrainResult:
    """Train a separator with the preset's hyperparameters at the given scale.

    ``resume`` accepts the meta dict from :func:`cunet.checkpoint.load_checkpoint`
    together with its model (pass the model via resume["model"]).
    """
    rng = np.random.default_rng(cfg.seed)
    loss_cfg = LossConfig(preset.loss if preset.loss in ("l2", "bce") else "l2")

    if resume is not None:
        model = resume["model"]
        optimizer = Adam(model.parameters(), lr=cfg.lr)
        if "adam_t" in resume:
            optimizer.load_state(
                {"t": resume["adam_t"], "m": resume["adam_m"], "v": resume["adam_v"]}
            )
        saved = resume.get("extra", {})
        state = ScheduleState(**saved.get("schedule", {})) if saved.get("schedule") else ScheduleState(
            max_sources=cfg.curriculum_start if preset.curriculum else cfg.max_sources,
            lr=cfg.lr,
        )
        start_iter = int(saved.get("iteration", 0))
    else:
        model = build(preset.unet_config(cfg.base_channels), seed=cfg.seed)
        optimizer = Adam(model.parameters(), lr=cfg.lr)
        state = ScheduleState(
            max_sources=cfg.curriculum_start if preset.curriculum else cfg.max_sources,
            lr=cfg.lr,
        )
        start_iter = 0

    n_available = len(lib.available_instruments())
    val_seeds = [derived_seed(cfg.seed, 1, i) for i in range(cfg.val_samples)]

    def draw_batch(it: int) -> list:
        hi = min(state.max_sources if preset.curriculum else cfg.max_sources, n_available)
        lo = min(cfg.min_sources, hi)
        batch = []
        for b in range(cfg.batch_size):
            n = int(rng.integers(lo, hi + 1))
            batch.append(sample_mixture(lib, n, derived_seed(cfg.seed, it + 2, b)))
        return batch

    def validation_loss() -> float:
        hi = min(cfg.max_sources, n_available)
        lo = min(cfg.min_sources, hi)
        total = 0.0
        with ad.no_grad():
            for i, seed in enumerate(val_seeds):
                n = lo + (i % (hi - lo + 1))
                sample = sample_mixture(lib, n, seed)
                loss = _batch_loss(
                    model, lib, [sample], preset, loss_cfg, training=False, rng=rng
                )
                total += float(loss.data)
        return total / max(len(val_seeds), 1)

    log_rows = []
    last_val = float("inf")
    t0 = time.time()
    for it in range(start_iter + 1, start_iter + cfg.iterations + 1):
        batch = draw_batch(it)
        optimizer.zero_grad()
        loss = _batch_loss(model, lib, batch, preset, loss_cfg, training=True, rng=rng)
        ad.backward(loss)
        optimizer.lr = state.lr
        optimizer.step()
        if it == start_iter + 1 or it % cfg.val_every == 0:
            last_val = validation_loss()
        state = schedule_update(state, last_val)
        row = {
            "iteration": it,
            "loss": float(loss.data),
            "val_loss": last_val,
            "lr": state.lr,
            "max_sources": state.max_sources,
        }
        log_rows.append(row)
        if progress is not None and (it % cfg.val_every == 0 or it == start_iter + 1):
            progress(
                f"iter {it} loss {row['loss']:.4f} val {last_val:.4f} "
                f"lr {state.lr:.2e} max_sources {state.max_sources} "
                f"({time.time() - t0:.0f}s)"
            )

    if log_path is not None:
        write_training_log(log_path, preset, log_rows)
    return TrainResult(model, optimizer, state, log_rows, start_iter + cfg.iterations)


def write_training_log(path, preset: ExperimentPreset, rows: list):
    """CSV log; the header line records the preset's hyperparameters."""
    buf = io.StringIO()
    fields = preset.to_dict()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in fields.items()) + "\n")
    writer = csv.DictWriter(buf, fieldnames=["iteration", "loss", "val_loss", "lr", "max_sources"])
    writer.writeheader()
    writer.writerows(rows)
    atomic_write_bytes(path, buf.getvalue().encode())


def save_training_checkpoint(path, result: TrainResult, preset: ExperimentPreset):
    extra = {
        "preset": preset.to_dict(),
        "iteration": result.iteration,
        "schedule": {
            "max_sources": result.state.max_sources,
            "lr": result.state.lr,
            "curriculum_best": result.state.curriculum_best,
            "curriculum_stagnation": result.state.curriculum_stagnation,
            "lr_best": result.state.lr_best,
            "lr_stagnation": result.state.lr_stagnation,
        },
    }
    save_checkpoint(path, result.model, result.optimizer, extra)


