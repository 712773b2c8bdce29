"""Separator networks: U-Net and Multi-Head U-Net with optional conditioning.

Encoder blocks are conv4x4(stride 2) -> batchnorm -> [FiLM] -> LeakyReLU(0.2);
decoder blocks are bilinear x2 -> [skip concat] -> conv3x3 -> batchnorm ->
ReLU -> dropout(0.2). Six blocks each way; channels 16..512 by doubling. The
final 3x3 convolution emits 13 sigmoid masks (or one per head).

Conditioning sites:
  film_bottleneck  FiLM inside the last encoder block
  film_encoder     FiLM inside every encoder block
  film_final       FiLM on the last decoder activation, before the mask conv
  label_multiply   masks scaled by the binary instrument-presence vector
  final_multiply   masks scaled by softmax probabilities from the context
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import RunningStats, Tensor
from .errors import InvalidInput, ShapeError
from .types import CONTEXT_DIM, N_INSTRUMENTS, VISUAL_FEATURE_DIM, ContextVector, MagSpec

CONDITIONING_KINDS = (
    "none",
    "film_bottleneck",
    "film_encoder",
    "film_final",
    "label_multiply",
    "final_multiply",
)
CONTEXT_KINDS = ("none", "label", "visual", "motion")


@dataclass
class UNetConfig:
    blocks: int = 6
    base_channels: int = 16
    n_masks: int = N_INSTRUMENTS
    heads: str = "single"  # single | multi
    conditioning: str = "none"
    context_kind: str = "none"
    motion_mode: str = "lstm"  # lstm | maxpool
    dropout_p: float = 0.2
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.heads not in ("single", "multi"):
            raise InvalidInput(f"unknown head mode {self.heads!r}")
        if self.conditioning not in CONDITIONING_KINDS:
            raise InvalidInput(f"unknown conditioning {self.conditioning!r}")
        if self.context_kind not in CONTEXT_KINDS:
            raise InvalidInput(f"unknown context kind {self.context_kind!r}")
        if self.motion_mode not in ("lstm", "maxpool"):
            raise InvalidInput(f"unknown motion mode {self.motion_mode!r}")
        if self.conditioning != "none" and self.context_kind == "none":
            raise InvalidInput(f"{self.conditioning} conditioning needs a context kind")
        if self.conditioning == "label_multiply" and self.context_kind != "label":
            raise InvalidInput("label_multiply conditioning requires label context")

    @property
    def context_dim(self) -> int:
        if self.context_kind == "label":
            return N_INSTRUMENTS
        if self.context_kind in ("visual", "motion"):
            return CONTEXT_DIM
        return 0

    @property
    def encoder_channels(self) -> list:
        return [self.base_channels * (1 << i) for i in range(self.blocks)]

    @property
    def decoder_channels(self) -> list:
        enc = self.encoder_channels
        return list(reversed(enc[:-1])) + [self.base_channels]

    def to_dict(self) -> dict:
        return {
            "blocks": self.blocks,
            "base_channels": self.base_channels,
            "n_masks": self.n_masks,
            "heads": self.heads,
            "conditioning": self.conditioning,
            "context_kind": self.context_kind,
            "motion_mode": self.motion_mode,
            "dropout_p": self.dropout_p,
            "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        return cls(**d)


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class FiLMGenerator:
    """One fully connected layer per conditioned site, mapping context -> (gamma, beta).

    Weights start at zero with the gamma bias at one, so a freshly built
    conditioned network computes exactly the unconditioned function.
    """

    def __init__(self, model: "Model", name: str, context_dim: int, layer_channels: list):
        self.layer_channels = list(layer_channels)
        self.weights = []
        for j, c in enumerate(self.layer_channels):
            w = model._param(f"{name}.{j}.w", np.zeros((context_dim, 2 * c), dtype=np.float32))
            bias = np.concatenate([np.ones(c), np.zeros(c)]).astype(np.float32)
            b = model._param(f"{name}.{j}.b", bias)
            self.weights.append((w, b))

    def generate(self, context: Tensor) -> list:
        """Per conditioned layer: (gamma, beta), each (batch, channels)."""
        out = []
        for (w, b), c in zip(self.weights, self.layer_channels):
            z = ad.linear(context, w, b)
            out.append((ad.slice_cols(z, 0, c), ad.slice_cols(z, c, 2 * c)))
        return out


def film_generate(generator: FiLMGenerator, context: Tensor) -> list:
    """Functional alias for :meth:`FiLMGenerator.generate`."""
    return generator.generate(context)


class MotionEncoder:
    """Uni-directional LSTM over per-source feature sequences; keeps the last state."""

    def __init__(self, model: "Model", rng: np.random.Generator, input_dim: int = VISUAL_FEATURE_DIM, hidden: int = CONTEXT_DIM):
        self.hidden = hidden
        self.w_ih = model._param(
            "motion_lstm.w_ih", _kaiming_uniform(rng, (input_dim, 4 * hidden), input_dim)
        )
        self.w_hh = model._param(
            "motion_lstm.w_hh", _kaiming_uniform(rng, (hidden, 4 * hidden), hidden)
        )
        self.b = model._param("motion_lstm.b", np.zeros(4 * hidden, dtype=np.float32))

    def encode(self, sequences: np.ndarray) -> Tensor:
        """(K', T, input_dim) -> (1, hidden): last LSTM state per source, maxed."""
        sequences = np.asarray(sequences, dtype=np.float32)
        if sequences.ndim != 3 or sequences.shape[0] < 1 or sequences.shape[1] < 1:
            raise InvalidInput("motion encoding needs at least one source and one frame")
        finals = []
        for source in sequences:
            h = Tensor(np.zeros((1, self.hidden), dtype=np.float32))
            c = Tensor(np.zeros((1, self.hidden), dtype=np.float32))
            for frame in source:
                h, c = ad.lstm_cell(Tensor(frame[None]), h, c, self.w_ih, self.w_hh, self.b)
            finals.append(h)
        return ad.channelwise_max(finals)


class Model:
    """A built separator: named parameters, batch-norm buffers, and the forward pass."""

    def __init__(self, config: UNetConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, RunningStats] = {}
        rng = np.random.default_rng(seed)
        cfg = config
        enc = cfg.encoder_channels
        dec = cfg.decoder_channels

        in_c = 1
        for i, out_c in enumerate(enc):
            self._conv_block(rng, f"enc{i}", in_c, out_c, 4)
            in_c = out_c

        head_names = ["dec"] if cfg.heads == "single" else [f"head{h}.dec" for h in range(cfg.n_masks)]
        masks_per_head = cfg.n_masks if cfg.heads == "single" else 1
        for head in head_names:
            in_c = enc[-1]
            for i, out_c in enumerate(dec):
                skip = enc[cfg.blocks - 2 - i] if i < cfg.blocks - 1 else 0
                self._conv_block(rng, f"{head}{i}", in_c + skip, out_c, 3)
                in_c = out_c
            prefix = head[: -len("dec")]
            self._conv(rng, f"{prefix}mask", in_c, masks_per_head, 3)

        self.film_encoder = None
        self.film_bottleneck = None
        self.film_final = None
        self.classifier = None
        self.motion_encoder = None
        if cfg.conditioning == "film_encoder":
            self.film_encoder = FiLMGenerator(self, "film_enc", cfg.context_dim, enc)
        elif cfg.conditioning == "film_bottleneck":
            self.film_bottleneck = FiLMGenerator(self, "film_bottleneck", cfg.context_dim, enc[-1:])
        elif cfg.conditioning == "film_final":
            self.film_final = FiLMGenerator(self, "film_final", cfg.context_dim, dec[-1:])
        elif cfg.conditioning == "final_multiply":
            self.params["classifier.w"] = Tensor(
                _kaiming_uniform(rng, (cfg.context_dim, cfg.n_masks), cfg.context_dim),
                requires_grad=True,
            )
            self.params["classifier.b"] = Tensor(
                np.zeros(cfg.n_masks, dtype=np.float32), requires_grad=True
            )
        if cfg.context_kind == "motion" and cfg.motion_mode == "lstm":
            self.motion_encoder = MotionEncoder(self, rng)

    # -- construction helpers -------------------------------------------------

    def _param(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t

    def _conv(self, rng, name: str, in_c: int, out_c: int, k: int):
        fan_in = in_c * k * k
        self._param(f"{name}.w", _kaiming_uniform(rng, (out_c, in_c, k, k), fan_in))
        self._param(f"{name}.b", np.zeros(out_c, dtype=np.float32))

    def _conv_block(self, rng, name: str, in_c: int, out_c: int, k: int):
        self._conv(rng, f"{name}.conv", in_c, out_c, k)
        self._param(f"{name}.bn.gamma", np.ones(out_c, dtype=np.float32))
        self._param(f"{name}.bn.beta", np.zeros(out_c, dtype=np.float32))
        self.buffers[f"{name}.bn"] = RunningStats.for_channels(out_c)

    def parameters(self) -> list:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    # -- forward --------------------------------------------------------------

    def _context_tensor(self, context) -> Tensor:
        if context is None:
            raise InvalidInput(f"{self.config.conditioning} conditioning needs a context")
        if isinstance(context, ContextVector):
            if context.kind != self.config.context_kind:
                raise InvalidInput(
                    f"context kind {context.kind!r} does not match "
                    f"configured {self.config.context_kind!r}"
                )
            context = context.payload
        if isinstance(context, Tensor):
            data = context if context.data.ndim == 2 else None
            if data is None:
                raise ShapeError("context tensor must be 2-D (batch, dim)")
            if context.data.shape[1] != self.config.context_dim:
                raise ShapeError(
                    f"context dim {context.data.shape[1]} != {self.config.context_dim}"
                )
            return context
        arr = np.asarray(context, dtype=np.float32)
        if arr.ndim == 1:
            arr = arr[None]
        if arr.ndim != 2 or arr.shape[1] != self.config.context_dim:
            raise ShapeError(f"context shape {arr.shape} incompatible")
        return Tensor(arr)

    def _as_input(self, mag) -> Tensor:
        if isinstance(mag, MagSpec):
            mag = mag.values
        if isinstance(mag, Tensor):
            x = mag
        else:
            arr = np.asarray(mag, dtype=np.float32)
            if arr.ndim == 2:
                arr = arr[None, None]
            elif arr.ndim == 3:
                arr = arr[:, None]
            x = Tensor(arr)
        if x.data.ndim != 4 or x.data.shape[1] != 1:
            raise ShapeError(f"expected (B, 1, F, T) input, got {x.data.shape}")
        stride = 1 << self.config.blocks
        if x.data.shape[2] % stride or x.data.shape[3] % stride:
            raise ShapeError(
                f"spatial dims {x.data.shape[2:]} must be divisible by {stride}"
            )
        return x

    def _block(self, name: str, x: Tensor, kind: str, training: bool, rng, film_params=None) -> Tensor:
        w, b = self.params[f"{name}.conv.w"], self.params[f"{name}.conv.b"]
        stride = 2 if kind == "enc" else 1
        x = ad.conv2d(x, w, b, stride=stride, padding=1)
        x = ad.batchnorm(
            x,
            self.params[f"{name}.bn.gamma"],
            self.params[f"{name}.bn.beta"],
            running=self.buffers[f"{name}.bn"],
            training=training,
        )
        if film_params is not None:
            gamma, beta = film_params
            x = ad.film(x, _expand_rows(gamma, x.data.shape[0]), _expand_rows(beta, x.data.shape[0]))
        if kind == "enc":
            return ad.leaky_relu(x, self.config.leaky_slope)
        x = ad.relu(x)
        return ad.dropout(x, self.config.dropout_p, training, rng)

    def _decode(self, head: str, bottleneck: Tensor, skips: list, training: bool, rng,
                final_film=None) -> Tensor:
        cfg = self.config
        x = bottleneck
        for i in range(cfg.blocks):
            x = ad.bilinear_up2(x)
            if i < cfg.blocks - 1:
                x = ad.concat([x, skips[cfg.blocks - 2 - i]], axis=1)
            x = self._block(f"{head}{i}", x, "dec", training, rng)
        if final_film is not None:
            gamma, beta = final_film
            x = ad.film(x, _expand_rows(gamma, x.data.shape[0]), _expand_rows(beta, x.data.shape[0]))
        prefix = head[: -len("dec")]
        w, b = self.params[f"{prefix}mask.w"], self.params[f"{prefix}mask.b"]
        return ad.sigmoid(ad.conv2d(x, w, b, stride=1, padding=1))

    def forward(self, mag, context=None, training: bool = False, rng=None) -> Tensor:
        """Predict (B, K, F, T) masks in (0, 1) from a scaled magnitude input."""
        cfg = self.config
        x = self._as_input(mag)
        batch = x.data.shape[0]
        if training and rng is None:
            rng = np.random.default_rng(0)

        ctx = None
        if cfg.conditioning != "none":
            ctx = self._context_tensor(context)
            if ctx.data.shape[0] == 1 and batch > 1:
                ctx = Tensor(np.repeat(ctx.data, batch, axis=0), requires_grad=False) if not ctx.requires_grad else ctx

        enc_film = [None] * cfg.blocks
        if self.film_encoder is not None:
            enc_film = self.film_encoder.generate(ctx)
        elif self.film_bottleneck is not None:
            enc_film[-1] = self.film_bottleneck.generate(ctx)[0]

        skips = []
        for i in range(cfg.blocks):
            x = self._block(f"enc{i}", x, "enc", training, rng, film_params=enc_film[i])
            skips.append(x)
        bottleneck = skips[-1]

        final_film = None
        if self.film_final is not None:
            final_film = self.film_final.generate(ctx)[0]

        if cfg.heads == "single":
            masks = self._decode("dec", bottleneck, skips, training, rng, final_film)
        else:
            heads = [
                self._decode(f"head{h}.dec", bottleneck, skips, training, rng, final_film)
                for h in range(cfg.n_masks)
            ]
            masks = ad.concat(heads, axis=1)

        if cfg.conditioning == "label_multiply":
            masks = condition_masks_multiply(masks, ctx)
        elif cfg.conditioning == "final_multiply":
            probs = ad.softmax(
                ad.linear(ctx, self.params["classifier.w"], self.params["classifier.b"]),
                axis=-1,
            )
            masks = condition_masks_multiply(masks, probs)
        return masks

    __call__ = forward


def _expand_rows(t: Tensor, batch: int) -> Tensor:
    if t.data.shape[0] == batch:
        return t
    if t.data.shape[0] != 1:
        raise ShapeError("conditioning batch does not match the input batch")
    reps = ad.concat([t] * batch, axis=0) if t.requires_grad else Tensor(np.repeat(t.data, batch, axis=0))
    return reps


def build(config: UNetConfig, seed: int = 0) -> Model:
    """Construct a separator with seed-deterministic initialization."""
    return Model(config, seed)


def condition_masks_multiply(raw_masks: Tensor, weights) -> Tensor:
    """Scale each instrument's mask by its weight: out_i = w_i * mask_i."""
    if not isinstance(weights, Tensor):
        arr = np.asarray(weights, dtype=raw_masks.dtype)
        if arr.ndim == 1:
            arr = arr[None]
        weights = Tensor(arr)
    if weights.data.ndim != 2 or weights.data.shape[1] != raw_masks.data.shape[1]:
        raise ShapeError(
            f"weights shape {weights.data.shape} incompatible with masks "
            f"{raw_masks.data.shape}"
        )
    weights = _expand_rows(weights, raw_masks.data.shape[0])
    zeros = Tensor(np.zeros_like(weights.data))
    return ad.film(raw_masks, weights, zeros)


def pool_visual_context(frames: np.ndarray) -> ContextVector:
    """Per-source halving max-pool (2048 -> 1024), then elementwise max across sources."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise InvalidInput("visual pooling needs at least one source row")
    if frames.shape[1] != VISUAL_FEATURE_DIM:
        raise ShapeError(f"expected {VISUAL_FEATURE_DIM}-dim features, got {frames.shape[1]}")
    pooled = frames.reshape(frames.shape[0], CONTEXT_DIM, -1).max(axis=2)
    return ContextVector("visual", pooled.max(axis=0))


def motion_context(
    frame_sequences: np.ndarray,
    mode: str = "maxpool",
    encoder: MotionEncoder | None = None,
) -> ContextVector:
    """Aggregate per-source frame sequences (K', T, 2048) into a motion context.

    lstm mode runs the shared encoder over each source and maxes the final
    hidden states; maxpool mode maxes over frames and sources, then pools
    2048 -> 1024 pairwise.
    """
    seqs = np.asarray(frame_sequences, dtype=np.float64)
    if seqs.ndim != 3 or seqs.shape[0] < 1 or seqs.shape[1] < 1:
        raise InvalidInput("motion context needs at least one source and one frame")
    if seqs.shape[2] != VISUAL_FEATURE_DIM:
        raise ShapeError(f"expected {VISUAL_FEATURE_DIM}-dim features, got {seqs.shape[2]}")
    if mode == "maxpool":
        flat = seqs.max(axis=(0, 1))
        return ContextVector("motion", flat.reshape(CONTEXT_DIM, -1).max(axis=1))
    if mode != "lstm":
        raise InvalidInput(f"unknown motion mode {mode!r}")
    if encoder is None:
        raise InvalidInput("lstm motion context needs the model's motion encoder")
    with ad.no_grad():
        out = encoder.encode(seqs)
    return ContextVector("motion", out.data[0].astype(np.float64))
