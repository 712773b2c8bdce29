"""Command-line interface.

Subcommands: synth (make fixtures), train, separate, eval, oracle. Every
command exits non-zero with a diagnostic on error; argparse usage errors exit
with status 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .checkpoint import load_checkpoint
from .errors import CunetError, InvalidInput
from .features import read_features
from .mixgen import SourceLibrary, sample_mixture
from .presets import ExperimentPreset, get_preset
from .separate import context_from_features, context_from_labels, oracle_stems, separate
from .train import TrainConfig, derived_seed, save_training_checkpoint, train, write_training_log
from .types import INSTRUMENTS, N_INSTRUMENTS, SAMPLE_RATE, Waveform, label_vector
from .util import atomic_write_bytes, global_seed
from .wavio import read_wav, write_wav


def load_labels(path) -> np.ndarray:
    """Labels JSON: a bare list, {"labels": [...]}, or {"instruments": [names]}."""
    with open(path) as handle:
        data = json.load(handle)
    if isinstance(data, dict):
        if "labels" in data:
            data = data["labels"]
        elif "instruments" in data:
            data = data["instruments"]
        else:
            raise InvalidInput(f"{path}: expected a 'labels' or 'instruments' key")
    return label_vector(data)


def _cmd_synth(args) -> int:
    lib = SourceLibrary.from_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seed = derived_seed(args.seed, 0, i)
        sample = sample_mixture(lib, args.n_sources, seed)
        piece = out / f"piece_{i:03d}"
        piece.mkdir(exist_ok=True)
        write_wav(piece / "mix.wav", sample.mixture)
        for inst in range(N_INSTRUMENTS):
            if sample.labels[inst]:
                write_wav(piece / f"{INSTRUMENTS[inst]}.wav", Waveform(sample.sources[inst]))
        meta = {
            "labels": sample.labels.astype(int).tolist(),
            "instruments": [INSTRUMENTS[k] for k in range(N_INSTRUMENTS) if sample.labels[k]],
            "seed": seed,
        }
        atomic_write_bytes(piece / "labels.json", json.dumps(meta, indent=2).encode())
        print(f"wrote {piece} ({', '.join(meta['instruments'])})")
    return 0


def _load_train_setup(args):
    """Preset + training options from --preset/--config, CLI flags taking precedence."""
    file_cfg = {}
    if args.config:
        with open(args.config) as handle:
            file_cfg = json.load(handle)
    preset_id = args.preset if args.preset is not None else file_cfg.get("preset")
    if preset_id is not None:
        preset = get_preset(preset_id)
        over = {k: v for k, v in file_cfg.items() if k in ExperimentPreset.__dataclass_fields__}
        over.pop("id", None)
        if over:
            preset = ExperimentPreset.from_dict({**preset.to_dict(), **over})
    elif file_cfg:
        fields = {k: v for k, v in file_cfg.items() if k in ExperimentPreset.__dataclass_fields__}
        fields.setdefault("id", 0)
        preset = ExperimentPreset.from_dict(fields)
    else:
        raise InvalidInput("train needs --preset or --config")

    train_fields = {
        k: v for k, v in file_cfg.items() if k in TrainConfig.__dataclass_fields__
    }
    for name in ("iterations", "batch_size", "lr", "seed", "base_channels", "val_every"):
        value = getattr(args, name)
        if value is not None:
            train_fields[name] = value
    train_fields.setdefault("seed", global_seed())
    return preset, TrainConfig(**train_fields)


def _cmd_train(args) -> int:
    preset, cfg = _load_train_setup(args)
    lib = SourceLibrary.from_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resume = None
    if args.resume:
        model, meta = load_checkpoint(args.resume)
        resume = {"model": model, **meta}
    fields = preset.to_dict()
    print("training: " + " ".join(f"{k}={v}" for k, v in fields.items()))
    result = train(
        preset,
        lib,
        cfg,
        log_path=out / "train_log.csv",
        resume=resume,
        progress=print,
    )
    save_training_checkpoint(out / "checkpoint.cunw", result, preset)
    print(f"wrote {out / 'checkpoint.cunw'} and {out / 'train_log.csv'}")
    return 0


def _cmd_separate(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    preset_dict = meta.get("extra", {}).get("preset")
    if preset_dict is None:
        raise InvalidInput(f"{args.checkpoint}: checkpoint lacks preset metadata")
    preset = ExperimentPreset.from_dict(preset_dict)
    mixture = read_wav(args.mixture)
    context = None
    if model.config.conditioning != "none":
        if model.config.context_kind == "label":
            if not args.labels:
                raise InvalidInput("this model needs --labels")
            context = context_from_labels(load_labels(args.labels))
        else:
            if not args.features:
                raise InvalidInput("this model needs --features")
            context = context_from_features(model, read_features(args.features))
    stems = separate(model, preset, mixture, context, wiener_iterations=args.wiener)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for inst, stem in enumerate(stems):
        write_wav(out / f"{INSTRUMENTS[inst]}.wav", stem)
    print(f"wrote 13 stems to {out}")
    return 0


def _read_stem_dir(path, length: int) -> list:
    """Per-instrument waveforms from a directory; missing files mean silence."""
    stems = []
    for name in INSTRUMENTS:
        wav_path = Path(path) / f"{name}.wav"
        if wav_path.exists():
            wave = read_wav(wav_path)
            data = wave.samples[:length]
            if len(data) < length:
                data = np.pad(data, (0, length - len(data)))
            stems.append(Waveform(data, wave.sample_rate))
        else:
            stems.append(Waveform(np.zeros(length)))
    return stems


def _cmd_eval(args) -> int:
    labels = load_labels(args.labels)
    ref_dir = Path(args.ref)
    lengths = []
    for name in INSTRUMENTS:
        p = ref_dir / f"{name}.wav"
        if p.exists():
            lengths.append(len(read_wav(p)))
    if not lengths:
        raise InvalidInput(f"{ref_dir}: no reference stems found")
    length = min(lengths)
    est = _read_stem_dir(args.est, length)
    ref = _read_stem_dir(args.ref, length)
    cfg = metrics_mod.MetricConfig(proj_filter_len=args.filter_len)
    report = metrics_mod.evaluate_piece(est, ref, labels, cfg, piece=args.piece)
    report.to_csv(f"{args.out}.csv")
    report.to_json(f"{args.out}.json")
    for row in report.rows:
        line = " ".join(f"{k}={v:.2f}" for k, v in row.metrics.items())
        print(f"{row.instrument}: {line}")
    print(f"wrote {args.out}.csv and {args.out}.json")
    return 0


def _cmd_oracle(args) -> int:
    mixture = read_wav(args.mixture)
    if mixture.sample_rate != SAMPLE_RATE:
        from . import dsp

        mixture = dsp.resample(mixture, SAMPLE_RATE)
    stems_dir = Path(args.stems)
    labels = np.zeros(N_INSTRUMENTS)
    sources = np.zeros((N_INSTRUMENTS, len(mixture)))
    for inst, name in enumerate(INSTRUMENTS):
        p = stems_dir / f"{name}.wav"
        if not p.exists():
            continue
        wave = read_wav(p)
        data = wave.samples[: len(mixture)]
        sources[inst, : len(data)] = data
        labels[inst] = 1.0
    if not labels.any():
        raise InvalidInput(f"{stems_dir}: no instrument stems found")
    stems = oracle_stems(mixture, sources, labels, mask_kind=args.mask)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for inst in range(N_INSTRUMENTS):
        if labels[inst]:
            write_wav(out / f"{INSTRUMENTS[inst]}.wav", stems[inst])
    print(f"wrote oracle stems to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cunet", description="Conditioned U-Net music source separation"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic mixtures from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-sources", type=int, default=2, dest="n_sources")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=global_seed())
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a separator")
    p.add_argument("--preset", type=int, help="experiment preset id (1-18)")
    p.add_argument("--config", help="JSON config; CLI flags override its values")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--base-channels", type=int, dest="base_channels")
    p.add_argument("--val-every", type=int, dest="val_every")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("separate", help="split a mixture into instrument stems")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mixture", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="labels JSON for label-conditioned models")
    p.add_argument("--features", help="feature file for visually conditioned models")
    p.add_argument("--wiener", type=int, default=0, choices=(0, 1, 2))
    p.set_defaults(func=_cmd_separate)

    p = sub.add_parser("eval", help="score estimated stems against references")
    p.add_argument("--est", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True, help="output prefix for .csv/.json")
    p.add_argument("--piece", default="piece")
    p.add_argument("--filter-len", type=int, default=512, dest="filter_len")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("oracle", help="reconstruct stems from ground-truth masks")
    p.add_argument("--mixture", required=True)
    p.add_argument("--stems", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask", default="irm", choices=("irm", "ibm"))
    p.set_defaults(func=_cmd_oracle)
    return parser


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CunetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
