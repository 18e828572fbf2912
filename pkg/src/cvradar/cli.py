"""Command-line interface: synthesize, inspect, train, evaluate, compare, export.

Every subcommand prints its resolved configuration and seed, and exits 0 on
success, 2 on usage or configuration errors, 1 on internal failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .datacube import (
    CUBE_MAGIC,
    DatasetManifest,
    MaterialClass,
    load_cube,
    load_cubes,
    load_manifest,
)
from .dsp import PreprocMode, fft_along_last_axis
from .errors import (
    ConfigError,
    ConfigMismatchError,
    CubeFormatError,
    EvaluationError,
    ManifestError,
    ShapeError,
    SplitError,
    WeightsFormatError,
)
from .evaluation import compare_modes, evaluate, render_comparison, render_report
from .model import ModelConfig, build_model, load_model, parameter_count, save_model
from .synth import SynthConfig, generate_dataset, load_profiles
from .trainer import TrainConfig, stratified_split, train, write_log
from .cvnn.gradcheck import GRAD_TOL, run_suite

_USAGE_ERRORS = (
    ConfigError,
    ConfigMismatchError,
    CubeFormatError,
    EvaluationError,
    ManifestError,
    ShapeError,
    SplitError,
    WeightsFormatError,
    FileNotFoundError,
    IsADirectoryError,
    NotADirectoryError,
)

DEFAULT_SPLIT_FRACTION = 0.8
DEFAULT_SPLIT_SEED = 0


def _announce(command: str, config: dict, seed) -> None:
    print(f"[{command}] resolved config: {json.dumps(config, sort_keys=True, default=str)}")
    print(f"[{command}] seed: {seed}")


def _load_synth_config(args) -> SynthConfig:
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        cfg = SynthConfig.from_dict(raw)
    else:
        cfg = SynthConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_synth(args) -> int:
    cfg = _load_synth_config(args)
    _announce("synth", cfg.to_dict(), cfg.seed)
    profiles = load_profiles(args.profiles) if args.profiles else None
    manifest = generate_dataset(cfg, args.out, profiles=profiles)
    counts: dict[tuple[str, int, str], int] = {}
    for e in manifest.entries:
        key = (e.label.name.lower(), e.distance_mm, e.split)
        counts[key] = counts.get(key, 0) + 1
    print(f"wrote {len(manifest)} cubes to {args.out}")
    for (label, distance, split), n in sorted(counts.items()):
        print(f"  {label:<10} {distance:>5} mm  {split:<8} {n:>5}")
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == CUBE_MAGIC:
        cube = load_cube(path)
        _announce("inspect", {"path": str(path), "kind": "cube"}, "-")
        power = float(np.mean(np.abs(cube.iq) ** 2))
        spectrum = np.abs(fft_along_last_axis(cube.iq.astype(np.complex128))).mean(axis=0)
        print(f"label: {cube.label.name.lower()}")
        print(f"distance_mm: {cube.distance_mm}")
        print(f"session_id: {cube.session_id}  sample_id: {cube.sample_id}")
        print(f"channels: {cube.channel_count} ({cube.rx_count}x{cube.tx_count})  "
              f"fast_time: {cube.fast_time_len}")
        print(f"mean power: {power:.6g}")
        print(f"peak range bin (mean spectrum): {int(np.argmax(spectrum))}")
        return 0
    manifest = load_manifest(path)
    _announce("inspect", {"path": str(path), "kind": "manifest"}, "-")
    print(f"entries: {len(manifest)}")
    for split in ("train", "test_d0", "test_d1"):
        entries = manifest.by_split(split)
        if not entries:
            continue
        dists = sorted({e.distance_mm for e in entries})
        per_class = {m.name.lower(): sum(1 for e in entries if e.label == m) for m in MaterialClass}
        print(f"  {split}: {len(entries)} cubes, distances {dists}, per class {per_class}")
    return 0


def _model_config_for(manifest_cubes, args) -> ModelConfig:
    first = manifest_cubes[0]
    return ModelConfig(
        conv1_filters=args.conv1_filters,
        conv2_filters=args.conv2_filters,
        input_height=first.channel_count,
        input_width=first.fast_time_len,
        seed=args.seed,
        precision=args.precision,
    )


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        preproc_mode=PreprocMode.from_name(args.preproc),
        split_fraction=args.split_fraction,
        seed=args.seed,
        precision=args.precision,
    )
    train_entries, _ = stratified_split(manifest, cfg.split_fraction, cfg.seed)
    cubes = load_cubes(manifest, train_entries)
    model_cfg = _model_config_for(cubes, args)
    _announce("train", {**cfg.__dict__, "model": model_cfg.to_dict(),
                        "preproc_mode": cfg.preproc_mode.value}, cfg.seed)
    model = build_model(model_cfg)
    records = train(model, cubes, cfg)
    save_model(model, args.out)
    log_path = args.log if args.log else str(Path(args.out).with_suffix(".log.csv"))
    write_log(records, log_path)
    print(f"trained on {len(cubes)} cubes for {cfg.epochs} epochs "
          f"({parameter_count(model)} parameters)")
    if records:
        last = records[-1]
        print(f"final epoch: loss={last.loss:.6f} train_acc={last.train_acc:.4f}")
    print(f"weights: {args.out}")
    print(f"log: {log_path}")
    return 0


def _select_eval_cubes(manifest: DatasetManifest, split: str, fraction: float, seed: int):
    if split == "d1":
        entries = manifest.by_split("test_d1")
    else:
        entries = manifest.by_split("test_d0")
        if not entries:
            _, entries = stratified_split(manifest, fraction, seed)
    if not entries:
        raise EvaluationError(f"manifest has no cubes for split {split}")
    return load_cubes(manifest, entries)


def cmd_eval(args) -> int:
    model = load_model(args.weights)
    manifest = load_manifest(args.manifest)
    mode = PreprocMode.from_name(args.preproc)
    _announce("eval", {"weights": args.weights, "manifest": args.manifest,
                       "split": args.split, "preproc": mode.value,
                       "split_fraction": args.split_fraction,
                       "split_seed": args.split_seed}, args.split_seed)
    cubes = _select_eval_cubes(manifest, args.split, args.split_fraction, args.split_seed)
    report = evaluate(model, cubes, mode, args.split)
    print(render_report(report))
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
        print(f"report: {args.out}")
    return 0


def cmd_compare(args) -> int:
    model_iq = load_model(args.weights_iq)
    model_fft = load_model(args.weights_fft)
    manifest = load_manifest(args.manifest)
    _announce("compare", {"weights_iq": args.weights_iq, "weights_fft": args.weights_fft,
                          "manifest": args.manifest, "split_fraction": args.split_fraction,
                          "split_seed": args.split_seed}, args.split_seed)
    d0_cubes = _select_eval_cubes(manifest, "d0", args.split_fraction, args.split_seed)
    d1_cubes = _select_eval_cubes(manifest, "d1", args.split_fraction, args.split_seed)
    comparison = compare_modes(model_iq, model_fft, d0_cubes, d1_cubes)
    print(render_comparison(comparison))
    if args.out:
        Path(args.out).write_text(json.dumps(comparison.to_dict(), indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
        print(f"report: {args.out}")
    return 0


def pseudo_rgb(iq: np.ndarray) -> np.ndarray:
    """3-channel pseudo-RGB image of one cube for image-model baselines.

    Channel 0 is the real part, channel 1 the imaginary part, channel 2
    zeros; each channel is min-max scaled to [0, 255] per sample, with flat
    channels mapping to 0.
    """
    out = np.zeros(iq.shape + (3,), dtype=np.uint8)
    for ch, values in enumerate((iq.real, iq.imag)):
        lo = float(values.min())
        hi = float(values.max())
        if hi > lo:
            out[..., ch] = np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    return out


def cmd_export_rgb(args) -> int:
    from PIL import Image

    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _announce("export-rgb", {"manifest": args.manifest, "out": args.out}, "-")
    for entry in manifest.entries:
        cube = load_cube(manifest.full_path(entry))
        img = Image.fromarray(pseudo_rgb(cube.iq), mode="RGB")
        img.save(out_dir / (Path(entry.path).stem + ".png"))
    print(f"exported {len(manifest)} images to {out_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    _announce("gradcheck", {"seed": args.seed, "tolerance": args.tol}, args.seed)
    results = run_suite(args.seed)
    failed = False
    for name, err in results.items():
        status = "ok" if err < args.tol else "FAIL"
        print(f"  {name:<24} worst rel err {err:.3e}  [{status}]")
        failed = failed or err >= args.tol
    if failed:
        print("gradient check FAILED")
        return 1
    print("all gradient checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvradar",
        description="Complex-valued CNN surface-material classifier for FMCW radar datacubes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus plus manifest")
    p.add_argument("--config", help="JSON file with synthesis settings")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--profiles", help="JSON file with custom material profiles")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="summarize a cube file or manifest")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("train", help="train a classifier on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--preproc", choices=["raw", "fft"], default="fft")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--split-fraction", type=float, default=DEFAULT_SPLIT_FRACTION)
    p.add_argument("--precision", choices=["f32", "f64"], default="f32")
    p.add_argument("--conv1-filters", type=int, default=8)
    p.add_argument("--conv2-filters", type=int, default=3)
    p.add_argument("--log", help="CSV log path (default: weights path with .log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate weights on a manifest split")
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["d0", "d1"], required=True)
    p.add_argument("--preproc", choices=["raw", "fft"], default="fft")
    p.add_argument("--split-fraction", type=float, default=DEFAULT_SPLIT_FRACTION)
    p.add_argument("--split-seed", type=int, default=DEFAULT_SPLIT_SEED,
                   help="seed of the train-time stratified split (the train run's --seed)")
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="four-cell {IQ, FFT} x {d0, d1} comparison")
    p.add_argument("--weights-iq", required=True)
    p.add_argument("--weights-fft", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-fraction", type=float, default=DEFAULT_SPLIT_FRACTION)
    p.add_argument("--split-seed", type=int, default=DEFAULT_SPLIT_SEED)
    p.add_argument("--out", help="write the comparison as JSON")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-rgb", help="export cubes as pseudo-RGB PNGs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_rgb)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=GRAD_TOL)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
