"""Command-line surface: simulate, train, infer, score, bench, params.

Exit codes: 0 success, 1 validation/config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import checkpoint
from .autodiff import set_default_dtype
from .config import RunConfig, load_config_file, serialize_config
from .errors import ValidationError
from .features import (
    load_features,
    logmel_extract,
    mean_var_normalize,
    read_rttm,
    read_wav,
    subsample,
    write_rttm,
)
from .scoring import FileScore, aggregate_der, der, format_score_report, segments_from_labels
from .simulate import (
    SyntheticMixture,
    load_mixture,
    make_dataset,
    read_manifest,
    write_dataset,
)
from .training import average_checkpoints, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # validation failures exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override paths.out_dir")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers where supported")

    p = sub.add_parser("simulate", help="generate a synthetic dataset + manifest")
    common(p)
    p.add_argument("--n", type=int, default=None, help="override simulate.n")

    p = sub.add_parser("train", help="train a model from a dataset manifest")
    common(p)

    p = sub.add_parser("infer", help="write hypothesis RTTMs for a manifest")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", default=None, help="override paths.manifest")

    p = sub.add_parser("score", help="score hypothesis RTTMs against references")
    common(p)
    p.add_argument("--ref-manifest", default=None, help="override paths.manifest")
    p.add_argument("--hyp-dir", required=True)

    p = sub.add_parser("bench", help="attractor-module and full-model throughput")
    common(p)
    p.add_argument("--frames", type=int, default=500)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument(
        "--growth", action="store_true", help="also fit runtime growth against input length"
    )

    p = sub.add_parser("params", help="report trainable parameter counts")
    common(p)

    p = sub.add_parser("config-dump", help="print the merged configuration")
    common(p)
    return parser


def _load_run_config(args) -> RunConfig:
    values = load_config_file(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    if args.out is not None:
        values["paths.out_dir"] = args.out
    return RunConfig(values)


def _set_precision(cfg: RunConfig) -> None:
    set_default_dtype(np.float32 if cfg["precision"] == "f32" else np.float64)


def cmd_simulate(args) -> int:
    cfg = _load_run_config(args)
    n = args.n if args.n is not None else int(cfg["simulate.n"])
    mixtures = make_dataset(
        n,
        speaker_range=(int(cfg["simulate.speaker_min"]), int(cfg["simulate.speaker_max"])),
        betas=cfg.beta_table(),
        seed=int(cfg["seed"]),
        duration_s=float(cfg["simulate.duration_s"]),
        frame_shift_s=float(cfg["simulate.frame_shift_s"]),
        feature_dim=int(cfg["simulate.feature_dim"]),
        noise_sigma=float(cfg["simulate.noise_sigma"]),
    )
    manifest = write_dataset(mixtures, cfg["paths.out_dir"])
    print(manifest)
    return 0


def _load_training_data(cfg: RunConfig):
    entries = read_manifest(cfg["paths.manifest"])
    loaded = [load_mixture(e) for e in entries]
    mixtures = [
        SyntheticMixture(m.mixture_id, m.features, m.reference_labels(), m.segments, m.num_speakers)
        for m in loaded
    ]
    if cfg["paths.val_manifest"]:
        val_loaded = [load_mixture(e) for e in read_manifest(cfg["paths.val_manifest"])]
        val = [
            SyntheticMixture(
                m.mixture_id, m.features, m.reference_labels(), m.segments, m.num_speakers
            )
            for m in val_loaded
        ]
        return mixtures, val
    # no explicit validation set: hold out every fifth mixture
    val = [m for i, m in enumerate(mixtures) if i % 5 == 0]
    kept = [m for i, m in enumerate(mixtures) if i % 5 != 0]
    return kept or mixtures, val


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    _set_precision(cfg)
    train_set, val_set = _load_training_data(cfg)
    model = cfg.build_model()
    result = train(
        model,
        train_set,
        val_set,
        cfg.train_config(),
        Path(cfg["paths.out_dir"]) / cfg["paths.checkpoint_dir"],
        infer_cfg=cfg.inference_config(),
        log_fn=print,
    )
    if result.checkpoint_paths:
        k = min(10, len(result.checkpoint_paths))
        scored = [
            (path, result.val_ders[i])
            for i, path in enumerate(result.checkpoint_paths)
            if np.isfinite(result.val_ders[i])
        ]
        if scored:
            averaged = average_checkpoints(
                [p for p, _ in scored], min(k, len(scored)), [s for _, s in scored]
            )
            best_path = Path(cfg["paths.out_dir"]) / cfg["paths.checkpoint_dir"] / "averaged.ckpt"
            checkpoint.save_arrays(averaged, best_path)
            print(f"averaged checkpoint: {best_path}")
    return 0


def _prepare_features(path: str, cfg: RunConfig):
    if path.endswith(".wav"):
        audio, rate = read_wav(path)
        feats = logmel_extract(audio, rate, n_mels=int(cfg["encoder.input_dim"]))
        feats = mean_var_normalize(feats)
        return subsample(feats, int(cfg["inference.subsample_factor"]))
    return load_features(path)


def cmd_infer(args) -> int:
    cfg = _load_run_config(args)
    _set_precision(cfg)
    manifest = args.manifest or cfg["paths.manifest"]
    entries = read_manifest(manifest)
    model = cfg.build_model()
    model.load_state_dict(checkpoint.load_arrays(args.checkpoint))
    model.eval()
    out_dir = Path(cfg["paths.out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    infer_cfg = cfg.inference_config()

    def run_one(entry):
        features = _prepare_features(entry.features_path, cfg)
        labels, s_hat, _ = model.infer(
            features.features,
            diar_threshold=infer_cfg.diar_threshold,
            exist_threshold=infer_cfg.exist_threshold,
        )
        from .features import LabelMatrix

        segments = segments_from_labels(
            LabelMatrix(labels, features.frame_shift_s),
            min_segment_s=infer_cfg.min_segment_s,
            recording_id=entry.mixture_id,
        )
        write_rttm(segments, out_dir / f"{entry.mixture_id}.rttm")
        return entry.mixture_id, s_hat

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            counts = list(pool.map(run_one, entries))
    else:
        counts = [run_one(e) for e in entries]
    counts_path = out_dir / "counts.tsv"
    counts_path.write_text("".join(f"{mid}\t{n}\n" for mid, n in counts))
    print(counts_path)
    return 0


def cmd_score(args) -> int:
    cfg = _load_run_config(args)
    manifest = args.ref_manifest or cfg["paths.manifest"]
    entries = read_manifest(manifest)
    hyp_dir = Path(args.hyp_dir)
    infer_cfg = cfg.inference_config()

    def score_one(entry):
        ref = read_rttm(entry.rttm_path)
        hyp_path = hyp_dir / f"{entry.mixture_id}.rttm"
        if not hyp_path.exists():
            raise ValidationError(f"missing hypothesis RTTM {hyp_path}")
        hyp = read_rttm(hyp_path)
        report = der(ref, hyp, infer_cfg)
        return FileScore(
            entry.mixture_id, report, len(ref.speakers()), len(hyp.speakers())
        )

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            scores = list(pool.map(score_one, entries))
    else:
        scores = [score_one(e) for e in entries]
    report_text = format_score_report(scores)
    out_dir = Path(cfg["paths.out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "score_report.tsv").write_text(report_text)
    print(report_text, end="")
    overall = aggregate_der([s.report for s in scores])
    print(f"aggregate_der\t{overall.der:.6f}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_run_config(args)
    growth = (250, 500, 1000, 2000) if args.growth else ()
    result = bench_mod.run_bench(
        cfg.encoder_config(),
        cfg.ta_config(),
        num_frames=args.frames,
        repeats=args.repeats,
        seed=int(cfg["seed"]),
        growth_frames=growth,
    )
    print(bench_mod.format_bench_report(result), end="")
    return 0


def cmd_params(args) -> int:
    cfg = _load_run_config(args)
    model = cfg.build_model()
    report = model.params_report()
    for name, count in report.items():
        print(f"{name}\t{count}\t{count / 1e6:.3f}M")
    return 0


def cmd_config_dump(args) -> int:
    cfg = _load_run_config(args)
    print(serialize_config(cfg.values), end="")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "infer": cmd_infer,
    "score": cmd_score,
    "bench": cmd_bench,
    "params": cmd_params,
    "config-dump": cmd_config_dump,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
