"""Inference throughput benchmark: LSTM attractors vs transformer attractors.

Times two things per model at fixed input length: the attractor module
alone (encoder output precomputed, which isolates the sequential-decode
vs parallel-decode difference) and the full model. The LSTM module is
timed decoding the same fixed number of attractor slots the transformer
produces, so both do comparable work. Medians over repeats are reported.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, no_grad, using_dtype
from .encoder import EncoderConfig
from .model import DiarizationModel
from .ta import TaConfig


@dataclass
class BenchResult:
    num_frames: int
    max_speakers: int
    repeats: int
    attractor_s: dict[str, float] = field(default_factory=dict)
    full_s: dict[str, float] = field(default_factory=dict)
    mixtures_per_s: dict[str, float] = field(default_factory=dict)
    full_ratio_ta_over_eda: float = 0.0
    attractor_ratio_ta_over_eda: float = 0.0
    growth: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def _median_time(fn, repeats: int) -> float:
    fn()  # warm-up
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def _build_models(encoder_cfg: EncoderConfig, ta_cfg: TaConfig, seed: int):
    eda_encoder = EncoderConfig(
        num_blocks=encoder_cfg.num_blocks,
        model_dim=encoder_cfg.model_dim,
        heads=encoder_cfg.heads,
        ff_dim=encoder_cfg.ff_dim,
        conv_kernel=encoder_cfg.conv_kernel,
        use_csv_token=False,
        dropout=0.0,
        input_dim=encoder_cfg.input_dim,
    )
    ta_encoder = EncoderConfig(
        num_blocks=encoder_cfg.num_blocks,
        model_dim=encoder_cfg.model_dim,
        heads=encoder_cfg.heads,
        ff_dim=encoder_cfg.ff_dim,
        conv_kernel=encoder_cfg.conv_kernel,
        use_csv_token=True,
        dropout=0.0,
        input_dim=encoder_cfg.input_dim,
    )
    eda_model = DiarizationModel("eda", eda_encoder, seed=seed)
    ta_model = DiarizationModel("ta", ta_encoder, ta_cfg=ta_cfg, seed=seed)
    eda_model.eval()
    ta_model.eval()
    return eda_model, ta_model


def _attractor_runner(model: DiarizationModel, embeddings, csv, slots: int) -> float:
    if model.kind == "ta":
        def run():
            model.attractor_module.forward(embeddings, csv)
    else:
        def run():
            state = model.attractor_module.encode(embeddings, shuffle=False)
            model.attractor_module.decode(state, slots, csv=csv)
    return run


def run_bench(
    encoder_cfg: EncoderConfig,
    ta_cfg: TaConfig,
    num_frames: int = 500,
    repeats: int = 5,
    seed: int = 0,
    growth_frames: tuple[int, ...] = (),
) -> BenchResult:
    """Measure attractor-only and full-model inference wall-clock."""
    result = BenchResult(num_frames=num_frames, max_speakers=ta_cfg.max_speakers, repeats=repeats)
    if repeats < 5:
        result.warnings.append(
            f"repeats={repeats} is below 5; medians may be unstable"
        )
    slots = ta_cfg.max_speakers + 1
    with using_dtype(np.float32), no_grad():
        eda_model, ta_model = _build_models(encoder_cfg, ta_cfg, seed)
        rng = np.random.default_rng(seed)
        features = rng.normal(size=(encoder_cfg.input_dim, num_frames)).astype(np.float32)

        for name, model in (("eda", eda_model), ("ta", ta_model)):
            emb = model.encoder(Tensor(features))
            runner = _attractor_runner(model, emb.embeddings, model.decoder_csv(emb), slots)
            result.attractor_s[name] = _median_time(runner, repeats)
            result.full_s[name] = _median_time(lambda m=model: m.infer(features), repeats)
            result.mixtures_per_s[name] = 1.0 / result.full_s[name]

        result.full_ratio_ta_over_eda = result.full_s["eda"] / result.full_s["ta"]
        result.attractor_ratio_ta_over_eda = (
            result.attractor_s["eda"] / result.attractor_s["ta"]
        )

        if growth_frames:
            for name, model in (("eda", eda_model), ("ta", ta_model)):
                times = []
                for frames in growth_frames:
                    feats = rng.normal(size=(encoder_cfg.input_dim, frames)).astype(np.float32)
                    emb = model.encoder(Tensor(feats))
                    runner = _attractor_runner(
                        model, emb.embeddings, model.decoder_csv(emb), slots
                    )
                    times.append(_median_time(runner, max(3, repeats)))
                result.growth[name] = fit_growth_exponent(growth_frames, times)
    return result


def fit_growth_exponent(sizes, times) -> float:
    """Least-squares slope of log(time) against log(size)."""
    logs = np.log(np.asarray(sizes, dtype=float))
    logt = np.log(np.asarray(times, dtype=float))
    slope, _ = np.polyfit(logs, logt, 1)
    return float(slope)


def format_bench_report(result: BenchResult) -> str:
    lines = [
        f"bench frames={result.num_frames} max_speakers={result.max_speakers} "
        f"repeats={result.repeats}",
        "model\tattractor_s\tfull_s\tmixtures_per_s",
    ]
    for name in ("eda", "ta"):
        lines.append(
            f"{name}\t{result.attractor_s[name]:.6f}\t{result.full_s[name]:.6f}"
            f"\t{result.mixtures_per_s[name]:.3f}"
        )
    lines.append(f"full_ratio_ta_over_eda\t{result.full_ratio_ta_over_eda:.3f}")
    lines.append(f"attractor_ratio_ta_over_eda\t{result.attractor_ratio_ta_over_eda:.3f}")
    for name, exponent in result.growth.items():
        lines.append(f"growth_exponent_{name}\t{exponent:.3f}")
    for warning in result.warnings:
        lines.append(f"warning\t{warning}")
    return "\n".join(lines) + "\n"
