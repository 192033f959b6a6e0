"""Synthetic multi-speaker conversations for desk-scale training and evaluation.

Each speaker follows an independent alternating renewal process: pauses
are exponential with mean ``beta`` (larger beta = more silence, less
overlap), utterances are truncated-normal. Features are additive
speaker-signature vectors plus Gaussian noise, which keeps the task
learnable by a small model while exercising the full pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError
from .features import (
    FeatureSequence,
    LabelMatrix,
    SegmentList,
    labels_from_segments,
    load_features,
    read_rttm,
    save_features,
    write_rttm,
)

UTTERANCE_MEAN_S = 2.0
UTTERANCE_STD_S = 1.0
UTTERANCE_MIN_S = 0.3
DEFAULT_BETAS = {1: 2.0, 2: 2.0, 3: 5.0, 4: 9.0}


@dataclass
class MixtureSpec:
    num_speakers: int
    beta: float
    duration_s: float
    seed: int
    frame_shift_s: float = 0.1
    feature_dim: int = 23
    noise_sigma: float = 0.3

    def __post_init__(self):
        if self.num_speakers < 1:
            raise InputError(f"num_speakers must be >= 1, got {self.num_speakers}")
        if self.beta <= 0:
            raise InputError(f"beta must be positive, got {self.beta}")
        if self.duration_s <= 0:
            raise InputError(f"duration_s must be positive, got {self.duration_s}")


@dataclass
class SyntheticMixture:
    mixture_id: str
    features: FeatureSequence
    labels: LabelMatrix
    segments: SegmentList
    true_num_speakers: int


def _truncated_normal(rng: np.random.Generator, mean, std, minimum) -> float:
    for _ in range(1000):
        value = rng.normal(mean, std)
        if value >= minimum:
            return value
    return minimum


def simulate_segments(spec: MixtureSpec) -> SegmentList:
    """Sample per-speaker utterance/pause sequences as time segments."""
    rng = np.random.default_rng(spec.seed)
    segs = SegmentList(recording_id=f"mix{spec.seed}")
    for s in range(spec.num_speakers):
        speaker = f"spk{s}"
        # clip the first pause so at least one utterance fits
        t = min(rng.exponential(spec.beta), max(0.0, spec.duration_s - 0.5))
        while t < spec.duration_s:
            length = _truncated_normal(rng, UTTERANCE_MEAN_S, UTTERANCE_STD_S, UTTERANCE_MIN_S)
            length = min(length, spec.duration_s - t)
            if length > 0:
                segs.add(speaker, t, length)
            t += length + rng.exponential(spec.beta)
    return segs


def simulate_activity(spec: MixtureSpec) -> LabelMatrix:
    """Frame-level activity labels for a sampled conversation."""
    segs = simulate_segments(spec)
    num_frames = int(round(spec.duration_s / spec.frame_shift_s))
    speakers = [f"spk{s}" for s in range(spec.num_speakers)]
    return labels_from_segments(segs, num_frames, spec.frame_shift_s, speakers)


def speaker_signatures(spec: MixtureSpec) -> np.ndarray:
    """Unit-norm signature vectors, orthogonalized when they fit in the feature dim."""
    rng = np.random.default_rng(spec.seed + 1)
    vectors = rng.normal(size=(spec.num_speakers, spec.feature_dim))
    if spec.num_speakers <= spec.feature_dim:
        for i in range(spec.num_speakers):
            for j in range(i):
                vectors[i] -= (vectors[i] @ vectors[j]) * vectors[j]
            vectors[i] /= np.linalg.norm(vectors[i])
    else:
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    return vectors


def synthesize_features(labels: LabelMatrix, spec: MixtureSpec) -> FeatureSequence:
    """Sum of active speakers' signatures per frame, plus Gaussian noise."""
    rng = np.random.default_rng(spec.seed + 2)
    signatures = speaker_signatures(spec)
    active = labels.labels.astype(np.float64)  # T x S
    clean = active @ signatures  # T x D'
    noise = rng.normal(scale=spec.noise_sigma, size=clean.shape)
    return FeatureSequence(
        (clean + noise).T,
        frame_shift_s=labels.frame_shift_s,
        frame_length_s=0.025,
        sample_rate=16000,
    )


def make_mixture(spec: MixtureSpec, mixture_id: str | None = None) -> SyntheticMixture:
    segs = simulate_segments(spec)
    num_frames = int(round(spec.duration_s / spec.frame_shift_s))
    speakers = [f"spk{s}" for s in range(spec.num_speakers)]
    labels = labels_from_segments(segs, num_frames, spec.frame_shift_s, speakers)
    if not (labels.labels.sum(axis=0) > 0).all():
        # a speaker's only utterance can fall between frame centers for very
        # short recordings; force one frame active to keep the label invariant
        for s in range(spec.num_speakers):
            if labels.labels[:, s].sum() == 0:
                frame = int(np.random.default_rng(spec.seed + 3 + s).integers(num_frames))
                labels.labels[frame, s] = 1
                segs.add(f"spk{s}", frame * spec.frame_shift_s, spec.frame_shift_s)
    features = synthesize_features(labels, spec)
    return SyntheticMixture(
        mixture_id=mixture_id or segs.recording_id,
        features=features,
        labels=labels,
        segments=segs,
        true_num_speakers=spec.num_speakers,
    )


def make_dataset(
    n: int,
    speaker_range: tuple[int, int] = (1, 4),
    betas: dict[int, float] | None = None,
    seed: int = 0,
    duration_s: float = 30.0,
    frame_shift_s: float = 0.1,
    feature_dim: int = 23,
    noise_sigma: float = 0.3,
) -> list[SyntheticMixture]:
    """Generate ``n`` mixtures with uniformly sampled speaker counts.

    Per-mixture seeds are ``seed + index`` so generation is deterministic
    and parallelizable.
    """
    if betas is None:
        betas = DEFAULT_BETAS
    lo, hi = speaker_range
    for count in range(lo, hi + 1):
        if count not in betas:
            raise ConfigError(f"no beta entry for speaker count {count}")
    rng = np.random.default_rng(seed)
    counts = rng.integers(lo, hi + 1, size=n)
    mixtures = []
    for index, count in enumerate(counts):
        spec = MixtureSpec(
            num_speakers=int(count),
            beta=betas[int(count)],
            duration_s=duration_s,
            seed=seed + index,
            frame_shift_s=frame_shift_s,
            feature_dim=feature_dim,
            noise_sigma=noise_sigma,
        )
        mixtures.append(make_mixture(spec, mixture_id=f"mix{seed}_{index:05d}"))
    return mixtures


def overlap_ratio(labels: LabelMatrix) -> float:
    """Fraction of speech frames where two or more speakers are active."""
    active = labels.labels.sum(axis=1)
    speech = active >= 1
    if not speech.any():
        return 0.0
    return float((active >= 2).sum() / speech.sum())


# -- dataset manifest --------------------------------------------------------------


@dataclass
class ManifestEntry:
    mixture_id: str
    features_path: str
    rttm_path: str
    num_speakers: int


@dataclass
class LoadedMixture:
    mixture_id: str
    features: FeatureSequence
    segments: SegmentList
    num_speakers: int

    def reference_labels(self) -> LabelMatrix:
        return labels_from_segments(
            self.segments, self.features.num_frames, self.features.frame_shift_s
        )


def write_dataset(mixtures: list[SyntheticMixture], out_dir) -> Path:
    """Write features, RTTMs, and a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for mix in mixtures:
        feat_name = f"{mix.mixture_id}.feats"
        rttm_name = f"{mix.mixture_id}.rttm"
        save_features(mix.features, out_dir / feat_name)
        write_rttm(mix.segments, out_dir / rttm_name)
        lines.append(f"{mix.mixture_id}\t{feat_name}\t{rttm_name}\t{mix.true_num_speakers}")
    manifest = out_dir / "manifest.tsv"
    manifest.write_text("\n".join(lines) + ("\n" if lines else ""))
    return manifest


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    base = Path(path).parent
    for line_number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise InputError(f"{path}:{line_number}: expected 4 tab-separated fields")
        entries.append(
            ManifestEntry(
                mixture_id=fields[0],
                features_path=str(base / fields[1]),
                rttm_path=str(base / fields[2]),
                num_speakers=int(fields[3]),
            )
        )
    return entries


def load_mixture(entry: ManifestEntry) -> LoadedMixture:
    features = load_features(entry.features_path)
    segments = read_rttm(entry.rttm_path)
    segments.recording_id = entry.mixture_id
    return LoadedMixture(entry.mixture_id, features, segments, entry.num_speakers)
