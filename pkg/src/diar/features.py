"""Acoustic features, frame labels, and segment annotations.

Covers log-Mel extraction from PCM audio, frame-rate reduction, the
mapping between time segments and frame-level speech-activity labels,
and RTTM file I/O.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .errors import InputError, RttmParseError

MEL_FLOOR = 1e-10
DEFAULT_N_MELS = 23
DEFAULT_FRAME_LENGTH_S = 0.025
DEFAULT_FRAME_SHIFT_S = 0.010


@dataclass
class FeatureSequence:
    """A D' x T feature matrix with frame timing metadata."""

    features: np.ndarray
    frame_shift_s: float = DEFAULT_FRAME_SHIFT_S
    frame_length_s: float = DEFAULT_FRAME_LENGTH_S
    sample_rate: int = 16000

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise InputError("features must be a D' x T matrix with T >= 1")
        if self.frame_shift_s <= 0:
            raise InputError("frame_shift_s must be positive")
        if not np.isfinite(self.features).all():
            raise InputError("features contain non-finite values")

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    @property
    def num_frames(self) -> int:
        return self.features.shape[1]

    def frame_center_s(self, t: int) -> float:
        return (t + 0.5) * self.frame_shift_s


@dataclass
class LabelMatrix:
    """T x S binary speech-activity labels aligned with a FeatureSequence."""

    labels: np.ndarray
    frame_shift_s: float = DEFAULT_FRAME_SHIFT_S

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise InputError("labels must be a T x S matrix")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise InputError("labels must be binary")
        self.labels = self.labels.astype(np.int8)

    @property
    def num_frames(self) -> int:
        return self.labels.shape[0]

    @property
    def num_speakers(self) -> int:
        return self.labels.shape[1]


@dataclass
class Segment:
    speaker: str
    onset_s: float
    duration_s: float

    @property
    def offset_s(self) -> float:
        return self.onset_s + self.duration_s


@dataclass
class SegmentList:
    """Per-speaker time segments for one recording (RTTM equivalent)."""

    recording_id: str = "rec"
    entries: list[Segment] = field(default_factory=list)

    def __post_init__(self):
        for seg in self.entries:
            if seg.duration_s <= 0:
                raise InputError(f"segment duration must be positive, got {seg.duration_s}")
            if seg.onset_s < 0:
                raise InputError(f"segment onset must be nonnegative, got {seg.onset_s}")

    def add(self, speaker: str, onset_s: float, duration_s: float) -> None:
        if duration_s <= 0:
            raise InputError(f"segment duration must be positive, got {duration_s}")
        if onset_s < 0:
            raise InputError(f"segment onset must be nonnegative, got {onset_s}")
        self.entries.append(Segment(speaker, onset_s, duration_s))

    def speakers(self) -> list[str]:
        seen: dict[str, None] = {}
        for seg in self.entries:
            seen.setdefault(seg.speaker, None)
        return list(seen)

    def __len__(self):
        return len(self.entries)


# -- log-Mel extraction ----------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular Mel filters over the one-sided FFT bins (n_mels x n_fft//2+1)."""
    n_bins = n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * sample_rate / n_fft
    mel_points = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bank = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (fft_freqs - lo) / (center - lo)
        falling = (hi - fft_freqs) / (hi - center)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def mel_band_centers_hz(n_mels: int, sample_rate: int) -> np.ndarray:
    mel_points = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
    return mel_to_hz(mel_points)[1:-1]


def logmel_extract(
    audio: np.ndarray,
    sample_rate: int,
    n_mels: int = DEFAULT_N_MELS,
    frame_length_s: float = DEFAULT_FRAME_LENGTH_S,
    frame_shift_s: float = DEFAULT_FRAME_SHIFT_S,
) -> FeatureSequence:
    """Frame the waveform, apply a windowed FFT, Mel filterbank, and log.

    T = floor((len - window) / hop) + 1; raises InputError for audio
    shorter than one window.
    """
    if sample_rate not in (8000, 16000):
        raise InputError(f"sample_rate must be 8000 or 16000, got {sample_rate}")
    audio = np.asarray(audio, dtype=np.float64).reshape(-1)
    window = int(round(frame_length_s * sample_rate))
    hop = int(round(frame_shift_s * sample_rate))
    if audio.size < window:
        raise InputError(f"audio has {audio.size} samples, below one {window}-sample window")
    num_frames = (audio.size - window) // hop + 1
    n_fft = 1
    while n_fft < window:
        n_fft *= 2
    taper = np.hamming(window)
    bank = mel_filterbank(n_mels, n_fft, sample_rate)
    frames = np.lib.stride_tricks.sliding_window_view(audio, window)[::hop][:num_frames]
    spectra = np.abs(np.fft.rfft(frames * taper, n=n_fft, axis=1)) ** 2
    mel_energy = spectra @ bank.T
    feats = np.log(np.maximum(mel_energy, MEL_FLOOR)).T
    return FeatureSequence(feats, frame_shift_s, frame_length_s, sample_rate)


def mean_var_normalize(f: FeatureSequence, eps: float = 1e-8) -> FeatureSequence:
    """Per-recording, per-dimension mean/variance normalization."""
    mean = f.features.mean(axis=1, keepdims=True)
    std = f.features.std(axis=1, keepdims=True)
    normalized = (f.features - mean) / np.maximum(std, eps)
    return FeatureSequence(normalized, f.frame_shift_s, f.frame_length_s, f.sample_rate)


def subsample(f: FeatureSequence, factor: int) -> FeatureSequence:
    """Reduce the frame rate by ``factor`` using a mean over each frame group.

    Output length is ceil(T / factor); the final partial group is
    zero-padded before averaging. Frame shift scales by ``factor``.
    """
    from .errors import ConfigError

    if factor <= 0:
        raise ConfigError(f"subsample factor must be >= 1, got {factor}")
    if factor == 1:
        return f
    dim, num = f.features.shape
    out_len = math.ceil(num / factor)
    padded = np.zeros((dim, out_len * factor))
    padded[:, :num] = f.features
    pooled = padded.reshape(dim, out_len, factor).mean(axis=2)
    return FeatureSequence(
        pooled, f.frame_shift_s * factor, f.frame_length_s, f.sample_rate
    )


# -- labels <-> segments ----------------------------------------------------------


def labels_from_segments(
    segs: SegmentList,
    num_frames: int,
    frame_shift_s: float,
    speakers: list[str] | None = None,
) -> LabelMatrix:
    """Mark frame t active for a speaker when the frame center falls in a segment.

    Boundary ties count as active. ``speakers`` fixes the column order;
    by default columns follow first appearance in the segment list.
    """
    if speakers is None:
        speakers = segs.speakers()
    index = {spk: i for i, spk in enumerate(speakers)}
    for seg in segs.entries:
        if seg.speaker not in index:
            raise InputError(f"segment speaker {seg.speaker!r} not in speaker list {speakers}")
    labels = np.zeros((num_frames, len(speakers)), dtype=np.int8)
    centers = (np.arange(num_frames) + 0.5) * frame_shift_s
    for seg in segs.entries:
        active = (centers >= seg.onset_s) & (centers <= seg.offset_s)
        labels[active, index[seg.speaker]] = 1
    return LabelMatrix(labels, frame_shift_s)


# -- RTTM I/O ---------------------------------------------------------------------


def read_rttm(path) -> SegmentList:
    """Parse SPEAKER records from an RTTM file."""
    segs = SegmentList(recording_id="")
    with open(path) as handle:
        for line_number, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith(";"):
                continue
            fields = stripped.split()
            if fields[0] != "SPEAKER":
                raise RttmParseError(f"expected SPEAKER record, got {fields[0]!r}", line_number)
            if len(fields) < 8:
                raise RttmParseError(f"expected >= 8 fields, got {len(fields)}", line_number)
            try:
                onset = float(fields[3])
                duration = float(fields[4])
            except ValueError as exc:
                raise RttmParseError(f"bad onset/duration: {exc}", line_number) from exc
            if duration <= 0 or onset < 0:
                raise RttmParseError(
                    f"onset {onset} / duration {duration} out of range", line_number
                )
            if not segs.recording_id:
                segs.recording_id = fields[1]
            segs.add(fields[7], onset, duration)
    if not segs.recording_id:
        segs.recording_id = "rec"
    return segs


def write_rttm(segs: SegmentList, path) -> None:
    lines = []
    for seg in segs.entries:
        lines.append(
            f"SPEAKER {segs.recording_id} 1 {seg.onset_s:.3f} {seg.duration_s:.3f} "
            f"<NA> <NA> {seg.speaker} <NA> <NA>"
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# -- feature dumps and WAV --------------------------------------------------------


def save_features(f: FeatureSequence, path) -> None:
    checkpoint.save_arrays(
        {
            "features": f.features,
            "frame_shift_s": np.array([f.frame_shift_s]),
            "frame_length_s": np.array([f.frame_length_s]),
            "sample_rate": np.array([float(f.sample_rate)]),
        },
        path,
    )


def load_features(path) -> FeatureSequence:
    arrays = checkpoint.load_arrays(path)
    return FeatureSequence(
        arrays["features"],
        float(arrays["frame_shift_s"][0]),
        float(arrays["frame_length_s"][0]),
        int(arrays["sample_rate"][0]),
    )


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read 16-bit PCM WAV; multichannel input is averaged to mono."""
    with wave.open(str(path), "rb") as handle:
        if handle.getsampwidth() != 2:
            raise InputError(f"{path}: only 16-bit PCM WAV is supported")
        rate = handle.getframerate()
        channels = handle.getnchannels()
        raw = handle.readframes(handle.getnframes())
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        data = data.reshape(-1, channels).mean(axis=1)
    return data, rate
