"""Posterior post-processing and diarization error rate scoring.

DER follows the standard time-weighted convention: the denominator is
total reference speech time counting overlap multiplicities, hypothesis
speakers are mapped one-to-one to reference speakers by maximizing
correctly attributed time, and an optional collar around reference
segment boundaries is excluded from scoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError
from .features import LabelMatrix, SegmentList


@dataclass
class InferenceConfig:
    diar_threshold: float = 0.5
    exist_threshold: float = 0.5
    collar_s: float = 0.0
    min_segment_s: float = 0.0
    subsample_factor: int = 10

    def __post_init__(self):
        for name in ("diar_threshold", "exist_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise InputError(f"{name} must lie in (0, 1), got {value}")
        if self.collar_s < 0 or self.min_segment_s < 0:
            raise InputError("collar_s and min_segment_s must be nonnegative")


@dataclass
class DerReport:
    der: float
    miss: float
    false_alarm: float
    confusion: float
    scored_speech_s: float
    speaker_map: dict[str, str] = field(default_factory=dict)


def binarize_array(posterior: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Strict thresholding: active only when the posterior exceeds the threshold."""
    return (np.asarray(posterior) > threshold).astype(np.int8)


def binarize(posterior: np.ndarray, threshold: float, frame_shift_s: float) -> LabelMatrix:
    return LabelMatrix(binarize_array(posterior, threshold), frame_shift_s)


def segments_from_labels(
    labels: LabelMatrix,
    min_segment_s: float = 0.0,
    recording_id: str = "rec",
    speakers: list[str] | None = None,
) -> SegmentList:
    """Turn maximal runs of active frames into segments.

    Frame t covers [t*shift, (t+1)*shift); with min_segment_s = 0 this is the
    exact inverse of frame-center label assignment for frame-aligned segments.
    """
    shift = labels.frame_shift_s
    if speakers is None:
        speakers = [f"spk{s}" for s in range(labels.num_speakers)]
    segs = SegmentList(recording_id=recording_id)
    for s in range(labels.num_speakers):
        column = labels.labels[:, s]
        padded = np.concatenate([[0], column, [0]])
        edges = np.flatnonzero(np.diff(padded))
        for start, stop in zip(edges[::2], edges[1::2]):
            duration = (stop - start) * shift
            if duration >= min_segment_s and duration > 0:
                segs.add(speakers[s], start * shift, duration)
    return segs


# -- DER ------------------------------------------------------------------------


def _boundaries(ref: SegmentList, hyp: SegmentList, collar_s: float) -> np.ndarray:
    points = {0.0}
    for seg in ref.entries:
        points.add(seg.onset_s)
        points.add(seg.offset_s)
        if collar_s > 0:
            points.update(
                (
                    max(0.0, seg.onset_s - collar_s),
                    seg.onset_s + collar_s,
                    max(0.0, seg.offset_s - collar_s),
                    seg.offset_s + collar_s,
                )
            )
    for seg in hyp.entries:
        points.add(seg.onset_s)
        points.add(seg.offset_s)
    return np.array(sorted(points))


def _active_at(segments: SegmentList, speakers: list[str], midpoint: float) -> np.ndarray:
    flags = np.zeros(len(speakers), dtype=bool)
    index = {spk: i for i, spk in enumerate(speakers)}
    for seg in segments.entries:
        if seg.onset_s <= midpoint < seg.offset_s:
            flags[index[seg.speaker]] = True
    return flags


def der(ref: SegmentList, hyp: SegmentList, cfg: InferenceConfig | None = None) -> DerReport:
    """Time-weighted miss / false alarm / speaker confusion against a reference.

    Sweeps the elementary intervals induced by all segment (and collar)
    boundaries; within each interval the active-speaker sets are constant.
    The hypothesis-to-reference speaker map maximizes jointly attributed
    time over the scored regions (optimal assignment).
    """
    cfg = cfg or InferenceConfig()
    if not ref.entries:
        raise InputError("DER is undefined for an empty reference")
    ref_speakers = ref.speakers()
    hyp_speakers = hyp.speakers()
    edges = _boundaries(ref, hyp, cfg.collar_s)

    collar_windows = []
    if cfg.collar_s > 0:
        for seg in ref.entries:
            collar_windows.append((seg.onset_s - cfg.collar_s, seg.onset_s + cfg.collar_s))
            collar_windows.append((seg.offset_s - cfg.collar_s, seg.offset_s + cfg.collar_s))

    # pass 1: joint activity time per (reference, hypothesis) speaker pair
    overlap = np.zeros((len(ref_speakers), len(hyp_speakers)))
    intervals = []
    for start, stop in zip(edges[:-1], edges[1:]):
        width = stop - start
        if width <= 0:
            continue
        mid = 0.5 * (start + stop)
        if any(lo <= mid < hi for lo, hi in collar_windows):
            continue
        ref_active = _active_at(ref, ref_speakers, mid)
        hyp_active = _active_at(hyp, hyp_speakers, mid)
        intervals.append((width, ref_active, hyp_active))
        overlap += width * np.outer(ref_active, hyp_active)

    if len(ref_speakers) and len(hyp_speakers):
        rows, cols = linear_sum_assignment(-overlap)
        mapping = {hyp_speakers[c]: ref_speakers[r] for r, c in zip(rows, cols)}
        pairs = list(zip(rows, cols))
    else:
        mapping = {}
        pairs = []

    # pass 2: error accumulation with the fixed map
    scored = miss = false_alarm = correct = confusable = 0.0
    for width, ref_active, hyp_active in intervals:
        n_ref = int(ref_active.sum())
        n_hyp = int(hyp_active.sum())
        scored += width * n_ref
        miss += width * max(0, n_ref - n_hyp)
        false_alarm += width * max(0, n_hyp - n_ref)
        confusable += width * min(n_ref, n_hyp)
        correct += width * sum(ref_active[r] and hyp_active[c] for r, c in pairs)
    confusion = confusable - correct

    if scored <= 0:
        raise InputError("DER is undefined: no scored reference speech")
    return DerReport(
        der=(miss + false_alarm + confusion) / scored,
        miss=miss / scored,
        false_alarm=false_alarm / scored,
        confusion=confusion / scored,
        scored_speech_s=scored,
        speaker_map=mapping,
    )


def aggregate_der(reports: list[DerReport]) -> DerReport:
    """Pool per-file reports: sum time-weighted components, then divide."""
    if not reports:
        raise InputError("nothing to aggregate")
    scored = sum(r.scored_speech_s for r in reports)
    miss = sum(r.miss * r.scored_speech_s for r in reports)
    fa = sum(r.false_alarm * r.scored_speech_s for r in reports)
    conf = sum(r.confusion * r.scored_speech_s for r in reports)
    return DerReport(
        der=(miss + fa + conf) / scored,
        miss=miss / scored,
        false_alarm=fa / scored,
        confusion=conf / scored,
        scored_speech_s=scored,
    )


def count_accuracy(refs: list[int], hyps: list[int]) -> float:
    """Fraction of recordings whose estimated speaker count is exactly right."""
    if len(refs) != len(hyps):
        raise InputError(f"count lists differ in length: {len(refs)} vs {len(hyps)}")
    if not refs:
        return 1.0
    return sum(int(r == h) for r, h in zip(refs, hyps)) / len(refs)


# -- report formatting ---------------------------------------------------------


@dataclass
class FileScore:
    file_id: str
    report: DerReport
    ref_speakers: int
    hyp_speakers: int


def format_score_report(scores: list[FileScore]) -> str:
    """Per-file rows, an aggregate row, and per-reference-speaker-count blocks."""
    lines = ["file\tder\tmiss\tfa\tconfusion\tref_speakers\thyp_speakers"]
    for s in scores:
        r = s.report
        lines.append(
            f"{s.file_id}\t{r.der:.4f}\t{r.miss:.4f}\t{r.false_alarm:.4f}"
            f"\t{r.confusion:.4f}\t{s.ref_speakers}\t{s.hyp_speakers}"
        )
    overall = aggregate_der([s.report for s in scores])
    lines.append(
        f"ALL\t{overall.der:.4f}\t{overall.miss:.4f}\t{overall.false_alarm:.4f}"
        f"\t{overall.confusion:.4f}\t-\t-"
    )
    lines.append("")
    lines.append("by_ref_speaker_count\tfiles\tder\tmiss\tfa\tconfusion")
    for count in sorted({s.ref_speakers for s in scores}):
        group = [s.report for s in scores if s.ref_speakers == count]
        pooled = aggregate_der(group)
        lines.append(
            f"NS{count}\t{len(group)}\t{pooled.der:.4f}\t{pooled.miss:.4f}"
            f"\t{pooled.false_alarm:.4f}\t{pooled.confusion:.4f}"
        )
    return "\n".join(lines) + "\n"
