"""Eigenspectra, difference spectra, WSED scoring and aggregation.

Each coordination matrix yields a rank-ordered eigenspectrum; spectra
across delay scales are concatenated into one vector per segment.  All
healthy-control segment spectra are pooled into a reference, and each
subject or segment is summarized by the weighted sum with exponential
decay (WSED) of its difference spectrum against that reference:

    wsed(v, alpha) = sum_i v[i] * alpha**i        (0 < alpha < 1)

Positive scores indicate simpler (more tightly coordinated) dynamics
than the reference, negative scores more complex ones.  Scores are
aggregated segments -> session mean -> subject mean-of-session-means and
normalized to [-1, 1] by the cohort-wide maximum absolute value at each
level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import reduce
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import (
    TRACE_TOL_PER_DIM,
    ArtcoordError,
    CoordinationMatrix,
    DifferenceSpectrum,
    Eigenspectrum,
    InvariantError,
    Level,
    ScoreRecord,
    Trend,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WsedConfig:
    """Knobs for scoring and trend labelling.

    alpha is the exponential decay of the rank weights.
    ambiguity_epsilon is the half-width of the normalized-score band that
    is labelled ambiguous instead of complex/simple.
    early_rank_count is how many leading ranks the shape classifier
    averages.
    """

    alpha: float = 0.8
    ambiguity_epsilon: float = 0.06
    early_rank_count: int = 5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvariantError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.ambiguity_epsilon < 0:
            raise InvariantError("ambiguity_epsilon must be non-negative")
        if self.early_rank_count < 1:
            raise InvariantError("early_rank_count must be >= 1")


def eigenspectrum(matrix: CoordinationMatrix) -> Eigenspectrum:
    """Eigenvalues of a coordination matrix, sorted non-increasing.

    Ordering is by signed value; the matrix is positive semidefinite so
    this coincides with ordering by magnitude up to numerical noise.
    The trace identity sum(values) == dim is checked as a solver sanity
    gate.
    """
    try:
        values = np.linalg.eigvalsh(matrix.entries)[::-1]
    except np.linalg.LinAlgError as exc:
        raise ArtcoordError(
            f"eigendecomposition failed for {matrix.provenance.label()}: {exc}"
        )
    trace_err = abs(values.sum() - matrix.dim)
    if trace_err > TRACE_TOL_PER_DIM * matrix.dim:
        raise ArtcoordError(
            f"trace not conserved for {matrix.provenance.label()}: "
            f"|sum - dim| = {trace_err:.3e}"
        )
    return Eigenspectrum(
        values=values,
        block_sizes=(matrix.dim,),
        source=f"{matrix.provenance.label()}@d{matrix.scale_spacing}",
    )


def concat_scales(per_scale: Sequence[Eigenspectrum]) -> Eigenspectrum:
    """Concatenate per-scale spectra into one vector, preserving the
    configured scale order and each block's internal ordering."""
    if not per_scale:
        raise ArtcoordError("no spectra to concatenate")
    if len(per_scale) == 1:
        return per_scale[0]
    return Eigenspectrum(
        values=np.concatenate([s.values for s in per_scale]),
        block_sizes=tuple(b for s in per_scale for b in s.block_sizes),
        source=per_scale[0].source.split("@")[0],
    )


def average_spectra(spectra: Sequence[Eigenspectrum], source: str = "") -> Eigenspectrum:
    """Rank-wise arithmetic mean of equal-length spectra.

    Summation runs in list order so the result is bit-reproducible for a
    fixed input ordering regardless of worker count.
    """
    if not spectra:
        raise ArtcoordError("cannot average zero spectra")
    first = spectra[0]
    for s in spectra[1:]:
        if s.values.size != first.values.size or s.block_sizes != first.block_sizes:
            raise ArtcoordError(
                f"spectrum length/block mismatch: {s.block_sizes} vs {first.block_sizes}"
            )
    total = reduce(np.add, (s.values for s in spectra))
    return Eigenspectrum(
        values=total / len(spectra),
        block_sizes=first.block_sizes,
        source=source or f"mean-of-{len(spectra)}",
    )


def difference_spectrum(
    spectrum: Eigenspectrum, reference: Eigenspectrum
) -> DifferenceSpectrum:
    """Elementwise ``spectrum - reference``."""
    if spectrum.values.size != reference.values.size:
        raise ArtcoordError(
            f"length mismatch: spectrum has {spectrum.values.size} ranks, "
            f"reference has {reference.values.size}"
        )
    if spectrum.block_sizes != reference.block_sizes:
        raise ArtcoordError(
            f"block mismatch: {spectrum.block_sizes} vs {reference.block_sizes}"
        )
    return DifferenceSpectrum(
        values=spectrum.values - reference.values,
        minuend=spectrum.source,
        subtrahend=reference.source,
        block_sizes=spectrum.block_sizes,
    )


def wsed(diff, alpha: float) -> float:
    """Weighted sum with exponential decay over a ranked vector.

    Accepts a :class:`DifferenceSpectrum` or any 1-d array; terms are
    accumulated in ascending rank order.
    """
    values = np.asarray(getattr(diff, "values", diff), dtype=float)
    if values.ndim != 1:
        raise ArtcoordError(f"expected a 1-d vector, got shape {values.shape}")
    if not 0.0 < alpha < 1.0:
        raise ArtcoordError(f"alpha must be in (0, 1), got {alpha}")
    if not np.isfinite(values).all():
        raise ArtcoordError("non-finite value in ranked vector")
    total = 0.0
    weight = 1.0
    for v in values.tolist():
        total += v * weight
        weight *= alpha
    return total


def normalize_scores(raw: Sequence[float]) -> tuple[list[float], float]:
    """Divide by the maximum absolute value so scores land in [-1, 1].

    Returns ``(normalized, factor)``.  An all-zero input keeps factor 1
    so the output is all zeros rather than NaN.
    """
    values = [float(v) for v in raw]
    if not values:
        raise ArtcoordError("no scores to normalize")
    if not all(np.isfinite(values)):
        raise ArtcoordError("non-finite score")
    factor = max(abs(v) for v in values)
    if factor == 0.0:
        factor = 1.0
    return [v / factor for v in values], factor


def classify_trend_by_wsed(normalized_wsed: float, epsilon: float) -> Trend:
    """Label a normalized score: negative means complex coordination,
    positive means simple, and a band of half-width ``epsilon`` around
    zero is ambiguous."""
    if abs(normalized_wsed) > 1.0:
        raise ArtcoordError(f"normalized score {normalized_wsed} outside [-1, 1]")
    if normalized_wsed < -epsilon:
        return Trend.COMPLEX
    if normalized_wsed > epsilon:
        return Trend.SIMPLE
    return Trend.AMBIGUOUS


def classify_trend_by_shape(diff: DifferenceSpectrum, early_rank_count: int) -> Trend:
    """Label a difference spectrum by the mean of its first ranks.

    A positive early mean (excess mass in the top ranks) reads as simple
    coordination, a negative one as complex.  An exact zero ties toward
    complex, the clinically salient label.
    """
    if early_rank_count > diff.values.size:
        raise ArtcoordError(
            f"early_rank_count {early_rank_count} exceeds spectrum length "
            f"{diff.values.size}"
        )
    early_mean = float(diff.values[:early_rank_count].mean())
    return Trend.SIMPLE if early_mean > 0.0 else Trend.COMPLEX


@dataclass(frozen=True)
class SegmentWsed:
    """Raw per-segment score, the input to aggregation."""

    subject_id: str
    session_id: str
    segment_index: int
    value: float


@dataclass(frozen=True)
class CohortScores:
    """Score records at all three levels plus the per-level normalization
    factors (raw scores stay recoverable as normalized * factor)."""

    segments: tuple[ScoreRecord, ...]
    sessions: tuple[ScoreRecord, ...]
    subjects: tuple[ScoreRecord, ...]
    factors: dict[Level, float]

    def subject(self, subject_id: str) -> ScoreRecord:
        for record in self.subjects:
            if record.subject_id == subject_id:
                return record
        raise KeyError(subject_id)


BprsTriple = tuple[int | None, int | None, int | None]


def aggregate(
    segment_scores: Iterable[SegmentWsed],
    config: WsedConfig,
    session_bprs: Mapping[tuple[str, str], BprsTriple] | None = None,
) -> CohortScores:
    """Roll raw segment scores up to session and subject level.

    Session score is the mean of its segment scores; subject score is the
    mean of its session scores, NOT the pooled segment mean (the two
    differ when sessions have unequal segment counts).  Summation order
    is fixed by sorting on (subject_id, session_id, segment_index), so
    aggregation is deterministic.  Each level is normalized by its own
    cohort-wide max-abs factor and labelled from the normalized value.
    """
    ordered = sorted(
        segment_scores, key=lambda s: (s.subject_id, s.session_id, s.segment_index)
    )
    if not ordered:
        raise ArtcoordError("no segment scores to aggregate")
    session_bprs = dict(session_bprs or {})

    by_session: dict[tuple[str, str], list[SegmentWsed]] = {}
    for score in ordered:
        by_session.setdefault((score.subject_id, score.session_id), []).append(score)
    session_means = {
        key: sum(s.value for s in scores) / len(scores)
        for key, scores in by_session.items()
    }
    by_subject: dict[str, list[float]] = {}
    for (subject_id, _), mean in sorted(session_means.items()):
        by_subject.setdefault(subject_id, []).append(mean)
    subject_means = {
        subject: sum(means) / len(means) for subject, means in by_subject.items()
    }

    seg_norm, seg_factor = normalize_scores([s.value for s in ordered])
    sess_keys = sorted(session_means)
    sess_norm, sess_factor = normalize_scores([session_means[k] for k in sess_keys])
    subj_keys = sorted(subject_means)
    subj_norm, subj_factor = normalize_scores([subject_means[k] for k in subj_keys])

    def label(value: float) -> Trend:
        return classify_trend_by_wsed(value, config.ambiguity_epsilon)

    segments = tuple(
        ScoreRecord(
            level=Level.SEGMENT,
            subject_id=s.subject_id,
            session_id=s.session_id,
            segment_index=s.segment_index,
            wsed_raw=s.value,
            wsed_normalized=norm,
            trend=label(norm),
        )
        for s, norm in zip(ordered, seg_norm)
    )
    sessions = tuple(
        ScoreRecord(
            level=Level.SESSION,
            subject_id=subject_id,
            session_id=session_id,
            segment_index=None,
            wsed_raw=session_means[(subject_id, session_id)],
            wsed_normalized=norm,
            trend=label(norm),
            bprs_total=session_bprs.get((subject_id, session_id), (None,) * 3)[0],
            bprs_positive=session_bprs.get((subject_id, session_id), (None,) * 3)[1],
            bprs_negative=session_bprs.get((subject_id, session_id), (None,) * 3)[2],
        )
        for (subject_id, session_id), norm in zip(sess_keys, sess_norm)
    )
    subjects = tuple(
        ScoreRecord(
            level=Level.SUBJECT,
            subject_id=subject_id,
            session_id=None,
            segment_index=None,
            wsed_raw=subject_means[subject_id],
            wsed_normalized=norm,
            trend=label(norm),
        )
        for subject_id, norm in zip(subj_keys, subj_norm)
    )
    return CohortScores(
        segments=segments,
        sessions=sessions,
        subjects=subjects,
        factors={
            Level.SEGMENT: seg_factor,
            Level.SESSION: sess_factor,
            Level.SUBJECT: subj_factor,
        },
    )


def attach_shape_trends(
    scores: CohortScores, shape_trends: Mapping[str, Trend]
) -> CohortScores:
    """Return a copy of ``scores`` with subject-level shape labels filled in."""
    subjects = tuple(
        replace(record, trend_shape=shape_trends.get(record.subject_id))
        for record in scores.subjects
    )
    return replace(scores, subjects=subjects)
