"""Cohort manifest loading, feature-CSV ingestion and windowing.

A cohort is described by a manifest CSV with one row per recording
session::

    subject_id,session_id,group,sample_rate_hz,feature_file,bprs_total,bprs_positive,bprs_negative

``feature_file`` paths are resolved relative to the manifest's directory.
BPRS columns may be left empty.  Feature files are plain CSV: a header
row of channel names followed by one row of floats per frame.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ArtcoordError, FeatureTrack, Group, InvariantError

log = logging.getLogger(__name__)

MANIFEST_COLUMNS = (
    "subject_id",
    "session_id",
    "group",
    "sample_rate_hz",
    "feature_file",
    "bprs_total",
    "bprs_positive",
    "bprs_negative",
)


class ManifestError(ArtcoordError):
    """Malformed cohort manifest; message carries the offending row."""


class FeatureFileError(ArtcoordError):
    """Malformed feature CSV; message carries frame/channel position."""


@dataclass(frozen=True)
class ManifestRow:
    subject_id: str
    session_id: str
    group: Group
    sample_rate_hz: float
    feature_file: Path
    bprs_total: int | None = None
    bprs_positive: int | None = None
    bprs_negative: int | None = None


@dataclass(frozen=True)
class CohortManifest:
    rows: tuple[ManifestRow, ...]
    path: Path

    def __len__(self) -> int:
        return len(self.rows)

    def hc_rows(self) -> list[ManifestRow]:
        return [r for r in self.rows if r.group is Group.HC]


def _parse_optional_int(text: str, column: str, row_no: int) -> int | None:
    text = text.strip()
    if not text:
        return None
    try:
        return int(text)
    except ValueError:
        raise ManifestError(f"row {row_no}: {column} must be an integer, got {text!r}")


def load_manifest(path) -> CohortManifest:
    """Load and validate a cohort manifest CSV.

    Raises :class:`ManifestError` naming the first offending row for
    missing columns, duplicate (subject, session) pairs, unknown group
    values, bad numbers or missing feature files.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in MANIFEST_COLUMNS if c not in header]
        if missing:
            raise ManifestError(f"manifest missing columns: {', '.join(missing)}")
        rows: list[ManifestRow] = []
        seen: dict[tuple[str, str], int] = {}
        group_of: dict[str, Group] = {}
        for row_no, raw in enumerate(reader, start=2):  # 1-based, after header
            if raw.get(None):
                raise ManifestError(f"row {row_no}: more fields than columns")
            subject = (raw["subject_id"] or "").strip()
            session = (raw["session_id"] or "").strip()
            if not subject or not session:
                raise ManifestError(f"row {row_no}: empty subject or session id")
            key = (subject, session)
            if key in seen:
                raise ManifestError(
                    f"row {row_no}: duplicate (subject_id, session_id) "
                    f"{key}, first seen at row {seen[key]}"
                )
            seen[key] = row_no
            try:
                group = Group(raw["group"].strip())
            except ValueError:
                raise ManifestError(
                    f"row {row_no}: unknown group {raw['group']!r} (expected SZ or HC)"
                )
            if group_of.setdefault(subject, group) is not group:
                raise ManifestError(
                    f"row {row_no}: subject {subject} appears in both groups"
                )
            try:
                rate = float(raw["sample_rate_hz"])
            except ValueError:
                raise ManifestError(
                    f"row {row_no}: bad sample_rate_hz {raw['sample_rate_hz']!r}"
                )
            if not (np.isfinite(rate) and rate > 0):
                raise ManifestError(f"row {row_no}: sample_rate_hz must be positive")
            feature_file = (path.parent / raw["feature_file"].strip()).resolve()
            if not feature_file.is_file():
                raise ManifestError(f"row {row_no}: feature file not found: {feature_file}")
            rows.append(
                ManifestRow(
                    subject_id=subject,
                    session_id=session,
                    group=group,
                    sample_rate_hz=rate,
                    feature_file=feature_file,
                    bprs_total=_parse_optional_int(raw["bprs_total"], "bprs_total", row_no),
                    bprs_positive=_parse_optional_int(
                        raw["bprs_positive"], "bprs_positive", row_no
                    ),
                    bprs_negative=_parse_optional_int(
                        raw["bprs_negative"], "bprs_negative", row_no
                    ),
                )
            )
    return CohortManifest(rows=tuple(rows), path=path)


def read_channel_names(feature_file) -> tuple[str, ...]:
    """Read just the header row of a feature CSV."""
    with open(feature_file, newline="", encoding="utf-8-sig") as fh:
        header = fh.readline()
    names = tuple(name.strip() for name in header.rstrip("\r\n").split(","))
    if len(names) < 2 or any(not n for n in names):
        raise FeatureFileError(f"{feature_file}: bad header {names!r}")
    return names


def _diagnose_feature_file(path: Path, n_cols: int) -> None:
    """Slow pass to pinpoint the first ragged or non-numeric cell."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        for frame, cells in enumerate(reader):
            if not cells:
                continue
            if len(cells) != n_cols:
                raise FeatureFileError(
                    f"{path}: frame {frame} has {len(cells)} cells, expected {n_cols}"
                )
            for col, cell in enumerate(cells):
                try:
                    float(cell)
                except ValueError:
                    raise FeatureFileError(
                        f"{path}: unparseable value {cell!r} at frame {frame}, column {col}"
                    )


def load_track(row: ManifestRow) -> FeatureTrack:
    """Load the feature CSV referenced by a manifest row.

    The fast path parses with numpy; on failure a csv pass re-reads the
    file to report the exact frame and channel of the problem.  NaN/Inf
    cells are rejected, never imputed.
    """
    path = row.feature_file
    names = read_channel_names(path)
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2, dtype=float)
    except ValueError:
        _diagnose_feature_file(path, len(names))
        raise FeatureFileError(f"{path}: unreadable feature data")
    if data.size == 0:
        raise FeatureFileError(f"{path}: no frames")
    if data.shape[1] != len(names):
        raise FeatureFileError(
            f"{path}: {data.shape[1]} data columns for {len(names)} channel names"
        )
    finite = np.isfinite(data)
    if not finite.all():
        frame, col = np.argwhere(~finite)[0]
        raise FeatureFileError(
            f"{path}: non-finite value at frame {frame}, channel '{names[col]}'"
        )
    try:
        return FeatureTrack(
            subject_id=row.subject_id,
            session_id=row.session_id,
            group=row.group,
            sample_rate_hz=row.sample_rate_hz,
            channel_names=names,
            samples=data.T,
        )
    except InvariantError as exc:
        raise FeatureFileError(f"{path}: {exc}")


@dataclass(frozen=True)
class Segment:
    """A view of ``length`` consecutive frames of one track."""

    track: FeatureTrack
    start: int
    length: int
    segment_index: int

    @property
    def samples(self) -> np.ndarray:
        return self.track.samples[:, self.start : self.start + self.length]

    @property
    def channel_names(self) -> tuple[str, ...]:
        return self.track.channel_names


def window_length(window_seconds: float, sample_rate_hz: float) -> int:
    return int(round(window_seconds * sample_rate_hz))


def segment_track(
    track: FeatureTrack,
    window_seconds: float,
    stride_seconds: float | None = None,
) -> list[Segment]:
    """Cut a track into fixed-length windows of ``window_seconds``.

    Windows start at frame 0 and by default do not overlap (stride equals
    the window); the trailing remainder shorter than one window is
    dropped.  A track shorter than one window yields an empty list, which
    is surfaced as a warning rather than an error.
    """
    if window_seconds <= 0:
        raise InvariantError("window_seconds must be positive")
    length = window_length(window_seconds, track.sample_rate_hz)
    if length < 1:
        raise InvariantError(
            f"window of {window_seconds}s is shorter than one frame at "
            f"{track.sample_rate_hz} Hz"
        )
    stride = length if stride_seconds is None else window_length(
        stride_seconds, track.sample_rate_hz
    )
    if stride < 1:
        raise InvariantError("stride must cover at least one frame")
    segments = [
        Segment(track=track, start=start, length=length, segment_index=index)
        for index, start in enumerate(range(0, track.n_frames - length + 1, stride))
    ]
    if not segments:
        log.warning(
            "%s/%s: track of %d frames shorter than one %d-frame window; no segments",
            track.subject_id,
            track.session_id,
            track.n_frames,
            length,
        )
    return segments
