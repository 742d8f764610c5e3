"""Domain types and invariants for articulatory coordination analysis.

The pipeline turns multichannel articulatory time series into
channel-delay correlation matrices, rank-ordered eigenspectra, difference
spectra against a healthy-control reference, and coordination scores.
Everything downstream shares the small set of immutable types defined
here.  Constructors validate their invariants and reject bad data rather
than repairing it; all instances are safe to share between workers.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, fields

import numpy as np

# Tolerances for the correlation-matrix invariants.  A matrix built from a
# standardized delayed ensemble satisfies these up to round-off, so any
# violation indicates a construction bug upstream.
SYMMETRY_TOL = 1e-12
UNIT_DIAGONAL_TOL = 1e-12
ENTRY_RANGE_TOL = 1e-9
PSD_TOL_PER_DIM = 1e-8          # lambda_min >= -PSD_TOL_PER_DIM * dim
TRACE_TOL_PER_DIM = 1e-8        # |sum(eigenvalues) - dim| <= TRACE_TOL_PER_DIM * dim

# Default 8-channel set: six vocal-tract constriction variables plus the
# two source features (periodicity, aperiodicity).
DEFAULT_CHANNEL_NAMES = (
    "lip_aperture",
    "lip_protrusion",
    "tongue_tip_degree",
    "tongue_tip_location",
    "tongue_body_degree",
    "tongue_body_location",
    "periodicity",
    "aperiodicity",
)


class ArtcoordError(Exception):
    """Base class for all validation and pipeline errors in this package."""


class InvariantError(ArtcoordError):
    """A domain type was handed data that violates one of its invariants."""


class Group(enum.Enum):
    SZ = "SZ"
    HC = "HC"


class Level(enum.Enum):
    SEGMENT = "segment"
    SESSION = "session"
    SUBJECT = "subject"


class Trend(enum.Enum):
    COMPLEX = "complex"
    SIMPLE = "simple"
    AMBIGUOUS = "ambiguous"


def _frozen_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise InvariantError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class JsonMixin:
    """Lossless to_json/from_json built on each type's to_dict/from_dict."""

    def to_json(self) -> str:
        # json round-trips Python floats exactly (repr-based), so
        # serialize -> parse is identity on every field.
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class FeatureTrack(JsonMixin):
    """One session's multichannel articulatory time series.

    ``samples`` is channels x frames.  Channel order is significant and is
    preserved through the whole pipeline; names must be unique.
    """

    subject_id: str
    session_id: str
    group: Group
    sample_rate_hz: float
    channel_names: tuple[str, ...]
    samples: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        samples = _frozen_array(self.samples, ndim=2)
        m, t = samples.shape
        if m < 2:
            raise InvariantError(f"at least 2 channels required, got {m}")
        if t < 1:
            raise InvariantError("track has no frames")
        if len(self.channel_names) != m:
            raise InvariantError(
                f"{len(self.channel_names)} channel names for {m} channels"
            )
        if len(set(self.channel_names)) != m:
            raise InvariantError("channel names must be unique")
        if not (np.isfinite(self.sample_rate_hz) and self.sample_rate_hz > 0):
            raise InvariantError(f"sample rate must be positive, got {self.sample_rate_hz}")
        finite = np.isfinite(samples)
        if not finite.all():
            ch, frame = np.argwhere(~finite)[0]
            raise InvariantError(
                f"non-finite sample at frame {frame}, channel "
                f"'{self.channel_names[ch]}'"
            )
        object.__setattr__(self, "samples", samples)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_frames(self) -> int:
        return self.samples.shape[1]

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "session_id": self.session_id,
            "group": self.group.value,
            "sample_rate_hz": self.sample_rate_hz,
            "channel_names": list(self.channel_names),
            "samples": self.samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureTrack":
        return cls(
            subject_id=d["subject_id"],
            session_id=d["session_id"],
            group=Group(d["group"]),
            sample_rate_hz=d["sample_rate_hz"],
            channel_names=tuple(d["channel_names"]),
            samples=np.asarray(d["samples"], dtype=float),
        )


@dataclass(frozen=True)
class DelayConfig(JsonMixin):
    """Delay-embedding structure: D delayed copies per channel at each
    spacing, so every matrix has dimension n_channels * D."""

    delays_per_channel: int = 15
    scale_spacings: tuple[int, ...] = (1, 3, 7, 15)
    min_valid_window: int = 100

    def __post_init__(self):
        object.__setattr__(self, "scale_spacings", tuple(int(s) for s in self.scale_spacings))
        if self.delays_per_channel < 1:
            raise InvariantError("delays_per_channel must be >= 1")
        if not self.scale_spacings:
            raise InvariantError("at least one scale spacing required")
        if any(s < 1 for s in self.scale_spacings):
            raise InvariantError(f"spacings must be positive, got {self.scale_spacings}")
        if self.min_valid_window < 2:
            raise InvariantError("min_valid_window must be >= 2")

    def matrix_dim(self, n_channels: int) -> int:
        return n_channels * self.delays_per_channel

    def valid_window(self, n_frames: int, spacing: int) -> int:
        """Length of the common window shared by all delayed copies."""
        return n_frames - (self.delays_per_channel - 1) * spacing

    def min_frames(self, spacing: int) -> int:
        """Smallest segment length usable at this spacing."""
        return (self.delays_per_channel - 1) * spacing + self.min_valid_window

    def to_dict(self) -> dict:
        return {
            "delays_per_channel": self.delays_per_channel,
            "scale_spacings": list(self.scale_spacings),
            "min_valid_window": self.min_valid_window,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DelayConfig":
        return cls(
            delays_per_channel=d["delays_per_channel"],
            scale_spacings=tuple(d["scale_spacings"]),
            min_valid_window=d["min_valid_window"],
        )


@dataclass(frozen=True)
class Provenance(JsonMixin):
    """Where a matrix or spectrum came from."""

    subject_id: str = ""
    session_id: str = ""
    segment_index: int | None = None

    def label(self) -> str:
        parts = [p for p in (self.subject_id, self.session_id) if p]
        if self.segment_index is not None:
            parts.append(f"seg{self.segment_index}")
        return "/".join(parts) if parts else "adhoc"

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "session_id": self.session_id,
            "segment_index": self.segment_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Provenance":
        return cls(**d)


@dataclass(frozen=True)
class CoordinationMatrix(JsonMixin):
    """Symmetric channel-delay correlation matrix for one segment at one
    delay spacing.

    The constructor checks symmetry, unit diagonal, entry range and
    positive semidefiniteness, and raises :class:`InvariantError` rather
    than repairing a violating matrix.
    """

    dim: int
    scale_spacing: int
    entries: np.ndarray
    provenance: Provenance = Provenance()

    def __post_init__(self):
        entries = _frozen_array(self.entries, ndim=2)
        where = self.provenance.label()
        if entries.shape != (self.dim, self.dim):
            raise InvariantError(
                f"[{where}] entries shape {entries.shape} does not match dim {self.dim}"
            )
        if not np.isfinite(entries).all():
            raise InvariantError(f"[{where}] matrix contains non-finite entries")
        asym = np.abs(entries - entries.T).max()
        if asym > SYMMETRY_TOL:
            raise InvariantError(f"[{where}] asymmetry {asym:.3e} exceeds {SYMMETRY_TOL}")
        diag_err = np.abs(np.diagonal(entries) - 1.0).max()
        if diag_err > UNIT_DIAGONAL_TOL:
            raise InvariantError(
                f"[{where}] diagonal deviates from 1 by {diag_err:.3e}"
            )
        overshoot = np.abs(entries).max() - 1.0
        if overshoot > ENTRY_RANGE_TOL:
            raise InvariantError(
                f"[{where}] entry magnitude exceeds 1 by {overshoot:.3e}"
            )
        lam_min = np.linalg.eigvalsh(entries)[0]
        if lam_min < -PSD_TOL_PER_DIM * self.dim:
            raise InvariantError(
                f"[{where}] not positive semidefinite: lambda_min={lam_min:.3e}"
            )
        object.__setattr__(self, "entries", entries)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "scale_spacing": self.scale_spacing,
            "entries": self.entries.tolist(),
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoordinationMatrix":
        return cls(
            dim=d["dim"],
            scale_spacing=d["scale_spacing"],
            entries=np.asarray(d["entries"], dtype=float),
            provenance=Provenance.from_dict(d["provenance"]),
        )


@dataclass(frozen=True)
class Eigenspectrum(JsonMixin):
    """Eigenvalues in non-increasing order, possibly concatenated across
    delay scales (one sorted block per scale)."""

    values: np.ndarray
    block_sizes: tuple[int, ...] = ()
    source: str = ""

    def __post_init__(self):
        values = _frozen_array(self.values, ndim=1)
        if values.size < 1:
            raise InvariantError("empty eigenspectrum")
        if not np.isfinite(values).all():
            raise InvariantError(f"[{self.source}] non-finite eigenvalue")
        blocks = tuple(int(b) for b in self.block_sizes) or (values.size,)
        if any(b < 1 for b in blocks) or sum(blocks) != values.size:
            raise InvariantError(
                f"block sizes {blocks} inconsistent with length {values.size}"
            )
        start = 0
        for size in blocks:
            block = values[start : start + size]
            if np.any(np.diff(block) > 0):
                raise InvariantError(
                    f"[{self.source}] block at {start} is not sorted non-increasing"
                )
            start += size
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "block_sizes", blocks)

    def __len__(self) -> int:
        return self.values.size

    def blocks(self) -> list[np.ndarray]:
        out, start = [], 0
        for size in self.block_sizes:
            out.append(self.values[start : start + size])
            start += size
        return out

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "block_sizes": list(self.block_sizes),
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Eigenspectrum":
        return cls(
            values=np.asarray(d["values"], dtype=float),
            block_sizes=tuple(d["block_sizes"]),
            source=d["source"],
        )


@dataclass(frozen=True)
class DifferenceSpectrum(JsonMixin):
    """Rank-wise difference of two equal-length eigenspectra."""

    values: np.ndarray
    minuend: str = ""
    subtrahend: str = ""
    block_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        values = _frozen_array(self.values, ndim=1)
        if values.size < 1:
            raise InvariantError("empty difference spectrum")
        if not np.isfinite(values).all():
            raise InvariantError(
                f"[{self.minuend} - {self.subtrahend}] non-finite difference"
            )
        blocks = tuple(int(b) for b in self.block_sizes) or (values.size,)
        if any(b < 1 for b in blocks) or sum(blocks) != values.size:
            raise InvariantError(
                f"block sizes {blocks} inconsistent with length {values.size}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "block_sizes", blocks)

    def __len__(self) -> int:
        return self.values.size

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "minuend": self.minuend,
            "subtrahend": self.subtrahend,
            "block_sizes": list(self.block_sizes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DifferenceSpectrum":
        return cls(
            values=np.asarray(d["values"], dtype=float),
            minuend=d["minuend"],
            subtrahend=d["subtrahend"],
            block_sizes=tuple(d["block_sizes"]),
        )


@dataclass(frozen=True)
class ScoreRecord(JsonMixin):
    """A coordination score at segment, session or subject level.

    ``trend`` is the label derived from the normalized score;
    ``trend_shape`` (subject level only) is the label derived from the
    early ranks of the difference spectrum.  The two can disagree, which
    is itself informative.
    """

    level: Level
    subject_id: str
    session_id: str | None
    segment_index: int | None
    wsed_raw: float
    wsed_normalized: float
    trend: Trend
    trend_shape: Trend | None = None
    bprs_total: int | None = None
    bprs_positive: int | None = None
    bprs_negative: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.wsed_raw) or not np.isfinite(self.wsed_normalized):
            raise InvariantError(f"[{self.subject_id}] non-finite score")
        if abs(self.wsed_normalized) > 1.0:
            raise InvariantError(
                f"[{self.subject_id}] normalized score {self.wsed_normalized} "
                "outside [-1, 1]"
            )
        if self.level is Level.SEGMENT and (
            self.session_id is None or self.segment_index is None
        ):
            raise InvariantError("segment-level record needs session and segment ids")
        if self.level is Level.SESSION and self.session_id is None:
            raise InvariantError("session-level record needs a session id")
        if self.level is not Level.SEGMENT and self.segment_index is not None:
            raise InvariantError(f"{self.level.value}-level record has a segment index")
        if self.trend_shape is Trend.AMBIGUOUS:
            raise InvariantError("shape trend is binary (complex or simple)")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["level"] = self.level.value
        d["trend"] = self.trend.value
        d["trend_shape"] = self.trend_shape.value if self.trend_shape else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreRecord":
        d = dict(d)
        d["level"] = Level(d["level"])
        d["trend"] = Trend(d["trend"])
        d["trend_shape"] = Trend(d["trend_shape"]) if d["trend_shape"] else None
        return cls(**d)
