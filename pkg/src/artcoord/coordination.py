"""Channel-delay correlation matrices.

A segment of an M-channel time series is expanded into a delayed
ensemble: each channel contributes D copies of itself shifted by
0, d, 2d, ..., (D-1)*d frames, all restricted to the common window the
shifts leave valid.  The coordination matrix is the Pearson correlation
matrix of that ensemble, which captures auto- and cross-correlation
structure between every channel pair at every relative delay up to
(D-1)*d frames.

The correlations are computed over the ONE common window (standardize
rows, then Gram product / (T'-1)) rather than per-pair windows.  Per-pair
windows can produce indefinite matrices; the common-window form is
positive semidefinite by construction, which keeps the eigenspectrum
interpretable and the trace identity exact.

Delay k means "channel value k*d frames later".  The opposite convention
merely permutes rows and columns and leaves the eigenspectrum unchanged.
"""

from __future__ import annotations

import numpy as np

from .model import ArtcoordError, CoordinationMatrix, DelayConfig, Provenance

__all__ = [
    "WindowTooShortError",
    "ZeroVarianceError",
    "delayed_ensemble",
    "build_coordination_matrix",
]


class WindowTooShortError(ArtcoordError):
    """Segment leaves fewer valid frames than the configured minimum."""


class ZeroVarianceError(ArtcoordError):
    """A channel is constant within the segment; Pearson is undefined."""


def _as_samples(segment) -> np.ndarray:
    samples = getattr(segment, "samples", segment)
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise ArtcoordError(f"expected channels x frames samples, got shape {arr.shape}")
    return arr


def delayed_ensemble(
    segment,
    delays_per_channel: int,
    spacing: int,
    min_valid_window: int = 2,
) -> np.ndarray:
    """Stack delayed copies of every channel over their common window.

    Parameters
    ----------
    segment : Segment or array of shape (n_channels, n_frames)
    delays_per_channel : number of copies D per channel
    spacing : frames between consecutive delays
    min_valid_window : smallest acceptable common window T'

    Returns
    -------
    Array of shape (n_channels * D, T') with T' = n_frames - (D-1)*spacing.
    Row i*D + k holds channel i shifted k*spacing frames later; rows are
    channel-major, delay-minor.
    """
    samples = _as_samples(segment)
    n_channels, n_frames = samples.shape
    if delays_per_channel < 1 or spacing < 1:
        raise ArtcoordError("delays_per_channel and spacing must be >= 1")
    t_valid = n_frames - (delays_per_channel - 1) * spacing
    if t_valid < max(min_valid_window, 1):
        raise WindowTooShortError(
            f"need {(delays_per_channel - 1) * spacing + min_valid_window} frames "
            f"for {delays_per_channel} delays at spacing {spacing}, have {n_frames}"
        )
    offsets = np.arange(delays_per_channel) * spacing
    # (n_channels, D, T') gather, then flatten to channel-major rows.
    ensemble = samples[:, offsets[:, np.newaxis] + np.arange(t_valid)[np.newaxis, :]]
    return ensemble.reshape(n_channels * delays_per_channel, t_valid)


def build_coordination_matrix(
    segment,
    config: DelayConfig,
    spacing: int,
    provenance: Provenance | None = None,
) -> CoordinationMatrix:
    """Pearson correlation matrix of the delayed ensemble of a segment.

    Entry (a, b) is the sample correlation of ensemble rows a and b over
    the common valid window.  Raises :class:`ZeroVarianceError` naming
    the channel and delay index if any ensemble row is constant.
    """
    samples = _as_samples(segment)
    names = getattr(segment, "channel_names", None)
    ensemble = delayed_ensemble(
        samples, config.delays_per_channel, spacing, config.min_valid_window
    )
    t_valid = ensemble.shape[1]
    centered = ensemble - ensemble.mean(axis=1, keepdims=True)
    sum_sq = np.einsum("ij,ij->i", centered, centered)
    flat = np.flatnonzero(sum_sq == 0.0)
    if flat.size:
        channel, delay = divmod(int(flat[0]), config.delays_per_channel)
        name = names[channel] if names else f"channel {channel}"
        raise ZeroVarianceError(
            f"{name} is constant within the segment (delay index {delay})"
        )
    z = centered / np.sqrt(sum_sq / (t_valid - 1))[:, np.newaxis]
    corr = z @ z.T
    corr /= t_valid - 1
    corr = (corr + corr.T) / 2.0  # matmul round-off is the only asymmetry
    if provenance is None:
        track = getattr(segment, "track", None)
        provenance = Provenance(
            subject_id=getattr(track, "subject_id", ""),
            session_id=getattr(track, "session_id", ""),
            segment_index=getattr(segment, "segment_index", None),
        )
    return CoordinationMatrix(
        dim=samples.shape[0] * config.delays_per_channel,
        scale_spacing=spacing,
        entries=corr,
        provenance=provenance,
    )
