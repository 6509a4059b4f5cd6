"""Anti-aliased integer-factor decimation of trajectories to the common 5 Hz rate."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal

from .core import DataError, Recording, Trajectory, wrap_angle
from .ingest import HEADING_SPEED_FLOOR, estimate_heading_series

log = logging.getLogger(__name__)

FALLBACK_ORDER = 2
MIN_FILTER_SAMPLES = 9
# odd-extension length; long enough for the start-up transient of the full filter to decay
MAX_PADLEN = 300


@dataclass(frozen=True)
class FilterSpec:
    order: int = 7
    ripple_db: float = 0.05
    cutoff_norm: float = 0.8
    zero_phase: bool = True

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"filter order must be a positive integer, got {self.order}")
        if not 0 < self.cutoff_norm <= 1:
            raise ValueError(f"cutoff_norm must lie in (0, 1], got {self.cutoff_norm}")
        if not self.ripple_db > 0:
            raise ValueError(f"ripple_db must be positive, got {self.ripple_db}")


def _wn(spec: FilterSpec, source_rate: float, target_rate: float) -> float:
    if not target_rate < source_rate:
        raise ValueError(f"target rate {target_rate} Hz must be below source rate {source_rate} Hz")
    return spec.cutoff_norm * (target_rate / 2.0) / (source_rate / 2.0)


def design_chebyshev1(spec: FilterSpec, source_rate: float, target_rate: float):
    """Digital Chebyshev type I low-pass for decimating ``source_rate`` to ``target_rate``.

    The cutoff sits at ``spec.cutoff_norm`` times the target Nyquist frequency.
    Returns the transfer-function coefficients ``(b, a)``.
    """
    b, a = signal.cheby1(spec.order, spec.ripple_db, _wn(spec, source_rate, target_rate), btype="low")
    if np.max(np.abs(np.roots(a))) >= 1.0:
        raise ValueError(f"unstable filter for order {spec.order} at {source_rate}->{target_rate} Hz")
    return b, a


def _design_sos(order: int, spec: FilterSpec, source_rate: float, target_rate: float) -> np.ndarray:
    # second-order sections: same filter as design_chebyshev1, numerically safer to apply
    return signal.cheby1(order, spec.ripple_db, _wn(spec, source_rate, target_rate), btype="low", output="sos")


def decimation_factor(source_rate: float, target_rate: float, recording_id: str = "?") -> int:
    ratio = source_rate / target_rate
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9:
        raise DataError(
            f"recording {recording_id}: source rate {source_rate} Hz is not an integer multiple "
            f"of the target rate {target_rate} Hz"
        )
    return m


def _apply(x: np.ndarray, sos: np.ndarray, zero_phase: bool, padlen: int) -> np.ndarray:
    if zero_phase:
        return signal.sosfiltfilt(sos, x, padlen=padlen)
    return signal.sosfilt(sos, x)


def decimate_trajectory(
    traj: Trajectory,
    spec: FilterSpec = FilterSpec(),
    target_rate: float = 5.0,
    phase: str = "trajectory",
    recording_id: str = "?",
    speed_floor: float = HEADING_SPEED_FLOOR,
) -> Optional[Trajectory]:
    """Low-pass filter every kinematic channel, then keep every M-th sample.

    ``phase="trajectory"`` strides from the trajectory's first sample and
    always yields ``ceil(len / M)`` samples. ``phase="recording"`` keeps the
    samples whose source frame is a multiple of M, so every agent of a
    recording lands on the same output grid; it returns None when the track
    holds no such frame.

    Short tracks cannot carry the forward-backward padding of the full filter:
    below ``3 * (order + 1)`` samples an order-2 filter is used, below 9
    samples the track is strided without filtering. The fallback is appended to
    ``provenance``.
    """
    m = decimation_factor(traj.rate_hz, target_rate, recording_id)
    if m == 1:
        return traj
    n = len(traj)
    provenance = list(traj.provenance)
    if not spec.zero_phase:
        order, padlen = spec.order, 0
    elif n >= 3 * (spec.order + 1):
        order, padlen = spec.order, min(MAX_PADLEN, n - 1)
    elif n >= MIN_FILTER_SAMPLES:
        order = min(spec.order, FALLBACK_ORDER)
        padlen = n - 1
        provenance.append("order2_fallback")
    else:
        order = 0
        provenance.append("stride_fallback")

    if order:
        sos = _design_sos(order, spec, traj.rate_hz, target_rate)

        def filt(x):
            return _apply(np.asarray(x, dtype=float), sos, spec.zero_phase, padlen)
    else:
        def filt(x):
            return np.asarray(x, dtype=float)

    if phase == "trajectory":
        idx = np.arange(0, n, m)
    elif phase == "recording":
        idx = np.flatnonzero(traj.frame % m == 0)
        if len(idx) == 0:
            return None
    else:
        raise ValueError(f"unknown decimation phase {phase!r}")

    x, y, vx, vy = (filt(c) for c in (traj.x, traj.y, traj.vx, traj.vy))
    ax = filt(traj.ax) if traj.ax is not None else None
    ay = filt(traj.ay) if traj.ay is not None else None
    if traj.heading_derived:
        psi = estimate_heading_series(vx[idx], vy[idx], speed_floor)
    else:
        psi = wrap_angle(filt(np.unwrap(traj.psi))[idx])

    return traj.replace(
        frame=traj.frame[idx] // m,
        x=x[idx], y=y[idx], vx=vx[idx], vy=vy[idx], psi=np.atleast_1d(psi),
        ax=None if ax is None else ax[idx], ay=None if ay is None else ay[idx],
        lane_id=None if traj.lane_id is None else traj.lane_id[idx],
        rate_hz=float(target_rate),
        provenance=tuple(provenance),
    )


def resample_recording(
    rec: Recording,
    spec: FilterSpec = FilterSpec(),
    target_rate: float = 5.0,
    phase: str = "recording",
    speed_floor: float = HEADING_SPEED_FLOOR,
) -> Recording:
    """Decimate all trajectories of a recording onto one shared target-rate grid."""
    m = decimation_factor(rec.rate_hz, target_rate, rec.recording_id)
    if m == 1:
        return rec
    out, dropped = [], 0
    for t in rec.trajectories:
        d = decimate_trajectory(t, spec, target_rate, phase=phase, recording_id=rec.recording_id, speed_floor=speed_floor)
        if d is None:
            dropped += 1
        else:
            out.append(d)
    meta = dict(rec.meta)
    meta["resample"] = {
        "source_rate_hz": rec.rate_hz, "target_rate_hz": float(target_rate), "factor": m,
        "filter": {"order": spec.order, "ripple_db": spec.ripple_db, "cutoff_norm": spec.cutoff_norm,
                   "zero_phase": spec.zero_phase},
        "dropped_short_tracks": dropped,
    }
    if dropped:
        log.info("%s: %d track(s) shorter than one output sample dropped", rec.recording_id, dropped)
    return rec.replace(rate_hz=float(target_rate), frame_count=math.ceil(rec.frame_count / m), trajectories=out, meta=meta)
