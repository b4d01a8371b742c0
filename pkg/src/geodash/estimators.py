"""Bandwidth and buffer estimators.

Covers the per-session smoothing state (double exponential moving average
over buffer and bandwidth), the whole-session average throughput, and the
client side of the geo-predictive crowd query: turn speed and segment size
into a look-ahead distance, ask the crowd map, and fall back to the last
measured segment throughput when the map has no coverage.
"""

from dataclasses import dataclass

from .crowd import CrowdMap, TimeBucket

SOURCE_CROWD = "crowd"
SOURCE_LAST = "last-segment"
SOURCE_SESSION = "session-average"
SOURCE_SMOOTHED = "smoothed"

DEFAULT_MAX_LOOK_AHEAD_M = 1000.0


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class BandwidthEstimate:
    value_bps: float
    source: str


class DemaState:
    """Double-EMA state: alpha smooths the buffer level, beta the bandwidth.

    Neither series has a value until its first update, so no default zero
    ever leaks into the recurrences.
    """

    def __init__(self, alpha: float = 0.2, beta: float = 0.08):
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        if not 0.0 < beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {beta}")
        self.alpha = alpha
        self.beta = beta
        self.s_b: float | None = None
        self.s_bw: float | None = None

    def update_buffer(self, buffer_s: float) -> float:
        if self.s_b is None:
            self.s_b = buffer_s
        else:
            self.s_b = self.alpha * buffer_s + (1.0 - self.alpha) * self.s_b
        return self.s_b

    def update_bw(self, bw_bps: float) -> float:
        if self.s_bw is None:
            self.s_bw = bw_bps
        else:
            self.s_bw = self.beta * bw_bps + (1.0 - self.beta) * self.s_bw
        return self.s_bw


@dataclass(frozen=True)
class GeoQueryInputs:
    """Inputs of one crowd query.

    top_segment_bits is the highest-quality average segment size in bits;
    last_throughput_bps is the most recent measured segment throughput, or
    None before the first download completes.
    """

    position_m: float
    speed_mps: float
    top_segment_bits: float
    last_throughput_bps: float | None
    radius_m: float


def look_ahead_distance(q: GeoQueryInputs, max_look_ahead_m: float = DEFAULT_MAX_LOOK_AHEAD_M) -> float:
    """Distance covered while downloading one top-quality segment at the last
    measured throughput, capped so a collapsed throughput cannot produce an
    absurd query window."""
    if q.last_throughput_bps is None or q.last_throughput_bps <= 0:
        raise EstimationError("look-ahead needs a positive last-segment throughput")
    seg = q.speed_mps * q.top_segment_bits / q.last_throughput_bps
    return min(max(seg, 0.0), max_look_ahead_m)


def geo_estimate(q: GeoQueryInputs, crowd_map: CrowdMap | None,
                 bucket: TimeBucket | None = None,
                 max_look_ahead_m: float = DEFAULT_MAX_LOOK_AHEAD_M) -> BandwidthEstimate | None:
    """Crowd bandwidth estimate for the window ahead of the client.

    Falls back to the last-segment throughput when the map has no coverage in
    the window. Before any download has completed (no throughput yet) the
    look-ahead degenerates to the radius around the current position; if the
    map is also silent there, returns None and the caller applies its own
    startup rule.
    """
    if q.last_throughput_bps is not None and q.last_throughput_bps > 0:
        seg = look_ahead_distance(q, max_look_ahead_m)
    else:
        seg = 0.0
    value = crowd_map.predict(q.position_m, seg, q.radius_m, bucket) if crowd_map else None
    if value is not None:
        return BandwidthEstimate(value, SOURCE_CROWD)
    if q.last_throughput_bps is not None and q.last_throughput_bps > 0:
        return BandwidthEstimate(q.last_throughput_bps, SOURCE_LAST)
    return None


def n_window_mean(q: GeoQueryInputs, crowd_map: CrowdMap | None, n: int,
                  segment_duration_s: float, bucket: TimeBucket | None = None,
                  max_look_ahead_m: float = DEFAULT_MAX_LOOK_AHEAD_M) -> BandwidthEstimate | None:
    """Unweighted mean of the crowd estimates for the next n look-ahead
    windows, each advanced by one segment's worth of travel. Windows without
    coverage (e.g. past the end of the route) are simply left out of the
    mean."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if q.last_throughput_bps is not None and q.last_throughput_bps > 0:
        seg = look_ahead_distance(q, max_look_ahead_m)
    else:
        seg = 0.0
    values = []
    if crowd_map is not None:
        step = q.speed_mps * segment_duration_s
        for i in range(n):
            v = crowd_map.predict(q.position_m + i * step, seg, q.radius_m, bucket)
            if v is not None:
                values.append(v)
    if values:
        return BandwidthEstimate(sum(values) / len(values), SOURCE_CROWD)
    if q.last_throughput_bps is not None and q.last_throughput_bps > 0:
        return BandwidthEstimate(q.last_throughput_bps, SOURCE_LAST)
    return None


def session_average(history) -> float | None:
    """Average measured bitrate of the whole session: total bits downloaded
    over total download seconds (not a mean of per-segment rates).

    history holds (data_bytes, download_seconds) pairs; returns None for an
    empty history so the caller can apply its startup rule.
    """
    total_bytes = 0.0
    total_s = 0.0
    for data_bytes, seconds in history:
        total_bytes += data_bytes
        total_s += seconds
    if total_s <= 0:
        return None
    return 8.0 * total_bytes / total_s
