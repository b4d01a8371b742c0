"""Deterministic playback simulation of a DASH client on the move.

Segments are fetched strictly one after the other. Download time is obtained
by integrating the ground-truth bandwidth field along the vehicle's path: on
fields that are piecewise-constant over route cells the advance is event-exact
(to the next cell boundary, stall instant or completion), while arbitrary
time/space-varying fields fall back to small fixed integration steps. The
playout buffer drains at 1 s/s while playing, grows by one segment duration
per completed download, and is kept inside (0, buffer_max] by pausing
downloads near the cap. The crowd estimate used for segment k+1 is fetched
when segment k finishes, with the position and speed of that moment.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import qoe
from .adaptation import (
    ESTIMATOR_CROWD,
    ESTIMATOR_CROWD_N,
    ESTIMATOR_LAST,
    ESTIMATOR_SESSION,
    PHASE_REBUFFERING,
    PHASE_STARTUP,
    PHASE_STEADY,
    AdaptationSession,
    DecisionContext,
)
from .estimators import (
    SOURCE_LAST,
    SOURCE_SESSION,
    BandwidthEstimate,
    GeoQueryInputs,
    geo_estimate,
    n_window_mean,
    session_average,
)


class ConfigError(ValueError):
    pass


class ConstantField:
    """Uniform bandwidth everywhere; downloads advance in a single step."""

    cell_width_m = math.inf

    def __init__(self, bps: float):
        if bps <= 0:
            raise ValueError("bandwidth must be positive")
        self._bps = bps

    def bandwidth_at(self, x_m: float, t_s: float = 0.0) -> float:
        return self._bps


class CallableField:
    """Wrap an arbitrary (chainage, time) -> bps function; integrated with
    small fixed steps since it exposes no cell structure."""

    def __init__(self, fn):
        self._fn = fn

    def bandwidth_at(self, x_m: float, t_s: float = 0.0) -> float:
        return self._fn(x_m, t_s)


class Mobility:
    """Vehicle motion along the route; speed is constant or a function of
    time, never negative."""

    def __init__(self, speed_mps=25.0, start_m: float = 0.0):
        self.start_m = start_m
        self.is_constant = not callable(speed_mps)
        if self.is_constant:
            if speed_mps < 0:
                raise ValueError("speed must be >= 0")
            self._const = float(speed_mps)
            self._fn = None
        else:
            self._fn = speed_mps

    def speed(self, t_s: float) -> float:
        if self._fn is None:
            return self._const
        return max(0.0, self._fn(t_s))


@dataclass
class SimConfig:
    buffer_max_s: float = 30.0
    radius_m: float = 250.0
    startup_segments: int = 1
    step_s: float = 0.01
    max_look_ahead_m: float = 1000.0
    session_s: float | None = None
    n_predict: int = 5
    bucket: object = None
    qoe_params: object = None

    def validate(self, segment_duration_s: float) -> None:
        if self.buffer_max_s <= 0:
            raise ConfigError("buffer_max_s must be positive")
        if self.step_s <= 0:
            raise ConfigError("step_s must be positive")
        if self.startup_segments < 1:
            raise ConfigError("startup_segments must be >= 1")
        if self.startup_segments * segment_duration_s > self.buffer_max_s:
            raise ConfigError("startup threshold exceeds the buffer cap")
        if self.session_s is not None and self.session_s < segment_duration_s:
            raise ConfigError("session shorter than one segment")


@dataclass
class SegmentRecord:
    index: int
    rep: object
    dl_start_s: float
    dl_end_s: float
    throughput_bps: float
    buffer_after_s: float
    estimate: BandwidthEstimate | None
    reason: str
    playback_s: float   # playback clock at download completion
    bits: float


def measure_throughput(record: SegmentRecord, step_s: float = 0.01) -> float:
    """Measured segment throughput: size over download duration, with the
    duration floored at one integration step to guard the division."""
    return record.bits / max(record.dl_end_s - record.dl_start_s, step_s)


def _make_estimate(algorithm: AdaptationSession, pos_m: float, speed_mps: float,
                   f_bps: float | None, history, crowd_map, cfg: SimConfig,
                   top_segment_bits: float, segment_duration_s: float):
    kind = algorithm.estimator
    if kind == ESTIMATOR_CROWD:
        q = GeoQueryInputs(pos_m, speed_mps, top_segment_bits, f_bps, cfg.radius_m)
        return geo_estimate(q, crowd_map, cfg.bucket, cfg.max_look_ahead_m)
    if kind == ESTIMATOR_CROWD_N:
        q = GeoQueryInputs(pos_m, speed_mps, top_segment_bits, f_bps, cfg.radius_m)
        return n_window_mean(q, crowd_map, getattr(algorithm, "n", cfg.n_predict),
                             segment_duration_s, cfg.bucket, cfg.max_look_ahead_m)
    if kind == ESTIMATOR_LAST:
        return BandwidthEstimate(f_bps, SOURCE_LAST) if f_bps else None
    if kind == ESTIMATOR_SESSION:
        avg = session_average(history)
        return BandwidthEstimate(avg, SOURCE_SESSION) if avg else None
    raise ConfigError(f"unknown estimator kind {kind!r}")


def run_session(manifest, algorithm: AdaptationSession, net_field, crowd_map=None,
                mobility: Mobility | None = None,
                config: SimConfig | None = None) -> qoe.SessionReport:
    """Simulate one playback session and return its summarised report.

    The session covers manifest.segment_count segments, truncated to
    config.session_s of content when given. Pass a fresh algorithm instance
    per session; its internal state is not reset here.
    """
    cfg = config or SimConfig()
    dur = manifest.segment_duration_s
    cfg.validate(dur)
    mob = mobility or Mobility()

    n_segments = manifest.segment_count
    if cfg.session_s is not None:
        n_segments = max(1, min(n_segments, int(cfg.session_s // dur)))
    top_bits = manifest.top.bits_per_segment(dur)
    threshold_s = cfg.startup_segments * dur
    cell_w = getattr(net_field, "cell_width_m", None)
    bw_at = net_field.bandwidth_at
    speed_at = mob.speed

    t = 0.0
    pos = mob.start_m
    buffer_s = 0.0
    played = 0.0
    playing = False
    started = False
    stall_start = None
    prev_buffer = 0.0
    last_rep = None
    f_bps = None
    history = []   # (data_bytes, download_seconds)
    records = []
    events = []

    estimate = _make_estimate(algorithm, pos, speed_at(0.0), f_bps, history,
                              crowd_map, cfg, top_bits, dur)

    for k in range(n_segments):
        if stall_start is not None:
            phase = PHASE_REBUFFERING
        elif not started:
            phase = PHASE_STARTUP
        else:
            phase = PHASE_STEADY
        ctx = DecisionContext(
            buffer_s=buffer_s,
            buffer_max_s=cfg.buffer_max_s,
            segment_index=k,
            ladder=manifest.ladder,
            segment_duration_s=dur,
            buffer_prev_s=prev_buffer,
            last_rep=last_rep,
            estimate=estimate,
            session_phase=phase,
        )
        decision = algorithm.decide(ctx)
        rep = decision.rep
        prev_buffer = buffer_s

        # Keep room for the incoming segment: pause (not cancel) the download
        # until the buffer has drained below the cap. Playback keeps running.
        overflow = buffer_s + dur - cfg.buffer_max_s
        if overflow > 1e-12:
            remaining = overflow
            while remaining > 1e-12:
                dt = min(remaining, cfg.step_s) if mob._fn is not None else remaining
                pos += speed_at(t) * dt
                t += dt
                buffer_s -= dt
                played += dt
                remaining -= dt

        bits = rep.bits_per_segment(dur)
        bits_left = bits
        dl_start = t
        while bits_left > 1e-6:
            v = speed_at(t)
            bw = bw_at(pos, t)
            if bw <= 0:
                raise ValueError(f"field bandwidth must stay positive, got {bw} at {pos} m")
            dt = bits_left / bw
            if cell_w is not None:
                if v > 0.0:
                    cross = cell_w - pos % cell_w
                    if cross <= 1e-9 * cell_w:
                        cross = cell_w
                    dtc = cross / v
                    if dtc < dt:
                        dt = dtc
            elif dt > cfg.step_s:
                dt = cfg.step_s
            if playing and buffer_s <= dt:
                # split exactly at the instant the buffer empties
                dt_empty = buffer_s
                bits_left -= bw * dt_empty
                pos += v * dt_empty
                t += dt_empty
                played += dt_empty
                buffer_s = 0.0
                if bits_left > 1e-6:
                    playing = False
                    stall_start = t
                continue
            bits_left -= bw * dt
            pos += v * dt
            t += dt
            if playing:
                buffer_s -= dt
                played += dt
        dl_end = t

        buffer_s += dur
        if not playing and buffer_s >= threshold_s - 1e-12:
            if stall_start is not None:
                events.append((stall_start, t - stall_start))
                stall_start = None
            playing = True
            started = True

        record = SegmentRecord(
            index=k, rep=rep, dl_start_s=dl_start, dl_end_s=dl_end,
            throughput_bps=0.0, buffer_after_s=buffer_s, estimate=estimate,
            reason=decision.reason, playback_s=played, bits=bits,
        )
        record.throughput_bps = measure_throughput(record, cfg.step_s)
        records.append(record)
        f_bps = record.throughput_bps
        history.append((bits / 8.0, dl_end - dl_start))
        last_rep = rep

        # event-boundary invariants: buffer bounds and conservation of video
        assert -1e-6 <= buffer_s <= cfg.buffer_max_s + 1e-6
        assert abs(played + buffer_s - (k + 1) * dur) <= max(cfg.step_s, 1e-6)

        # batch prefetch: the estimate for the next segment is computed now,
        # with the position and speed at this download's completion
        estimate = _make_estimate(algorithm, pos, speed_at(t), f_bps, history,
                                  crowd_map, cfg, top_bits, dur)

    # session end: close any open stall and play out the remaining buffer
    if stall_start is not None:
        events.append((stall_start, t - stall_start))
    wall = t + buffer_s
    played += buffer_s

    return qoe.summarize(
        algorithm=algorithm.name,
        segments=records,
        rebuffer_events=events,
        ladder_size=len(manifest.ladder),
        playback_s=played,
        wall_s=wall,
        params=cfg.qoe_params,
    )


SEGMENT_LOG_COLUMNS = [
    "index", "rep_id", "kbps", "dl_start_s", "dl_end_s", "throughput_bps",
    "buffer_after_s", "estimate_bps", "estimate_source", "reason",
]


def write_segment_log(report: qoe.SessionReport, path: str | Path) -> None:
    """Per-segment CSV log in the documented column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SEGMENT_LOG_COLUMNS)
        for r in report.segments:
            est_bps = f"{r.estimate.value_bps:.3f}" if r.estimate else ""
            est_src = r.estimate.source if r.estimate else "none"
            writer.writerow([
                r.index, r.rep.id, f"{r.rep.kbps:.4f}",
                f"{r.dl_start_s:.6f}", f"{r.dl_end_s:.6f}",
                f"{r.throughput_bps:.3f}", f"{r.buffer_after_s:.6f}",
                est_bps, est_src, r.reason,
            ])
