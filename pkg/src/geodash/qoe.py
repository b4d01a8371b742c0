"""Session quality metrics: switch counts, rebuffer statistics and the eMOS
score used to compare algorithms.

The score combines the mean and spread of the chosen quality level with a
stall penalty built from rebuffer frequency and mean duration. All eight
coefficients live in QoeParams so an alternate model can be swapped in
without touching callers.
"""

import math
import statistics
from dataclasses import dataclass, field


@dataclass(frozen=True)
class QoeParams:
    c_mean: float = 5.67
    c_std: float = 6.72
    c_const: float = 0.17
    c_rebuf: float = 4.95
    rebuf_mix: float = 7.0 / 8.0
    freq_scale: float = 6.0
    dur_cap_s: float = 15.0
    clamp_low: float = 0.0
    clamp_high: float = 5.0

    def __post_init__(self):
        if self.clamp_low >= self.clamp_high:
            raise ValueError("clamp_low must be below clamp_high")


@dataclass
class SessionReport:
    """Per-session log plus the summary metrics derived from it."""

    algorithm: str
    segments: list
    rebuffer_events: list          # (start_s, duration_s) pairs
    ladder_size: int
    playback_s: float              # seconds of video actually played
    wall_s: float
    switches: int = 0
    rebuffer_count: int = 0
    rebuffer_total_s: float = 0.0
    mean_quality_index: float = 0.0
    std_quality_index: float = 0.0
    mean_kbps: float = 0.0
    emos: float = 0.0


def count_switches(segments) -> int:
    """Number of adjacent segment pairs whose representation differs."""
    if not segments:
        raise ValueError("cannot count switches over an empty segment log")
    return sum(1 for a, b in zip(segments, segments[1:]) if a.rep.id != b.rep.id)


def emos(report: SessionReport, params: QoeParams | None = None) -> float:
    """Quality score in [clamp_low, clamp_high].

    Uses the 1-based ladder index as the quality level so the score does not
    depend on the ladder's bitrate spacing. Session minutes include stall
    time. With no rebuffer events the stall penalty term is exactly zero.
    """
    p = params or QoeParams()
    m = report.ladder_size
    mu = report.mean_quality_index
    sigma = report.std_quality_index

    if report.rebuffer_count == 0:
        phi = 0.0
    else:
        minutes = (report.playback_s + report.rebuffer_total_s) / 60.0
        freq = report.rebuffer_count / minutes if minutes > 0 else math.inf
        mean_dur = report.rebuffer_total_s / report.rebuffer_count
        freq_term = max(math.log(freq) / p.freq_scale + 1.0, 0.0) if freq > 0 else 0.0
        if not math.isfinite(freq_term):
            freq_term = 1.0
        dur_term = min(mean_dur, p.dur_cap_s) / p.dur_cap_s
        phi = p.rebuf_mix * freq_term + (1.0 - p.rebuf_mix) * dur_term

    score = p.c_mean * mu / m - p.c_std * sigma / m + p.c_const - p.c_rebuf * phi
    return min(max(score, p.clamp_low), p.clamp_high)


def summarize(algorithm: str, segments, rebuffer_events, ladder_size: int,
              playback_s: float, wall_s: float,
              params: QoeParams | None = None) -> SessionReport:
    """Fold a completed segment log and rebuffer ledger into a SessionReport."""
    indices = [s.rep.id + 1 for s in segments]
    report = SessionReport(
        algorithm=algorithm,
        segments=list(segments),
        rebuffer_events=list(rebuffer_events),
        ladder_size=ladder_size,
        playback_s=playback_s,
        wall_s=wall_s,
        switches=count_switches(segments),
        rebuffer_count=len(rebuffer_events),
        rebuffer_total_s=sum(d for _, d in rebuffer_events),
        mean_quality_index=statistics.fmean(indices),
        std_quality_index=statistics.pstdev(indices),
        mean_kbps=statistics.fmean(s.rep.kbps for s in segments),
    )
    report.emos = emos(report, params)
    return report
