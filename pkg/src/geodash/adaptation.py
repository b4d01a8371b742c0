"""Adaptation logic: the rules that pick the next segment's representation.

Seven algorithms share a pluggable interface. The buffer-scaled crowd rule
(gpal) and the crowd variants of the two past-estimation baselines differ
from their parents only in where the bandwidth estimate comes from, so the
rule bodies here are estimate-source agnostic; AdaptationSession subclasses
declare which estimator the player should feed them.
"""

from dataclasses import dataclass, field, replace

from .estimators import DemaState
from .media import Representation, highest_rung_below

PHASE_STARTUP = "startup"
PHASE_STEADY = "steady"
PHASE_REBUFFERING = "rebuffering"

ESTIMATOR_CROWD = "crowd"
ESTIMATOR_CROWD_N = "crowd-n"
ESTIMATOR_LAST = "last-segment"
ESTIMATOR_SESSION = "session-average"


@dataclass
class DecisionContext:
    """Everything a rule may look at when choosing the next representation."""

    buffer_s: float
    buffer_max_s: float
    segment_index: int
    ladder: tuple
    segment_duration_s: float = 2.0
    buffer_prev_s: float = 0.0
    last_rep: Representation | None = None
    estimate: object = None           # BandwidthEstimate or None
    smoothed: tuple | None = None     # (s_b, s_bw) when a DEMA is maintained
    session_phase: str = PHASE_STEADY


@dataclass(frozen=True)
class Decision:
    rep: Representation
    reason: str  # startup | switch-up | switch-down | hold | floor-fallback


@dataclass(frozen=True)
class GpalParams:
    floor: float = 0.1
    downgrade_threshold: float = 0.2
    startup_fullness: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.floor <= self.downgrade_threshold < 1.0:
            raise ValueError("need 0 < floor <= downgrade_threshold < 1")


@dataclass(frozen=True)
class GeoMalParams:
    critical_segments: int = 2
    low_segments: int = 4
    almost_full_margin_segments: int = 2
    safety_factor: float = 0.5
    alpha: float = 0.2
    beta: float = 0.08

    def __post_init__(self):
        if not self.critical_segments < self.low_segments:
            raise ValueError("critical must be below low")


def _movement_reason(ctx: DecisionContext, rep: Representation) -> str:
    if ctx.last_rep is None:
        return "startup"
    if rep.id > ctx.last_rep.id:
        return "switch-up"
    if rep.id < ctx.last_rep.id:
        return "switch-down"
    return "hold"


def gpal_fullness(ctx: DecisionContext, p: GpalParams) -> float:
    """Buffer fullness ratio used to scale the bandwidth estimate: the raw
    ratio floored at p.floor, except a fixed mid value for the very first
    segment."""
    if ctx.segment_index == 0:
        return p.startup_fullness
    return max(ctx.buffer_s / ctx.buffer_max_s, p.floor)


def gpal_decide(ctx: DecisionContext, p: GpalParams | None = None) -> Decision:
    """Buffer-scaled crowd rule: budget = estimate * fullness, pick the
    highest rung strictly below it, and step one rung down when the buffer is
    at or below the protection threshold."""
    p = p or GpalParams()
    if ctx.estimate is None:
        return Decision(ctx.ladder[0], "startup")
    b_p = gpal_fullness(ctx, p)
    budget_kbps = ctx.estimate.value_bps * b_p / 1000.0
    rep = highest_rung_below(ctx.ladder, budget_kbps)
    fell_back = rep is None
    if rep is None:
        rep = ctx.ladder[0]
    if b_p <= p.downgrade_threshold and rep.id > 0:
        rep = ctx.ladder[rep.id - 1]
    if ctx.segment_index == 0:
        return Decision(rep, "startup")
    if fell_back:
        return Decision(rep, "floor-fallback")
    return Decision(rep, _movement_reason(ctx, rep))


def geo_mal_decide(ctx: DecisionContext, p: GeoMalParams | None = None) -> Decision:
    """Smoothed up/down rule over buffer thresholds.

    Needs ctx.smoothed = (s_b, s_bw). The buffer trend is judged on the
    smoothed series: since s_b(t) lies between the raw level and s_b(t-1),
    the series is falling exactly when the raw level sits below s_b(t).
    Steady-state moves are one rung at a time; startup and rebuffer recovery
    jump straight to the highest rung under estimate * safety_factor.
    """
    p = p or GeoMalParams()
    if ctx.smoothed is None:
        raise ValueError("geo_mal_decide needs smoothed (s_b, s_bw) estimates")
    s_b, s_bw = ctx.smoothed
    bw_kbps = s_bw / 1000.0
    ladder = ctx.ladder

    if ctx.session_phase != PHASE_STEADY or ctx.last_rep is None:
        rep = highest_rung_below(ladder, bw_kbps * p.safety_factor) or ladder[0]
        return Decision(rep, "startup")

    cur = ctx.last_rep
    dur = ctx.segment_duration_s
    critical_s = p.critical_segments * dur
    low_s = p.low_segments * dur
    almost_full_s = ctx.buffer_max_s - p.almost_full_margin_segments * dur
    b = ctx.buffer_s
    depleting = b < s_b
    filling = b > s_b

    if depleting and (b <= critical_s or (b <= low_s and bw_kbps < cur.kbps)):
        if cur.id > 0:
            return Decision(ladder[cur.id - 1], "switch-down")
        return Decision(cur, "hold")
    if cur.id + 1 < len(ladder):
        nxt = ladder[cur.id + 1]
        if nxt.kbps < bw_kbps and (b >= almost_full_s or (b > low_s and filling)):
            return Decision(nxt, "switch-up")
    return Decision(cur, "hold")


def mal_decide(ctx: DecisionContext, p: GeoMalParams | None = None) -> Decision:
    """Same rule body as geo_mal_decide; only the estimate source differs."""
    return geo_mal_decide(ctx, p)


def _budget_decide(ctx: DecisionContext, budget_kbps: float) -> Decision:
    rep = highest_rung_below(ctx.ladder, budget_kbps)
    if rep is None:
        return Decision(ctx.ladder[0], "floor-fallback")
    return Decision(rep, _movement_reason(ctx, rep))


def maxbw_decide(ctx: DecisionContext) -> Decision:
    """Pick the highest rung under the whole-session average bitrate;
    switching distance is unconstrained."""
    if ctx.estimate is None:
        return Decision(ctx.ladder[0], "startup")
    return _budget_decide(ctx, ctx.estimate.value_bps / 1000.0)


def geo_maxbw_decide(ctx: DecisionContext) -> Decision:
    """maxbw rule with the crowd estimate in place of the session average."""
    if ctx.estimate is None:
        return Decision(ctx.ladder[0], "startup")
    return _budget_decide(ctx, ctx.estimate.value_bps / 1000.0)


def one_predict_decide(ctx: DecisionContext) -> Decision:
    """Scale the next-step prediction by buffer fullness mapped into
    [0.5, 1], then pick the highest rung under the result."""
    if ctx.estimate is None:
        return Decision(ctx.ladder[0], "startup")
    fullness = ctx.buffer_s / ctx.buffer_max_s
    budget_kbps = ctx.estimate.value_bps * (0.5 + 0.5 * fullness) / 1000.0
    return _budget_decide(ctx, budget_kbps)


def n_predict_decide(ctx: DecisionContext, n: int) -> Decision:
    """Same rule as one_predict_decide over an estimate that is already the
    mean of the next n window predictions."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return one_predict_decide(ctx)


# --- per-session algorithm objects -------------------------------------------

class AdaptationSession:
    """Base for per-session algorithm state.

    `estimator` tells the player which bandwidth estimate to feed into the
    DecisionContext before each decide() call.
    """

    name = "base"
    estimator = ESTIMATOR_LAST

    def decide(self, ctx: DecisionContext) -> Decision:
        raise NotImplementedError


class Gpal(AdaptationSession):
    name = "gpal"
    estimator = ESTIMATOR_CROWD

    def __init__(self, params: GpalParams | None = None):
        self.params = params or GpalParams()

    def decide(self, ctx: DecisionContext) -> Decision:
        return gpal_decide(ctx, self.params)


class GeoMal(AdaptationSession):
    name = "geo-mal"
    estimator = ESTIMATOR_CROWD

    def __init__(self, params: GeoMalParams | None = None):
        self.params = params or GeoMalParams()
        self.dema = DemaState(self.params.alpha, self.params.beta)

    def decide(self, ctx: DecisionContext) -> Decision:
        s_b = self.dema.update_buffer(ctx.buffer_s)
        if ctx.estimate is not None:
            s_bw = self.dema.update_bw(ctx.estimate.value_bps)
        elif self.dema.s_bw is not None:
            s_bw = self.dema.s_bw
        else:
            # nothing measured and no crowd coverage yet: conservative start
            return Decision(ctx.ladder[0], "startup")
        return geo_mal_decide(replace(ctx, smoothed=(s_b, s_bw)), self.params)


class Mal(GeoMal):
    name = "mal"
    estimator = ESTIMATOR_LAST


class MaxBw(AdaptationSession):
    name = "maxbw"
    estimator = ESTIMATOR_SESSION

    def decide(self, ctx: DecisionContext) -> Decision:
        return maxbw_decide(ctx)


class GeoMaxBw(AdaptationSession):
    name = "geo-maxbw"
    estimator = ESTIMATOR_CROWD

    def decide(self, ctx: DecisionContext) -> Decision:
        return geo_maxbw_decide(ctx)


class OnePredict(AdaptationSession):
    name = "1-predict"
    estimator = ESTIMATOR_CROWD

    def decide(self, ctx: DecisionContext) -> Decision:
        return one_predict_decide(ctx)


class NPredict(AdaptationSession):
    name = "n-predict"
    estimator = ESTIMATOR_CROWD_N

    def __init__(self, n: int = 5):
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        self.n = n

    def decide(self, ctx: DecisionContext) -> Decision:
        return n_predict_decide(ctx, self.n)


ALGORITHM_NAMES = ["gpal", "geo-mal", "mal", "maxbw", "geo-maxbw", "1-predict", "n-predict"]


def make_algorithm(name: str, n_predict: int = 5,
                   gpal_params: GpalParams | None = None,
                   mal_params: GeoMalParams | None = None) -> AdaptationSession:
    """Build a fresh per-session algorithm instance from its CLI name."""
    if name == "gpal":
        return Gpal(gpal_params)
    if name == "geo-mal":
        return GeoMal(mal_params)
    if name == "mal":
        return Mal(mal_params)
    if name == "maxbw":
        return MaxBw()
    if name == "geo-maxbw":
        return GeoMaxBw()
    if name == "1-predict":
        return OnePredict()
    if name == "n-predict":
        return NPredict(n_predict)
    raise ValueError(f"unknown algorithm {name!r}; expected one of {ALGORITHM_NAMES}")
