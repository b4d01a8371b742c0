"""Geo-indexed crowd bandwidth store.

Ingests geo-tagged throughput samples, aggregates them into route bins with
the data-weighted mean E_x = sum(D_s * A_s) / sum(D_s), answers look-ahead
window queries, and generates statistics-matched synthetic route datasets.
All geometry is 1-D route chainage in meters; lat/lon only appears at
ingestion, where points are projected onto a route polyline.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

EARTH_RADIUS_M = 6371000.0


class GenerationError(ValueError):
    """Raised when a synthetic route profile cannot be realised."""


class TimeBucket(Enum):
    """Four fixed time-of-day buckets partitioning the 24 h clock."""

    H0309 = "0309"
    H0915 = "0915"
    H1521 = "1521"
    H2103 = "2103"

    @staticmethod
    def of(timestamp_s: float) -> "TimeBucket":
        hour = (timestamp_s / 3600.0) % 24.0
        if 3.0 <= hour < 9.0:
            return TimeBucket.H0309
        if 9.0 <= hour < 15.0:
            return TimeBucket.H0915
        if 15.0 <= hour < 21.0:
            return TimeBucket.H1521
        return TimeBucket.H2103


@dataclass(frozen=True)
class CrowdSample:
    """One geo-tagged throughput measurement, already projected to chainage."""

    position_m: float
    timestamp_s: float
    speed_mps: float
    data_bytes: float
    throughput_bps: float


@dataclass
class BucketAggregate:
    e_x_bps: float | None = None
    sample_count: int = 0


@dataclass
class RouteBin:
    start_m: float
    width_m: float
    e_x_bps: float | None
    sample_count: int
    buckets: dict[str, BucketAggregate] = field(default_factory=dict)


class CrowdMap:
    """Immutable binned aggregate of crowd samples over one route.

    Bins are uniform-width, contiguous and sorted; a bin without any data
    bytes carries no estimate (None) so callers can tell "no coverage" from a
    measured dead zone.
    """

    def __init__(self, bins: list[RouteBin], route_length_m: float, bin_width_m: float):
        self.bins = bins
        self.route_length_m = route_length_m
        self.bin_width_m = bin_width_m

    def predict(self, g_m: float, look_ahead_m: float, radius_m: float,
                bucket: TimeBucket | None = None) -> float | None:
        """Sample-count-weighted mean of E_x over bins intersecting the
        window [g - radius, g + look_ahead + radius]; None if nothing in the
        window carries an estimate."""
        if not self.bins or radius_m <= 0 or look_ahead_m < 0:
            return None
        w = self.bin_width_m
        lo = g_m - radius_m
        hi = g_m + look_ahead_m + radius_m
        if hi < 0 or lo > self.bins[-1].start_m + w:
            return None
        i0 = max(0, int(lo // w))
        i1 = min(len(self.bins) - 1, int(hi // w))
        num = 0.0
        den = 0
        for b in self.bins[i0:i1 + 1]:
            if bucket is None:
                e, n = b.e_x_bps, b.sample_count
            else:
                agg = b.buckets.get(bucket.value)
                e, n = (agg.e_x_bps, agg.sample_count) if agg else (None, 0)
            if e is None or n == 0:
                continue
            num += e * n
            den += n
        return num / den if den else None


def aggregate(samples, bin_width_m: float = 12.0, route_length_m: float | None = None) -> CrowdMap:
    """Bin samples by chainage and compute each bin's data-weighted mean.

    Bins whose total data volume is zero report no estimate. Per-bucket
    sub-aggregates are computed the same way on each bucket's subset.
    """
    if bin_width_m <= 0:
        raise ValueError("bin_width_m must be positive")
    if route_length_m is None:
        route_length_m = max((s.position_m for s in samples), default=bin_width_m)
    n = max(1, math.ceil(route_length_m / bin_width_m))

    d_sum = [0.0] * n
    da_sum = [0.0] * n
    count = [0] * n
    bucket_d = [None] * n
    bucket_da = [None] * n
    bucket_n = [None] * n

    for s in samples:
        i = min(int(s.position_m // bin_width_m), n - 1)
        d_sum[i] += s.data_bytes
        da_sum[i] += s.data_bytes * s.throughput_bps
        count[i] += 1
        key = TimeBucket.of(s.timestamp_s).value
        if bucket_d[i] is None:
            bucket_d[i] = {}
            bucket_da[i] = {}
            bucket_n[i] = {}
        bucket_d[i][key] = bucket_d[i].get(key, 0.0) + s.data_bytes
        bucket_da[i][key] = bucket_da[i].get(key, 0.0) + s.data_bytes * s.throughput_bps
        bucket_n[i][key] = bucket_n[i].get(key, 0) + 1

    bins = []
    for i in range(n):
        buckets = {}
        if bucket_d[i]:
            for key, d in bucket_d[i].items():
                buckets[key] = BucketAggregate(
                    e_x_bps=bucket_da[i][key] / d if d > 0 else None,
                    sample_count=bucket_n[i][key],
                )
        bins.append(RouteBin(
            start_m=i * bin_width_m,
            width_m=bin_width_m,
            e_x_bps=da_sum[i] / d_sum[i] if d_sum[i] > 0 else None,
            sample_count=count[i],
            buckets=buckets,
        ))
    return CrowdMap(bins, route_length_m, bin_width_m)


def save_map(crowd_map: CrowdMap, path: str | Path) -> None:
    """Write the bin snapshot JSON used for fixture pinning."""
    payload = {
        "route_length_m": crowd_map.route_length_m,
        "bin_width_m": crowd_map.bin_width_m,
        "bins": [
            {
                "start_m": b.start_m,
                "width_m": b.width_m,
                "e_x_bps": b.e_x_bps,
                "samples": b.sample_count,
                "buckets": {
                    k: {"e_x_bps": a.e_x_bps, "samples": a.sample_count}
                    for k, a in sorted(b.buckets.items())
                },
            }
            for b in crowd_map.bins
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_map(path: str | Path) -> CrowdMap:
    raw = json.loads(Path(path).read_text())
    bins = [
        RouteBin(
            start_m=float(b["start_m"]),
            width_m=float(b["width_m"]),
            e_x_bps=b["e_x_bps"],
            sample_count=int(b["samples"]),
            buckets={
                k: BucketAggregate(e_x_bps=a["e_x_bps"], sample_count=int(a["samples"]))
                for k, a in b.get("buckets", {}).items()
            },
        )
        for b in raw["bins"]
    ]
    return CrowdMap(bins, float(raw["route_length_m"]), float(raw["bin_width_m"]))


# --- ingestion ---------------------------------------------------------------

class RoutePolyline:
    """Route geometry for projecting lat/lon fixes to chainage.

    Uses a local equirectangular projection anchored at the first vertex,
    which is plenty for highway-corridor extents.
    """

    def __init__(self, points):
        if len(points) < 2:
            raise ValueError("polyline needs at least two points")
        lat0, lon0 = points[0]
        kx = EARTH_RADIUS_M * math.cos(math.radians(lat0)) * math.pi / 180.0
        ky = EARTH_RADIUS_M * math.pi / 180.0
        self._xy = [((lon - lon0) * kx, (lat - lat0) * ky) for lat, lon in points]
        self._kx, self._ky, self._lat0, self._lon0 = kx, ky, lat0, lon0
        self._cum = [0.0]
        for (x0, y0), (x1, y1) in zip(self._xy, self._xy[1:]):
            self._cum.append(self._cum[-1] + math.hypot(x1 - x0, y1 - y0))

    @property
    def length_m(self) -> float:
        return self._cum[-1]

    def project(self, lat: float, lon: float) -> tuple[float, float]:
        """Nearest-point projection: returns (chainage_m, lateral_distance_m)."""
        px = (lon - self._lon0) * self._kx
        py = (lat - self._lat0) * self._ky
        best_chain = 0.0
        best_dist = math.inf
        for i, ((x0, y0), (x1, y1)) in enumerate(zip(self._xy, self._xy[1:])):
            dx, dy = x1 - x0, y1 - y0
            seg_len2 = dx * dx + dy * dy
            if seg_len2 == 0:
                t = 0.0
            else:
                t = max(0.0, min(1.0, ((px - x0) * dx + (py - y0) * dy) / seg_len2))
            cx, cy = x0 + t * dx, y0 + t * dy
            dist = math.hypot(px - cx, py - cy)
            if dist < best_dist:
                best_dist = dist
                best_chain = self._cum[i] + t * math.sqrt(seg_len2)
        return best_chain, best_dist


@dataclass
class IngestResult:
    samples: list
    dropped_offroute: int = 0
    skipped_malformed: int = 0


_GEO_COLUMNS = {"timestamp_s", "lat", "lon", "speed_mps", "bytes", "throughput_bps"}
_CHAINAGE_COLUMNS = {"timestamp_s", "chainage_m", "speed_mps", "bytes", "throughput_bps"}


def ingest_csv(path: str | Path, route=None, lateral_cutoff_m: float = 250.0) -> IngestResult:
    """Read a sample CSV in either the lat/lon or pre-projected schema.

    route: a RoutePolyline (or list of (lat, lon) pairs) for the lat/lon
    schema, a route length in meters for the pre-projected schema, or None to
    infer the length from the data. Rows farther than lateral_cutoff_m from
    the route (or outside [0, length] for pre-projected data) are dropped and
    counted; unparseable or negative-valued rows are skipped and counted.
    """
    result = IngestResult(samples=[])
    polyline = None
    length = None
    if isinstance(route, RoutePolyline):
        polyline = route
    elif isinstance(route, (int, float)):
        length = float(route)
    elif route is not None:
        polyline = RoutePolyline(route)

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return result
        cols = set(reader.fieldnames)
        if _GEO_COLUMNS <= cols:
            geo = True
            if polyline is None:
                raise ValueError("lat/lon sample CSV requires a route polyline")
        elif _CHAINAGE_COLUMNS <= cols:
            geo = False
        else:
            raise ValueError(f"unrecognised sample CSV header: {reader.fieldnames}")

        for row in reader:
            try:
                ts = float(row["timestamp_s"])
                speed = float(row["speed_mps"])
                data_bytes = float(row["bytes"])
                thpt = float(row["throughput_bps"])
                if geo:
                    lat, lon = float(row["lat"]), float(row["lon"])
                else:
                    chain = float(row["chainage_m"])
            except (TypeError, ValueError, KeyError):
                result.skipped_malformed += 1
                continue
            if data_bytes < 0 or thpt < 0 or speed < 0:
                result.skipped_malformed += 1
                continue
            if geo:
                chain, lateral = polyline.project(lat, lon)
                if lateral > lateral_cutoff_m:
                    result.dropped_offroute += 1
                    continue
            else:
                if chain < 0 or (length is not None and chain > length):
                    result.dropped_offroute += 1
                    continue
            result.samples.append(CrowdSample(chain, ts, speed, data_bytes, thpt))
    return result


def write_samples_csv(samples, path: str | Path) -> None:
    """Write samples in the pre-projected CSV schema."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_s", "chainage_m", "speed_mps", "bytes", "throughput_bps"])
        for s in samples:
            writer.writerow([
                f"{s.timestamp_s:.3f}",
                f"{s.position_m:.3f}",
                f"{s.speed_mps:.3f}",
                f"{s.data_bytes:.1f}",
                f"{s.throughput_bps:.3f}",
            ])


# --- synthetic routes --------------------------------------------------------

@dataclass(frozen=True)
class RouteProfile:
    """Target statistics for a synthetic route."""

    name: str
    median_bps: float
    mean_bps: float
    std_bps: float
    length_m: float
    bin_width_m: float = 12.0
    corr_m: float = 600.0


PROFILES = {
    "i110": RouteProfile("i110", median_bps=0.86e6, mean_bps=1.585e6, std_bps=2.0e6,
                         length_m=30000.0),
    "i405": RouteProfile("i405", median_bps=1.97e6, mean_bps=2.63e6, std_bps=2.15e6,
                         length_m=17000.0),
}


class SyntheticField:
    """Piecewise-constant ground-truth bandwidth over uniform route cells."""

    def __init__(self, cell_width_m: float, values_bps, route_length_m: float):
        self.cell_width_m = cell_width_m
        self.route_length_m = route_length_m
        self._values = [float(v) for v in values_bps]
        self._n = len(self._values)

    @property
    def values_bps(self) -> list[float]:
        return list(self._values)

    def bandwidth_at(self, x_m: float, t_s: float = 0.0) -> float:
        i = int(x_m // self.cell_width_m)
        if i < 0:
            i = 0
        elif i >= self._n:
            i = self._n - 1
        return self._values[i]


@dataclass
class SynthResult:
    field: SyntheticField
    samples: list
    crowd_map: CrowdMap


def _calibrated_values(profile: RouteProfile, rng: np.random.Generator) -> np.ndarray:
    """Mean-reverting log-space walk along chainage, post-scaled so the
    realised cell values hit the profile's median exactly and mean almost
    exactly."""
    n = max(1, math.ceil(profile.length_m / profile.bin_width_m))
    med, mean = profile.median_bps, profile.mean_bps
    if med <= 0 or mean <= 0:
        raise GenerationError("median and mean targets must be positive")
    ratio = mean / med
    if ratio < 1.0 - 1e-9:
        raise GenerationError("mean below median is not representable by this generator")
    if profile.std_bps == 0 and abs(ratio - 1.0) > 1e-9:
        raise GenerationError("zero STD requires mean == median")

    eps = rng.standard_normal(n)
    if profile.std_bps == 0 or abs(ratio - 1.0) <= 1e-9:
        return np.full(n, med)

    a = math.exp(-profile.bin_width_m / profile.corr_m)
    b = math.sqrt(1.0 - a * a)
    z = np.empty(n)
    z[0] = eps[0]
    for i in range(1, n):
        z[i] = a * z[i - 1] + b * eps[i]
    dev = z - np.median(z)

    def spread_ratio(s: float) -> float:
        return float(np.mean(np.exp(s * dev)))

    hi = 1.0
    while spread_ratio(hi) < ratio:
        hi *= 2.0
        if hi > 64.0:
            raise GenerationError("profile mean/median ratio is unattainably large")
    lo = 0.0
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if spread_ratio(mid) < ratio:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    return med * np.exp(s * dev)


def synthesize(profile: RouteProfile, seed: int, noise: float = 0.1,
               samples_per_bin: float = 24.0, floor_bps: float | None = None) -> SynthResult:
    """Generate a ground-truth bandwidth field plus a crowd dataset sampled
    from it.

    Deterministic for a given seed. noise is the relative std of the
    multiplicative error applied to each sample's throughput; 0 yields a
    perfect-knowledge dataset. samples_per_bin sets the Poisson mean of the
    per-bin sample count (at least one sample per bin so every bin reports).
    """
    field_rng = np.random.default_rng([int(seed), 0])
    values = _calibrated_values(profile, field_rng)
    if floor_bps is not None:
        values = np.maximum(values, floor_bps)
    synth_field = SyntheticField(profile.bin_width_m, values, profile.length_m)

    rng = np.random.default_rng([int(seed), 1])
    n = len(values)
    counts = np.maximum(rng.poisson(lam=samples_per_bin, size=n), 1)
    total = int(counts.sum())
    bin_idx = np.repeat(np.arange(n), counts)
    xs = np.minimum((bin_idx + rng.random(total)) * profile.bin_width_m, profile.length_m)
    ts = rng.random(total) * 7 * 86400.0
    speeds = np.clip(rng.normal(25.0, 5.0, total), 0.5, None)
    data = rng.lognormal(math.log(5e4), 1.0, total)
    if noise > 0:
        mult = np.clip(1.0 + noise * rng.standard_normal(total), 0.05, None)
        thpt = values[bin_idx] * mult
    else:
        thpt = values[bin_idx]

    samples = [
        CrowdSample(float(x), float(t), float(v), float(d), float(a))
        for x, t, v, d, a in zip(xs, ts, speeds, data, thpt)
    ]
    crowd_map = aggregate(samples, profile.bin_width_m, profile.length_m)
    return SynthResult(field=synth_field, samples=samples, crowd_map=crowd_map)


def field_from_map(crowd_map: CrowdMap) -> SyntheticField:
    """Turn a measured E_x profile into a playable ground-truth field.

    Bins without estimates inherit the nearest measured neighbour so the
    field stays positive everywhere.
    """
    values = [b.e_x_bps for b in crowd_map.bins]
    if all(v is None for v in values):
        raise ValueError("crowd map carries no estimates anywhere")
    last = None
    for i, v in enumerate(values):
        if v is not None:
            last = v
        elif last is not None:
            values[i] = last
    last = None
    for i in range(len(values) - 1, -1, -1):
        if values[i] is not None:
            last = values[i]
        else:
            values[i] = last
    return SyntheticField(crowd_map.bin_width_m, values, crowd_map.route_length_m)
