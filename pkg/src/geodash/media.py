"""Bitrate ladder and manifest handling for the simulated DASH stream."""

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path


class ManifestError(ValueError):
    """Raised when a manifest file is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class Representation:
    """One encoding rung of the ladder; id 0 is the lowest bitrate."""

    id: int
    kbps: float
    ssim: float
    psnr_db: float

    @property
    def bps(self) -> float:
        return self.kbps * 1000.0

    def bits_per_segment(self, segment_duration_s: float) -> float:
        # Segment sizes are derived from the average bitrate; there are no
        # per-segment size traces.
        return self.kbps * 1000.0 * segment_duration_s


@dataclass(frozen=True)
class Manifest:
    ladder: tuple[Representation, ...]
    segment_duration_s: float
    segment_count: int

    @property
    def lowest(self) -> Representation:
        return self.ladder[0]

    @property
    def top(self) -> Representation:
        return self.ladder[-1]


def _validate_ladder(reps: list[Representation]) -> tuple[Representation, ...]:
    if not reps:
        raise ManifestError("ladder is empty")
    for r in reps:
        if r.kbps <= 0:
            raise ManifestError(f"non-positive bitrate {r.kbps} kb/s")
        if not 0.0 < r.ssim <= 1.0:
            raise ManifestError(f"ssim {r.ssim} outside (0, 1]")
    ordered = sorted(reps, key=lambda r: r.kbps)
    for a, b in zip(ordered, ordered[1:]):
        if a.kbps == b.kbps:
            raise ManifestError(f"duplicate bitrate {a.kbps} kb/s")
    # ids are ordinal by ascending bitrate regardless of what the file said
    return tuple(
        Representation(id=i, kbps=r.kbps, ssim=r.ssim, psnr_db=r.psnr_db)
        for i, r in enumerate(ordered)
    )


def load_manifest(path: str | Path) -> Manifest:
    """Load and validate a manifest JSON file.

    The ladder is re-sorted ascending by bitrate if needed; rung ids are
    normalised to the sorted order.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(
            f"malformed manifest {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc

    try:
        duration = float(raw["segment_duration_s"])
        count = int(raw.get("segment_count", 1))
        rungs = [
            Representation(
                id=int(r.get("id", i)),
                kbps=float(r["kbps"]),
                ssim=float(r["ssim"]),
                psnr_db=float(r["psnr_db"]),
            )
            for i, r in enumerate(raw["ladder"])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"manifest {path} has a bad field: {exc}") from exc

    if duration <= 0:
        raise ManifestError(f"segment_duration_s must be positive, got {duration}")
    if count < 1:
        raise ManifestError(f"segment_count must be >= 1, got {count}")
    return Manifest(ladder=_validate_ladder(rungs), segment_duration_s=duration, segment_count=count)


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    payload = {
        "segment_duration_s": manifest.segment_duration_s,
        "segment_count": manifest.segment_count,
        "ladder": [
            {"id": r.id, "kbps": r.kbps, "ssim": r.ssim, "psnr_db": r.psnr_db}
            for r in manifest.ladder
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def bundled_manifest_path() -> Path:
    return Path(resources.files("geodash").joinpath("data/bbb.json"))


def load_bundled_manifest() -> Manifest:
    """The Big Buck Bunny ladder shipped with the package."""
    return load_manifest(bundled_manifest_path())


def highest_rung_below(ladder, budget_kbps: float):
    """Highest-bitrate rung strictly below the budget, or None.

    The inequality is strict: a budget equal to the lowest rung returns None.
    """
    best = None
    for rung in ladder:
        if rung.kbps < budget_kbps and (best is None or rung.kbps > best.kbps):
            best = rung
    return best
