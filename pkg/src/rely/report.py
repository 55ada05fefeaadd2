"""Histogram plot data, extreme-score selection and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from typing import IO, Iterable, Sequence

from .metrics import RelyResult

# Values within this many bin widths below an edge are snapped onto it, so
# decimal-looking inputs (0.03 with width 0.01) land where a reader expects.
_SNAP = 1e-9


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HistogramSpec:
    bin_width: float
    clip_min: float | None = None
    clip_max: float | None = None
    origin: float = 0.0

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ConfigError(f"bin_width must be positive, got {self.bin_width}")
        if self.clip_min is not None and self.clip_max is not None and not self.clip_min < self.clip_max:
            raise ConfigError("clip_min must be below clip_max")

    def index(self, x: float) -> int:
        q = (x - self.origin) / self.bin_width
        k = round(q)
        if abs(q - k) <= _SNAP * max(1.0, abs(q)):
            return int(k)
        return math.floor(q)

    def start(self, k: int) -> float:
        return round(self.origin + k * self.bin_width, 12) + 0.0


@dataclass
class Histogram:
    spec: HistogramSpec
    bins: list[tuple[float, int]]
    underflow: int = 0
    overflow: int = 0

    @property
    def total(self) -> int:
        return sum(c for _, c in self.bins) + self.underflow + self.overflow

    def __iter__(self):
        return iter(self.bins)

    def write_csv(self, stream: IO[str]) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["bin_start", "bin_end", "count"])
        for start, count in self.bins:
            end = round(start + self.spec.bin_width, 12) + 0.0
            w.writerow([repr(start), repr(end), count])

    def summary(self) -> dict:
        return {
            "bin_width": self.spec.bin_width,
            "clip_min": self.spec.clip_min,
            "clip_max": self.spec.clip_max,
            "origin": self.spec.origin,
            "binned": sum(c for _, c in self.bins),
            "underflow": self.underflow,
            "overflow": self.overflow,
            "total": self.total,
        }


def histogram(values: Iterable[float], spec: HistogramSpec) -> Histogram:
    """Dense half-open histogram: bin ``k`` covers
    ``[origin + k*w, origin + (k+1)*w)``.

    Values below ``clip_min`` count as underflow, values at or above
    ``clip_max`` as overflow. Empty bins between the first and last are
    included; with clip bounds the dense range spans the whole clip window.
    """
    counts: dict[int, int] = {}
    under = over = 0
    for x in values:
        if spec.clip_min is not None and x < spec.clip_min:
            under += 1
        elif spec.clip_max is not None and x >= spec.clip_max:
            over += 1
        else:
            k = spec.index(x)
            counts[k] = counts.get(k, 0) + 1
    lo = spec.index(spec.clip_min) if spec.clip_min is not None else min(counts, default=None)
    if spec.clip_max is not None:
        hi = spec.index(spec.clip_max)
        if spec.start(hi) >= spec.clip_max:
            hi -= 1
    else:
        hi = max(counts, default=None)
    if lo is None or hi is None:
        return Histogram(spec, [], under, over)
    if counts:
        lo, hi = min(lo, min(counts)), max(hi, max(counts))
    bins = [(spec.start(k), counts.get(k, 0)) for k in range(lo, hi + 1)]
    return Histogram(spec, bins, under, over)


@dataclass
class Histogram2D:
    x: HistogramSpec
    y: HistogramSpec
    cells: list[tuple[float, float, int]]
    outside: int = 0

    @property
    def total(self) -> int:
        return sum(c for _, _, c in self.cells) + self.outside

    def write_csv(self, stream: IO[str]) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["x_start", "y_start", "count"])
        for xs, ys, c in self.cells:
            w.writerow([repr(xs), repr(ys), c])


def histogram2d(points: Iterable[tuple[float, float]], x: HistogramSpec, y: HistogramSpec) -> Histogram2D:
    """Sparse two-dimensional variant; points outside either clip window are
    counted in ``outside``. Only non-empty cells are listed, sorted."""

    def inside(v, s):
        return (s.clip_min is None or v >= s.clip_min) and (s.clip_max is None or v < s.clip_max)

    counts: dict[tuple[int, int], int] = {}
    outside = 0
    for px, py in points:
        if not (inside(px, x) and inside(py, y)):
            outside += 1
            continue
        key = (x.index(px), y.index(py))
        counts[key] = counts.get(key, 0) + 1
    cells = [(x.start(i), y.start(j), c) for (i, j), c in sorted(counts.items())]
    return Histogram2D(x, y, cells, outside)


def extremes(
    results: Sequence[RelyResult],
    k: int,
    direction: str = "lowest",
    threshold: float | None = None,
) -> list[RelyResult]:
    """The ``k`` most extreme scored results.

    ``threshold`` keeps only scores strictly beyond it (below for
    ``lowest``, above for ``highest``). Ties go to the smaller subject_id.
    """
    if k <= 0:
        raise ConfigError("k must be positive")
    if direction not in ("lowest", "highest"):
        raise ConfigError(f"direction must be 'lowest' or 'highest', got {direction!r}")
    scored = [r for r in results if r.score is not None]
    if threshold is not None:
        if direction == "lowest":
            scored = [r for r in scored if r.score < threshold]
        else:
            scored = [r for r in scored if r.score > threshold]
    if direction == "lowest":
        scored.sort(key=lambda r: (r.score, r.subject_id))
    else:
        scored.sort(key=lambda r: (-r.score, r.subject_id))
    return scored[:k]


def scale(results: Iterable[RelyResult], C: float) -> list[RelyResult]:
    return [r if r.score is None else replace(r, score=C * r.score) for r in results]


# -- CSV plumbing ---------------------------------------------------------

RESULT_COLUMNS = [
    "subject_id",
    "level",
    "journal_id",
    "score",
    "sc_ratio",
    "n_sc",
    "n_nsc",
    "n_skipped",
    "n_pubs_included",
    "reason_code",
    "sim_all",
    "sim_sc",
    "sim_nsc",
]
JOURNAL_STATS_COLUMNS = ["journal_id", "pub_count", "avg_refs", "sc_count", "resolved_refs", "sc_ratio"]


def fmt_float(x: float | None) -> str:
    """Fixed 12-decimal rendering; ``None`` becomes an empty field."""
    if x is None:
        return ""
    s = f"{x:.12f}"
    return s[1:] if s.startswith("-") and not s.strip("-0.") else s


def _fmt_int(x: int | None) -> str:
    return "" if x is None else str(x)


def write_results(results: Iterable[RelyResult], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        w.writerow(
            [
                r.subject_id,
                r.level,
                r.journal_id or "",
                fmt_float(r.score),
                fmt_float(r.sc_ratio),
                r.n_sc,
                r.n_nsc,
                _fmt_int(r.n_skipped),
                _fmt_int(r.n_pubs_included),
                r.reason,
                fmt_float(r.sim_all),
                fmt_float(r.sim_sc),
                fmt_float(r.sim_nsc),
            ]
        )


def read_results(stream: IO[str]) -> list[RelyResult]:
    def f(s):
        return float(s) if s else None

    def i(s):
        return int(s) if s else None

    reader = csv.DictReader(stream)
    if reader.fieldnames != RESULT_COLUMNS:
        raise ValueError(f"unexpected columns {reader.fieldnames}")
    return [
        RelyResult(
            subject_id=row["subject_id"],
            level=row["level"],
            score=f(row["score"]),
            sc_ratio=float(row["sc_ratio"]),
            n_sc=int(row["n_sc"]),
            n_nsc=int(row["n_nsc"]),
            n_skipped=i(row["n_skipped"]),
            n_pubs_included=i(row["n_pubs_included"]),
            reason=row["reason_code"],
            journal_id=row["journal_id"] or None,
            sim_all=f(row["sim_all"]),
            sim_sc=f(row["sim_sc"]),
            sim_nsc=f(row["sim_nsc"]),
        )
        for row in reader
    ]


def write_journal_stats(stats, stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(JOURNAL_STATS_COLUMNS)
    for s in stats:
        w.writerow(
            [
                s.journal_id,
                s.pub_count,
                fmt_float(s.avg_refs_per_pub),
                s.sc_count,
                s.resolved_ref_count,
                fmt_float(s.sc_ratio),
            ]
        )


def read_journal_stats(stream: IO[str]) -> list[dict]:
    reader = csv.DictReader(stream)
    if reader.fieldnames != JOURNAL_STATS_COLUMNS:
        raise ValueError(f"unexpected columns {reader.fieldnames}")
    return [
        {
            "journal_id": r["journal_id"],
            "pub_count": int(r["pub_count"]),
            "avg_refs": float(r["avg_refs"]),
            "sc_count": int(r["sc_count"]),
            "resolved_refs": int(r["resolved_refs"]),
            "sc_ratio": float(r["sc_ratio"]),
        }
        for r in reader
    ]


# -- manifest -------------------------------------------------------------


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    provider: str
    inputs: dict[str, str]
    counts: dict[str, int]
    excluded: dict[str, int] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    @property
    def attributed(self) -> int:
        """Records attributed to a terminal state; equals ``counts['records']``."""
        keys = ("rejected", "not_analyzed", "ineligible_refs", "ineligible_journal", "scored")
        return sum(self.counts.get(k, 0) for k in keys) + sum(self.excluded.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
