"""Coverage-distance AUC, time decomposition, and cross-method aggregation."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .errors import ConfigError, ContractError, DataIntegrityError

# Simulated time is kept in integer nanoseconds so the clock identity is exact.
TICKS_PER_SECOND = 1_000_000_000


def to_ticks(seconds: float) -> int:
    if seconds < 0:
        raise ValueError("negative duration")
    return round(seconds * TICKS_PER_SECOND)


@dataclass
class EpisodeClock:
    elapsed: int = 0
    exec: int = 0
    pan: int = 0
    compute: int = 0

    def charge_exec(self, seconds: float) -> None:
        t = to_ticks(seconds)
        self.exec += t
        self.elapsed += t

    def charge_pan(self, seconds: float) -> None:
        t = to_ticks(seconds)
        self.pan += t
        self.elapsed += t

    def charge_compute(self, seconds: float) -> None:
        t = to_ticks(seconds)
        self.compute += t
        self.elapsed += t

    def identity_holds(self) -> bool:
        return self.elapsed == self.exec + self.pan + self.compute

    @classmethod
    def from_seconds(cls, elapsed: float, exec: float, pan: float,
                     compute: float | None = None) -> "EpisodeClock":
        e, x, p = to_ticks(elapsed), to_ticks(exec), to_ticks(pan)
        c = to_ticks(compute) if compute is not None else e - x - p
        return cls(e, x, p, c)

    def seconds(self) -> dict[str, float]:
        return {k: v / TICKS_PER_SECOND for k, v in asdict(self).items()}


@dataclass(frozen=True)
class TimeDecomposition:
    movement: int
    compute: int
    pan_removed: int

    @property
    def movement_s(self) -> float:
        return self.movement / TICKS_PER_SECOND

    @property
    def compute_s(self) -> float:
        return self.compute / TICKS_PER_SECOND

    @property
    def pan_removed_s(self) -> float:
        return self.pan_removed / TICKS_PER_SECOND


def decompose_time(clock: EpisodeClock) -> TimeDecomposition:
    """Movement = exec + pan; compute = elapsed - movement; plus elapsed with pan removed."""
    movement = clock.exec + clock.pan
    compute = clock.elapsed - movement
    if compute < 0 or min(clock.exec, clock.pan, clock.elapsed) < 0:
        raise DataIntegrityError(f"negative time residual in {clock}")
    return TimeDecomposition(movement, compute, clock.elapsed - clock.pan)


@dataclass
class CoverageCurve:
    samples: list[tuple[float, float]] = field(default_factory=list)

    def add(self, distance: float, cov: float) -> None:
        """Append a sample; a repeat at the last distance keeps the larger coverage."""
        if self.samples and distance <= self.samples[-1][0]:
            d, c = self.samples[-1]
            self.samples[-1] = (d, max(c, cov))
        else:
            self.samples.append((float(distance), float(cov)))

    @property
    def terminal_distance(self) -> float:
        return self.samples[-1][0] if self.samples else 0.0

    @property
    def final_coverage(self) -> float:
        return self.samples[-1][1] if self.samples else 0.0

    def value_at(self, d: float) -> float:
        """Linear interpolation, held flat past the terminal distance."""
        s = self.samples
        if not s:
            return 0.0
        if d >= s[-1][0]:
            return s[-1][1]
        lo, hi = 0, len(s) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if s[mid][0] <= d:
                lo = mid
            else:
                hi = mid
        (d0, c0), (d1, c1) = s[lo], s[hi]
        return c0 + (c1 - c0) * (d - d0) / (d1 - d0)


def common_horizon(curves: Iterable[CoverageCurve]) -> float:
    terms = [c.terminal_distance for c in curves]
    if not terms:
        raise ContractError("need at least one curve for a common horizon")
    return max(terms)


def auc(curve: CoverageCurve, d_max: float) -> float:
    """Trapezoidal area under coverage vs distance on [0, d_max], final coverage held flat."""
    if d_max < curve.terminal_distance:
        raise ContractError(f"d_max {d_max} is shorter than the run ({curve.terminal_distance})")
    s = curve.samples
    if not s:
        return 0.0
    area = 0.0
    for (d0, c0), (d1, c1) in zip(s, s[1:]):
        area += 0.5 * (c0 + c1) * (d1 - d0)
    return area + s[-1][1] * (d_max - s[-1][0])


@dataclass
class EpisodeMetrics:
    map_id: str
    method_id: str
    run_id: int
    distance: float
    coverage: float
    clock: EpisodeClock
    pan_count: int = 0
    cycles: int = 0
    aborted: bool = False
    auc: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clock"] = asdict(self.clock)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeMetrics":
        d = dict(d)
        d["clock"] = EpisodeClock(**d["clock"])
        return cls(**d)


STAT_FIELDS = ("auc", "distance", "compute", "elapsed", "pan_removed", "pan_count")


def _values(m: EpisodeMetrics) -> dict[str, float]:
    t = decompose_time(m.clock)
    return {
        "auc": m.auc if m.auc is not None else math.nan,
        "distance": m.distance,
        "compute": t.compute_s,
        "elapsed": m.clock.elapsed / TICKS_PER_SECOND,
        "pan_removed": t.pan_removed_s,
        "pan_count": float(m.pan_count),
    }


def pct_delta(value: float, baseline: float) -> float:
    if baseline == 0:
        return math.nan
    return 100.0 * (value - baseline) / baseline


def format_pct(p: float) -> str:
    return "n/a" if math.isnan(p) else f"{p:+.1f}%"


@dataclass(frozen=True)
class ReportRow:
    map_id: str
    method_id: str
    n: int
    mean: dict[str, float]
    std: dict[str, float]
    delta_pct: dict[str, float]


def aggregate(metrics: Sequence[EpisodeMetrics], baseline_method: str) -> list[ReportRow]:
    """Per (map, method) means and population standard deviations, plus percentage
    deltas of the means against ``baseline_method`` on the same map."""
    groups: dict[tuple[str, str], list[dict[str, float]]] = defaultdict(list)
    for m in metrics:
        groups[(m.map_id, m.method_id)].append(_values(m))
    if baseline_method not in {k[1] for k in groups}:
        raise ConfigError(f"baseline method {baseline_method!r} has no results")
    means = {}
    stds = {}
    for key, vals in groups.items():
        means[key] = {f: statistics.fmean(v[f] for v in vals) for f in STAT_FIELDS}
        stds[key] = {f: statistics.pstdev([v[f] for v in vals]) for f in STAT_FIELDS}
    rows = []
    for key in sorted(groups):
        map_id, method = key
        base = means.get((map_id, baseline_method))
        delta = {f: (pct_delta(means[key][f], base[f]) if base else math.nan) for f in STAT_FIELDS}
        rows.append(ReportRow(map_id, method, len(groups[key]), means[key], stds[key], delta))
    return rows


def report_csv(rows: Sequence[ReportRow]) -> str:
    cols = ["map_id", "method_id", "n"]
    for f in STAT_FIELDS:
        cols += [f"{f}_mean", f"{f}_std", f"{f}_delta_pct"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        line = [r.map_id, r.method_id, r.n]
        for f in STAT_FIELDS:
            line += [_num(r.mean[f]), _num(r.std[f]), format_pct(r.delta_pct[f])]
        w.writerow(line)
    return buf.getvalue()


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def report_json(rows: Sequence[ReportRow], baseline_method: str) -> str:
    def clean(d):
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}

    return json.dumps({
        "baseline": baseline_method,
        "rows": [{"map_id": r.map_id, "method_id": r.method_id, "n": r.n, "mean": clean(r.mean),
                  "std": clean(r.std), "delta_pct": clean(r.delta_pct)} for r in rows],
    }, indent=2, sort_keys=True) + "\n"


TABLE_METRICS = (("auc", "Coverage-Distance AUC"), ("distance", "Distance (m)"),
                 ("compute", "Computation (s)"), ("elapsed", "Time (s)"))


def format_table(rows: Sequence[ReportRow], method: str, baseline_method: str) -> str:
    """Per-map comparison of one method against the baseline, one block per metric.

    The final column averages the per-map percentage deltas.
    """
    by = {(r.map_id, r.method_id): r for r in rows}
    maps = sorted({r.map_id for r in rows if (r.map_id, method) in by and (r.map_id, baseline_method) in by})
    out = ["Metric | Quantity | " + " | ".join(f"Map {m}" for m in maps) + " | Average"]
    for key, title in TABLE_METRICS:
        base = [by[(m, baseline_method)].mean[key] for m in maps]
        meth = [by[(m, method)].mean[key] for m in maps]
        deltas = [by[(m, method)].delta_pct[key] for m in maps]
        avg = statistics.fmean(deltas) if deltas else math.nan
        out.append(f"{title} | {baseline_method} | " + " | ".join(f"{v:.1f}" for v in base) + " |")
        out.append(f" | {method} | " + " | ".join(f"{v:.1f}" for v in meth) + " |")
        out.append(f" | gain/loss w.r.t. {baseline_method} | "
                   + " | ".join(format_pct(d) for d in deltas) + f" | {format_pct(avg)}")
    return "\n".join(out) + "\n"
