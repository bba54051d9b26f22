"""Benchmark sweeps: every (world, start, method) episode, canonical results, reports.

Sweep config files are plain ``key = value`` lines; ``#`` starts a comment.
Recognised keys:

``worlds``
    Comma-separated world files (glob patterns allowed, expanded sorted).
``starts_per_world``, ``seed``, ``jobs``, ``output``, ``baseline``
    Sweep shape.  ``baseline`` names the reference method label for the report.
``methods``
    Comma-separated ``POLICY@RADIUS`` items, e.g. ``NF@inf, NFP@3.5``.
    ``inf`` or ``global`` mean an unbounded radius.

Any other key overrides the matching episode setting (see ``CONFIG_KEYS``).
"""

from __future__ import annotations

import glob
import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping

from .decision import Policy, endpoint_from_env
from .errors import ConfigError
from .metrics import CoverageCurve, EpisodeMetrics, aggregate, auc, common_horizon, report_csv, report_json
from .orchestrator import EpisodeConfig, run_episode
from .worldsim import GroundTruthWorld, Pose, SensorConfig, load_world
from .worldgen import sample_starts

SENSOR_KEYS = {"fov": "fov", "max_range": "max_range", "n_rays": "n_rays",
               "vertical_fov": "vertical_fov", "n_vertical": "n_vertical"}
CONFIG_KEYS = tuple(f.name for f in fields(EpisodeConfig) if f.name != "sensor") + tuple(SENSOR_KEYS)


def parse_radius(text: str | float) -> float:
    if isinstance(text, (int, float)):
        r = float(text)
    else:
        t = text.strip().lower()
        r = math.inf if t in ("inf", "global", "unbounded") else float(t)
    if not r > 0:
        raise ConfigError(f"r_v must be positive or unbounded, got {text!r}")
    return r


def radius_label(r_v: float) -> str:
    return "global" if math.isinf(r_v) else f"{r_v:g}"


def method_label(policy: Policy, r_v: float) -> str:
    return f"OPAL-{policy.value}_{radius_label(r_v)}"


def _coerce(name: str, raw, template):
    if isinstance(raw, str):
        raw = raw.strip()
    if name == "policy":
        return raw if isinstance(raw, Policy) else Policy.parse(raw)
    if name == "r_v":
        return parse_radius(raw)
    if isinstance(template, bool):
        if isinstance(raw, bool):
            return raw
        t = str(raw).lower()
        if t in ("1", "true", "yes", "on"):
            return True
        if t in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        return type(template)(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc


def apply_overrides(config: EpisodeConfig, overrides: Mapping[str, object]) -> EpisodeConfig:
    """Return ``config`` with named fields replaced; sensor fields are accepted flat."""
    top, sens = {}, {}
    for key, raw in overrides.items():
        if raw is None:
            continue
        if key in SENSOR_KEYS:
            sens[key] = _coerce(key, raw, getattr(config.sensor, key))
        elif key in CONFIG_KEYS:
            top[key] = _coerce(key, raw, getattr(config, key))
        else:
            raise ConfigError(f"unknown episode setting {key!r}")
    if sens:
        top["sensor"] = replace(config.sensor, **sens)
    return replace(config, **top)


@dataclass
class BenchmarkSpec:
    worlds: list[str]
    methods: list[tuple[Policy, float]]
    starts_per_world: int = 25
    seed: int = 0
    output: str = "bench-out"
    jobs: int = 1
    baseline: str | None = None
    config: EpisodeConfig = field(default_factory=EpisodeConfig)

    def __post_init__(self) -> None:
        if not self.worlds:
            raise ConfigError("a sweep needs at least one world")
        if not self.methods:
            raise ConfigError("a sweep needs at least one method")
        if self.starts_per_world < 1 or self.jobs < 1:
            raise ConfigError("starts_per_world and jobs must be >= 1")
        labels = [method_label(*m) for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigError("duplicate methods in sweep")
        if self.baseline is None:
            self.baseline = labels[0]
        elif self.baseline not in labels:
            raise ConfigError(f"baseline {self.baseline!r} is not one of {labels}")


def parse_methods(text: str) -> list[tuple[Policy, float]]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        pol, _, rad = item.partition("@")
        out.append((Policy.parse(pol), parse_radius(rad or "inf")))
    return out


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        key = key.strip().replace("-", "_")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _expand_worlds(text: str, base: Path) -> list[str]:
    paths: list[str] = []
    for pat in (p.strip() for p in text.split(",")):
        if not pat:
            continue
        full = pat if Path(pat).is_absolute() else str(base / pat)
        hits = sorted(glob.glob(full))
        paths.extend(hits if hits else [full])
    return paths


def spec_from_mapping(kv: Mapping[str, str], base: Path = Path(".")) -> BenchmarkSpec:
    kv = dict(kv)
    try:
        worlds = _expand_worlds(kv.pop("worlds"), base)
        methods = parse_methods(kv.pop("methods"))
    except KeyError as exc:
        raise ConfigError(f"sweep config is missing {exc.args[0]!r}") from None
    sweep = {}
    for key, conv in (("starts_per_world", int), ("seed", int), ("jobs", int)):
        if key in kv:
            sweep[key] = _coerce(key, kv.pop(key), conv(0))
    if "output" in kv:
        out = kv.pop("output")
        sweep["output"] = out if Path(out).is_absolute() else str(base / out)
    if "baseline" in kv:
        sweep["baseline"] = kv.pop("baseline")
    config = apply_overrides(EpisodeConfig(), kv)
    return BenchmarkSpec(worlds=worlds, methods=methods, config=config, **sweep)


def load_spec(path: str | Path) -> BenchmarkSpec:
    path = Path(path)
    return spec_from_mapping(parse_kv(path.read_text(encoding="utf-8")), path.parent)


def start_seed(seed: int, world: GroundTruthWorld) -> int:
    """Start-pose seed for one world; depends only on the sweep seed and the map id."""
    return (seed * 1_000_003 + zlib.crc32(world.name.encode("utf-8"))) % (2 ** 32)


@dataclass(frozen=True)
class EpisodeJob:
    world: GroundTruthWorld
    start: Pose
    config: EpisodeConfig
    method_id: str
    run_id: int


def run_job(job: EpisodeJob) -> dict:
    endpoint = endpoint_from_env() if job.config.policy.uses_model else None
    res = run_episode(job.world, job.start, job.config, endpoint, map_id=job.world.name,
                      method_id=job.method_id, run_id=job.run_id)
    return {"map_id": job.world.name, "method_id": job.method_id, "run_id": job.run_id,
            "start": [*job.start.position, job.start.yaw],
            "metrics": res.metrics.to_dict(),
            "curve": [list(s) for s in res.curve.samples]}


def plan_jobs(spec: BenchmarkSpec, worlds: Iterable[GroundTruthWorld]) -> list[EpisodeJob]:
    jobs = []
    for world in worlds:
        starts = sample_starts(world, spec.starts_per_world, start_seed(spec.seed, world))
        for policy, r_v in spec.methods:
            cfg = replace(spec.config, policy=policy, r_v=r_v)
            label = method_label(policy, r_v)
            for run_id, start in enumerate(starts):
                jobs.append(EpisodeJob(world, start, cfg, label, run_id))
    return jobs


def _key(rec: dict) -> tuple:
    return rec["map_id"], rec["method_id"], rec["run_id"]


def attach_auc(records: list[dict]) -> None:
    """Fill each record's AUC over its map's common horizon."""
    by_map: dict[str, list[dict]] = {}
    for r in records:
        by_map.setdefault(r["map_id"], []).append(r)
    for recs in by_map.values():
        curves = [CoverageCurve([tuple(s) for s in r["curve"]]) for r in recs]
        d_max = common_horizon(curves)
        for r, c in zip(recs, curves):
            r["d_max"] = d_max
            r["metrics"]["auc"] = auc(c, d_max)


def results_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in sorted(records, key=_key))


def read_results(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def metrics_of(records: Iterable[dict]) -> list[EpisodeMetrics]:
    return [EpisodeMetrics.from_dict(r["metrics"]) for r in records]


def curves_csv(records: Iterable[dict]) -> str:
    """Long-format coverage curves for external plotting."""
    lines = ["map_id,method_id,run_id,distance,coverage"]
    for r in sorted(records, key=_key):
        for d, c in r["curve"]:
            lines.append(f"{r['map_id']},{r['method_id']},{r['run_id']},{d!r},{c!r}")
    return "\n".join(lines) + "\n"


@dataclass
class BenchOutcome:
    records: list[dict]
    aborted: int
    output: Path


def run_bench(spec: BenchmarkSpec, worlds: list[GroundTruthWorld] | None = None,
              write: bool = True) -> BenchOutcome:
    """Run the sweep; results are ordered canonically whatever ``jobs`` is."""
    if worlds is None:
        worlds = [load_world(p) for p in spec.worlds]
    names = [w.name for w in worlds]
    if len(set(names)) != len(names):
        raise ConfigError(f"world names must be unique, got {names}")
    jobs = plan_jobs(spec, worlds)
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            records = list(pool.map(run_job, jobs, chunksize=4))
    else:
        records = [run_job(j) for j in jobs]
    records.sort(key=_key)
    attach_auc(records)
    out = Path(spec.output)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.jsonl").write_text(results_jsonl(records), encoding="utf-8")
        write_reports(records, spec.baseline, out)
    aborted = sum(bool(r["metrics"]["aborted"]) for r in records)
    return BenchOutcome(records, aborted, out)


def write_reports(records: list[dict], baseline: str, out: Path) -> None:
    rows = aggregate(metrics_of(records), baseline)
    (out / "report.csv").write_text(report_csv(rows), encoding="utf-8")
    (out / "report.json").write_text(report_json(rows, baseline), encoding="utf-8")
    (out / "curves.csv").write_text(curves_csv(records), encoding="utf-8")
