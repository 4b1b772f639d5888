"""Benchmark suites: register many synthetic scenes and report RR / RTE / RRE."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cloudio import dumps, write_json
from .convnet import ScorerParams
from .engine import EngineConfig, NoOverlap, make_scorer, prepare_inputs, register
from .geometry import pose_errors
from .scenes import SceneConfig, generate_scene, perturb_problem


@dataclass(frozen=True)
class SuiteConfig:
    n_scenes: int = 100
    seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    yaw_range: float = 360.0
    max_offset: float = 10.0
    tau_r: float = 10.0
    tau_t: float = 5.0
    # scenes run concurrently; the report is reduced in scene order either way
    scene_workers: int = 1

    def __post_init__(self):
        if self.n_scenes < 1:
            raise ValueError("a suite needs at least one scene")
        if not (self.tau_r > 0 and self.tau_t > 0):
            raise ValueError("success thresholds must be > 0")
        if self.scene_workers < 1:
            raise ValueError("scene_workers must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_scenes": self.n_scenes, "seed": self.seed, "scene": self.scene.to_dict(),
            "engine": self.engine.to_dict(), "yaw_range": self.yaw_range,
            "max_offset": self.max_offset, "tau_r": self.tau_r, "tau_t": self.tau_t,
            "scene_workers": self.scene_workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        d = dict(d)
        if "scene" in d:
            d["scene"] = SceneConfig.from_dict(d["scene"])
        if "engine" in d:
            d["engine"] = EngineConfig.from_dict(d["engine"])
        return cls(**d)


def is_success(rre: float, rte: float, tau_r: float, tau_t: float) -> bool:
    """Strict thresholds, applied to each error independently."""
    return bool(rre < tau_r and rte < tau_t)


def _stats(values):
    if not values:
        return None, None
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())


@dataclass
class BenchmarkReport:
    rr: float
    rte_mean: float | None
    rte_std: float | None
    rre_mean: float | None
    rre_std: float | None
    tau_r: float
    tau_t: float
    records: list
    all_scenes: dict
    config: dict = field(default_factory=dict)

    @property
    def n_scenes(self) -> int:
        return len(self.records)

    @property
    def n_success(self) -> int:
        return sum(r["success"] for r in self.records)

    def to_dict(self) -> dict:
        return {
            "rr": self.rr, "n_scenes": self.n_scenes, "n_success": self.n_success,
            "rte_mean": self.rte_mean, "rte_std": self.rte_std,
            "rre_mean": self.rre_mean, "rre_std": self.rre_std,
            "tau_r": self.tau_r, "tau_t": self.tau_t,
            "all_scenes": self.all_scenes, "config": self.config,
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(self.to_dict(), out / "report.json")
        with open(out / "scenes.jsonl", "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(dumps(rec, indent=None) + "\n")


def summarize(records, tau_r: float = 10.0, tau_t: float = 5.0, config: dict | None = None) -> BenchmarkReport:
    """Aggregate per-scene rows; each row needs ``rre``/``rte`` (None on NoOverlap).

    Success statistics cover successful scenes only; ``all_scenes`` holds
    the same statistics over every scene that produced a pose.
    """
    rows = []
    for r in records:
        r = dict(r)
        ok = r.get("rre") is not None and is_success(r["rre"], r["rte"], tau_r, tau_t)
        r["success"] = ok
        rows.append(r)
    rows.sort(key=lambda r: r["scene_id"])
    good = [r for r in rows if r["success"]]
    finished = [r for r in rows if r.get("rre") is not None]
    rte_m, rte_s = _stats([r["rte"] for r in good])
    rre_m, rre_s = _stats([r["rre"] for r in good])
    all_rte = _stats([r["rte"] for r in finished])
    all_rre = _stats([r["rre"] for r in finished])
    all_scenes = {"count": len(finished), "rte_mean": all_rte[0], "rte_std": all_rte[1],
                  "rre_mean": all_rre[0], "rre_std": all_rre[1]}
    return BenchmarkReport(len(good) / len(rows), rte_m, rte_s, rre_m, rre_s, tau_r, tau_t,
                           rows, all_scenes, config or {})


def run_scene(config: SuiteConfig, scene_id: int, scorer=None) -> dict:
    """Register one suite scene; returns its JSONL row (without the success flag)."""
    scene = generate_scene(config.scene, config.seed, scene_id)
    init = perturb_problem(scene, config.seed, config.yaw_range, config.max_offset)
    inputs = prepare_inputs(scene.cloud, scene.intrinsics, scene.features, config.engine)
    row = {"scene_id": scene_id, "initial_errors": list(pose_errors(init, scene.gt_pose))}
    try:
        result = register(inputs, config.engine, init, truth=scene.gt_pose, scorer=scorer)
    except NoOverlap as exc:
        row.update(rre=None, rte=None, no_overlap=True, error=str(exc), iterations_run=exc.iteration)
        return row
    last = result.trace[-1]
    row.update(rre=last["rre"], rte=last["rte"], no_overlap=False,
               iterations_run=result.iterations_run,
               trace_errors=[[t["rre"], t["rte"]] for t in result.trace],
               final_pose=result.final_pose.to_dict())
    return row


def run_benchmark(config: SuiteConfig, params: ScorerParams | None = None,
                  out_dir=None) -> BenchmarkReport:
    scorer = make_scorer(config.engine, params)
    ids = range(config.n_scenes)
    if config.scene_workers > 1:
        with ThreadPoolExecutor(max_workers=config.scene_workers) as pool:
            rows = list(pool.map(lambda i: run_scene(config, i, scorer), ids))
    else:
        rows = [run_scene(config, i, scorer) for i in ids]
    report = summarize(rows, config.tau_r, config.tau_t, config.to_dict())
    if out_dir is not None:
        report.write(out_dir)
    return report


def prefix_report(report: BenchmarkReport, iterations: int) -> BenchmarkReport:
    """Re-score a report as if every run had stopped after ``iterations`` steps.

    Valid because the engine is deterministic and a shorter schedule is a
    prefix of a longer one with the same initial space and factors.
    """
    rows = []
    for r in report.records:
        r = dict(r)
        if r.get("trace_errors") and len(r["trace_errors"]) >= iterations:
            r["rre"], r["rte"] = r["trace_errors"][iterations - 1]
        elif r.get("no_overlap") and r.get("iterations_run", math.inf) > iterations:
            raise ValueError("cannot take a prefix beyond the recorded trace")
        rows.append(r)
    cfg = dict(report.config)
    return summarize(rows, report.tau_r, report.tau_t, cfg)


def with_engine(config: SuiteConfig, **engine_changes) -> SuiteConfig:
    return replace(config, engine=replace(config.engine, **engine_changes))
