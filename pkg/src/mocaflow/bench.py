"""Throughput measurements over a synthetic corpus."""

from __future__ import annotations

import math
import os
import tempfile
import time
from pathlib import Path

import numpy as np

from .gt_database import GtDatabase, build_database, sample_objects
from .io.kitti import load_scene, scene_ids
from .moca import paste, plan_paste, sample_threshold
from .pipeline import RunConfig, draw_flow, run_augment, scene_rng
from .synth import synthetic_calibration, write_synthetic_corpus
from .transform_flow import correspond_points

DEFAULTS = {
    "scenes": 20,
    "seed": 0,
    "workers": [1, 4],
    "point_counts": [10_000, 100_000, 1_000_000],
    "repeats": 3,
}


def _plan_paste_rate(bundles, db: GtDatabase, config: RunConfig) -> float:
    start = time.perf_counter()
    for b in bundles:
        rng = scene_rng(config.seed, b.id)
        thr = sample_threshold(config.thresholds, rng)
        plan = plan_paste(b.scene, sample_objects(db, config.quota, rng), thr)
        paste(b.scene, plan, "random", rng)
    return len(bundles) / (time.perf_counter() - start)


def _correspond_rate(n: int, repeats: int, rng: np.random.Generator) -> float:
    """Best-of-``repeats`` points per second for one correspond call over ``n`` points."""
    calib = synthetic_calibration(624, 192)
    cfg = RunConfig()
    flow = draw_flow(cfg, rng, 624, 192)
    pts = np.column_stack([rng.uniform(5, 60, n), rng.uniform(-20, 20, n), rng.uniform(-2, 1, n)])
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        correspond_points(pts, flow, calib, strict=False)
        best = min(best, time.perf_counter() - t0)
    return n / best


def run_bench(options: dict | None = None) -> dict:
    opts = dict(DEFAULTS)
    opts.update(options or {})
    report: dict = {"options": opts, "cpu_count": os.cpu_count() or 1}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        corpus = tmp / "corpus"
        write_synthetic_corpus(corpus, int(opts["scenes"]), seed=int(opts["seed"]))
        bundles = [load_scene(corpus, sid) for sid in scene_ids(corpus)]
        db = build_database(bundles)
        db.save(tmp / "db")
        config = RunConfig(seed=int(opts["seed"]))

        report["plan_paste_scenes_per_s"] = _plan_paste_rate(bundles, db, config)

        augment = {}
        for workers in opts["workers"]:
            cfg = RunConfig(seed=int(opts["seed"]), workers=int(workers))
            t0 = time.perf_counter()
            run_augment(cfg, corpus, tmp / "db", tmp / f"out_{workers}")
            augment[str(workers)] = len(bundles) / (time.perf_counter() - t0)
        report["augment_scenes_per_s"] = augment

    rng = np.random.default_rng(int(opts["seed"]))
    counts = [int(n) for n in opts["point_counts"]]
    rates = [_correspond_rate(n, int(opts["repeats"]), rng) for n in counts]
    report["correspond"] = {
        "point_counts": counts,
        "points_per_s": rates,
        "per_100k_points_s": [1e5 / r for r in rates],
    }
    # runtime vs point count; a linear algorithm gives a log-log slope near 1
    secs = np.array([n / r for n, r in zip(counts, rates)])
    if len(counts) >= 2:
        slope = np.polyfit(np.log(counts), np.log(secs), 1)[0]
        report["correspond"]["loglog_slope"] = float(slope)
    return report
