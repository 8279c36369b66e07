"""Precision / recall / F1 against ground truth and benchmark grids."""

from __future__ import annotations

import csv
import itertools
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import DetectorConfig
from .detector import calibrate, detect
from .synthgen import GenSpec, generate

log = logging.getLogger(__name__)


@dataclass
class EvalResult:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float
    runtime_seconds: float = 0.0


def match(detections: Iterable[int], truth: Iterable[int], m: int) -> EvalResult:
    """Greedy one-to-one matching; d hits truth c iff c <= d < c + 2m."""
    dets = sorted(set(int(d) for d in detections))
    truth = sorted(int(c) for c in truth)
    used = [False] * len(truth)
    tp = 0
    for d in dets:
        for idx, c in enumerate(truth):
            if not used[idx] and c <= d < c + 2 * m:
                used[idx] = True
                tp += 1
                break
    fp = len(dets) - tp
    fn = len(truth) - tp
    precision = tp / len(dets) if dets else 0.0
    recall = tp / len(truth) if truth else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EvalResult(tp, fp, fn, precision, recall, f1)


@dataclass
class BenchCell:
    n: int
    m: int
    family: str
    variant: str
    seed: int


@dataclass
class BenchSpec:
    n_values: Sequence[int] = (200,)
    m_values: Sequence[int] = (200,)
    families: Sequence[str] = ("gaussian",)
    variants: Sequence[str] = ("light",)
    seeds: Sequence[int] = (0,)
    segments: int = 20
    segment_len: int = 1000
    calibration_len: Optional[int] = None
    base_config: DetectorConfig = field(default_factory=DetectorConfig)

    def cells(self) -> list[BenchCell]:
        return [
            BenchCell(n, m, fam, var, seed)
            for n, m, fam, var, seed in itertools.product(
                self.n_values, self.m_values, self.families, self.variants, self.seeds
            )
        ]


def cell_config(bench: BenchSpec, cell: BenchCell) -> DetectorConfig:
    return bench.base_config.replace(m=cell.m, variant=cell.variant)


def calibration_segments(bench: BenchSpec, cell: BenchCell) -> list[np.ndarray]:
    """Change-free stretches covering every regime of the cell's family.

    A disjoint seed generates one segment per schedule entry (each function
    of the functional families, each change type of the gaussian one); each
    segment is calibrated on its own, so no stretch contains a change.
    """
    length = bench.calibration_len or 2 * bench.segment_len
    regimes = {"gaussian": 3, "linear": 2, "nonlinear": 4}[cell.family]
    spec = GenSpec(n=cell.n, family=cell.family, segments=regimes, segment_len=length, seed=10_000 + cell.seed)
    series = generate(spec)[0]
    return [series[i * length:(i + 1) * length] for i in range(regimes)]


def calibrated_lambda(cfg: DetectorConfig, segments: Sequence[np.ndarray]) -> float:
    """Largest recommended threshold over several change-free segments."""
    return max(calibrate(seg, cfg)["recommended_lambda"] for seg in segments)


def run_cell(bench: BenchSpec, cell: BenchCell) -> dict:
    cfg = cell_config(bench, cell)
    spec = GenSpec(n=cell.n, family=cell.family, segments=bench.segments,
                   segment_len=bench.segment_len, seed=cell.seed)
    series, truth = generate(spec)
    cfg = cfg.replace(**{"ph.lambda": calibrated_lambda(cfg, calibration_segments(bench, cell))})
    start = time.perf_counter()
    events, _ = detect(series, cfg)
    elapsed = time.perf_counter() - start
    res = match([e.t for e in events], truth, cell.m)
    res.runtime_seconds = elapsed
    return {**asdict(cell), **asdict(res), "ph_lambda": cfg.ph.lam, "detections": len(events), "error": ""}


def _safe_run_cell(args) -> dict:
    bench, cell = args
    try:
        return run_cell(bench, cell)
    except Exception as exc:  # recorded per cell, the grid continues
        log.exception("cell %s failed", cell)
        return {**asdict(cell), "error": f"{type(exc).__name__}: {exc}"}


def run_benchmark(bench: BenchSpec, workers: int = 1) -> list[dict]:
    """Run every cell; a failing cell is recorded and the run continues."""
    jobs = [(bench, c) for c in bench.cells()]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_safe_run_cell, jobs))
    return [_safe_run_cell(job) for job in jobs]


RESULT_FIELDS = [
    "n", "m", "family", "variant", "seed", "true_positives", "false_positives",
    "false_negatives", "precision", "recall", "f1", "runtime_seconds", "ph_lambda",
    "detections", "error",
]


def write_results(rows: list[dict], path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in RESULT_FIELDS})


def write_long(rows: list[dict], path: str):
    """One (cell keys, metric, value) line per metric, for plotting."""
    keys = ["n", "m", "family", "variant", "seed"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys + ["metric", "value"])
        for row in rows:
            for metric in ("precision", "recall", "f1", "runtime_seconds"):
                if metric in row:
                    writer.writerow([row[k] for k in keys] + [metric, row[metric]])
