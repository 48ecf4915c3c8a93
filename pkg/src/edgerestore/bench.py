"""Per-stage latency measurement for the float and quantized inference paths."""

from __future__ import annotations

import json
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from edgerestore.errors import DataError, ModelFormatError
from edgerestore.nn.graph import ModelGraph
from edgerestore.nn.opcount import count_ops
from edgerestore.nn.runtime import forward_f32
from edgerestore.pipeline import (
    apply_finetune,
    dequantize_and_stitch,
    quantize_and_tile,
    run_tiles,
)
from edgerestore.tiles import make_triplet

MODES = ("float", "quantized", "quantized+finetune")
STAGES = {
    "float": ("float-model",),
    "quantized": ("tiling", "quantized-model", "stitching"),
    "quantized+finetune": ("tiling", "quantized-model", "stitching", "fine-tune"),
}
TABLE_LABELS = {
    "float-model": "Float model (s)",
    "tiling": "Tiling (s)",
    "quantized-model": "Quantized model (s)",
    "stitching": "Stitching (s)",
    "fine-tune": "Fine-Tune (s)",
}


def measure(fn: Callable[[], object], repetitions: int = 10, warmup: int = 3) -> List[float]:
    """Run ``fn`` ``warmup`` times untimed, then return ``repetitions`` wall times in seconds."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter_ns()
        fn()
        samples.append((time.perf_counter_ns() - t0) * 1e-9)
    return samples


def time_stage(fn: Callable[[], object], repetitions: int = 10, warmup: int = 3) -> Tuple[float, float]:
    s = np.asarray(measure(fn, repetitions, warmup))
    return float(s.mean()), float(s.std())


@dataclass
class StageTiming:
    stage: str
    mean: float
    std: float
    samples: int


@dataclass
class BenchConfig:
    repetitions: int = 10
    warmup: int = 3
    overlap: int = 0
    parallel_jobs: int = 0  # >1 adds a separate parallel tile-inference entry


@dataclass
class BenchReport:
    mode: str
    stages: List[StageTiming]
    platform: str
    ops_per_image: int
    images: int
    extra: List[StageTiming] = field(default_factory=list)

    @property
    def total(self) -> float:
        return math.fsum(s.mean for s in self.stages)

    def stage(self, name: str) -> StageTiming:
        for s in self.stages:
            if s.stage == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "platform": self.platform,
            "images": self.images,
            "ops_per_image": self.ops_per_image,
            "stages": [vars(s).copy() for s in self.stages],
            "total": self.total,
            "extra": [vars(s).copy() for s in self.extra],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def format_table(self) -> str:
        rows = [(TABLE_LABELS[s.stage], f"{s.mean:.4f}") for s in self.stages]
        rows.append(("Total (s)", f"{self.total:.4f}"))
        for s in self.extra:
            rows.append((f"{s.stage} (s, not in total)", f"{s.mean:.4f}"))
        rows.append(("Ops per image", f"{self.ops_per_image:,}"))
        head = f"mode: {self.mode}"
        width = max(len(r[0]) for r in rows + [(head, "")])
        lines = [f"{'':<{width}} | {head}", "-" * (width + 3 + len(head))]
        lines += [f"{label:<{width}} | {value}" for label, value in rows]
        return "\n".join(lines) + "\n"


def platform_descriptor() -> str:
    return (
        f"{platform.system()} {platform.machine()} {platform.processor() or 'cpu'} "
        f"x{os.cpu_count()} / python {platform.python_version()} / numpy {np.__version__}"
    )


def _pooled(stage: str, samples: Sequence[float]) -> StageTiming:
    s = np.asarray(samples, dtype=np.float64)
    return StageTiming(stage, float(s.mean()), float(s.std()), int(s.size))


def run_pipeline_bench(models: Dict[str, ModelGraph], stack: Sequence[np.ndarray], mode: str,
                       cfg: BenchConfig = BenchConfig(), index_range=None):
    """Time each pipeline stage per image; returns ``(report, outputs)``.

    Inputs to each stage are produced once outside the timed region, so the
    recorded outputs are exactly those of an unbenchmarked run.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    indices = list(range(len(stack))) if index_range is None else list(index_range)
    if not indices:
        raise DataError("benchmark needs at least one image")
    needed = {"float": ["float"], "quantized": ["quantized"],
              "quantized+finetune": ["quantized", "finetune"]}[mode]
    for key in needed:
        if models.get(key) is None:
            raise ModelFormatError(f"mode {mode!r} needs a {key} model")

    samples: Dict[str, List[float]] = {s: [] for s in STAGES[mode]}
    parallel: List[float] = []
    outputs = []
    ops = 0
    for i in indices:
        if mode == "float":
            g = models["float"]
            trip = make_triplet(stack, i)
            out = forward_f32(g, trip)[0, :, :, 0]
            samples["float-model"] += measure(lambda: forward_f32(g, trip), cfg.repetitions, cfg.warmup)
            ops = count_ops(g, trip.shape).total
            outputs.append(out)
            continue
        gq = models["quantized"]
        tiles, plan = quantize_and_tile(gq, stack, i, overlap=cfg.overlap)
        tiled = run_tiles(gq, tiles)
        image = dequantize_and_stitch(tiled, plan)
        samples["tiling"] += measure(lambda: quantize_and_tile(gq, stack, i, plan=plan),
                                     cfg.repetitions, cfg.warmup)
        samples["quantized-model"] += measure(lambda: run_tiles(gq, tiles), cfg.repetitions, cfg.warmup)
        samples["stitching"] += measure(lambda: dequantize_and_stitch(tiled, plan),
                                        cfg.repetitions, cfg.warmup)
        if cfg.parallel_jobs > 1:
            parallel += measure(lambda: run_tiles(gq, tiles, cfg.parallel_jobs),
                                cfg.repetitions, cfg.warmup)
        ops = len(plan) * count_ops(gq, tiles[0].shape).total
        if mode == "quantized+finetune":
            ft = models["finetune"]
            src = image
            image = apply_finetune(ft, src)
            samples["fine-tune"] += measure(lambda: apply_finetune(ft, src), cfg.repetitions, cfg.warmup)
            ops += count_ops(ft, (1,) + src.shape + (1,)).total
        outputs.append(image)
    report = BenchReport(
        mode=mode,
        stages=[_pooled(s, samples[s]) for s in STAGES[mode]],
        platform=platform_descriptor(),
        ops_per_image=int(ops),
        images=len(indices),
    )
    if parallel:
        report.extra.append(_pooled(f"quantized-model-parallel-x{cfg.parallel_jobs}", parallel))
    return report, outputs
