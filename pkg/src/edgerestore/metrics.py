"""SSIM image-quality scoring and per-variant score summaries."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from edgerestore.errors import DataError, ShapeError


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if min(self.k1, self.k2, self.sigma, self.dynamic_range) <= 0 or self.window < 1:
            raise ValueError("SSIM constants must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _as_plane(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 4 and arr.shape[0] == 1 and arr.shape[3] == 1:
        arr = arr[0, :, :, 0]
    elif arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ShapeError(f"SSIM needs a single-channel image, got shape {np.shape(img)}")
    return arr


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(img, k.size, axis=0) @ k
    return sliding_window_view(rows, k.size, axis=1) @ k


def ssim_map(a, b, p: SsimParams = SsimParams()) -> np.ndarray:
    """Per-window SSIM over every valid (fully inside) window position."""
    x, y = _as_plane(a), _as_plane(b)
    if x.shape != y.shape:
        raise ShapeError(f"SSIM operands differ in shape: {x.shape} vs {y.shape}")
    if min(x.shape) < p.window:
        raise ShapeError(f"image {x.shape} smaller than the {p.window}x{p.window} window")
    k = gaussian_kernel_1d(p.window, p.sigma)
    mu_x, mu_y = _filter_valid(x, k), _filter_valid(y, k)
    var_x = _filter_valid(x * x, k) - mu_x * mu_x
    var_y = _filter_valid(y * y, k) - mu_y * mu_y
    cov = _filter_valid(x * y, k) - mu_x * mu_y
    num = (2 * mu_x * mu_y + p.c1) * (2 * cov + p.c2)
    den = (mu_x * mu_x + mu_y * mu_y + p.c1) * (var_x + var_y + p.c2)
    return num / den


def ssim(a, b, p: SsimParams = SsimParams()) -> float:
    return float(np.mean(ssim_map(a, b, p)))


@dataclass
class SsimReport:
    label: str
    scores: List[float] = field(default_factory=list)
    mean: float = float("nan")
    p25: float = float("nan")
    p50: float = float("nan")
    p75: float = float("nan")
    min: float = float("nan")
    max: float = float("nan")

    @classmethod
    def from_scores(cls, label: str, scores: Sequence[float]) -> "SsimReport":
        s = np.asarray(scores, dtype=np.float64)
        if s.size == 0:
            raise DataError("SSIM report needs at least one score")
        p25, p50, p75 = np.percentile(s, [25, 50, 75])
        return cls(label, [float(v) for v in s], float(s.mean()), float(p25), float(p50),
                   float(p75), float(s.min()), float(s.max()))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "count": len(self.scores),
            "mean": self.mean,
            "p25": self.p25,
            "p50": self.p50,
            "p75": self.p75,
            "min": self.min,
            "max": self.max,
            "scores": list(self.scores),
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def ssim_report(pairs: Sequence[Tuple[np.ndarray, np.ndarray]], p: SsimParams = SsimParams(),
                label: str = "") -> SsimReport:
    pairs = list(pairs)
    if not pairs:
        raise DataError("no image pairs to score")
    return SsimReport.from_scores(label, [ssim(a, b, p) for a, b in pairs])


def write_scores_csv(path, reports: Sequence[SsimReport]) -> None:
    """One row per (label, score), ready for an external box plot."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "score"])
        for report in reports:
            for score in report.scores:
                writer.writerow([report.label, repr(score)])
