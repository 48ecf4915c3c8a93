"""Synthetic low-dose / normal-dose phantom stacks and their on-disk layout."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from edgerestore.errors import DataError
from edgerestore.tensor import load_tensor, save_tensor

# Photon count at intensity 1.0 for noise_level 1; dose scales as 1/noise_level.
PEAK_COUNTS = 200.0
GAUSSIAN_SIGMA = 0.05


@dataclass
class DatasetPair:
    noisy: np.ndarray  # (N, H, W) float32 in [0, 1]
    clean: np.ndarray

    def __post_init__(self):
        if self.noisy.shape != self.clean.shape or self.noisy.ndim != 3:
            raise DataError(f"noisy {self.noisy.shape} and clean {self.clean.shape} stacks must match")

    def __len__(self) -> int:
        return self.clean.shape[0]

    def subset(self, idx) -> "DatasetPair":
        return DatasetPair(self.noisy[idx], self.clean[idx])


def _phantom_volume(rng: np.random.Generator, n: int, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    vol = np.zeros((n, h, w), dtype=np.float64)
    size = min(h, w)

    # sample body: a slowly drifting disc present in every slice
    cy, cx = h / 2 + rng.uniform(-0.05, 0.05) * h, w / 2 + rng.uniform(-0.05, 0.05) * w
    radius = rng.uniform(0.38, 0.46) * size
    drift = rng.uniform(-0.02, 0.02, size=2) * size / max(n, 1)
    base = rng.uniform(0.3, 0.4)
    for z in range(n):
        dy, dx = yy - (cy + drift[0] * z), xx - (cx + drift[1] * z)
        vol[z] += np.where(dy * dy + dx * dx <= radius * radius, base + 0.1 * dx / radius, 0.0)

    count = int(8 + 0.75 * n)
    for _ in range(count):
        oz = rng.uniform(-2, n + 1)
        rz = rng.uniform(2.0, 10.0)
        oy, ox = rng.uniform(0.15, 0.85) * h, rng.uniform(0.15, 0.85) * w
        ry, rx = rng.uniform(0.03, 0.16, size=2) * size
        theta = rng.uniform(0, np.pi)
        amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.08, 0.35)
        ramp = rng.uniform(-0.15, 0.15)
        phi = rng.uniform(0, 2 * np.pi)
        box = rng.random() < 0.35
        ct, st = np.cos(theta), np.sin(theta)
        for z in range(max(0, int(np.floor(oz - rz))), min(n, int(np.ceil(oz + rz)) + 1)):
            t = (z - oz) / rz
            if abs(t) >= 1:
                continue
            s = 1.0 if box else np.sqrt(1 - t * t)
            dy, dx = yy - oy, xx - ox
            u = (dx * ct + dy * st) / (rx * s)
            v = (-dx * st + dy * ct) / (ry * s)
            inside = (np.abs(u) <= 1) & (np.abs(v) <= 1) if box else (u * u + v * v <= 1)
            grad = ramp * (dx * np.cos(phi) + dy * np.sin(phi)) / max(rx, ry)
            vol[z] += np.where(inside, amp + grad, 0.0)
    return np.clip(vol, 0.0, 1.0)


def degrade(clean: np.ndarray, noise_level: float, rng: np.random.Generator) -> np.ndarray:
    """Low-dose simulation: Poisson counting noise plus Gaussian read noise."""
    if noise_level < 0:
        raise ValueError("noise_level must be >= 0")
    if noise_level == 0:
        return clean.copy()
    peak = PEAK_COUNTS / noise_level
    counts = rng.poisson(clean.astype(np.float64) * peak)
    noisy = counts / peak + rng.normal(0.0, GAUSSIAN_SIGMA * noise_level, size=clean.shape)
    return np.clip(noisy, 0.0, 1.0).astype(np.float32)


def synth_dataset(n_images: int, h: int, w: int, noise_level: float = 1.0, seed: int = 0) -> DatasetPair:
    """Seeded stack of phantom slices with correlated neighbours and its noisy twin.

    Objects are ellipsoids and boxes with linear intensity ramps, so adjacent
    slices share structure the way consecutive tomography slices do.
    """
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    rng = np.random.default_rng(seed)
    clean = _phantom_volume(rng, n_images, h, w).astype(np.float32)
    noisy = degrade(clean, noise_level, rng)
    return DatasetPair(noisy, clean)


def save_dataset(directory, pair: DatasetPair) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(len(pair)):
        save_tensor(d / f"clean_{i:05d}.qtns", pair.clean[i][None, :, :, None])
        save_tensor(d / f"noisy_{i:05d}.qtns", pair.noisy[i][None, :, :, None])


def load_dataset(directory) -> DatasetPair:
    d = Path(directory)
    clean_files = sorted(d.glob("clean_*.qtns"))
    if not clean_files:
        raise DataError(f"no dataset found in {d}")
    clean, noisy = [], []
    for f in clean_files:
        partner = d / f.name.replace("clean_", "noisy_")
        if not partner.exists():
            raise DataError(f"missing noisy partner for {f.name}")
        clean.append(np.asarray(load_tensor(f))[0, :, :, 0])
        noisy.append(np.asarray(load_tensor(partner))[0, :, :, 0])
    return DatasetPair(np.stack(noisy), np.stack(clean))
