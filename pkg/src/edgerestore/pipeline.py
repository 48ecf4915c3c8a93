"""End-to-end inference workflows and float-to-uint8 model conversion.

Float path: slice triplet -> whole-image float forward.
Quantized path: slice triplet -> quantize -> 64x64 tiles -> uint8 forward per
tile -> dequantize -> stitch -> optional float fine-tune.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from edgerestore.errors import DataError, ModelFormatError
from edgerestore.nn.graph import ModelGraph
from edgerestore.nn.models import TILE
from edgerestore.nn.quantized import forward_q8, quantize_graph
from edgerestore.nn.runtime import forward_f32, forward_observe
from edgerestore.quant import CalibrationStats, dequantize, quantize
from edgerestore.tensor import QuantTensor
from edgerestore.tiles import TilePlan, extract_tiles, make_triplet, plan_tiles, stitch


def triplet_tiles(noisy: np.ndarray, clean: np.ndarray, indices: Optional[Iterable[int]] = None,
                  tile: int = TILE) -> Tuple[np.ndarray, np.ndarray]:
    """Non-overlapping (noisy triplet, clean) training tiles from a slice stack."""
    indices = range(len(noisy)) if indices is None else indices
    xs, ys = [], []
    for i in indices:
        trip = make_triplet(noisy, i)
        plan = plan_tiles(trip.shape[1], trip.shape[2], tile, 0)
        xs.extend(extract_tiles(trip, plan))
        ys.extend(extract_tiles(clean[i], plan))
    if not xs:
        raise DataError("no tiles extracted")
    return np.concatenate(xs), np.concatenate(ys)


def collect_stats(g: ModelGraph, tiles: np.ndarray, batch: int = 32) -> Dict[str, CalibrationStats]:
    """Per-layer activation ranges over a representative set, in one float sweep."""
    stats: Dict[str, CalibrationStats] = {}

    def observe(layer_id, act):
        stats.setdefault(layer_id, CalibrationStats()).observe(act)

    for i in range(0, len(tiles), batch):
        forward_observe(g, tiles[i : i + batch], observe)
    return stats


def convert_model(g: ModelGraph, representative: np.ndarray) -> ModelGraph:
    """Calibrate on representative input tiles and return the uint8 model (float weights dropped)."""
    if g.quantized:
        raise ModelFormatError(f"{g.name} is already quantized")
    representative = np.asarray(representative, dtype=np.float32)
    if representative.ndim != 4 or len(representative) == 0:
        raise DataError("representative set must be a non-empty NHWC batch")
    q = quantize_graph(g, collect_stats(g, representative))
    q.name = f"{g.name}_q8"
    return q


def _indices(stack, index_range) -> List[int]:
    if index_range is None:
        return list(range(len(stack)))
    return list(index_range)


def infer_float(g: ModelGraph, stack: Sequence[np.ndarray], index_range=None) -> List[np.ndarray]:
    """Denoise whole slices with the float model; returns HxW images."""
    if g.quantized:
        raise ModelFormatError("float inference needs a float model")
    return [forward_f32(g, make_triplet(stack, i))[0, :, :, 0] for i in _indices(stack, index_range)]


def quantize_and_tile(gq: ModelGraph, stack, i: int, plan: Optional[TilePlan] = None,
                      overlap: int = 0) -> Tuple[List[QuantTensor], TilePlan]:
    trip = make_triplet(stack, i)
    if plan is None:
        plan = plan_tiles(trip.shape[1], trip.shape[2], TILE, overlap)
    q = quantize(trip, gq.qparams["input"])
    tiles = [QuantTensor(t, q.params) for t in extract_tiles(q.data, plan)]
    return tiles, plan


def run_tiles(gq: ModelGraph, tiles: Sequence[QuantTensor], jobs: int = 1) -> Dict[int, QuantTensor]:
    """uint8 inference per tile, keyed by plan index. Results do not depend on ``jobs``."""
    if jobs <= 1:
        return {k: forward_q8(gq, t) for k, t in enumerate(tiles)}
    done: Dict[int, QuantTensor] = {}
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {pool.submit(forward_q8, gq, t): k for k, t in enumerate(tiles)}
        for fut in as_completed(futures):
            done[futures[fut]] = fut.result()
    return done


def dequantize_and_stitch(outputs: Dict[int, QuantTensor], plan: TilePlan) -> np.ndarray:
    return stitch({k: dequantize(t) for k, t in outputs.items()}, plan)[0, :, :, 0]


def apply_finetune(ft: ModelGraph, image: np.ndarray) -> np.ndarray:
    return forward_f32(ft, image[None, :, :, None].astype(np.float32))[0, :, :, 0]


def infer_quantized(gq: ModelGraph, stack: Sequence[np.ndarray], index_range=None, overlap: int = 0,
                    with_finetune: bool = False, finetune: Optional[ModelGraph] = None,
                    jobs: int = 1) -> List[np.ndarray]:
    """Tile-wise uint8 inference with stitching, optionally followed by the fine-tune net."""
    if not gq.quantized:
        raise ModelFormatError("quantized inference needs a converted model")
    if with_finetune and finetune is None:
        raise ModelFormatError("fine-tune requested but no fine-tune model supplied")
    results = []
    for i in _indices(stack, index_range):
        tiles, plan = quantize_and_tile(gq, stack, i, overlap=overlap)
        image = dequantize_and_stitch(run_tiles(gq, tiles, jobs), plan)
        if with_finetune:
            image = apply_finetune(finetune, image)
        results.append(image)
    return results
