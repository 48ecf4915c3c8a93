"""Run-directory stages behind the CLI: synth, train, convert, fine-tune, infer, eval, bench.

Layout of a run directory::

    config.txt
    data/{train,test}/{clean,noisy}_%05d.qtns
    models/{generator,generator_q8,finetune}.{manifest.json,weights.bin}
    outputs/{float,quant,quant_ft}/out_%05d.qtns
    reports/*.json, *.csv, *.txt
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List

import numpy as np

from edgerestore.bench import BenchConfig, run_pipeline_bench
from edgerestore.config import RunConfig
from edgerestore.data import DatasetPair, load_dataset, save_dataset, synth_dataset
from edgerestore.errors import DataError, ModelFormatError
from edgerestore.manifest import load_model, model_paths, save_model
from edgerestore.metrics import SsimReport, ssim_report, write_scores_csv
from edgerestore.nn.models import REFERENCE_BASE_WIDTH, build_finetune_net, build_reference_generator
from edgerestore.nn.opcount import count_ops, tiled_image_ops
from edgerestore.pipeline import convert_model, infer_float, infer_quantized, triplet_tiles
from edgerestore.tensor import load_tensor, save_tensor
from edgerestore.train import TrainConfig, evaluate_mse, train_finetune, train_generator, write_loss_csv

log = logging.getLogger(__name__)

GENERATOR = "generator"
GENERATOR_Q8 = "generator_q8"
FINETUNE = "finetune"
VARIANTS = {"float": "float", "quant": "quantized", "quant+ft": "quantized+fine-tune"}
_OUTPUT_DIRS = {"float": "float", "quant": "quant", "quant+ft": "quant_ft"}


class RunDir:
    def __init__(self, root):
        self.root = Path(root)

    def data(self, split: str) -> Path:
        return self.root / "data" / split

    @property
    def models(self) -> Path:
        return self.root / "models"

    @property
    def reports(self) -> Path:
        p = self.root / "reports"
        p.mkdir(parents=True, exist_ok=True)
        return p

    def outputs(self, mode: str) -> Path:
        return self.root / "outputs" / _OUTPUT_DIRS[mode]

    def model(self, name: str):
        manifest, _ = model_paths(self.models, name)
        if not manifest.exists():
            hint = {GENERATOR: "train", GENERATOR_Q8: "convert", FINETUNE: "train-finetune"}[name]
            raise ModelFormatError(f"{manifest} not found; run `{hint}` first")
        return load_model(manifest)

    def dataset(self, split: str) -> DatasetPair:
        d = self.data(split)
        if not d.exists():
            raise DataError(f"{d} not found; run `synth` first")
        return load_dataset(d)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def split_indices(n: int, val_fraction: float):
    n_val = int(round(n * val_fraction)) if n > 1 else 0
    n_val = min(n_val, n - 1)
    return list(range(n - n_val)), list(range(n - n_val, n))


def _train_cfg(cfg: RunConfig, finetune: bool = False) -> TrainConfig:
    if finetune:
        return TrainConfig(learning_rate=cfg.ft_learning_rate, batch_size=cfg.ft_batch_size,
                           iterations=cfg.ft_iterations, seed=cfg.seed)
    return TrainConfig(learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                       iterations=cfg.iterations, seed=cfg.seed)


def synth(cfg: RunConfig, out) -> None:
    run = RunDir(out)
    run.root.mkdir(parents=True, exist_ok=True)
    (run.root / "config.txt").write_text(cfg.to_text())
    train = synth_dataset(cfg.n_train, cfg.image_size, cfg.image_size, cfg.noise_level, cfg.seed)
    test = synth_dataset(cfg.n_test, cfg.image_size, cfg.image_size, cfg.noise_level, cfg.seed + 1)
    save_dataset(run.data("train"), train)
    save_dataset(run.data("test"), test)
    log.info("wrote %d training and %d test slices to %s", len(train), len(test), run.root / "data")


def train(cfg: RunConfig, out) -> Path:
    run = RunDir(out)
    data = run.dataset("train")
    fit_idx, val_idx = split_indices(len(data), cfg.val_fraction)
    xs, ys = triplet_tiles(data.noisy, data.clean, fit_idx)
    g0 = build_reference_generator(cfg.base_width, seed=cfg.seed)
    g, history = train_generator(g0, (xs, ys), _train_cfg(cfg))
    summary = {"iterations": cfg.iterations, "train_tiles": int(len(xs))}
    if val_idx:
        vx, vy = triplet_tiles(data.noisy, data.clean, val_idx)
        summary["val_mse_initial"] = evaluate_mse(g0, vx, vy)
        summary["val_mse_final"] = evaluate_mse(g, vx, vy)
    write_loss_csv(run.reports / "generator_loss.csv", history)
    _write_json(run.reports / "generator_train.json", summary)
    manifest, _ = save_model(g, run.models, GENERATOR)
    return manifest


def convert(cfg: RunConfig, out) -> Path:
    run = RunDir(out)
    g = run.model(GENERATOR)
    data = run.dataset("train")
    n = max(1, min(cfg.calib_images, len(data)))
    representative, _ = triplet_tiles(data.noisy, data.clean, range(n))
    q = convert_model(g, representative)
    manifest, _ = save_model(q, run.models, GENERATOR_Q8)
    return manifest


def train_finetune_stage(cfg: RunConfig, out) -> Path:
    run = RunDir(out)
    gq = run.model(GENERATOR_Q8)
    data = run.dataset("train")
    fit_idx, val_idx = split_indices(len(data), cfg.val_fraction)
    quant_out = infer_quantized(gq, data.noisy, fit_idx, overlap=cfg.overlap, jobs=cfg.jobs)
    pairs = list(zip(quant_out, data.clean[fit_idx]))
    ft0 = build_finetune_net(seed=cfg.seed)
    ft, history = train_finetune(ft0, pairs, _train_cfg(cfg, finetune=True), crop=cfg.ft_crop)
    summary = {"iterations": cfg.ft_iterations, "train_images": len(pairs)}
    if val_idx:
        vq = infer_quantized(gq, data.noisy, val_idx, overlap=cfg.overlap, jobs=cfg.jobs)
        vx = np.stack(vq)[..., None]
        vy = data.clean[val_idx][..., None]
        summary["val_mse_initial"] = evaluate_mse(ft0, vx, vy, batch=4)
        summary["val_mse_final"] = evaluate_mse(ft, vx, vy, batch=4)
    write_loss_csv(run.reports / "finetune_loss.csv", history)
    _write_json(run.reports / "finetune_train.json", summary)
    manifest, _ = save_model(ft, run.models, FINETUNE)
    return manifest


def infer(cfg: RunConfig, out, mode: str, split: str = "test") -> List[np.ndarray]:
    if mode not in VARIANTS:
        raise ValueError(f"mode must be one of {sorted(VARIANTS)}")
    run = RunDir(out)
    data = run.dataset(split)
    if mode == "float":
        images = infer_float(run.model(GENERATOR), data.noisy)
    else:
        gq = run.model(GENERATOR_Q8)
        ft = run.model(FINETUNE) if mode == "quant+ft" else None
        images = infer_quantized(gq, data.noisy, overlap=cfg.overlap, with_finetune=ft is not None,
                                 finetune=ft, jobs=cfg.jobs)
    dest = run.outputs(mode)
    dest.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        save_tensor(dest / f"out_{i:05d}.qtns", np.ascontiguousarray(img, np.float32)[None, :, :, None])
    return images


def evaluate(cfg: RunConfig, out) -> Dict[str, SsimReport]:
    """SSIM reports on the test split for the float, quantized and quantized+fine-tune variants."""
    run = RunDir(out)
    truth = run.dataset("test").clean
    reports = {}
    for mode, label in VARIANTS.items():
        images = infer(cfg, out, mode)
        report = ssim_report(list(zip(images, truth)), label=label)
        report.write_json(run.reports / f"ssim_{_OUTPUT_DIRS[mode]}.json")
        reports[mode] = report
    write_scores_csv(run.reports / "ssim_scores.csv", list(reports.values()))
    _write_json(run.reports / "ssim_summary.json",
                {r.label: {k: v for k, v in r.to_dict().items() if k != "scores"} for r in reports.values()})
    return reports


def bench(cfg: RunConfig, out, mode: str = "quantized+finetune", parallel_jobs: int = 0):
    run = RunDir(out)
    data = run.dataset("test")
    models = {}
    if mode == "float":
        models["float"] = run.model(GENERATOR)
    else:
        models["quantized"] = run.model(GENERATOR_Q8)
        if mode == "quantized+finetune":
            models["finetune"] = run.model(FINETUNE)
    bcfg = BenchConfig(cfg.bench_repetitions, cfg.bench_warmup, cfg.overlap, parallel_jobs)
    n = max(1, min(cfg.bench_images, len(data)))
    report, _ = run_pipeline_bench(models, data.noisy, mode, bcfg, range(n))
    stem = "bench_" + mode.replace("+", "_")
    report.write_json(run.reports / f"{stem}.json")
    (run.reports / f"{stem}.txt").write_text(report.format_table())
    return report


def ops_report(cfg: RunConfig, out=None, image_size: int = 1024) -> dict:
    """Per-image op counts at ``image_size`` for the generator (as tiles) and the fine-tune net."""
    gens = {"reference": build_reference_generator(REFERENCE_BASE_WIDTH, seed=None)}
    gens["desk"] = build_reference_generator(cfg.base_width, seed=None)
    if out is not None:
        manifest, _ = model_paths(RunDir(out).models, GENERATOR)
        if manifest.exists():
            gens["desk"] = load_model(manifest)
    ft = build_finetune_net(seed=None)
    ft_ops = count_ops(ft, (1, image_size, image_size, 1))
    doc = {"image_size": image_size, "finetune": {"total": ft_ops.total, "conv_macs": ft_ops.conv_macs}}
    for key, g in gens.items():
        total = tiled_image_ops(g, (image_size, image_size))
        doc[f"generator_{key}"] = {
            "name": g.name,
            "base_width": g.layer("enc1_conv1").out_channels,
            "tiles": (image_size // 64) ** 2,
            "total": total,
            "finetune_ratio": ft_ops.total / total,
        }
    if out is not None:
        _write_json(RunDir(out).reports / "ops.json", doc)
    return doc


def run_all(cfg: RunConfig, out) -> Dict[str, SsimReport]:
    synth(cfg, out)
    train(cfg, out)
    convert(cfg, out)
    train_finetune_stage(cfg, out)
    return evaluate(cfg, out)


def load_outputs(out, mode: str) -> List[np.ndarray]:
    files = sorted(RunDir(out).outputs(mode).glob("out_*.qtns"))
    return [np.asarray(load_tensor(f))[0, :, :, 0] for f in files]
