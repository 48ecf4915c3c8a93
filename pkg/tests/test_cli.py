import json

import pytest

from edgerestore.cli import main
from edgerestore.config import RunConfig, load_config, parse_config_text
from edgerestore.errors import DataError
from edgerestore.workflow import load_outputs, split_indices

from conftest import write_small_config


def test_unknown_command_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()
    assert main([]) == 1
    assert main(["infer", "--mode", "sideways"]) == 1


def test_quant_inference_without_model_is_data_error(tmp_path, capsys):
    cfg = write_small_config(tmp_path)
    out = tmp_path / "run"
    assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["infer", "--mode", "quant", "--config", str(cfg), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "generator_q8" in err and "convert" in err


def test_missing_dataset_and_config_are_data_errors(tmp_path):
    assert main(["train", "--out", str(tmp_path / "empty")]) == 2
    assert main(["synth", "--config", str(tmp_path / "absent.cfg")]) == 2


def test_eval_reports_three_variants(small_run):
    _, out = small_run
    reports = out / "reports"
    summary = json.loads((reports / "ssim_summary.json").read_text())
    assert list(summary) == ["float", "quantized", "quantized+fine-tune"]
    for name in ("ssim_float.json", "ssim_quant.json", "ssim_quant_ft.json", "ssim_scores.csv",
                 "generator_loss.csv", "finetune_loss.csv"):
        assert (reports / name).exists()
    for stats in summary.values():
        assert stats["count"] == 2 and stats["p25"] <= stats["p50"] <= stats["p75"]
    assert [o.shape for o in load_outputs(out, "quant+ft")] == [(64, 64), (64, 64)]


def test_bench_and_count_ops_commands(small_run, capsys):
    cfg, out = small_run
    assert main(["bench", "--mode", "quant+ft", "--config", str(cfg), "--out", str(out)]) == 0
    table = capsys.readouterr().out
    assert "Fine-Tune (s)" in table and "Total (s)" in table
    doc = json.loads((out / "reports" / "bench_quantized_finetune.json").read_text())
    assert [s["stage"] for s in doc["stages"]] == ["tiling", "quantized-model", "stitching", "fine-tune"]
    assert main(["count-ops", "--config", str(cfg), "--out", str(out)]) == 0
    ops = json.loads(capsys.readouterr().out)
    assert ops["generator_reference"]["finetune_ratio"] < 0.02
    assert ops["generator_desk"]["base_width"] == 2
    assert (out / "reports" / "ops.json").exists()


def test_infer_float_writes_outputs(small_run, capsys):
    cfg, out = small_run
    assert main(["infer", "--mode", "float", "--split", "train", "--config", str(cfg), "--out", str(out)]) == 0
    assert "wrote 6 images" in capsys.readouterr().out


def test_global_flags_after_subcommand(tmp_path):
    cfg = write_small_config(tmp_path)
    out = tmp_path / "r"
    assert main(["synth", "--n-train", "2", "--n-test", "1", "--config", str(cfg), "--out", str(out), "--seed", "9"]) == 0
    assert len(list((out / "data" / "train").glob("clean_*.qtns"))) == 2
    assert "seed=9" in (out / "config.txt").read_text()


def test_config_parsing(tmp_path):
    assert parse_config_text("a = 1\n# comment\n\nb=two # trailing\n") == {"a": "1", "b": "two"}
    with pytest.raises(DataError):
        parse_config_text("no equals sign")
    p = tmp_path / "c.cfg"
    p.write_text("iterations = 5\nnoise_level = 0.5\n")
    cfg = load_config(p, seed=3)
    assert (cfg.iterations, cfg.noise_level, cfg.seed) == (5, 0.5, 3)
    with pytest.raises(DataError):
        RunConfig().with_overrides(bogus=1)
    with pytest.raises(DataError):
        RunConfig().with_overrides(iterations="many")
    assert load_config(None) == RunConfig()


def test_split_indices():
    assert split_indices(10, 0.2) == (list(range(8)), [8, 9])
    assert split_indices(1, 0.2) == ([0], [])
