import json

import numpy as np
import pytest

from edgerestore import pipeline
from edgerestore.data import DatasetPair, load_dataset, save_dataset, synth_dataset
from edgerestore.errors import DataError, ModelFormatError
from edgerestore.manifest import load_model, model_paths, save_model
from edgerestore.metrics import ssim
from edgerestore.nn import build_finetune_net, build_reference_generator, forward_f32, forward_q8
from edgerestore.nn.graph import CONV2D, INPUT, LayerSpec, ModelGraph
from edgerestore.pipeline import convert_model, infer_float, infer_quantized, triplet_tiles
from edgerestore.quant import quantize


@pytest.fixture(scope="module")
def tiny_models():
    g = build_reference_generator(1, seed=0)
    rep = np.random.default_rng(0).random((4, 64, 64, 3), dtype=np.float32)
    return g, convert_model(g, rep)


# --- synthetic data -------------------------------------------------------


def test_synth_is_seeded_and_in_range():
    a = synth_dataset(4, 48, 40, 1.0, seed=3)
    b = synth_dataset(4, 48, 40, 1.0, seed=3)
    assert a.noisy.tobytes() == b.noisy.tobytes() and a.clean.tobytes() == b.clean.tobytes()
    assert a.noisy.shape == (4, 48, 40) and a.noisy.dtype == np.float32
    for stack in (a.noisy, a.clean):
        assert stack.min() >= 0 and stack.max() <= 1
    assert synth_dataset(4, 48, 40, 1.0, seed=4).clean.tobytes() != a.clean.tobytes()


def test_zero_noise_gives_clean_copy():
    d = synth_dataset(2, 32, 32, 0.0, seed=1)
    assert np.array_equal(d.noisy, d.clean)


def test_more_noise_lowers_ssim():
    lo = synth_dataset(4, 64, 64, 1.0, seed=2)
    hi = synth_dataset(4, 64, 64, 2.0, seed=2)
    assert np.array_equal(lo.clean, hi.clean)
    s = lambda d: np.mean([ssim(n, c) for n, c in zip(d.noisy, d.clean)])
    assert s(hi) < s(lo)


def test_adjacent_slices_are_correlated():
    d = synth_dataset(12, 64, 64, 0.0, seed=5)
    near = np.mean([np.corrcoef(d.clean[i].ravel(), d.clean[i + 1].ravel())[0, 1] for i in range(11)])
    far = np.mean([np.corrcoef(d.clean[i].ravel(), d.clean[(i + 6) % 12].ravel())[0, 1] for i in range(11)])
    assert near > far


def test_dataset_round_trip(tmp_path):
    d = synth_dataset(3, 32, 32, 1.0, seed=0)
    save_dataset(tmp_path, d)
    assert sorted(p.name for p in tmp_path.iterdir())[:2] == ["clean_00000.qtns", "clean_00001.qtns"]
    back = load_dataset(tmp_path)
    assert back.noisy.tobytes() == d.noisy.tobytes() and back.clean.tobytes() == d.clean.tobytes()
    with pytest.raises(DataError):
        load_dataset(tmp_path / "missing")
    with pytest.raises(DataError):
        DatasetPair(np.zeros((2, 4, 4)), np.zeros((3, 4, 4)))


# --- model files ----------------------------------------------------------


def test_float_manifest_round_trip(tmp_path):
    g = build_reference_generator(2, seed=1)
    manifest, weights = save_model(g, tmp_path)
    assert manifest.name == "generator_w2.manifest.json" and weights.name == "generator_w2.weights.bin"
    back = load_model(manifest)
    x = np.random.default_rng(0).random((1, 64, 64, 3), dtype=np.float32)
    assert forward_f32(back, x).tobytes() == forward_f32(g, x).tobytes()
    doc = json.loads(manifest.read_text())
    assert doc["quantized"] is False and doc["layers"][0]["weights"]["offset"] == 0


def test_quantized_manifest_round_trip(tmp_path, tiny_models):
    _, gq = tiny_models
    manifest, _ = save_model(gq, tmp_path, "q")
    back = load_model(manifest)
    assert back.quantized and back.qparams == gq.qparams
    x = quantize(np.random.default_rng(1).random((1, 64, 64, 3), dtype=np.float32), gq.qparams[INPUT])
    assert forward_q8(back, x).data.tobytes() == forward_q8(gq, x).data.tobytes()
    doc = json.loads(manifest.read_text())
    conv = next(l for l in doc["layers"] if l["kind"] == CONV2D)
    assert conv["weights"]["dtype"] == "uint8" and conv["bias"]["dtype"] == "int32"
    assert conv["bias_params"]["zero_point"] == 0
    assert "enc1_conv1" in doc["qparams"] and "input" in doc["qparams"]


def test_manifest_errors(tmp_path, tiny_models):
    _, gq = tiny_models
    manifest, weights = save_model(gq, tmp_path, "q")
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "nope.manifest.json")
    weights.write_bytes(weights.read_bytes()[:-10])
    with pytest.raises(ModelFormatError):
        load_model(manifest)
    save_model(gq, tmp_path, "q")
    doc = json.loads(manifest.read_text())
    del doc["qparams"]["enc1_act1"]
    manifest.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(manifest)
    manifest.write_text("{not json")
    with pytest.raises(ModelFormatError):
        load_model(manifest)
    assert model_paths(tmp_path, "m")[0].name == "m.manifest.json"


# --- conversion and inference ---------------------------------------------


def test_convert_properties(tiny_models):
    g, gq = tiny_models
    assert gq.name == "generator_w1_q8"
    assert all(l.weights is None and l.qweights is not None for l in gq.conv_layers())
    with pytest.raises(ModelFormatError):
        convert_model(gq, np.zeros((1, 64, 64, 3), np.float32))
    with pytest.raises(DataError):
        convert_model(g, np.zeros((0, 64, 64, 3), np.float32))
    one = convert_model(g, np.full((1, 64, 64, 3), 0.5, np.float32))
    assert one.quantized


def test_triplet_tiles_shapes():
    d = synth_dataset(3, 128, 64, 1.0, seed=0)
    xs, ys = triplet_tiles(d.noisy, d.clean)
    assert xs.shape == (6, 64, 64, 3) and ys.shape == (6, 64, 64, 1)
    assert np.array_equal(xs[0, :, :, 1], d.noisy[0, :64, :64])


def test_full_size_image_uses_256_tiles(tiny_models, monkeypatch):
    g, gq = tiny_models
    stack = np.random.default_rng(0).random((2, 1024, 1024), dtype=np.float32)
    calls = []
    real = pipeline.forward_q8
    monkeypatch.setattr(pipeline, "forward_q8", lambda m, t: calls.append(t.shape) or real(m, t))
    out = infer_quantized(gq, stack, [0])
    assert len(calls) == 256 and set(calls) == {(1, 64, 64, 3)}
    assert out[0].shape == (1024, 1024)
    assert infer_float(g, stack, [1])[0].shape == (1024, 1024)


def test_overlap_and_jobs_keep_shape_and_values(tiny_models):
    _, gq = tiny_models
    stack = np.random.default_rng(1).random((2, 96, 128), dtype=np.float32)
    a = infer_quantized(gq, stack, overlap=0)
    b = infer_quantized(gq, stack, overlap=8)
    c = infer_quantized(gq, stack, overlap=8, jobs=3)
    assert [x.shape for x in a] == [x.shape for x in b] == [(96, 128)] * 2
    assert all(x.tobytes() == y.tobytes() for x, y in zip(b, c))


def test_constant_stack_gives_finite_output(tiny_models):
    g, gq = tiny_models
    stack = np.full((2, 64, 64), 0.4, np.float32)
    for out in infer_float(g, stack) + infer_quantized(gq, stack):
        assert np.all(np.isfinite(out))


def test_mode_separation(tiny_models):
    g, gq = tiny_models
    stack = np.zeros((1, 64, 64), np.float32)
    with pytest.raises(ModelFormatError):
        infer_float(gq, stack)
    with pytest.raises(ModelFormatError):
        infer_quantized(g, stack)
    with pytest.raises(ModelFormatError):
        infer_quantized(gq, stack, with_finetune=True)


def test_identity_quantized_chain_returns_middle_slice():
    w = np.zeros((1, 1, 3, 1), np.float32)
    w[0, 0, 1, 0] = 1.0
    g = ModelGraph("pick", [1, 64, 64, 3], [LayerSpec("c", CONV2D, [INPUT], weights=w, bias=np.zeros(1, np.float32))])
    rep = np.random.default_rng(0).random((2, 64, 64, 3), dtype=np.float32)
    rep[0, 0, 0] = [0.0, 1.0, 0.0]
    rep[0, 0, 1] = [1.0, 0.0, 1.0]
    gq = convert_model(g, rep)
    stack = np.random.default_rng(1).random((3, 128, 192), dtype=np.float32)
    outs = infer_quantized(gq, stack)
    step = gq.qparams["c"].scale
    for i, out in enumerate(outs):
        assert np.max(np.abs(out - stack[i])) <= step + 1e-7


def test_finetune_at_init_does_not_change_quantized_output(tiny_models):
    _, gq = tiny_models
    stack = np.random.default_rng(2).random((1, 64, 128), dtype=np.float32)
    plain = infer_quantized(gq, stack)[0]
    tuned = infer_quantized(gq, stack, with_finetune=True, finetune=build_finetune_net())[0]
    assert np.array_equal(plain, tuned)
