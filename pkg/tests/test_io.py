import json

import numpy as np
import pytest

from helmfno import io
from helmfno.dataset import build_dataset, model_seed
from helmfno.fdtd import AbsorbingBoundary, TimeGrid
from helmfno.operators import new_handle
from helmfno.training import TrainConfig, predict, train
from helmfno.velocity import Grid


def _arrays_equal(a, b):
    return (np.array_equal(a.velocities, b.velocities) and np.array_equal(a.labels, b.labels)
            and np.array_equal(a.spectra, b.spectra))


def test_dataset_round_trip(tiny_dataset, tmp_path):
    io.write_dataset(tiny_dataset, tmp_path / "d")
    back = io.read_dataset(tmp_path / "d")
    assert _arrays_equal(back, tiny_dataset)
    assert back.recipe() == tiny_dataset.recipe()
    assert back.sources == tiny_dataset.sources and back.freqs == tiny_dataset.freqs
    io.write_dataset(back, tmp_path / "e")
    assert (tmp_path / "d/data.bin").read_bytes() == (tmp_path / "e/data.bin").read_bytes()
    assert (tmp_path / "d/manifest.json").read_text() == (tmp_path / "e/manifest.json").read_text()


def test_manifest_contents(tiny_dataset, tmp_path):
    io.write_dataset(tiny_dataset, tmp_path)
    m = io.read_manifest(tmp_path)
    assert m["dtype"] == "float32" and m["byte_order"] == "little"
    assert m["count"] == 6 and m["n_samples"] == 6 * 1 * 2
    assert m["recipe"]["time"] == {"dt": 0.001, "n_t": 400}
    assert "dt" in m["recipe"]["transform"]
    lab = m["arrays"]["labels"]
    assert lab["nbytes"] == 6 * 1 * 2 * 2 * 24 * 24 * 4


def test_complex_field_payload_size():
    field = np.zeros((2, 70, 70), dtype=np.float32)
    assert len(np.ascontiguousarray(field, dtype="<f4").tobytes()) == 2 * 70 * 70 * 4


def test_truncated_file_fails(tiny_dataset, tmp_path):
    io.write_dataset(tiny_dataset, tmp_path)
    data = tmp_path / "data.bin"
    data.write_bytes(data.read_bytes()[:-10])
    with pytest.raises(io.FormatError, match="bytes"):
        io.read_dataset(tmp_path)


def test_corruption_and_version(tiny_dataset, tmp_path):
    io.write_dataset(tiny_dataset, tmp_path)
    data = tmp_path / "data.bin"
    raw = bytearray(data.read_bytes())
    raw[100] ^= 0xFF
    data.write_bytes(bytes(raw))
    with pytest.raises(io.FormatError, match="checksum"):
        io.read_dataset(tmp_path)
    m = json.loads((tmp_path / "manifest.json").read_text())
    m["version"] = 99
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(io.FormatError, match="version"):
        io.read_dataset(tmp_path)


def test_bad_shapes_and_overlap():
    arrays = {"a": {"offset": 0, "shape": [2, 2], "nbytes": 16},
              "b": {"offset": 8, "shape": [2], "nbytes": 8}}
    with pytest.raises(io.FormatError, match="overlap"):
        io._check_layout(arrays, 16)
    with pytest.raises(io.FormatError, match="needs"):
        io._check_layout({"a": {"offset": 0, "shape": [3], "nbytes": 8}}, 8)


def test_regeneration_bit_identical(tmp_path):
    ds = build_dataset("fault-A", 3, seed=11, grid=Grid(24, 24), sources=2, freqs=[10.0, 15.0],
                       tg=TimeGrid(0.001, 400), boundary=AbsorbingBoundary(20))
    ds = ds.with_label_noise(0.01, 11)
    io.write_dataset(ds, tmp_path / "a")
    io.regenerate_dataset(tmp_path / "a", tmp_path / "b")
    for f in ("data.bin", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_model_seeds_are_named_substreams():
    assert model_seed(1, 0) != model_seed(1, 1) != model_seed(2, 0)
    assert model_seed(1, 3) == model_seed(1, 3)


@pytest.fixture(scope="module")
def trained_pfno(tiny_dataset):
    h = new_handle("pfno", {"frequencies": [10.0, 30.0], "modes": 4, "layers": 2,
                            "head_width": 8, "widths": {10: 4, 30: 6}}, seed=0)
    return train(h, tiny_dataset, TrainConfig(epochs=1, batch_size=2, n_train=6, n_test=0))


@pytest.mark.parametrize("arch,config", [
    ("fno", {"width": 4, "modes": 4, "layers": 2, "head_width": 8, "in_channels": 5}),
    ("forwardnet", {}),
])
def test_checkpoint_round_trip(arch, config, tiny_dataset, tmp_path):
    if arch == "forwardnet":
        ds = build_dataset("flat-A", 2, seed=2, grid=Grid(), sources=1, freqs=[10.0],
                           tg=TimeGrid(0.001, 200), boundary=AbsorbingBoundary(10))
    else:
        ds = tiny_dataset
    h = new_handle(arch, config, seed=0)
    res = train(h, ds, TrainConfig(epochs=1, batch_size=2, n_train=ds.n_models, n_test=0))
    opt = next(iter(res.optimizers.values()))
    io.save_checkpoint(h, tmp_path / "m.ckpt", res.history, optimizer=opt, seed=0)
    back, header = io.load_checkpoint(tmp_path / "m.ckpt", with_header=True)
    assert np.array_equal(predict(h, ds), predict(back, ds))
    assert header["history"]["train_loss"] == res.history["train_loss"]
    st = io.load_optimizer_state(tmp_path / "m.ckpt")
    assert st.step == opt.state.step
    assert all(np.array_equal(st.m[k], opt.state.m[k]) for k in opt.state.m)


def test_pfno_checkpoint(trained_pfno, tiny_dataset, tmp_path):
    h = trained_pfno.handle
    io.save_checkpoint(h, tmp_path / "p.ckpt", trained_pfno.history)
    back = io.load_checkpoint(tmp_path / "p.ckpt")
    assert np.array_equal(predict(h, tiny_dataset), predict(back, tiny_dataset))


def test_checkpoint_records_width_rule(tmp_path):
    h = new_handle("pfno", {"frequencies": [10, 19, 30], "modes": 2, "layers": 1, "head_width": 4})
    io.save_checkpoint(h, tmp_path / "w.ckpt")
    back, header = io.load_checkpoint(tmp_path / "w.ckpt", with_header=True)
    assert [back.net.sub(f).config.width for f in (10, 19, 30)] == [32, 64, 96]
    assert header["width_rule"] == [[1, 15, 32], [16, 25, 64], [26, 30, 96]]


def _rewrite_header(path, mutate):
    header, body = io.read_checkpoint_header(path)
    mutate(header)
    head = json.dumps(header, sort_keys=True).encode()
    path.write_bytes(io.CHECKPOINT_MAGIC + len(head).to_bytes(8, "little") + head + body)


def test_missing_parameter_named(tmp_path):
    h = new_handle("fno", {"width": 4, "modes": 2, "layers": 1, "head_width": 4})
    p = tmp_path / "x.ckpt"
    io.save_checkpoint(h, p)
    _rewrite_header(p, lambda hd: hd["tables"]["params"].pop("layer0.W"))
    with pytest.raises(io.FormatError, match="layer0.W"):
        io.load_checkpoint(p)


def test_shape_mismatch_and_truncation(tmp_path):
    h = new_handle("fno", {"width": 4, "modes": 2, "layers": 1, "head_width": 4})
    p = tmp_path / "x.ckpt"
    io.save_checkpoint(h, p)
    _rewrite_header(p, lambda hd: hd["config"].update(width=5))
    with pytest.raises(io.FormatError, match="shape"):
        io.load_checkpoint(p)
    io.save_checkpoint(h, p)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(io.FormatError, match="truncated"):
        io.load_checkpoint(p)
    p.write_bytes(b"NOTACKPT" + bytes(16))
    with pytest.raises(io.FormatError):
        io.load_checkpoint(p)


def test_save_array_sidecar(tmp_path):
    a = np.arange(6, dtype=np.float64).reshape(2, 3)
    p = io.save_array(a, tmp_path / "m.f32")
    assert np.array_equal(np.fromfile(p, dtype="<f4").reshape(2, 3), a)
    assert json.loads((tmp_path / "m.f32.json").read_text())["shape"] == [2, 3]


def test_config_hash_stable():
    assert io.config_hash({"a": 1, "b": [1, 2]}) == io.config_hash({"b": [1, 2], "a": 1})
    assert len(io.config_hash({})) == 12
