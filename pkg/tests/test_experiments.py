import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helmfno.experiments import (TimingRecord, bell_fraction, bench_helmholtz, bench_surrogate,
                                 cross_dataset_matrix, crossover, freq_generalization,
                                 growth_exponent, is_superlinear, noise_robustness, smooth_generalization)
from helmfno.fdtd import AbsorbingBoundary
from helmfno.operators import new_handle
from helmfno.training import TrainConfig, evaluate_mse, predict, relative_mse, train

SMALL_FNO = {"width": 4, "modes": 3, "layers": 1, "head_width": 8, "in_channels": 5}


@pytest.mark.parametrize("args,n", [((8388.0, 4.23e-4, 2.30), 3648),
                                    ((43272.0, 9.63e-3, 145.65), 298),
                                    ((0.0, 1.0, 2.0), 1)])
def test_crossover_examples(args, n):
    assert crossover(*args) == n


def test_crossover_errors():
    with pytest.raises(ValueError):
        crossover(10.0, 2.0, 2.0)
    with pytest.raises(ValueError):
        crossover(-1.0, 1.0, 2.0)


@given(st.floats(0, 1e6), st.floats(1e-6, 10), st.floats(1e-3, 100))
def test_crossover_is_smallest_favourable(train_s, t_nn, extra):
    t_fd = t_nn + extra
    n = crossover(train_s, t_nn, t_fd)
    assert n >= 1
    assert train_s + n * t_nn < n * t_fd
    if n > 1:
        assert train_s + (n - 1) * t_nn >= (n - 1) * t_fd


def test_is_superlinear():
    n = np.array([70, 140, 280])
    assert is_superlinear(n, 1e-6 * n.astype(float) ** 2)
    assert not is_superlinear(n, 1e-6 * n.astype(float))
    assert is_superlinear(n, 1e-6 * n.astype(float) ** 3, power=2)
    assert not is_superlinear(n, 1e-6 * n.astype(float) ** 2, power=2)
    assert not is_superlinear(n, [3.0, 2.0, 5.0])
    assert growth_exponent(n, 2.0 * n.astype(float) ** 1.5) == pytest.approx(1.5)


def test_timing_record():
    r = TimingRecord("x", 10, 2, 0.5, [0.4, 0.6])
    assert r.spread == pytest.approx(0.4)
    assert TimingRecord("y", 1, 1, 0.0).spread == 0.0
    with pytest.raises(ValueError):
        TimingRecord("z", 1, 1, -1.0)
    assert r.to_dict()["per_instance"] == 0.5


def test_relative_mse_division():
    assert relative_mse(2e-4, 0.05) == pytest.approx(4e-3, rel=1e-12)


def test_bell_fraction():
    curve = [{"freq": f, "relative_mse": r} for f, r in
             [(10, 1.0), (12, 3.0), (14, 1.0), (16, 4.0), (18, 2.0), (20, 1.0), (22, 1.0)]]
    # only (14, 18) is interior; the edge bands are skipped
    assert bell_fraction(curve, [10, 14, 18, 22]) == 1.0
    curve[3]["relative_mse"] = 0.5
    assert bell_fraction(curve, [10, 14, 18, 22]) == 0.0
    assert math.isnan(bell_fraction(curve, [10, 22]))


@pytest.fixture(scope="module")
def trained(tiny_dataset):
    h = new_handle("fno", SMALL_FNO, seed=0)
    return train(h, tiny_dataset, TrainConfig(epochs=2, batch_size=4, n_train=6, n_test=0))


def test_cross_dataset_matrix(trained, tiny_dataset):
    res = cross_dataset_matrix({"a": trained.handle}, {"a": tiny_dataset, "b": tiny_dataset})
    assert res["mse"][0][0] == res["mse"][0][1] == evaluate_mse(trained.handle, tiny_dataset)
    assert res["diagonal_is_column_min"] == [True, None]
    with pytest.raises(ValueError):
        cross_dataset_matrix({"a": trained.handle}, {"a": tiny_dataset.select_freqs([10.0])})


def test_smooth_sigma_zero_is_baseline(trained, tiny_dataset):
    ds = tiny_dataset.select_freqs([10.0])
    h = trained.handle
    curve = smooth_generalization(h, ds, model=2, sigmas=[0, 3])
    idx = np.array([[2, 0, 0]])
    assert curve[0]["mse"] == evaluate_mse(h, ds, idx)
    assert curve[0]["misfit"].shape == ds.grid.shape
    assert curve[1]["mse"] != curve[0]["mse"]


def test_freq_generalization(trained, tiny_dataset):
    res = freq_generalization(trained.handle, tiny_dataset)["curve"]
    assert [c["freq"] for c in res] == [10.0, 30.0]
    for c in res:
        assert c["relative_mse"] == pytest.approx(c["mse"] / c["avg_abs_u"])


def test_noise_robustness_reuses_baseline(trained, tiny_dataset):
    cfg = TrainConfig(epochs=2, batch_size=4, n_train=6, n_test=0)
    res = noise_robustness(lambda: new_handle("fno", SMALL_FNO, seed=0), tiny_dataset, tiny_dataset,
                           cfg, fractions=(0.0, 1.0), baseline=trained)
    assert res["sigma_max"] == pytest.approx(0.1 * tiny_dataset.mean_abs_u())
    assert res["runs"][0]["history"] is trained.history
    assert res["runs"][1]["sigma"] == res["sigma_max"]
    with pytest.raises(ValueError):
        noise_robustness(None, tiny_dataset, tiny_dataset, cfg, fractions=(0.5,))


def test_label_noise_statistics(tiny_dataset):
    sigma = 0.05
    noisy = tiny_dataset.with_label_noise(sigma, 1)
    d = (noisy.labels.astype(np.float64) - tiny_dataset.labels).ravel()
    assert abs(d.mean()) <= 3 * sigma / math.sqrt(d.size)
    assert d.std() == pytest.approx(sigma, rel=0.05)
    again = tiny_dataset.with_label_noise(sigma, 1)
    assert np.array_equal(again.labels, noisy.labels)
    assert tiny_dataset.with_label_noise(0.0, 1).labels is tiny_dataset.labels


def test_bench_records(trained):
    r = bench_surrogate(trained.handle, 8, batch_size=4, reps=2)
    assert len(r.repetitions) == 2 and r.per_instance > 0
    h = bench_helmholtz(20, boundary=AbsorbingBoundary(5), reps=1)
    assert h.per_instance > 0 and h.label == "helmholtz-9pt-20"


def test_predict_matches_batching(trained, tiny_dataset):
    a = predict(trained.handle, tiny_dataset, batch_size=64)
    b = predict(trained.handle, tiny_dataset, batch_size=5)
    assert np.allclose(a, b, rtol=1e-5, atol=1e-6 * np.abs(a).max())
