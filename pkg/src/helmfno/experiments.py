"""Experiment drivers: generalization, robustness, timing and crossover."""
from __future__ import annotations

import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tensor, no_grad
from .dataset import WaveDataset, dataset_from_models
from .fdtd import AbsorbingBoundary, SourceSpec, TimeGrid, simulate
from .helmholtz import assemble, solve
from .operators import ModelHandle
from .training import TrainConfig, batch_labels, evaluate_mse, predict, relative_mse, train
from .velocity import (Grid, VelocityModel, constant_model, gaussian_smooth,
                       set_first_layer_velocity, top_layer_mask)


def hardware_note() -> str:
    cpus = os.cpu_count()
    return f"{platform.machine()} {platform.processor() or 'cpu'} x{cpus}, numpy {np.__version__}"


# -- generalization --------------------------------------------------------

def cross_dataset_matrix(handles: dict, tests: dict) -> dict:
    """MSE of every trained model (rows) on every test set (columns)."""
    rows, cols = list(handles), list(tests)
    for r in rows:
        trained = handles[r].meta.get("freqs")
        for c in cols:
            if trained is not None and [float(f) for f in tests[c].freqs] != trained:
                raise ValueError(f"model {r!r} trained on {trained} Hz, test set {c!r} "
                                 f"holds {tests[c].freqs} Hz")
    mse = np.array([[evaluate_mse(handles[r], tests[c]) for c in cols] for r in rows])
    col_min = [bool(mse[cols.index(c), j] <= mse[:, j].min()) if c in rows else None
               for j, c in enumerate(cols)]
    return {"rows": rows, "cols": cols, "mse": mse.tolist(), "diagonal_is_column_min": col_min}


def _single_sample(handle, v: VelocityModel, src: SourceSpec, freq: float, tg, boundary, backend):
    ds = dataset_from_models([v], [src], [freq], tg, boundary, backend)
    idx = np.array([[0, 0, 0]])
    pred = predict(handle, ds, idx)[0]
    label = batch_labels(ds, idx)[0]
    d = pred.astype(np.float64) - label
    return float(np.mean(d * d)), np.hypot(d[0], d[1])


def smooth_generalization(handle: ModelHandle, ds: WaveDataset, model: int, sigmas=range(11),
                          source: int = 0, freq_index: int = 0, backend: str | None = None) -> list[dict]:
    """MSE (and misfit magnitude map) on Gaussian-smoothed copies of one model.

    Labels are re-simulated for every smoothed model.
    """
    v = ds.model(model)
    src, f = ds.sources[source], ds.freqs[freq_index]
    out = []
    for s in sigmas:
        mse, misfit = _single_sample(handle, gaussian_smooth(v, float(s)), src, f, ds.tg,
                                     ds.boundary, backend)
        out.append({"sigma": float(s), "mse": mse, "misfit": misfit})
    return out


def far_shallow_mask(v: VelocityModel, src: SourceSpec) -> np.ndarray:
    """Top-layer cells whose horizontal offset from the source exceeds half the width."""
    xx, _ = v.grid.coordinates()
    far = np.abs(xx - src.x_s) > 0.5 * (v.grid.n_x - 1) * v.grid.dx
    return top_layer_mask(v) & far


def first_layer_experiment(handle: ModelHandle, ds: WaveDataset, model: int, sigma: float = 10.0,
                           original: float = 1645.0, modified: float = 2250.0, source: int = 0,
                           freq_index: int = 0, backend: str | None = None) -> dict:
    """Far-offset shallow misfit energy on smoothed models with two top-layer velocities."""
    v = ds.model(model)
    src, f = ds.sources[source], ds.freqs[freq_index]
    res = {}
    for tag, vel in (("original", original), ("modified", modified)):
        vm = set_first_layer_velocity(v, vel)
        mask = far_shallow_mask(vm, src)
        mse, misfit = _single_sample(handle, gaussian_smooth(vm, sigma), src, f, ds.tg,
                                     ds.boundary, backend)
        res[tag] = {"velocity": vel, "mse": mse, "far_shallow_energy": float(np.sum(misfit[mask] ** 2)),
                    "misfit": misfit}
    return res


# -- robustness ------------------------------------------------------------

def noise_robustness(make_handle, train_ds: WaveDataset, test_ds: WaveDataset, config: TrainConfig,
                     fractions=(0.0, 0.25, 0.5, 1.0), level: float = 0.1, baseline=None) -> dict:
    """Retrain with frozen label noise of std ``fraction * level * mean|u|``.

    ``make_handle()`` returns a freshly initialised model (same init each call).
    ``baseline`` may pass an already finished noiseless ``TrainResult`` trained
    with the same config so it is not repeated.
    """
    if 0.0 not in [float(x) for x in fractions]:
        raise ValueError("the sweep must include the noiseless run")
    sigma_max = level * train_ds.mean_abs_u()
    runs = []
    for frac in fractions:
        sigma = float(frac) * sigma_max
        noisy = train_ds.with_label_noise(sigma, config.seed)
        if sigma == 0 and baseline is not None:
            result = baseline
        else:
            result = train(make_handle(), noisy, config, test_ds)
        runs.append({"fraction": float(frac), "sigma": sigma,
                     "train_mse": evaluate_mse(result.handle, noisy),
                     "test_mse": evaluate_mse(result.handle, test_ds),
                     "history": result.history})
    return {"sigma_max": sigma_max, "runs": runs}


# -- frequency generalization ---------------------------------------------

def freq_generalization(handle: ModelHandle, test_ds: WaveDataset) -> dict:
    """Relative MSE (MSE / mean |u|) per test frequency."""
    out = []
    for k, f in enumerate(test_ds.freqs):
        idx = test_ds.sample_index([f])
        mse = evaluate_mse(handle, test_ds, idx)
        lab = batch_labels(test_ds, idx)
        avg = float(np.mean(np.hypot(lab[:, 0], lab[:, 1], dtype=np.float64)))
        out.append({"freq": float(f), "mse": mse, "avg_abs_u": avg,
                    "relative_mse": relative_mse(mse, avg)})
    return {"curve": out}


def bell_fraction(curve: list[dict], train_freqs) -> float:
    """Share of interior bands whose midpoint error exceeds both end points."""
    rel = {round(c["freq"], 6): c["relative_mse"] for c in curve}
    tf = sorted(float(f) for f in train_freqs)
    hits, total = 0, 0
    for a, b in zip(tf[1:-1], tf[2:-1]):
        mid = round(0.5 * (a + b), 6)
        if round(a, 6) in rel and round(b, 6) in rel and mid in rel:
            total += 1
            hits += rel[mid] >= max(rel[round(a, 6)], rel[round(b, 6)])
    return hits / total if total else float("nan")


# -- timing ----------------------------------------------------------------

@dataclass
class TimingRecord:
    label: str
    instances: int
    batch_size: int
    per_instance: float  # seconds, mean over repetitions
    repetitions: list = field(default_factory=list)  # per-instance seconds of each repetition
    train_seconds: float | None = None
    hardware: str = field(default_factory=hardware_note)

    def __post_init__(self):
        if self.per_instance < 0 or any(r < 0 for r in self.repetitions):
            raise ValueError("times must be non-negative")

    @property
    def spread(self) -> float:
        """Relative spread (max - min) / mean between repetitions."""
        r = np.asarray(self.repetitions)
        return float((r.max() - r.min()) / r.mean()) if len(r) else 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def bench_surrogate(handle: ModelHandle, instances: int, batch_size: int = 64, reps: int = 3,
                    warmup: int = 1, grid: Grid = Grid(), seed: int = 0) -> TimingRecord:
    """Per-instance inference wall time on random inputs of the right shape."""
    chans = len(handle.channels())
    net = handle.net if handle.arch != "pfno" else next(iter(handle.net.subs.values()))
    x = np.random.default_rng(seed).standard_normal((batch_size, chans) + grid.shape).astype(np.float32)
    was_training = getattr(net, "training", None)
    if was_training is not None:
        net.training = False

    def run(n):
        with no_grad():
            for i in range(0, n, batch_size):
                net.forward(Tensor(x[:min(batch_size, n - i)]))

    for _ in range(warmup):
        run(min(instances, batch_size))
    times = []
    for _ in range(reps):
        t = time.perf_counter()
        run(instances)
        times.append((time.perf_counter() - t) / instances)
    if was_training is not None:
        net.training = was_training
    return TimingRecord(f"{handle.arch}-inference", instances, batch_size, float(np.mean(times)), times)


def bench_helmholtz(n: int, freq: float = 10.0, boundary: AbsorbingBoundary = AbsorbingBoundary(20),
                    stencil: str = "9pt", reps: int = 3, v: float = 2000.0) -> TimingRecord:
    """Per-instance direct-solver time (assemble + factor + solve) on an n x n grid."""
    model = constant_model(Grid(n, n), v)
    node = (1, n // 2)
    times = []
    for _ in range(reps + 1):
        t = time.perf_counter()
        system = assemble(model, freq, boundary, stencil)
        solve(system, node)
        times.append(time.perf_counter() - t)
    times = times[1:]  # first run warms caches
    return TimingRecord(f"helmholtz-{stencil}-{n}", 1, 1, float(np.mean(times)), times)


def bench_fdtd(model: VelocityModel, src: SourceSpec, tg: TimeGrid = TimeGrid(),
               boundary: AbsorbingBoundary = AbsorbingBoundary(), reps: int = 3,
               backend: str | None = None) -> TimingRecord:
    times = []
    for _ in range(reps + 1):
        t = time.perf_counter()
        simulate(model, src, tg, boundary, backend=backend)
        times.append(time.perf_counter() - t)
    times = times[1:]
    return TimingRecord(f"fdtd-{backend or 'default'}", 1, 1, float(np.mean(times)), times)


def is_superlinear(sizes, seconds, power: float = 1.0) -> bool:
    """Strictly increasing and growing faster than ``sizes ** power`` between every pair.

    ``sizes`` are grid side lengths, so the default tests growth faster than
    linear in the side length; ``power=2`` compares against the node count.
    """
    sizes, seconds = np.asarray(sizes, float), np.asarray(seconds, float)
    if np.any(np.diff(seconds) <= 0):
        return False
    return bool(np.all(np.diff(np.log(seconds)) > power * np.diff(np.log(sizes))))


def growth_exponent(sizes, seconds) -> float:
    """Least-squares slope of log time against log size."""
    return float(np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(seconds, float)), 1)[0])


def crossover(train_seconds: float, surrogate_per_instance: float, solver_per_instance: float) -> int:
    """Smallest N with ``train + N t_nn < N t_fd``."""
    if train_seconds < 0 or surrogate_per_instance < 0:
        raise ValueError("times must be non-negative")
    gap = solver_per_instance - surrogate_per_instance
    if gap <= 0:
        raise ValueError("surrogate is not faster than the solver: no crossover")
    n = math.floor(train_seconds / gap) + 1
    # guard floating-point edge cases of the division
    while train_seconds + n * surrogate_per_instance >= n * solver_per_instance:
        n += 1
    while n > 1 and train_seconds + (n - 1) * surrogate_per_instance < (n - 1) * solver_per_instance:
        n -= 1
    return n
