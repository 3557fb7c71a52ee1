"""Training loop, loss and metrics for the surrogate networks."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import AdamW, Tensor, backward, no_grad
from .autodiff import ops
from .dataset import WaveDataset
from .operators import CH_FREQ, CH_SRC, CH_V, CH_X, CH_Z, ModelHandle, Normalization

log = logging.getLogger(__name__)

# named sub-streams of the training seed
STREAM_SHUFFLE = 3


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1.6e-3
    decay: float = 0.5
    decay_every: int = 125
    weight_decay: float = 1e-4
    seed: int = 0
    loss: str = "l2"  # "l2": mean per-sample norm of the misfit, "mse": plain MSE
    eval_every: int = 1
    n_train: int = 200
    n_test: int = 50

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.decay_every <= 0:
            raise ValueError("epochs must be >= 0; batch size and decay interval positive")
        if self.n_train <= 0 or self.n_test < 0 or self.eval_every <= 0:
            raise ValueError("sample counts and eval interval must be positive")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.loss not in ("l2", "mse"):
            raise ValueError(f"unknown loss {self.loss!r}")

    @classmethod
    def full_scale(cls, seed: int = 0) -> "TrainConfig":
        """Full-scale protocol: 600 epochs, 15000 train / 3000 test samples."""
        return cls(epochs=600, n_train=15000, n_test=3000, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    handle: ModelHandle
    history: dict
    optimizers: dict = field(default_factory=dict)


class TrainingDiverged(RuntimeError):
    """Non-finite loss; ``handle`` holds the last finite parameters."""

    def __init__(self, msg, handle, history):
        super().__init__(msg)
        self.handle = handle
        self.history = history


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return config.lr * config.decay ** (epoch // config.decay_every)


def training_loss(pred, label) -> Tensor:
    """Batch mean of per-sample misfit norms, real and imaginary parts averaged."""
    pred, label = ops.as_tensor(pred), ops.as_tensor(label)
    if pred.shape != label.shape:
        raise ValueError(f"prediction {pred.shape} and label {label.shape} differ")
    if pred.shape[1] != 2:
        raise ValueError("labels need two channels (real, imaginary)")
    d = ops.sub(pred, label)
    re = ops.l2norm(d[:, 0])
    im = ops.l2norm(d[:, 1])
    return ops.scale(ops.add(re, im), 0.5)


def relative_mse(mse: float, avg_abs_u: float) -> float:
    return mse / avg_abs_u


# -- batches ---------------------------------------------------------------

def raw_inputs(handle: ModelHandle, ds: WaveDataset, idx: np.ndarray) -> np.ndarray:
    """Unnormalized input stacks ``[B, C, n_z, n_x]`` for sample triples ``idx``."""
    idx = np.asarray(idx).reshape(-1, 3)
    chans = handle.channels()
    B = len(idx)
    xx, zz = ds.grid.coordinates()
    out = np.zeros((B, len(chans)) + ds.grid.shape, dtype=np.float32)
    for j, c in enumerate(chans):
        if c == CH_V:
            out[:, j] = ds.velocities[idx[:, 0]]
        elif c == CH_X:
            out[:, j] = xx
        elif c == CH_Z:
            out[:, j] = zz
        elif c == CH_SRC:
            for b, s in enumerate(idx[:, 1]):
                iz, ix = ds.sources[s].node(ds.grid)
                out[b, j, iz, ix] = 1.0
        elif c == CH_FREQ:
            out[:, j] = np.asarray(ds.freqs, dtype=np.float32)[idx[:, 2], None, None]
    return out


def batch_inputs(handle: ModelHandle, ds: WaveDataset, idx: np.ndarray) -> np.ndarray:
    raw = raw_inputs(handle, ds, idx)
    return handle.norm.apply(raw, handle.channels()).astype(np.float32)


def batch_labels(ds: WaveDataset, idx: np.ndarray) -> np.ndarray:
    idx = np.asarray(idx).reshape(-1, 3)
    return ds.labels[idx[:, 0], idx[:, 1], idx[:, 2]]


def fit_normalization(handle: ModelHandle, ds: WaveDataset) -> Normalization:
    """Zero-mean / unit-range input maps and an RMS label scale from training data."""
    offset, scale = [0.0] * 5, [1.0] * 5
    xx, zz = ds.grid.coordinates()
    planes = {CH_V: ds.velocities, CH_X: xx, CH_Z: zz,
              CH_FREQ: np.asarray(ds.freqs, dtype=np.float64)}
    for c in handle.channels():
        if c == CH_SRC:
            continue
        a = np.asarray(planes[c], dtype=np.float64)
        offset[c] = float(a.mean())
        span = float(a.max() - a.min())
        scale[c] = span if span > 0 else 1.0
    rms = float(np.sqrt(np.mean(np.square(ds.labels, dtype=np.float64))))
    return Normalization(offset, scale, rms if rms > 0 else 1.0)


def _net_for(handle: ModelHandle, freq: float | None):
    return handle.net.sub(freq) if handle.arch == "pfno" else handle.net


def _groups(handle: ModelHandle, ds: WaveDataset, idx: np.ndarray) -> dict:
    """Samples per trainable unit: one group per PFNO frequency, else one group."""
    if handle.arch != "pfno":
        return {None: idx}
    out = {}
    for k, f in enumerate(ds.freqs):
        sel = idx[idx[:, 2] == k]
        if len(sel):
            handle.net.sub(f)  # raises for a frequency the PFNO does not cover
            out[float(f)] = sel
    return out


def predict(handle: ModelHandle, ds: WaveDataset, idx: np.ndarray | None = None,
            batch_size: int = 64) -> np.ndarray:
    """Predictions in physical units ``[N, 2, n_z, n_x]`` in the order of ``idx``."""
    idx = ds.sample_index() if idx is None else np.asarray(idx).reshape(-1, 3)
    out = np.empty((len(idx), 2) + ds.grid.shape, dtype=np.float32)
    was_training = getattr(handle.net, "training", None)
    if was_training is not None:
        handle.net.training = False
    try:
        if handle.arch == "pfno":
            units = [(handle.net.sub(ds.freqs[k]), np.nonzero(idx[:, 2] == k)[0])
                     for k in np.unique(idx[:, 2])]
        else:
            units = [(handle.net, np.arange(len(idx)))]
        with no_grad():
            for net, rows in units:
                for i in range(0, len(rows), batch_size):
                    r = rows[i:i + batch_size]
                    y = net.forward(Tensor(batch_inputs(handle, ds, idx[r]))).data
                    out[r] = y * np.float32(handle.norm.label_scale)
    finally:
        if was_training is not None:
            handle.net.training = was_training
    return out


def evaluate_mse(handle: ModelHandle, ds: WaveDataset, idx: np.ndarray | None = None,
                 batch_size: int = 64) -> float:
    """Mean squared entrywise error over both channels and all selected samples."""
    idx = ds.sample_index() if idx is None else np.asarray(idx).reshape(-1, 3)
    pred = predict(handle, ds, idx, batch_size)
    d = pred.astype(np.float64) - batch_labels(ds, idx)
    return float(np.mean(d * d))


# -- training --------------------------------------------------------------

def _snapshot(handle):
    return {n: p.data.copy() for n, p in handle.parameters().items()}


def _restore(handle, snap):
    for n, p in handle.parameters().items():
        p.data = snap[n]


def train(handle: ModelHandle, train_ds: WaveDataset, config: TrainConfig,
          test_ds: WaveDataset | None = None, fit_norm: bool = True) -> TrainResult:
    """Shuffled mini-batch AdamW with the step schedule.

    PFNO sub-models train independently (own sample group, optimizer and
    shuffle stream); their epochs are interleaved so a combined test MSE can
    be recorded. ``history['test_mse']`` holds ``(epoch, mse)`` pairs with
    epoch 0 the untrained model.
    """
    if fit_norm:
        handle.norm = fit_normalization(handle, train_ds)
    idx = train_ds.sample_index()
    groups = _groups(handle, train_ds, idx)
    opts, rngs = {}, {}
    for g, key in enumerate(groups):
        params = _net_for(handle, key).parameters()
        opts[key] = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
        rngs[key] = np.random.default_rng([config.seed, STREAM_SHUFFLE, g])
    scale = np.float32(1.0 / handle.norm.label_scale)
    history = {"train_loss": [], "lr": [], "test_mse": []}
    if test_ds is not None:
        history["test_mse"].append((0, evaluate_mse(handle, test_ds)))
    handle.meta.update({"freqs": [float(f) for f in train_ds.freqs], "train_seed": config.seed})
    if hasattr(handle.net, "training"):
        handle.net.training = True
    snap = _snapshot(handle)
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config)
        total, count = 0.0, 0
        for key, sel in groups.items():
            net = _net_for(handle, key)
            opt = opts[key]
            order = sel[rngs[key].permutation(len(sel))]
            for i in range(0, len(order), config.batch_size):
                b = order[i:i + config.batch_size]
                x = Tensor(batch_inputs(handle, train_ds, b))
                y = Tensor(batch_labels(train_ds, b) * scale)
                pred = net.forward(x)
                loss = training_loss(pred, y) if config.loss == "l2" else ops.mse(pred, y)
                value = float(loss.data)
                if not math.isfinite(value):
                    _restore(handle, snap)
                    if hasattr(handle.net, "training"):
                        handle.net.training = False
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}", handle, history)
                opt.zero_grad()
                backward(loss)
                opt.step(lr)
                total += value * len(b)
                count += len(b)
        history["train_loss"].append(total / max(count, 1))
        history["lr"].append(lr)
        snap = _snapshot(handle)
        if test_ds is not None and ((epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs):
            history["test_mse"].append((epoch + 1, evaluate_mse(handle, test_ds)))
        log.info("epoch %d/%d loss %.4e%s", epoch + 1, config.epochs, history["train_loss"][-1],
                 f" test {history['test_mse'][-1][1]:.4e}" if test_ds is not None else "")
    if hasattr(handle.net, "training"):
        handle.net.training = False
    return TrainResult(handle, history, opts)
