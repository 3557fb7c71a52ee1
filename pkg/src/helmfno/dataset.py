"""In-memory wavefield datasets: velocity models plus frequency-domain labels.

Labels are stored as float32 ``[M, S, F, 2, n_z, n_x]`` arrays (model, source,
frequency, re/im). Every model is synthesized from a seed derived from the
dataset seed and its index, so a dataset is fully determined by its recipe.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .fdtd import AbsorbingBoundary, SourceSpec, TimeGrid, surface_sources, simulate
from .spectral import CONVENTION, magnitude_spectrum, time_to_freq
from .velocity import FamilySpec, Grid, VelocityModel, default_spec, synthesize

log = logging.getLogger(__name__)

# named sub-streams of the dataset seed
STREAM_MODEL, STREAM_NOISE = 1, 2


def model_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, STREAM_MODEL, index]).generate_state(1)[0])


@dataclass
class WaveDataset:
    grid: Grid
    tg: TimeGrid
    boundary: AbsorbingBoundary
    family: FamilySpec | None
    seed: int | None
    model_seeds: list
    velocities: np.ndarray  # float32 [M, n_z, n_x]
    sources: list
    freqs: list
    labels: np.ndarray  # float32 [M, S, F, 2, n_z, n_x]
    spectra: np.ndarray | None = None  # float32 [M, S, n_t//2 + 1], mean |U| per bin
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        M, S, F = len(self.velocities), len(self.sources), len(self.freqs)
        if self.labels.shape != (M, S, F, 2) + self.grid.shape:
            raise ValueError(f"labels shape {self.labels.shape} inconsistent with "
                             f"{M} models x {S} sources x {F} frequencies on {self.grid.shape}")

    @property
    def n_models(self) -> int:
        return len(self.velocities)

    def __len__(self) -> int:
        return self.labels.shape[0] * self.labels.shape[1] * self.labels.shape[2]

    def model(self, i: int) -> VelocityModel:
        tag = self.family.kind if self.family else "custom"
        return VelocityModel(self.grid, self.velocities[i], family_tag=tag,
                             seed=self.model_seeds[i] if self.model_seeds else None)

    def sample_index(self, freqs=None) -> np.ndarray:
        """All ``(model, source, freq)`` index triples, optionally for a frequency subset."""
        fsel = range(len(self.freqs)) if freqs is None else [self.freq_position(f) for f in freqs]
        return np.array([(m, s, k) for m in range(self.n_models)
                         for s in range(len(self.sources)) for k in fsel], dtype=np.int64).reshape(-1, 3)

    def freq_position(self, f: float) -> int:
        for k, g in enumerate(self.freqs):
            if float(g) == float(f):
                return k
        raise KeyError(f"{f} Hz not in dataset frequencies {self.freqs}")

    def subset(self, models) -> "WaveDataset":
        models = np.asarray(models, dtype=np.int64)
        return replace(self,
                       model_seeds=[self.model_seeds[i] for i in models] if self.model_seeds else [],
                       velocities=self.velocities[models], labels=self.labels[models],
                       spectra=None if self.spectra is None else self.spectra[models],
                       meta=dict(self.meta))

    def split(self, n_train: int) -> tuple["WaveDataset", "WaveDataset"]:
        if not 0 < n_train < self.n_models:
            raise ValueError(f"train size {n_train} must lie strictly inside (0, {self.n_models})")
        return self.subset(range(n_train)), self.subset(range(n_train, self.n_models))

    def select_freqs(self, freqs) -> "WaveDataset":
        pos = [self.freq_position(f) for f in freqs]
        return replace(self, freqs=[self.freqs[k] for k in pos],
                       labels=np.ascontiguousarray(self.labels[:, :, pos]), meta=dict(self.meta))

    def mean_abs_u(self) -> float:
        """Average complex magnitude of the labels."""
        return float(np.mean(np.hypot(self.labels[:, :, :, 0], self.labels[:, :, :, 1],
                                      dtype=np.float64)))

    def with_label_noise(self, sigma: float, seed: int) -> "WaveDataset":
        """Copy with frozen i.i.d. Gaussian noise of std ``sigma`` on every label entry."""
        if sigma < 0:
            raise ValueError("noise std must be non-negative")
        labels = self.labels
        if sigma > 0:
            rng = np.random.default_rng([seed, STREAM_NOISE])
            labels = (labels + rng.normal(0.0, sigma, size=labels.shape)).astype(np.float32)
        return replace(self, labels=labels, meta={**self.meta, "label_noise": {"sigma": float(sigma), "seed": int(seed)}})

    def recipe(self) -> dict:
        return {
            "grid": {"n_z": self.grid.n_z, "n_x": self.grid.n_x, "dz": self.grid.dz, "dx": self.grid.dx},
            "time": {"dt": self.tg.dt, "n_t": self.tg.n_t},
            "boundary": {"n_layers": self.boundary.n_layers, "alpha": self.boundary.alpha},
            "family": self.family.to_dict() if self.family else None,
            "seed": self.seed,
            "model_seeds": list(self.model_seeds),
            "sources": [{"x_s": s.x_s, "z_s": s.z_s, "f_p": s.f_p, "t0": s.t0,
                         "amplitude": s.amplitude} for s in self.sources],
            "freqs": [float(f) for f in self.freqs],
            "transform": CONVENTION,
        }


def label_fields(v: VelocityModel, sources: list[SourceSpec], freqs, tg: TimeGrid,
                 boundary: AbsorbingBoundary, backend: str | None = None, fractional: bool = False):
    """Simulate every source on ``v``; return labels ``[S, F, 2, nz, nx]`` and spectra."""
    S, F = len(sources), len(freqs)
    out = np.empty((S, F, 2) + v.grid.shape, dtype=np.float32)
    spectra = np.empty((S, tg.n_t // 2 + 1), dtype=np.float32)
    for s, src in enumerate(sources):
        w = simulate(v, src, tg, boundary, backend=backend)
        for k, fw in enumerate(time_to_freq(w, freqs, fractional=fractional)):
            out[s, k, 0] = fw.u.real
            out[s, k, 1] = fw.u.imag
        spectra[s] = magnitude_spectrum(w)
    return out, spectra


def build_dataset(family: str | FamilySpec, count: int, seed: int, grid: Grid = Grid(),
                  sources: list[SourceSpec] | int = 1, freqs=(10.0,), tg: TimeGrid = TimeGrid(),
                  boundary: AbsorbingBoundary = AbsorbingBoundary(), backend: str | None = None,
                  model_seeds: list | None = None, fractional: bool = False) -> WaveDataset:
    """Synthesize ``count`` models and simulate their frequency-domain labels.

    ``sources`` is either an explicit list or a count of evenly spread surface
    sources (a single source sits at the right edge).
    """
    if count <= 0:
        raise ValueError("count must be positive")
    spec = family if isinstance(family, FamilySpec) else default_spec(family)
    if isinstance(sources, int):
        sources = surface_sources(grid, sources)
    freqs = [float(f) for f in freqs]
    seeds = model_seeds if model_seeds is not None else [model_seed(seed, i) for i in range(count)]
    vel = np.empty((count,) + grid.shape, dtype=np.float32)
    labels = np.empty((count, len(sources), len(freqs), 2) + grid.shape, dtype=np.float32)
    spectra = np.empty((count, len(sources), tg.n_t // 2 + 1), dtype=np.float32)
    for i, ms in enumerate(seeds):
        v = synthesize(spec, grid, ms)
        vel[i] = v.values
        # simulate the stored (float32) model so labels are reproducible from the file
        v = v.with_values(vel[i].astype(np.float64))
        labels[i], spectra[i] = label_fields(v, sources, freqs, tg, boundary, backend, fractional)
        if (i + 1) % 25 == 0 or i + 1 == count:
            log.info("simulated %d/%d %s models", i + 1, count, spec.kind)
    return WaveDataset(grid, tg, boundary, spec, seed, list(seeds), vel, list(sources), freqs,
                       labels, spectra, meta={"fractional": True} if fractional else {})


def dataset_from_models(models: list[VelocityModel], sources: list[SourceSpec], freqs,
                        tg: TimeGrid = TimeGrid(), boundary: AbsorbingBoundary = AbsorbingBoundary(),
                        backend: str | None = None) -> WaveDataset:
    """Labels for an explicit list of models (smoothed or edited variants)."""
    grid = models[0].grid
    freqs = [float(f) for f in freqs]
    vel = np.stack([m.values for m in models]).astype(np.float32)
    models = [m.with_values(vel[i].astype(np.float64)) for i, m in enumerate(models)]
    labels = np.empty((len(models), len(sources), len(freqs), 2) + grid.shape, dtype=np.float32)
    spectra = np.empty((len(models), len(sources), tg.n_t // 2 + 1), dtype=np.float32)
    for i, m in enumerate(models):
        labels[i], spectra[i] = label_fields(m, sources, freqs, tg, boundary, backend)
    return WaveDataset(grid, tg, boundary, None, None, [m.seed for m in models], vel,
                       list(sources), freqs, labels, spectra)
