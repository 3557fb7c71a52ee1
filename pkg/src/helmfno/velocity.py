"""Procedural velocity-model families and the transforms used in the
generalization experiments.

Six families stand in for the OpenFWI sets (flat / curved-fault / style,
each in an A and a harder B flavour). Every generator is a pure function of
``(spec, grid, seed)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

V_MIN = 1500.0
V_MAX = 4500.0

FAMILIES = ("flat-A", "flat-B", "fault-A", "fault-B", "style-A", "style-B")


@dataclass(frozen=True)
class Grid:
    n_z: int = 70
    n_x: int = 70
    dz: float = 10.0
    dx: float = 10.0

    def __post_init__(self):
        if self.n_z < 5 or self.n_x < 5:
            raise ValueError(f"grid must be at least 5x5, got {self.n_z}x{self.n_x}")
        if self.dz <= 0 or self.dx <= 0:
            raise ValueError("grid spacings must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_z, self.n_x)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(x, z)`` coordinate planes in metres, each ``[n_z, n_x]``."""
        x = np.arange(self.n_x) * self.dx
        z = np.arange(self.n_z) * self.dz
        zz, xx = np.meshgrid(z, x, indexing="ij")
        return xx, zz

    def snap(self, x: float, z: float) -> tuple[int, int]:
        """Nearest node ``(iz, ix)`` to a physical location; raises if outside."""
        ix = int(round(x / self.dx))
        iz = int(round(z / self.dz))
        if not (0 <= ix < self.n_x and 0 <= iz < self.n_z):
            raise ValueError(f"location (x={x}, z={z}) lies outside the grid")
        return iz, ix

    @classmethod
    def parse(cls, text: str, dx: float = 10.0, dz: float = 10.0) -> "Grid":
        nz, nx = (int(s) for s in text.lower().split("x"))
        return cls(n_z=nz, n_x=nx, dz=dz, dx=dx)


@dataclass(frozen=True)
class FamilySpec:
    kind: str
    layers: tuple[int, int] = (3, 8)
    ordering: str = "monotone"  # or "random"
    throw: tuple[int, int] = (0, 0)  # fault throw range, cells
    curvature: float = 0.0  # interface amplitude as a fraction of n_z
    smoothness: float = 0.0  # style families: correlation length, cells

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown family kind {self.kind!r}")
        lo, hi = self.layers
        if not 1 <= lo <= hi:
            raise ValueError(f"empty layer-count range {self.layers}")
        if self.throw[0] > self.throw[1] or self.throw[0] < 0:
            raise ValueError(f"empty throw range {self.throw}")
        if self.ordering not in ("monotone", "random"):
            raise ValueError(f"unknown ordering policy {self.ordering!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "layers": list(self.layers),
            "ordering": self.ordering,
            "throw": list(self.throw),
            "curvature": self.curvature,
            "smoothness": self.smoothness,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        return cls(
            kind=d["kind"],
            layers=tuple(d["layers"]),
            ordering=d["ordering"],
            throw=tuple(d["throw"]),
            curvature=d["curvature"],
            smoothness=d["smoothness"],
        )


def default_spec(kind: str) -> FamilySpec:
    """Family parameters used by the dataset builder."""
    presets = {
        "flat-A": FamilySpec("flat-A", layers=(3, 8), ordering="monotone"),
        "flat-B": FamilySpec("flat-B", layers=(3, 8), ordering="random"),
        "fault-A": FamilySpec("fault-A", layers=(3, 5), ordering="monotone",
                              throw=(4, 14), curvature=0.06),
        "fault-B": FamilySpec("fault-B", layers=(6, 8), ordering="random",
                              throw=(6, 20), curvature=0.10),
        "style-A": FamilySpec("style-A", smoothness=9.0),
        "style-B": FamilySpec("style-B", smoothness=3.0),
    }
    return presets[kind]


@dataclass
class VelocityModel:
    grid: Grid
    values: np.ndarray
    family_tag: str = "custom"
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ValueError("velocities must be finite and positive")

    def with_values(self, values: np.ndarray, **meta) -> "VelocityModel":
        return replace(self, values=np.array(values, dtype=np.float64),
                       meta={**self.meta, **meta})


def constant_model(grid: Grid, v: float) -> VelocityModel:
    return VelocityModel(grid, np.full(grid.shape, float(v)), family_tag="constant")


def _layer_velocities(rng: np.random.Generator, n: int, ordering: str,
                      min_contrast: float = 0.0) -> np.ndarray:
    vel = rng.uniform(V_MIN, V_MAX, size=n)
    if ordering == "monotone":
        vel = np.sort(vel)
    elif min_contrast > 0:
        # resample neighbours that are too close so every interface is visible
        for i in range(1, n):
            for _ in range(32):
                if abs(vel[i] - vel[i - 1]) >= min_contrast:
                    break
                vel[i] = rng.uniform(V_MIN, V_MAX)
    return vel


def _interface_depths(rng: np.random.Generator, n_layers: int, n_z: int) -> np.ndarray:
    """Sorted interface depths (cells) with every layer at least 3 cells thick."""
    n_int = n_layers - 1
    if n_int == 0:
        return np.zeros(0)
    slack = n_z - 3 * n_layers
    if slack < 0:
        raise ValueError(f"{n_layers} layers do not fit in {n_z} cells")
    extra = np.sort(rng.uniform(0, slack, size=n_int))
    return 3.0 * np.arange(1, n_int + 1) + extra


def synth_flat(spec: FamilySpec, grid: Grid, seed: int) -> VelocityModel:
    if spec.kind not in ("flat-A", "flat-B"):
        raise ValueError(f"synth_flat cannot build {spec.kind!r}")
    rng = np.random.default_rng([seed, 0xF1A7])
    n = int(rng.integers(spec.layers[0], spec.layers[1] + 1))
    depths = _interface_depths(rng, n, grid.n_z)
    vel = _layer_velocities(rng, n, spec.ordering)
    z = np.arange(grid.n_z)
    layer = np.searchsorted(np.floor(depths), z, side="right")
    column = vel[layer]
    values = np.repeat(column[:, None], grid.n_x, axis=1)
    return VelocityModel(grid, values, family_tag=spec.kind, seed=seed,
                         meta={"n_layers": n})


def _curved_layer_index(z: np.ndarray, x: np.ndarray, depths: np.ndarray,
                        amp: np.ndarray, wavelength: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """Layer index at (possibly fractional) depths ``z`` over columns ``x``."""
    idx = np.zeros(np.broadcast(z, x).shape, dtype=np.int64)
    for d, a, lam, ph in zip(depths, amp, wavelength, phase):
        surface = d + a * np.sin(2 * np.pi * x / lam + ph)
        idx += (z >= surface).astype(np.int64)
    return idx


def synth_fault(spec: FamilySpec, grid: Grid, seed: int,
                throw: int | None = None) -> VelocityModel:
    """Curved layers offset along one fault line.

    ``throw`` overrides the sampled throw (cells); ``throw=0`` returns the
    unfaulted background drawn from the same seed.
    """
    if spec.kind not in ("fault-A", "fault-B"):
        raise ValueError(f"synth_fault cannot build {spec.kind!r}")
    rng = np.random.default_rng([seed, 0xFA17])
    n = int(rng.integers(spec.layers[0], spec.layers[1] + 1))
    depths = _interface_depths(rng, n, grid.n_z)
    n_int = len(depths)
    amp = spec.curvature * grid.n_z * rng.uniform(0.3, 1.0, size=n_int)
    # shared undulation keeps interfaces from crossing
    lam = np.full(n_int, rng.uniform(0.8, 2.0) * grid.n_x)
    ph = np.full(n_int, rng.uniform(0, 2 * np.pi))
    vel = _layer_velocities(rng, n, spec.ordering,
                            min_contrast=300.0 if spec.ordering == "random" else 0.0)
    # clamp to the grid so small test grids stay valid (no effect at 70x70)
    sampled = min(int(rng.integers(spec.throw[0], spec.throw[1] + 1)), grid.n_z // 2)
    # fault line through a point near mid-domain, steeply dipping
    x0 = rng.uniform(0.3, 0.7) * grid.n_x
    dip = rng.uniform(np.deg2rad(55), np.deg2rad(85)) * rng.choice([-1, 1])
    t = sampled if throw is None else int(throw)
    if t < 0 or t > grid.n_z // 2:
        raise ValueError(f"fault throw {t} outside [0, n_z/2]")

    z = np.arange(grid.n_z, dtype=np.float64)[:, None]
    x = np.arange(grid.n_x, dtype=np.float64)[None, :]
    # hanging wall: points on the positive side of the fault line
    side = (x - x0) * np.sin(dip) - z * np.cos(dip) > 0
    z_src = np.where(side, z - t, z)
    layer = _curved_layer_index(z_src, x, depths, amp, lam, ph)
    values = vel[layer]
    return VelocityModel(grid, values, family_tag=spec.kind, seed=seed,
                         meta={"n_layers": n, "throw": t})


def synth_style(spec: FamilySpec, grid: Grid, seed: int) -> VelocityModel:
    """Smoothed Gaussian random field rescaled into a random sub-range of
    [1500, 4500] m/s; larger ``smoothness`` gives smoother models."""
    if spec.kind not in ("style-A", "style-B"):
        raise ValueError(f"synth_style cannot build {spec.kind!r}")
    rng = np.random.default_rng([seed, 0x57E1])
    noise = rng.standard_normal(grid.shape)
    lo = rng.uniform(V_MIN, V_MIN + 800.0)
    hi = rng.uniform(V_MAX - 800.0, V_MAX)
    if math.isinf(spec.smoothness):
        return VelocityModel(grid, np.full(grid.shape, 0.5 * (lo + hi)),
                             family_tag=spec.kind, seed=seed)
    field_ = ndimage.gaussian_filter(noise, spec.smoothness, mode="wrap")
    span = field_.max() - field_.min()
    if span <= 1e-12 * max(1.0, np.abs(field_).max()):
        values = np.full(grid.shape, 0.5 * (lo + hi))
    else:
        values = lo + (field_ - field_.min()) / span * (hi - lo)
    values = np.clip(values, V_MIN, V_MAX)
    return VelocityModel(grid, values, family_tag=spec.kind, seed=seed)


def synthesize(kind: str | FamilySpec, grid: Grid, seed: int) -> VelocityModel:
    spec = kind if isinstance(kind, FamilySpec) else default_spec(kind)
    if spec.kind.startswith("flat"):
        return synth_flat(spec, grid, seed)
    if spec.kind.startswith("fault"):
        return synth_fault(spec, grid, seed)
    return synth_style(spec, grid, seed)


def gaussian_smooth(v: VelocityModel, sigma: float) -> VelocityModel:
    """Gaussian blur with edge replication; ``sigma`` in grid cells."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return v.with_values(v.values.copy(), smooth_sigma=0.0)
    out = ndimage.gaussian_filter(v.values, sigma, mode="nearest")
    # guard the min/max envelope against rounding in the separable passes
    out = np.clip(out, v.values.min(), v.values.max())
    return v.with_values(out, smooth_sigma=float(sigma))


def top_layer_mask(v: VelocityModel) -> np.ndarray:
    top = v.values[0, 0]
    if not np.all(v.values[0] == top):
        raise ValueError("no constant top layer: first row is not uniform")
    labels, _ = ndimage.label(v.values == top)
    return labels == labels[0, 0]


def set_first_layer_velocity(v: VelocityModel, new_v: float) -> VelocityModel:
    mask = top_layer_mask(v)
    out = v.values.copy()
    out[mask] = float(new_v)
    return v.with_values(out, first_layer_velocity=float(new_v))


def total_variation(values: np.ndarray) -> float:
    return float(np.abs(np.diff(values, axis=0)).sum() + np.abs(np.diff(values, axis=1)).sum())
