"""Time-domain acoustic simulation: 2nd order in time, 4th order in space,
Ricker point source and a Cerjan-style damped padding.

The leapfrog loop runs in the compiled ``_fdtd_ext`` kernel when it is
available and in the numpy kernel otherwise. Set ``HELMFNO_BACKEND=python``
to force the fallback.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .velocity import Grid, VelocityModel

log = logging.getLogger(__name__)

try:
    if os.environ.get("HELMFNO_BACKEND", "").lower() == "python":
        raise ImportError("compiled kernel disabled by HELMFNO_BACKEND")
    from . import _fdtd_ext as _compiled
    BACKEND = "cython"
except ImportError:
    _compiled = None
    BACKEND = "python"

STENCIL = {0: -5.0 / 2.0, 1: 4.0 / 3.0, 2: -1.0 / 12.0}
# the same weights with c1 and c2 swapped;
# kept only so tests can show it is not a consistent Laplacian
SWAPPED_STENCIL = {0: -5.0 / 2.0, 1: -1.0 / 12.0, 2: 4.0 / 3.0}

CFL_MAX = np.sqrt(3.0) / 2.0


def _leapfrog_impl(backend: str | None):
    backend = backend or BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled FDTD kernel is not built")
        return _compiled.leapfrog
    if backend == "python":
        return _kernels.leapfrog
    raise ValueError(f"unknown backend {backend!r}")


def ricker(t, f_p: float, t0: float | None = None):
    """Ricker wavelet ``(1 - 2 pi^2 f^2 tau^2) exp(-pi^2 f^2 tau^2)``, tau = t - t0.

    ``t0`` defaults to ``1 / f_p``.
    """
    if f_p <= 0:
        raise ValueError("peak frequency must be positive")
    if t0 is None:
        t0 = 1.0 / f_p
    a = (np.pi * f_p * (np.asarray(t, dtype=np.float64) - t0)) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


@dataclass(frozen=True)
class SourceSpec:
    x_s: float
    z_s: float
    f_p: float = 15.0
    t0: float | None = None
    amplitude: float = 1.0

    def __post_init__(self):
        if self.f_p <= 0:
            raise ValueError("peak frequency must be positive")

    @property
    def delay(self) -> float:
        return 1.0 / self.f_p if self.t0 is None else self.t0

    def node(self, grid: Grid) -> tuple[int, int]:
        return grid.snap(self.x_s, self.z_s)

    def series(self, tg: "TimeGrid") -> np.ndarray:
        return self.amplitude * ricker(tg.times, self.f_p, self.delay)


@dataclass(frozen=True)
class TimeGrid:
    dt: float = 0.001
    n_t: int = 1000

    def __post_init__(self):
        if self.dt <= 0 or self.n_t < 2:
            raise ValueError("time grid needs dt > 0 and at least two steps")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_t) * self.dt

    @property
    def nyquist(self) -> float:
        return 0.5 / self.dt


@dataclass(frozen=True)
class AbsorbingBoundary:
    """Damped padding: each step the pad multiplies ``p`` by
    ``exp(-(alpha d_x)^2) exp(-(alpha d_z)^2)``, d counted in cells."""

    n_layers: int = 120
    alpha: float = 0.0015

    def __post_init__(self):
        if self.n_layers < 0:
            raise ValueError("n_layers must be non-negative")

    def distance(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        """Per-axis distance (cells) into the pad on the padded grid."""
        n = self.n_layers

        def axis(m):
            i = np.arange(m + 2 * n)
            return np.maximum(np.maximum(n - i, i - (m + n - 1)), 0).astype(np.float64)

        return axis(grid.n_z)[:, None], axis(grid.n_x)[None, :]

    def damping(self, grid: Grid) -> np.ndarray:
        dz, dx = self.distance(grid)
        return np.exp(-(self.alpha * dz) ** 2) * np.exp(-(self.alpha * dx) ** 2)

    def pad(self, values: np.ndarray) -> np.ndarray:
        return np.pad(values, self.n_layers, mode="edge")


@dataclass
class TimeWavefield:
    p: np.ndarray  # [n_t, n_z, n_x]
    grid: Grid
    tg: TimeGrid
    source: SourceSpec | None = None
    meta: dict = field(default_factory=dict)


def cfl_number(v_max: float, dt: float, dx: float, dz: float) -> float:
    if dx <= 0 or dz <= 0:
        raise ValueError("spacings must be positive")
    return float(v_max * dt * np.sqrt(1.0 / dx**2 + 1.0 / dz**2))


def cfl_check(v, dt: float, dx: float, dz: float, c_max: float = CFL_MAX) -> tuple[float, bool]:
    """Courant number and whether it passes ``c_max``."""
    v_max = float(np.max(v.values if isinstance(v, VelocityModel) else v))
    c = cfl_number(v_max, dt, dx, dz)
    return c, c <= c_max


def laplacian4(p: np.ndarray, dx: float, dz: float, boundary: str = "zero",
               coeffs: dict | None = None) -> np.ndarray:
    """4th-order Laplacian of a 2-D field indexed ``[z, x]``.

    ``boundary="zero"`` extends the field with zeros (the padded simulation's
    rigid outer edge); ``"periodic"`` wraps around.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or min(p.shape) < 5:
        raise ValueError(f"laplacian4 needs a 2-D field of at least 5x5, got {p.shape}")
    c = STENCIL if coeffs is None else coeffs
    mode = {"zero": "constant", "periodic": "wrap"}[boundary]
    g = np.pad(p, 2, mode=mode)
    lx = (c[2] * (g[2:-2, :-4] + g[2:-2, 4:]) + c[1] * (g[2:-2, 1:-3] + g[2:-2, 3:-1])) + c[0] * p
    lz = (c[2] * (g[:-4, 2:-2] + g[4:, 2:-2]) + c[1] * (g[1:-3, 2:-2] + g[3:-1, 2:-2])) + c[0] * p
    return lx / dx**2 + lz / dz**2


def step(p_prev, p_curr, v, source_value, dt, dx, dz, src_node=None, damping=None,
         boundary="zero"):
    """One leapfrog update ``2p - p_prev + v^2 dt^2 (lap p - s)``.

    ``v`` is the velocity array on the same grid as ``p``. The source value is
    injected at ``src_node`` (iz, ix). ``damping`` multiplies the new and the
    current field, as inside the absorbing pad. Returns ``(p_curr, p_next)``
    so callers can keep rolling.
    """
    v2dt2 = (np.asarray(v, dtype=np.float64) * dt) ** 2
    lap = laplacian4(p_curr, dx, dz, boundary=boundary)
    p_next = (2.0 * p_curr - p_prev) + v2dt2 * lap
    if src_node is not None and source_value != 0:
        p_next[src_node] -= v2dt2[src_node] * source_value
    if damping is not None:
        p_next = p_next * damping
        p_curr = p_curr * damping
    if not np.all(np.isfinite(p_next)):
        raise FloatingPointError("non-finite pressure: simulation unstable")
    return p_curr, p_next


def simulate(v: VelocityModel, src: SourceSpec, tg: TimeGrid = TimeGrid(),
             ab: AbsorbingBoundary = AbsorbingBoundary(), c_max: float = CFL_MAX,
             backend: str | None = None) -> TimeWavefield:
    """Run the full time stepping and return the physical-region wavefield.

    ``p[0]`` is the zero initial state; ``p[n]`` is the pressure at ``n*dt``
    driven by source samples ``s(0) ... s((n-1) dt)``.
    """
    grid = v.grid
    iz, ix = src.node(grid)
    c, ok = cfl_check(v, tg.dt, grid.dx, grid.dz, c_max)
    if not ok:
        raise ValueError(f"CFL number {c:.4f} exceeds bound {c_max:.4f}")
    n = ab.n_layers
    vp = ab.pad(v.values)
    v2dt2 = np.ascontiguousarray((vp * tg.dt) ** 2)
    damp = np.ascontiguousarray(ab.damping(grid))
    series = np.ascontiguousarray(src.series(tg))
    kernel = _leapfrog_impl(backend)
    p = kernel(v2dt2, damp, iz + n, ix + n, series, 1.0 / grid.dx**2, 1.0 / grid.dz**2,
               tg.n_t, n, grid.n_z, grid.n_x)
    if not np.all(np.isfinite(p)):
        raise FloatingPointError("non-finite pressure: simulation unstable")
    return TimeWavefield(np.asarray(p), grid, tg, src,
                         meta={"pad": n, "alpha": ab.alpha, "backend": backend or BACKEND})


def surface_sources(grid: Grid, n_sources: int = 5, depth: float = 10.0,
                  f_p: float = 15.0) -> list[SourceSpec]:
    """Sources spread evenly across the surface and snapped to grid nodes."""
    width = (grid.n_x - 1) * grid.dx
    xs = np.linspace(0.0, width, n_sources) if n_sources > 1 else np.array([width])
    out = []
    for x in xs:
        # round half up: 172.5 -> 170, 345 -> 350, 517.5 -> 520
        ix = int(np.floor(x / grid.dx + 0.5))
        out.append(SourceSpec(ix * grid.dx, depth, f_p=f_p))
    return out
