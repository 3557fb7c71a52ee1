"""Time <-> frequency conversion of simulated wavefields.

Convention used everywhere in the package (and written into dataset
manifests)::

    U(f) = dt * sum_n p[n] exp(-2 pi i f n dt)
    p[n] = 1 / (n_t dt) * sum_k U(f_k) exp(+2 pi i f_k n dt)

Frequencies are requested in Hz and must land on an integer bin
``k = f n_t dt``; with dt = 1 ms and n_t = 1000 bin k is exactly k Hz.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fdtd import TimeGrid, TimeWavefield
from .velocity import Grid

CONVENTION = "U(f) = dt * sum_n p[n] exp(-2j*pi*f*n*dt); inverse divides by n_t*dt"


@dataclass
class FreqWavefield:
    u: np.ndarray  # complex [n_z, n_x]
    frequency: float
    grid: Grid
    tg: TimeGrid
    source_index: int = 0
    model_id: int | str | None = None
    meta: dict = field(default_factory=dict)


@dataclass
class SpectrumProfile:
    frequencies: np.ndarray
    magnitude: np.ndarray


def freq_bin(f: float, tg: TimeGrid) -> int:
    """Integer bin of frequency ``f``; raises unless it is exact and in [0, Nyquist]."""
    if f < 0 or f > tg.nyquist + 1e-12:
        raise ValueError(f"frequency {f} Hz outside [0, {tg.nyquist}] Hz")
    k = f * tg.n_t * tg.dt
    kr = int(round(k))
    if abs(k - kr) > 1e-9 * max(1.0, abs(k)):
        raise ValueError(
            f"frequency {f} Hz is not on the 1/(n_t dt) = {1 / (tg.n_t * tg.dt):g} Hz bin grid")
    return kr


def time_to_freq(w: TimeWavefield, freqs, fractional: bool = False,
                 model_id=None, source_index: int = 0) -> list[FreqWavefield]:
    """Transform the time axis and return one field per requested frequency.

    With ``fractional=True`` off-grid frequencies are evaluated by the direct
    sum instead of raising (used for the frequency-generalization test sets).
    """
    tg = w.tg
    freqs = [float(f) for f in freqs]
    out = []
    spectrum = None
    for f in freqs:
        try:
            k = freq_bin(f, tg)
        except ValueError:
            if not fractional or f < 0 or f > tg.nyquist:
                raise
            phase = np.exp(-2j * np.pi * f * tg.times)
            u = tg.dt * np.tensordot(phase, w.p, axes=(0, 0))
        else:
            if spectrum is None:
                spectrum = np.fft.rfft(w.p, axis=0) * tg.dt
            u = spectrum[k]
        out.append(FreqWavefield(np.array(u), f, w.grid, tg, source_index, model_id))
    return out


def magnitude_spectrum(w: TimeWavefield) -> np.ndarray:
    """Spatially averaged ``|U|`` per non-negative bin (length n_t // 2 + 1)."""
    return np.abs(np.fft.rfft(w.p, axis=0) * w.tg.dt).mean(axis=(1, 2))


def energy_spectrum(wavefields) -> SpectrumProfile:
    """Mean ``|U|`` per bin over space, sources and samples.

    Accepts ``TimeWavefield`` objects or precomputed per-wavefield magnitude
    spectra (as stored by the dataset builder).
    """
    rows = []
    tg = None
    for w in wavefields:
        if isinstance(w, TimeWavefield):
            rows.append(magnitude_spectrum(w))
            tg = w.tg
        else:
            rows.append(np.asarray(w, dtype=np.float64))
    if not rows:
        raise ValueError("energy_spectrum needs at least one wavefield")
    mag = np.mean(rows, axis=0)
    tg = tg or TimeGrid(n_t=2 * (len(mag) - 1))
    freqs = np.arange(len(mag)) / (tg.n_t * tg.dt)
    return SpectrumProfile(freqs, mag)


def band_energy_fraction(profile: SpectrumProfile, lo: float, hi: float) -> float:
    if lo > hi:
        raise ValueError("band needs lo <= hi")
    total = profile.magnitude.sum()
    if total <= 0:
        raise ValueError("all-zero spectrum: band fraction undefined")
    sel = (profile.frequencies >= lo) & (profile.frequencies <= hi)
    return float(profile.magnitude[sel].sum() / total)


def reconstruct_time(fields: list[FreqWavefield], tg: TimeGrid | None = None,
                     grid: Grid | None = None) -> TimeWavefield:
    """Inverse transform using only the given bins (plus conjugate partners);
    the real part is kept."""
    if fields:
        tg = fields[0].tg
        grid = fields[0].grid
    if tg is None or grid is None:
        raise ValueError("empty field list needs an explicit time grid and grid")
    bins = [freq_bin(f.frequency, tg) for f in fields]
    if len(set(bins)) != len(bins):
        raise ValueError("duplicate frequencies in reconstruction")
    for f in fields[1:]:
        if f.source_index != fields[0].source_index or f.model_id != fields[0].model_id:
            raise ValueError("fields mix sources or velocity models")
    n = tg.n_t
    full = np.zeros((n, grid.n_z, grid.n_x), dtype=np.complex128)
    for k, f in zip(bins, fields):
        full[k] = f.u
        if 0 < k and 2 * k != n:
            full[n - k] = np.conj(f.u)
    p = np.fft.ifft(full, axis=0).real / tg.dt
    return TimeWavefield(p, grid, tg, None, meta={"bins": bins})


def bandpass(w: TimeWavefield, lo: float, hi: float) -> TimeWavefield:
    """Ideal brick-wall band-pass keeping bins with lo <= f <= hi."""
    spec = np.fft.rfft(w.p, axis=0)
    f = np.fft.rfftfreq(w.tg.n_t, w.tg.dt)
    spec[(f < lo) | (f > hi)] = 0
    return TimeWavefield(np.fft.irfft(spec, n=w.tg.n_t, axis=0), w.grid, w.tg, w.source)


def trace(w: TimeWavefield, x: float, z: float) -> np.ndarray:
    """Pressure time series at the node nearest ``(x, z)`` metres."""
    iz, ix = w.grid.snap(x, z)
    return w.p[:, iz, ix].copy()
