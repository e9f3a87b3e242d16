"""Coherent noise on the gate drive.

Shot-to-shot channels draw one number per realization; spectral channels
(relative intensity noise, laser frequency noise) are turned into time
traces as sums of sinusoids with random phases:

    x(t) = sum_k sqrt(2 S(f_k) df_k) cos(2 pi f_k t + phi_k)

so the trace variance equals the integrated one-sided PSD.  Frequencies are
in MHz (cycles per microsecond).  Without a measured spectrum a flat PSD
over ``band`` with the configured rms is used.

Which channels act per atom: beam sampling, Doppler and the DC field offset
are drawn independently for each atom; the rest are common to both.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields, replace

import numpy as np

CHANNELS = (
    "ac_intensity",
    "dc_intensity",
    "beam_pointing",
    "beam_sampling",
    "ac_phase",
    "doppler",
    "dc_field",
)
TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray  # MHz
    psd: np.ndarray  # per MHz

    @classmethod
    def flat(cls, rms: float, band=(0.01, 10.0), n_tones: int = 200) -> "Spectrum":
        f = np.linspace(band[0], band[1], n_tones)
        return cls(f, np.full(n_tones, rms**2 / (band[1] - band[0])))

    def tone_amplitudes(self) -> np.ndarray:
        df = np.gradient(self.freqs) if self.freqs.size > 1 else np.ones(1)
        return np.sqrt(2 * self.psd * np.abs(df))

    def rms(self) -> float:
        return float(np.sqrt(0.5 * np.sum(self.tone_amplitudes() ** 2)))

    def trace(self, times, rng: np.random.Generator) -> np.ndarray:
        amp = self.tone_amplitudes()
        ph = rng.uniform(0, TWO_PI, size=amp.size)
        return np.cos(TWO_PI * np.outer(times, self.freqs) + ph) @ amp


def read_spectrum(path) -> Spectrum:
    """CSV with columns frequency (MHz), one-sided PSD; a header row is allowed."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                continue
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or len(arr) < 1:
        raise ValueError(f"no spectrum rows in {path}")
    order = np.argsort(arr[:, 0])
    return Spectrum(arr[order, 0], arr[order, 1])


@dataclass(frozen=True)
class NoiseModel:
    """Per-channel parameters.

    Intensity-type values are fractional Omega deviations; detuning-type
    values are rad/us.  ``dc_field`` is the (low, high) interval of a
    uniform detuning offset.  Spectra, when given as CSV paths, override the
    flat placeholder of the matching rms parameter.
    """

    ac_intensity: float = 0.0
    dc_intensity: float = 0.0
    beam_pointing: float = 0.0
    beam_sampling: float = 0.0
    ac_phase: float = 0.0
    doppler: float = 0.0
    dc_field: tuple = (0.0, 0.0)
    rin_spectrum: str | None = None
    frequency_spectrum: str | None = None
    band: tuple = (0.01, 10.0)
    n_tones: int = 200
    n_realizations: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("ac_intensity", "dc_intensity", "beam_pointing", "beam_sampling", "ac_phase", "doppler"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        lo, hi = self.dc_field
        if hi < lo:
            raise ValueError("dc_field interval is reversed")
        if self.n_realizations < 1:
            raise ValueError("need at least one realization")

    @classmethod
    def reference_scale(cls, **overrides) -> "NoiseModel":
        """Placeholder magnitudes giving a few 1e-3 total gate error."""
        base = dict(
            ac_intensity=0.004,
            dc_intensity=0.002,
            beam_pointing=0.002,
            beam_sampling=0.002,
            ac_phase=TWO_PI * 0.006,
            doppler=TWO_PI * 0.005,
            dc_field=(0.0, TWO_PI * 0.01),
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_mapping(cls, data: dict) -> "NoiseModel":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown noise keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("dc_field", "band"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def quiet(self) -> "NoiseModel":
        return replace(
            self, ac_intensity=0.0, dc_intensity=0.0, beam_pointing=0.0, beam_sampling=0.0,
            ac_phase=0.0, doppler=0.0, dc_field=(0.0, 0.0), rin_spectrum=None, frequency_spectrum=None,
        )

    def only(self, channel: str) -> "NoiseModel":
        if channel not in CHANNELS:
            raise KeyError(channel)
        keep = {channel: getattr(self, channel)}
        if channel == "ac_intensity":
            keep["rin_spectrum"] = self.rin_spectrum
        if channel == "ac_phase":
            keep["frequency_spectrum"] = self.frequency_spectrum
        return replace(self.quiet(), **keep)

    def is_quiet(self) -> bool:
        return self == self.quiet()

    def _rin(self) -> Spectrum | None:
        if self.rin_spectrum:
            return read_spectrum(self.rin_spectrum)
        if self.ac_intensity > 0:
            return Spectrum.flat(self.ac_intensity, self.band, self.n_tones)
        return None

    def _freq(self) -> Spectrum | None:
        # frequency-noise PSD in MHz^2/MHz; the trace is converted to rad/us
        if self.frequency_spectrum:
            return read_spectrum(self.frequency_spectrum)
        if self.ac_phase > 0:
            return Spectrum.flat(self.ac_phase / TWO_PI, self.band, self.n_tones)
        return None

    def sample(self, times, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Omega scale and detuning, each of shape (len(times), 2), for
        realization ``index``."""
        times = np.asarray(times, dtype=float)
        rng = np.random.default_rng([self.seed, index])
        n = times.size
        scale = np.ones((n, 2))
        common = (1 + self.dc_intensity * rng.normal()) * (1 + self.beam_pointing * rng.normal())
        scale *= common
        scale *= 1 + self.beam_sampling * rng.normal(size=2)
        rin = self._rin()
        if rin is not None:
            scale *= (1 + rin.trace(times, rng))[:, None]
        det = np.zeros((n, 2))
        det += self.doppler * rng.normal(size=2)
        lo, hi = self.dc_field
        if hi > lo:
            det += rng.uniform(lo, hi, size=2)
        freq = self._freq()
        if freq is not None:
            det += (TWO_PI * freq.trace(times, rng))[:, None]
        return scale, det

    def sample_batch(self, times, indices) -> tuple[np.ndarray, np.ndarray]:
        pairs = [self.sample(times, int(i)) for i in indices]
        return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])
