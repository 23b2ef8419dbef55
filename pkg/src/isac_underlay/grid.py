"""Frame geometry, DD/TF transforms and CP-OFDM (de)modulation.

Grids are stored with rows indexing delay (DD) or subcarrier (TF) and
columns indexing Doppler (DD) or OFDM symbol (TF). All DFTs are unitary.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Domain(enum.Enum):
    DELAY_DOPPLER = "dd"
    TIME_FREQUENCY = "tf"
    TIME_DELAY = "td"


@dataclass(frozen=True)
class FrameGeometry:
    """Dimensions and numerology of one M x N frame.

    ``num_delay_taps`` (M) is the subcarrier count and ``num_doppler_taps`` (N)
    the OFDM symbol count. ``cp_length`` defaults to ``M // 8``.
    """

    num_delay_taps: int
    num_doppler_taps: int
    subcarrier_spacing: float = 60e3
    cp_length: int | None = None

    def __post_init__(self):
        if self.num_delay_taps < 1 or self.num_doppler_taps < 1:
            raise ValueError("grid dimensions must be positive")
        if self.subcarrier_spacing <= 0:
            raise ValueError("subcarrier spacing must be positive")
        if self.cp_length is None:
            object.__setattr__(self, "cp_length", self.num_delay_taps // 8)
        if not 0 <= self.cp_length < self.num_delay_taps:
            raise ValueError(
                f"cp_length must lie in [0, M); got {self.cp_length} for M={self.num_delay_taps}"
            )

    @property
    def M(self) -> int:
        return self.num_delay_taps

    @property
    def N(self) -> int:
        return self.num_doppler_taps

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_delay_taps, self.num_doppler_taps)

    @property
    def symbol_time(self) -> float:
        """Useful symbol duration T = 1/df (CP excluded)."""
        return 1.0 / self.subcarrier_spacing

    @property
    def sample_rate(self) -> float:
        return self.num_delay_taps * self.subcarrier_spacing

    @property
    def symbol_samples(self) -> int:
        return self.num_delay_taps + self.cp_length

    @property
    def frame_samples(self) -> int:
        return self.num_doppler_taps * self.symbol_samples

    @property
    def delay_resolution(self) -> float:
        return self.symbol_time / self.num_delay_taps

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.num_doppler_taps * self.symbol_time)

    @property
    def doppler_bin_hz(self) -> float:
        """Width of one Doppler tap over the CP-inclusive frame duration."""
        return self.sample_rate / self.frame_samples

    def doppler_hz_to_taps(self, doppler_hz):
        return np.asarray(doppler_hz) / self.doppler_bin_hz

    def doppler_taps_to_hz(self, taps):
        return np.asarray(taps) * self.doppler_bin_hz

    def delay_s_to_taps(self, delay_s):
        return np.asarray(delay_s) * self.sample_rate


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=np.complex128)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    """An M x N complex sample matrix tagged with its domain."""

    samples: np.ndarray
    domain: Domain

    def __post_init__(self):
        samples = _frozen(self.samples)
        if samples.ndim != 2:
            raise ValueError("grid samples must be a 2D matrix")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def dd(cls, samples) -> "Grid":
        return cls(samples, Domain.DELAY_DOPPLER)

    @classmethod
    def tf(cls, samples) -> "Grid":
        return cls(samples, Domain.TIME_FREQUENCY)

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape

    def power(self) -> float:
        """Average power per element."""
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass(frozen=True)
class TimeSignal:
    """CP-OFDM time samples of a whole frame, length N * (M + L_cp)."""

    samples: np.ndarray
    geometry: FrameGeometry

    def __post_init__(self):
        samples = _frozen(self.samples)
        if samples.shape != (self.geometry.frame_samples,):
            raise ValueError(
                f"time signal must have {self.geometry.frame_samples} samples, got {samples.shape}"
            )
        object.__setattr__(self, "samples", samples)


def _check(grid: Grid, domain: Domain, geom: FrameGeometry):
    if not isinstance(grid, Grid):
        raise TypeError(f"expected a Grid, got {type(grid).__name__}")
    if grid.domain is not domain:
        raise ValueError(f"expected a {domain.name} grid, got {grid.domain.name}")
    if grid.shape != geom.shape:
        raise ValueError(f"grid shape {grid.shape} does not match geometry {geom.shape}")


def isfft(dd: Grid, geom: FrameGeometry) -> Grid:
    """DD -> TF: ``F_M @ dd @ F_N^H`` with unitary DFT matrices."""
    _check(dd, Domain.DELAY_DOPPLER, geom)
    tf = np.fft.ifft(np.fft.fft(dd.samples, axis=0, norm="ortho"), axis=1, norm="ortho")
    return Grid.tf(tf)


def sfft(tf: Grid, geom: FrameGeometry) -> Grid:
    """TF -> DD, the exact inverse of :func:`isfft`."""
    _check(tf, Domain.TIME_FREQUENCY, geom)
    dd = np.fft.fft(np.fft.ifft(tf.samples, axis=0, norm="ortho"), axis=1, norm="ortho")
    return Grid.dd(dd)


def superimpose(pilot_tf: Grid, data_tf: Grid, power_ratio: float) -> Grid:
    """``sqrt(power_ratio) * pilot_tf + data_tf``."""
    if power_ratio < 0:
        raise ValueError("power_ratio must be non-negative")
    for g in (pilot_tf, data_tf):
        if g.domain is not Domain.TIME_FREQUENCY:
            raise ValueError("superposition happens on time-frequency grids")
    if pilot_tf.shape != data_tf.shape:
        raise ValueError("pilot and data grids differ in shape")
    return Grid.tf(np.sqrt(power_ratio) * pilot_tf.samples + data_tf.samples)


def ofdm_modulate(tf: Grid, geom: FrameGeometry) -> TimeSignal:
    """Per-symbol M-point IDFT, prepend the last L_cp samples, concatenate."""
    _check(tf, Domain.TIME_FREQUENCY, geom)
    symbols = np.fft.ifft(tf.samples, axis=0, norm="ortho")  # M x N, time along rows
    L = geom.cp_length
    with_cp = np.concatenate([symbols[geom.M - L :, :], symbols], axis=0) if L else symbols
    return TimeSignal(with_cp.T.reshape(-1), geom)


def ofdm_demodulate(sig: TimeSignal, geom: FrameGeometry) -> Grid:
    """Drop each symbol's CP and apply the unitary M-point DFT."""
    samples = np.asarray(sig.samples if isinstance(sig, TimeSignal) else sig)
    if samples.shape != (geom.frame_samples,):
        raise ValueError(f"expected {geom.frame_samples} samples, got {samples.shape}")
    blocks = samples.reshape(geom.N, geom.symbol_samples)[:, geom.cp_length :]
    return Grid.tf(np.fft.fft(blocks.T, axis=0, norm="ortho"))
