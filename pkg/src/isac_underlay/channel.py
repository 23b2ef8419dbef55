"""Discrete-time delay-Doppler multipath channels and AWGN.

Doppler is expressed in taps of the CP-inclusive frame: a path with Doppler
``k`` taps rotates sample ``n`` by ``exp(2j*pi*k*n / (N*(M + L_cp)))``, i.e.
``k = f_d * N*(M + L_cp) / (M*df)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import FrameGeometry, TimeSignal

SPEED_OF_LIGHT = 299_792_458.0

# 3GPP TS 36.101 extended vehicular A profile
EVA_DELAYS_NS = (0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0)
EVA_POWERS_DB = (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9)


@dataclass(frozen=True)
class ChannelPath:
    gain: complex
    delay: float
    doppler: float


@dataclass(frozen=True)
class ChannelRealization:
    paths: tuple[ChannelPath, ...]
    geometry: FrameGeometry
    rng_seed: int | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=np.complex128)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths], dtype=np.float64)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler for p in self.paths], dtype=np.float64)

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.gains) ** 2))


def doppler_shift_hz(velocity_kmh: float, carrier_hz: float) -> float:
    """Maximum Doppler ``v * f_c / c`` for a speed in km/h."""
    return velocity_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT


def _integer_delays(paths, geom: FrameGeometry) -> np.ndarray:
    delays = np.array([p.delay for p in paths], dtype=np.float64)
    if np.any(delays != np.round(delays)):
        raise ValueError("fractional delays are not supported by the time-domain channel")
    if np.any(delays < 0):
        raise ValueError("delays must be non-negative")
    if delays.size and delays.max() >= max(geom.cp_length, 1):
        raise ValueError(
            f"path delay {int(delays.max())} taps not covered by cp_length={geom.cp_length}"
        )
    return delays.astype(np.int64)


def apply_channel(sig: TimeSignal, ch: ChannelRealization) -> TimeSignal:
    """Pass a frame through the multipath channel.

    ``y[n] = sum_i h_i x[n - l_i] exp(2j*pi*k_i*(n - l_i) / (N*(M + L_cp)))`` with
    zero input before the frame start. Real-valued (fractional) Doppler is
    allowed; delays must be integers below the CP length.
    """
    geom = sig.geometry
    delays = _integer_delays(ch.paths, geom)
    if not ch.paths:
        return TimeSignal(np.zeros_like(sig.samples), geom)
    y = kernels.apply_paths(
        sig.samples, ch.gains, delays, ch.dopplers, float(geom.frame_samples)
    )
    return TimeSignal(y, geom)


def fractional_doppler_channel(sig: TimeSignal, paths) -> TimeSignal:
    """:func:`apply_channel` for a bare list of paths with real-valued Doppler."""
    return apply_channel(sig, ChannelRealization(tuple(paths), sig.geometry))


def sample_eva_channel(
    geom: FrameGeometry,
    seed,
    velocity_kmh: float = 30.0,
    carrier_hz: float = 6e9,
    delays_ns=EVA_DELAYS_NS,
    powers_db=EVA_POWERS_DB,
) -> ChannelRealization:
    """Rayleigh tapped-delay-line draw of a power delay profile.

    Delays are rounded to the nearest sample at ``M * df``. Gains are complex
    Gaussian scaled to the profile, then normalized to unit total power. Each
    path gets a Doppler uniform in ``[-f_max, f_max]``.
    """
    if len(delays_ns) != len(powers_db):
        raise ValueError("delay and power profiles differ in length")
    rng = np.random.default_rng(seed)
    taps = np.round(np.asarray(delays_ns) * 1e-9 * geom.sample_rate)
    power = 10.0 ** (np.asarray(powers_db) / 10.0)
    gains = (rng.standard_normal(taps.size) + 1j * rng.standard_normal(taps.size)) / math.sqrt(2)
    gains *= np.sqrt(power / power.sum())
    gains /= np.sqrt(np.sum(np.abs(gains) ** 2))
    f_max = doppler_shift_hz(velocity_kmh, carrier_hz)
    dopplers = geom.doppler_hz_to_taps(rng.uniform(-f_max, f_max, taps.size))
    paths = tuple(
        ChannelPath(complex(h), float(l), float(k)) for h, l, k in zip(gains, taps, dopplers)
    )
    return ChannelRealization(paths, geom, rng_seed=_seed_int(seed))


def sample_sensing_targets(
    geom: FrameGeometry,
    seed,
    count: int = 3,
    velocity_kmh: float = 500.0,
    carrier_hz: float = 6e9,
    max_delay: int | None = None,
    integer_doppler: bool = False,
) -> ChannelRealization:
    """Equal-power point targets.

    Doppler ~ U(0, f_max) with f_max from ``velocity_kmh``; distinct integer
    delays drawn from ``[0, max_delay)`` (default ``L_cp``); unit total power with
    independent uniform phases.
    """
    if count < 1:
        raise ValueError("need at least one target")
    max_delay = geom.cp_length if max_delay is None else max_delay
    if count > max_delay:
        raise ValueError(f"cannot place {count} targets on {max_delay} distinct delays")
    rng = np.random.default_rng(seed)
    f_max = doppler_shift_hz(velocity_kmh, carrier_hz)
    dopplers = geom.doppler_hz_to_taps(rng.uniform(0.0, f_max, count))
    if integer_doppler:
        dopplers = np.round(dopplers)
    delays = rng.choice(max_delay, size=count, replace=False)
    phases = rng.uniform(0.0, 2 * np.pi, count)
    gains = np.exp(1j * phases) / math.sqrt(count)
    paths = tuple(
        ChannelPath(complex(h), float(l), float(k)) for h, l, k in zip(gains, delays, dopplers)
    )
    return ChannelRealization(paths, geom, rng_seed=_seed_int(seed))


def add_awgn(sig: TimeSignal, snr_db: float, signal_power_ref: float = 1.0, seed=None):
    """Add circular complex Gaussian noise.

    The noise variance per complex sample is ``signal_power_ref / 10**(snr_db/10)``.
    ``snr_db=inf`` adds nothing. Returns ``(noisy_signal, noise_variance)``.
    """
    if signal_power_ref <= 0:
        raise ValueError("signal_power_ref must be positive")
    if math.isinf(snr_db) and snr_db > 0:
        return sig, 0.0
    sigma2 = signal_power_ref / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    n = sig.samples.size
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(sigma2 / 2)
    return TimeSignal(sig.samples + noise, sig.geometry), sigma2


def true_tf_channel(ch: ChannelRealization) -> np.ndarray:
    """One-tap TF channel: the diagonal of ``F_M H_t F_M^H`` for each symbol.

    Inter-carrier leakage from Doppler is not part of this; it is what a
    perfect-CSI one-tap receiver uses.
    """
    geom = ch.geometry
    M, N, L = geom.M, geom.N, geom.cp_length
    denom = geom.frame_samples
    m = np.arange(M)[:, None]
    t = np.arange(M)
    starts = np.arange(N) * geom.symbol_samples + L
    H = np.zeros((M, N), dtype=np.complex128)
    for p in ch.paths:
        # mean Doppler rotation over the useful part of each symbol
        rot = np.exp(2j * np.pi * p.doppler * (starts[:, None] + t[None, :] - p.delay) / denom)
        H += p.gain * np.exp(-2j * np.pi * m * p.delay / M) * rot.mean(axis=1)[None, :]
    return H


def _seed_int(seed):
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return None
