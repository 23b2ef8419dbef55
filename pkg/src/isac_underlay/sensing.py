"""Sensing receiver: 2D correlation hypothesis scan, peak decision,
fractional-Doppler refinement and correlation diagnostics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .grid import FrameGeometry, Grid
from .pilot import Pilot2D, cyclic_shift_2d, default_pilot, inner_product_2d


@dataclass(frozen=True)
class DetectionConfig:
    """Hypothesis range and decision rule.

    ``threshold`` is relative: a peak must exceed ``threshold * median(map)``
    and also ``sidelobe_guard * max(map)``. The median term tracks the
    interference floor; the guard keeps pilot correlation sidelobes out when
    the map has no floor to speak of (noise- and data-free frames).
    """

    k_max: int
    l_max: int
    threshold: float = 8.0
    refine: bool = True
    refine_width: int = 3
    compensate_phase: bool = True
    sidelobe_guard: float = 0.3
    refine_delay: bool = False

    def validate(self, geom: FrameGeometry):
        if not 0 <= self.k_max < geom.N:
            raise ValueError(f"k_max={self.k_max} outside [0, {geom.N})")
        if not 0 <= self.l_max < min(geom.M, max(geom.cp_length, 1)):
            raise ValueError(f"l_max={self.l_max} must be below min(M, L_cp)")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if not 0 <= self.sidelobe_guard < 1:
            raise ValueError("sidelobe_guard must lie in [0, 1)")
        if self.refine_width < 1 or self.refine_width % 2 == 0:
            raise ValueError("refine_width must be a positive odd integer")


@dataclass(frozen=True)
class Detection:
    doppler: int
    delay: int
    metric: float
    doppler_hz: float
    delay_s: float


@dataclass
class SinrBreakdown:
    signal: complex
    pilot_interference: list
    data_interference: list
    noise_term: complex
    sinr_z: float


@dataclass
class SensingReport:
    detections: list
    refined: list
    correlation_map: np.ndarray
    doppler_bins: np.ndarray
    delay_bins: np.ndarray
    threshold_abs: float
    diagnostics: SinrBreakdown | None = None
    extras: dict = field(default_factory=dict)

    def map_csv(self) -> str:
        """Correlation map as ``k,l,vd`` CSV text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "l", "vd"])
        for i, k in enumerate(self.doppler_bins):
            for j, l in enumerate(self.delay_bins):
                w.writerow([int(k), int(l), repr(float(self.correlation_map[i, j]))])
        return buf.getvalue()


def correlation_map(
    R,
    pilot: Pilot2D,
    dopplers,
    delays,
    geom: FrameGeometry,
    compensate_phase: bool = True,
) -> np.ndarray:
    """|<P_det, R>| for every (doppler, delay) hypothesis, divided by the pilot power.

    Doppler hypotheses may be negative; the shift wraps modulo N and the phase
    compensation uses the signed value.
    """
    R = R.samples if isinstance(R, Grid) else np.asarray(R)
    if R.shape != geom.shape or pilot.shape != geom.shape:
        raise ValueError("received grid, pilot and geometry disagree in shape")
    vals = kernels.correlation_map(
        R,
        pilot.a.values,
        pilot.b.values,
        np.asarray(dopplers, dtype=np.int64),
        np.asarray(delays, dtype=np.int64),
        geom.cp_length,
        bool(compensate_phase),
    )
    return np.abs(vals) / pilot.power


def regional_maxima(values: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Boolean mask marking one cell of every regional maximum.

    A regional maximum is a connected plateau (8-neighbourhood, values equal
    within ``rtol * max``) with no strictly larger neighbour. Edges are not
    wrapped.
    """
    if values.size == 0:
        return np.zeros(values.shape, dtype=bool)
    scale = float(np.max(values)) * rtol
    if scale <= 0:
        return np.zeros(values.shape, dtype=bool)
    q = np.round(values / scale)
    neigh = ndimage.maximum_filter(q, size=3, mode="constant", cval=-np.inf)
    invalid = q < neigh
    padded_q = np.pad(q, 1, constant_values=np.nan)
    shifts = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    rows, cols = q.shape
    while True:
        padded_bad = np.pad(invalid, 1, constant_values=False)
        spread = np.zeros_like(invalid)
        for di, dj in shifts:
            nq = padded_q[1 + di : 1 + di + rows, 1 + dj : 1 + dj + cols]
            nb = padded_bad[1 + di : 1 + di + rows, 1 + dj : 1 + dj + cols]
            spread |= nb & (nq == q)
        grown = invalid | spread
        if np.array_equal(grown, invalid):
            break
        invalid = grown
    peaks = ~invalid
    labels, count = ndimage.label(peaks, structure=np.ones((3, 3)))
    out = np.zeros(values.shape, dtype=bool)
    if count:
        firsts = ndimage.minimum_position(np.arange(values.size).reshape(values.shape), labels,
                                          range(1, count + 1))
        for pos in firsts:
            out[pos] = True
    return out


def refine_doppler(corr_map: np.ndarray, doppler_bins, peak: tuple[int, int], width: int = 3) -> float:
    """Weighted centroid of the Doppler window around a peak.

    ``peak`` holds (row, column) indices into ``corr_map``. Window magnitudes
    are scaled so their maximum is 1, weighted by ``exp`` and normalized to
    sum to one. Rows outside the map wrap cyclically in the Doppler bins.
    """
    if width < 1 or width % 2 == 0:
        raise ValueError("width must be a positive odd integer")
    row, col = peak
    half = (width - 1) // 2
    bins = np.asarray(doppler_bins)
    centre = float(bins[row])
    offsets = np.arange(-half, half + 1)
    idx = (row + offsets) % corr_map.shape[0]
    mags = corr_map[idx, col].astype(np.float64)
    top = mags.max()
    if top <= 0:
        return centre
    w = np.exp(mags / top)
    w /= w.sum()
    return float(np.dot(w, centre + offsets))


def refine_delay(corr_map: np.ndarray, delay_bins, peak: tuple[int, int], width: int = 3) -> float:
    """Delay counterpart of :func:`refine_doppler`; the window is clipped at the map edges."""
    if width < 1 or width % 2 == 0:
        raise ValueError("width must be a positive odd integer")
    row, col = peak
    half = (width - 1) // 2
    lo, hi = max(col - half, 0), min(col + half + 1, corr_map.shape[1])
    mags = corr_map[row, lo:hi].astype(np.float64)
    bins = np.asarray(delay_bins, dtype=np.float64)[lo:hi]
    top = mags.max()
    if top <= 0:
        return float(np.asarray(delay_bins)[col])
    w = np.exp(mags / top)
    return float(np.dot(w, bins) / w.sum())


def detect(R, pilot: Pilot2D, cfg: DetectionConfig, geom: FrameGeometry) -> SensingReport:
    """Scan all (k <= k_max, l <= l_max) hypotheses and keep thresholded regional maxima.

    ``refined`` holds ``(doppler, delay)`` pairs: fractional Doppler, and a
    fractional delay only when ``cfg.refine_delay`` is set.
    """
    cfg.validate(geom)
    half = (cfg.refine_width - 1) // 2
    if cfg.k_max + 1 + 2 * half >= geom.N:
        # the whole cyclic Doppler axis; refinement windows wrap around it
        dopplers = np.arange(geom.N)
        guard = 0
    else:
        dopplers = np.arange(-half, cfg.k_max + half + 1)
        guard = half
    delays = np.arange(cfg.l_max + 1)
    full = correlation_map(R, pilot, dopplers, delays, geom, cfg.compensate_phase)
    core = slice(guard, guard + cfg.k_max + 1)
    core_map = full[core]
    median = float(np.median(core_map))
    threshold_abs = max(cfg.threshold * median, cfg.sidelobe_guard * float(np.max(core_map)))
    peaks = regional_maxima(full)[core] & (core_map > threshold_abs)
    detections, refined = [], []
    for i, j in zip(*np.nonzero(peaks)):
        k, l = int(dopplers[guard + i]), int(delays[j])
        det = Detection(
            doppler=k,
            delay=l,
            metric=float(core_map[i, j]),
            doppler_hz=float(geom.doppler_taps_to_hz(k)),
            delay_s=l / geom.sample_rate,
        )
        detections.append(det)
        if cfg.refine:
            nu = refine_doppler(full, dopplers, (guard + i, j), cfg.refine_width)
            tau = refine_delay(full, delays, (guard + i, j), cfg.refine_width) if cfg.refine_delay else l
            refined.append((nu, tau))
    return SensingReport(
        detections=detections,
        refined=refined,
        correlation_map=core_map,
        doppler_bins=dopplers[core],
        delay_bins=delays,
        threshold_abs=threshold_abs,
        extras={"full_map": full, "full_doppler_bins": dopplers},
    )


def sinr_breakdown(
    pilot: Pilot2D,
    matched: tuple[int, int],
    paths,
    data_dd=None,
    noise_dd=None,
    pilot_scale: float = 1.0,
) -> SinrBreakdown:
    """Split the matched correlator output into signal, interference and noise.

    ``paths`` are (gain, doppler, delay) triples with the matched path first.
    Data and noise are DD grids; each path shifts the data by its own
    (doppler, delay). All inner products are normalized by MN, so the
    signal term is ``pilot_scale * h_0``.
    """
    k0, l0 = matched
    ref = cyclic_shift_2d(pilot, k0, l0)
    paths = list(paths)
    h0 = complex(paths[0][0])
    signal = pilot_scale * h0
    theta = [inner_product_2d(ref, cyclic_shift_2d(pilot, int(k), int(l))) for _, k, l in paths[1:]]
    rho = []
    if data_dd is not None:
        data = data_dd.samples if isinstance(data_dd, Grid) else np.asarray(data_dd)
        rho = [inner_product_2d(ref, cyclic_shift_2d(data, int(k), int(l))) for _, k, l in paths]
    if noise_dd is not None:
        noise = noise_dd.samples if isinstance(noise_dd, Grid) else np.asarray(noise_dd)
        varsigma = inner_product_2d(ref, noise)
    else:
        varsigma = 0j
    denom = pilot_scale * sum(h * t for (h, _, _), t in zip(paths[1:], theta))
    denom += sum(h * r for (h, _, _), r in zip(paths, rho))
    denom += varsigma
    sinr = math.inf if abs(denom) == 0 else abs(signal / denom)
    return SinrBreakdown(signal, theta, rho, varsigma, sinr)


def correlation_ccdf(pilot_size: int, source: str, trials: int, seed, pilot: Pilot2D | None = None):
    """Monte Carlo CCDF of ``|<P, S>|`` for random 16QAM or Gaussian grids S.

    Returns ``(values, ccdf)`` with values sorted ascending and
    ``ccdf[i] = P(X > values[i])``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if source not in ("qam", "noise"):
        raise ValueError("source must be 'qam' or 'noise'")
    geom = FrameGeometry(pilot_size, pilot_size, cp_length=0)
    pilot = default_pilot(geom) if pilot is None else pilot
    rng = np.random.default_rng(seed)
    shape = (pilot_size, pilot_size)
    vals = np.empty(trials)
    for t in range(trials):
        if source == "qam":
            levels = np.array([-3.0, -1.0, 1.0, 3.0]) / math.sqrt(10)
            s = rng.choice(levels, shape) + 1j * rng.choice(levels, shape)
        else:
            s = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
        vals[t] = abs(inner_product_2d(pilot.matrix, s))
    vals.sort()
    ccdf = 1.0 - np.arange(1, trials + 1) / trials
    return vals, ccdf
