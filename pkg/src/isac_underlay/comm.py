"""Communication receiver: 16QAM, reference-signal layout, equivalent-RS
least-squares estimation, pilot cancellation and one-tap MMSE equalization."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .grid import FrameGeometry, Grid

log = logging.getLogger(__name__)

_GRAY_LEVELS = np.array([-3.0, -1.0, 3.0, 1.0])  # index = 2-bit Gray code (b0 b1)
QAM16_SCALE = 1.0 / math.sqrt(10.0)


class EstimateSource(enum.Enum):
    PERFECT = "perfect"
    EQUIVALENT_RS = "equivalent_rs"
    PILOT_IGNORANT_RS = "pilot_ignorant_rs"


@dataclass(frozen=True)
class RsMask:
    """Reference-signal positions (``mask``) and their unit-modulus values."""

    mask: np.ndarray
    rs_values: np.ndarray
    subcarrier_step: int
    rs_symbols: tuple[int, ...]

    @property
    def count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class ChannelEstimate:
    h_tf: np.ndarray
    source: EstimateSource
    excluded: int = 0


def qam16_modulate(bits) -> np.ndarray:
    """Gray-mapped unit-energy 16QAM; bits (b0 b1) pick I, (b2 b3) pick Q."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if bits.size % 4:
        raise ValueError("bit count must be a multiple of 4")
    b = bits.reshape(-1, 4)
    i = _GRAY_LEVELS[2 * b[:, 0] + b[:, 1]]
    q = _GRAY_LEVELS[2 * b[:, 2] + b[:, 3]]
    return (i + 1j * q) * QAM16_SCALE


def _level_bits(x):
    # nearest of {-3,-1,1,3} then back to its Gray pair
    lv = np.clip(np.round((x / QAM16_SCALE + 3.0) / 2.0), 0, 3).astype(np.int64)
    first = (lv >= 2).astype(np.uint8)
    second = ((lv == 1) | (lv == 2)).astype(np.uint8)
    return first, second


def qam16_demodulate(symbols) -> np.ndarray:
    """Hard-decision nearest-neighbour demapping."""
    s = np.asarray(symbols).reshape(-1)
    i0, i1 = _level_bits(s.real)
    q0, q1 = _level_bits(s.imag)
    return np.stack([i0, i1, q0, q1], axis=1).reshape(-1)


def make_rs_mask(geom: FrameGeometry, seed=0, subcarrier_step: int = 4, rs_symbols=None) -> RsMask:
    """Comb RS on every ``subcarrier_step``-th subcarrier of symbols 0 and N/2."""
    if rs_symbols is None:
        rs_symbols = (0, geom.N // 2) if geom.N > 1 else (0,)
    rs_symbols = tuple(sorted(set(int(n) for n in rs_symbols)))
    mask = np.zeros(geom.shape, dtype=bool)
    mask[::subcarrier_step, list(rs_symbols)] = True
    rng = np.random.default_rng(seed)
    values = np.zeros(geom.shape, dtype=np.complex128)
    values[mask] = np.exp(2j * np.pi * rng.uniform(size=int(mask.sum())))
    mask.setflags(write=False)
    values.setflags(write=False)
    return RsMask(mask, values, subcarrier_step, rs_symbols)


def build_data_grid(rs: RsMask, bits) -> np.ndarray:
    """Place 16QAM symbols on non-RS cells (column-major order) and RS values on the mask."""
    grid = np.array(rs.rs_values, dtype=np.complex128)
    data_cells = ~rs.mask.T  # column-major fill: symbol by symbol
    syms = qam16_modulate(bits)
    if syms.size != int(data_cells.sum()):
        raise ValueError(f"need {4 * int(data_cells.sum())} bits, got {4 * syms.size}")
    gt = grid.T.copy()
    gt[data_cells] = syms
    return gt.T.copy()


def extract_data(grid: np.ndarray, rs: RsMask) -> np.ndarray:
    """Inverse of :func:`build_data_grid` placement."""
    return np.asarray(grid).T[~rs.mask.T]


def build_equivalent_rs(rs: RsMask, pilot_tf, min_magnitude: float = 1e-3):
    """Equivalent RS at mask cells: RS value plus the co-located (scaled) TF pilot.

    Returns ``(s_eff, usable)``, both full M x N; cells whose equivalent RS
    magnitude falls below ``min_magnitude`` are marked unusable so they are
    interpolated rather than divided by.
    """
    pilot = pilot_tf.samples if isinstance(pilot_tf, Grid) else np.asarray(pilot_tf)
    s_eff = np.where(rs.mask, rs.rs_values + pilot, 0)
    usable = rs.mask & (np.abs(s_eff) >= min_magnitude)
    dropped = int(rs.mask.sum() - usable.sum())
    if dropped:
        log.debug("excluded %d RS cells with |S_eff| < %g", dropped, min_magnitude)
    return s_eff, usable


def _interp_matrix(x_new, x) -> np.ndarray:
    """Matrix ``A`` with ``A @ y == np.interp(x_new, x, y)`` (edge replication)."""
    eye = np.eye(len(x))
    return np.stack([np.interp(x_new, x, e) for e in eye], axis=1)


def interpolate_lattice(values: np.ndarray, usable: np.ndarray, rs_symbols) -> np.ndarray:
    """Bilinear fill from usable RS cells: along frequency within each RS
    symbol, then along time across symbols. Edges are replicated."""
    M, N = values.shape
    m_axis = np.arange(M)
    times, cols = [], []
    for n in rs_symbols:
        rows = np.nonzero(usable[:, n])[0]
        if rows.size:
            times.append(n)
            cols.append(_interp_matrix(m_axis, rows) @ values[rows, n])
    if not cols:
        raise ValueError("no usable reference cells")
    stack = np.stack(cols, axis=1)  # M x len(times)
    return stack @ _interp_matrix(np.arange(N), np.array(times, dtype=np.float64)).T


def estimate_channel(
    Y,
    rs: RsMask,
    pilot_tf=None,
    mode: EstimateSource = EstimateSource.EQUIVALENT_RS,
    min_magnitude: float = 1e-3,
) -> ChannelEstimate:
    """LS estimate at RS cells followed by bilinear interpolation.

    ``EQUIVALENT_RS`` divides by RS + pilot; ``PILOT_IGNORANT_RS`` divides by
    the RS alone, as a receiver unaware of the underlaid pilot would.
    """
    Y = Y.samples if isinstance(Y, Grid) else np.asarray(Y)
    if mode is EstimateSource.EQUIVALENT_RS:
        pilot = np.zeros_like(Y) if pilot_tf is None else pilot_tf
        s_eff, usable = build_equivalent_rs(rs, pilot, min_magnitude)
    elif mode is EstimateSource.PILOT_IGNORANT_RS:
        s_eff, usable = build_equivalent_rs(rs, np.zeros_like(Y), min_magnitude)
    else:
        raise ValueError(f"cannot estimate in mode {mode}")
    ls = np.zeros_like(Y)
    ls[usable] = Y[usable] / s_eff[usable]
    h = interpolate_lattice(ls, usable, rs.rs_symbols)
    return ChannelEstimate(h, mode, excluded=int(rs.mask.sum() - usable.sum()))


def cancel_and_equalize(Y, h_tf, pilot_tf, sigma2: float) -> np.ndarray:
    """``conj(H) * (Y - pilot*H) / (|H|^2 + sigma2)``.

    With ``sigma2 == 0`` cells where ``H == 0`` are erased (set to 0).
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    Y = Y.samples if isinstance(Y, Grid) else np.asarray(Y)
    H = h_tf.h_tf if isinstance(h_tf, ChannelEstimate) else np.asarray(h_tf)
    pilot = 0 if pilot_tf is None else (pilot_tf.samples if isinstance(pilot_tf, Grid) else pilot_tf)
    num = np.conj(H) * (Y - pilot * H)
    den = np.abs(H) ** 2 + sigma2
    out = np.zeros_like(num)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    if not ok.all():
        log.debug("erased %d cells with zero channel", int((~ok).sum()))
    return out


def ber(bits_tx, bits_rx) -> float:
    a = np.asarray(bits_tx).reshape(-1)
    b = np.asarray(bits_rx).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty bit vectors")
    return float(np.count_nonzero(a != b)) / a.size


def nmse_linear(h_est, h_true) -> float:
    h_est = h_est.h_tf if isinstance(h_est, ChannelEstimate) else np.asarray(h_est)
    h_true = np.asarray(h_true)
    if h_est.shape != h_true.shape:
        raise ValueError("shape mismatch")
    return float(np.sum(np.abs(h_est - h_true) ** 2) / np.sum(np.abs(h_true) ** 2))


def nmse_db(h_est, h_true) -> float:
    """``10 log10(||H_est - H||^2 / ||H||^2)``; ``-inf`` for an exact estimate."""
    r = nmse_linear(h_est, h_true)
    return -math.inf if r == 0 else 10.0 * math.log10(r)
