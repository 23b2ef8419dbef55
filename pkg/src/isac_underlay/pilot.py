"""2D delay-Doppler pilot: outer-product construction, shifts, inner products
and the DD phase-offset matrix.

Index order at every API is (doppler, delay); matrices are stored delay-major
(rows = delay l, columns = Doppler k).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FrameGeometry, Grid
from .sequences import ComponentSequence, cyclic_extend, cyclic_shift, m_sequence_for_length

PHASE_MODELS = ("symbol_cp", "reduced_cp")


@dataclass(frozen=True)
class Pilot2D:
    """``matrix[l, k] = b[l] * a[k]`` with ``a`` on the Doppler axis (length N)
    and ``b`` on the delay axis (length M)."""

    matrix: np.ndarray
    a: ComponentSequence
    b: ComponentSequence

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.matrix) ** 2))

    def as_grid(self) -> Grid:
        return Grid.dd(self.matrix)


@dataclass(frozen=True)
class PhaseMatrix:
    entries: np.ndarray
    hypothesis: tuple[int, int]
    geometry: FrameGeometry
    model: str = "symbol_cp"


def build_pilot(a: ComponentSequence, b: ComponentSequence, geom: FrameGeometry) -> Pilot2D:
    """Outer-product pilot; components shorter than the grid are cyclically extended."""
    if a.length != geom.N:
        a = cyclic_extend(a, geom.N)
    if b.length != geom.M:
        b = cyclic_extend(b, geom.M)
    matrix = np.outer(b.values, a.values).astype(np.complex128)
    matrix.setflags(write=False)
    return Pilot2D(matrix, a, b)


def default_pilot(geom: FrameGeometry) -> Pilot2D:
    """Pilot from m-sequences of two different primitive polynomials."""
    a = m_sequence_for_length(geom.N, which=0)
    b = m_sequence_for_length(geom.M, which=1)
    return build_pilot(a, b, geom)


def _samples(x) -> np.ndarray:
    if isinstance(x, Pilot2D):
        return x.matrix
    if isinstance(x, Grid):
        return x.samples
    return np.asarray(x)


def cyclic_shift_2d(p, doppler_shift: int, delay_shift: int) -> np.ndarray:
    """``out[l, k] = in[(l - delay_shift) mod M, (k - doppler_shift) mod N]``."""
    return np.roll(_samples(p), (int(delay_shift), int(doppler_shift)), axis=(0, 1))


def shifted_pilot(pilot: Pilot2D, doppler_shift: int, delay_shift: int) -> Pilot2D:
    """Shifted pilot built from shifted components (equals :func:`cyclic_shift_2d`)."""
    geom_like = FrameGeometry(pilot.shape[0], pilot.shape[1], cp_length=0)
    return build_pilot(
        cyclic_shift(pilot.a, doppler_shift), cyclic_shift(pilot.b, delay_shift), geom_like
    )


def inner_product_2d(A, B):
    """Normalized inner product ``(1/MN) sum conj(A) * B``.

    Conjugate-linear in ``A``. Leading axes broadcast, so stacks of grids can
    be correlated in one call.
    """
    A = _samples(A)
    B = _samples(B)
    if A.shape[-2:] != B.shape[-2:]:
        raise ValueError(f"dimension mismatch: {A.shape[-2:]} vs {B.shape[-2:]}")
    M, N = A.shape[-2:]
    out = np.sum(np.conj(A) * B, axis=(-2, -1)) / (M * N)
    return complex(out) if np.ndim(out) == 0 else out


def phase_matrix(
    hypothesis: tuple[int, int], geom: FrameGeometry, model: str = "symbol_cp"
) -> PhaseMatrix:
    """DD phase-offset matrix for a (doppler, delay) hypothesis.

    Every entry carries ``exp(2j*pi*(L_cp + l - l_d)*k_d / (N*(M + L_cp)))``.
    With ``model="symbol_cp"`` that is all: a per-symbol cyclic prefix longer
    than the delay keeps every wrapped sample inside its own symbol, which is
    what :func:`~isac_underlay.grid.ofdm_modulate` produces. ``model="reduced_cp"``
    additionally scales rows ``l < l_d`` by ``(N-1)/N * exp(-2j*pi*((k - k_d) mod N)/N)``,
    the approximation for frames that borrow wrapped samples from the previous
    symbol; it does not describe this library's transmitter.
    """
    k_d, l_d = (int(v) for v in hypothesis)
    M, N, L = geom.M, geom.N, geom.cp_length
    if not (0 <= k_d < N and 0 <= l_d < M):
        raise ValueError(f"hypothesis {hypothesis} outside [0, {N}) x [0, {M})")
    if model not in PHASE_MODELS:
        raise ValueError(f"unknown phase model {model!r}")
    l = np.arange(M)[:, None]
    k = np.arange(N)[None, :]
    entries = np.exp(2j * np.pi * (L + l - l_d) * k_d / (N * (M + L))) * np.ones((1, N))
    if model == "reduced_cp" and l_d > 0:
        wrap = (N - 1) / N * np.exp(-2j * np.pi * ((k - k_d) % N) / N)
        entries[:l_d, :] *= wrap
    entries.setflags(write=False)
    return PhaseMatrix(entries, (k_d, l_d), geom, model)
