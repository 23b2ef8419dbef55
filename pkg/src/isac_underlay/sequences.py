"""Component sequences: LFSR m-sequences and periodic correlation.

LFSR convention (Fibonacci form): the register holds the next ``degree``
output bits with the oldest in the LSB. Each step outputs the LSB, computes
the feedback as the parity of ``register & (poly without its x^degree term)``,
shifts right and inserts the feedback at the MSB. ``poly`` is the
characteristic polynomial as a bitmask with bit ``i`` holding the coefficient
of ``x^i``; read MSB-first it is the polynomial in descending powers, e.g.
``0b1011`` is ``x^3 + x + 1``. Bits map to BPSK as 0 -> +1, 1 -> -1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

# Two primitive polynomials per degree (the second is the reciprocal of the
# first), so the Doppler and delay components can come from different ones.
PRIMITIVE_POLYS: dict[int, tuple[int, int]] = {
    2: (0b111, 0b111),
    3: (0b1011, 0b1101),
    4: (0b10011, 0b11001),
    5: (0b100101, 0b101001),
    6: (0b1000011, 0b1100001),
    7: (0b10000011, 0b11000001),
    8: (0b100011101, 0b101110001),
    9: (0b1000010001, 0b1000100001),
    10: (0b10000001001, 0b10010000001),
    11: (0b100000000101, 0b101000000001),
    12: (0b1000001010011, 0b1100101000001),
}


@dataclass(frozen=True)
class ComponentSequence:
    """A +/-1 sequence used as one axis of the 2D pilot."""

    values: np.ndarray
    generator_poly: int | None = None
    label: str = ""
    natural_length: int | None = field(default=None, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise ValueError("sequence must be non-empty")
        if not np.all(np.abs(values) == 1.0):
            raise ValueError("component sequence entries must be +1 or -1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.natural_length is None:
            object.__setattr__(self, "natural_length", values.size)

    @property
    def length(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size


def generate_m_sequence(poly: int, degree: int, init_state: int = 1) -> ComponentSequence:
    """Maximal-length BPSK sequence of length ``2**degree - 1``.

    Raises ValueError for a zero initial state or a polynomial whose LFSR does
    not reach the full period (i.e. is not primitive).
    """
    if degree < 2 or degree > 62:
        raise ValueError("degree must be in [2, 62]")
    if poly >> degree != 1:
        raise ValueError(f"poly {poly:#b} is not of degree {degree}")
    if not poly & 1:
        raise ValueError("poly must have a non-zero constant term")
    length = (1 << degree) - 1
    init_state &= length
    if init_state == 0:
        raise ValueError("initial LFSR state must be non-zero")
    bits, first_return = kernels.lfsr_bits(poly, degree, init_state)
    if first_return != length:
        raise ValueError(
            f"poly {poly:#b} is not primitive: period {first_return or 'exceeds'} != {length}"
        )
    return ComponentSequence(1.0 - 2.0 * bits, generator_poly=poly, label=f"m{degree}:{poly:#x}")


def m_sequence(degree: int, which: int = 0, init_state: int = 1) -> ComponentSequence:
    """m-sequence from the built-in primitive polynomial table."""
    try:
        poly = PRIMITIVE_POLYS[degree][which]
    except KeyError:
        raise ValueError(f"no tabulated primitive polynomial of degree {degree}") from None
    return generate_m_sequence(poly, degree, init_state)


def cyclic_shift(seq: ComponentSequence, s: int) -> ComponentSequence:
    """``out[i] = seq[(i - s) mod L]``."""
    return ComponentSequence(
        np.roll(seq.values, int(s)), seq.generator_poly, seq.label, seq.natural_length
    )


def periodic_correlation(x: ComponentSequence, y: ComponentSequence, s: int) -> float:
    """Normalized periodic correlation ``(1/L) sum_i x[i] y[(i - s) mod L]``."""
    if x.length != y.length:
        raise ValueError(f"length mismatch: {x.length} vs {y.length}")
    return float(np.dot(x.values, np.roll(y.values, int(s))) / x.length)


def cyclic_extend(seq: ComponentSequence, length: int) -> ComponentSequence:
    """Repeat ``seq`` cyclically and truncate to ``length`` entries."""
    if length < 1:
        raise ValueError("length must be positive")
    values = np.resize(seq.values, length)
    return ComponentSequence(values, seq.generator_poly, seq.label, seq.natural_length)


def m_sequence_for_length(length: int, which: int = 0) -> ComponentSequence:
    """Longest tabulated m-sequence not exceeding ``length``, cyclically extended to it."""
    if length < 3:
        raise ValueError("need a dimension of at least 3 for an m-sequence")
    degree = min(int(np.floor(np.log2(length + 1))), max(PRIMITIVE_POLYS))
    return cyclic_extend(m_sequence(degree, which), length)
