"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` one-to-one and are used whenever the compiled
extension is unavailable (or ``ISAC_PURE_PYTHON=1`` is set).
"""

import numpy as np


def lfsr_bits(poly, degree, state):
    """Run a Fibonacci LFSR for ``2**degree - 1`` steps.

    Returns ``(bits, first_return)`` where ``first_return`` is the step count
    after which the register first re-entered ``state`` (0 if it never did).
    """
    length = (1 << degree) - 1
    taps = poly & length
    top = degree - 1
    bits = np.empty(length, dtype=np.uint8)
    reg = state
    first_return = 0
    for i in range(length):
        bits[i] = reg & 1
        fb = bin(reg & taps).count("1") & 1
        reg = (reg >> 1) | (fb << top)
        if reg == state and first_return == 0:
            first_return = i + 1
    return bits, first_return


def apply_paths(x, gains, delays, dopplers, denom):
    """Sum of delayed, Doppler-rotated copies of ``x``.

    y[n] = sum_i gains[i] * x[n - delays[i]] * exp(2j*pi*dopplers[i]*(n - delays[i])/denom)
    with x taken as zero before the first sample.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[0]
    y = np.zeros(n, dtype=np.complex128)
    idx = np.arange(n, dtype=np.float64)
    for h, d, k in zip(gains, delays, dopplers):
        d = int(d)
        if d >= n:
            continue
        ramp = np.exp(2j * np.pi * k * idx[: n - d] / denom)
        y[d:] += h * x[: n - d] * ramp
    return y


def correlation_map(R, a, b, dopplers, delays, cp_length, compensate):
    """Normalized 2D correlation of ``R`` against shifted pilots ``b a^T``.

    Returns a complex array of shape (len(dopplers), len(delays)) holding
    ``(1/MN) sum conj(P_det) * R`` with ``P_det`` the pilot cyclically shifted
    by (doppler, delay), optionally times the DD phase matrix.
    """
    R = np.asarray(R, dtype=np.complex128)
    M, N = R.shape
    dopplers = np.asarray(dopplers, dtype=np.int64)
    delays = np.asarray(delays, dtype=np.int64)
    # circulant selections: ca[k', j] = a[(k' - k_j) mod N]
    ca = a[(np.arange(N)[:, None] - dopplers[None, :]) % N]
    cb = b[(np.arange(M)[:, None] - delays[None, :]) % M]
    acc = R @ ca  # M x K
    if compensate:
        denom = N * (M + cp_length)
        rows = np.arange(M)[:, None]
        acc = acc * np.exp(-2j * np.pi * rows * dopplers[None, :] / denom)
        out = (cb.T @ acc).T  # K x L
        offset = (cp_length - delays)[None, :] * dopplers[:, None]
        out = out * np.exp(-2j * np.pi * offset / denom)
    else:
        out = (cb.T @ acc).T
    return out / (M * N)
