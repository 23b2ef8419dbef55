"""Compare the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from isac_underlay import _kernels_py
from isac_underlay.pilot import default_pilot
from isac_underlay.grid import FrameGeometry

try:
    from isac_underlay import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _cases():
    rng = np.random.default_rng(0)
    geom = FrameGeometry(64, 512, cp_length=8)
    pilot = default_pilot(geom)
    R = rng.standard_normal(geom.shape) + 1j * rng.standard_normal(geom.shape)
    x = rng.standard_normal(geom.frame_samples) + 1j * rng.standard_normal(geom.frame_samples)
    gains = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    delays = np.array([0, 0, 1, 1, 1, 3, 4, 7, 7], dtype=np.int64)
    dopplers = rng.uniform(-3, 3, 9)
    ks = np.arange(-1, 14, dtype=np.int64)
    ls = np.arange(8, dtype=np.int64)
    return {
        "lfsr degree 12": lambda m: m.lfsr_bits(0b1000001010011, 12, 1),
        "apply_paths 9 taps, 36864 samples": lambda m: m.apply_paths(x, gains, delays, dopplers, float(x.size)),
        "correlation_map 15x8 on 64x512": lambda m: m.correlation_map(
            R, pilot.a.values, pilot.b.values, ks, ls, 8, True
        ),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = [("python", _kernels_py)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':40s} " + " ".join(f"{name:>12s}" for name, _ in backends) + "   speedup")
    for label, fn in _cases().items():
        times = []
        for _, mod in backends:
            fn(mod)
            number = 5
            times.append(min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number)
        cols = " ".join(f"{t * 1e3:10.3f}ms" for t in times)
        speed = f"{times[0] / times[1]:8.1f}x" if len(times) == 2 else "       -"
        print(f"{label:40s} {cols} {speed}")
    if _ckernels is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
