"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary (and inline with ``-s``).
"""

import itertools
import math
import time

import numpy as np
import pytest

from isac_underlay import harness
from isac_underlay.channel import ChannelPath, ChannelRealization, apply_channel
from isac_underlay.grid import FrameGeometry, isfft, ofdm_demodulate, ofdm_modulate, sfft
from isac_underlay.pilot import build_pilot, cyclic_shift_2d, default_pilot, inner_product_2d, phase_matrix
from isac_underlay.sensing import DetectionConfig, detect
from isac_underlay.sequences import m_sequence

from conftest import record_acceptance


def _all_shifts(pilot, L_rows, L_cols):
    return np.stack([cyclic_shift_2d(pilot, q, p) for q in range(L_cols) for p in range(L_rows)])


def test_criterion_1_two_dimensional_correlation_exact():
    start = time.perf_counter()
    worst, ok = 0.0, True
    for degree in (3, 4):
        L = 2**degree - 1
        pilot = build_pilot(m_sequence(degree, 0), m_sequence(degree, 1), FrameGeometry(L, L, cp_length=0))
        shifts = _all_shifts(pilot, L, L)
        allowed = np.array([1.0 / L, 1.0 / (L * L)])
        for i in range(shifts.shape[0]):
            v = inner_product_2d(shifts[i], shifts)
            mags = np.abs(v)
            err_match = abs(v[i] - 1.0)
            others = np.delete(mags, i)
            err_other = np.max(np.min(np.abs(others[:, None] - allowed[None, :]), axis=1))
            worst = max(worst, err_match, err_other)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-12 and elapsed < 1.0
    record_acceptance(1, ok, f"7x7 and 15x15 all shift pairs, max error {worst:.2e}, {elapsed:.2f} s")
    assert worst < 1e-12
    assert elapsed < 1.0


def test_criterion_2_dd_coupling_oracle():
    start = time.perf_counter()
    geom = FrameGeometry(16, 8)
    pilot = default_pilot(geom)
    tx = ofdm_modulate(isfft(pilot.as_grid(), geom), geom)
    gain = 0.6 - 0.8j
    worst, count = 0.0, 0
    for k, l in itertools.product(range(geom.N), range(geom.cp_length)):
        ch = ChannelRealization((ChannelPath(gain, l, k),), geom)
        R = sfft(ofdm_demodulate(apply_channel(tx, ch), geom), geom).samples
        expected = gain * cyclic_shift_2d(pilot, k, l) * phase_matrix((k, l), geom).entries
        worst = max(worst, float(np.max(np.abs(R - expected))))
        count += 1
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and elapsed < 5.0
    record_acceptance(2, ok, f"16x8, L_cp={geom.cp_length}, {count} hypotheses, max error {worst:.2e}, {elapsed:.2f} s")
    assert worst < 1e-9
    assert elapsed < 5.0


def _placements(rng, count, k_max, l_max, trials):
    # targets at least two cells apart so each forms its own local maximum
    out = []
    while len(out) < trials:
        pts = [(int(rng.integers(0, k_max + 1)), int(rng.integers(0, l_max + 1))) for _ in range(count)]
        if all(max(abs(a[0] - b[0]), abs(a[1] - b[1])) >= 2 for a, b in itertools.combinations(pts, 2)):
            out.append(pts)
    return out


def test_criterion_3_noise_free_detection():
    start = time.perf_counter()
    geom = FrameGeometry(64, 64, cp_length=8)
    pilot = default_pilot(geom)
    tx = ofdm_modulate(isfft(pilot.as_grid(), geom), geom)
    cfg = DetectionConfig(k_max=20, l_max=geom.cp_length - 1)
    rng = np.random.default_rng(20240)
    misses = false_alarms = runs = 0
    for count in (1, 3):
        for pts in _placements(rng, count, cfg.k_max, cfg.l_max, 200):
            phases = rng.uniform(0, 2 * np.pi, count)
            paths = tuple(ChannelPath(np.exp(1j * ph) / math.sqrt(count), l, k) for ph, (k, l) in zip(phases, pts))
            R = sfft(ofdm_demodulate(apply_channel(tx, ChannelRealization(paths, geom)), geom), geom)
            found = {(d.doppler, d.delay) for d in detect(R, pilot, cfg, geom).detections}
            truth = set(pts)
            misses += len(truth - found)
            false_alarms += len(found - truth)
            runs += 1
    elapsed = time.perf_counter() - start
    ok = misses == 0 and false_alarms == 0 and elapsed < 10.0
    record_acceptance(
        3, ok, f"{runs} placements (200 single, 200 triple) on 64x64: {misses} misses, "
        f"{false_alarms} false alarms, {elapsed:.2f} s",
    )
    assert misses == 0 and false_alarms == 0
    assert elapsed < 10.0


def test_criterion_4_doppler_error_trend():
    start = time.perf_counter()
    cfg = harness.load_config(experiment="doppler_error", trials=500, snr_db=[0.0])
    rows = {r.metric: r for r in harness.run_experiment(cfg)}
    raw = [rows[f"doppler_error_rate[N={n}]"].value for n in cfg.sensing_n]
    ref = [rows[f"doppler_error_rate_refined[N={n}]"].value for n in cfg.sensing_n]
    elapsed = time.perf_counter() - start
    decreasing = all(a > b for a, b in zip(raw, raw[1:])) and all(a > b for a, b in zip(ref, ref[1:]))
    refined_better = all(r < u for r, u in zip(ref, raw))
    ok = decreasing and refined_better and elapsed < 600
    detail = ", ".join(f"N={n}: {u:.4f}->{r:.4f}" for n, u, r in zip(cfg.sensing_n, raw, ref))
    record_acceptance(4, ok, f"0 dB, 500 trials, unrefined->refined {detail}, {elapsed:.0f} s")
    assert decreasing and refined_better
    assert elapsed < 600


def test_criterion_5_ber_pilot_on_off_agree():
    start = time.perf_counter()
    cfg = harness.load_config(experiment="ber_perfect_csi", trials=10_000, snr_db=harness.parse_snr_range("0:20:2"))
    rows = harness.run_experiment(cfg)
    table = {(r.snr_db, r.metric): r for r in rows}
    worst_z, worst_snr, fails = 0.0, None, []
    for snr in cfg.snr_db:
        off, on = table[(snr, "ber_ofdm")], table[(snr, "ber_spu_ofdm")]
        se = math.hypot(off.stderr, on.stderr)
        diff = abs(on.value - off.value)
        z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
        if z > worst_z:
            worst_z, worst_snr = z, snr
        if diff > 2 * se:
            fails.append(snr)
    elapsed = time.perf_counter() - start
    ok = not fails and elapsed < 900
    record_acceptance(
        5, ok, f"1e4 frames, SNR 0..20 dB: worst |diff|/se = {worst_z:.2f} at {worst_snr} dB "
        f"(limit 2), {elapsed:.0f} s",
    )
    assert not fails, f"BER differs beyond 2 standard errors at {fails}"
    assert elapsed < 900


def test_criterion_6_nmse_equivalent_rs():
    start = time.perf_counter()
    cfg = harness.load_config(experiment="nmse")
    rows = harness.run_experiment(cfg)
    table = {(r.snr_db, r.metric): r.value for r in rows}
    gaps = [abs(table[(s, "nmse_spu_equivalent_db")] - table[(s, "nmse_ofdm_db")]) for s in cfg.snr_db]
    ignorant_gap = table[(20.0, "nmse_spu_ignorant_db")] - table[(20.0, "nmse_spu_equivalent_db")]
    elapsed = time.perf_counter() - start
    ok = max(gaps) <= 1.0 and ignorant_gap >= 5.0 and elapsed < 300
    record_acceptance(
        6, ok, f"{cfg.trials} trials, SNR 0..30 dB: max |equivalent - ofdm| = {max(gaps):.2f} dB, "
        f"pilot-ignorant penalty at 20 dB = {ignorant_gap:.2f} dB, {elapsed:.0f} s",
    )
    assert max(gaps) <= 1.0
    assert ignorant_gap >= 5.0
    assert elapsed < 300


def test_criterion_7_ccdf_concentrates():
    start = time.perf_counter()
    cfg = harness.load_config(experiment="ccdf")
    rows = {r.metric: r.value for r in harness.run_experiment(cfg)}
    parts, ok = [], True
    for source in ("qam", "noise"):
        q = [rows[f"quantile0.9[source={source};size={n}]"] for n in cfg.ccdf_sizes]
        ok &= all(a > b for a, b in zip(q, q[1:]))
        parts.append(f"{source}: " + " > ".join(f"{v:.4f}" for v in q))
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 120
    record_acceptance(7, ok, f"0.9-quantile across sizes 15/63/255, {'; '.join(parts)}, {elapsed:.1f} s")
    assert ok


def test_criterion_8_byte_identical_rerun(tmp_path):
    identical = []
    for experiment in harness.EXPERIMENTS:
        cfg = harness.load_config(experiment=experiment, trials=3, snr_db=[0.0, 10.0], sensing_n=[64, 128],
                                  ccdf_sizes=[15, 63])
        a, b = tmp_path / f"{experiment}_a.csv", tmp_path / f"{experiment}_b.csv"
        harness.run_experiment(cfg, a)
        harness.run_experiment(harness.load_config(**cfg.to_dict()), b)
        identical.append(a.read_bytes() == b.read_bytes())
    ok = all(identical)
    record_acceptance(8, ok, f"{sum(identical)}/{len(identical)} experiments byte-identical on re-run")
    assert ok
