import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isac_underlay.channel import ChannelPath, ChannelRealization, apply_channel
from isac_underlay.grid import FrameGeometry, Grid, isfft, ofdm_demodulate, ofdm_modulate, sfft
from isac_underlay.pilot import cyclic_shift_2d, default_pilot, inner_product_2d, phase_matrix
from isac_underlay.sensing import (
    DetectionConfig,
    correlation_ccdf,
    correlation_map,
    detect,
    refine_delay,
    refine_doppler,
    regional_maxima,
    sinr_breakdown,
)

from conftest import crandn

G63 = FrameGeometry(63, 63, cp_length=7)


def _received(geom, paths, pilot=None, extra_tf=None):
    pilot = default_pilot(geom) if pilot is None else pilot
    tx = isfft(pilot.as_grid(), geom).samples
    if extra_tf is not None:
        tx = tx + extra_tf
    ch = ChannelRealization(tuple(ChannelPath(h, l, k) for h, k, l in paths), geom)
    rx = ofdm_demodulate(apply_channel(ofdm_modulate(Grid.tf(tx), geom), ch), geom)
    return sfft(rx, geom).samples


def _dets(report):
    return sorted((d.doppler, d.delay) for d in report.detections)


def test_config_validation():
    with pytest.raises(ValueError):
        DetectionConfig(k_max=63, l_max=0).validate(G63)
    with pytest.raises(ValueError):
        DetectionConfig(k_max=5, l_max=7).validate(G63)
    with pytest.raises(ValueError):
        DetectionConfig(k_max=5, l_max=2, refine_width=2).validate(G63)
    with pytest.raises(ValueError):
        DetectionConfig(k_max=5, l_max=2, threshold=-1).validate(G63)


def test_single_path_map_and_sidelobe_bound():
    R = _received(G63, [(1.0, 5, 3)])
    rep = detect(R, default_pilot(G63), DetectionConfig(k_max=20, l_max=6), G63)
    assert _dets(rep) == [(5, 3)]
    row = list(rep.doppler_bins).index(5)
    assert rep.correlation_map[row, 3] == pytest.approx(1.0, abs=1e-12)
    others = rep.correlation_map.copy()
    others[row, 3] = 0
    assert others.max() <= 1 / 63 + 1 / 63 + 1e-12
    assert all(d.metric > rep.threshold_abs for d in rep.detections)
    assert len(rep.refined) == len(rep.detections)


def test_zero_input_gives_no_detections():
    rep = detect(np.zeros(G63.shape), default_pilot(G63), DetectionConfig(k_max=10, l_max=6), G63)
    assert rep.detections == [] and rep.refined == []


def test_three_integer_targets():
    paths = [(np.exp(1j * t) / np.sqrt(3), k, l) for t, (k, l) in zip((0.3, 1.4, 2.9), [(0, 0), (3, 1), (6, 2)])]
    rep = detect(_received(G63, paths), default_pilot(G63), DetectionConfig(k_max=20, l_max=6), G63)
    assert _dets(rep) == [(0, 0), (3, 1), (6, 2)]


def test_argmax_exact_exhaustive_16x16():
    geom = FrameGeometry(16, 16, cp_length=8)
    pilot = default_pilot(geom)
    tx = ofdm_modulate(isfft(pilot.as_grid(), geom), geom)
    cfg = DetectionConfig(k_max=15, l_max=7)
    for k, l in itertools.product(range(16), range(8)):
        ch = ChannelRealization((ChannelPath(0.7 - 0.4j, l, k),), geom)
        R = sfft(ofdm_demodulate(apply_channel(tx, ch), geom), geom).samples
        rep = detect(R, pilot, cfg, geom)
        i, j = np.unravel_index(np.argmax(rep.correlation_map), rep.correlation_map.shape)
        assert (rep.doppler_bins[i], rep.delay_bins[j]) == (k, l)


def test_phase_compensation_consistency():
    geom = FrameGeometry(16, 16, cp_length=8)
    pilot = default_pilot(geom)
    for k, l in [(3, 2), (9, 7), (15, 5)]:
        R = _received(geom, [(0.8j, k, l)], pilot)
        on = correlation_map(R, pilot, [k], [l], geom, compensate_phase=True)[0, 0]
        off = correlation_map(R, pilot, [k], [l], geom, compensate_phase=False)[0, 0]
        assert on == pytest.approx(0.8, abs=1e-9)
        assert off <= on + 1e-12


def test_kernel_matches_direct_inner_products(rng):
    geom = FrameGeometry(16, 8, cp_length=4)
    pilot = default_pilot(geom)
    R = crandn(rng, 16, 8)
    ks, ls = np.arange(-1, 5), np.arange(4)
    fast = correlation_map(R, pilot, ks, ls, geom)
    for i, k in enumerate(ks):
        for j, l in enumerate(ls):
            ref = cyclic_shift_2d(pilot, k % 8, l) * np.exp(
                2j * np.pi * (4 + np.arange(16)[:, None] - l) * k / (8 * 20)
            )
            assert fast[i, j] == pytest.approx(abs(inner_product_2d(ref, R)), abs=1e-12)
    # non-negative Doppler agrees with the phase matrix
    ref = cyclic_shift_2d(pilot, 3, 2) * phase_matrix((3, 2), geom).entries
    assert fast[4, 2] == pytest.approx(abs(inner_product_2d(ref, R)), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_detections_are_scale_invariant(scale, seed):
    geom = FrameGeometry(63, 31, cp_length=7)
    pilot = default_pilot(geom)
    r = np.random.default_rng(seed)
    R = _received(geom, [(1.0, 4, 2), (0.6j, 9, 5)], pilot) + 0.3 * crandn(r, 63, 31)
    cfg = DetectionConfig(k_max=15, l_max=6)
    a = detect(R, pilot, cfg, geom)
    b = detect(scale * R, pilot, cfg, geom)
    assert _dets(a) == _dets(b)


def test_fractional_doppler_leakage():
    pilot = default_pilot(G63)
    cfg = DetectionConfig(k_max=20, l_max=6)
    rep = detect(_received(G63, [(1.0, 3.3, 1)], pilot), pilot, cfg, G63)
    assert [d.delay for d in rep.detections] == [1]
    assert rep.detections[0].doppler in (3, 4)
    col = rep.correlation_map[:, 1]
    row = list(rep.doppler_bins).index(3)
    assert 0.1 < col[row + 1] < col[row]
    rep = detect(_received(G63, [(1.0, 6.5, 1)], pilot), pilot, cfg, G63)
    row = list(rep.doppler_bins).index(6)
    col = rep.correlation_map[:, 1]
    assert col[row] == pytest.approx(col[row + 1], rel=1e-6)
    assert col[row] > 2 * max(col[row - 1], col[row + 2])


def test_refine_symmetry_and_width_one():
    m = np.zeros((7, 2))
    m[2:5, 0] = [0.4, 1.0, 0.4]
    bins = np.arange(-1, 6)
    assert refine_doppler(m, bins, (3, 0), 3) == pytest.approx(2.0)
    assert refine_doppler(m, bins, (3, 0), 1) == 2.0
    assert refine_doppler(m, bins, (3, 1), 3) == 2.0  # all-zero column
    with pytest.raises(ValueError):
        refine_doppler(m, bins, (3, 0), 4)


def test_refine_weights_oracle():
    m = np.array([[0.2], [0.9], [0.6]])
    w = np.exp(np.array([0.2, 0.9, 0.6]) / 0.9)
    expected = np.dot(w, [4, 5, 6]) / w.sum()
    assert refine_doppler(m, [4, 5, 6], (1, 0), 3) == pytest.approx(expected)


def test_refine_wraps_cyclically():
    m = np.array([[1.0], [0.0], [0.0], [0.5]])
    bins = np.arange(4)
    w = np.exp([0.5, 1.0, 0.0])
    assert refine_doppler(m, bins, (0, 0), 3) == pytest.approx(np.dot(w, [-1, 0, 1]) / w.sum())


def test_half_tap_refinement():
    pilot = default_pilot(G63)
    rep = detect(_received(G63, [(1.0, 3.5, 2)], pilot), pilot, DetectionConfig(k_max=20, l_max=6), G63)
    (nu, l), = rep.refined
    k = rep.detections[0].doppler
    assert 3 < nu < 4 and l == 2
    assert abs(nu - 3.5) < abs(k - 3.5)


def test_refinement_beats_rounding_at_3_3():
    geom = FrameGeometry(63, 63, cp_length=7)
    pilot = default_pilot(geom)
    cfg = DetectionConfig(k_max=20, l_max=6)
    clean = _received(geom, [(1.0, 3.3, 1)], pilot)
    raw_err, ref_err = [], []
    for seed in range(100):
        R = clean + 0.5 * crandn(np.random.default_rng(seed), 63, 63)
        rep = detect(R, pilot, cfg, geom)
        best = max(range(len(rep.detections)), key=lambda i: rep.detections[i].metric)
        raw_err.append(abs(rep.detections[best].doppler - 3.3))
        ref_err.append(abs(rep.refined[best][0] - 3.3))
    assert np.mean(ref_err) < np.mean(raw_err)


def test_delay_refinement_flag():
    pilot = default_pilot(G63)
    R = _received(G63, [(1.0, 4, 3)], pilot)
    off = detect(R, pilot, DetectionConfig(k_max=20, l_max=6), G63)
    on = detect(R, pilot, DetectionConfig(k_max=20, l_max=6, refine_delay=True), G63)
    assert off.refined[0][1] == 3
    assert on.refined[0][1] == pytest.approx(3.0, abs=0.05)
    m = np.array([[1.0, 0.5, 0.0]])
    w = np.exp([1.0, 0.5])
    assert refine_delay(m, [0, 1, 2], (0, 0), 3) == pytest.approx(np.dot(w, [0, 1]) / w.sum())


def test_regional_maxima_plateau():
    v = np.array([[0, 1, 1, 0, 0], [0, 0, 0, 0, 2], [3, 0, 0, 0, 0]], dtype=float)
    peaks = regional_maxima(v)
    assert sorted(zip(*np.nonzero(peaks))) == [(0, 1), (1, 4), (2, 0)]
    v2 = np.array([[1, 1, 2]], dtype=float)
    assert list(zip(*np.nonzero(regional_maxima(v2)))) == [(0, 2)]
    assert not regional_maxima(np.zeros((3, 3))).any()


def test_sinr_breakdown_single_path_is_infinite():
    pilot = default_pilot(G63)
    out = sinr_breakdown(pilot, (2, 1), [(0.9, 2, 1)])
    assert out.sinr_z == np.inf and out.signal == 0.9


def test_sinr_pilot_interference_values():
    geom = FrameGeometry(15, 15, cp_length=3)
    pilot = default_pilot(geom)
    for k, l in [(0, 4), (6, 0), (3, 7)]:
        out = sinr_breakdown(pilot, (1, 2), [(1.0, 1, 2), (1.0, 1 + k, 2 + l)])
        assert np.min(np.abs(abs(out.pilot_interference[0]) - np.array([1 / 15, 1 / 225]))) < 1e-12
        assert out.sinr_z == pytest.approx(1.0 / abs(out.pilot_interference[0]))


def test_sinr_components_sum_to_matched_output(rng):
    geom = FrameGeometry(15, 15, cp_length=3)
    pilot = default_pilot(geom)
    paths = [(0.8, 2, 1), (0.5j, 5, 0), (-0.3, 9, 2)]
    D, W = crandn(rng, 15, 15), 0.1 * crandn(rng, 15, 15)
    R = sum(h * (cyclic_shift_2d(pilot, k, l) + cyclic_shift_2d(D, k, l)) for h, k, l in paths) + W
    out = sinr_breakdown(pilot, (2, 1), paths, D, W)
    total = inner_product_2d(cyclic_shift_2d(pilot, 2, 1), R)
    parts = out.signal + sum(h * t for (h, _, _), t in zip(paths[1:], out.pilot_interference))
    parts += sum(h * r for (h, _, _), r in zip(paths, out.data_interference)) + out.noise_term
    assert parts == pytest.approx(total, abs=1e-12)
    assert out.sinr_z == pytest.approx(abs(out.signal / (parts - out.signal)))


def test_correlation_ccdf():
    vals, ccdf = correlation_ccdf(15, "qam", 200, seed=1)
    assert np.all(np.diff(vals) >= 0) and vals.size == 200
    assert ccdf[0] == pytest.approx(1 - 1 / 200) and ccdf[-1] == 0
    again, _ = correlation_ccdf(15, "qam", 200, seed=1)
    assert np.array_equal(vals, again)
    big, _ = correlation_ccdf(63, "qam", 200, seed=1)
    assert np.median(big) < np.median(vals)
    with pytest.raises(ValueError):
        correlation_ccdf(15, "qam", 0, seed=1)
    with pytest.raises(ValueError):
        correlation_ccdf(15, "other", 10, seed=1)


def test_map_csv_export():
    geom = FrameGeometry(15, 15, cp_length=3)
    pilot = default_pilot(geom)
    rep = detect(_received(geom, [(1.0, 2, 1)], pilot), pilot, DetectionConfig(k_max=4, l_max=2), geom)
    lines = rep.map_csv().split("\n")
    assert lines[0] == "k,l,vd"
    assert len(lines) == 1 + rep.correlation_map.size + 1 and lines[-1] == ""
    k, l, v = lines[1 + 2 * 3 + 1].split(",")
    assert (int(k), int(l)) == (2, 1) and float(v) == pytest.approx(1.0)
