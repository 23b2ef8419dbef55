"""Config-driven Monte Carlo experiments producing CSV result tables.

Trial ``t`` draws every random quantity from ``SeedSequence([master_seed, t])``
split into independent channel / data / noise streams, so results do not
depend on trial order and alternatives (pilot on/off, SNR points) are
compared on common random numbers.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import (
    EVA_DELAYS_NS,
    EVA_POWERS_DB,
    ChannelRealization,
    add_awgn,
    apply_channel,
    doppler_shift_hz,
    sample_eva_channel,
    sample_sensing_targets,
    true_tf_channel,
)
from .comm import (
    EstimateSource,
    build_data_grid,
    cancel_and_equalize,
    estimate_channel,
    extract_data,
    make_rs_mask,
    nmse_linear,
    qam16_demodulate,
    qam16_modulate,
)
from .grid import FrameGeometry, Grid, TimeSignal, isfft, ofdm_demodulate, ofdm_modulate, sfft
from .pilot import Pilot2D, default_pilot
from .sensing import DetectionConfig, correlation_ccdf, detect, refine_doppler

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

EXPERIMENTS = ("ber_perfect_csi", "ber_estimated_csi", "nmse", "doppler_error", "ccdf")
CSV_HEADER = ("experiment", "snr_db", "metric", "value", "stderr", "trials", "seed", "config_hash")

DEFAULT_TRIALS = {
    "ber_perfect_csi": 10_000,
    "ber_estimated_csi": 10_000,
    "nmse": 1_000,
    "doppler_error": 500,
    "ccdf": 2_000,
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Experiment parameters; defaults follow the evaluation setup (6 GHz,
    60 kHz SCS, 64 x 16 communication frame, 64 x {64..512} sensing frames,
    pilot power 0.2 of data power, 30 / 500 km/h)."""

    experiment: str = "ber_perfect_csi"
    carrier_hz: float = 6e9
    subcarrier_spacing: float = 60e3
    comm_m: int = 64
    comm_n: int = 16
    comm_cp: int = 16
    sensing_m: int = 64
    sensing_n: list = field(default_factory=lambda: [64, 128, 256, 512])
    sensing_cp: int = 8
    power_ratio: float = 0.2
    snr_db: list = field(default_factory=lambda: [float(s) for s in range(0, 31, 2)])
    trials: int | None = None
    master_seed: int = 2024
    csi_mode: str = "perfect"
    target_count: int = 3
    comm_velocity_kmh: float = 30.0
    sensing_velocity_kmh: float = 500.0
    rs_subcarrier_step: int = 4
    rs_seed: int = 0
    threshold: float = 8.0
    sidelobe_guard: float = 0.3
    refine_width: int = 3
    compensate_phase: bool = True
    ccdf_sizes: list = field(default_factory=lambda: [15, 63, 255])
    eva_delays_ns: list = field(default_factory=lambda: list(EVA_DELAYS_NS))
    eva_powers_db: list = field(default_factory=lambda: list(EVA_POWERS_DB))

    def __post_init__(self):
        if self.trials is None:
            self.trials = DEFAULT_TRIALS.get(self.experiment, 100)
        if self.experiment == "ber_perfect_csi":
            self.csi_mode = "perfect"
        elif self.experiment == "ber_estimated_csi":
            self.csi_mode = "estimated"
        self.snr_db = [float(s) for s in self.snr_db]
        self.sensing_n = [int(n) for n in self.sensing_n]
        self.ccdf_sizes = [int(n) for n in self.ccdf_sizes]
        self.eva_delays_ns = [float(v) for v in self.eva_delays_ns]
        self.eva_powers_db = [float(v) for v in self.eva_powers_db]

    @property
    def comm_geometry(self) -> FrameGeometry:
        return FrameGeometry(self.comm_m, self.comm_n, self.subcarrier_spacing, self.comm_cp)

    def sensing_geometry(self, n: int) -> FrameGeometry:
        return FrameGeometry(self.sensing_m, n, self.subcarrier_spacing, self.sensing_cp)

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.power_ratio < 0:
            raise ConfigError("power_ratio must be non-negative")
        if not self.snr_db and self.experiment != "ccdf":
            raise ConfigError("snr_db grid is empty")
        if self.csi_mode not in ("perfect", "estimated"):
            raise ConfigError("csi_mode must be 'perfect' or 'estimated'")
        if len(self.eva_delays_ns) != len(self.eva_powers_db):
            raise ConfigError("eva_delays_ns and eva_powers_db differ in length")
        try:
            comm = self.comm_geometry
            sensing = [self.sensing_geometry(n) for n in self.sensing_n]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        max_tap = int(np.max(np.round(np.asarray(self.eva_delays_ns) * 1e-9 * comm.sample_rate)))
        if max_tap >= comm.cp_length:
            raise ConfigError(
                f"comm_cp={comm.cp_length} must exceed the largest channel delay tap ({max_tap})"
            )
        for g in sensing:
            if self.target_count > g.cp_length:
                raise ConfigError("target_count exceeds the number of distinct delays below sensing_cp")
            if g.N < 3 or g.M < 3:
                raise ConfigError("sensing grid too small for an m-sequence pilot")
        if self.refine_width < 1 or self.refine_width % 2 == 0:
            raise ConfigError("refine_width must be a positive odd integer")
        if any(s < 3 for s in self.ccdf_sizes):
            raise ConfigError("ccdf_sizes must be at least 3")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a flat TOML file whose keys mirror :class:`ExperimentConfig` fields."""
    values = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                values = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        cfg = ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


def parse_snr_range(text: str) -> list[float]:
    """``"a:b:step"`` (inclusive of b) or a comma list."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigError(f"bad SNR range {text!r}; expected a:b:step")
        a, b, step = parts
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        return [a + i * step for i in range(max(count, 0))]
    return [float(p) for p in text.split(",") if p.strip()]


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    snr_db: float | None
    metric: str
    value: float
    stderr: float
    trials: int
    seed: int
    config_hash: str

    def as_csv_fields(self) -> list[str]:
        snr = "" if self.snr_db is None else repr(float(self.snr_db))
        return [
            self.experiment,
            snr,
            self.metric,
            repr(float(self.value)),
            repr(float(self.stderr)),
            str(self.trials),
            str(self.seed),
            self.config_hash,
        ]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.as_csv_fields())
    return buf.getvalue()


def write_csv(rows, path):
    Path(path).write_bytes(rows_to_csv(rows).encode("utf-8"))


def trial_streams(master_seed: int, trial: int) -> dict:
    """Independent generators for one trial."""
    channel, data, noise = np.random.SeedSequence([master_seed, trial]).spawn(3)
    return {
        "channel": np.random.default_rng(channel),
        "data": np.random.default_rng(data),
        "noise": np.random.default_rng(noise),
    }


def doppler_error_rate(estimates, truths) -> float:
    """Mean of ``|(est - true) / true|``; targets with zero true Doppler are skipped."""
    est = np.asarray(estimates, dtype=np.float64).reshape(-1)
    tru = np.asarray(truths, dtype=np.float64).reshape(-1)
    if est.size != tru.size:
        raise ValueError(f"length mismatch: {est.size} vs {tru.size}")
    keep = tru != 0
    if not keep.all():
        log.warning("skipping %d target(s) with zero Doppler", int((~keep).sum()))
    if not keep.any():
        return math.nan
    return float(np.mean(np.abs((est[keep] - tru[keep]) / tru[keep])))


def _mean_se(samples) -> tuple[float, float]:
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _chain_tf(grid: np.ndarray, ch: ChannelRealization, geom: FrameGeometry) -> np.ndarray:
    sig = ofdm_modulate(Grid.tf(grid), geom)
    return ofdm_demodulate(apply_channel(sig, ch), geom).samples


def _unit_noise_tf(geom: FrameGeometry, rng) -> np.ndarray:
    zero = TimeSignal(np.zeros(geom.frame_samples), geom)
    noisy, _ = add_awgn(zero, 0.0, 1.0, rng)
    return ofdm_demodulate(noisy, geom).samples


# -- communication -----------------------------------------------------------


def _comm_trials(cfg: ExperimentConfig):
    """Yield per-trial received components for pilot-off / pilot-on frames.

    Everything is linear in the transmit grid and noise, so the received TF
    grid at any SNR is ``Y_data + Y_pilot + sqrt(sigma2) * W``.
    """
    geom = cfg.comm_geometry
    rs = make_rs_mask(geom, cfg.rs_seed, cfg.rs_subcarrier_step)
    pilot = default_pilot(geom)
    pilot_tf = math.sqrt(cfg.power_ratio) * isfft(pilot.as_grid(), geom).samples
    n_bits = 4 * int((~rs.mask).sum())
    for t in range(cfg.trials):
        rngs = trial_streams(cfg.master_seed, t)
        ch = sample_eva_channel(
            geom,
            rngs["channel"],
            cfg.comm_velocity_kmh,
            cfg.carrier_hz,
            cfg.eva_delays_ns,
            cfg.eva_powers_db,
        )
        bits = rngs["data"].integers(0, 2, n_bits, dtype=np.uint8)
        D = build_data_grid(rs, bits)
        yield {
            "geom": geom,
            "rs": rs,
            "pilot_tf": pilot_tf,
            "bits": bits,
            "channel": ch,
            "Yd": _chain_tf(D, ch, geom),
            "Yp": _chain_tf(pilot_tf, ch, geom),
            "W": _unit_noise_tf(geom, rngs["noise"]),
        }


def _ber_experiment(cfg: ExperimentConfig, estimated: bool) -> list[ResultRow]:
    snrs = cfg.snr_db
    errs = {name: np.zeros((len(snrs), cfg.trials)) for name in ("ofdm", "spu")}
    for t, tr in enumerate(_comm_trials(cfg)):
        rs, pilot_tf, bits = tr["rs"], tr["pilot_tf"], tr["bits"]
        H_true = true_tf_channel(tr["channel"])
        for i, snr in enumerate(snrs):
            sigma2 = 10.0 ** (-snr / 10.0)
            noise = math.sqrt(sigma2) * tr["W"]
            for name, pil in (("ofdm", None), ("spu", pilot_tf)):
                Y = tr["Yd"] + noise if pil is None else tr["Yd"] + tr["Yp"] + noise
                if estimated:
                    H = estimate_channel(Y, rs, pil, EstimateSource.EQUIVALENT_RS).h_tf
                else:
                    H = H_true
                D_hat = cancel_and_equalize(Y, H, pil, sigma2)
                rx = qam16_demodulate(extract_data(D_hat, rs))
                errs[name][i, t] = np.count_nonzero(rx != bits) / bits.size
    rows = []
    for i, snr in enumerate(snrs):
        for name, metric in (("ofdm", "ber_ofdm"), ("spu", "ber_spu_ofdm")):
            rows.append(_row(cfg, snr, metric, *_mean_se(errs[name][i])))
        rows.append(_row(cfg, snr, "ber_diff_paired", *_mean_se(errs["spu"][i] - errs["ofdm"][i])))
    return rows


def _nmse_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    snrs = cfg.snr_db
    names = ("nmse_ofdm_db", "nmse_spu_equivalent_db", "nmse_spu_ignorant_db")
    acc = {n: np.zeros((len(snrs), cfg.trials)) for n in names}
    for t, tr in enumerate(_comm_trials(cfg)):
        rs, pilot_tf = tr["rs"], tr["pilot_tf"]
        H_true = true_tf_channel(tr["channel"])
        for i, snr in enumerate(snrs):
            noise = math.sqrt(10.0 ** (-snr / 10.0)) * tr["W"]
            Y0 = tr["Yd"] + noise
            Y1 = Y0 + tr["Yp"]
            acc[names[0]][i, t] = nmse_linear(estimate_channel(Y0, rs, None), H_true)
            acc[names[1]][i, t] = nmse_linear(estimate_channel(Y1, rs, pilot_tf), H_true)
            acc[names[2]][i, t] = nmse_linear(
                estimate_channel(Y1, rs, pilot_tf, EstimateSource.PILOT_IGNORANT_RS), H_true
            )
    rows = []
    for i, snr in enumerate(snrs):
        for n in names:
            mean, se = _mean_se(acc[n][i])
            rows.append(_row(cfg, snr, n, 10 * math.log10(mean), 10 / math.log(10) * se / mean))
    return rows


# -- sensing -----------------------------------------------------------------


def sensing_frame(cfg: ExperimentConfig, n: int, trial: int, pilot: Pilot2D | None = None):
    """One sensing frame: returns (geom, pilot, targets, R_signal, R_noise_unit).

    ``R_signal`` is the DD grid of pilot plus data through the target channel;
    the received grid at a given SNR is ``R_signal + sqrt(sigma2) * R_noise_unit``.
    """
    geom = cfg.sensing_geometry(n)
    pilot = default_pilot(geom) if pilot is None else pilot
    rngs = trial_streams(cfg.master_seed, trial)
    targets = sample_sensing_targets(
        geom, rngs["channel"], cfg.target_count, cfg.sensing_velocity_kmh, cfg.carrier_hz
    )
    bits = rngs["data"].integers(0, 2, 4 * geom.M * geom.N, dtype=np.uint8)
    data = qam16_modulate(bits).reshape(geom.N, geom.M).T
    tx = math.sqrt(cfg.power_ratio) * isfft(pilot.as_grid(), geom).samples + data
    R_sig = sfft(Grid.tf(_chain_tf(tx, targets, geom)), geom).samples
    R_noise = sfft(Grid.tf(_unit_noise_tf(geom, rngs["noise"])), geom).samples
    return geom, pilot, targets, R_sig, R_noise


def detection_config(cfg: ExperimentConfig, geom: FrameGeometry) -> DetectionConfig:
    f_max = doppler_shift_hz(cfg.sensing_velocity_kmh, cfg.carrier_hz)
    k_max = min(geom.N - 1, int(math.ceil(float(geom.doppler_hz_to_taps(f_max)))) + 1)
    return DetectionConfig(
        k_max=k_max,
        l_max=geom.cp_length - 1,
        threshold=cfg.threshold,
        refine=True,
        refine_width=cfg.refine_width,
        compensate_phase=cfg.compensate_phase,
        sidelobe_guard=cfg.sidelobe_guard,
    )


def estimate_target_dopplers(report, targets: ChannelRealization, width: int):
    """Associate each target with the strongest detection on its delay.

    Targets without a detection fall back to the largest map value on their
    delay column and are counted as misses. Returns (integer, refined, misses).
    """
    full = report.extras["full_map"]
    bins = report.extras["full_doppler_bins"]
    offset = int(np.nonzero(bins == report.doppler_bins[0])[0][0])
    ints, refs, misses = [], [], 0
    for p in targets.paths:
        l = int(p.delay)
        cands = [d for d in report.detections if d.delay == l]
        if cands:
            best = max(cands, key=lambda d: d.metric)
            row = offset + int(np.nonzero(report.doppler_bins == best.doppler)[0][0])
        else:
            misses += 1
            row = offset + int(np.argmax(report.correlation_map[:, l]))
        ints.append(float(bins[row]))
        refs.append(refine_doppler(full, bins, (row, l), width))
    return np.array(ints), np.array(refs), misses


def _doppler_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    rows = []
    for n in cfg.sensing_n:
        geom = cfg.sensing_geometry(n)
        pilot = default_pilot(geom)
        det_cfg = detection_config(cfg, geom)
        raw = np.zeros((len(cfg.snr_db), cfg.trials))
        ref = np.zeros_like(raw)
        miss = np.zeros_like(raw)
        for t in range(cfg.trials):
            _, _, targets, R_sig, R_noise = sensing_frame(cfg, n, t, pilot)
            truth = targets.dopplers
            for i, snr in enumerate(cfg.snr_db):
                R = R_sig + math.sqrt(10.0 ** (-snr / 10.0)) * R_noise
                report = detect(R, pilot, det_cfg, geom)
                ints, refs, misses = estimate_target_dopplers(report, targets, cfg.refine_width)
                raw[i, t] = doppler_error_rate(ints, truth)
                ref[i, t] = doppler_error_rate(refs, truth)
                miss[i, t] = misses / len(truth)
        for i, snr in enumerate(cfg.snr_db):
            rows.append(_row(cfg, snr, f"doppler_error_rate[N={n}]", *_mean_se(raw[i])))
            rows.append(_row(cfg, snr, f"doppler_error_rate_refined[N={n}]", *_mean_se(ref[i])))
            rows.append(_row(cfg, snr, f"miss_rate[N={n}]", *_mean_se(miss[i])))
    return rows


CCDF_POINTS = tuple(round(0.01 * i, 2) for i in range(1, 31))


def _ccdf_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    rows = []
    for size in cfg.ccdf_sizes:
        for source in ("qam", "noise"):
            seed = np.random.SeedSequence([cfg.master_seed, size, 0 if source == "qam" else 1])
            vals, _ = correlation_ccdf(size, source, cfg.trials, seed)
            tag = f"source={source};size={size}"
            for q in (0.5, 0.9, 0.99):
                rows.append(_row(cfg, None, f"quantile{q}[{tag}]", float(np.quantile(vals, q)), 0.0))
            for x in CCDF_POINTS:
                p = float(np.mean(vals > x))
                se = math.sqrt(p * (1 - p) / vals.size)
                rows.append(_row(cfg, None, f"ccdf@{x}[{tag}]", p, se))
        rows.append(_row(cfg, None, f"autocorrelation[size={size}]", 1.0, 0.0))
    return rows


def _row(cfg: ExperimentConfig, snr, metric, value, stderr) -> ResultRow:
    return ResultRow(
        cfg.experiment, snr, metric, float(value), float(stderr), cfg.trials, cfg.master_seed,
        cfg.config_hash(),
    )


def run_experiment(cfg: ExperimentConfig, out=None) -> list[ResultRow]:
    """Run one configured experiment; optionally write the CSV to ``out``."""
    cfg.validate()
    log.info("running %s with %d trials (config %s)", cfg.experiment, cfg.trials, cfg.config_hash())
    if cfg.experiment == "ber_perfect_csi":
        rows = _ber_experiment(cfg, estimated=False)
    elif cfg.experiment == "ber_estimated_csi":
        rows = _ber_experiment(cfg, estimated=True)
    elif cfg.experiment == "nmse":
        rows = _nmse_experiment(cfg)
    elif cfg.experiment == "doppler_error":
        rows = _doppler_experiment(cfg)
    else:
        rows = _ccdf_experiment(cfg)
    if out is not None:
        write_csv(rows, out)
    return rows
