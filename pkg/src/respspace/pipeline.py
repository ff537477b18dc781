"""End-to-end orchestration: channel cube -> person estimates -> CSV/manifest.

The signal chain (beamform, clutter suppression, power, displacement,
band-pass, interval image, smoothing) runs once per cube; clustering is
re-run per Monte Carlo seed and evaluation time with an independent
generator, so count statistics reflect only clustering randomness.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .clustering import (
    build_point_cloud,
    build_point_cloud_2d,
    merge_clusters,
    representative_positions,
    smooth_resp_image,
    xmeans,
)
from .config import METHODS, PipelineConfig
from .imaging import (
    beamform,
    estimate_noise_region,
    normalize_power,
    power_image,
    suppress_clutter,
    taylor_taper,
)
from .rcube import ChannelCube
from .respiration import bandpass, displacement, resp_interval_series


def array_digest(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values).tobytes()).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def first_tick_s(cfg: PipelineConfig) -> float:
    """Earliest evaluation time with every window fully populated.

    The previous-interval axis reaches back 2*T_cy, and the interval cost
    itself needs 3*T_0 of history.
    """
    return 3.0 * cfg.max_interval_s + 2.0 * cfg.smoothing_window_s


def scoring_start_s(cfg: PipelineConfig) -> float:
    """Warm-up cutoff for scoring: longest filter window plus one cost span."""
    return max(cfg.clutter_window_s, cfg.highpass_window_s) + cfg.max_interval_s


def schedule_ticks(duration_s: float, dt_s: float, cfg: PipelineConfig) -> np.ndarray:
    """Clustering times: cadence multiples with full window support."""
    first = first_tick_s(cfg)
    last = duration_s - cfg.max_interval_s - dt_s
    k0 = math.ceil(first / cfg.cadence_s - 1e-9)
    k1 = math.floor(last / cfg.cadence_s + 1e-9)
    if k1 < k0:
        raise ValueError(
            f"record of {duration_s:.1f} s too short for any evaluation tick "
            f"(first feasible tick is {first:.1f} s)"
        )
    return np.arange(k0, k1 + 1) * cfg.cadence_s


@dataclass
class SignalProducts:
    """Per-cube signal-chain outputs shared by every clustering run."""

    power_norm: np.ndarray          # [slow_time, range, angle], noise floor = 1
    tau_now: np.ndarray             # [tick, range, angle] smoothed intervals
    valid_now: np.ndarray
    tau_prev: np.ndarray            # same, sampled one T_cy earlier
    valid_prev: np.ndarray
    tick_times_s: np.ndarray
    times_s: np.ndarray
    range_grid_m: np.ndarray
    sin_theta: np.ndarray
    theta_rad: np.ndarray
    noise_floor: float
    stage_digests: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)


def process_cube(cube: ChannelCube, cfg: PipelineConfig) -> SignalProducts:
    """Run the deterministic signal chain once for a cube."""
    digests = {}
    seconds = {}

    def stage(name, fn):
        start = time.perf_counter()
        out = fn()
        seconds[name] = time.perf_counter() - start
        return out

    taper = taylor_taper(cube.radar.num_virtual_elements)
    img = stage("beamform", lambda: beamform(
        cube, taper=taper, n_fft=cfg.n_fft, grid=cfg.angle_grid))
    digests["beamform"] = array_digest(img.values)

    ic = stage("clutter", lambda: suppress_clutter(img, cfg.clutter_window_s))
    digests["clutter"] = array_digest(ic.values)

    power = stage("power", lambda: power_image(ic, cfg.power_window_s))
    noise_mask = estimate_noise_region(power, cfg.noise_quantile)
    power_norm = normalize_power(power, noise_mask)
    digests["power_norm"] = array_digest(power_norm.values)

    d0 = stage("displacement", lambda: displacement(ic, cube.radar.center_wavelength_m))
    d = stage("bandpass", lambda: bandpass(
        d0, cfg.highpass_window_s, cfg.lowpass_window_s))
    digests["bandpass"] = array_digest(d.values)

    resp = stage("resp_image", lambda: resp_interval_series(
        d, power_norm, gate_db=cfg.gate_db, max_interval_s=cfg.max_interval_s,
        parabolic_refine=cfg.parabolic_refine,
        harmonic_slack=cfg.harmonic_slack))
    digests["resp_image"] = array_digest(resp.tau_s)

    ticks = schedule_ticks(cube.duration_s, cube.radar.slow_time_step_s, cfg)
    now = smooth_resp_image(resp, cfg.smoothing_window_s, out_times_s=ticks,
                            median_range_bins=cfg.median_range_bins,
                            median_angle_bins=cfg.median_angle_bins)
    prev = smooth_resp_image(resp, cfg.smoothing_window_s,
                             out_times_s=ticks - cfg.smoothing_window_s,
                             median_range_bins=cfg.median_range_bins,
                             median_angle_bins=cfg.median_angle_bins)
    digests["resp_smoothed"] = array_digest(now.tau_s)

    return SignalProducts(
        power_norm=power_norm.values,
        tau_now=now.tau_s,
        valid_now=now.valid,
        tau_prev=prev.tau_s,
        valid_prev=prev.valid,
        tick_times_s=ticks,
        times_s=cube.times_s,
        range_grid_m=img.range_grid_m,
        sin_theta=img.sin_theta,
        theta_rad=np.arcsin(np.clip(img.sin_theta, -1.0, 1.0)),
        noise_floor=power_norm.noise_floor,
        stage_digests=digests,
        stage_seconds=seconds,
    )


def _power_slice(products: SignalProducts, tick_s: float) -> np.ndarray:
    dt = float(products.times_s[1] - products.times_s[0])
    i = int(round((tick_s - products.times_s[0]) / dt))
    return products.power_norm[i]


def cluster_once(products: SignalProducts, tick_index: int, method: str,
                 rng, cfg: PipelineConfig) -> tuple:
    """Cluster one evaluation time with one method; returns (clusters, people)."""
    tick_s = float(products.tick_times_s[tick_index])
    power_slice = _power_slice(products, tick_s)
    if method == "resp4d":
        cloud = build_point_cloud(
            power_slice, products.range_grid_m, products.theta_rad,
            products.tau_now[tick_index], products.valid_now[tick_index],
            products.tau_prev[tick_index], products.valid_prev[tick_index],
            cfg.alpha, cfg.virtual_velocity_m_s, cfg.theta_scale,
        )
    elif method == "2d":
        gate = 10.0 ** (cfg.gate_db / 10.0)
        cloud = build_point_cloud_2d(
            power_slice, products.range_grid_m, products.theta_rad,
            gate, cfg.alpha, cfg.theta_scale,
        )
    else:
        raise ValueError(f"unknown clustering method {method!r}")
    clusters = xmeans(cloud, rng)
    clusters = merge_clusters(clusters, cfg.merge_diameter_m)
    people = representative_positions(
        clusters, power_slice, products.range_grid_m, products.theta_rad,
        tick_s, cfg.virtual_velocity_m_s,
    )
    return clusters, people


def clustering_rng(base_seed: int, mc_index: int, tick_index: int, method: str):
    """Independent, reproducible generator per (seed, tick, method) trial."""
    return np.random.default_rng(
        np.random.SeedSequence((base_seed, mc_index, tick_index, METHODS.index(method)))
    )


@dataclass
class RunResult:
    methods: list
    estimates: dict          # {(method, mc, tick_index): list of PersonEstimate}
    counts: list             # [{method, seed, eval_time_s, count}]
    tick_times_s: np.ndarray
    products: SignalProducts
    config: PipelineConfig
    cluster_seconds: float = 0.0


def run_pipeline(cube: ChannelCube, cfg: PipelineConfig) -> RunResult:
    products = process_cube(cube, cfg)
    methods = list(METHODS) if cfg.method == "both" else [cfg.method]
    estimates = {}
    counts = []
    start = time.perf_counter()
    for method in methods:
        for mc in range(cfg.monte_carlo):
            for tick_index in range(len(products.tick_times_s)):
                rng = clustering_rng(cfg.seed, mc, tick_index, method)
                _, people = cluster_once(products, tick_index, method, rng, cfg)
                estimates[(method, mc, tick_index)] = people
                counts.append({
                    "method": method,
                    "seed": mc,
                    "eval_time_s": float(products.tick_times_s[tick_index]),
                    "count": len(people),
                })
    return RunResult(
        methods=methods,
        estimates=estimates,
        counts=counts,
        tick_times_s=products.tick_times_s,
        products=products,
        config=cfg,
        cluster_seconds=time.perf_counter() - start,
    )


def format_estimate_row(seed: int, person) -> str:
    interval = "" if math.isnan(person.interval_s) else f"{person.interval_s:.6f}"
    return (
        f"{seed},{person.timestamp_s:.1f},{person.person_id},"
        f"{person.x_m:.6f},{person.y_m:.6f},{interval},{person.cluster_size}"
    )


RESULTS_HEADER = "seed,timestamp_s,person_id,x_m,y_m,interval_s,cluster_size"


def write_results_csv(path, result: RunResult, method: str):
    lines = [RESULTS_HEADER]
    for mc in range(result.config.monte_carlo):
        for tick_index in range(len(result.tick_times_s)):
            for person in result.estimates.get((method, mc, tick_index), []):
                lines.append(format_estimate_row(mc, person))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def run_manifest(result: RunResult, cube_digest: str) -> dict:
    return {
        "tool_version": __version__,
        "cube_sha256": cube_digest,
        "config": result.config.to_dict(),
        "methods": result.methods,
        "tick_times_s": [float(t) for t in result.tick_times_s],
        "scoring_start_s": scoring_start_s(result.config),
        "counts": result.counts,
        "stage_digests": result.products.stage_digests,
        "stage_seconds": {k: round(v, 4) for k, v in result.products.stage_seconds.items()},
        "cluster_seconds": round(result.cluster_seconds, 4),
    }
