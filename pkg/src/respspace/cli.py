"""Command-line interface: simulate, run, evaluate, sweep.

Exit codes: 0 success, 2 validation error (bad scene/config/flags),
3 I/O error (missing or corrupt files).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import PersonEstimate
from .config import METHODS, PipelineConfig, RadarConfig
from .evaluation import (
    CountTrial,
    IntervalSeries,
    count_accuracy,
    interval_rmse,
    match_people,
    read_truth_csv,
    write_truth_csv,
)
from .imaging import write_image_csv
from .pipeline import (
    cluster_once,
    clustering_rng,
    file_digest,
    run_manifest,
    run_pipeline,
    write_results_csv,
)
from .rcube import RcubeError, load_cube, save_cube
from .scene import SceneError, load_scene, save_scene, snr_to_noise_power
from .simulate import radar_for_scene, synthesize_scene

TRUTH_STEP_S = 1.0


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _truth_rows(scene):
    rows = []
    n_steps = int(math.floor(scene.duration_s / TRUTH_STEP_S + 1e-9))
    for k in range(n_steps + 1):
        t = k * TRUTH_STEP_S
        for sid, target in enumerate(scene.targets):
            rows.append((t, sid, float(target.breathing.interval_at(t))))
    return rows


def cmd_simulate(args) -> int:
    scene, radar_overrides = load_scene(args.scene)
    if args.duration_s is not None:
        scene = dataclasses.replace(scene, duration_s=args.duration_s)
    radar = radar_for_scene(scene, RadarConfig(**radar_overrides) if radar_overrides else None)
    cube = synthesize_scene(scene, radar, seed=args.seed)

    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    cube_path = prefix.with_suffix(".rcube")
    truth_path = Path(f"{prefix}_truth.csv")
    scene_path = Path(f"{prefix}_scene.json")
    save_cube(cube, cube_path)
    write_truth_csv(truth_path, _truth_rows(scene))
    save_scene(scene, scene_path, radar_overrides=cube.radar.to_dict())
    _write_json(Path(f"{prefix}_manifest.json"), {
        "tool_version": __version__,
        "seed": args.seed,
        "scene_sha256": file_digest(args.scene),
        "radar": cube.radar.to_dict(),
        "num_frames": cube.num_frames,
        "outputs": {
            "cube": file_digest(cube_path),
            "truth": file_digest(truth_path),
            "scene": file_digest(scene_path),
        },
    })
    print(f"wrote {cube_path} ({cube.num_frames} frames), {truth_path}, {scene_path}")
    return 0


_CONFIG_FLAGS = (
    "seed", "method", "monte_carlo", "alpha", "gate_db", "cadence_s",
    "n_fft", "angle_grid", "theta_scale",
)


def _build_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {}
    for name in _CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "parabolic_refine", False):
        overrides["parabolic_refine"] = True
    return cfg.replace(**overrides) if overrides else cfg


def _write_plot_csvs(out_dir: Path, result, cfg):
    """Plot-ready slices at the last evaluation tick (seed 0 clusters)."""
    products = result.products
    tick_index = len(products.tick_times_s) - 1
    tick_s = float(products.tick_times_s[tick_index])
    frame = int(round((tick_s - products.times_s[0])
                      / (products.times_s[1] - products.times_s[0])))
    write_image_csv(products.power_norm[frame], products.range_grid_m,
                    products.sin_theta, out_dir / "power_image.csv")
    write_image_csv(products.tau_now[tick_index], products.range_grid_m,
                    products.sin_theta, out_dir / "resp_image.csv")

    method = "resp4d" if "resp4d" in result.methods else result.methods[0]
    rng = clustering_rng(cfg.seed, 0, tick_index, method)
    clusters, people = cluster_once(products, tick_index, method, rng, cfg)
    with open(out_dir / "cluster_scatter.csv", "w", encoding="utf-8") as fh:
        fh.write("cluster_id,r_m,theta_rad,u1_m,u2_m,count\n")
        for cid, c in enumerate(clusters):
            for row, theta, count in zip(c.coords, c.thetas, c.counts):
                u1 = f"{row[2]:.6f}" if len(row) >= 4 else ""
                u2 = f"{row[3]:.6f}" if len(row) >= 4 else ""
                fh.write(f"{cid},{row[0]:.6f},{theta:.6f},{u1},{u2},{count}\n")
    with open(out_dir / "position_estimates.csv", "w", encoding="utf-8") as fh:
        fh.write("person_id,x_m,y_m,interval_s\n")
        for p in people:
            interval = "" if math.isnan(p.interval_s) else f"{p.interval_s:.6f}"
            fh.write(f"{p.person_id},{p.x_m:.6f},{p.y_m:.6f},{interval}\n")


def cmd_run(args) -> int:
    cube = load_cube(args.cube)
    cfg = _build_config(args)
    result = run_pipeline(cube, cfg)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for method in result.methods:
        write_results_csv(out_dir / f"results_{method}.csv", result, method)
    _write_json(out_dir / "manifest.json", run_manifest(result, file_digest(args.cube)))
    _write_plot_csvs(out_dir, result, cfg)
    ticks = ", ".join(f"{t:.0f}" for t in result.tick_times_s)
    print(f"wrote {out_dir}/results_*.csv for methods {result.methods} at ticks [{ticks}] s")
    return 0


def _read_results_csv(path):
    """Results rows grouped as {(seed, timestamp_s): [PersonEstimate, ...]}."""
    grouped = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "seed,timestamp_s,person_id,x_m,y_m,interval_s,cluster_size":
            raise ValueError(f"{path}: unexpected results header {header!r}")
        for line in fh:
            seed_s, t_s, pid, x, y, interval, size = line.strip().split(",")
            est = PersonEstimate(
                person_id=int(pid), x_m=float(x), y_m=float(y),
                interval_s=float(interval) if interval else float("nan"),
                timestamp_s=float(t_s), cluster_size=int(size),
            )
            grouped.setdefault((int(seed_s), float(t_s)), []).append(est)
    return grouped


def _subject_positions(scene):
    return {sid: target.position for sid, target in enumerate(scene.targets)}


def _collect_interval_samples(grouped, positions_by_sid, radius_m, scoring_start_s):
    """{sid: {seed: [(t, interval_s)]}} from matched estimates."""
    sids = sorted(positions_by_sid)
    positions = [positions_by_sid[s] for s in sids]
    samples = {}
    for (seed, t), estimates in sorted(grouped.items()):
        if t < scoring_start_s - 1e-9:
            continue
        matches, _ = match_people(estimates, positions, max_radius_m=radius_m)
        for est_idx, truth_idx in matches:
            interval = estimates[est_idx].interval_s
            if math.isnan(interval):
                continue
            sid = sids[truth_idx]
            samples.setdefault(sid, {}).setdefault(seed, []).append((t, interval))
    return samples


def _pooled_rmse(samples_by_seed, truth_series):
    """Pool per-seed RMSEs into one subject RMSE: sqrt(sum n r^2 / sum n)."""
    total_sq = 0.0
    total_n = 0
    for seed, pts in samples_by_seed.items():
        pts.sort()
        series = IntervalSeries(
            subject_id=truth_series.subject_id,
            times_s=np.array([p[0] for p in pts]),
            intervals_s=np.array([p[1] for p in pts]),
            source="radar",
        )
        rmse = interval_rmse(series, truth_series)
        total_sq += rmse**2 * len(pts)
        total_n += len(pts)
    if total_n == 0:
        return float("nan"), 0
    return math.sqrt(total_sq / total_n), total_n


def evaluate_run(manifest: dict, results_by_method: dict, truth: dict, scene):
    """Score one run; returns (report dict, trial list)."""
    true_count = len(truth)
    scoring_start = manifest["scoring_start_s"]
    trials = [
        CountTrial(
            eval_time_s=c["eval_time_s"], seed=c["seed"],
            estimated_count=c["count"], true_count=true_count,
            method=c["method"],
        )
        for c in manifest["counts"]
        if c["eval_time_s"] >= scoring_start - 1e-9
    ]
    report = {
        "tool_version": __version__,
        "true_count": true_count,
        "scoring_start_s": scoring_start,
        "methods": count_accuracy(trials),
        "rmse_ms": {},
    }
    if len(scene.targets) != true_count:
        report["warning"] = (
            f"scene has {len(scene.targets)} targets but truth lists "
            f"{true_count} subjects"
        )
    positions = _subject_positions(scene)
    radius = manifest["config"].get("match_radius_m", 1.0)
    for method, grouped in results_by_method.items():
        if method == "2d":
            continue  # the conventional cloud carries no intervals
        samples = _collect_interval_samples(grouped, positions, radius, scoring_start)
        per_subject = {}
        for sid in sorted(samples):
            rmse, n = _pooled_rmse(samples[sid], truth[sid])
            per_subject[str(sid)] = {"rmse_ms": round(rmse, 3), "n_samples": n}
        values = [v["rmse_ms"] for v in per_subject.values()]
        report["rmse_ms"][method] = {
            "per_subject": per_subject,
            "average": round(float(np.mean(values)), 3) if values else None,
        }
    return report, trials


def cmd_evaluate(args) -> int:
    results_dir = Path(args.results)
    manifest_path = results_dir / "manifest.json"
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    truth = read_truth_csv(args.truth)
    scene, _ = load_scene(args.scene)

    results_by_method = {}
    for method in manifest["methods"]:
        results_by_method[method] = _read_results_csv(
            results_dir / f"results_{method}.csv"
        )
    report, trials = evaluate_run(manifest, results_by_method, truth, scene)

    out_dir = Path(args.out) if args.out else results_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "report.json", report)
    with open(out_dir / "count_trials.csv", "w", encoding="utf-8") as fh:
        fh.write("method,seed,eval_time_s,estimated_count,true_count,correct\n")
        for tr in trials:
            fh.write(
                f"{tr.method},{tr.seed},{tr.eval_time_s:.1f},"
                f"{tr.estimated_count},{tr.true_count},{int(tr.correct)}\n"
            )
    with open(out_dir / "rmse_by_subject.csv", "w", encoding="utf-8") as fh:
        fh.write("method,subject_id,x_m,y_m,rmse_ms,n_samples\n")
        positions = _subject_positions(scene)
        for method, block in report["rmse_ms"].items():
            for sid_s, entry in block["per_subject"].items():
                x, y = positions[int(sid_s)]
                fh.write(
                    f"{method},{sid_s},{x:.3f},{y:.3f},"
                    f"{entry['rmse_ms']:.3f},{entry['n_samples']}\n"
                )
    with open(out_dir / "position_map.csv", "w", encoding="utf-8") as fh:
        fh.write("kind,method,seed,timestamp_s,id,x_m,y_m\n")
        for sid, (x, y) in sorted(positions.items()):
            fh.write(f"truth,,,,{sid},{x:.6f},{y:.6f}\n")
        for method, grouped in results_by_method.items():
            for (seed, t), estimates in sorted(grouped.items()):
                if seed != 0:
                    continue
                for est in estimates:
                    fh.write(
                        f"estimate,{method},{seed},{t:.1f},{est.person_id},"
                        f"{est.x_m:.6f},{est.y_m:.6f}\n"
                    )

    for method, stats in report["methods"].items():
        print(f"{method}: count accuracy {stats['accuracy']:.3f} "
              f"({stats['n_correct']}/{stats['n_trials']})")
    for method, block in report["rmse_ms"].items():
        if block["average"] is not None:
            print(f"{method}: average interval RMSE {block['average']:.1f} ms")
    return 0


def cmd_sweep(args) -> int:
    scene, radar_overrides = load_scene(args.scene)
    cfg = _build_config(args)
    if cfg.method != "both" and args.method is None:
        cfg = cfg.replace(method="both")
    radar = radar_for_scene(scene, RadarConfig(**radar_overrides) if radar_overrides else None)
    snrs = [float(s) for s in args.snr_db.split(",")]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    truth = {}
    for sid, target in enumerate(scene.targets):
        rows = [(t, float(target.breathing.interval_at(t)))
                for t in np.arange(0.0, scene.duration_s + 1e-9, TRUTH_STEP_S)]
        truth[sid] = IntervalSeries(
            subject_id=sid,
            times_s=np.array([r[0] for r in rows]),
            intervals_s=np.array([r[1] for r in rows]),
            source="truth",
        )

    lines = ["snr_db,method,accuracy,n_trials,avg_rmse_ms"]
    for snr in snrs:
        noisy = dataclasses.replace(scene, noise_power=snr_to_noise_power(snr))
        cube = synthesize_scene(noisy, radar, seed=args.seed or 0)
        result = run_pipeline(cube, cfg)
        manifest = run_manifest(result, "in-memory")
        grouped = {}
        for method in result.methods:
            per = {}
            for (m, mc, tick_index), people in result.estimates.items():
                if m != method:
                    continue
                t = float(result.tick_times_s[tick_index])
                per[(mc, t)] = people
            grouped[method] = per
        report, _ = evaluate_run(manifest, grouped, truth, noisy)
        for method, stats in report["methods"].items():
            rmse_block = report["rmse_ms"].get(method)
            avg = rmse_block["average"] if rmse_block else None
            avg_s = f"{avg:.3f}" if avg is not None else ""
            lines.append(
                f"{snr:.1f},{method},{stats['accuracy']:.6f},{stats['n_trials']},{avg_s}"
            )
        print(f"snr {snr:.1f} dB done")
    with open(out_dir / "sweep.csv", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_json(out_dir / "sweep_manifest.json", {
        "tool_version": __version__,
        "scene_sha256": file_digest(args.scene),
        "snr_db": snrs,
        "config": cfg.to_dict(),
        "sim_seed": args.seed or 0,
    })
    print(f"wrote {out_dir / 'sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="respspace",
        description="Multi-person respiration monitoring on simulated radar data",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a scene into a channel cube")
    p_sim.add_argument("--scene", required=True, help="scene JSON file")
    p_sim.add_argument("--out", required=True, help="output prefix")
    p_sim.add_argument("--seed", type=int, default=0, help="noise seed")
    p_sim.add_argument("--duration-s", type=float, default=None,
                       help="override scene duration")

    p_run = sub.add_parser("run", help="process a cube into person estimates")
    p_run.add_argument("--cube", required=True, help="input .rcube file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--config", default=None, help="pipeline config JSON")
    p_run.add_argument("--method", choices=METHODS + ("both",), default=None)
    p_run.add_argument("--seed", type=int, default=None, help="clustering base seed")
    p_run.add_argument("--monte-carlo", dest="monte_carlo", type=int, default=None,
                       help="number of clustering seeds")
    p_run.add_argument("--alpha", type=float, default=None)
    p_run.add_argument("--gate-db", dest="gate_db", type=float, default=None)
    p_run.add_argument("--cadence-s", dest="cadence_s", type=float, default=None)
    p_run.add_argument("--n-fft", dest="n_fft", type=int, default=None)
    p_run.add_argument("--angle-grid", dest="angle_grid",
                       choices=("symmetric", "onesided"), default=None)
    p_run.add_argument("--theta-scale", dest="theta_scale", type=float, default=None)
    p_run.add_argument("--parabolic-refine", action="store_true")

    p_eval = sub.add_parser("evaluate", help="score run output against truth")
    p_eval.add_argument("--results", required=True, help="run output directory")
    p_eval.add_argument("--truth", required=True, help="truth CSV from simulate")
    p_eval.add_argument("--scene", required=True, help="scene JSON (subject positions)")
    p_eval.add_argument("--out", default=None, help="report directory (default: results dir)")

    p_sweep = sub.add_parser("sweep", help="simulate+run+score over an SNR grid")
    p_sweep.add_argument("--scene", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--snr-db", dest="snr_db", default="0,10,20",
                         help="comma-separated SNR list")
    p_sweep.add_argument("--config", default=None)
    p_sweep.add_argument("--method", choices=METHODS + ("both",), default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--monte-carlo", dest="monte_carlo", type=int, default=None)
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "run": cmd_run,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (RcubeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SceneError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
