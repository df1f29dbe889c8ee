"""Command-line front end for reproducible calibration experiments.

Subcommands: gen-scene, perturb, calibrate, evaluate, render.  Every run
writes a manifest.json holding the full configuration and seeds, and all
outputs are plain text / CSV / PGM so a run can be reproduced and diffed
byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import FrameSet
from .dataio import (
    default_sensor_poses,
    generate_scene,
    load_calib,
    load_frame,
    random_scene_spec,
    save_calib,
    save_frame,
)
from .errors import CalibrationError
from .estimate import (
    AlignmentCostConfig,
    identity_estimator,
    joint_estimator,
    oracle_estimator,
    pairwise_estimator,
    true_edges,
)
from .loss import LossWeights, PredictionSet
from .metrics import (
    ErrorRecord,
    error_record,
    format_summary_table,
    summarize_by_pair,
    summary_csv,
)
from .perturb import PRESETS, apply_miscalibration, sample_miscalibration
from .pipeline import (
    aggregate_sequence,
    refine_iterative,
    refine_multiframe,
    stages_from_preset,
)
from .projection import ProjectionConfig, project_pinhole
from .transform import RigidTransform, apply, invert

DEPTH_SCALE = 80.0

_SCENARIOS = {
    "small": ("small", False),
    "refine": ("refine", False),
    "full": ("full", False),
    "rigid-small": ("small", True),
    "rigid-refine": ("refine", True),
    "rigid-full": ("full", True),
}


def _write_manifest(out_dir: Path, payload: dict) -> None:
    payload = {"tool": "sensorcal", "version": __version__, **payload}
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )


def _camera_manifest(cfg: ProjectionConfig) -> dict:
    return {
        "width": cfg.width,
        "height": cfg.height,
        "fx": cfg.fx,
        "fy": cfg.fy,
        "cx": cfg.cx,
        "cy": cfg.cy,
        "depth_scale": DEPTH_SCALE,
    }


def _camera_from_manifest(camera: dict) -> ProjectionConfig:
    return ProjectionConfig.pinhole(
        camera["width"],
        camera["height"],
        fx=camera["fx"],
        fy=camera["fy"],
        cx=camera["cx"],
        cy=camera["cy"],
    )


def _frame_dirs(root: Path, n_frames: int) -> list[Path]:
    if n_frames == 1:
        return [root]
    return [root / f"frame_{k:03d}" for k in range(n_frames)]


def _load_frames(root: Path) -> tuple[list[FrameSet], dict]:
    manifest = json.loads((root / "manifest.json").read_text(encoding="ascii"))
    camera = _camera_from_manifest(manifest["camera"])
    scale = manifest["camera"]["depth_scale"]
    dirs = _frame_dirs(root, manifest["frames"])
    return [load_frame(d, camera, scale, index=k) for k, d in enumerate(dirs)], manifest


def cmd_gen_scene(args: argparse.Namespace) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output dir {out}: {exc}", file=sys.stderr)
        return 1
    poses = default_sensor_poses()
    for k, frame_dir in enumerate(_frame_dirs(out, args.frames)):
        spec = random_scene_spec(
            seed=args.seed + k,
            lidar_density=args.lidar_density,
            radar_density=args.radar_density,
            lidar_noise=args.lidar_noise,
            radar_noise=args.radar_noise,
            radar_dropout=args.dropout,
        )
        frame = generate_scene(spec, poses, index=k)
        save_frame(frame, frame_dir, DEPTH_SCALE)
    _write_manifest(
        out,
        {
            "command": "gen-scene",
            "seed": args.seed,
            "frames": args.frames,
            "lidar_density": args.lidar_density,
            "radar_density": args.radar_density,
            "lidar_noise": args.lidar_noise,
            "radar_noise": args.radar_noise,
            "dropout": args.dropout,
            "camera": _camera_manifest(frame.camera_config),
        },
    )
    print(f"wrote {args.frames} frame(s) to {out}")
    return 0


def cmd_perturb(args: argparse.Namespace) -> int:
    src = Path(args.frames)
    out = Path(args.out)
    frames, manifest = _load_frames(src)
    out.mkdir(parents=True, exist_ok=True)
    bounds = _bounds_from_args(args)
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 0)))
    dirs = _frame_dirs(out, len(frames))
    for frame, frame_dir in zip(frames, dirs):
        if not args.rigid or frame.index == 0:
            lidar_mis = sample_miscalibration(bounds, rng)
            radar_mis = sample_miscalibration(bounds, rng)
        perturbed = apply_miscalibration(frame, lidar_mis=lidar_mis, radar_mis=radar_mis)
        save_frame(perturbed, frame_dir, manifest["camera"]["depth_scale"])
    _write_manifest(
        out,
        {
            "command": "perturb",
            "source": str(src),
            "seed": args.seed,
            "frames": len(frames),
            "rigid": args.rigid,
            "max_translation_m": bounds.max_translation,
            "max_rotation_deg": math.degrees(bounds.max_rotation),
            "camera": manifest["camera"],
        },
    )
    print(f"wrote {len(frames)} perturbed frame(s) to {out}")
    return 0


def _bounds_from_args(args: argparse.Namespace):
    from .perturb import MiscalBounds

    return MiscalBounds(args.max_translation, math.radians(args.max_rotation))


def _build_estimator(name: str, w: LossWeights, cfg: AlignmentCostConfig, seed: int, budget: int):
    if name == "oracle":
        return oracle_estimator
    if name == "identity":
        return identity_estimator
    if name == "joint":
        return joint_estimator(w, cfg, seed=seed)
    if name == "pairwise":
        return pairwise_estimator(cfg, seed=seed)
    raise ValueError(f"unknown estimator {name!r}")


def _build_multiframe_estimator(name: str, w: LossWeights, cfg: AlignmentCostConfig, seed: int):
    from .estimate import estimate_multiframe

    if name in ("oracle", "identity"):
        single = oracle_estimator if name == "oracle" else identity_estimator
        return lambda frames, stage: single(frames[0], stage)
    if name == "joint":
        return lambda frames, stage: estimate_multiframe(frames, stage, w, cfg, seed=seed)
    if name == "pairwise":
        return lambda frames, stage: estimate_multiframe(
            frames, stage, LossWeights(loop_weight=0.0), cfg, seed=seed
        )
    raise ValueError(f"unknown estimator {name!r}")


def _calibrate_run(task: dict) -> tuple[int, list[dict]]:
    """One evaluation run: perturb, refine per frame, optionally aggregate.

    Module-level and driven by a plain dict so runs can execute in worker
    processes; rows come back as dicts of primitives.
    """
    frames, _ = _load_frames(Path(task["frames_dir"]))
    preset = PRESETS[task["preset"]]
    stages = stages_from_preset(preset, budget=task["budget"])
    w = LossWeights(loop_weight=task["loop_weight"])
    cfg = AlignmentCostConfig()
    run = task["run"]
    rigid = task["rigid"]
    rows: list[dict] = []
    per_frame_preds: list[PredictionSet] = []
    per_frame_gts: list[PredictionSet] = []
    rng = np.random.default_rng(np.random.SeedSequence((task["seed"], run)))
    bounds = preset.stages[0]
    group_size = task.get("multiframe", 1)
    if group_size > 1 and not rigid:
        raise ValueError("multiframe estimation assumes a rigid scenario")
    if rigid:
        lidar_mis = sample_miscalibration(bounds, rng)
        radar_mis = sample_miscalibration(bounds, rng)
    if group_size > 1:
        mf = _build_multiframe_estimator(
            task["estimator"], w, cfg,
            seed=int(np.random.SeedSequence((task["seed"], run)).generate_state(1)[0]),
        )
        for start in range(0, len(frames), group_size):
            group = [
                apply_miscalibration(f, lidar_mis=lidar_mis, radar_mis=radar_mis)
                for f in frames[start : start + group_size]
            ]
            preds = refine_multiframe(group, mf, stages)
            gts = true_edges(group[0])
            per_frame_preds.append(preds)
            per_frame_gts.append(gts)
            rows.extend(_prediction_rows(run, group[0].index, preds, gts))
    else:
        for frame in frames:
            if not rigid:
                lidar_mis = sample_miscalibration(bounds, rng)
                radar_mis = sample_miscalibration(bounds, rng)
            perturbed = apply_miscalibration(frame, lidar_mis=lidar_mis, radar_mis=radar_mis)
            est_seed = int(
                np.random.SeedSequence((task["seed"], run, frame.index)).generate_state(1)[0]
            )
            estimator = _build_estimator(
                task["estimator"], w, cfg, seed=est_seed, budget=task["budget"]
            )
            preds = refine_iterative(perturbed, estimator, stages)
            gts = true_edges(perturbed)
            per_frame_preds.append(preds)
            per_frame_gts.append(gts)
            rows.extend(_prediction_rows(run, frame.index, preds, gts))
    if rigid and len(per_frame_preds) > 1:
        agg = aggregate_sequence(per_frame_preds, mode=task["aggregate"])
        rows.extend(_prediction_rows(run, -1, agg, per_frame_gts[0]))
    return run, rows


def _prediction_rows(
    run: int, frame: int, preds: PredictionSet, gts: PredictionSet
) -> list[dict]:
    rows = []
    for name, pred in preds.present():
        gt = gts.get(name)
        rows.append(
            {
                "run": run,
                "frame": frame,
                "pair": name,
                "pred": [*pred.q.tolist(), *pred.t.tolist()],
                "gt": [*gt.q.tolist(), *gt.t.tolist()],
            }
        )
    return rows


def _rows_to_records(rows: list[dict], aggregated_only: bool) -> list[ErrorRecord]:
    records = []
    for row in rows:
        if aggregated_only and row["frame"] != -1:
            continue
        if not aggregated_only and row["frame"] == -1:
            continue
        pred = RigidTransform(q=np.array(row["pred"][:4]), t=np.array(row["pred"][4:]))
        gt = RigidTransform(q=np.array(row["gt"][:4]), t=np.array(row["gt"][4:]))
        records.append(error_record(pred, gt, row["pair"]))
    return records


def _predictions_csv(rows: list[dict]) -> str:
    header = "run,frame,pair," + ",".join(
        f"{side}_{c}" for side in ("pred", "gt") for c in ("qw", "qx", "qy", "qz", "tx", "ty", "tz")
    )
    lines = [header]
    for row in rows:
        values = [f"{v:.17g}" for v in row["pred"] + row["gt"]]
        lines.append(f"{row['run']},{row['frame']},{row['pair']}," + ",".join(values))
    return "\n".join(lines) + "\n"


def cmd_calibrate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preset_name, rigid = _SCENARIOS[args.scenario]
    runs = args.runs if args.runs is not None else (50 if rigid else 1)
    if args.multiframe > 1 and not rigid:
        print("error: --multiframe requires a rigid-* scenario", file=sys.stderr)
        return 1
    task_base = {
        "frames_dir": args.frames,
        "preset": preset_name,
        "rigid": rigid,
        "aggregate": args.aggregate,
        "estimator": args.estimator,
        "loop_weight": args.loop_weight,
        "budget": args.budget,
        "seed": args.seed,
        "multiframe": args.multiframe,
    }
    tasks = [{**task_base, "run": r} for r in range(runs)]
    all_rows: list[dict] = []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for _, rows in pool.map(_calibrate_run, tasks):
                all_rows.extend(rows)
    else:
        for task in tasks:
            _, rows = _calibrate_run(task)
            all_rows.extend(rows)

    (out / "predictions.csv").write_text(_predictions_csv(all_rows), encoding="ascii")
    first_run_final = {}
    for row in all_rows:
        if row["run"] == 0:
            first_run_final[row["pair"]] = RigidTransform(
                q=np.array(row["pred"][:4]), t=np.array(row["pred"][4:])
            )
    save_calib(first_run_final, out / "predicted_calib.txt")
    per_frame = _rows_to_records(all_rows, aggregated_only=False)
    from .metrics import records_csv

    (out / "errors.csv").write_text(records_csv(per_frame), encoding="ascii")
    summary_rows = _rows_to_records(all_rows, aggregated_only=True) if rigid else per_frame
    if not summary_rows:
        summary_rows = per_frame
    by_pair = summarize_by_pair(summary_rows)
    (out / "summary.csv").write_text(summary_csv(by_pair), encoding="ascii")
    table = format_summary_table(by_pair)
    (out / "summary.txt").write_text(table, encoding="ascii")
    _write_manifest(out, {"command": "calibrate", "runs": runs, **task_base})
    print(table, end="")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    lines = Path(args.pred).read_text(encoding="ascii").splitlines()
    for line in lines[1:]:
        parts = line.split(",")
        rows.append(
            {
                "run": int(parts[0]),
                "frame": int(parts[1]),
                "pair": parts[2],
                "pred": [float(v) for v in parts[3:10]],
                "gt": [float(v) for v in parts[10:17]],
            }
        )
    aggregated = [r for r in rows if r["frame"] == -1]
    records = _rows_to_records(rows, aggregated_only=bool(aggregated))
    by_pair = summarize_by_pair(records)
    (out / "summary.csv").write_text(summary_csv(by_pair), encoding="ascii")
    table = format_summary_table(by_pair)
    (out / "summary.txt").write_text(table, encoding="ascii")
    print(table, end="")
    return 0


def _overlay(frame: FrameSet, edges: PredictionSet, out_path: Path) -> None:
    """Camera depth base image with projected lidar/radar points on top."""
    base = np.clip(frame.camera_depth[..., 0] / DEPTH_SCALE, 0.0, 1.0)
    img = (base * 0.5 * 65535.0).astype(">u2")
    cfg = frame.camera_config
    layers = []
    if edges.cam_lidar is not None:
        layers.append((edges.cam_lidar, frame.lidar, 65535))
    if edges.radar_cam is not None:
        layers.append((invert(edges.radar_cam), frame.radar, 49152))
    for edge, cloud, gray in layers:
        raster = project_pinhole(
            apply(edge, cloud), replace(cfg, channels=("range",) + cloud.schema)
        )
        img[raster[..., 0] > 0] = gray
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode("ascii")
    out_path.write_bytes(header + img.tobytes())


def cmd_render(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames, _ = _load_frames(Path(args.frames))
    pred_edges = None
    if args.pred:
        calib = load_calib(args.pred)
        pred_edges = PredictionSet(
            cam_lidar=calib.get("cam_lidar"),
            lidar_radar=calib.get("lidar_radar"),
            radar_cam=calib.get("radar_cam"),
        )
    for frame in frames:
        for source in args.source:
            if source == "gt":
                edges = true_edges(frame)
            elif source == "miscalibrated":
                edges = PredictionSet(
                    cam_lidar=frame.fixed_cam_lidar,
                    lidar_radar=frame.fixed_lidar_radar,
                    radar_cam=frame.fixed_radar_cam,
                )
            else:
                if pred_edges is None:
                    print("error: --pred required for source 'predicted'", file=sys.stderr)
                    return 1
                edges = pred_edges
            _overlay(frame, edges, out / f"frame_{frame.index:03d}_{source}.pgm")
    print(f"wrote overlays to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensorcal",
        description="Targetless camera/lidar/radar extrinsic calibration test bench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="generate synthetic frames")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--lidar-density", type=int, default=4000)
    p.add_argument("--radar-density", type=int, default=400)
    p.add_argument("--lidar-noise", type=float, default=0.0)
    p.add_argument("--radar-noise", type=float, default=0.0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("perturb", help="apply random miscalibration to frames")
    p.add_argument("--frames", required=True, help="input frame directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-translation", type=float, default=0.2, help="meters per axis")
    p.add_argument("--max-rotation", type=float, default=1.0, help="degrees per axis")
    p.add_argument("--rigid", action="store_true", help="one miscalibration for all frames")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("calibrate", help="perturb, estimate, and report errors")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scenario", choices=sorted(_SCENARIOS), default="small")
    p.add_argument(
        "--estimator", choices=("joint", "pairwise", "oracle", "identity"), default="joint"
    )
    p.add_argument("--runs", type=int, default=None, help="default 1, or 50 for rigid-*")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loop-weight", "--lambda", dest="loop_weight", type=float, default=0.25)
    p.add_argument("--budget", type=int, default=1600, help="cost evaluations per stage")
    p.add_argument("--aggregate", choices=("median", "mean"), default="median")
    p.add_argument(
        "--multiframe", type=int, default=1,
        help="frames estimated together per group (rigid-* scenarios only)",
    )
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="recompute summaries from predictions.csv")
    p.add_argument("--pred", required=True, help="predictions.csv from calibrate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="overlay projected points on the camera depth image")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--source",
        nargs="+",
        choices=("gt", "miscalibrated", "predicted"),
        default=["gt"],
    )
    p.add_argument("--pred", help="calibration file for source 'predicted'")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
