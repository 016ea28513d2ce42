"""Command-line entry point: run, serve, eval, prep, replay.

Exit codes: 0 success, 1 usage error, 2 domain failure. Flag values
override config-file values, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import runner, telemetry, world
from .errors import AnnotationFormatError, InvalidParameter, UndefinedMetric, WorldFileError
from .yieldkit.annotations import read_annotation_dir
from .yieldkit.boxes import EvalConfig
from .yieldkit.evaluate import evaluate_detections
from .yieldkit.prep import run_prep

USAGE_ERROR = 1
DOMAIN_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _load_config_file(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config file: {exc}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _merged(args: argparse.Namespace, defaults: dict) -> dict:
    """CLI > config file > defaults."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
        for key, value in file_values.items():
            if key in merged:
                merged[key] = value
    for key in merged:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _require_file(path, what: str) -> Path:
    p = Path(path) if path else None
    if p is None or not p.is_file():
        print(f"error: {what} not found: {path}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)
    return p


def _parse_start(text: str) -> tuple[float, float, float]:
    import math

    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError("start must be x,y,heading_deg")
    return float(parts[0]), float(parts[1]), math.radians(float(parts[2]))


def cmd_run(args) -> int:
    defaults = {
        "world": None,
        "mission": None,
        "seed": 0,
        "out": None,
        "telemetry_port": None,
        "rtk": True,
        "gps_sigma": None,
        "battery_v": None,
        "start": "1,1,0",
        "max_sim_s": 600.0,
    }
    cfg = _merged(args, defaults)
    world_path = _require_file(cfg["world"], "world file")
    mission_path = _require_file(cfg["mission"], "mission file")
    try:
        start = _parse_start(str(cfg["start"]))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR

    run_cfg = runner.RunConfig(
        world_path=str(world_path),
        mission_path=str(mission_path),
        seed=int(cfg["seed"]),
        out_dir=cfg["out"],
        telemetry_port=cfg["telemetry_port"],
        rtk=bool(cfg["rtk"]),
        gps_sigma_m=cfg["gps_sigma"],
        battery_v=cfg["battery_v"],
        start=start,
        max_sim_s=float(cfg["max_sim_s"]),
    )
    try:
        result = runner.run_mission(run_cfg)
    except WorldFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DOMAIN_ERROR
    if result.prearm_failures:
        print("prearm failed: " + ", ".join(result.prearm_failures), file=sys.stderr)
        return DOMAIN_ERROR
    if result.summary is not None:
        print(json.dumps(result.summary, indent=2))
    elif result.exit_code != 0:
        print(f"error: {result.reason}", file=sys.stderr)
    else:
        print(result.reason)
    return result.exit_code


def cmd_serve(args) -> int:
    defaults = {
        "world": None,
        "mission": None,
        "seed": 0,
        "out": None,
        "host": "127.0.0.1",
        "telemetry_port": 9500,
        "rtk_port": None,
        "rtk": True,
        "max_sim_s": 86400.0,
        "start": "1,1,0",
    }
    cfg = _merged(args, defaults)
    world_path = _require_file(cfg["world"], "world file")
    mission_path = None
    if cfg["mission"]:
        mission_path = str(_require_file(cfg["mission"], "mission file"))
    try:
        start = _parse_start(str(cfg["start"]))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    run_cfg = runner.RunConfig(
        world_path=str(world_path),
        mission_path=mission_path,
        seed=int(cfg["seed"]),
        out_dir=cfg["out"],
        host=str(cfg["host"]),
        telemetry_port=int(cfg["telemetry_port"]),
        rtk_port=cfg["rtk_port"],
        rtk=bool(cfg["rtk"]),
        max_sim_s=float(cfg["max_sim_s"]),
        start=start,
    )
    try:
        result = runner.serve_forever(run_cfg)
    except OSError as exc:
        print(f"error: cannot start service: {exc}", file=sys.stderr)
        return DOMAIN_ERROR
    return result.exit_code


def cmd_eval(args) -> int:
    gt_dir = args.gt
    pred_dir = args.pred
    if not Path(gt_dir).is_dir() or not Path(pred_dir).is_dir():
        print("error: --gt and --pred must be directories", file=sys.stderr)
        return USAGE_ERROR
    try:
        gts = read_annotation_dir(gt_dir, with_confidence=False)
        preds = read_annotation_dir(pred_dir, with_confidence=True)
    except AnnotationFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DOMAIN_ERROR
    if not set(gts) & set(preds):
        print("error: no overlapping image ids between gt and pred", file=sys.stderr)
        return DOMAIN_ERROR
    cfg = EvalConfig(confidence_threshold=args.conf_thr, iou_threshold=args.iou_thr)
    try:
        report = evaluate_detections(gts, preds, cfg)
    except UndefinedMetric as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DOMAIN_ERROR
    c = report["confusion"]
    print(f"confusion: tp={c['tp']} fn={c['fn']} fp={c['fp']} tn=0")
    print(f"accuracy:  {report['accuracy_pct']:.2f}%")
    print(f"ap50:      {report['ap50']:.4f}")
    print(f"map50_95:  {report['map50_95']:.4f}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        print(f"report written to {args.out}")
    return 0


def cmd_prep(args) -> int:
    src = args.src
    if not Path(src).is_dir():
        print(f"error: source directory not found: {src}", file=sys.stderr)
        return USAGE_ERROR
    operations = []
    for op in ("tile", "negatives", "augment", "split"):
        if getattr(args, op):
            operations.append(op)
    if not operations:
        print("error: choose at least one of --tile/--negatives/--augment/--split", file=sys.stderr)
        return USAGE_ERROR
    try:
        cols, rows = (int(v) for v in str(args.grid).lower().split("x"))
    except ValueError:
        print(f"error: --grid must look like 3x2, got {args.grid!r}", file=sys.stderr)
        return USAGE_ERROR
    try:
        manifest = run_prep(
            src,
            args.out,
            operations,
            seed=args.seed,
            grid=(cols, rows),
            augment_copies=args.augment_copies,
        )
    except AnnotationFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DOMAIN_ERROR
    except InvalidParameter as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    print(json.dumps({"operations": manifest["operations"]}, indent=2))
    return 0


def cmd_replay(args) -> int:
    log_path = _require_file(args.log, "telemetry log")
    world_path = _require_file(args.world, "world file")
    fmap = world.load_world(world_path)
    frames = telemetry.read_frame_log(log_path)
    summary = telemetry.summarize_frames(frames, fmap)
    print(json.dumps(summary, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="fieldrover", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a mission headless and write artifacts")
    run.add_argument("--world", help="world JSON file")
    run.add_argument("--mission", help="mission JSON file")
    run.add_argument("--seed", type=int, help="master seed (mandatory for reproducibility)")
    run.add_argument("--out", help="output directory for artifacts")
    run.add_argument("--config", help="JSON config file; flags override it")
    run.add_argument("--telemetry-port", dest="telemetry_port", type=int)
    run.add_argument("--rtk", dest="rtk", action="store_true", default=None)
    run.add_argument("--no-rtk", dest="rtk", action="store_false")
    run.add_argument("--gps-sigma", dest="gps_sigma", type=float, help="standard-GPS sigma override (m)")
    run.add_argument("--battery-v", dest="battery_v", type=float)
    run.add_argument("--start", help="start pose x,y,heading_deg")
    run.add_argument("--max-sim-s", dest="max_sim_s", type=float)
    run.set_defaults(func=cmd_run)

    serve = sub.add_parser("serve", help="serve telemetry and accept commands in real time")
    serve.add_argument("--world", help="world JSON file")
    serve.add_argument("--mission", help="optional mission preload")
    serve.add_argument("--seed", type=int)
    serve.add_argument("--out", help="write artifacts on shutdown")
    serve.add_argument("--config", help="JSON config file; flags override it")
    serve.add_argument("--host", help="bind address for the service ports")
    serve.add_argument("--telemetry-port", dest="telemetry_port", type=int)
    serve.add_argument("--rtk-port", dest="rtk_port", type=int, help="serve the correction stream")
    serve.add_argument("--rtk", dest="rtk", action="store_true", default=None)
    serve.add_argument("--no-rtk", dest="rtk", action="store_false")
    serve.add_argument("--start", help="start pose x,y,heading_deg")
    serve.add_argument("--max-sim-s", dest="max_sim_s", type=float)
    serve.set_defaults(func=cmd_serve)

    ev = sub.add_parser("eval", help="evaluate prediction files against ground truth")
    ev.add_argument("--gt", required=True, help="ground-truth annotation directory")
    ev.add_argument("--pred", required=True, help="prediction directory (confidence column)")
    ev.add_argument("--conf-thr", dest="conf_thr", type=float, default=0.25)
    ev.add_argument("--iou-thr", dest="iou_thr", type=float, default=0.70)
    ev.add_argument("--out", help="write the report JSON here")
    ev.set_defaults(func=cmd_eval)

    prep = sub.add_parser("prep", help="prepare a dataset: tile/negatives/augment/split")
    prep.add_argument("--src", required=True, help="directory of PNGs + .txt annotations")
    prep.add_argument("--out", required=True, help="output dataset directory")
    prep.add_argument("--seed", type=int, default=0)
    prep.add_argument("--tile", action="store_true")
    prep.add_argument("--negatives", action="store_true")
    prep.add_argument("--augment", action="store_true")
    prep.add_argument("--split", action="store_true")
    prep.add_argument("--augment-copies", dest="augment_copies", type=int, default=3)
    prep.add_argument("--grid", default="3x2", help="tile grid as COLSxROWS (cols*rows must be 6)")
    prep.set_defaults(func=cmd_prep)

    replay = sub.add_parser("replay", help="recompute mission statistics from a telemetry log")
    replay.add_argument("--log", required=True, help="telemetry NDJSON log")
    replay.add_argument("--world", required=True, help="world JSON file")
    replay.add_argument("--out", help="write the summary JSON here")
    replay.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
