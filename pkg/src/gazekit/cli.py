"""Command-line entry point.

Subcommands: match, swap, eval, gs-report, gradcheck, toyfit, stats,
annotate. Every run is deterministic for a fixed --seed; --jobs changes
wall-clock time but never results. A key=value config file can predefine any
flag of the chosen subcommand; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio, descent, evaluation, losses
from . import geometry as geo
from .errors import DescentDiverged, GazeKitError
from .matching import MatchConfig
from .normalization import NormParams

log = logging.getLogger("gazekit")


def _die(message: str, code: int = 2) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _report_issues(path, issues, limit: int = 5) -> str:
    head = "; ".join(str(i) for i in issues[:limit])
    more = f" (+{len(issues) - limit} more)" if len(issues) > limit else ""
    return f"{path}: {head}{more}"


def _load_or_die(loader, path):
    records, issues = loader(path)
    if issues:
        raise GazeKitError(_report_issues(path, issues))
    return records


# --------------------------------------------------------------------------
# subcommand implementations

def cmd_match(args) -> int:
    wider = _load_or_die(dataio.load_attributes, args.wider_attrs)
    xgaze = _load_or_die(dataio.load_attributes, args.xgaze_attrs)
    if not xgaze:
        return _die("no candidate records in " + str(args.xgaze_attrs))
    cfg = MatchConfig(alpha_lmk=args.alpha_lmk, alpha_pose=args.alpha_pose,
                      top_n=args.topn, beta_age=args.beta_age, beta_race=args.beta_race,
                      eye_swap_threshold=args.eye_threshold)
    faces = image_root = None
    if args.faces:
        faces = _load_or_die(dataio.load_annotations, args.faces)
        image_root = args.images or Path(args.faces).parent
    params = NormParams(distance_mm=args.norm_distance, focal_px=args.norm_focal,
                        crop_px=args.norm_crop)
    from .pipeline import run_matching
    results = run_matching(wider, xgaze, cfg, faces=faces, image_root=image_root,
                           params=params, jobs=args.jobs)
    dataio.write_matches(args.out, results)
    fallbacks = sum(1 for r in results if r.gender_fallback)
    print(f"matched {len(results)} faces -> {args.out}"
          + (f" ({fallbacks} gender-filter fallbacks)" if fallbacks else ""))
    return 0


def cmd_swap(args) -> int:
    faces = _load_or_die(dataio.load_annotations, args.faces)
    sources = _load_or_die(dataio.load_source_faces, args.sources)
    matches = _load_or_die(dataio.load_matches, args.matches)
    image_root = args.images or Path(args.faces).parent
    source_root = Path(args.sources).parent
    from .pipeline import run_swapping
    outcome = run_swapping(faces, image_root, sources, source_root, matches,
                           args.out_dir, jobs=args.jobs)
    out_dir = Path(args.out_dir)
    dataio.write_annotations(out_dir / "annotations.jsonl", outcome.annotations)
    stats = outcome.stats
    (out_dir / "stats.json").write_text(json.dumps(stats.__dict__, indent=2) + "\n",
                                        encoding="utf-8")
    print(f"swapped {stats.swapped}/{stats.faces} faces "
          f"({stats.skipped} skipped) -> {out_dir}")
    return 0 if stats.swapped > 0 or stats.faces == 0 else 1


def cmd_eval(args) -> int:
    gt = _load_or_die(dataio.load_gaze_labels, args.gt)
    pred = _load_or_die(dataio.load_gaze_labels, args.pred)
    pred_by_id = {p.face_id: p for p in pred}
    records, missing = [], 0
    for g in gt:
        p = pred_by_id.get(g.face_id)
        if p is None:
            missing += 1
            continue
        width = g.face_width
        if width is None:
            if args.bins == "width":
                return _die(f"record {g.face_id} has no face_width, required for width bins")
            width = 1.0
        records.append(evaluation.FaceEvalRecord(
            g.face_id, width,
            geo.angles_to_vector(math.radians(g.pitch_deg), math.radians(g.yaw_deg)),
            geo.angles_to_vector(math.radians(p.pitch_deg), math.radians(p.yaw_deg))))
    spec = evaluation.WIDTH_BINS if args.bins == "width" else evaluation.ANGLE_BINS
    out = evaluation.binned_error(records, spec, key=args.bins)

    rows = out.rows()
    with open(args.out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "mean_error_deg", "count"])
        for label, mean, count in rows:
            writer.writerow([label, f"{mean:.6f}", count])

    lines = [f"{'bin':>10} {'mean_err':>10} {'count':>7}"]
    for label, mean, count in rows:
        lines.append(f"{label:>10} {mean:>10.3f} {count:>7}")
    lines.append(f"out of range: {out.out_of_range}, missing predictions: {missing}")
    table = "\n".join(lines)
    if args.out_text:
        Path(args.out_text).write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_gs_report(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    x_tilde = np.round(np.arange(-0.99, 0.991, 0.01), 10)
    gs = geo.gaze_sensitivity(x_tilde * args.radius, args.radius)
    with open(out_dir / "gs_curve.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_over_r", "sensitivity"])
        for x, g in zip(x_tilde, gs):
            writer.writerow([f"{x:.2f}", f"{g:.9f}"])

    angles = list(range(5, 86, 10))
    front, multi = [], []
    for deg in angles:
        yaw = math.radians(deg)
        front.append(geo.quantization_error_mc(0.0, yaw, args.radius, args.pixel,
                                               (geo.FRONT,), args.samples, args.seed))
        multi.append(geo.quantization_error_mc(0.0, yaw, args.radius, args.pixel,
                                               geo.PLANES, args.samples, args.seed))
    with open(out_dir / "quantization_mc.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["angle_deg", "front_only_deg", "three_planes_deg"])
        for deg, f, m in zip(angles, front, multi):
            writer.writerow([deg, f"{f:.9f}", f"{m:.9f}"])

    ratio_front = front[-1] / front[0]
    ratio_multi = multi[-1] / multi[0]
    print(f"wrote {out_dir / 'gs_curve.csv'} and {out_dir / 'quantization_mc.csv'}")
    print(f"error growth 5->85 deg: front-only x{ratio_front:.2f}, "
          f"three-plane x{ratio_multi:.2f}")
    return 0


def cmd_gradcheck(args) -> int:
    worst: dict[str, float] = {}
    for k in range(args.instances):
        pred, target, p = losses.random_instance(args.seed + k, n_anchors=args.anchors)
        errs = losses.gradient_check(pred, target, p)
        for block, err in errs.items():
            worst[block] = max(worst.get(block, 0.0), err)
    print(f"{'block':>8} {'max_rel_err':>12}")
    for block in losses.GRAD_BLOCKS:
        print(f"{block:>8} {worst[block]:>12.3e}")
    overall = max(worst.values())
    print(f"overall max relative error: {overall:.3e} "
          f"({args.instances} instances, tolerance {args.tolerance:g})")
    return 0 if overall < args.tolerance else 1


def cmd_toyfit(args) -> int:
    inst = descent.make_toy_instance(seed=args.seed)
    lr = args.lr if args.lr is not None else inst.lr
    try:
        trace = descent.toy_descent(inst.features, inst.weights, inst.bias,
                                    inst.targets, inst.cfg, steps=args.steps, lr=lr)
    except DescentDiverged as exc:
        return _die(f"descent diverged at step {exc.step}", 1)
    resid = trace.consistency_residuals()[inst.targets.positive]
    initial, final = trace.losses[0], trace.losses[-1]
    print(f"steps {args.steps}, lr {lr:g}")
    print(f"loss: initial {initial:.6f} -> final {final:.6f}")
    print(f"max plane-consistency residual: {resid.max():.6f}")
    print("plane log-variances:", np.array2string(trace.p, precision=4))
    ok = final < 0.01 * initial and resid.max() < 1e-2
    print("converged" if ok else "did not reach convergence targets")
    return 0 if ok else 1


def cmd_stats(args) -> int:
    images = _load_or_die(dataio.load_annotations, args.annotations)
    stats = dataio.dataset_stats(images)
    payload = stats.__dict__
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"images: {stats.images}  faces: {stats.faces}  "
          f"swapped: {stats.swapped}  skipped: {stats.skipped}")
    if stats.faces:
        print(f"faces/image: {stats.min_faces_per_image}..{stats.max_faces_per_image}")
    for label in evaluation.WIDTH_BINS.labels:
        if label in stats.width_histogram:
            print(f"  width {label:>8}: {stats.width_histogram[label]}")
    if stats.width_below_range:
        print(f"  width <30: {stats.width_below_range}")
    for reason, count in sorted(stats.skip_reasons.items()):
        print(f"  skipped ({reason}): {count}")
    return 0


def cmd_annotate(args) -> int:
    import uvicorn

    from .service import create_app
    static = args.static
    if static is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static = bundled if bundled.is_dir() else None
    app = create_app(args.data_dir, crop_size=args.crop, static_dir=static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# --------------------------------------------------------------------------
# parser plumbing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazekit",
                                     description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="key=value file; explicit flags win")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("match", help="retrieve the best source face for every query")
    common(p)
    p.add_argument("--wider-attrs", required=True, type=Path)
    p.add_argument("--xgaze-attrs", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--faces", type=Path, default=None,
                   help="image manifest; enables warp/rotation embedding")
    p.add_argument("--images", type=Path, default=None,
                   help="image root (default: the manifest's directory)")
    p.add_argument("--alpha-lmk", type=float, default=1.0)
    p.add_argument("--alpha-pose", type=float, default=1.0)
    p.add_argument("--topn", type=int, default=50)
    p.add_argument("--beta-age", type=float, default=0.5)
    p.add_argument("--beta-race", type=float, default=0.5)
    p.add_argument("--eye-threshold", type=float, default=2.0)
    p.add_argument("--norm-distance", type=float, default=600.0)
    p.add_argument("--norm-focal", type=float, default=960.0)
    p.add_argument("--norm-crop", type=int, default=224)
    p.set_defaults(fn=cmd_match)

    p = sub.add_parser("swap", help="composite matched faces and transfer labels")
    common(p)
    p.add_argument("--faces", required=True, type=Path)
    p.add_argument("--images", type=Path, default=None)
    p.add_argument("--sources", required=True, type=Path)
    p.add_argument("--matches", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.set_defaults(fn=cmd_swap)

    p = sub.add_parser("eval", help="binned angular error tables")
    common(p)
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--bins", choices=("width", "angle"), default="width")
    p.add_argument("--out-csv", required=True, type=Path)
    p.add_argument("--out-text", type=Path, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gs-report", help="sensitivity curve and quantization table")
    common(p)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--radius", type=float, default=100.0)
    p.add_argument("--pixel", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(fn=cmd_gs_report)

    p = sub.add_parser("gradcheck", help="verify analytic loss gradients")
    common(p)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--anchors", type=int, default=5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("toyfit", help="desk-scale descent on the multi-task loss")
    common(p)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--lr", type=float, default=None,
                   help="default: the frozen instance's rate")
    p.set_defaults(fn=cmd_toyfit)

    p = sub.add_parser("stats", help="dataset statistics from an annotation manifest")
    common(p)
    p.add_argument("--annotations", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("annotate", help="serve the human-annotation backend")
    common(p)
    p.add_argument("--data-dir", required=True, type=Path)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--crop", type=int, default=224)
    p.add_argument("--static", type=Path, default=None,
                   help="UI bundle directory (default: bundled build if present)")
    p.set_defaults(fn=cmd_annotate)

    return parser


def _apply_config(argv: list[str]) -> list[str]:
    """Expand --config key=value files into flags ahead of the explicit ones."""
    if not argv or argv[0].startswith("-"):
        return argv
    path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            path = Path(argv[i + 1])
        elif token.startswith("--config="):
            path = Path(token.split("=", 1)[1])
    if path is None:
        return argv
    if not path.exists():
        raise GazeKitError(f"config file {path} does not exist")
    flags = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise GazeKitError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        flags.append(f"--{key}={value}")
    return [argv[0]] + flags + argv[1:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config(argv)
    except GazeKitError as exc:
        return _die(str(exc))
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.random.seed(args.seed)  # library defaults; explicit generators still rule
    try:
        return args.fn(args)
    except GazeKitError as exc:
        return _die(str(exc), 1)
    except FileNotFoundError as exc:
        return _die(f"{exc.filename}: no such file", 1)


if __name__ == "__main__":
    sys.exit(main())
