"""Command-line interface: refine, align, eval, simulate-coarse, train-toy,
normals and serve subcommands.

Machine-readable JSON goes to stdout (one line, sorted keys, no timestamps);
human logs go to stderr.  Exit codes: 0 success, 1 domain error, 2 usage.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import coarse as coarse_mod
from . import levelset, metrics, normals as normals_mod, raster, trainer
from .errors import DomainError
from .losses import sigmoid

log = logging.getLogger("contourforge")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _default_threads() -> int:
    env = os.environ.get("CONTOURFORGE_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _load_probability_field(path) -> raster.ScalarField:
    """Prediction raster from .fpm or .pgm, clipped into [0, 1]."""
    p = Path(path)
    if p.suffix.lower() == ".pgm":
        return raster.read_pgm(p)
    fld = raster.read_fpm(p)
    return raster.ScalarField(np.clip(fld.values, 0.0, 1.0), probabilities=True)


def _initial_mask(args) -> raster.BinaryMask:
    if args.init is not None:
        return raster.read_mask_pgm(args.init)
    poly = raster.load_polygon_json(args.init_poly)
    prob = _load_probability_field(args.prob)
    return raster.polygon_to_mask(poly, prob.width, prob.height)


def _speed_map(prob, init_mask, lam):
    channel = raster.ScalarField(prob.values[:1], probabilities=True)
    if lam > 0:
        y = levelset._smoothed_boundary(init_mask)
    else:
        y = raster.ScalarField(np.zeros_like(channel.values), probabilities=True)
    return levelset.compute_g(channel, y, lam)


def cmd_refine(args) -> int:
    prob = _load_probability_field(args.prob)
    init = _initial_mask(args)
    if init.empty:
        raise DomainError("initial mask is empty")
    if args.steps == 0:
        raster.write_mask_pgm(args.out, init)
        _emit({"steps_run": 0, "iou_vs_init": 1.0})
        return 0
    params = levelset.EvolutionParams(
        lam=args.lam, c=args.c, mu=args.mu, max_steps=args.steps,
        snapshot_every=min(5, args.steps), balloon_threshold=args.balloon_threshold,
    )
    traj = levelset.evolve(init, _speed_map(prob, init, args.lam), params)
    final = traj.final.mask
    raster.write_mask_pgm(args.out, final)
    if args.trajectory:
        levelset.export_trajectory(traj, args.trajectory)
    _emit({"steps_run": traj.final.step, "iou_vs_init": metrics.iou(final, init)})
    return 0


def cmd_align(args) -> int:
    gt = raster.read_mask_pgm(args.gt)
    prob = _load_probability_field(args.prob)
    params = levelset.EvolutionParams(
        lam=args.lam, c=args.c, mu=args.mu, max_steps=args.steps,
        snapshot_every=min(5, args.steps),
    )
    region, boundary, chosen = levelset.active_align(
        gt, raster.ScalarField(prob.values[:1], probabilities=True), params
    )
    raster.write_mask_pgm(args.out, region)
    if args.out_boundary:
        raster.write_mask_pgm(args.out_boundary, boundary)
    _emit({"chosen_t": chosen, "iou_vs_input": metrics.iou(region, gt)})
    return 0


def _scan_eval_dirs(pred_dir: Path, gt_dir: Path, k: int):
    images = sorted(
        {p.name.rsplit("_", 1)[0] for p in pred_dir.glob("*_*.fpm")}
    )
    if not images:
        raise DomainError(f"no *_<class>.fpm predictions found in {pred_dir}")
    missing = []
    for img in images:
        for c in range(k):
            if not (pred_dir / f"{img}_{c}.fpm").exists():
                missing.append(str(pred_dir / f"{img}_{c}.fpm"))
            if not (gt_dir / f"{img}_{c}.pgm").exists():
                missing.append(str(gt_dir / f"{img}_{c}.pgm"))
    if missing:
        raise DomainError("missing prediction/ground-truth pairs: " + ", ".join(missing))
    return images


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    images = _scan_eval_dirs(pred_dir, gt_dir, args.classes)
    preds, gts = [], []
    for img in images:
        planes = [_load_probability_field(pred_dir / f"{img}_{c}.fpm").channel(0)
                  for c in range(args.classes)]
        preds.append(raster.ScalarField(np.stack(planes), probabilities=True))
        gts.append([raster.read_mask_pgm(gt_dir / f"{img}_{c}.pgm") for c in range(args.classes)])
    params = metrics.MatchParams(tolerance_fraction=args.tol, thin_predictions=args.thin)
    result = metrics.evaluate_dataset(preds, gts, params, threads=args.threads)
    payload = result.to_json_dict()
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write("class,threshold,precision,recall\n")
            for ci, c in enumerate(result.classes):
                for p in c.pr:
                    f.write(f"{ci},{p.threshold},{p.precision},{p.recall}\n")
    _emit({"mean_mf_ods": result.mean_mf_ods, "mean_ap": result.mean_ap,
           "images": len(images), "out": str(args.out)})
    return 0


def cmd_simulate_coarse(args) -> int:
    fine = raster.read_mask_pgm(args.mask)
    res = coarse_mod.simulate_coarse(fine, args.target_err)
    raster.write_mask_pgm(args.out, res.coarse_mask)
    report = {
        "clicks": res.clicks,
        "achieved_error_px": res.achieved_error_px,
        "iou_vs_fine": metrics.iou(res.coarse_mask, fine),
    }
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
    _emit(report)
    return 0


def _build_circle_task(task: dict):
    size = int(task.get("size", 48))
    true_r = float(task.get("true_radius", 10))
    noisy_r = float(task.get("noisy_radius", true_r))
    blur = float(task.get("blur_sigma", 2.0))
    yy, xx = np.mgrid[0:size, 0:size]
    center = size / 2.0
    true_region = raster.BinaryMask(np.hypot(xx - center, yy - center) <= true_r)
    noisy_region = raster.BinaryMask(np.hypot(xx - center, yy - center) <= noisy_r)
    b = raster.mask_to_boundary(true_region).to_field()
    s = raster.gaussian_smooth(raster.ScalarField(b.values), blur).values[0]
    prob = np.clip(0.9 * s / s.max(), 0.02, 0.9)
    logits = raster.ScalarField(np.log(prob / (1.0 - prob)))
    return logits, noisy_region, true_region


def cmd_train_toy(args) -> int:
    with open(args.config, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    config = trainer.TrainConfig.from_json_dict(cfg)
    logits, noisy, true_region = _build_circle_task(cfg.get("task", {}))
    report = trainer.train(logits, noisy, config, true_reference=true_region)
    out = Path(args.out)
    report.save(out)
    raster.write_pgm(out / "final_pred.pgm",
                     raster.ScalarField(sigmoid(report.final_logits.values)))
    _emit({"iterations": len(report.losses), "final_total": report.losses[-1].total,
           "alignments": len(report.alignments), "out": str(out)})
    return 0


def cmd_normals(args) -> int:
    field = _load_probability_field(args.boundary)
    nf = normals_mod.estimate_normals(
        raster.ScalarField(field.values[:1]), args.sigma
    )
    normals_mod.write_normals(args.out, nf)
    _emit({"valid_pixels": int(nf.valid.sum()), "out": str(args.out)})
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(cors_origin=args.cors_origin)
    if args.data:
        from .service import preload_maps

        loaded = preload_maps(app, args.data)
        for name, map_id in loaded.items():
            log.info("loaded %s as map %s", name, map_id)
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contourforge",
        description="Boundary refinement, alignment, evaluation and annotation tools.",
    )
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    parser.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker pool bound for dataset-parallel commands "
                             "(CONTOURFORGE_THREADS as fallback)")
    parser.add_argument("--seed", type=int, default=0, help="seed for any randomized step")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", help="evolve a coarse mask toward prediction ridges")
    p.add_argument("--prob", required=True, help="probability map (.fpm or .pgm)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--init", help="initial mask (PGM)")
    group.add_argument("--init-poly", help="initial polygon (JSON)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--mu", type=int, default=1)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--balloon-threshold", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.add_argument("--trajectory", help="directory for snapshot export")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("align", help="actively align a noisy ground-truth region")
    p.add_argument("--gt", required=True, help="noisy region mask (PGM)")
    p.add_argument("--prob", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--mu", type=int, default=1)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--out-boundary")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="boundary benchmark over prediction/gt directories")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--tol", type=float, default=0.0075)
    p.add_argument("--thin", type=_parse_bool, default=False)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate-coarse", help="coarsen a fine mask to a click budget")
    p.add_argument("--mask", required=True)
    p.add_argument("--target-err", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_simulate_coarse)

    p = sub.add_parser("train-toy", help="train the per-pixel toy model")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("normals", help="estimate boundary normals")
    p.add_argument("--boundary", required=True, help="boundary map (.fpm or .pgm)")
    p.add_argument("--sigma", type=float, default=normals_mod.DEFAULT_SIGMA)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_normals)

    p = sub.add_parser("serve", help="run the interactive refinement service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--data", help="directory of rasters to preload into the map store")
    p.add_argument("--cors-origin")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    np.random.seed(args.seed % (2**32))
    try:
        return args.func(args)
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
