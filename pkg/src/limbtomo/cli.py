"""Command-line entry point: generate / simulate / reconstruct / train /
pipeline / evaluate.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
error.  All randomness flows from --seed (default 0); identical inputs and
seed give byte-identical outputs.
"""

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluate, geometry, io, neural, phantom, pipeline, solver
from .errors import ConfigurationError, DataError, LimbtomoError


def _load_pipeline_config(path, size=None):
    if path:
        cfg = pipeline.PipelineConfig.from_json(io.read_json(path))
    elif size is not None and size <= 64:
        cfg = pipeline.desk_config(size=size)
    else:
        cfg = pipeline.PipelineConfig()
    if size is not None and cfg.size != size:
        cfg = replace(cfg, size=size).validate()
    return cfg


def cmd_generate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.three_balls:
        specs = phantom.three_ball_phantom()
        volume = phantom.render_lp_volume(specs, args.size)
        (out / "phantoms").mkdir(exist_ok=True)
        for y in range(args.size):
            io.save_array(out / "phantoms" / f"{y:04d}.bin", volume[y])
        io.write_json(out / "specs.json", {
            "kind": "lp_ball_volume",
            "size": args.size,
            "balls": [{"center": list(s.center), "radius": s.radius,
                       "exponent": s.exponent, "value": s.value} for s in specs],
            "mid_ball_slices": phantom.mid_ball_slices(specs, args.size),
        })
        (out / "seed.txt").write_text(f"{args.seed}\n")
        print(f"wrote {args.size} xz-slices of the three-ball volume to {out}")
    else:
        dataset = phantom.sample_dataset(args.phantoms, args.size, args.seed)
        phantom.save_dataset(out, dataset, args.seed)
        print(f"wrote {len(dataset)} ellipse phantoms to {out}")
    return 0


def _phantom_files(dir_path):
    files = sorted((Path(dir_path) / "phantoms").glob("*.bin"))
    if not files:
        raise DataError(f"no phantom files under {dir_path}/phantoms")
    return files


def cmd_simulate(args):
    cfg = _load_pipeline_config(args.geometry)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = _phantom_files(args.in_dir)
    names = []
    for i, f in enumerate(files):
        img = io.load_array(f)
        geom = geometry.limited_angle_geometry(
            cfg.n_angles, cfg.angle_start, cfg.angle_stop,
            detector_count=img.shape[0], detector_spacing=cfg.detector_spacing)
        sino = geometry.radon_forward(img, geom)
        noisy = geometry.add_noise(sino, args.noise, args.seed + i)
        name = f"sino_{i:04d}.bin"
        io.save_array(out / name, noisy.values)
        names.append(name)
    io.write_json(out / "manifest.json", {
        "geometry": {"n_angles": cfg.n_angles, "angle_start": cfg.angle_start,
                     "angle_stop": cfg.angle_stop,
                     "detector_spacing": cfg.detector_spacing},
        "noise": args.noise, "seed": args.seed, "files": names,
        "source": str(args.in_dir),
    })
    print(f"wrote {len(names)} sinograms to {out}")
    return 0


def _sino_from_file(path, cfg):
    values = io.load_array(path)
    geom = geometry.limited_angle_geometry(
        cfg.n_angles, cfg.angle_start, cfg.angle_stop,
        detector_count=values.shape[1], detector_spacing=cfg.detector_spacing)
    if values.shape[0] != geom.n_angles:
        raise DataError(f"{path}: {values.shape[0]} rows but geometry has "
                        f"{geom.n_angles} angles")
    return geometry.Sinogram(geom, values)


def cmd_reconstruct(args):
    solver_doc = io.read_json(args.solver) if args.solver else {}
    kw = solver.solver_config_from_json(solver_doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _load_pipeline_config(None, size=args.size)
    sino = _sino_from_file(args.sino, cfg)
    size = args.size or sino.geometry.detector_count
    params = solver.make_params(sino.geometry, size, sino=sino, **kw)
    reco, state = solver.pdfp_solve(sino, sino.geometry, params, size=size)
    io.save_array(out / "reco.bin", reco)
    io.save_pgm(out / "reco.pgm", reco)
    solver.trace_to_csv(state, out / "trace.csv")
    print(f"final objective {state.objective_trace[-1][2]:.6g} -> {out}")
    return 0


def cmd_train(args):
    cfg = _load_pipeline_config(args.config)
    phantoms = phantom.load_dataset(args.data)
    if cfg.size != phantoms[0][0].shape[0]:
        cfg = replace(cfg, size=phantoms[0][0].shape[0]).validate()
    train_cfg = neural.TrainConfig(**(io.read_json(args.train_config)
                                      if args.train_config else {}))
    if args.network == "n1":
        spec = neural.mask_net_spec(cfg.desk_scale_networks)
        data = pipeline.build_n1_dataset(phantoms, cfg, seed=args.seed,
                                         jobs=args.jobs)
    else:
        spec = neural.completion_net_spec(cfg.desk_scale_networks)
        data = pipeline.build_n2_dataset(phantoms, cfg)
    params, log = neural.train(spec, data, train_cfg, seed=args.seed)
    neural.save_params(args.out, params, spec)
    neural.training_log_to_csv(log, str(args.out) + ".log.csv")
    print(f"{args.network}: final validation dice loss {log[-1][2]:.4f} "
          f"(best {min(row[2] for row in log):.4f}) -> {args.out}")
    return 0


def cmd_pipeline(args):
    cfg = _load_pipeline_config(args.config)
    cfg = replace(cfg, weights_mask=args.weights_n1,
                  weights_completion=args.weights_n2)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.volume:
        manifest = io.read_json(Path(args.volume) / "manifest.json")
        files = [Path(args.volume) / n for n in manifest["files"]]
        sinos = []
        for f in files:
            sino = _sino_from_file(f, cfg)
            if cfg.size != sino.geometry.detector_count:
                cfg = replace(cfg, size=sino.geometry.detector_count).validate()
            sinos.append(sino)
        results = pipeline.run_volume(sinos, cfg, jobs=args.jobs)
        for i, result in enumerate(results):
            pipeline.write_slice_outputs(out / f"slice_{i:03d}", result, i)
        print(f"processed {len(results)} slices -> {out}")
    else:
        sino = _sino_from_file(args.sino, cfg)
        if cfg.size != sino.geometry.detector_count:
            cfg = replace(cfg, size=sino.geometry.detector_count).validate()
        result = pipeline.run_slice(sino, cfg)
        pipeline.write_slice_outputs(out / "slice_000", result, 0)
        print(f"processed 1 slice -> {out}")
    io.write_json(out / "pipeline.json", cfg.to_json())
    return 0


def cmd_evaluate(args):
    t0 = time.perf_counter()
    slices = [int(s) for s in args.slices.split(",")] if args.slices else None
    results_root = Path(args.results)
    truth_files = _phantom_files(args.truth)
    if slices is None:
        slices = list(range(len(truth_files)))
    results, truths = [], []
    hashes = {}
    for idx in slices:
        slice_dir = results_root / f"slice_{idx:03d}"
        support = io.load_array(slice_dir / "masks" / "support.bin")
        skeleton = io.load_array(slice_dir / "masks" / "skeleton.bin")
        reco = io.load_array(slice_dir / "reco.bin")
        boundary = pipeline.BoundaryEstimate(
            singular_support=support.astype(np.uint8),
            skeleton=skeleton.astype(np.uint8),
            overlay=pipeline.render_overlay(reco, skeleton.astype(np.uint8)))
        results.append(pipeline.SliceResult(reconstruction=reco,
                                            boundary=boundary, stacks={}))
        truths.append(io.load_array(truth_files[idx]))
        hashes[f"slice_{idx:03d}"] = io.sha256_of(slice_dir / "masks" / "skeleton.bin")
    cfg_doc = {}
    cfg_path = results_root / "pipeline.json"
    if cfg_path.exists():
        cfg_doc = io.read_json(cfg_path)
    closing = cfg_doc.get("closing_radius", 3)
    report = evaluate.evaluate_slices(results, truths, slices,
                                      closing_radius=closing, config=cfg_doc,
                                      input_hashes=hashes)
    report.runtime_seconds = time.perf_counter() - t0
    out = Path(args.out)
    evaluate.write_report(report, out.parent if out.suffix else out,
                          stem=out.stem if out.suffix else "report")
    for k in sorted(report.slice_dsc, key=int):
        print(f"slice {k}: DSC {report.slice_dsc[k]:.5f}")
    print(f"mean DSC {report.mean_dsc:.5f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="limbtomo",
        description="Limited-angle tomography with learned boundary estimates")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render phantom datasets")
    p.add_argument("--phantoms", type=int, default=1000,
                   help="number of ellipse phantoms (default 1000)")
    p.add_argument("--size", type=int, default=128, help="image side (default 128)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--three-balls", action="store_true",
                   help="write the three-ball volume instead of ellipses")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="project phantoms into noisy sinograms")
    p.add_argument("--in", dest="in_dir", required=True, help="phantom dataset dir")
    p.add_argument("--geometry", help="pipeline config JSON supplying the geometry")
    p.add_argument("--noise", type=float, default=0.05,
                   help="Gaussian noise level relative to max (default 0.05)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--out", required=True, help="output sinogram directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="PDFP reconstruction of one sinogram")
    p.add_argument("--sino", required=True, help="sinogram flat-binary file")
    p.add_argument("--solver", help="solver config JSON {mu,tau,lambda,iterations}")
    p.add_argument("--size", type=int, help="image side (default: detector count)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", help="train the mask (n1) or completion (n2) network")
    p.add_argument("--network", choices=("n1", "n2"), required=True)
    p.add_argument("--data", required=True, help="ellipse phantom dataset dir")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--train-config", help="training config JSON")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers for dataset building (default 1)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--out", required=True, help="weights output file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pipeline", help="run the full boundary-estimate workflow")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--sino", help="single sinogram file")
    group.add_argument("--volume", help="sinogram directory with manifest.json")
    p.add_argument("--weights-n1", required=True, help="mask network weights")
    p.add_argument("--weights-n2", required=True, help="completion network weights")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel slice workers (default 1)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("evaluate", help="dice scores of results against truth")
    p.add_argument("--results", required=True, help="pipeline output directory")
    p.add_argument("--truth", required=True, help="ground-truth phantom dir")
    p.add_argument("--slices", help="comma-separated slice indices (default: all)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--out", default="report.json", help="report path")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LimbtomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: missing file {exc.filename}", file=sys.stderr)
        return DataError.exit_code
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON ({exc})", file=sys.stderr)
        return ConfigurationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
