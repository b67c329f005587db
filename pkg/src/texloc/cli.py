"""Command-line surface for the localization pipeline.

Subcommands map one-to-one onto the library stages: dataset generation,
map building, single-image localization, global and local evaluation,
reference-budget sweeps, model prediction from saved records, parameter
optimization, and the spatial-randomness report. Every run writes a small
JSON manifest next to its primary output so results can be reproduced.

Exit codes: 0 success, 1 unexpected failure, 2 usage, 3 file/I-O trouble,
4 format or config mismatch, 5 invalid domain input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .config import (
    ParameterConfig,
    load_config,
    load_space,
    save_config,
)
from .datagen import DatasetSpec, generate_dataset, load_dataset, save_dataset
from .errors import (
    ConfigMismatchError,
    DomainError,
    EmptyInputError,
    EmptyRecordsError,
    FingerprintMismatchError,
    ImageIoError,
    TexlocError,
    UnsupportedFormatError,
    VersionMismatchError,
)
from .evaluation import (
    csr_diagnostic,
    estimate_cells_per_reference_image,
    estimate_model_inputs,
    evaluate_global,
    inlier_ratio,
    local_success_rate,
    read_records_csv,
    run_inlier_evaluation,
    run_outlier_evaluation,
    vote_cell_bound,
    write_records_csv,
)
from .evaluation import FeatureCache
from .geometry import Pose2D, is_success, pose_error
from .imaging import load_image
from .localization import PosePrior, localize
from .mapping import build_map, load_map, save_map
from .optimizer import evaluate_config, run_optimization, write_optimization_log
from .prediction import (
    predict_success_rate,
    scale_inputs_for_nr,
    write_prediction_report,
)


def _write_manifest(path, command: str, args: argparse.Namespace, outputs: list) -> None:
    manifest = {
        "command": command,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "outputs": outputs,
        "package_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _spec_from_args(args) -> DatasetSpec:
    return DatasetSpec(
        seed=args.seed,
        world_width=args.world_width,
        world_height=args.world_height,
        style=args.style,
        density=args.density,
        contrast=args.contrast,
        noise_sigma=args.noise_sigma,
        view_width=args.view_width,
        view_height=args.view_height,
        ref_overlap=args.ref_overlap,
        num_queries=args.num_queries,
        num_test_sets=args.num_test_sets,
        queries_per_test_set=args.queries_per_set,
    )


def cmd_generate(args) -> int:
    bundle = generate_dataset(_spec_from_args(args))
    save_dataset(bundle, args.out)
    _write_manifest(f"{args.out}/run.manifest.json", "generate", args, [args.out])
    print(
        f"dataset written to {args.out}: {len(bundle.references)} references, "
        f"{len(bundle.queries)} queries, {len(bundle.test_sets)} test sets"
    )
    return 0


def cmd_build_map(args) -> int:
    config = load_config(args.config)
    bundle = load_dataset(args.dataset)
    refmap = build_map(
        [(r.image, r.pose) for r in bundle.references], config, subsample_seed=args.subsample_seed
    )
    save_map(refmap, args.out)
    _write_manifest(f"{args.out}.manifest.json", "build-map", args, [args.out])
    print(f"map written to {args.out}: {len(refmap.images)} images, {refmap.num_features} features")
    return 0


def cmd_localize(args) -> int:
    config = load_config(args.config)
    refmap = load_map(args.map)
    image = load_image(args.image)
    prior = None
    if args.prior is not None:
        px, py, pt = args.prior
        prior = PosePrior(pose=Pose2D(px, py, math.radians(pt)), radius=args.prior_radius)
    result = localize(image, refmap, config, prior=prior, seed=args.seed)
    if result.estimated_pose is None:
        print("no pose: voting peak too weak")
        return 0
    p = result.estimated_pose
    print(f"pose: x={p.x:.2f} y={p.y:.2f} theta_deg={math.degrees(p.theta):.3f}")
    print(
        f"peak votes: {result.stats.peak_votes}  matches: {result.stats.num_matches}  "
        f"occupied cells: {result.stats.num_occupied_cells}"
    )
    if args.truth is not None:
        tx, ty, tt = args.truth
        truth = Pose2D(tx, ty, math.radians(tt))
        perr, oerr = pose_error(p, truth)
        ok = is_success(p, truth)
        print(f"errors: position={perr:.2f} px orientation={oerr:.3f} deg success={ok}")
    return 0


def cmd_eval_global(args) -> int:
    config = load_config(args.config)
    bundle = load_dataset(args.dataset)
    refmap = load_map(args.map)
    rate, records = evaluate_global(bundle.queries, refmap, config)
    write_records_csv(records, args.out)
    _write_manifest(f"{args.out}.manifest.json", "eval-global", args, [args.out])
    print(f"global success rate: {rate:.4f} over {len(records)} queries")
    return 0


def _evaluate_local_full(config, test_set, expected_cells=None) -> dict:
    cache = FeatureCache(config)
    inlier_records = run_inlier_evaluation(test_set, config, cache=cache)
    outlier_records = run_outlier_evaluation(test_set, config, cache=cache)
    if expected_cells is None:
        expected_cells = (
            estimate_cells_per_reference_image(outlier_records) * test_set.target_map_images
        )
        bound = vote_cell_bound(test_set, config.cell_size)
        if bound is not None:
            expected_cells = min(expected_cells, bound)
    inputs = estimate_model_inputs(
        inlier_records,
        outlier_records,
        expected_cells,
        config.matching_variant,
        expected_map_images=test_set.target_map_images,
    )
    return {
        "inlier_records": inlier_records,
        "outlier_records": outlier_records,
        "expected_cells": expected_cells,
        "inputs": inputs,
        "predicted": predict_success_rate(inputs),
        "local": local_success_rate(inlier_records, outlier_records),
        "ratio": inlier_ratio(inlier_records, outlier_records),
    }


def cmd_eval_local(args) -> int:
    config = load_config(args.config)
    bundle = load_dataset(args.dataset)
    test_set = bundle.test_sets[args.set_index]
    ev = _evaluate_local_full(config, test_set, args.expected_cells)
    write_records_csv(ev["inlier_records"], f"{args.out_prefix}_inlier.csv")
    write_records_csv(ev["outlier_records"], f"{args.out_prefix}_outlier.csv")
    write_prediction_report(ev["inputs"], f"{args.out_prefix}_prediction.json")
    _write_manifest(
        f"{args.out_prefix}.manifest.json",
        "eval-local",
        args,
        [f"{args.out_prefix}_inlier.csv", f"{args.out_prefix}_outlier.csv"],
    )
    print(f"expected cells: {ev['expected_cells']:.1f}")
    print(f"local success rate: {ev['local']:.4f}")
    print(f"inlier ratio: {ev['ratio']:.4f}")
    print(f"predicted success rate: {ev['predicted']:.4f}")
    return 0


def cmd_sweep_nr(args) -> int:
    import csv as _csv

    config = load_config(args.config)
    bundle = load_dataset(args.dataset)
    test_set = bundle.test_sets[args.set_index]
    nrs = [int(v) for v in args.nr_list.split(",") if v]
    if not nrs:
        raise EmptyInputError("empty nr list")

    rows = []
    anchor = None
    if args.mode == "shortcut":
        anchor = _evaluate_local_full(config, test_set, args.expected_cells)

    global_rates = {}
    if not args.skip_global:
        for nr in nrs:
            cfg_nr = config.with_value("reference_feature_cap", nr)
            refmap = build_map([(r.image, r.pose) for r in bundle.references], cfg_nr)
            rate, _ = evaluate_global(bundle.queries, refmap, cfg_nr)
            global_rates[nr] = rate

    for nr in nrs:
        if args.mode == "shortcut":
            scaled = scale_inputs_for_nr(
                anchor["inputs"], config.reference_feature_cap, nr
            )
            predicted = predict_success_rate(scaled)
            local = anchor["local"] if nr == config.reference_feature_cap else None
            ratio = anchor["ratio"] if nr == config.reference_feature_cap else None
        else:
            ev = _evaluate_local_full(
                config.with_value("reference_feature_cap", nr), test_set, args.expected_cells
            )
            predicted, local, ratio = ev["predicted"], ev["local"], ev["ratio"]
        rows.append(
            {
                "nr": nr,
                "global_success": global_rates.get(nr),
                "local_success": local,
                "predicted_success": predicted,
                "inlier_ratio": ratio,
            }
        )

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["nr", "global_success", "local_success", "predicted_success", "inlier_ratio"])
        for row in rows:
            writer.writerow(
                [
                    row["nr"],
                    "" if row["global_success"] is None else repr(row["global_success"]),
                    "" if row["local_success"] is None else repr(row["local_success"]),
                    repr(row["predicted_success"]),
                    "" if row["inlier_ratio"] is None else repr(row["inlier_ratio"]),
                ]
            )
    _write_manifest(f"{args.out}.manifest.json", "sweep-nr", args, [args.out])

    if global_rates:
        errs = [abs(r["predicted_success"] - r["global_success"]) for r in rows]
        print(f"mean |predicted - global|: {float(np.mean(errs)):.4f}")
    print(f"sweep written to {args.out} ({len(rows)} budgets, mode={args.mode})")
    return 0


def cmd_predict(args) -> int:
    inlier_records = read_records_csv(args.inlier_records)
    outlier_records = read_records_csv(args.outlier_records)
    inputs = estimate_model_inputs(
        inlier_records,
        outlier_records,
        args.expected_cells,
        args.variant,
        expected_map_images=args.map_images,
    )
    prob = predict_success_rate(inputs)
    if args.out:
        write_prediction_report(inputs, args.out)
        _write_manifest(f"{args.out}.manifest.json", "predict", args, [args.out])
    print(f"predicted success rate: {prob:.6f}")
    return 0


def cmd_optimize(args) -> int:
    space = load_space(args.space)
    bundle = load_dataset(args.dataset)
    test_set = bundle.test_sets[args.set_index]
    result = run_optimization(
        space,
        test_set,
        budget_iterations=args.budget_iters,
        seed=args.seed,
        expected_cells=args.expected_cells,
    )
    save_config(result.best.config, args.out_config)
    write_optimization_log(result.log, args.out_log)
    _write_manifest(
        f"{args.out_config}.manifest.json", "optimize", args, [args.out_config, args.out_log]
    )
    print(
        f"best predicted success: {result.best.predicted_success:.4f} "
        f"(eval time {result.best.eval_time:.6f} pseudo-s) after "
        f"{len(result.sampled_entries())} sampled candidates, {len(result.log)} evaluations"
    )
    return 0


def cmd_csr_report(args) -> int:
    import csv as _csv

    records = read_records_csv(args.records)
    diag = csr_diagnostic(records)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["votes_per_cell", "empirical_ratio", "predicted_ratio"])
        for i, (e, p) in enumerate(zip(diag.empirical, diag.predicted), start=1):
            writer.writerow([i, repr(float(e)), repr(float(p))])
    _write_manifest(f"{args.out}.manifest.json", "csr-report", args, [args.out])
    print(f"total variation (empirical vs predicted): {diag.total_variation:.4f}")
    return 0


def _add_config_arg(p):
    p.add_argument("--config", required=True, help="parameter config JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="texloc",
        description="ground-texture localization: mapping, voting, success modeling, tuning",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="reserved; the pipeline currently runs single-threaded for determinism",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--style", default="speckle")
    p.add_argument("--world-width", type=int, default=1600)
    p.add_argument("--world-height", type=int, default=1200)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--contrast", type=float, default=40.0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--view-width", type=int, default=320)
    p.add_argument("--view-height", type=int, default=240)
    p.add_argument("--ref-overlap", type=float, default=0.5)
    p.add_argument("--num-queries", type=int, default=40)
    p.add_argument("--num-test-sets", type=int, default=1)
    p.add_argument("--queries-per-set", type=int, default=10)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("build-map", help="extract features and write a map file")
    p.add_argument("--dataset", required=True)
    _add_config_arg(p)
    p.add_argument("--out", required=True)
    p.add_argument("--subsample-seed", type=int, default=0)
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("localize", help="localize one query image against a map")
    p.add_argument("--map", required=True)
    _add_config_arg(p)
    p.add_argument("--image", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", type=float, nargs=3, metavar=("X", "Y", "THETA_DEG"))
    p.add_argument("--prior", type=float, nargs=3, metavar=("X", "Y", "THETA_DEG"))
    p.add_argument("--prior-radius", type=float, default=400.0)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval-global", help="exhaustive success rate over dataset queries")
    p.add_argument("--dataset", required=True)
    p.add_argument("--map", required=True)
    _add_config_arg(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_global)

    p = sub.add_parser("eval-local", help="test-image evaluation and model prediction")
    p.add_argument("--dataset", required=True)
    _add_config_arg(p)
    p.add_argument("--set-index", type=int, default=0)
    p.add_argument("--expected-cells", type=float, default=None)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_eval_local)

    p = sub.add_parser("sweep-nr", help="reference-budget sweep (rescan or shortcut)")
    p.add_argument("--dataset", required=True)
    _add_config_arg(p)
    p.add_argument("--set-index", type=int, default=0)
    p.add_argument("--nr-list", required=True, help="comma-separated budgets")
    p.add_argument("--mode", choices=["rescan", "shortcut"], default="shortcut")
    p.add_argument("--expected-cells", type=float, default=None)
    p.add_argument("--skip-global", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_nr)

    p = sub.add_parser("predict", help="model prediction from saved evaluation records")
    p.add_argument("--inlier-records", required=True)
    p.add_argument("--outlier-records", required=True)
    p.add_argument("--expected-cells", type=float, required=True)
    p.add_argument("--variant", choices=["nearest", "identity"], default="identity")
    p.add_argument(
        "--map-images",
        type=int,
        default=1,
        help="full-map image count the identity-variant outlier rate scales to",
    )
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("optimize", help="model-driven parameter search")
    p.add_argument("--dataset", required=True)
    p.add_argument("--space", required=True, help="parameter space JSON")
    p.add_argument("--set-index", type=int, default=0)
    p.add_argument("--budget-iters", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--expected-cells", type=float, default=None)
    p.add_argument("--out-config", required=True)
    p.add_argument("--out-log", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("csr-report", help="spatial-randomness diagnostic from outlier records")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_csr_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return 3
    except ImageIoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (
        UnsupportedFormatError,
        VersionMismatchError,
        FingerprintMismatchError,
        ConfigMismatchError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (DomainError, EmptyInputError, EmptyRecordsError, TexlocError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
