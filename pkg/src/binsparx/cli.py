"""Command-line front end.

Subcommands:

    validate-solver   fast-vs-dense cross-check against the 0.5% budget
    profile           ideal partial-sum histograms, sparsification on/off
    sweep             deviation vs ON-count sweep (CSV)
    infer             run a model on a dataset, emit predictions + stats
    sparsify          offline static weight sparsification of a model

Exit codes: 0 success, 2 config error, 3 I/O or parse error, 4 validation
failure, 5 non-convergence.  Flags override config-file values which
override defaults; every artifact embeds the fully resolved config.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, modelio
from .bnn import BinaryTensor, TilePlan, tile_weights
from .config import build_engine_config, describe_defaults, load_run_config
from .engine import Engine, RunStats
from .errors import (
    BinsparxError,
    ConfigError,
    NonConvergenceError,
    ParseError,
    ValidationError,
)
from .sparsify import sparsify_tile

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VALIDATION = 4
EXIT_NONCONVERGENCE = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binsparx",
        description="Crossbar compute-in-memory BNN simulator with static/dynamic sparsification.",
    )
    parser.add_argument("--help-config", action="store_true",
                        help="print the config schema with defaults and exit")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="shortcut for run.seed")
    common.add_argument("--out", help="shortcut for run.output_dir")
    common.add_argument("--binsparx", choices=["on", "off"],
                        help="shortcut for binsparx.enabled")
    common.add_argument("--ideal", action="store_true",
                        help="shortcut for run.nonidealities=false")
    common.add_argument("--preset", choices=["M3", "M4", "M6"],
                        help="shortcut for wire.preset")
    common.add_argument("--ion", type=float, help="shortcut for device.i_on (A)")
    common.add_argument("--best-effort", action="store_true",
                        help="shortcut for run.best_effort=true")

    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("validate-solver", parents=[common],
                       help="compare fast and dense solvers on random columns")
    p.add_argument("--trials", type=int, default=1000,
                   help="random problems per wire/current corner (default 1000)")

    p = sub.add_parser("profile", parents=[common],
                       help="ideal partial-sum histograms, sparsification on and off")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", help="IDX label file (CSV datasets embed labels)")

    p = sub.add_parser("sweep", parents=[common],
                       help="deviation vs ON-count sweep over x = 0..n")

    p = sub.add_parser("infer", parents=[common],
                       help="run a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", help="IDX label file (CSV datasets embed labels)")

    p = sub.add_parser("sparsify", parents=[common],
                       help="statically sparsify a model's weight columns offline")
    p.add_argument("--model", required=True)

    return parser


def _resolve_config(args) -> dict:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.out is not None:
        overrides.append(f"run.output_dir={args.out}")
    if args.binsparx is not None:
        overrides.append(f"binsparx.enabled={'true' if args.binsparx == 'on' else 'false'}")
    if args.ideal:
        overrides.append("run.nonidealities=false")
    if args.preset is not None:
        overrides.append(f"wire.preset={args.preset}")
    if args.ion is not None:
        overrides.append(f"device.i_on={args.ion}")
    if getattr(args, "best_effort", False):
        overrides.append("run.best_effort=true")
    return load_run_config(args.config, overrides)


def _echo(cfg: dict, command: str) -> dict:
    return {"command": command, "config": cfg}


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["run"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(args) -> modelio.Dataset:
    return modelio.load_dataset(args.dataset, getattr(args, "labels", None))


def cmd_validate_solver(args) -> int:
    cfg = _resolve_config(args)
    out = _outdir(cfg)
    report = analysis.solver_validation_suite(
        trials=args.trials,
        seed=cfg["run"]["seed"],
        n=cfg["array"]["n"],
        device_kind=cfg["device"]["kind"],
        v_nominal=cfg["device"]["v_nominal"],
    )
    for corner in report["corners"]:
        print(
            f"{corner['preset']} @ {corner['i_on']:.1e} A: "
            f"max {corner['max_rel_error']:.3e}  mean {corner['mean_rel_error']:.3e} "
            f"({corner['trials']} problems)"
        )
    print(f"zero-parasitic rel error: {report['zero_parasitic_rel_error']:.3e}")
    print(f"linear closed-form rel error: {report['linear_closed_form_rel_error']:.3e}")
    verdict = "PASS" if report["passed"] else "FAIL"
    print(f"overall max {report['max_rel_error']:.3e} vs budget {report['budget']:.3e}: {verdict}")
    modelio.write_json(out / "validate_report.json",
                       {**_echo(cfg, "validate-solver"), "report": report})
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


def cmd_profile(args) -> int:
    cfg = _resolve_config(args)
    out = _outdir(cfg)
    layers = modelio.load_model(args.model)
    ds = _load_dataset(args)
    ideal_cfg = replace(build_engine_config(cfg), nonidealities=False, adc_bits="full")
    engine = Engine(ideal_cfg)
    thr = cfg["run"]["binarize_threshold"]
    feats = np.where(ds.features > thr, 1.0, -1.0)
    hist_off = analysis.profile_partial_sums(engine, layers, feats, binsparx=False)
    hist_on = analysis.profile_partial_sums(engine, layers, feats, binsparx=True)
    reduction = hist_on.reduction_vs(hist_off)
    echo = _echo(cfg, "profile")
    modelio.write_histogram_csv(out / "profile_baseline.csv", hist_off.counts, echo)
    modelio.write_histogram_csv(out / "profile_binsparx.csv", hist_on.counts, echo)
    modelio.write_json(
        out / "profile_summary.json",
        {
            **echo,
            "baseline_mean": hist_off.mean,
            "binsparx_mean": hist_on.mean,
            "reduction": reduction,
            "samples": hist_off.total,
        },
    )
    print(f"baseline mean {hist_off.mean:.4f}  sparsified mean {hist_on.mean:.4f}  "
          f"reduction {100 * reduction:.2f}%  ({hist_off.total} column samples)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    out = _outdir(cfg)
    engine = Engine(build_engine_config(cfg))
    rng = np.random.default_rng(cfg["run"]["seed"])
    xs = range(0, cfg["array"]["n"] + 1)
    sweep = analysis.sweep_deviation(engine, xs, cfg["run"]["trials"], rng=rng)
    modelio.write_sweep_csv(out / "sweep.csv", sweep, _echo(cfg, "sweep"))
    total_bad = int(sweep.nonconverged.sum())
    print(f"sweep written to {out / 'sweep.csv'} "
          f"({int(sweep.samples.sum())} samples, {total_bad} non-convergent)")
    if total_bad and not cfg["run"]["best_effort"]:
        raise NonConvergenceError(f"{total_bad} column(s) did not converge")
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _resolve_config(args)
    out = _outdir(cfg)
    layers = modelio.load_model(args.model)
    ds = _load_dataset(args)
    engine = Engine(build_engine_config(cfg))
    stats = RunStats(cfg["array"]["n"])
    result = engine.infer(
        layers, ds.features, ds.labels,
        binarize_threshold=cfg["run"]["binarize_threshold"], stats=stats,
    )
    echo = _echo(cfg, "infer")
    modelio.write_predictions_csv(out / "predictions.csv", result.predictions, ds.labels, echo)
    modelio.write_json(
        out / "infer_stats.json",
        {**echo, "accuracy": result.accuracy, "inputs": int(len(result.predictions)),
         "stats": stats.to_dict()},
    )
    if result.accuracy is not None:
        print(f"accuracy: {result.accuracy:.4f} over {len(result.predictions)} inputs")
    else:
        print(f"predictions written for {len(result.predictions)} inputs")
    return EXIT_OK


def cmd_sparsify(args) -> int:
    cfg = _resolve_config(args)
    out = _outdir(cfg)
    layers = modelio.load_model(args.model)
    ideal_cfg = replace(
        build_engine_config(cfg), binsparx=True, nonidealities=False, adc_bits="full"
    )
    engine = Engine(ideal_cfg)
    rng = np.random.default_rng(cfg["run"]["seed"])
    n = cfg["array"]["n"]

    # exactness probe before anything is written
    for layer in layers:
        if layer.kind == "dense":
            w2d = layer.weights.values
        elif layer.kind == "conv":
            cout = layer.weights.shape[0]
            w2d = layer.weights.values.reshape(cout, -1).T
        else:
            continue
        probes = rng.choice([-1, 1], size=(8, w2d.shape[0])).astype(np.int8)
        got = engine.vmm_batch(engine.prepare(w2d), probes)
        want = probes.astype(np.int64) @ w2d.astype(np.int64)
        if not np.array_equal(got, want):
            raise ValidationError(
                f"sparsified mapping of layer {layer.name!r} failed the exactness probe"
            )

    map_dir = out / "mapping"
    map_dir.mkdir(parents=True, exist_ok=True)
    report_layers = []
    map_layers = []
    for layer in layers:
        if layer.kind == "dense":
            w2d = layer.weights.values
        elif layer.kind == "conv":
            w2d = layer.weights.values.reshape(layer.weights.shape[0], -1).T
        else:
            continue
        rows, cols = w2d.shape
        plan = TilePlan.for_matrix(rows, cols, n, cfg["array"]["m"])
        tiled = tile_weights(BinaryTensor(w2d), plan)
        flipped = 0
        ones_before = []
        ones_after = []
        tile_entries = []
        for tr in tiled.tiles:
            for tile in tr:
                sp = sparsify_tile(tile)
                ml = sp.m_logical
                flipped += int(sp.column_flip[:ml].sum())
                ones_before.append(tile.sum_wprime[:ml])
                ones_after.append(sp.sum_wprime[:ml])
                stem = f"{layer.name}__r{tile.row_start}_c{tile.col_start}"
                (map_dir / f"{stem}.bin").write_bytes(
                    sp.mapped_weights.values.astype("<i1").tobytes(order="C")
                )
                (map_dir / f"{stem}_flip.bin").write_bytes(
                    sp.column_flip.astype("<u1").tobytes(order="C")
                )
                tile_entries.append(
                    {
                        "row_start": tile.row_start,
                        "col_start": tile.col_start,
                        "n_logical": sp.n,
                        "m_logical": ml,
                        "file": f"mapping/{stem}.bin",
                        "flip_file": f"mapping/{stem}_flip.bin",
                        "sum_wprime": sp.sum_wprime[:ml].tolist(),
                    }
                )
        total_cols = sum(len(a) for a in ones_before)
        before = float(np.concatenate(ones_before).mean()) if total_cols else 0.0
        after = float(np.concatenate(ones_after).mean()) if total_cols else 0.0
        is_pow2 = n >= 2 and (n & (n - 1)) == 0
        report_layers.append(
            {
                "name": layer.name,
                "columns": total_cols,
                "columns_flipped": flipped,
                "flip_fraction": flipped / total_cols if total_cols else 0.0,
                "mean_column_ones_before": before,
                "mean_column_ones_after": after,
                "adc_bits_before": n.bit_length() - 1 if is_pow2 else None,
                "adc_bits_after": n.bit_length() - 2 if is_pow2 else None,
            }
        )
        map_layers.append(
            {"name": layer.name, "rows": rows, "cols": cols,
             "n": n, "m": cfg["array"]["m"], "tiles": tile_entries}
        )

    echo = _echo(cfg, "sparsify")
    modelio.write_json(out / "sparsify_map.json", {**echo, "layers": map_layers})
    modelio.write_json(out / "sparsify_report.json", {**echo, "layers": report_layers})
    for entry in report_layers:
        print(
            f"{entry['name']}: {entry['columns_flipped']}/{entry['columns']} columns flipped, "
            f"mean ones {entry['mean_column_ones_before']:.2f} -> "
            f"{entry['mean_column_ones_after']:.2f}"
        )
    return EXIT_OK


_COMMANDS = {
    "validate-solver": cmd_validate_solver,
    "profile": cmd_profile,
    "sweep": cmd_sweep,
    "infer": cmd_infer,
    "sparsify": cmd_sparsify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "help_config", False):
        print(describe_defaults())
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NonConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except BinsparxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
