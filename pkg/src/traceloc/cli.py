"""Command-line entry point: synth, train, eval, sweep, relloc.

Exit codes: 0 success, 2 configuration error, 3 data-integrity error,
4 training divergence.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from traceloc.dataset import load_dataset
from traceloc.exceptions import ConfigError, DataIntegrityError, TrainingDivergedError
from traceloc.inference import relloc
from traceloc.io_utils import config_hash, write_run_manifest
from traceloc.models import load_checkpoint
from traceloc.pipeline import check_pinned_hash, run_eval, run_training, synthesize
from traceloc.runconfig import RunConfig, apply_seed_overrides, load_config
from traceloc.sweeps import ablation_suite, noise_sweep, size_length_sweep

logger = logging.getLogger("traceloc")


def _parse_seed_overrides(pairs):
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--seed-override expects name=int, got {pair!r}")
        name, _, value = pair.partition("=")
        try:
            overrides[name] = int(value)
        except ValueError as exc:
            raise ConfigError(f"seed override {name!r} needs an integer, got {value!r}") from exc
    return overrides


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    config = apply_seed_overrides(config, _parse_seed_overrides(getattr(args, "seed_override", None)))
    return config


def _out_dir(args, config: RunConfig, subdir: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(config.out_dir) / subdir


def cmd_synth(args) -> int:
    config = _load_run_config(args)
    out = _out_dir(args, config, "dataset")
    ds, ds_hash = synthesize(config, out)
    write_run_manifest(out, config, {
        "dataset_manifest": out / "manifest.json",
        "dataset_traces": out / "traces.jsonl",
        "field_map": out / "field_map.json",
    })
    print(f"dataset: {out}")
    print(f"traces: {ds.size} (m={ds.m}, n={ds.n_aps})")
    print(f"dataset_hash: {ds_hash}")
    return 0


def cmd_train(args) -> int:
    config = _load_run_config(args)
    ds_hash = check_pinned_hash(config, args.dataset)
    dataset = load_dataset(args.dataset)
    out = _out_dir(args, config, "train")
    state = run_training(config, dataset, out, resume_from=args.resume)
    write_run_manifest(out, config, {
        f"ckpt_stage{k}": out / f"ckpt_stage{k}.bin" for k in (1, 2, 3)
    } | {"training_log": out / "training_log.csv"})
    print(f"checkpoints: {out}")
    print(f"dataset_hash: {ds_hash}")
    print(f"final_stage: {state.stage}")
    return 0


def cmd_eval(args) -> int:
    config = _load_run_config(args)
    dataset = load_dataset(args.dataset)
    bundle = load_checkpoint(args.checkpoint)
    if bundle.model.config.n_aps != dataset.n_aps:
        raise DataIntegrityError(
            f"checkpoint expects {bundle.model.config.n_aps} APs, "
            f"dataset has {dataset.n_aps}"
        )
    out = _out_dir(args, config, "eval")
    result = run_eval(config, bundle.model, dataset, out)
    write_run_manifest(out, config, {
        "metrics": out / "metrics.json",
        "metrics_csv": out / "metrics.csv",
        "fewshot": out / "fewshot.json",
        "latent_projection": out / "latent_projection.csv",
    })
    for key in ("5", "10", "all"):
        print(f"DE({key}): {result['de'][key]:.3f}  LCDR({key}): {result['lcdr'][key]:.3f}")
    print(f"fewshot mean_error (k={result['fewshot']['k_anchors']}): "
          f"{result['fewshot']['mean_error']:.3f}")
    print(f"report: {out / 'metrics.json'}")
    return 0


def cmd_sweep(args) -> int:
    config = _load_run_config(args)
    out = _out_dir(args, config, f"sweep_{args.kind}")
    if args.kind == "noise":
        report = noise_sweep(config, out, cell_filter=args.cells)
    elif args.kind == "size_length":
        report = size_length_sweep(config, out, cell_filter=args.cells)
    else:
        report = ablation_suite(config, out, cell_filter=args.cells)
    failures = [row["cell"] for row in report.rows if "error" in row]
    print(f"sweep rows: {len(report.rows)} ({len(failures)} failed)")
    print(f"aggregate: {out / 'sweep_report.csv'}")
    return 0 if not failures else 3


def cmd_relloc(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    model = bundle.model
    normalizer = model.normalizer
    n_out = 0
    with open(args.pairs) as fin, open(args.out, "w") as fout:
        for i, line in enumerate(fin):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                f_a = normalizer.normalize(np.asarray(rec["f_a"], dtype=float))
                f_b = normalizer.normalize(np.asarray(rec["f_b"], dtype=float))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataIntegrityError(f"malformed pair record at line {i}: {exc}") from exc
            result = relloc(model, f_a, f_b)
            fout.write(json.dumps({
                "pair_id": rec.get("pair_id", i),
                "delta_hat": result.delta_hat.tolist(),
                "latent_distance": result.latent_distance,
            }, sort_keys=True))
            fout.write("\n")
            n_out += 1
    print(f"pairs processed: {n_out}")
    print(f"results: {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="traceloc",
        description="Synthesize paired WiFi/displacement traces, train the dual "
                    "codecs, and evaluate relative localization.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=False, checkpoint=False):
        p.add_argument("--config", help="JSON run config (defaults apply if omitted)")
        p.add_argument("--out", help="output directory (overrides config out_dir)")
        p.add_argument("--seed-override", action="append", metavar="NAME=INT",
                       help="override one of the field/data/model/eval seeds")
        if dataset:
            p.add_argument("--dataset", required=True, help="dataset directory")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="checkpoint file")

    p_synth = sub.add_parser("synth", help="build the field map and dataset")
    common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="run the three-stage curriculum")
    common(p_train, dataset=True)
    p_train.add_argument("--resume", help="resume from a stage checkpoint")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="metrics, few-shot report, projections")
    common(p_eval, dataset=True, checkpoint=True)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="run a multi-cell experiment sweep")
    common(p_sweep)
    p_sweep.add_argument("--kind", required=True, choices=["noise", "size_length", "ablation"])
    p_sweep.add_argument("--cells", help="only run cells whose name contains this substring")
    p_sweep.set_defaults(func=cmd_sweep)

    p_rel = sub.add_parser("relloc", help="batch relative-displacement inference")
    p_rel.add_argument("--checkpoint", required=True, help="checkpoint file")
    p_rel.add_argument("--pairs", required=True, help="JSONL of {pair_id, f_a, f_b} in dBm")
    p_rel.add_argument("--out", required=True, help="JSONL output path")
    p_rel.set_defaults(func=cmd_relloc)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataIntegrityError as exc:
        print(f"data integrity error: {exc}", file=sys.stderr)
        return 3
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
