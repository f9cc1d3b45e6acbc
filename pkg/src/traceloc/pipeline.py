"""End-to-end orchestration: synthesize, train, evaluate, one cell at a time.

Used by both the CLI and the sweep drivers. Every step writes its artifacts
under a caller-chosen directory and returns the in-memory objects, so sweeps
can chain steps without re-reading files.
"""

import csv
import dataclasses
import json
import logging
from pathlib import Path

from traceloc.dataset import Dataset, build_dataset, dataset_hash, save_dataset, split_dataset
from traceloc.exceptions import DataIntegrityError
from traceloc.field import build_anchor_grid, build_default_field
from traceloc.io_utils import config_hash, sha256_file, write_json, write_run_manifest
from traceloc.metrics import evaluate_model, fewshot_eval, latent_projection
from traceloc.models import DualCodec, load_checkpoint
from traceloc.radiomap import GprKernelParams, default_kernel_params, fit_gpr, save_field_map
from traceloc.runconfig import RunConfig
from traceloc.seeding import rng_from
from traceloc.trajectory import generate_walk_bank
from traceloc.training import TrainState, train

logger = logging.getLogger(__name__)


def build_radio_environment(config: RunConfig):
    """Field layout, anchor survey, and fitted radio map for this config."""
    layout = build_default_field(config.seeds.field)
    anchors = build_anchor_grid(
        layout,
        config.pathloss,
        rng_from(config.seeds.field, "anchors"),
        n_anchors=config.radiomap.n_anchors,
        samples_per_anchor=config.radiomap.samples_per_anchor,
    )
    if config.radiomap.noise_var is None:
        kernel = default_kernel_params(config.pathloss, config.radiomap.samples_per_anchor)
        kernel = GprKernelParams(
            length_scale_m=config.radiomap.length_scale_m,
            signal_var=config.radiomap.signal_var,
            noise_var=kernel.noise_var,
        )
    else:
        kernel = GprKernelParams(
            length_scale_m=config.radiomap.length_scale_m,
            signal_var=config.radiomap.signal_var,
            noise_var=config.radiomap.noise_var,
        )
    radio_map = fit_gpr(layout, config.pathloss, anchors, kernel)
    return layout, radio_map


def synthesize(config: RunConfig, out_dir) -> tuple[Dataset, str]:
    """Build field map + paired-trace dataset on disk; returns (dataset, hash)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout, radio_map = build_radio_environment(config)
    map_path = out_dir / "field_map.json"
    save_field_map(map_path, radio_map)
    field_ref = sha256_file(map_path)

    bank = generate_walk_bank(
        config.walk_bank.count, config.walk_bank.length, rng_from(config.seeds.data, "bank")
    )
    ds = build_dataset(
        layout, radio_map, bank,
        size=config.data.size, m=config.data.m,
        noise=config.noise, seed=config.seeds.data, field_ref=field_ref,
    )
    ds = split_dataset(ds, ratio=config.data.train_ratio, seed=config.seeds.data)
    save_dataset(ds, out_dir)
    ds_hash = dataset_hash(out_dir)
    logger.info("dataset ready: %d traces, hash %s", ds.size, ds_hash[:12])
    return ds, ds_hash


def effective_model_config(config: RunConfig, dataset: Dataset):
    """Model config with the input width forced to the dataset's AP count."""
    return dataclasses.replace(config.model, n_aps=dataset.n_aps)


def run_training(config: RunConfig, dataset: Dataset, out_dir,
                 resume_from=None, stop_after_stage: int = 3) -> TrainState:
    return train(
        dataset,
        effective_model_config(config, dataset),
        config.schedule,
        ablation=config.ablation,
        seed=config.seeds.model,
        out_dir=out_dir,
        resume_from=resume_from,
        stop_after_stage=stop_after_stage,
    )


def check_pinned_hash(config: RunConfig, dataset_dir) -> str:
    actual = dataset_hash(dataset_dir)
    expected = config.data.expected_hash
    if expected is not None and actual != expected:
        raise DataIntegrityError(
            f"dataset hash mismatch: config pins {expected}, directory has {actual}"
        )
    return actual


def write_projection_csv(path, projection) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_pca", "y_pca", "x_true", "y_true"])
        for (px, py), (tx, ty) in zip(projection.pca, projection.true_endpoints):
            writer.writerow([px, py, tx, ty])


def write_metrics_csv(path, report) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "de", "de_count", "lcdr", "lcdr_couples"])
        for key in report.de:
            writer.writerow([key, report.de[key], report.de_counts[key],
                             report.lcdr[key], report.lcdr_couples[key]])


def run_eval(config: RunConfig, model: DualCodec, dataset: Dataset, out_dir) -> dict:
    """Metric pass + few-shot report + latent-projection export."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {"config": dataclasses.asdict(config), "config_hash": config_hash(config)}
    report = evaluate_model(
        model, dataset,
        n_pairs=config.metrics.n_pairs,
        lcdr_bin_width=config.metrics.lcdr_bin_width,
        seed=config.seeds.eval,
        config_echo=echo,
    )
    write_json(out_dir / "metrics.json", report.to_dict())
    write_metrics_csv(out_dir / "metrics.csv", report)

    fewshot = fewshot_eval(
        model, dataset,
        k_anchors=config.metrics.fewshot_anchors,
        n_queries=config.metrics.fewshot_queries,
        seed=config.seeds.eval,
    )
    write_json(out_dir / "fewshot.json", fewshot)

    projection = latent_projection(model, dataset)
    write_projection_csv(out_dir / "latent_projection.csv", projection)

    result = report.to_dict()
    result["fewshot"] = fewshot
    return result


def run_cell(config: RunConfig, cell_dir, force: bool = False) -> dict:
    """One full synth/train/eval cell; skipped if its result already exists.

    The result row carries the config and dataset hashes, so interrupted
    sweeps resume by reusing completed cells.
    """
    cell_dir = Path(cell_dir)
    result_path = cell_dir / "cell_result.json"
    if result_path.exists() and not force:
        row = json.loads(result_path.read_text())
        if row.get("config_hash") == config_hash(config):
            logger.info("cell %s already complete; skipping", cell_dir.name)
            return row

    cell_dir.mkdir(parents=True, exist_ok=True)
    dataset_dir = cell_dir / "dataset"
    ds, ds_hash = synthesize(config, dataset_dir)
    state = run_training(config, ds, cell_dir / "train")
    eval_result = run_eval(config, state.model, ds, cell_dir / "eval")

    row = {
        "config_hash": config_hash(config),
        "dataset_hash": ds_hash,
        "de": eval_result["de"],
        "lcdr": eval_result["lcdr"],
        "fewshot": eval_result["fewshot"],
    }
    write_json(result_path, row)
    write_run_manifest(cell_dir, config, {
        "dataset_manifest": dataset_dir / "manifest.json",
        "dataset_traces": dataset_dir / "traces.jsonl",
        "field_map": dataset_dir / "field_map.json",
        "ckpt_stage1": cell_dir / "train" / "ckpt_stage1.bin",
        "ckpt_stage2": cell_dir / "train" / "ckpt_stage2.bin",
        "ckpt_stage3": cell_dir / "train" / "ckpt_stage3.bin",
        "metrics": cell_dir / "eval" / "metrics.json",
        "fewshot": cell_dir / "eval" / "fewshot.json",
        "latent_projection": cell_dir / "eval" / "latent_projection.csv",
        "cell_result": result_path,
    })
    return row


def model_from_checkpoint(path) -> DualCodec:
    return load_checkpoint(path).model
