"""Three-stage curriculum training of the dual codecs.

Stage 1 optimizes fingerprint reconstruction alone, stage 2 adds the
latent-addition pathway, stage 3 swaps it for displacement reconstruction
plus latent subtraction. Parameters carry over between stages; ablation
flags remove pathways (a stage whose pathway set becomes empty is skipped).
All four losses are logged every epoch regardless of which are optimized.
"""

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from traceloc.dataset import Dataset
from traceloc.exceptions import TrainingDivergedError
from traceloc.losses import AblationConfig, active_pathways, compute_pathways
from traceloc.models import (
    DTYPE,
    DualCodec,
    FingerprintNormalizer,
    ModelConfig,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from traceloc.seeding import rng_from

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("stage", "epoch", "loss_fd", "loss_dd", "loss_fda", "loss_ffs", "wall_time_s")

# second-moment horizon shortened for the short schedules used here; clipping
# guards the post-norm attention stack early in each stage
_ADAM_BETAS = (0.9, 0.98)
_GRAD_CLIP = 1.0


@dataclass(frozen=True)
class StageSchedule:
    """Epoch counts per stage plus shared optimizer settings."""

    epochs_stage1: int = 30
    epochs_stage2: int = 30
    epochs_stage3: int = 60
    learning_rate: float = 1e-3
    batch_size: int = 128

    def __post_init__(self):
        if min(self.epochs_stage1, self.epochs_stage2, self.epochs_stage3) < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be positive and batch_size >= 1")

    def epochs_for(self, stage: int) -> int:
        return (self.epochs_stage1, self.epochs_stage2, self.epochs_stage3)[stage - 1]


@dataclass
class TrainState:
    """Mutable training context; also the return value of ``train``."""

    model: DualCodec
    optimizer: torch.optim.Adam
    stage: int
    epoch: int
    history: list
    seed: int


def training_tensors(dataset: Dataset, normalizer: FingerprintNormalizer,
                     indices=None) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack (normalized) f-traces and d-traces into batch tensors."""
    traces = dataset.traces if indices is None else [dataset.traces[i] for i in indices]
    f = np.stack([t.ftrace for t in traces])
    d = np.stack([t.dtrace for t in traces])
    return (
        torch.as_tensor(normalizer.normalize(f), dtype=DTYPE),
        torch.as_tensor(d, dtype=DTYPE),
    )


def normalizer_from_manifest(manifest: dict) -> FingerprintNormalizer:
    pl = manifest["pathloss"]
    return FingerprintNormalizer(floor_dbm=pl["floor_dbm"], p0_dbm=pl["p0_dbm"])


def _optimizer_arrays(optimizer, params) -> dict:
    arrays = {}
    for i, p in enumerate(params):
        state = optimizer.state.get(p)
        if not state:
            continue
        for key in ("step", "exp_avg", "exp_avg_sq"):
            arrays[f"opt/{i}/{key}"] = state[key].detach().numpy().copy()
    return arrays


def _restore_optimizer(optimizer, params, arrays) -> None:
    for i, p in enumerate(params):
        step_key = f"opt/{i}/step"
        if step_key not in arrays:
            continue
        optimizer.state[p] = {
            "step": torch.as_tensor(arrays[step_key]),
            "exp_avg": torch.as_tensor(arrays[f"opt/{i}/exp_avg"]),
            "exp_avg_sq": torch.as_tensor(arrays[f"opt/{i}/exp_avg_sq"]),
        }


def _write_log_rows(out_dir: Path, rows, append: bool) -> None:
    mode = "a" if append else "w"
    with open(out_dir / "training_log.csv", mode, newline="") as fh:
        writer = csv.writer(fh)
        if not append:
            writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow([row[c] for c in LOG_COLUMNS])


def train(
    dataset: Dataset,
    model_config: ModelConfig,
    schedule: StageSchedule,
    ablation: AblationConfig | None = None,
    seed: int = 0,
    out_dir=None,
    stop_after_stage: int = 3,
    resume_from=None,
) -> TrainState:
    """Run the staged curriculum on the dataset's train split.

    Deterministic given (dataset, configs, seed): initialization, batch
    order, and optimizer updates all derive from ``seed``. Emits
    ``ckpt_stage{k}.bin`` (parameters + optimizer state) at every stage
    boundary and appends per-epoch loss rows to ``training_log.csv`` when
    ``out_dir`` is given. ``resume_from`` restarts after the checkpoint's
    stage and reproduces the uninterrupted run exactly.
    """
    if dataset.split is None or len(dataset.split.train) == 0:
        raise ValueError("dataset needs a nonempty train split")
    if ablation is not None:
        if ablation.backbone is not None or ablation.d_codec is not None:
            overrides = {}
            if ablation.backbone is not None:
                overrides["backbone"] = ablation.backbone
            if ablation.d_codec is not None:
                overrides["d_codec"] = ablation.d_codec
            model_config = ModelConfig(**{**model_config.__dict__, **overrides})

    normalizer = normalizer_from_manifest(dataset.manifest)
    f_all, d_all = training_tensors(dataset, normalizer, dataset.split.train)
    n_traces = f_all.shape[0]

    if resume_from is not None:
        bundle = load_checkpoint(resume_from)
        model = bundle.model
        first_stage = bundle.stage + 1
        params = list(model.parameters())
        optimizer = torch.optim.Adam(params, lr=schedule.learning_rate, betas=_ADAM_BETAS)
        _restore_optimizer(optimizer, params, bundle.extra_arrays)
    else:
        model = init_params(model_config, seed, normalizer=normalizer, trace_len=dataset.m)
        first_stage = 1
        params = list(model.parameters())
        optimizer = torch.optim.Adam(params, lr=schedule.learning_rate, betas=_ADAM_BETAS)

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    state = TrainState(model=model, optimizer=optimizer, stage=model.stage, epoch=0,
                       history=[], seed=seed)
    started = time.monotonic()
    wrote_log = resume_from is not None and out_path is not None \
        and (out_path / "training_log.csv").exists()

    model.train()
    for stage in range(first_stage, stop_after_stage + 1):
        active = active_pathways(stage, ablation)
        epochs = schedule.epochs_for(stage) if active else 0
        rng = rng_from(seed, "batches", stage)
        for epoch in range(epochs):
            order = rng.permutation(n_traces)
            sums = {name: 0.0 for name in ("fd", "dd", "fda", "ffs")}
            n_batches = 0
            for start in range(0, n_traces, schedule.batch_size):
                batch = order[start : start + schedule.batch_size]
                losses = compute_pathways(model, f_all[batch], d_all[batch])
                values = {k: v.item() for k, v in losses.items()}
                if not all(np.isfinite(v) for v in values.values()):
                    raise TrainingDivergedError(
                        f"non-finite loss at stage {stage} epoch {epoch} "
                        f"batch {n_batches}: {values}",
                        stage=stage, epoch=epoch, batch=n_batches, losses=values,
                    )
                total = sum(losses[name] for name in active)
                optimizer.zero_grad()
                total.backward()
                torch.nn.utils.clip_grad_norm_(params, _GRAD_CLIP)
                optimizer.step()
                for k, v in values.items():
                    sums[k] += v
                n_batches += 1
            row = {
                "stage": stage,
                "epoch": epoch,
                "loss_fd": sums["fd"] / n_batches,
                "loss_dd": sums["dd"] / n_batches,
                "loss_fda": sums["fda"] / n_batches,
                "loss_ffs": sums["ffs"] / n_batches,
                "wall_time_s": time.monotonic() - started,
            }
            state.history.append(row)
            state.epoch = epoch
            if out_path is not None:
                _write_log_rows(out_path, [row], append=wrote_log)
                wrote_log = True
            logger.info(
                "stage %d epoch %d: fd=%.4f dd=%.4f fda=%.4f ffs=%.4f",
                stage, epoch, row["loss_fd"], row["loss_dd"], row["loss_fda"], row["loss_ffs"],
            )
        model.stage = stage
        state.stage = stage
        if out_path is not None:
            save_checkpoint(model, out_path / f"ckpt_stage{stage}.bin",
                            extra_arrays=_optimizer_arrays(optimizer, params))
    model.eval()
    return state
