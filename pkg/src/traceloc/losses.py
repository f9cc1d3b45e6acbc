"""The four training pathways and the three-stage loss schedule.

Two direct pathways reconstruct each modality; two cross pathways tie the
latent spaces together: latent addition of a displacement code should step
the fingerprint code forward (FDA), and latent subtraction of adjacent
fingerprint codes should decode to the physical step (FFS). All losses are
L1, summed over sequence and feature dimensions and averaged over the batch;
fingerprint losses are in normalized units, displacement losses in meters.
"""

from dataclasses import dataclass

import numpy as np
import torch

from traceloc.exceptions import ConfigError
from traceloc.models import DTYPE, DualCodec

PATHWAYS = ("fd", "dd", "fda", "ffs")

_STAGE_PATHWAYS = {
    1: ("fd",),
    2: ("fd", "fda"),
    3: ("fd", "dd", "ffs"),
}


@dataclass(frozen=True)
class PathwayLossValues:
    """Scalar values of the four pathway losses for one batch or epoch."""

    fd: float
    dd: float
    fda: float
    ffs: float

    def __post_init__(self):
        for name in PATHWAYS:
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss {name} must be finite and nonnegative, got {v}")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in PATHWAYS}


@dataclass(frozen=True)
class AblationConfig:
    """Component switches for the ablation table.

    ``disable_f_decoder`` removes the fingerprint decoder and therefore
    implies ``disable_d_encoder`` (the ablations are cumulative).
    ``backbone``/``d_codec`` override the corresponding model-config fields.
    """

    disable_d_encoder: bool = False
    disable_f_decoder: bool = False
    backbone: str | None = None
    d_codec: str | None = None

    def __post_init__(self):
        if self.disable_f_decoder and not self.disable_d_encoder:
            raise ConfigError("disable_f_decoder requires disable_d_encoder")


def _batch(x, last_dim: int, name: str) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(x), dtype=DTYPE) if not isinstance(x, torch.Tensor) else x.to(DTYPE)
    if t.ndim == 2:
        t = t.unsqueeze(0)
    if t.ndim != 3 or t.shape[-1] != last_dim:
        raise ValueError(f"{name}: expected (batch, m, {last_dim}), got {tuple(t.shape)}")
    return t


def _l1(residual: torch.Tensor, from_step: int = 0) -> torch.Tensor:
    return residual[:, from_step:].abs().sum(dim=(1, 2)).mean()


def loss_fd(model: DualCodec, f) -> torch.Tensor:
    """Fingerprint reconstruction: sum_i |f_i - decode(encode(F))_i|."""
    f = _batch(f, model.config.n_aps, "f")
    return _l1(f - model.decode_f(model.encode_f(f)))


def loss_dd(model: DualCodec, d) -> torch.Tensor:
    """Displacement reconstruction over i >= 2 (the placeholder is skipped)."""
    d = _batch(d, 2, "d")
    return _l1(d - model.decode_d(model.encode_d(d)), from_step=1)


def loss_fda(model: DualCodec, f, d) -> torch.Tensor:
    """Latent-addition consistency: stepping l_{i-1} by e_i should decode to f_i.

    The first latent passes through unchanged, so for m = 1 this reduces to
    the fingerprint reconstruction loss.
    """
    f = _batch(f, model.config.n_aps, "f")
    d = _batch(d, 2, "d")
    if f.shape[:2] != d.shape[:2]:
        raise ValueError(f"f and d disagree on batch/length: {tuple(f.shape)} vs {tuple(d.shape)}")
    latents = model.encode_f(f)
    codes = model.encode_d(d)
    shifted = torch.cat([latents[:, :1], latents[:, :-1] + codes[:, 1:]], dim=1)
    return _l1(f - model.decode_f(shifted))


def loss_ffs(model: DualCodec, f, d) -> torch.Tensor:
    """Latent-subtraction consistency: l_i - l_{i-1} should decode to d_i."""
    f = _batch(f, model.config.n_aps, "f")
    d = _batch(d, 2, "d")
    if f.shape[:2] != d.shape[:2]:
        raise ValueError(f"f and d disagree on batch/length: {tuple(f.shape)} vs {tuple(d.shape)}")
    if f.shape[1] < 2:
        raise ValueError("latent-subtraction loss needs traces of length >= 2")
    latents = model.encode_f(f)
    diffs = torch.cat([torch.zeros_like(latents[:, :1]), latents[:, 1:] - latents[:, :-1]], dim=1)
    return _l1(d - model.decode_d(diffs), from_step=1)


def compute_pathways(model: DualCodec, f, d) -> dict[str, torch.Tensor]:
    """All four losses on one batch, sharing a single encoding pass."""
    f = _batch(f, model.config.n_aps, "f")
    d = _batch(d, 2, "d")
    latents = model.encode_f(f)
    codes = model.encode_d(d)
    fd = _l1(f - model.decode_f(latents))
    dd = _l1(d - model.decode_d(codes), from_step=1)
    shifted = torch.cat([latents[:, :1], latents[:, :-1] + codes[:, 1:]], dim=1)
    fda = _l1(f - model.decode_f(shifted))
    diffs = torch.cat([torch.zeros_like(latents[:, :1]), latents[:, 1:] - latents[:, :-1]], dim=1)
    ffs = _l1(d - model.decode_d(diffs), from_step=1)
    return {"fd": fd, "dd": dd, "fda": fda, "ffs": ffs}


def active_pathways(stage: int, ablation: AblationConfig | None = None) -> tuple[str, ...]:
    """Pathways optimized in ``stage``, after removing ablated components."""
    if stage not in _STAGE_PATHWAYS:
        raise ValueError(f"stage must be 1, 2, or 3, got {stage}")
    removed = set()
    if ablation is not None:
        if ablation.disable_d_encoder:
            removed |= {"dd", "fda"}
        if ablation.disable_f_decoder:
            removed |= {"fd", "fda"}
    return tuple(p for p in _STAGE_PATHWAYS[stage] if p not in removed)


def stage_loss(stage: int, values: PathwayLossValues,
               ablation: AblationConfig | None = None) -> float:
    """Combined objective value for ``stage`` under the given ablation."""
    return float(sum(getattr(values, name) for name in active_pathways(stage, ablation)))
