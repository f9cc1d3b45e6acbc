import numpy as np
import pytest
import torch

from traceloc.exceptions import ConfigError
from traceloc.losses import (
    AblationConfig,
    PathwayLossValues,
    active_pathways,
    compute_pathways,
    loss_dd,
    loss_fd,
    loss_fda,
    loss_ffs,
    stage_loss,
)
from traceloc.models import ModelConfig, decode_ftrace, encode_ftrace, init_params

TOY = ModelConfig(latent_dim=8, heads=2, depth=1, ffn_dim=16, n_aps=6)


@pytest.fixture(scope="module")
def model():
    return init_params(TOY, seed=1)


@pytest.fixture(scope="module")
def ff_model():
    return init_params(ModelConfig(latent_dim=8, heads=2, depth=1, ffn_dim=16,
                                   n_aps=6, backbone="feedforward"), seed=1)


def _data(m=5, batch=3, seed=0):
    rng = np.random.default_rng(seed)
    f = rng.random((batch, m, 6))
    d = rng.normal(scale=0.5, size=(batch, m, 2))
    d[:, 0] = 0.0
    return f, d


def test_loss_fd_matches_manual(model):
    f, _ = _data()
    manual = np.abs(f - decode_ftrace(model, encode_ftrace(model, f))).sum(axis=(1, 2)).mean()
    assert float(loss_fd(model, f)) == pytest.approx(manual, rel=1e-12)


def test_loss_fd_single_trace_promotes(model):
    f, _ = _data(batch=1)
    assert float(loss_fd(model, f[0])) == pytest.approx(float(loss_fd(model, f)))


def test_loss_dd_zero_for_identity_codec(model):
    # force W_dec @ W_enc = I on the 2-D subspace
    with torch.no_grad():
        model.d_codec.enc.weight.zero_()
        model.d_codec.enc.weight[0, 0] = 1.0
        model.d_codec.enc.weight[1, 1] = 1.0
        model.d_codec.dec.weight.zero_()
        model.d_codec.dec.weight[0, 0] = 1.0
        model.d_codec.dec.weight[1, 1] = 1.0
    _, d = _data()
    assert float(loss_dd(model, d)) == pytest.approx(0.0, abs=1e-12)
    # restore random weights for later tests
    model.d_codec.enc.weight.data.normal_(0, 0.1)
    model.d_codec.dec.weight.data.normal_(0, 0.1)


def test_loss_dd_excludes_first_step(model):
    _, d = _data(m=2)
    d_big_first = d.copy()
    d_big_first[:, 0] = 100.0  # must not affect the loss
    assert float(loss_dd(model, d)) == pytest.approx(float(loss_dd(model, d_big_first)))


def test_loss_fda_m1_equals_fd(model):
    f, d = _data(m=1)
    assert float(loss_fda(model, f, d)) == pytest.approx(float(loss_fd(model, f)), rel=1e-12)


def test_loss_fda_constant_trace_reduces_to_fd(ff_model):
    # context-free backbone + constant trace + zero displacements:
    # latent codes are constant, codes of zero steps are zero
    f = np.tile(np.random.default_rng(3).random(6), (1, 4, 1))
    d = np.zeros((1, 4, 2))
    assert float(loss_fda(ff_model, f, d)) == pytest.approx(
        float(loss_fd(ff_model, f)), rel=1e-12)


def test_loss_ffs_stationary_zero(ff_model):
    f = np.tile(np.random.default_rng(4).random(6), (1, 4, 1))
    d = np.zeros((1, 4, 2))
    assert float(loss_ffs(ff_model, f, d)) == pytest.approx(0.0, abs=1e-12)


def test_loss_ffs_requires_two_steps(model):
    f, d = _data(m=1)
    with pytest.raises(ValueError):
        loss_ffs(model, f, d)


def test_loss_length_mismatch(model):
    f, _ = _data(m=5)
    _, d = _data(m=4)
    with pytest.raises(ValueError):
        loss_fda(model, f, d)


def test_losses_nonnegative_finite(model):
    f, d = _data(m=6, batch=4, seed=9)
    values = compute_pathways(model, f, d)
    for name, v in values.items():
        assert float(v) >= 0 and np.isfinite(float(v))


def test_compute_pathways_matches_individual(model):
    f, d = _data(m=5, batch=2, seed=5)
    combined = compute_pathways(model, f, d)
    assert float(combined["fd"]) == pytest.approx(float(loss_fd(model, f)), rel=1e-12)
    assert float(combined["dd"]) == pytest.approx(float(loss_dd(model, d)), rel=1e-12)
    assert float(combined["fda"]) == pytest.approx(float(loss_fda(model, f, d)), rel=1e-12)
    assert float(combined["ffs"]) == pytest.approx(float(loss_ffs(model, f, d)), rel=1e-12)


def _grad_check(model, fn, h=1e-5, tol=1e-4):
    params = [p for p in model.parameters()]
    model.zero_grad()
    fn().backward()
    worst = 0.0
    for p in params:
        grad = p.grad if p.grad is not None else torch.zeros_like(p)
        flat, gflat = p.data.view(-1), grad.view(-1)
        for j in range(flat.numel()):
            orig = flat[j].item()
            flat[j] = orig + h
            hi = fn().item()
            flat[j] = orig - h
            lo = fn().item()
            flat[j] = orig
            fd = (hi - lo) / (2 * h)
            denom = max(abs(fd), abs(gflat[j].item()), 1e-6)
            worst = max(worst, abs(fd - gflat[j].item()) / denom)
    assert worst < tol, f"max relative gradient error {worst:.2e}"


@pytest.mark.parametrize("pathway", ["fd", "dd", "fda", "ffs"])
def test_gradients_match_finite_differences(pathway):
    cfg = ModelConfig(latent_dim=4, heads=2, depth=1, ffn_dim=8, n_aps=2)
    model = init_params(cfg, seed=7)
    rng = np.random.default_rng(42)
    f = torch.as_tensor(rng.random((2, 3, 2)))
    d = torch.as_tensor(rng.normal(size=(2, 3, 2)) * 0.5)
    d[:, 0] = 0.0
    fns = {
        "fd": lambda: loss_fd(model, f),
        "dd": lambda: loss_dd(model, d),
        "fda": lambda: loss_fda(model, f, d),
        "ffs": lambda: loss_ffs(model, f, d),
    }
    _grad_check(model, fns[pathway])


def test_stage_loss_compositions():
    values = PathwayLossValues(fd=1.0, dd=2.0, fda=4.0, ffs=8.0)
    assert stage_loss(1, values) == 1.0
    assert stage_loss(2, values) == 5.0
    assert stage_loss(3, values) == 11.0


def test_stage_loss_invalid_stage():
    values = PathwayLossValues(fd=1.0, dd=2.0, fda=4.0, ffs=8.0)
    with pytest.raises(ValueError):
        stage_loss(4, values)


def test_ablation_pathway_removal():
    values = PathwayLossValues(fd=1.0, dd=2.0, fda=4.0, ffs=8.0)
    no_enc = AblationConfig(disable_d_encoder=True)
    assert active_pathways(2, no_enc) == ("fd",)
    assert stage_loss(2, values, no_enc) == 1.0
    assert active_pathways(3, no_enc) == ("fd", "ffs")
    both = AblationConfig(disable_d_encoder=True, disable_f_decoder=True)
    assert active_pathways(1, both) == ()
    assert active_pathways(2, both) == ()
    assert active_pathways(3, both) == ("ffs",)
    assert stage_loss(3, values, both) == 8.0


def test_ablation_validation():
    with pytest.raises(ConfigError):
        AblationConfig(disable_f_decoder=True)


def test_pathway_values_validation():
    with pytest.raises(ValueError):
        PathwayLossValues(fd=-1.0, dd=0.0, fda=0.0, ffs=0.0)
    with pytest.raises(ValueError):
        PathwayLossValues(fd=float("nan"), dd=0.0, fda=0.0, ffs=0.0)
