import numpy as np
import pytest
import torch

from duetgen.denoiser import (
    DenoiserConfig, Predictor, init, load_state_tensors, parameter_count, parameter_gradients,
    state_tensors,
)
from duetgen.gradcheck import check_denoiser


def hand_count(W=64, B=2, F=128, C=4981, M=35):
    # per stream: input map, B blocks, final modulation, output map
    inp = C * W + W
    ada = W * 9 * W + 9 * W
    attn = 3 * W * W + 3 * W + W * W + W  # packed qkv projection + output projection
    ff = W * F + F + F * W + W
    block = ada + 2 * attn + ff
    final = W * 2 * W + 2 * W
    out = W * C + C
    stream = inp + B * block + final + out
    time_mlp = 2 * (W * W + W)
    music = 2 * (M * W + W)  # per-frame map and pooled summary
    return 2 * stream + time_mlp + music


def inputs(T=6, seed=0):
    g = torch.Generator().manual_seed(seed)
    return (torch.randn(T, 4981, generator=g), torch.randn(T, 35, generator=g), torch.randn(T, 4981, generator=g))


def test_param_count_formula():
    cfg = DenoiserConfig(model_width=64, block_count=2, head_count=4)
    net = init(cfg)
    assert sum(p.numel() for p in net.parameters()) == hand_count() == parameter_count(cfg)


def test_param_count_without_pooling():
    cfg = DenoiserConfig(model_width=16, block_count=1, head_count=2, feedforward_width=32, music_pooling=False)
    assert sum(p.numel() for p in init(cfg).parameters()) == parameter_count(cfg)


def test_same_seed_same_params():
    a, b = init(DenoiserConfig(seed=3)), init(DenoiserConfig(seed=3))
    for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert ka == kb and torch.equal(va, vb)


def test_zero_init_output_is_constant():
    net = init(DenoiserConfig(model_width=16, head_count=2))
    x, m, l = inputs()
    out = net(x, 10, m, l)
    assert torch.all(out == 0)
    assert torch.all(net(x * 3, 2, m + 1, l) == out)


def test_invalid_config():
    with pytest.raises(ValueError, match="divisible"):
        DenoiserConfig(model_width=10, head_count=4)
    with pytest.raises(ValueError, match="mode"):
        DenoiserConfig(mode="solo")


def test_t1_shape():
    net = init(DenoiserConfig(model_width=16, head_count=2))
    x, m, l = inputs(T=1)
    assert net(x, 1, m, l).shape == (1, 4981)


def test_duet_returns_pair():
    net = init(DenoiserConfig(model_width=16, head_count=2, mode="duet"))
    x, m, l = inputs()
    a, b = net(x, 5, m, l)
    assert a.shape == b.shape == (6, 4981)


def test_batch_permutation():
    from duetgen.gradcheck import small_denoiser
    net = small_denoiser(1).float()
    xs = [inputs(seed=s) for s in range(3)]
    X, M, L = (torch.stack([t[i] for t in xs]) for i in range(3))
    out = net(X, torch.tensor([3, 7, 9]), M, L)
    perm = [2, 0, 1]
    out_p = net(X[perm], torch.tensor([3, 7, 9])[perm], M[perm], L[perm])
    assert torch.allclose(out_p, out[perm], atol=1e-6)


def test_shape_mismatch():
    net = init(DenoiserConfig(model_width=16, head_count=2))
    x, m, l = inputs()
    with pytest.raises(ValueError, match="shape"):
        net(x, 1, m[:3], l)


def test_gradients_match_fd():
    assert check_denoiser(n=40, seed=2).passed


def test_constant_loss_zero_gradient():
    net = init(DenoiserConfig(model_width=8, block_count=1, head_count=2, feedforward_width=8))
    grads = parameter_gradients(net, lambda m: 0.0 * sum(p.sum() for p in m.parameters()) + 1.0)
    assert all(torch.all(g == 0) for g in grads.values())


def test_non_finite_gradient_names_layer():
    from duetgen.gradcheck import small_denoiser
    net = small_denoiser(0)
    x, m, l = (t.double() for t in inputs())
    with torch.no_grad():
        net.out["follower"].bias[0] = float("inf")
    with pytest.raises(FloatingPointError, match=r"out\.follower"):
        parameter_gradients(net, lambda mod: mod(x, 1, m, l).sum())


def test_descent_step_reduces_loss():
    from duetgen.gradcheck import small_denoiser
    net = small_denoiser(4)
    x, m, l = (t.double() for t in inputs())
    target = torch.zeros_like(x)
    loss = lambda mod: ((mod(x, 3, m, l) - target) ** 2).mean()  # noqa: E731
    before = float(loss(net).detach())
    grads = parameter_gradients(net, loss)
    with torch.no_grad():
        for k, p in net.named_parameters():
            p -= 1e-3 * grads[k]
    assert float(loss(net).detach()) < before


def test_window_locality():
    cfg = DenoiserConfig(model_width=16, block_count=2, head_count=2, window=2, music_pooling=False, seed=1)
    net = init(cfg).double()
    with torch.no_grad():
        for p in net.parameters():
            p.add_(0.1 * torch.randn_like(p))
    x, m, l = (t.double() for t in inputs(T=20))
    base = net(x, 4, m, l)
    m2 = m.clone()
    m2[10] += 1.0
    diff = (net(x, 4, m2, l) - base).abs().amax(-1)
    changed = torch.nonzero(diff > 1e-12).ravel().tolist()
    # two windowed layers of reach 2 each (self and cross per block)
    assert 10 in changed and all(abs(t - 10) <= 2 * 2 * cfg.block_count for t in changed)
    assert diff[0] == 0 and diff[-1] == 0


def test_checkpoint_tensors_round_trip():
    net = init(DenoiserConfig(model_width=16, head_count=2, seed=5))
    other = init(DenoiserConfig(model_width=16, head_count=2, seed=6))
    load_state_tensors(other, state_tensors(net))
    x, m, l = inputs()
    with torch.no_grad():
        for p in (net.out["follower"].weight, other.out["follower"].weight):
            p.fill_(0.01)
    assert torch.equal(net(x, 1, m, l), other(x, 1, m, l))


def test_predictor_mode_guard():
    net = init(DenoiserConfig(model_width=16, head_count=2))
    p = Predictor(net)
    x, m, l = (t.numpy() for t in inputs())
    assert p(x, 3, m, l).dtype == np.float64
    with pytest.raises(ValueError, match="trained for"):
        p(x, 3, m, l, mode="duet")
