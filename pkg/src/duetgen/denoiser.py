"""Two-stream transformer denoiser predicting clean x0.

Each dancer has its own stream of per-frame tokens. A block runs, for both
streams in parallel: self-attention, cross-attention into the other
stream (keys/values taken after its self-attention), then a feedforward
layer. Every sublayer is pre-normalized and modulated (shift, scale, gate)
by a per-frame conditioning vector built from the timestep embedding and
the aligned music frame, plus an optional pooled music summary.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from duetgen.music import N_MUSIC
from duetgen.representation import N_CHANNELS

STREAMS = ("leader", "follower")


@dataclass(frozen=True)
class DenoiserConfig:
    model_width: int = 64
    block_count: int = 2
    head_count: int = 4
    feedforward_width: int = 128
    input_channels: int = N_CHANNELS
    music_channels: int = N_MUSIC
    max_T: int = 1024
    mode: str = "reactive"
    seed: int = 0
    window: int | None = None  # attention restricted to |i - j| <= window
    music_pooling: bool = True

    def __post_init__(self):
        if self.model_width % self.head_count:
            raise ValueError(f"model_width {self.model_width} not divisible by head_count {self.head_count}")
        if self.model_width % 2:
            raise ValueError("model_width must be even (sinusoidal encodings)")
        if self.mode not in ("reactive", "duet"):
            raise ValueError(f"mode must be 'reactive' or 'duet', got {self.mode!r}")
        if self.input_channels != N_CHANNELS or self.music_channels != N_MUSIC:
            raise ValueError("channel counts are fixed by the representation layout")
        if min(self.model_width, self.block_count, self.head_count, self.feedforward_width, self.max_T) < 1:
            raise ValueError("sizes must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


def sinusoid(pos: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freq = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    ang = pos.to(torch.float64)[..., None] * freq
    return torch.cat([torch.sin(ang), torch.cos(ang)], -1)


def _modulate(h, shift, scale):
    return h * (1 + scale) + shift


class _Block(nn.Module):
    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        W = cfg.model_width
        self.norm = nn.LayerNorm(W, elementwise_affine=False, eps=1e-6)
        self.ada = nn.Linear(W, 9 * W)
        self.self_attn = nn.MultiheadAttention(W, cfg.head_count, batch_first=True)
        self.cross_attn = nn.MultiheadAttention(W, cfg.head_count, batch_first=True)
        self.ff = nn.Sequential(nn.Linear(W, cfg.feedforward_width), nn.GELU(),
                                nn.Linear(cfg.feedforward_width, W))

    def modulation(self, cond):
        return self.ada(nn.functional.silu(cond)).chunk(9, dim=-1)

    def attend_self(self, h, mod, mask):
        s, c, g = mod[0:3]
        x = _modulate(self.norm(h), s, c)
        return h + g * self.self_attn(x, x, x, attn_mask=mask, need_weights=False)[0]

    def attend_other(self, h, other, mod, mask):
        s, c, g = mod[3:6]
        x = _modulate(self.norm(h), s, c)
        kv = self.norm(other)
        return h + g * self.cross_attn(x, kv, kv, attn_mask=mask, need_weights=False)[0]

    def feedforward(self, h, mod):
        s, c, g = mod[6:9]
        return h + g * self.ff(_modulate(self.norm(h), s, c))


class Denoiser(nn.Module):
    """``forward(x_n, n, music, leader)`` -> x0 prediction(s).

    Reactive: ``leader`` is the clean leader, returns the follower x0.
    Duet: ``leader`` is the noisy leader stream, returns (leader x0, follower x0).
    """

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            self._build(cfg)

    def _build(self, cfg: DenoiserConfig):
        W = cfg.model_width
        self.inp = nn.ModuleDict({s: nn.Linear(cfg.input_channels, W) for s in STREAMS})
        self.time_mlp = nn.Sequential(nn.Linear(W, W), nn.SiLU(), nn.Linear(W, W))
        self.music_frame = nn.Linear(cfg.music_channels, W)
        self.music_pool = nn.Linear(cfg.music_channels, W) if cfg.music_pooling else None
        self.blocks = nn.ModuleList(
            nn.ModuleDict({s: _Block(cfg) for s in STREAMS}) for _ in range(cfg.block_count)
        )
        self.final_norm = nn.LayerNorm(W, elementwise_affine=False, eps=1e-6)
        self.final_ada = nn.ModuleDict({s: nn.Linear(W, 2 * W) for s in STREAMS})
        self.out = nn.ModuleDict({s: nn.Linear(W, cfg.input_channels) for s in STREAMS})
        for lin in self.out.values():
            nn.init.zeros_(lin.weight)
            nn.init.zeros_(lin.bias)

    def _mask(self, T, device):
        if self.cfg.window is None:
            return None
        i = torch.arange(T, device=device)
        far = (i[:, None] - i[None, :]).abs() > self.cfg.window
        return torch.zeros(T, T, dtype=self.dtype, device=device).masked_fill(far, float("-inf"))

    @property
    def dtype(self):
        return self.time_mlp[0].weight.dtype

    def conditioning(self, n, music):
        """Per-frame conditioning (B, T, W)."""
        B, T = music.shape[:2]
        W = self.cfg.model_width
        n = torch.as_tensor(n).reshape(-1).expand(B)
        c = self.time_mlp(sinusoid(n, W).to(self.dtype))[:, None, :]
        c = c + self.music_frame(music)
        if self.music_pool is not None:
            c = c + self.music_pool(music.mean(dim=1))[:, None, :]
        return c

    def forward(self, x_n, n, music, leader):
        squeeze = x_n.dim() == 2
        if squeeze:
            x_n, music, leader = x_n[None], music[None], leader[None]
        B, T, C = x_n.shape
        if music.shape[:2] != (B, T) or leader.shape != x_n.shape:
            raise ValueError(f"shape mismatch: x {tuple(x_n.shape)}, music {tuple(music.shape)}, leader {tuple(leader.shape)}")
        if T > self.cfg.max_T:
            raise ValueError(f"T={T} exceeds max_T={self.cfg.max_T}")
        cond = self.conditioning(n, music)
        pos = sinusoid(torch.arange(T), self.cfg.model_width).to(self.dtype)
        h = {"leader": self.inp["leader"](leader) + pos, "follower": self.inp["follower"](x_n) + pos}
        mask = self._mask(T, x_n.device)
        for blk in self.blocks:
            mod = {s: blk[s].modulation(cond) for s in STREAMS}
            h = {s: blk[s].attend_self(h[s], mod[s], mask) for s in STREAMS}
            h = {s: blk[s].attend_other(h[s], h[o], mod[s], mask) for s, o in zip(STREAMS, STREAMS[::-1])}
            h = {s: blk[s].feedforward(h[s], mod[s]) for s in STREAMS}
        out = {}
        for s in STREAMS:
            shift, scale = self.final_ada[s](nn.functional.silu(cond)).chunk(2, dim=-1)
            out[s] = self.out[s](_modulate(self.final_norm(h[s]), shift, scale))
            if squeeze:
                out[s] = out[s][0]
        if self.cfg.mode == "duet":
            return out["leader"], out["follower"]
        return out["follower"]


def init(config: DenoiserConfig) -> Denoiser:
    return Denoiser(config)


def parameter_count(cfg: DenoiserConfig) -> int:
    """Closed-form number of trainable scalars."""
    W, F, C, M, B = (cfg.model_width, cfg.feedforward_width, cfg.input_channels,
                     cfg.music_channels, cfg.block_count)
    lin = lambda i, o: i * o + o  # noqa: E731
    attn = 4 * W * W + 4 * W
    block = lin(W, 9 * W) + 2 * attn + lin(W, F) + lin(F, W)
    per_stream = lin(C, W) + B * block + lin(W, 2 * W) + lin(W, C)
    shared = 2 * lin(W, W) + lin(M, W) + (lin(M, W) if cfg.music_pooling else 0)
    return 2 * per_stream + shared


def parameter_gradients(model: nn.Module, loss_fn) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of ``loss_fn(model)`` for every named parameter."""
    model.zero_grad(set_to_none=True)
    bad: list[str] = []

    def watch(name):
        def hook(_mod, _inp, out):
            outs = out if isinstance(out, tuple) else (out,)
            if not bad and any(isinstance(o, torch.Tensor) and not torch.all(torch.isfinite(o)) for o in outs):
                bad.append(name)
        return hook

    handles = [m.register_forward_hook(watch(n)) for n, m in model.named_modules() if n]
    try:
        loss = loss_fn(model)
    finally:
        for h in handles:
            h.remove()
    if not torch.isfinite(loss):
        where = f" (first in layer {bad[0]})" if bad else ""
        raise FloatingPointError(f"non-finite loss {float(loss.detach())}{where}")
    loss.backward()
    grads = {}
    for name, p in model.named_parameters():
        g = p.grad if p.grad is not None else torch.zeros_like(p)
        if not torch.all(torch.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in layer {name}")
        grads[name] = g.detach().clone()
    return grads


def state_tensors(model: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}


def load_state_tensors(model: nn.Module, tensors: dict) -> None:
    state = {k: torch.as_tensor(np.asarray(v)) for k, v in tensors.items()}
    model.load_state_dict(state)


class Predictor:
    """Adapts a :class:`Denoiser` to the numpy callable used by ``diffusion.sample``."""

    def __init__(self, model: Denoiser):
        self.model = model.eval()

    def __call__(self, x_n, n, music, leader, mode="reactive"):
        if mode != self.model.cfg.mode:
            raise ValueError(f"denoiser trained for {self.model.cfg.mode!r}, sampler asked for {mode!r}")
        dt = self.model.dtype
        with torch.no_grad():
            out = self.model(torch.as_tensor(x_n, dtype=dt), n, torch.as_tensor(music, dtype=dt),
                             torch.as_tensor(leader, dtype=dt))
        if mode == "duet":
            return out[0].double().numpy(), out[1].double().numpy()
        return out.double().numpy()
