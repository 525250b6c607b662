"""x0-prediction training loop with per-epoch logs and checkpoints."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from duetgen.body_model import BodyModel, default_body_model
from duetgen.denoiser import Denoiser, DenoiserConfig, load_state_tensors, state_tensors
from duetgen.diffusion import NoiseSchedule
from duetgen.formats import read_checkpoint, write_checkpoint
from duetgen.losses import LossWeights, compute_losses
from duetgen.motion import DuetSample
from duetgen.representation import encode


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-4
    weight_decay: float = 2e-5
    betas: tuple[float, float] = (0.9, 0.999)
    epochs: int = 10
    batch_size: int = 4
    seed: int = 0
    grad_clip: float | None = 1.0


@dataclass
class TrainResult:
    model: Denoiser
    log: list[dict]


def encode_dataset(samples: list[DuetSample], model: BodyModel):
    """Stack leader/follower representations and music into float tensors."""
    lead = np.stack([encode(s.leader, s.follower, model).data for s in samples])
    foll = np.stack([encode(s.follower, s.leader, model).data for s in samples])
    music = np.stack([s.music.data for s in samples])
    return lead, foll, music


def _step_loss(net: Denoiser, schedule, lead, foll, music, n, noise_l, noise_f, weights, body):
    ab = torch.as_tensor(schedule.alpha_bar[n - 1], dtype=foll.dtype)[:, None, None]
    xf_n = ab.sqrt() * foll + (1 - ab).sqrt() * noise_f
    if net.cfg.mode == "duet":
        xl_n = ab.sqrt() * lead + (1 - ab).sqrt() * noise_l
        pl, pf = net(xf_n, torch.as_tensor(n), music, xl_n)
        lf = compute_losses(pf, foll, lead, body, weights)
        ll = compute_losses(pl, lead, foll, body, weights)
        return lf, ll
    pf = net(xf_n, torch.as_tensor(n), music, lead)
    return compute_losses(pf, foll, lead, body, weights), None


def train(samples: list[DuetSample], denoiser: Denoiser, schedule: NoiseSchedule,
          weights: LossWeights = LossWeights(), opt: OptimizerConfig = OptimizerConfig(),
          body: BodyModel | None = None, checkpoint_dir: str | Path | None = None,
          log_path: str | Path | None = None, encoded=None) -> TrainResult:
    """Train in place and return the model plus one record per epoch.

    ``encoded`` may pass precomputed ``encode_dataset`` output. In duet
    mode both streams are supervised, each against the other as partner.
    """
    if not samples and encoded is None:
        raise ValueError("empty dataset")
    body = body or default_body_model()
    torch.use_deterministic_algorithms(True)
    torch.manual_seed(opt.seed)
    rng = np.random.default_rng(opt.seed)
    dt = denoiser.dtype
    lead, foll, music = (torch.as_tensor(a, dtype=dt) for a in (encoded or encode_dataset(samples, body)))
    S = lead.shape[0]
    optim = torch.optim.AdamW(denoiser.parameters(), lr=opt.lr, weight_decay=opt.weight_decay, betas=opt.betas)
    log = []
    denoiser.train()
    for epoch in range(opt.epochs):
        order = rng.permutation(S)
        sums: dict[str, float] = {}
        batches = 0
        for start in range(0, S, opt.batch_size):
            idx = torch.as_tensor(order[start:start + opt.batch_size])
            B = len(idx)
            n = rng.integers(1, schedule.N + 1, size=B)
            noise_f = torch.as_tensor(rng.standard_normal(foll[idx].shape), dtype=dt)
            noise_l = torch.as_tensor(rng.standard_normal(lead[idx].shape), dtype=dt)
            lf, ll = _step_loss(denoiser, schedule, lead[idx], foll[idx], music[idx], n, noise_l, noise_f, weights, body)
            total = lf.total if ll is None else lf.total + ll.total
            if not torch.isfinite(total):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {batches}: {lf.as_floats()}")
            optim.zero_grad(set_to_none=True)
            total.backward()
            if opt.grad_clip:
                torch.nn.utils.clip_grad_norm_(denoiser.parameters(), opt.grad_clip)
            optim.step()
            vals = lf.as_floats()
            if ll is not None:
                vals = {k: v + ll.as_floats()[k] for k, v in vals.items()}
            for k, v in vals.items():
                sums[k] = sums.get(k, 0.0) + v
            batches += 1
        record = {"epoch": epoch, **{k: v / batches for k, v in sums.items()}}
        log.append(record)
        if log_path is not None:
            with open(log_path, "a") as fh:
                fh.write(json.dumps(record) + "\n")
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
        save_checkpoint(Path(checkpoint_dir) / "final.idc", denoiser, schedule, weights, opt)
    denoiser.eval()
    return TrainResult(denoiser, log)


def save_checkpoint(path, net: Denoiser, schedule: NoiseSchedule, weights: LossWeights,
                    opt: OptimizerConfig, extra: dict | None = None) -> None:
    config = {
        "denoiser": net.cfg.as_dict(),
        "schedule": {"N": schedule.N, "beta_start": float(schedule.beta[0]), "beta_end": float(schedule.beta[-1])},
        "loss_weights": weights.as_dict(),
        "optimizer": asdict(opt),
        **(extra or {}),
    }
    write_checkpoint(path, config, state_tensors(net))


def load_checkpoint(path) -> tuple[Denoiser, dict]:
    config, tensors = read_checkpoint(path)
    cfg = dict(config["denoiser"])
    net = Denoiser(DenoiserConfig(**cfg))
    load_state_tensors(net, tensors)
    net.eval()
    return net, config
