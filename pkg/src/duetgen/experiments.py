"""Helpers shared by the desk-scale experiments and the acceptance checks."""
from __future__ import annotations

import numpy as np
import torch

from duetgen.body_model import BodyModel, default_body_model
from duetgen.denoiser import Denoiser
from duetgen.diffusion import NoiseSchedule
from duetgen.losses import LossWeights, compute_losses


def probe_steps(N: int) -> tuple[int, ...]:
    """A spread of diffusion steps from 1 to N."""
    return tuple(sorted({1, max(1, N // 10), max(1, N // 4), max(1, N // 2), N}))


def held_out_losses(net: Denoiser, schedule: NoiseSchedule, encoded, body: BodyModel | None = None,
                    steps=None, seed: int = 123) -> dict[str, float]:
    """Follower-stream losses at fixed steps and fixed noise, averaged over steps.

    Unlike the per-epoch training log this does not depend on which steps
    the optimiser happened to draw, so before/after numbers are comparable.
    In duet mode the leader input is noised with the same step.
    """
    body = body or default_body_model()
    steps = steps or probe_steps(schedule.N)
    dt = net.dtype
    lead, foll, music = (torch.as_tensor(np.asarray(a), dtype=dt) for a in encoded)
    g = np.random.default_rng(seed)
    was_training = net.training
    net.eval()
    sums: dict[str, float] = {}
    with torch.no_grad():
        for n in steps:
            ab = float(schedule.alpha_bar[n - 1])
            nf = torch.as_tensor(g.standard_normal(foll.shape), dtype=dt)
            x = np.sqrt(ab) * foll + np.sqrt(1 - ab) * nf
            if net.cfg.mode == "duet":
                nl = torch.as_tensor(g.standard_normal(lead.shape), dtype=dt)
                pred = net(x, n, music, np.sqrt(ab) * lead + np.sqrt(1 - ab) * nl)[1]
            else:
                pred = net(x, n, music, lead)
            for k, v in compute_losses(pred, foll, lead, body, LossWeights()).as_floats().items():
                sums[k] = sums.get(k, 0.0) + v / len(steps)
    net.train(was_training)
    return sums
