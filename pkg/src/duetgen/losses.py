"""Training objective: x0 reconstruction plus geometric and interaction terms.

Everything here is torch so it can be differentiated end to end. Inputs
may carry any number of leading batch dims: (..., T, 4981).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
import torch

from duetgen.body_model import N_JOINTS, BodyModel
from duetgen.representation import FOOT_CONTACT, PERSON_CONTACT, YAW, decode


@dataclass(frozen=True)
class LossWeights:
    vel: float = 1.0
    acc: float = 1.0
    dm: float = 0.5
    ro: float = 0.5
    con: float = 1.0
    foot: float = 0.5
    dist_threshold: float = 1.0  # m, distance-matrix mask

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossBreakdown:
    recon: torch.Tensor
    vel: torch.Tensor
    acc: torch.Tensor
    foot: torch.Tensor
    dm: torch.Tensor
    ro: torch.Tensor
    con: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}


def _t(x, like=None):
    if isinstance(x, torch.Tensor):
        return x
    x = getattr(x, "data", x)
    dtype = like.dtype if like is not None else torch.float64
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def _pairwise(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    d2 = ((a[..., :, None, :] - b[..., None, :, :]) ** 2).sum(-1)
    return torch.sqrt(d2.clamp_min(1e-18))


def wrap_torch(a: torch.Tensor) -> torch.Tensor:
    return torch.atan2(torch.sin(a), torch.cos(a))


def _masked_min_sq(query, labels, target):
    """Sum of squared shortest distances from labeled query points to target.

    query (..., T, P, 3), labels (..., T, P), target (..., T, V, 3).
    """
    sel = torch.nonzero(labels.detach() > 0.5, as_tuple=True)
    if sel[0].numel() == 0:
        return query.sum() * 0.0
    q = query[sel]  # (K, 3)
    tgt = target[sel[:-1]]  # (K, V, 3)
    d2 = ((tgt - q[:, None, :]) ** 2).sum(-1)
    return d2.min(dim=-1).values.sum()


def contact_loss(follower_points, leader_points, labels_leader, labels_follower):
    """Masked min-distance terms in both directions, summed per frame, averaged over frames."""
    frames = int(np.prod(follower_points.shape[:-2]))
    a = _masked_min_sq(leader_points, labels_leader, follower_points[..., N_JOINTS:, :])
    b = _masked_min_sq(follower_points, labels_follower, leader_points[..., N_JOINTS:, :])
    return (a + b) / frames


def compute_losses(pred, gt, leader, model: BodyModel, weights: LossWeights = LossWeights()) -> LossBreakdown:
    pred = _t(pred)
    gt = _t(gt, pred)
    leader = _t(leader, pred)
    if pred.shape != gt.shape or pred.shape != leader.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)}, gt {tuple(gt.shape)}, leader {tuple(leader.shape)}")
    recon = ((pred - gt) ** 2).mean()

    pp, pg = decode(pred, model), decode(gt, model)
    pl = decode(leader, model).detach()
    zero = recon * 0.0
    if pred.shape[-2] > 1:
        dp, dg = pp.diff(dim=-3), pg.diff(dim=-3)
        vel = ((dp - dg) ** 2).mean()
    else:
        dp, vel = None, zero
    if pred.shape[-2] > 2:
        acc = ((dp.diff(dim=-3) - dg.diff(dim=-3)) ** 2).mean()
    else:
        acc = zero

    if dp is not None:
        feet = list(model.foot_joint_indices)
        speed = torch.sqrt((dp[..., feet, :] ** 2).sum(-1).clamp_min(1e-18))
        mask = pred[..., :-1, FOOT_CONTACT].detach().clamp(0.0, 1.0)
        foot = (speed * mask).mean()
    else:
        foot = zero

    jl = pl[..., :N_JOINTS, :]
    m_pred = _pairwise(jl, pp[..., :N_JOINTS, :])
    m_gt = _pairwise(jl, pg[..., :N_JOINTS, :])
    dm_mask = (m_gt < weights.dist_threshold).to(pred.dtype)
    dm = (((m_pred - m_gt) * dm_mask) ** 2).mean()

    rel_pred = leader[..., YAW] - pred[..., YAW]
    rel_gt = leader[..., YAW] - gt[..., YAW]
    ro = (wrap_torch(rel_pred - rel_gt) ** 2).mean()

    con = contact_loss(pp, pl, leader[..., PERSON_CONTACT], pred[..., PERSON_CONTACT])

    total = (recon + weights.vel * vel + weights.acc * acc + weights.dm * dm + weights.ro * ro
             + weights.con * con + weights.foot * foot)
    return LossBreakdown(recon, vel, acc, foot, dm, ro, con, total)
