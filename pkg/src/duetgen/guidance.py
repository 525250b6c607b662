"""Contact and penetration guidance on the clean-sample prediction.

Both objectives are differentiated analytically with respect to the
joint/vertex offset channels only. Decode is affine in those channels for
a fixed root and yaw, so the chain rule is a per-frame rotation plus the
finger-to-wrist coupling (see ``decode_jacobian_apply``).

Masks (contact labels, the penetration indicator) are treated as
constants when differentiating.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from duetgen.body_model import N_JOINTS, N_POINTS, BodyModel, capsule_sdf
from duetgen.representation import (
    OFFSETS, PERSON_CONTACT, YAW, RepSequence, decode, decode_jacobian_apply,
)

SHARPNESS = 0.05  # m


class NumericalError(RuntimeError):
    """Non-finite values during guidance or sampling."""


@dataclass(frozen=True)
class GuidanceConfig:
    a_con: float = 0.0
    a_pene: float = 0.0
    steps_active: tuple[int, int] | None = None  # inclusive diffusion-step range, None = all
    max_update_norm: float = 0.05  # per-frame L2 clip of the offset update (m)
    sharpness: float = SHARPNESS

    def __post_init__(self):
        if not self.max_update_norm > 0:
            raise ValueError("max_update_norm must be > 0")
        if self.steps_active is not None:
            lo, hi = self.steps_active
            if not 1 <= lo <= hi:
                raise ValueError(f"steps_active must satisfy 1 <= lo <= hi, got {self.steps_active}")

    @property
    def enabled(self) -> bool:
        return self.a_con != 0.0 or self.a_pene != 0.0

    def active(self, n: int, N: int | None = None) -> bool:
        if N is not None and self.steps_active is not None and self.steps_active[1] > N:
            raise ValueError(f"steps_active {self.steps_active} exceeds schedule length {N}")
        if self.steps_active is None:
            return True
        return self.steps_active[0] <= n <= self.steps_active[1]


@dataclass(eq=False)
class LeaderState:
    """Everything guidance needs to know about the (fixed) partner."""

    points: np.ndarray  # (T, 710, 3)
    labels: np.ndarray  # (T, 710) binary

    @property
    def joints(self) -> np.ndarray:
        return self.points[:, :N_JOINTS]

    @classmethod
    def from_rep(cls, rep, model: BodyModel) -> "LeaderState":
        x = rep.data if isinstance(rep, RepSequence) else np.asarray(rep)
        return cls(decode(x, model), (x[:, PERSON_CONTACT] > 0.5).astype(float))


def _as_array(rep) -> np.ndarray:
    return rep.data if isinstance(rep, RepSequence) else np.asarray(rep, dtype=float)


def _nearest(query: np.ndarray, target: np.ndarray):
    """Brute-force nearest target for each query; ties -> lowest index."""
    d2 = ((query[:, None, :] - target[None, :, :]) ** 2).sum(-1)
    idx = np.argmin(d2, axis=1)
    return np.sqrt(d2[np.arange(len(query)), idx]), idx


def masked_min_distances(follower_points, leader_points, labels_leader, labels_follower):
    """Per-frame lists of masked shortest distances (leader->follower, follower->leader).

    Each labeled point is measured against the partner's surface vertices.
    """
    out_l, out_f = [], []
    for t in range(follower_points.shape[0]):
        li = np.flatnonzero(labels_leader[t] > 0.5)
        fi = np.flatnonzero(labels_follower[t] > 0.5)
        out_l.append(_nearest(leader_points[t, li], follower_points[t, N_JOINTS:])[0] if li.size else np.zeros(0))
        out_f.append(_nearest(follower_points[t, fi], leader_points[t, N_JOINTS:])[0] if fi.size else np.zeros(0))
    return out_l, out_f


def contact_value_grad(follower_rep, leader_points, labels_leader, labels_follower, model: BodyModel):
    """Masked squared shortest distances in both directions, summed over points and frames.

    Returns (value, gradient over the offset channels, shape (T, 2130)).
    """
    x = _as_array(follower_rep)
    pf = decode(x, model)
    T = x.shape[0]
    gp = np.zeros((T, N_POINTS, 3))
    value = 0.0
    for t in range(T):
        li = np.flatnonzero(labels_leader[t] > 0.5)
        if li.size:
            d, j = _nearest(leader_points[t, li], pf[t, N_JOINTS:])
            value += float(np.sum(d ** 2))
            # d^2 = |pf_j - pl_i|^2  ->  d/dpf_j = 2 (pf_j - pl_i)
            np.add.at(gp[t], N_JOINTS + j, 2.0 * (pf[t, N_JOINTS + j] - leader_points[t, li]))
        fi = np.flatnonzero(labels_follower[t] > 0.5)
        if fi.size:
            d, i = _nearest(pf[t, fi], leader_points[t, N_JOINTS:])
            value += float(np.sum(d ** 2))
            gp[t, fi] += 2.0 * (pf[t, fi] - leader_points[t, N_JOINTS + i])
    return value, decode_jacobian_apply(gp, x[:, YAW], model)


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def penetration_value_grad(follower_rep, leader_joints, model: BodyModel, sharpness: float = SHARPNESS):
    """Mean over all follower points of sigmoid(-sdf/s) on penetrating points.

    ``leader_joints`` is (T, 55, 3) (or anything :func:`capsule_sdf` accepts
    per frame). Returns (value, gradient over offset channels (T, 2130)).
    """
    x = _as_array(follower_rep)
    pf = decode(x, model)
    T = x.shape[0]
    sdf, n, _ = capsule_sdf(model, np.asarray(leader_joints), pf)
    inside = sdf < 0
    u = -sdf / sharpness
    sig = _sigmoid(u)
    norm = 1.0 / (T * N_POINTS)
    value = float(np.sum(sig * inside) * norm)
    dsig = sig * (1.0 - sig) * (-1.0 / sharpness)
    gp = (inside * dsig * norm)[..., None] * n
    return value, decode_jacobian_apply(gp, x[:, YAW], model)


def clip_per_frame(update: np.ndarray, max_norm: float) -> np.ndarray:
    nrm = np.linalg.norm(update, axis=1, keepdims=True)
    scale = np.minimum(1.0, max_norm / np.maximum(nrm, 1e-300))
    return update * scale


def refine(x0_hat, leader: LeaderState, config: GuidanceConfig, model: BodyModel,
           return_values: bool = False):
    """One guidance step: descend both objectives on the offset channels.

    Contact labels of the follower are read from ``x0_hat`` (thresholded at
    0.5); all non-offset channels are returned unchanged.
    """
    x = _as_array(x0_hat)
    out = np.array(x, dtype=float, copy=True)
    values = {}
    if not config.enabled:
        return (out, values) if return_values else out
    labels_f = (x[:, PERSON_CONTACT] > 0.5).astype(float)
    step = np.zeros((x.shape[0], OFFSETS.stop - OFFSETS.start))
    if config.a_con:
        v, g = contact_value_grad(x, leader.points, leader.labels, labels_f, model)
        values["L_con"] = v
        step -= config.a_con * g
    if config.a_pene:
        v, g = penetration_value_grad(x, leader.joints, model, config.sharpness)
        values["G_pene"] = v
        step -= config.a_pene * g
    if not np.all(np.isfinite(step)):
        raise NumericalError("non-finite guidance gradient")
    out[:, OFFSETS] += clip_per_frame(step, config.max_update_norm)
    return (out, values) if return_values else out
