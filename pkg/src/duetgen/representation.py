"""Canonical interaction-aware motion representation (4981 channels per frame).

Layout per frame::

    [0:3)       root position x, y, z (m)
    [3]         root yaw (rad, wrapped to (-pi, pi])
    [4]         yaw velocity (rad/frame)
    [5:7)       planar root velocity x, z in the canonical frame (m/frame)
    [7:172)     55 joint offsets (body: from root, fingers: from wrist)
    [172:2137)  655 vertex offsets from root
    [2137:2302) joint offset velocities
    [2302:4267) vertex offset velocities
    [4267:4271) foot contact (l/r ankle, l/r toe)
    [4271:4981) person contact, 55 joints then 655 vertices

Offsets are expressed in the per-frame canonical frame: root removed and
yaw undone. :func:`decode` works on numpy arrays and torch tensors alike.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from duetgen.body_model import N_JOINTS, N_POINTS, BodyModel, forward_kinematics, skin_vertices
from duetgen.motion import MotionSequence

ROOT = slice(0, 3)
YAW = 3
YAW_VEL = 4
ROOT_VEL = slice(5, 7)
JOINT_OFF = slice(7, 172)
VERT_OFF = slice(172, 2137)
OFFSETS = slice(7, 2137)
JOINT_VEL = slice(2137, 2302)
VERT_VEL = slice(2302, 4267)
FOOT_CONTACT = slice(4267, 4271)
PERSON_CONTACT = slice(4271, 4981)
N_CHANNELS = 4981

FOOT_HEIGHT = 0.08  # m
FOOT_SPEED = 0.010  # m/frame at 30 fps
CONTACT_DIST = 0.01  # m

_CHANNEL_GROUPS = {
    "root": ROOT, "yaw": slice(3, 4), "yaw_vel": slice(4, 5), "root_vel": ROOT_VEL,
    "joint_offsets": JOINT_OFF, "vertex_offsets": VERT_OFF,
    "joint_velocities": JOINT_VEL, "vertex_velocities": VERT_VEL,
    "foot_contact": FOOT_CONTACT, "person_contact": PERSON_CONTACT,
}

assert 7 + 165 + 1965 + 165 + 1965 + 4 + 710 == N_CHANNELS


@dataclass(eq=False)
class RepSequence:
    data: np.ndarray  # (T, 4981)
    fps: float = 30.0

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != N_CHANNELS:
            raise ValueError(f"representation must be (T, {N_CHANNELS}), got {self.data.shape}")

    def __len__(self) -> int:
        return self.data.shape[0]

    def group(self, name: str) -> np.ndarray:
        return self.data[:, _CHANNEL_GROUPS[name]]

    def debug_dump(self, frames=None) -> str:
        """Structured-text view, one block of named channel groups per frame."""
        lines = [f"# RepSequence T={len(self)} C={N_CHANNELS} fps={self.fps}"]
        for t in range(len(self)) if frames is None else frames:
            lines.append(f"frame {t}:")
            for name, sl in _CHANNEL_GROUPS.items():
                v = self.data[t, sl]
                if v.size <= 7:
                    body = " ".join(f"{x:.6g}" for x in v)
                else:
                    body = f"n={v.size} min={v.min():.6g} max={v.max():.6g} mean={v.mean():.6g}"
                    if name.endswith("contact"):
                        body += f" active={int(np.sum(v > 0.5))}"
                lines.append(f"  {name}: {body}")
        return "\n".join(lines) + "\n"


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a) + np.pi, 2 * np.pi) - np.pi
    return np.where(w <= -np.pi, w + 2 * np.pi, w)


def yaw_matrix(yaw, xp=np):
    """Rotation about +Y, (..., 3, 3); maps +Z to (sin yaw, 0, cos yaw)."""
    c, s = xp.cos(yaw), xp.sin(yaw)
    z, o = xp.zeros_like(c), xp.ones_like(c)
    rows = [xp.stack([c, z, s], -1), xp.stack([z, o, z], -1), xp.stack([-s, z, c], -1)]
    return xp.stack(rows, -2)


def _xp(x):
    if type(x).__module__.startswith("torch"):
        import torch
        return torch
    return np


def root_yaw(pelvis_rotation: np.ndarray) -> np.ndarray:
    """Heading of the pelvis forward (+Z) axis projected to the floor."""
    fwd = pelvis_rotation[..., :, 2]
    return wrap_angle(np.arctan2(fwd[..., 0], fwd[..., 2]))


def _forward_diff(x: np.ndarray) -> np.ndarray:
    """x[t+1] - x[t]; the last frame repeats the previous difference."""
    d = np.zeros_like(x)
    if x.shape[0] > 1:
        d[:-1] = x[1:] - x[:-1]
        d[-1] = d[-2]
    return d


def canonical_offsets(points: np.ndarray, yaw: np.ndarray, model: BodyModel) -> np.ndarray:
    """(T, 710, 3) global points -> (T, 710, 3) canonical offsets."""
    root = points[:, :1, :]
    rel = points - root
    fingers = np.array(model.finger_joint_indices)
    rel[:, fingers] = points[:, fingers] - points[:, model.finger_wrist]
    inv = yaw_matrix(-yaw)
    return np.einsum("tab,tpb->tpa", inv, rel)


def encode_points(points, pelvis_rotation, other_points, model: BodyModel, fps: float = 30.0) -> np.ndarray:
    """Encode from realized (T, 710, 3) point clouds; returns (T, 4981)."""
    T = points.shape[0]
    if other_points.shape[0] != T:
        raise ValueError(f"frame counts differ: {T} vs {other_points.shape[0]}")
    yaw = root_yaw(pelvis_rotation)
    root = points[:, 0, :]
    off = canonical_offsets(points, yaw, model)
    out = np.zeros((T, N_CHANNELS))
    out[:, ROOT] = root
    out[:, YAW] = yaw
    dyaw = np.zeros(T)
    droot = np.zeros((T, 3))
    if T > 1:
        dyaw[:-1] = wrap_angle(np.diff(yaw))
        dyaw[-1] = dyaw[-2]
        droot = _forward_diff(root)
    out[:, YAW_VEL] = dyaw
    local_vel = np.einsum("tab,tb->ta", yaw_matrix(-yaw), droot)
    out[:, ROOT_VEL] = local_vel[:, [0, 2]]
    flat = off.reshape(T, -1)
    out[:, OFFSETS] = flat
    vel = _forward_diff(flat)
    out[:, JOINT_VEL] = vel[:, : 3 * N_JOINTS]
    out[:, VERT_VEL] = vel[:, 3 * N_JOINTS:]
    out[:, FOOT_CONTACT] = detect_foot_contact(points, model, fps)
    out[:, PERSON_CONTACT] = detect_person_contact(points, other_points)
    return out


def encode(motion: MotionSequence, other: MotionSequence, model: BodyModel) -> RepSequence:
    if len(motion) != len(other):
        raise ValueError(f"frame counts differ: {len(motion)} vs {len(other)}")
    if motion.fps != other.fps:
        raise ValueError(f"fps differ: {motion.fps} vs {other.fps}")
    R, t = forward_kinematics(model, motion.root_translation, motion.joint_rotations)
    pts = np.concatenate([t, skin_vertices(model, (R, t))], axis=1)
    other_pts = other.points(model)
    return RepSequence(encode_points(pts, R[:, 0], other_pts, model, motion.fps), motion.fps)


def decode(rep, model: BodyModel):
    """Global joint/vertex positions (..., T, 710, 3) from a representation.

    Accepts a :class:`RepSequence` or a raw (..., T, 4981) numpy array or
    torch tensor. Velocity and contact channels are ignored.
    """
    x = rep.data if isinstance(rep, RepSequence) else rep
    xp = _xp(x)
    root = x[..., ROOT]
    R = yaw_matrix(x[..., YAW], xp)
    off = x[..., OFFSETS].reshape(*x.shape[:-1], N_POINTS, 3)
    fingers = list(model.finger_joint_indices)
    wrists = list(model.finger_wrist)
    if xp is np:
        off = off.copy()
        off[..., fingers, :] = off[..., fingers, :] + off[..., wrists, :]
    else:
        shift = xp.zeros_like(off)
        shift[..., fingers, :] = off[..., wrists, :]
        off = off + shift
    return xp.einsum("...ab,...pb->...pa", R, off) + root[..., None, :]


def decode_jacobian_apply(grad_points: np.ndarray, yaw: np.ndarray, model: BodyModel) -> np.ndarray:
    """Chain a gradient over decoded points (T, 710, 3) into offset channels (T, 2130).

    Decode is affine in the offsets for fixed root and yaw: p = root + R o,
    with finger points also depending on their wrist offset.
    """
    R = yaw_matrix(yaw)
    g = np.einsum("tba,tpb->tpa", R, grad_points)  # R^T g
    out = g.copy()
    np.add.at(out, (slice(None), model.finger_wrist), g[:, list(model.finger_joint_indices)])
    return out.reshape(g.shape[0], -1)


def detect_foot_contact(points: np.ndarray, model: BodyModel, fps: float = 30.0,
                        height: float = FOOT_HEIGHT, speed: float = FOOT_SPEED) -> np.ndarray:
    """Binary (T, 4) foot-ground contact; floor is y = 0.

    ``speed`` is in m/frame at 30 fps and is rescaled by 30/fps.
    """
    feet = np.asarray(points)[:, list(model.foot_joint_indices), :]
    v = np.linalg.norm(_forward_diff(feet), axis=-1)
    thr = speed * 30.0 / fps
    return ((feet[..., 1] < height) & (v < thr)).astype(float)


def detect_person_contact(self_points: np.ndarray, other_points: np.ndarray,
                          threshold: float = CONTACT_DIST) -> np.ndarray:
    """Per-point contact labels against the partner's surface vertices.

    Works on one frame ((710, 3) -> (710,)) or a sequence ((T, 710, 3) -> (T, 710)).
    """
    a = np.asarray(self_points)
    b = np.asarray(other_points)
    if a.ndim == 2:
        return detect_person_contact(a[None], b[None], threshold)[0]
    out = np.zeros(a.shape[:2])
    for t in range(a.shape[0]):
        tree = cKDTree(b[t, N_JOINTS:])
        d, _ = tree.query(a[t], k=1, distance_upper_bound=threshold)
        out[t] = d < threshold
    return out


def nearest_distance(query: np.ndarray, target: np.ndarray):
    """Per-query minimum distance and argmin into target (single frame)."""
    d, idx = cKDTree(target).query(query, k=1)
    return d, idx
