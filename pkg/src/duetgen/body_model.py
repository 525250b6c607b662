"""Simplified articulated body: skeleton, skinned surface points and capsule SDF.

Stands in for SMPL-X. The model is a fixed 55-joint hierarchy with rest
offsets, 655 surface points skinned to at most two joints, and 23 capsules
(fingers excluded) whose union is the body's signed-distance proxy.

All pose-dependent functions are vectorized over leading frame axes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

N_JOINTS = 55
N_VERTS = 655
N_POINTS = N_JOINTS + N_VERTS


class BodyModelError(ValueError):
    """Raised when a body-model file violates the documented schema."""


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None
    offset: tuple[float, float, float]


@dataclass(frozen=True)
class Capsule:
    a: int
    b: int
    radius: float


@dataclass(frozen=True, eq=False)
class BodyModel:
    joints: tuple[Joint, ...]
    rest_vertices: np.ndarray  # (655, 3)
    skin_index: np.ndarray  # (655, 2) int
    skin_weight: np.ndarray  # (655, 2), zero-padded
    capsules: tuple[Capsule, ...]
    foot_joint_indices: tuple[int, ...]
    wrist_indices: tuple[int, ...]
    finger_joint_indices: tuple[int, ...]
    fps: float = 30.0
    vertex_capsule: np.ndarray | None = None
    # derived
    parents: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)
    rest_joints: np.ndarray = field(init=False, repr=False)
    finger_wrist: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        parents = np.array([-1 if j.parent is None else j.parent for j in self.joints])
        offsets = np.array([j.offset for j in self.joints], dtype=float)
        rest = np.zeros_like(offsets)
        for i, p in enumerate(parents):
            rest[i] = offsets[i] + (rest[p] if p >= 0 else 0.0)
        # map each finger joint to the wrist it descends from
        fw = []
        for f in self.finger_joint_indices:
            k = f
            while k not in self.wrist_indices:
                k = parents[k]
                if k < 0:
                    raise BodyModelError(f"finger joint {f} does not descend from a wrist")
            fw.append(k)
        for name, val in (("parents", parents), ("offsets", offsets),
                          ("rest_joints", rest), ("finger_wrist", np.array(fw, dtype=int))):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        for arr in (self.rest_vertices, self.skin_index, self.skin_weight):
            arr.setflags(write=False)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def capsule_ends(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = np.array([c.a for c in self.capsules])
        b = np.array([c.b for c in self.capsules])
        r = np.array([c.radius for c in self.capsules])
        return a, b, r

    def joint_index(self, name: str) -> int:
        return self.joint_names.index(name)


def _fail(fieldname: str, msg: str):
    raise BodyModelError(f"{fieldname}: {msg}")


def body_model_from_dict(cfg: dict) -> BodyModel:
    for key in ("joints", "surface_points", "capsules", "foot_joint_indices",
                "wrist_indices", "finger_joint_indices"):
        if key not in cfg:
            _fail(key, "missing required field")

    raw_joints = cfg["joints"]
    if len(raw_joints) != N_JOINTS:
        _fail("joints", f"joint count must be {N_JOINTS}, got {len(raw_joints)}")
    joints = []
    roots = 0
    for i, j in enumerate(raw_joints):
        try:
            parent = j["parent"]
            offset = tuple(float(x) for x in j["offset"])
            name = str(j["name"])
        except (KeyError, TypeError, ValueError) as exc:
            _fail(f"joints[{i}]", f"malformed record ({exc})")
        if len(offset) != 3 or not np.all(np.isfinite(offset)):
            _fail(f"joints[{i}].offset", "must be 3 finite numbers")
        if parent is None:
            roots += 1
        elif not isinstance(parent, int) or not 0 <= parent < N_JOINTS:
            _fail(f"joints[{i}].parent", f"invalid parent {parent!r}")
        elif parent >= i:
            # parent >= child either forms a cycle or breaks topological order
            _fail(f"joints[{i}].parent", f"parent index {parent} must be < child index {i} (cyclic or unsorted hierarchy)")
        joints.append(Joint(name, parent, offset))
    if roots != 1:
        _fail("joints", f"exactly one root joint required, found {roots}")

    raw_pts = cfg["surface_points"]
    if len(raw_pts) != N_VERTS:
        _fail("surface_points", f"surface point count must be {N_VERTS}, got {len(raw_pts)}")
    pos = np.zeros((N_VERTS, 3))
    sidx = np.zeros((N_VERTS, 2), dtype=int)
    sw = np.zeros((N_VERTS, 2))
    vcap = np.full(N_VERTS, -1, dtype=int)
    for i, p in enumerate(raw_pts):
        where = f"surface_points[{i}]"
        pos[i] = p["position"]
        skin = p["skin"]
        if not 1 <= len(skin) <= 2:
            _fail(f"{where}.skin", "1 or 2 (joint, weight) pairs required")
        for k, (ji, w) in enumerate(skin):
            if not 0 <= ji < N_JOINTS:
                _fail(f"{where}.skin", f"joint index {ji} out of range")
            if not 0.0 <= w <= 1.0:
                _fail(f"{where}.skin", f"weight {w} outside [0, 1]")
            sidx[i, k] = ji
            sw[i, k] = w
        if abs(sw[i].sum() - 1.0) > 1e-6:
            _fail(f"{where}.skin", f"weights must sum to 1 (got {sw[i].sum():g})")
        if "capsule" in p:
            vcap[i] = p["capsule"]

    capsules = []
    for i, c in enumerate(cfg["capsules"]):
        if not (0 <= c["a"] < N_JOINTS and 0 <= c["b"] < N_JOINTS):
            _fail(f"capsules[{i}]", "joint index out of range")
        if not c["radius"] > 0:
            _fail(f"capsules[{i}].radius", "radius must be > 0")
        capsules.append(Capsule(int(c["a"]), int(c["b"]), float(c["radius"])))

    foot = tuple(cfg["foot_joint_indices"])
    wrists = tuple(cfg["wrist_indices"])
    fingers = tuple(cfg["finger_joint_indices"])
    if len(foot) != 4:
        _fail("foot_joint_indices", "must list 4 joints")
    if len(wrists) != 2:
        _fail("wrist_indices", "must list 2 joints")
    if len(fingers) != 30:
        _fail("finger_joint_indices", "must list 30 joints")

    return BodyModel(
        joints=tuple(joints),
        rest_vertices=pos,
        skin_index=sidx,
        skin_weight=sw,
        capsules=tuple(capsules),
        foot_joint_indices=foot,
        wrist_indices=wrists,
        finger_joint_indices=fingers,
        fps=float(cfg.get("fps", 30.0)),
        vertex_capsule=vcap,
    )


def load_body_model(config_path: str | Path) -> BodyModel:
    path = Path(config_path)
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise BodyModelError(f"{path}: not valid JSON ({exc})") from exc
    return body_model_from_dict(cfg)


_DEFAULT: BodyModel | None = None


def default_body_model() -> BodyModel:
    """The canonical model shipped with the package (cached)."""
    global _DEFAULT
    if _DEFAULT is None:
        ref = resources.files("duetgen") / "data" / "body_model.json"
        _DEFAULT = body_model_from_dict(json.loads(ref.read_text()))
    return _DEFAULT


def normalize_rotvec(rv: np.ndarray) -> np.ndarray:
    """Wrap axis-angle magnitudes into [0, 2*pi) without changing the rotation."""
    rv = np.asarray(rv, dtype=float)
    ang = np.linalg.norm(rv, axis=-1, keepdims=True)
    wrapped = np.mod(ang, 2 * np.pi)
    scale = np.divide(wrapped, ang, out=np.ones_like(ang), where=ang > 0)
    return rv * scale


def rotvec_to_matrix(rv: np.ndarray) -> np.ndarray:
    rv = np.asarray(rv, dtype=float)
    flat = rv.reshape(-1, 3)
    return Rotation.from_rotvec(flat).as_matrix().reshape(*rv.shape[:-1], 3, 3)


def forward_kinematics(model: BodyModel, root_translation, joint_rotations):
    """Global joint transforms.

    Args:
        root_translation: (..., 3)
        joint_rotations: (..., 55, 3) axis-angle; entry 0 is the global orientation.

    Returns:
        (rotations (..., 55, 3, 3), translations (..., 55, 3))
    """
    root_translation = np.asarray(root_translation, dtype=float)
    local = rotvec_to_matrix(joint_rotations)
    R = np.empty_like(local)
    t = np.empty(local.shape[:-1])
    R[..., 0, :, :] = local[..., 0, :, :]
    t[..., 0, :] = root_translation + model.offsets[0]
    for i in range(1, N_JOINTS):
        p = model.parents[i]
        R[..., i, :, :] = R[..., p, :, :] @ local[..., i, :, :]
        t[..., i, :] = t[..., p, :] + R[..., p, :, :] @ model.offsets[i]
    return R, t


def skin_vertices(model: BodyModel, transforms) -> np.ndarray:
    """Linear blend skinning of the surface points; returns (..., 655, 3)."""
    R, t = transforms
    out = 0.0
    for k in range(2):
        j = model.skin_index[:, k]
        local = model.rest_vertices - model.rest_joints[j]
        Rj = R[..., j, :, :]
        moved = np.einsum("...vab,vb->...va", Rj, local) + t[..., j, :]
        out = out + model.skin_weight[:, k, None] * moved
    return out


def pose_points(model: BodyModel, root_translation, joint_rotations) -> np.ndarray:
    """Joints followed by surface points, (..., 710, 3)."""
    transforms = forward_kinematics(model, root_translation, joint_rotations)
    return np.concatenate([transforms[1], skin_vertices(model, transforms)], axis=-2)


def _joint_positions(transforms) -> np.ndarray:
    if isinstance(transforms, tuple):
        return np.asarray(transforms[1])
    transforms = np.asarray(transforms)
    if transforms.shape[-2:] == (4, 4):
        return transforms[..., :3, 3]
    return transforms


def capsule_sdf(model: BodyModel, transforms, query):
    """Signed distance from query points to the union of the model's capsules.

    ``transforms`` may be the (rotations, translations) pair returned by
    :func:`forward_kinematics`, homogeneous (..., 55, 4, 4) matrices or plain
    (..., 55, 3) joint positions; only joint positions matter. ``query`` is
    (3,) or (..., Q, 3) with leading dims matching the transforms.

    Returns (sdf, gradient, capsule index). The gradient is the unit vector
    from the nearest axis point of the minimizing capsule to the query, and
    zero for queries lying exactly on that axis. Ties go to the lowest
    capsule index.
    """
    joints = _joint_positions(transforms)
    q = np.asarray(query, dtype=float)
    single = q.ndim == 1
    if single:
        q = q[None]
    ia, ib, r = model.capsule_ends
    a = joints[..., ia, :]
    ab = joints[..., ib, :] - a
    denom = np.maximum(np.einsum("...kd,...kd->...k", ab, ab), 1e-18)
    rel = q[..., :, None, :] - a[..., None, :, :]
    s = np.clip(np.einsum("...qkd,...kd->...qk", rel, ab) / denom[..., None, :], 0.0, 1.0)
    diff = rel - s[..., None] * ab[..., None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    sd = dist - r
    k = np.argmin(sd, axis=-1)
    best = np.take_along_axis(sd, k[..., None], -1)[..., 0]
    vec = np.take_along_axis(diff, k[..., None, None], -2)[..., 0, :]
    nrm = np.take_along_axis(dist, k[..., None], -1)
    grad = np.divide(vec, nrm, out=np.zeros_like(vec), where=nrm > 0)
    if single:
        return best[0], grad[0], int(k[0])
    return best, grad, k
