"""Generate the shipped default body model (src/duetgen/data/body_model.json).

The skeleton follows the SMPL-X 55-joint ordering with hand-authored rest
offsets (Y up, facing +Z, left = +X). Surface points are placed on capsule
surfaces: 20 points on a symmetric ring lattice per hand, the remaining 615
distributed over the 21 body capsules proportionally to lateral area with
a Fibonacci spiral. Nothing here is random, so rerunning reproduces the file
byte for byte.

    python scripts/build_body_model.py
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "duetgen" / "data" / "body_model.json"

BODY = [
    ("pelvis", None, (0.0, 0.93, 0.0)),
    ("left_hip", 0, (0.09, -0.08, 0.0)),
    ("right_hip", 0, (-0.09, -0.08, 0.0)),
    ("spine1", 0, (0.0, 0.11, -0.01)),
    ("left_knee", 1, (0.01, -0.39, 0.0)),
    ("right_knee", 2, (-0.01, -0.39, 0.0)),
    ("spine2", 3, (0.0, 0.13, 0.0)),
    ("left_ankle", 4, (0.0, -0.395, -0.03)),
    ("right_ankle", 5, (0.0, -0.395, -0.03)),
    ("spine3", 6, (0.0, 0.06, 0.02)),
    ("left_foot", 7, (0.02, -0.045, 0.12)),
    ("right_foot", 8, (-0.02, -0.045, 0.12)),
    ("neck", 9, (0.0, 0.21, -0.01)),
    ("left_collar", 9, (0.07, 0.12, -0.01)),
    ("right_collar", 9, (-0.07, 0.12, -0.01)),
    ("head", 12, (0.0, 0.09, 0.04)),
    ("left_shoulder", 13, (0.11, 0.03, 0.0)),
    ("right_shoulder", 14, (-0.11, 0.03, 0.0)),
    ("left_elbow", 16, (0.26, 0.0, 0.0)),
    ("right_elbow", 17, (-0.26, 0.0, 0.0)),
    ("left_wrist", 18, (0.25, 0.0, 0.0)),
    ("right_wrist", 19, (-0.25, 0.0, 0.0)),
    ("jaw", 15, (0.0, -0.01, 0.05)),
    ("left_eye", 15, (0.03, 0.06, 0.08)),
    ("right_eye", 15, (-0.03, 0.06, 0.08)),
]

# (name, first-segment offset from wrist, per-segment offset) in left-hand coordinates
FINGERS = [
    ("index", (0.09, 0.0, 0.025), (0.035, 0.0, 0.0)),
    ("middle", (0.095, 0.0, 0.0), (0.038, 0.0, 0.0)),
    ("pinky", (0.08, 0.0, -0.04), (0.025, 0.0, 0.0)),
    ("ring", (0.088, 0.0, -0.02), (0.032, 0.0, 0.0)),
    ("thumb", (0.03, -0.01, 0.03), (0.03, 0.0, 0.02)),
]

BODY_CAPSULES = [
    (0, 1, 0.07), (0, 2, 0.07), (0, 3, 0.09), (1, 4, 0.065), (2, 5, 0.065),
    (3, 6, 0.09), (4, 7, 0.05), (5, 8, 0.05), (6, 9, 0.1), (7, 10, 0.035),
    (8, 11, 0.035), (9, 12, 0.08), (9, 13, 0.06), (9, 14, 0.06), (12, 15, 0.09),
    (13, 16, 0.05), (14, 17, 0.05), (16, 18, 0.045), (17, 19, 0.045),
    (18, 20, 0.03), (19, 21, 0.03),
]
HAND_RADIUS = 0.03
HAND_RINGS = 5
HAND_ANGLES = 4
N_POINTS = 655


def build_joints():
    joints = [dict(name=n, parent=p, offset=list(o)) for n, p, o in BODY]
    for side, wrist, sign in (("left", 20, 1.0), ("right", 21, -1.0)):
        for finger, first, seg in FINGERS:
            for k in range(3):
                off = first if k == 0 else seg
                parent = wrist if k == 0 else len(joints) - 1
                joints.append(dict(
                    name=f"{side}_{finger}{k + 1}",
                    parent=parent,
                    offset=[sign * off[0], off[1], off[2]],
                ))
    return joints


def rest_positions(joints):
    pos = np.zeros((len(joints), 3))
    for i, j in enumerate(joints):
        pos[i] = np.asarray(j["offset"]) + (pos[j["parent"]] if j["parent"] is not None else 0.0)
    return pos


def ring_basis(d):
    """Orthonormal (e1, e2) perpendicular to d; e1 leans toward +Y (or +Z for vertical bones)."""
    ref = np.array([0.0, 1.0, 0.0]) if abs(d[1]) < 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = ref - ref.dot(d) * d
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(d, e1)


def skin_for(a, b, t, rigid):
    if rigid or t <= 0.75:
        return [[a, 1.0]]
    wb = round(min(0.5, 2.0 * (t - 0.75)), 6)
    return [[a, round(1.0 - wb, 6)], [b, wb]]


def main():
    joints = build_joints()
    names = [j["name"] for j in joints]
    rest = rest_positions(joints)
    capsules = [dict(a=a, b=b, radius=r) for a, b, r in BODY_CAPSULES]
    for wrist in (20, 21):
        side = names[wrist].split("_")[0]
        capsules.append(dict(a=wrist, b=names.index(f"{side}_middle1"), radius=HAND_RADIUS))

    n_hand = HAND_RINGS * HAND_ANGLES
    n_body = N_POINTS - 2 * n_hand
    areas = np.array([
        2 * math.pi * c["radius"] * np.linalg.norm(rest[c["b"]] - rest[c["a"]])
        for c in capsules[:-2]
    ])
    raw = n_body * areas / areas.sum()
    quota = np.floor(raw).astype(int)
    for k in np.argsort(-(raw - quota))[: n_body - quota.sum()]:
        quota[k] += 1

    golden = math.pi * (3.0 - math.sqrt(5.0))
    points = []
    for k, c in enumerate(capsules):
        a, b, r = c["a"], c["b"], c["radius"]
        axis = rest[b] - rest[a]
        d = axis / np.linalg.norm(axis)
        e1, e2 = ring_basis(d)
        if k < len(BODY_CAPSULES):
            samples = [((i + 0.5) / quota[k], i * golden) for i in range(quota[k])]
            rigid = False
        else:
            samples = [
                ((i + 0.5) / HAND_RINGS, 2 * math.pi * m / HAND_ANGLES)
                for i in range(HAND_RINGS) for m in range(HAND_ANGLES)
            ]
            rigid = True
        for t, ang in samples:
            p = rest[a] + t * axis + r * (math.cos(ang) * e1 + math.sin(ang) * e2)
            points.append(dict(
                position=[round(float(x), 9) for x in p],
                skin=skin_for(a, b, t, rigid),
                capsule=k,
            ))
    assert len(points) == N_POINTS

    model = dict(
        format="duetgen-body/1",
        fps=30.0,
        joints=joints,
        capsules=capsules,
        surface_points=points,
        foot_joint_indices=[names.index(n) for n in ("left_ankle", "right_ankle", "left_foot", "right_foot")],
        wrist_indices=[20, 21],
        finger_joint_indices=list(range(25, 55)),
        sampling=dict(
            method="capsule-surface lattice",
            hand_points_per_side=n_hand,
            body_quota_by_capsule=[int(q) for q in quota],
            note="fixed 655-point stand-in; body quotas proportional to capsule lateral area",
        ),
    )
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(model, indent=1) + "\n")
    print(f"wrote {OUT} ({len(joints)} joints, {len(points)} points, {len(capsules)} capsules)")


if __name__ == "__main__":
    main()
