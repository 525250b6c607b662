"""Procedural duet scenes with known contact phases.

Scenarios:

orbit           follower circles the leader at ~1.6 m, both dancing in place
mirror          follower repeats the leader's motion, rigidly placed opposite
handhold        leader's right hand and follower's left hand stacked 5 mm apart
                during the scheduled contact phases, arm lifted away otherwise
approach-touch  follower walks in with both arms forward until the deepest hand
                point sits at ``touch_gap`` from the leader's capsules; the
                default gap is negative (3 cm penetration) so this scene is the
                negative control for penetration guidance
walk            side-by-side walking with a leg swing cycle

Dancers face each other with the leader at the scene origin facing +Z. The
whole couple then gets a slow common spin about the vertical axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from duetgen.body_model import BodyModel, N_JOINTS, capsule_sdf, default_body_model, pose_points
from duetgen.motion import DuetSample, MotionSequence
from duetgen.music import metronome

SCENARIOS = ("orbit", "mirror", "handhold", "approach-touch", "walk")
HAND_GAP = 0.005


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str = "handhold"
    duration: float = 4.0
    bpm: float = 120.0
    seed: int = 0
    contact_phases: tuple[tuple[int, int], ...] | None = None
    fps: float = 30.0
    touch_gap: float = -0.03
    spin: bool = True

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if not self.bpm > 0:
            raise ValueError("bpm must be > 0")

    @property
    def T(self) -> int:
        return max(2, int(round(self.duration * self.fps)))

    def phases(self) -> tuple[tuple[int, int], ...]:
        if self.contact_phases is not None:
            return tuple(tuple(p) for p in self.contact_phases)
        if self.scenario in ("handhold", "approach-touch"):
            return ((self.T // 4, (3 * self.T) // 4),)
        return ()


def _rv(*parts) -> np.ndarray:
    """Compose rotations given as (axis, radians) applied right-to-left; returns rotvecs (T, 3)."""
    out = None
    for axis, ang in parts:
        ang = np.atleast_1d(np.asarray(ang, dtype=float))
        r = Rotation.from_euler(axis, ang)
        out = r if out is None else out * r
    return out.as_rotvec()


def _in_phase_distance(T: int, phases) -> np.ndarray:
    """Frames to the nearest contact phase (0 inside)."""
    d = np.full(T, np.inf)
    t = np.arange(T)
    for a, b in phases:
        inside = (t >= a) & (t < b)
        dist = np.where(t < a, a - t, t - (b - 1))
        d = np.minimum(d, np.where(inside, 0, dist))
    return d


def _ramp(d: np.ndarray, width: float = 6.0) -> np.ndarray:
    """0 inside a phase, smoothly to 1 at ``width`` frames away."""
    x = np.clip(d / width, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * x))


class _Dancer:
    def __init__(self, model: BodyModel, T: int):
        self.model = model
        self.T = T
        self.rot = np.zeros((T, N_JOINTS, 3))
        self.trans = np.zeros((T, 3))

    def set(self, name: str, rotvec):
        self.rot[:, self.model.joint_index(name)] = rotvec

    def free_arm(self, side: str, swing):
        """Arm hanging ~70 degrees down, swinging about the lowered pose."""
        sign = 1.0 if side == "left" else -1.0
        self.set(f"{side}_shoulder", _rv(("z", sign * (-1.2 + swing))))
        self.set(f"{side}_elbow", _rv(("y", sign * -0.3 * np.ones(self.T))))

    def place(self, yaw, pelvis_xz):
        """Global heading and floor position of the pelvis (per frame)."""
        off0 = self.model.offsets[0]
        self.rot[:, 0] = _rv(("y", yaw))
        self.trans[:, 0] = pelvis_xz[:, 0] - off0[0]
        self.trans[:, 2] = pelvis_xz[:, 1] - off0[2]

    def motion(self, fps: float, subject: str) -> MotionSequence:
        return MotionSequence(self.trans.copy(), self.rot.copy(), fps, subject)


def _beat_curve(T: int, period: float, offset: float, amp: float) -> np.ndarray:
    """amp * cos: angular velocity vanishes on every beat frame."""
    t = np.arange(T)
    return amp * np.cos(np.pi * (t - offset) / period)


def _spin(motion: MotionSequence, model: BodyModel, yaw, center) -> MotionSequence:
    """Apply a per-frame planar rigid transform (rotation about +Y through ``center``)."""
    off0 = model.offsets[0]
    Ry = Rotation.from_euler("y", yaw)
    root_rot = Ry * Rotation.from_rotvec(motion.joint_rotations[:, 0])
    pelvis = motion.root_translation + off0 - center
    new_pelvis = Ry.apply(pelvis) + center
    rot = motion.joint_rotations.copy()
    rot[:, 0] = root_rot.as_rotvec()
    return MotionSequence(new_pelvis - off0, rot, motion.fps, motion.subject)


def synth_duet(spec: ScenarioSpec, model: BodyModel | None = None) -> DuetSample:
    model = model or default_body_model()
    rng = np.random.default_rng(spec.seed)
    T = spec.T
    t = np.arange(T)
    period = 60.0 * spec.fps / spec.bpm
    beat0 = int(rng.integers(0, max(1, int(period))))
    music = metronome(T, spec.bpm, spec.fps, offset=beat0, seed=spec.seed)
    amp = rng.uniform(0.25, 0.45)
    lead, foll = _Dancer(model, T), _Dancer(model, T)
    zeros = np.zeros(T)
    center = np.zeros(3)

    lead.set("neck", _rv(("x", _beat_curve(T, period, beat0, 0.08))))
    foll.set("neck", _rv(("x", _beat_curve(T, period, beat0 + period / 2, 0.08))))

    if spec.scenario == "orbit":
        radius = rng.uniform(1.4, 1.8)
        omega = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 0.4) / spec.fps
        theta = rng.uniform(0, 2 * np.pi) + omega * t
        fpos = np.stack([radius * np.sin(theta), radius * np.cos(theta)], -1)
        lead.place(theta, np.zeros((T, 2)))
        foll.place(theta + np.pi, fpos)
        lead.free_arm("left", _beat_curve(T, period, beat0, amp))
        lead.free_arm("right", _beat_curve(T, period, beat0, -amp))
        foll.free_arm("left", _beat_curve(T, period, beat0, amp * 0.8))
        foll.free_arm("right", _beat_curve(T, period, beat0, -amp * 0.8))
        lead.set("spine2", _rv(("y", _beat_curve(T, 2 * period, beat0, 0.15))))
        foll.set("spine2", _rv(("y", _beat_curve(T, 2 * period, beat0, -0.15))))
        spin = False
    elif spec.scenario == "mirror":
        lead.place(zeros, np.zeros((T, 2)))
        lead.free_arm("left", _beat_curve(T, period, beat0, amp))
        lead.free_arm("right", _beat_curve(T, period, beat0 + period, amp))
        lead.set("spine2", _rv(("y", _beat_curve(T, 2 * period, beat0, 0.2))))
        dist = rng.uniform(1.3, 1.7)
        leader = lead.motion(spec.fps, "leader")
        follower = _spin(leader, model, np.full(T, np.pi), np.array([0.0, 0.0, dist / 2]))
        follower = MotionSequence(follower.root_translation, follower.joint_rotations, spec.fps, "follower")
        center = np.array([0.0, 0.0, dist / 2])
        spin = spec.spin
        lead = foll = None
    elif spec.scenario == "handhold":
        _handhold(model, lead, foll, spec, period, beat0, amp)
        center = np.array([0.0, 0.0, 0.55])
        spin = spec.spin
    elif spec.scenario == "approach-touch":
        _approach(model, lead, foll, spec, period, beat0, amp)
        center = np.array([0.0, 0.0, 0.6])
        spin = False
    else:  # walk
        speed = rng.uniform(0.8, 1.2) / spec.fps
        step = 2 * period
        for d, x0, phase in ((lead, 0.0, 0.0), (foll, rng.uniform(0.9, 1.3), np.pi)):
            d.place(zeros, np.stack([np.full(T, x0), speed * t], -1))
            swing = 0.35 * np.sin(2 * np.pi * (t - beat0) / step + phase)
            d.set("left_hip", _rv(("x", -swing)))
            d.set("right_hip", _rv(("x", swing)))
            d.set("left_knee", _rv(("x", np.maximum(0, swing) * 0.9)))
            d.set("right_knee", _rv(("x", np.maximum(0, -swing) * 0.9)))
            d.free_arm("left", swing * 0.5)
            d.free_arm("right", -swing * 0.5)
        spin = False

    if lead is not None:
        leader = lead.motion(spec.fps, "leader")
        follower = foll.motion(spec.fps, "follower")
    if spin:
        omega = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 0.3) / spec.fps
        yaw = rng.uniform(-np.pi, np.pi) + omega * t
        leader = _spin(leader, model, yaw, center)
        follower = _spin(follower, model, yaw, center)
    return DuetSample(leader, follower, music, spec.scenario)


def handhold_geometry(model: BodyModel, gap: float = HAND_GAP):
    """Arm tilt and shoulder separation that stack the two hand capsules ``gap`` apart.

    Leader's right arm and the follower's left arm become parallel lines
    whose hand segments overlap exactly along the axis.
    """
    rs, rw = model.joint_index("right_shoulder"), model.joint_index("right_wrist")
    rm = model.joint_index("right_middle1")
    l_w = np.linalg.norm(model.rest_joints[rw] - model.rest_joints[rs])
    l_m = np.linalg.norm(model.rest_joints[rm] - model.rest_joints[rs])
    r_hand = [c.radius for c in model.capsules if c.a == rw][0]
    perp = 2 * r_hand + gap
    along = l_w + l_m
    return np.arctan2(perp, along), np.hypot(perp, along)


def _handhold(model, lead, foll, spec, period, beat0, amp):
    T = spec.T
    zeros = np.zeros(T)
    phi, d_s = handhold_geometry(model)
    lift = 0.5 * _ramp(_in_phase_distance(T, spec.phases()))
    lead.place(zeros, np.zeros((T, 2)))
    lead.set("right_shoulder", _rv(("x", np.full(T, phi)), ("y", np.full(T, np.pi / 2))))
    lead.free_arm("left", _beat_curve(T, period, beat0, amp))
    foll.set("left_shoulder", _rv(("x", -phi - lift), ("y", np.full(T, -np.pi / 2))))
    foll.free_arm("right", _beat_curve(T, period, beat0, -amp))
    # follower pelvis so its left shoulder sits d_s in front of the leader's right shoulder
    sh_l = model.rest_joints[model.joint_index("right_shoulder")]
    sh_f = model.rest_joints[model.joint_index("left_shoulder")] - model.rest_joints[0]
    sh_f_world = np.array([-sh_f[0], sh_f[1], -sh_f[2]])  # yaw pi
    target = sh_l + np.array([0.0, 0.0, d_s])
    pelvis = target - sh_f_world
    foll.place(np.full(T, np.pi), np.tile([pelvis[0], pelvis[2]], (T, 1)))
    foll.trans[:, 1] = pelvis[1] - model.offsets[0][1]


def _approach(model, lead, foll, spec, period, beat0, amp):
    T = spec.T
    zeros = np.zeros(T)
    lead.place(zeros, np.zeros((T, 2)))
    lead.free_arm("left", _beat_curve(T, period, beat0, amp * 0.3))
    lead.free_arm("right", _beat_curve(T, period, beat0, -amp * 0.3))
    foll.set("left_shoulder", _rv(("y", np.full(T, -np.pi / 2))))
    foll.set("right_shoulder", _rv(("y", np.full(T, np.pi / 2))))
    far = 1.6
    foll.place(np.full(T, np.pi), np.tile([0.0, far], (T, 1)))
    lpts = pose_points(model, lead.trans, lead.rot)
    fpts = pose_points(model, foll.trans, foll.rot)
    d_in = _in_phase_distance(T, spec.phases())
    active = np.flatnonzero(d_in == 0)
    dist = np.full(T, far)
    if active.size:
        dist[active] = _solve_distance(model, lpts[active, :N_JOINTS], fpts[active], far, spec.touch_gap)
        ref = np.interp(np.arange(T), active, dist[active])
        w = _ramp(d_in, width=15.0)
        dist = ref + w * (far - ref)
    foll.trans[:, 2] += dist - far


def _solve_distance(model, leader_joints, follower_pts, far, gap):
    """Per-frame bisection on the follower's z placement so that min sdf == gap."""
    n = leader_joints.shape[0]
    # only the follower's front-most points can reach the leader first
    front = follower_pts[0, :, 2] < follower_pts[0, :, 2].min() + 0.5
    follower_pts = follower_pts[:, front]
    lo, hi = np.zeros(n), np.full(n, far)  # lo: deep inside, hi: clear
    for _ in range(32):
        mid = 0.5 * (lo + hi)
        q = follower_pts.copy()
        q[..., 2] += (mid - far)[:, None]
        clear = capsule_sdf(model, leader_joints, q)[0].min(axis=-1) > gap
        hi = np.where(clear, mid, hi)
        lo = np.where(clear, lo, mid)
    return hi
