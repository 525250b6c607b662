"""Raw motion containers and dataset splitting."""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from duetgen.body_model import N_JOINTS, BodyModel, normalize_rotvec, pose_points

if TYPE_CHECKING:
    from duetgen.music import MusicFeatures


@dataclass(frozen=True)
class PoseFrame:
    root_translation: np.ndarray  # (3,)
    joint_rotations: np.ndarray  # (55, 3) axis-angle, entry 0 = global orientation


@dataclass(eq=False)
class MotionSequence:
    """Per-frame root translation and local joint rotations at a fixed rate.

    Stored as stacked arrays; :attr:`frames` gives the per-frame view.
    """

    root_translation: np.ndarray  # (T, 3)
    joint_rotations: np.ndarray  # (T, 55, 3)
    fps: float = 30.0
    subject: str = "leader"

    def __post_init__(self):
        self.root_translation = np.asarray(self.root_translation, dtype=float)
        self.joint_rotations = normalize_rotvec(self.joint_rotations)
        T = self.root_translation.shape[0]
        if self.root_translation.shape != (T, 3):
            raise ValueError(f"root_translation must be (T, 3), got {self.root_translation.shape}")
        if self.joint_rotations.shape != (T, N_JOINTS, 3):
            raise ValueError(f"joint_rotations must be (T, {N_JOINTS}, 3), got {self.joint_rotations.shape}")
        if not (np.all(np.isfinite(self.root_translation)) and np.all(np.isfinite(self.joint_rotations))):
            raise ValueError("motion contains non-finite values")
        if self.subject not in ("leader", "follower"):
            raise ValueError(f"subject must be 'leader' or 'follower', got {self.subject!r}")

    def __len__(self) -> int:
        return self.root_translation.shape[0]

    @property
    def frames(self) -> list[PoseFrame]:
        return [PoseFrame(t, r) for t, r in zip(self.root_translation, self.joint_rotations)]

    @classmethod
    def from_frames(cls, frames: Sequence[PoseFrame], fps: float = 30.0, subject: str = "leader"):
        return cls(
            np.stack([f.root_translation for f in frames]),
            np.stack([f.joint_rotations for f in frames]),
            fps,
            subject,
        )

    def points(self, model: BodyModel) -> np.ndarray:
        """FK + skinning: (T, 710, 3), joints first."""
        return pose_points(model, self.root_translation, self.joint_rotations)

    def equals(self, other: "MotionSequence") -> bool:
        return (
            self.fps == other.fps
            and self.subject == other.subject
            and np.array_equal(self.root_translation, other.root_translation)
            and np.array_equal(self.joint_rotations, other.joint_rotations)
        )


@dataclass(eq=False)
class DuetSample:
    leader: MotionSequence
    follower: MotionSequence
    music: MusicFeatures
    scenario: str = ""

    def __post_init__(self):
        T = len(self.leader)
        if len(self.follower) != T or self.music.data.shape[0] != T:
            raise ValueError(
                f"frame counts differ: leader {T}, follower {len(self.follower)}, music {self.music.data.shape[0]}"
            )
        if not self.leader.fps == self.follower.fps == self.music.fps:
            raise ValueError("leader, follower and music must share fps")

    @property
    def T(self) -> int:
        return len(self.leader)


def split_dataset(samples, ratios=(0.1622, 0.0625), seed: int = 0, strata=None):
    """Stratified random split into (train, val, test) index lists.

    ``ratios`` is (test, val). ``strata`` gives one key per sample; by default
    the ``scenario`` attribute of each sample is used. Per-stratum counts are
    rounded and then corrected so the totals match the rounded global counts.
    """
    test_r, val_r = ratios
    if test_r < 0 or val_r < 0 or test_r + val_r > 1:
        raise ValueError(f"split ratios must be non-negative and sum to <= 1, got {ratios}")
    n = len(samples)
    if strata is None:
        strata = [getattr(s, "scenario", "") for s in samples]
    if len(strata) != n:
        raise ValueError("one stratum key per sample required")
    rng = np.random.default_rng(seed)
    groups: dict = {}
    for i, key in enumerate(strata):
        groups.setdefault(key, []).append(i)
    for key, idx in groups.items():
        if not idx:
            raise ValueError(f"empty stratum {key!r}")

    keys = sorted(groups, key=str)
    sizes = np.array([len(groups[k]) for k in keys])

    def allocate(total_ratio, caps):
        target = int(round(total_ratio * n))
        raw = sizes * total_ratio
        alloc = np.minimum(np.floor(raw).astype(int), caps)
        order = np.argsort(-(raw - np.floor(raw)), kind="stable")
        i = 0
        while alloc.sum() < target and i < 10 * len(keys):
            k = order[i % len(keys)]
            if alloc[k] < caps[k]:
                alloc[k] += 1
            i += 1
        return alloc

    n_test = allocate(test_r, sizes)
    n_val = allocate(val_r, sizes - n_test)
    train, val, test = [], [], []
    for k, key in enumerate(keys):
        idx = np.array(groups[key])
        rng.shuffle(idx)
        test += idx[: n_test[k]].tolist()
        val += idx[n_test[k]: n_test[k] + n_val[k]].tolist()
        train += idx[n_test[k] + n_val[k]:].tolist()
    return sorted(train), sorted(val), sorted(test)
