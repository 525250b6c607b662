"""Motion features and interaction-quality metrics.

Point inputs are (T, 710, 3) decoded clouds (joints first) or (T, 55, 3)
joint tracks; only the first 55 rows are used by the feature extractors.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from duetgen.body_model import N_JOINTS, BodyModel, capsule_sdf, default_body_model
from duetgen.music import MusicFeatures
from duetgen.representation import CONTACT_DIST

log = logging.getLogger(__name__)

# pelvis, knees, feet, shoulders, head, wrists
CROSS_JOINTS = (0, 4, 5, 10, 11, 16, 17, 15, 20, 21)
KINDS = ("kinetic", "geometric", "cross-distance")
BEAT_SIGMA = 0.1  # s
SMOOTH_WINDOW = 5  # frames

PELVIS, L_HIP, R_HIP, L_KNEE, R_KNEE, L_ANKLE, R_ANKLE = 0, 1, 2, 4, 5, 7, 8
L_FOOT, R_FOOT, NECK, HEAD = 10, 11, 12, 15
L_SHOULDER, R_SHOULDER, L_ELBOW, R_ELBOW, L_WRIST, R_WRIST = 16, 17, 18, 19, 20, 21

GEOMETRIC_RELATIONS = (
    "left hand above head",
    "right hand above head",
    "left hand above shoulder",
    "right hand above shoulder",
    "hands within 0.3 m",
    "left hand 0.2 m in front of pelvis",
    "right hand 0.2 m in front of pelvis",
    "left foot raised 0.1 m",
    "right foot raised 0.1 m",
    "feet crossed",
    "ankles more than 0.5 m apart",
    "left knee bent below 150 deg",
    "right knee bent below 150 deg",
    "left elbow bent below 120 deg",
    "right elbow bent below 120 deg",
    "torso tilted over 20 deg",
)


@dataclass(frozen=True)
class FeatureVector:
    kind: str
    values: np.ndarray


def _joints(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.ndim != 3 or p.shape[1] < N_JOINTS:
        raise ValueError(f"expected (T, >=55, 3) points, got {p.shape}")
    if p.shape[0] < 2:
        raise ValueError("feature extraction needs at least 2 frames")
    return p[:, :N_JOINTS]


def kinetic_features(points, fps: float = 30.0) -> np.ndarray:
    """Per-joint mean squared speed (m^2/s^2) followed by their sum."""
    j = _joints(points)
    v = np.diff(j, axis=0) * fps
    per_joint = (v ** 2).sum(-1).mean(0)
    return np.concatenate([per_joint, [per_joint.sum()]])


def _angle(a, b, c):
    u, w = a - b, c - b
    cos = (u * w).sum(-1) / np.maximum(np.linalg.norm(u, axis=-1) * np.linalg.norm(w, axis=-1), 1e-12)
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def geometric_relations(points) -> np.ndarray:
    """(T, 16) boolean matrix of pose relations, heading taken from the hips."""
    j = _joints(points)
    up = np.array([0.0, 1.0, 0.0])
    across = j[:, L_HIP] - j[:, R_HIP]
    across[:, 1] = 0.0
    across /= np.maximum(np.linalg.norm(across, axis=-1, keepdims=True), 1e-12)
    fwd = np.cross(across, up)
    rel = j - j[:, PELVIS:PELVIS + 1]
    x = (rel * across[:, None]).sum(-1)
    z = (rel * fwd[:, None]).sum(-1)
    y = j[..., 1]
    spine = j[:, NECK] - j[:, PELVIS]
    tilt = np.degrees(np.arccos(np.clip(spine[:, 1] / np.maximum(np.linalg.norm(spine, axis=-1), 1e-12), -1, 1)))
    rel_list = [
        y[:, L_WRIST] > y[:, HEAD],
        y[:, R_WRIST] > y[:, HEAD],
        y[:, L_WRIST] > y[:, L_SHOULDER],
        y[:, R_WRIST] > y[:, R_SHOULDER],
        np.linalg.norm(j[:, L_WRIST] - j[:, R_WRIST], axis=-1) < 0.3,
        z[:, L_WRIST] > 0.2,
        z[:, R_WRIST] > 0.2,
        y[:, L_FOOT] > 0.1,
        y[:, R_FOOT] > 0.1,
        x[:, L_ANKLE] < x[:, R_ANKLE],
        np.linalg.norm(j[:, L_ANKLE] - j[:, R_ANKLE], axis=-1) > 0.5,
        _angle(j[:, L_HIP], j[:, L_KNEE], j[:, L_ANKLE]) < 150,
        _angle(j[:, R_HIP], j[:, R_KNEE], j[:, R_ANKLE]) < 150,
        _angle(j[:, L_SHOULDER], j[:, L_ELBOW], j[:, L_WRIST]) < 120,
        _angle(j[:, R_SHOULDER], j[:, R_ELBOW], j[:, R_WRIST]) < 120,
        tilt > 20,
    ]
    return np.stack(rel_list, axis=1)


def geometric_features(points) -> np.ndarray:
    return geometric_relations(points).mean(0)


def cross_distance_features(leader_points, follower_points) -> np.ndarray:
    """Mean then std over frames of the 10 x 10 leader-follower joint distances."""
    a = _joints(leader_points)[:, CROSS_JOINTS]
    b = _joints(follower_points)[:, CROSS_JOINTS]
    d = np.linalg.norm(a[:, :, None] - b[:, None, :], axis=-1)
    # spread about the first frame so frozen pairs give exactly zero
    return np.concatenate([d.mean(0).ravel(), (d - d[:1]).std(0).ravel()])


def extract_features(points, kind: str, other=None, fps: float = 30.0) -> FeatureVector:
    """``other`` is the follower track for the cross-distance kind."""
    if kind == "kinetic":
        return FeatureVector(kind, kinetic_features(points, fps))
    if kind == "geometric":
        return FeatureVector(kind, geometric_features(points))
    if kind == "cross-distance":
        if other is None:
            raise ValueError("cross-distance features need both dancers")
        return FeatureVector(kind, cross_distance_features(points, other))
    raise ValueError(f"unknown feature kind {kind!r}; expected one of {KINDS}")


def _matrix(vecs) -> np.ndarray:
    kinds = {v.kind for v in vecs if isinstance(v, FeatureVector)}
    if len(kinds) > 1:
        raise ValueError(f"mixed feature kinds {sorted(kinds)}")
    m = np.array([v.values if isinstance(v, FeatureVector) else v for v in vecs], dtype=float)
    return m[:, None] if m.ndim == 1 else m


def fid(set_a, set_b, eps: float = 1e-6) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    a, b = _matrix(set_a), _matrix(set_b)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("fid needs at least 2 vectors per set")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    I = np.eye(a.shape[1])
    sa = np.atleast_2d(np.cov(a, rowvar=False)) + eps * I
    sb = np.atleast_2d(np.cov(b, rowvar=False)) + eps * I
    w, V = np.linalg.eigh(sa)
    ra = (V * np.sqrt(np.clip(w, 0, None))) @ V.T
    m = ra @ sb @ ra
    tr_sqrt = np.sqrt(np.clip(np.linalg.eigvalsh((m + m.T) / 2), 0, None)).sum()
    d = a.mean(0) - b.mean(0)
    val = float(d @ d + np.trace(sa) + np.trace(sb) - 2 * tr_sqrt)
    return max(val, 0.0)


def diversity(vecs) -> float:
    m = _matrix(vecs)
    if len(m) < 2:
        raise ValueError("diversity needs at least 2 vectors")
    return float(pdist(m).mean())


@dataclass(frozen=True)
class ContactMetrics:
    CF: float
    PR: float
    CLR: float
    CFR: float
    CVR: float


def contact_metrics(leader_points, follower_points, model: BodyModel | None = None,
                    threshold: float = CONTACT_DIST) -> ContactMetrics:
    """Frame and vertex contact rates plus follower penetration rate."""
    model = model or default_body_model()
    lp = np.asarray(leader_points)
    fp = np.asarray(follower_points)
    T = lp.shape[0]
    contact_frames = 0
    clr = cfr = 0.0
    for t in range(T):
        lv, fv = lp[t, N_JOINTS:], fp[t, N_JOINTS:]
        dl, _ = cKDTree(fv).query(lv, k=1, distance_upper_bound=threshold)
        df, _ = cKDTree(lv).query(fv, k=1, distance_upper_bound=threshold)
        hit_l, hit_f = dl < threshold, df < threshold
        contact_frames += bool(hit_l.any())
        clr += hit_l.mean()
        cfr += hit_f.mean()
    sdf, _, _ = capsule_sdf(model, lp[:, :N_JOINTS], fp)
    pr = int((sdf < 0).sum()) / sdf.size
    clr, cfr = clr / T, cfr / T
    return ContactMetrics(contact_frames / T, pr, clr, cfr, (clr + cfr) / 2)


def motion_beats(points, fps: float = 30.0, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Beat times (s): local minima of the smoothed mean joint speed.

    A minimum must be strictly below its left neighbour and not above its
    right one, so a two-frame plateau counts once (at its first frame).
    """
    j = np.asarray(points, dtype=float)[:, :N_JOINTS]
    if j.shape[0] < 3:
        return np.zeros(0)
    speed = np.linalg.norm(np.gradient(j, axis=0), axis=-1).mean(-1) * fps
    s = uniform_filter1d(speed, size=window, mode="nearest") if window > 1 else speed
    idx = np.flatnonzero((s[1:-1] < s[:-2]) & (s[1:-1] <= s[2:])) + 1
    return idx / fps


def beat_alignment(reference: np.ndarray, query: np.ndarray, sigma: float = BEAT_SIGMA) -> float:
    """Mean over reference beats of exp(-d^2 / 2 sigma^2), d = gap to the nearest query beat."""
    reference, query = np.asarray(reference, float), np.asarray(query, float)
    if reference.size == 0 or query.size == 0:
        log.warning("no detectable beats (reference %d, query %d); score reported as 0", reference.size, query.size)
        return 0.0
    d = np.abs(reference[:, None] - query[None, :]).min(1)
    return float(np.exp(-d ** 2 / (2 * sigma ** 2)).mean())


def rhythm_metrics(music: MusicFeatures, leader_points, follower_points,
                   sigma: float = BEAT_SIGMA, window: int = SMOOTH_WINDOW) -> tuple[float, float]:
    """Returns (BED, BAS)."""
    fb = motion_beats(follower_points, music.fps, window)
    lb = motion_beats(leader_points, music.fps, window)
    bas = beat_alignment(music.beat_times, fb, sigma)
    bed = beat_alignment(lb, fb, sigma)
    return bed, bas


@dataclass(frozen=True)
class MetricsReport:
    FID_k: float
    FID_g: float
    Div_k: float
    Div_g: float
    FID_cd: float
    Div_cd: float
    CF: float
    PR: float
    CLR: float
    CFR: float
    CVR: float
    BED: float
    BAS: float

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "\n".join(f"{k:<7} {v:.6f}" for k, v in self.as_dict().items())

    def to_kv(self) -> str:
        return " ".join(f"{k}={v!r}" for k, v in self.as_dict().items())


def evaluate(generated, reference, music, model: BodyModel | None = None, fps: float = 30.0) -> MetricsReport:
    """Score generated duets against reference duets.

    ``generated`` and ``reference`` are lists of (leader_points,
    follower_points); ``music`` is a list aligned with ``generated``.
    Distribution metrics are computed on follower motion (kinetic,
    geometric) and on the pair (cross-distance).
    """
    model = model or default_body_model()
    if len(generated) != len(music):
        raise ValueError("need one music track per generated duet")
    feats = {}
    for name, pairs in (("gen", generated), ("ref", reference)):
        feats[name] = {
            "k": [extract_features(f, "kinetic", fps=fps) for _, f in pairs],
            "g": [extract_features(f, "geometric") for _, f in pairs],
            "cd": [extract_features(l, "cross-distance", other=f) for l, f in pairs],
        }
    cm = [contact_metrics(l, f, model) for l, f in generated]
    rm = [rhythm_metrics(mu, l, f) for (l, f), mu in zip(generated, music)]
    avg = lambda xs: float(np.mean(xs))  # noqa: E731
    return MetricsReport(
        FID_k=fid(feats["gen"]["k"], feats["ref"]["k"]),
        FID_g=fid(feats["gen"]["g"], feats["ref"]["g"]),
        Div_k=diversity(feats["gen"]["k"]),
        Div_g=diversity(feats["gen"]["g"]),
        FID_cd=fid(feats["gen"]["cd"], feats["ref"]["cd"]),
        Div_cd=diversity(feats["gen"]["cd"]),
        CF=avg([c.CF for c in cm]),
        PR=avg([c.PR for c in cm]),
        CLR=avg([c.CLR for c in cm]),
        CFR=avg([c.CFR for c in cm]),
        CVR=avg([c.CVR for c in cm]),
        BED=avg([r[0] for r in rm]),
        BAS=avg([r[1] for r in rm]),
    )
