import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from duetgen.body_model import N_JOINTS, capsule_sdf
from duetgen.evaluation import (
    CROSS_JOINTS, GEOMETRIC_RELATIONS, MetricsReport, beat_alignment, contact_metrics, diversity,
    evaluate, extract_features, fid, geometric_relations, kinetic_features, motion_beats, rhythm_metrics,
)
from duetgen.music import BEATS, MusicFeatures, metronome
from duetgen.synth import ScenarioSpec, synth_duet


def brute_contact(lp, fp, model, thr=0.01):
    T = lp.shape[0]
    frames, clr, cfr = 0, 0.0, 0.0
    for t in range(T):
        d = np.linalg.norm(lp[t, N_JOINTS:, None] - fp[t, None, N_JOINTS:], axis=-1)
        frames += (d < thr).any()
        clr += (d.min(1) < thr).mean()
        cfr += (d.min(0) < thr).mean()
    inside = sum(int((capsule_sdf(model, lp[t, :N_JOINTS], fp[t])[0] < 0).sum()) for t in range(T))
    pr = inside / (T * fp.shape[1])
    return frames / T, pr, clr / T, cfr / T


def beat_motion(T, fps, period, offset):
    """Mean joint speed 1 - cos(2 pi (t - offset) / period): exact minima on shifted beats."""
    t = np.arange(T) / fps
    x = t - period / (2 * np.pi) * np.sin(2 * np.pi * (t - offset) / period)
    pts = np.zeros((T, N_JOINTS, 3))
    pts[..., 0] = x[:, None]
    return pts


def test_static_kinetic_zero():
    assert np.all(kinetic_features(np.ones((5, 710, 3))) == 0)


def test_kinetic_matches_loop(rng):
    p = rng.normal(size=(7, 710, 3))
    got = kinetic_features(p, fps=30.0)
    want = np.zeros(N_JOINTS)
    for j in range(N_JOINTS):
        s = 0.0
        for t in range(6):
            v = (p[t + 1, j] - p[t, j]) * 30.0
            s += v[0] ** 2 + v[1] ** 2 + v[2] ** 2
        want[j] = s / 6
    assert np.allclose(got[:-1], want, atol=1e-9, rtol=0)
    assert got[-1] == pytest.approx(want.sum())


def test_kinetic_rigid_invariance(rng):
    p = rng.normal(size=(6, 55, 3))
    R = Rotation.from_rotvec(rng.normal(size=3)).as_matrix()
    q = p @ R.T + [3.0, -1.0, 2.0]
    assert np.allclose(kinetic_features(p), kinetic_features(q))


def test_frozen_offset_cross_std_zero(model):
    pts = np.tile(model.rest_joints, (5, 1, 1))
    f = extract_features(pts, "cross-distance", other=pts + [1.0, 0, 0]).values
    assert f.shape == (200,)
    assert np.all(f[100:] == 0)
    assert f[0] == pytest.approx(1.0)  # pelvis to pelvis
    assert len(CROSS_JOINTS) == 10


def test_geometric_shape_and_range(handhold):
    rel = geometric_relations(handhold.leader_points)
    assert rel.shape == (120, 16) and len(GEOMETRIC_RELATIONS) == 16
    g = extract_features(handhold.leader_points, "geometric").values
    assert np.all((g >= 0) & (g <= 1))


def test_geometric_tpose_flags(model):
    pts = np.tile(model.rest_joints, (3, 1, 1))
    rel = geometric_relations(pts)[0]
    assert not rel[0] and not rel[9] and not rel[15]


def test_features_need_two_frames():
    with pytest.raises(ValueError, match="2 frames"):
        kinetic_features(np.zeros((1, 55, 3)))
    with pytest.raises(ValueError, match="unknown"):
        extract_features(np.zeros((3, 55, 3)), "nope")


def test_fid_self_zero(rng):
    a = rng.normal(size=(50, 6))
    assert fid(a, a) == pytest.approx(0, abs=1e-6)


def test_fid_gaussians_1d():
    rng = np.random.default_rng(0)
    a = rng.normal(0, 1, size=100_000)
    b = rng.normal(1, 1, size=100_000)
    assert fid(a, b) == pytest.approx(1.0, abs=0.05)


def test_fid_diagonal_closed_form(rng):
    va, vb = np.array([1.0, 4.0, 0.25]), np.array([2.0, 1.0, 0.5])
    ma, mb = np.array([0.0, 1.0, -1.0]), np.array([0.5, 0.0, 0.0])
    a = rng.normal(size=(200_000, 3)) * np.sqrt(va) + ma
    b = rng.normal(size=(200_000, 3)) * np.sqrt(vb) + mb
    sa, sb = a.var(0, ddof=1), b.var(0, ddof=1)
    want = (((a.mean(0) - b.mean(0)) ** 2) + (np.sqrt(sa + 1e-6) - np.sqrt(sb + 1e-6)) ** 2).sum()
    assert fid(a, b) == pytest.approx(want, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 30), d=st.integers(1, 6))
def test_fid_symmetric_non_negative(seed, n, d):
    g = np.random.default_rng(seed)
    a, b = g.normal(size=(n, d)), g.normal(1, 2, size=(n + 2, d))
    assert fid(a, b) >= 0
    assert fid(a, b) == pytest.approx(fid(b, a), abs=1e-6)


def test_fid_errors(rng):
    with pytest.raises(ValueError, match="dimension"):
        fid(rng.normal(size=(4, 2)), rng.normal(size=(4, 3)))
    with pytest.raises(ValueError, match="at least 2"):
        fid(rng.normal(size=(1, 2)), rng.normal(size=(4, 2)))


def test_diversity_basic(rng):
    assert diversity(np.ones((4, 3))) == 0
    assert diversity([np.zeros(3), np.array([3.0, 4.0, 0])]) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        diversity([np.zeros(3)])


def test_diversity_oracle(rng):
    x = rng.normal(size=(100, 8))
    total, count = 0.0, 0
    for i in range(100):
        for j in range(i + 1, 100):
            total += np.linalg.norm(x[i] - x[j])
            count += 1
    assert diversity(x) == pytest.approx(total / count, abs=1e-9)


def test_contacts_far_apart(model):
    pts = np.tile(np.concatenate([model.rest_joints, model.rest_vertices]), (4, 1, 1))
    c = contact_metrics(pts, pts + [2.0, 0, 0], model)
    assert (c.CF, c.PR, c.CLR, c.CFR, c.CVR) == (0, 0, 0, 0, 0)


def test_handhold_half_frames(handhold, model):
    c = contact_metrics(handhold.leader_points, handhold.follower_points, model)
    assert c.CF == 0.5


@pytest.mark.parametrize("name", ["orbit", "mirror", "handhold", "approach-touch", "walk"])
def test_contact_metrics_match_oracle(name, model):
    s = synth_duet(ScenarioSpec(name, seed=2, duration=1.0), model)
    lp, fp = s.leader.points(model), s.follower.points(model)
    c = contact_metrics(lp, fp, model)
    cf, pr, clr, cfr = brute_contact(lp, fp, model)
    assert (c.CF, c.PR, c.CLR, c.CFR) == (cf, pr, clr, cfr)
    assert c.CVR == (clr + cfr) / 2


def test_bas_perfect_alignment():
    fps, T = 30.0, 240
    music = metronome(T, 120, fps, offset=15)
    pts = beat_motion(T, fps, 0.5, 0.5)
    assert motion_beats(pts, fps).size > 0
    bed, bas = rhythm_metrics(music, pts, pts)
    assert bas == pytest.approx(1.0)
    assert bed == 1.0


def test_kernel_offset_sigma():
    assert beat_alignment(np.array([1.0, 2.0]), np.array([1.1, 2.1])) == pytest.approx(np.exp(-0.5))


def test_bas_decreases_with_offset():
    fps, T = 30.0, 300
    music = metronome(T, 60, fps, offset=30)
    scores = []
    for k in range(10):  # 0 .. 3 sigma in frame steps
        pts = beat_motion(T, fps, 1.0, 1.0 + k / fps)
        scores.append(rhythm_metrics(music, pts, pts)[1])
    assert scores[0] == pytest.approx(1.0)
    assert np.all(np.diff(scores) < 0)


def test_rhythm_time_shift_invariance():
    fps, T = 30.0, 300
    music = metronome(T, 120, fps, offset=15)
    pts = beat_motion(T, fps, 0.5, 0.5 + 2 / fps)
    a = rhythm_metrics(music, pts, pts)
    shift = 6
    data = np.zeros_like(music.data)
    data[shift:] = music.data[:-shift]
    shifted_music = MusicFeatures(data, fps)
    pts2 = beat_motion(T, fps, 0.5, 0.5 + (2 + shift) / fps)
    b = rhythm_metrics(shifted_music, pts2, pts2)
    assert b == pytest.approx(a)


def test_no_beats_reports_zero(caplog):
    music = metronome(60, 120)
    flat = np.zeros((60, N_JOINTS, 3))
    assert rhythm_metrics(music, flat, flat) == (0.0, 0.0)
    assert "no detectable beats" in caplog.text


def test_evaluate_gt_vs_itself(model):
    duets = [synth_duet(ScenarioSpec(n, seed=1, duration=1.0), model) for n in ("orbit", "handhold", "walk")]
    pairs = [(d.leader.points(model), d.follower.points(model)) for d in duets]
    rep = evaluate(pairs, pairs, [d.music for d in duets], model)
    assert isinstance(rep, MetricsReport)
    assert rep.FID_k == pytest.approx(0, abs=1e-6) and rep.FID_g == pytest.approx(0, abs=1e-6)
    assert rep.FID_cd == pytest.approx(0, abs=1e-6)
    for k in ("CF", "PR", "CLR", "CFR", "CVR", "BED", "BAS"):
        assert 0 <= getattr(rep, k) <= 1
    assert "FID_k=" in rep.to_kv() and rep.to_text().startswith("FID_k")


def test_mirror_kinetic_equal(model):
    s = synth_duet(ScenarioSpec("mirror", seed=3, duration=1.0), model)
    a = kinetic_features(s.leader.points(model))
    b = kinetic_features(s.follower.points(model))
    assert np.abs(a - b).max() < 1e-6


def test_metronome_beats():
    m = metronome(90, 120, 30.0)
    assert np.array_equal(m.beat_frames, np.arange(0, 90, 15))
    assert set(np.unique(m.data[:, BEATS])) == {0.0, 1.0}
