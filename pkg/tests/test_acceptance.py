"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) before
asserting. Criteria 7 and 8 train small models and take a few minutes.
"""
import time

import numpy as np
import pytest

from duetgen.body_model import N_JOINTS, capsule_sdf
from duetgen.denoiser import DenoiserConfig, Predictor, init
from duetgen.diffusion import make_schedule, q_sample, sample
from duetgen.evaluation import contact_metrics, fid, rhythm_metrics
from duetgen.experiments import held_out_losses
from duetgen.formats import (
    FormatError, read_checkpoint, read_motion, read_music, read_rep, write_checkpoint, write_motion,
    write_music, write_rep,
)
from duetgen.gradcheck import check_contact, check_denoiser, check_penetration
from duetgen.guidance import GuidanceConfig, LeaderState, masked_min_distances, refine
from duetgen.losses import LossWeights
from duetgen.motion import MotionSequence
from duetgen.music import metronome
from duetgen.representation import N_CHANNELS, OFFSETS, PERSON_CONTACT, RepSequence, decode, encode
from duetgen.synth import SCENARIOS, ScenarioSpec, _spin, synth_duet
from duetgen.training import OptimizerConfig, encode_dataset, train

from conftest import scene

LR = 2e-3  # desk-scale learning rate, see README


def random_motion(rng, T, subject):
    root = np.cumsum(rng.normal(0, 0.01, size=(T, 3)), 0) + [rng.uniform(-1, 1), 0, rng.uniform(-1, 1)]
    rots = rng.normal(0, 0.4, size=(T, N_JOINTS, 3))
    rots[:, 0] = rng.normal(0, 0.3, size=(T, 3)) + [0, rng.uniform(-3, 3), 0]
    return MotionSequence(root, rots, 30.0, subject)


def test_criterion_1_representation(model, report):
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    a, b = random_motion(rng, 200, "leader"), random_motion(rng, 200, "follower")
    base = encode(a, b, model).data
    rt = float(np.abs(decode(base, model) - a.points(model)).max())
    inv = 0.0
    for _ in range(20):
        yaw, center = rng.uniform(-np.pi, np.pi), np.array([rng.uniform(-3, 3), 0.0, rng.uniform(-3, 3)])
        rep = encode(_spin(a, model, yaw, center), _spin(b, model, yaw, center), model).data
        inv = max(inv, float(np.abs(rep[:, OFFSETS] - base[:, OFFSETS]).max()))
    dt = time.perf_counter() - t0
    ok = report(1, rt < 1e-5 and inv < 1e-6 and dt < 10,
                f"round-trip {rt:.2e} m, invariance {inv:.2e}, {dt:.1f} s")
    assert ok


def test_criterion_2_gradients(model, report):
    t0 = time.perf_counter()
    res = [check_contact(50, model=model), check_penetration(50, model=model), check_denoiser(50)]
    dt = time.perf_counter() - t0
    ok = all(r.passed and len(r.errors) >= 50 and r.tol <= 1e-3 for r in res) and dt < 120
    report(2, ok, "; ".join(f"{r.name} {r.max_error:.1e}" for r in res) + f", {dt:.0f} s")
    assert ok


def pr(x, L, model):
    sdf, _, _ = capsule_sdf(model, L.joints, decode(x, model))
    return float((sdf < 0).mean())


def test_criterion_3_guidance(model, report, approach, handhold):
    L = LeaderState.from_rep(approach.leader, model)
    x = approach.follower.data.copy()
    cfg = GuidanceConfig(a_pene=len(x) * 710 * 0.002)
    p0, vals = pr(x, L, model), []
    for _ in range(10):
        x, v = refine(x, L, cfg, model, return_values=True)
        vals.append(v["G_pene"])
    _, v = refine(x, L, GuidanceConfig(a_pene=1e-300), model, return_values=True)
    vals.append(v["G_pene"])
    p1 = pr(x, L, model)
    pene_ok = bool(np.all(np.diff(vals) <= 0)) and p1 < 0.5 * p0

    Lh = LeaderState.from_rep(handhold.leader, model)
    y = handhold.follower.data.copy()
    y[:, 0] += 0.04  # pull the follower 4 cm off the contact
    lab_f = y[:, PERSON_CONTACT]

    def gap(z):
        dl, df = masked_min_distances(decode(z, model), Lh.points, Lh.labels, lab_f)
        return float(np.concatenate(dl + df).mean())

    g0 = gap(y)
    for _ in range(10):
        y = refine(y, Lh, GuidanceConfig(a_con=0.25), model)
    g1 = gap(y)
    con_ok = g1 <= 0.5 * g0
    ok = report(3, pene_ok and con_ok,
                f"PR {p0:.4f} -> {p1:.4f} (monotone G_pene: {bool(np.all(np.diff(vals) <= 0))}), "
                f"contact gap {g0 * 100:.2f} -> {g1 * 100:.2f} cm")
    assert ok


def test_criterion_4_sampler(report, handhold):
    t0 = time.perf_counter()
    s = make_schedule(50)
    target = handhold.follower.data
    oracle = lambda x, n, music, leader, mode="reactive": target  # noqa: E731
    out = sample(oracle, handhold.sample.music, handhold.leader, s, seed=3)
    rms = float(np.sqrt(((out.data - target) ** 2).mean(0)).max())
    den = lambda x, n, m, l, mode="reactive": 0.9 * x + 0.01 * n  # noqa: E731
    a = sample(den, handhold.sample.music, handhold.leader, s, None, seed=5)
    b = sample(den, handhold.sample.music, handhold.leader, s, GuidanceConfig(0.0, 0.0), seed=5)
    same = np.array_equal(a.data, b.data)
    dt = time.perf_counter() - t0
    ok = report(4, rms < 1e-3 and same and dt < 60, f"oracle rms {rms:.2e}, zero-guidance bitwise {same}, {dt:.1f} s")
    assert ok


def test_criterion_5_marginals(report):
    s = make_schedule(1000)
    rng = np.random.default_rng(5)
    M = 10_000
    x0 = np.array([0.8, -0.3, 1.5])
    worst = 0.0
    for n in (1, 10, 100, 500, 1000):
        ab = s.alpha_bar[n - 1]
        x = q_sample(s, np.tile(x0, (M, 1)), n, rng.standard_normal((M, 3)))
        mean_z = np.abs(x.mean(0) - np.sqrt(ab) * x0) / np.sqrt((1 - ab) / M)
        var_z = np.abs(x.var(0, ddof=1) - (1 - ab)) / ((1 - ab) * np.sqrt(2 / (M - 1)))
        worst = max(worst, mean_z.max(), var_z.max())
    ok = report(5, worst < 3, f"max deviation {worst:.2f} standard errors over 5 steps")
    assert ok


def beat_motion(T, fps, period, offset):
    t = np.arange(T) / fps
    x = t - period / (2 * np.pi) * np.sin(2 * np.pi * (t - offset) / period)
    pts = np.zeros((T, N_JOINTS, 3))
    pts[..., 0] = x[:, None]
    return pts


def brute_contact(lp, fp, model, thr=0.01):
    T = lp.shape[0]
    frames, clr, cfr, inside = 0, 0.0, 0.0, 0
    for t in range(T):
        d = np.linalg.norm(lp[t, N_JOINTS:, None] - fp[t, None, N_JOINTS:], axis=-1)
        frames += (d < thr).any()
        clr += (d.min(1) < thr).mean()
        cfr += (d.min(0) < thr).mean()
        inside += int((capsule_sdf(model, lp[t, :N_JOINTS], fp[t])[0] < 0).sum())
    return frames / T, inside / (T * fp.shape[1]), clr / T, cfr / T, (clr / T + cfr / T) / 2


def test_criterion_6_metrics(model, report):
    rng = np.random.default_rng(6)
    a = rng.normal(size=(60, 5))
    self_fid = fid(a, a)
    g = np.random.default_rng(0)
    fid_1d = fid(g.normal(0, 1, 100_000), g.normal(1, 2, 100_000))
    want_1d = 1.0 + (1 - 2) ** 2  # (mu diff)^2 + (sigma_a - sigma_b)^2
    exact = True
    for name in SCENARIOS:
        sc = scene(name, model)
        c = contact_metrics(sc.leader_points, sc.follower_points, model)
        exact &= (c.CF, c.PR, c.CLR, c.CFR, c.CVR) == brute_contact(sc.leader_points, sc.follower_points, model)
    fps, T = 30.0, 300
    music = metronome(T, 60, fps, offset=30)
    bas = [rhythm_metrics(music, p, p)[1] for p in (beat_motion(T, fps, 1.0, 1.0 + k / fps) for k in range(10))]
    ok = (abs(self_fid) <= 1e-6 and abs(fid_1d - want_1d) <= 0.05 and exact
          and bas[0] == pytest.approx(1.0) and bool(np.all(np.diff(bas) < 0)))
    report(6, ok, f"self FID {self_fid:.1e}, 1-D FID {fid_1d:.3f} vs {want_1d:.3f}, contact oracles exact {exact}, "
                  f"BAS {bas[0]:.3f} -> {bas[-1]:.3f} monotone {bool(np.all(np.diff(bas) < 0))}")
    assert ok


@pytest.fixture(scope="module")
def overfit(model):
    s = synth_duet(ScenarioSpec("handhold", seed=1, duration=2.0), model)
    enc = encode_dataset([s], model)
    sch = make_schedule(50)
    net = init(DenoiserConfig())
    before = held_out_losses(net, sch, enc, model)
    t0 = time.perf_counter()
    train([s], net, sch, opt=OptimizerConfig(lr=LR, epochs=500, batch_size=1), body=model, encoded=enc)
    return before, held_out_losses(net, sch, enc, model), time.perf_counter() - t0


def ablation(model):
    S = [synth_duet(ScenarioSpec("handhold", seed=i, duration=2.0), model) for i in range(4)]
    enc = encode_dataset(S, model)
    sch = make_schedule(50)
    out = {}
    for lc in (0.0, 1.0):
        net = init(DenoiserConfig())
        train([], net, sch, LossWeights(con=lc), OptimizerConfig(lr=LR, epochs=150, batch_size=4),
              body=model, encoded=enc)
        out[lc] = held_out_losses(net, sch, enc, model)["con"]
    return out


def test_criterion_7_training(model, report, overfit):
    before, after, dt = overfit
    ratio = after["recon"] / before["recon"]
    t0 = time.perf_counter()
    con = ablation(model)
    dt += time.perf_counter() - t0
    ok = ratio < 0.05 and con[1.0] < con[0.0] and dt < 900
    report(7, ok, f"recon {before['recon']:.4f} -> {after['recon']:.5f} ({100 * ratio:.1f}%), "
                  f"contact loss lambda=0 {con[0.0]:.4f} vs lambda=1 {con[1.0]:.4f}, {dt:.0f} s")
    assert ok


def test_criterion_8_duet(model, report):
    s = synth_duet(ScenarioSpec("handhold", seed=1, duration=2.0), model)
    sch = make_schedule(50)
    net = init(DenoiserConfig(mode="duet"))
    train([s], net, sch, opt=OptimizerConfig(lr=LR, epochs=500, batch_size=1), body=model)
    cfs = []
    for seed in range(3):
        xl, xf = sample(Predictor(net), s.music, None, sch, seed=seed, mode="duet")
        cfs.append(contact_metrics(decode(xl, model), decode(xf, model), model).CF)
    ok = report(8, min(cfs) > 0, "CF per seed " + ", ".join(f"{c:.3f}" for c in cfs))
    assert ok


def test_criterion_9_formats(tmp_path, report):
    rng = np.random.default_rng(9)
    T = 6
    motion = MotionSequence(rng.normal(size=(T, 3)).astype(np.float32).astype(float),
                            rng.uniform(-1, 1, (T, N_JOINTS, 3)).astype(np.float32).astype(float), 30.0)
    music = metronome(T, 120)
    rep = RepSequence(rng.normal(size=(T, N_CHANNELS)).astype(np.float32).astype(float))
    tensors = {"w": rng.normal(size=(3, 2)).astype(np.float32)}
    files = {
        "IDM1": (tmp_path / "a.idm", lambda p: write_motion(p, motion), read_motion),
        "IDF1": (tmp_path / "a.idf", lambda p: write_music(p, music), read_music),
        "IDR1": (tmp_path / "a.idr", lambda p: write_rep(p, rep), read_rep),
        "IDC1": (tmp_path / "a.idc", lambda p: write_checkpoint(p, {"k": 1}, tensors), read_checkpoint),
    }
    results = {}
    for magic, (path, write, read) in files.items():
        write(path)
        raw = path.read_bytes()
        back = read(path)
        path2 = path.with_suffix(".again" + path.suffix)
        # write what was read; identical bytes means a bitwise round trip
        if magic == "IDM1":
            write_motion(path2, back)
        elif magic == "IDF1":
            write_music(path2, back)
        elif magic == "IDR1":
            write_rep(path2, back)
        else:
            write_checkpoint(path2, *back)
        bitwise = path2.read_bytes() == raw
        rejects = 0
        for corrupt in (b"BAD!" + raw[4:], raw[:-5]):
            path.write_bytes(corrupt)
            try:
                read(path)
            except FormatError as exc:
                rejects += "byte offset" in str(exc)
        results[magic] = bitwise and rejects == 2
    ok = report(9, all(results.values()), ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in results.items()))
    assert ok
