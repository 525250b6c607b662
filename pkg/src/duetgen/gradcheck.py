"""Central finite-difference checks for every analytic or autograd gradient.

Each suite returns a :class:`CheckResult` holding one relative error per
random configuration. Configurations that sit within ``margin`` of a
non-smooth set (min ties, the sdf zero set) are skipped and redrawn.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from duetgen.body_model import N_JOINTS, BodyModel, capsule_sdf, default_body_model
from duetgen.guidance import contact_value_grad, penetration_value_grad
from duetgen.representation import OFFSETS, PERSON_CONTACT, decode, encode
from duetgen.synth import ScenarioSpec, synth_duet

TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    errors: list[float] = field(default_factory=list)
    skipped: int = 0
    tol: float = TOL

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else float("nan")

    @property
    def passed(self) -> bool:
        return bool(self.errors) and self.max_error < self.tol

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {len(self.errors)} configs, max rel err {self.max_error:.2e} (skipped {self.skipped})"


def rel_err(a: float, b: float, floor: float = 1e-10) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def _directional(f, x, g, u, h):
    fd = (f(x + h * u) - f(x - h * u)) / (2 * h)
    return rel_err(float((g * u).sum()), fd)


def _scene(scenario: str, seed: int, model: BodyModel):
    s = synth_duet(ScenarioSpec(scenario, seed=seed, duration=2.0), model)
    return encode(s.leader, s.follower, model).data, encode(s.follower, s.leader, model).data


def _second_gap(query, target):
    d = np.sort(np.linalg.norm(query[:, None] - target[None], axis=-1), axis=1)
    return (d[:, 1] - d[:, 0]).min() if len(query) else np.inf


def check_contact(n: int = 50, seed: int = 0, h: float = 1e-5, model: BodyModel | None = None) -> CheckResult:
    model = model or default_body_model()
    rng = np.random.default_rng(seed)
    xl, xf = _scene("handhold", seed, model)
    contact_frames = np.flatnonzero(xl[:, PERSON_CONTACT].sum(1) > 0)
    pl_all = decode(xl, model)
    res = CheckResult("contact_value_grad")
    while len(res.errors) < n:
        t = int(rng.choice(contact_frames))
        x = xf[t:t + 1].copy()
        x[:, OFFSETS] += rng.normal(0, 0.01, size=(1, OFFSETS.stop - OFFSETS.start))
        pl = pl_all[t:t + 1]
        lab_l = (rng.random((1, 710)) < 0.02).astype(float)
        lab_f = (rng.random((1, 710)) < 0.02).astype(float)
        pf = decode(x, model)
        li, fi = np.flatnonzero(lab_l[0]), np.flatnonzero(lab_f[0])
        if (li.size + fi.size == 0 or _second_gap(pl[0, li], pf[0, N_JOINTS:]) < 1e-4
                or _second_gap(pf[0, fi], pl[0, N_JOINTS:]) < 1e-4):
            res.skipped += 1
            continue
        _, g = contact_value_grad(x, pl, lab_l, lab_f, model)

        def f(off):
            y = x.copy()
            y[:, OFFSETS] = off
            return contact_value_grad(y, pl, lab_l, lab_f, model)[0]

        u = rng.normal(size=g.shape)
        res.errors.append(_directional(f, x[:, OFFSETS], g, u, h))
    return res


def check_penetration(n: int = 50, seed: int = 0, h: float = 1e-5, model: BodyModel | None = None) -> CheckResult:
    model = model or default_body_model()
    rng = np.random.default_rng(seed)
    xl, xf = _scene("approach-touch", seed, model)
    pl = decode(xl, model)
    res = CheckResult("penetration_value_grad")
    while len(res.errors) < n:
        t = int(rng.integers(len(xl)))
        x = xf[t:t + 1].copy()
        # push the follower into the leader by a random amount
        x[:, 0] += rng.uniform(-0.05, 0.05)
        x[:, 2] -= rng.uniform(0.0, 0.15)
        x[:, OFFSETS] += rng.normal(0, 0.005, size=(1, OFFSETS.stop - OFFSETS.start))
        joints = pl[t:t + 1, :N_JOINTS]
        sdf, _, _ = capsule_sdf(model, joints, decode(x, model))
        if not (sdf < 0).any() or np.abs(sdf).min() < 1e-4:
            res.skipped += 1
            continue
        _, g = penetration_value_grad(x, joints, model)

        def f(off):
            y = x.copy()
            y[:, OFFSETS] = off
            return penetration_value_grad(y, joints, model)[0]

        u = rng.normal(size=g.shape)
        res.errors.append(_directional(f, x[:, OFFSETS], g, u, h))
    return res


def check_capsule_sdf(n: int = 100, seed: int = 0, h: float = 1e-5, model: BodyModel | None = None) -> CheckResult:
    model = model or default_body_model()
    rng = np.random.default_rng(seed)
    joints = model.rest_joints
    res = CheckResult("capsule_sdf", tol=1e-4)
    lo, hi = joints.min(0) - 0.2, joints.max(0) + 0.2
    while len(res.errors) < n:
        q = rng.uniform(lo, hi)
        d, g, _ = capsule_sdf(model, joints, q)
        fd = np.array([(capsule_sdf(model, joints, q + h * e)[0] - capsule_sdf(model, joints, q - h * e)[0]) / (2 * h)
                       for e in np.eye(3)])
        if np.linalg.norm(g) < 0.5 or np.linalg.norm(fd) < 0.99:
            res.skipped += 1  # on an axis or at a capsule switch
            continue
        res.errors.append(float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
    return res


def small_denoiser(seed: int = 0):
    from duetgen.denoiser import DenoiserConfig, init

    cfg = DenoiserConfig(model_width=8, block_count=1, head_count=2, feedforward_width=16, seed=seed)
    net = init(cfg).double()
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in net.parameters():
            # leave zero-init behind so every parameter influences the loss
            p.add_(0.1 * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    return net


def check_denoiser(n: int = 100, seed: int = 0, h: float = 1e-6, T: int = 4) -> CheckResult:
    from duetgen.denoiser import parameter_gradients

    net = small_denoiser(seed)
    gen = torch.Generator().manual_seed(seed + 1)
    x = torch.randn(T, 4981, generator=gen, dtype=torch.float64)
    leader = torch.randn(T, 4981, generator=gen, dtype=torch.float64)
    music = torch.randn(T, 35, generator=gen, dtype=torch.float64)
    target = torch.randn(T, 4981, generator=gen, dtype=torch.float64)

    def loss_fn(m):
        return ((m(x, 7, music, leader) - target) ** 2).mean()

    grads = parameter_gradients(net, loss_fn)
    params = dict(net.named_parameters())
    names = list(params)
    sizes = np.array([params[k].numel() for k in names], dtype=float)
    rng = np.random.default_rng(seed)
    res = CheckResult("denoiser parameter gradients")
    while len(res.errors) < n:
        k = names[rng.choice(len(names), p=sizes / sizes.sum())]
        i = int(rng.integers(params[k].numel()))
        a = float(grads[k].reshape(-1)[i])
        if abs(a) < 1e-9:
            res.skipped += 1
            continue
        flat = params[k].data.view(-1)
        old = float(flat[i])
        with torch.no_grad():
            flat[i] = old + h
            up = float(loss_fn(net))
            flat[i] = old - h
            dn = float(loss_fn(net))
            flat[i] = old
        res.errors.append(rel_err(a, (up - dn) / (2 * h)))
    return res


def run_all(seed: int = 0) -> list[CheckResult]:
    return [check_capsule_sdf(seed=seed), check_contact(seed=seed), check_penetration(seed=seed),
            check_denoiser(seed=seed)]
