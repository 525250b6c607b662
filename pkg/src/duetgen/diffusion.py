"""DDPM schedule, closed-form forward marginal, posterior step and guided sampler.

Steps are numbered n = 1..N; ``alpha_bar[n-1]`` is the product of
(1 - beta_k) for k <= n, and alpha_bar_0 = 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from duetgen.body_model import BodyModel, default_body_model
from duetgen.guidance import GuidanceConfig, LeaderState, NumericalError, refine
from duetgen.representation import RepSequence


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    beta: np.ndarray
    alpha_bar: np.ndarray
    alpha_bar_prev: np.ndarray
    posterior_mean_x0: np.ndarray
    posterior_mean_xn: np.ndarray
    posterior_var: np.ndarray

    @property
    def N(self) -> int:
        return len(self.beta)

    def check_step(self, n: int):
        if not 1 <= n <= self.N:
            raise ValueError(f"diffusion step {n} outside [1, {self.N}]")


def make_schedule(N: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    beta = np.linspace(beta_start, beta_end, N) if N > 1 else np.array([beta_start])
    alpha = 1.0 - beta
    ab = np.cumprod(alpha)
    ab_prev = np.concatenate([[1.0], ab[:-1]])
    return NoiseSchedule(
        beta=beta,
        alpha_bar=ab,
        alpha_bar_prev=ab_prev,
        posterior_mean_x0=beta * np.sqrt(ab_prev) / (1.0 - ab),
        posterior_mean_xn=(1.0 - ab_prev) * np.sqrt(alpha) / (1.0 - ab),
        posterior_var=beta * (1.0 - ab_prev) / (1.0 - ab),
    )


def q_sample(schedule: NoiseSchedule, x0, n: int, noise):
    """x_n = sqrt(ab_n) x0 + sqrt(1 - ab_n) noise (works on numpy and torch)."""
    schedule.check_step(n)
    ab = schedule.alpha_bar[n - 1]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


def posterior_step(schedule: NoiseSchedule, x_n, x0_hat, n: int, noise):
    """Sample x_{n-1} ~ q(x_{n-1} | x_n, x0_hat); at n = 1 returns x0_hat."""
    schedule.check_step(n)
    if n == 1:
        return np.array(x0_hat, copy=True)
    i = n - 1
    mean = schedule.posterior_mean_x0[i] * x0_hat + schedule.posterior_mean_xn[i] * x_n
    return mean + np.sqrt(schedule.posterior_var[i]) * noise


Denoiser = Callable[..., np.ndarray]


def sample(denoiser: Denoiser, music, leader_rep, schedule: NoiseSchedule,
           guidance: GuidanceConfig | None = None, seed: int = 0, mode: str = "reactive",
           model: BodyModel | None = None, trace: list | None = None, T: int | None = None):
    """Reverse diffusion with optional interaction guidance.

    ``denoiser(x_n, n, music, leader, mode=...)`` returns the clean
    prediction. In reactive mode ``leader`` is the clean leader matrix and
    the result is the follower (T, 4981). In duet mode ``leader`` is the
    noisy leader stream, the denoiser returns (leader_hat, follower_hat) and
    so does this function; guidance then refines the follower against the
    current leader prediction.

    ``trace``, if given, receives one dict per step with the guidance
    objective values before and after refinement.
    """
    model = model or default_body_model()
    music_data = music.data if hasattr(music, "data") else np.asarray(music)
    fps = getattr(music, "fps", 30.0)
    if mode not in ("reactive", "duet"):
        raise ValueError(f"mode must be 'reactive' or 'duet', got {mode!r}")
    if mode == "reactive":
        leader = leader_rep.data if isinstance(leader_rep, RepSequence) else np.asarray(leader_rep)
        T = leader.shape[0]
        if music_data.shape[0] != T:
            raise ValueError(f"music has {music_data.shape[0]} frames, leader has {T}")
        leader_state = LeaderState.from_rep(leader, model)
    else:
        T = music_data.shape[0] if T is None else T
    C = 4981
    rng = np.random.default_rng(seed)
    x_f = rng.standard_normal((T, C))
    x_l = rng.standard_normal((T, C)) if mode == "duet" else None
    guided = guidance is not None and guidance.enabled

    for n in range(schedule.N, 0, -1):
        if mode == "reactive":
            x0_f = np.asarray(denoiser(x_f, n, music_data, leader, mode=mode), dtype=float)
        else:
            x0_l, x0_f = (np.asarray(a, dtype=float) for a in denoiser(x_f, n, music_data, x_l, mode=mode))
            leader_state = LeaderState.from_rep(x0_l, model) if guided else None
        if not np.all(np.isfinite(x0_f)):
            raise NumericalError(f"non-finite denoiser output at step {n}")
        if guided and guidance.active(n, schedule.N):
            try:
                refined, before = refine(x0_f, leader_state, guidance, model, return_values=True)
            except NumericalError as exc:
                raise NumericalError(f"guidance diverged at step {n}: {exc}") from exc
            if trace is not None:
                _, after = refine(refined, leader_state, _probe(guidance), model, return_values=True)
                trace.append({"step": n, "before": before, "after": after})
            x0_f = refined
        noise_f = rng.standard_normal((T, C))
        x_f = posterior_step(schedule, x_f, x0_f, n, noise_f)
        if mode == "duet":
            noise_l = rng.standard_normal((T, C))
            x_l = posterior_step(schedule, x_l, x0_l, n, noise_l)
        if not np.all(np.isfinite(x_f)):
            raise NumericalError(f"non-finite sample at step {n}")

    if mode == "duet":
        return RepSequence(x_l, fps), RepSequence(x_f, fps)
    return RepSequence(x_f, fps)


def _probe(cfg: GuidanceConfig) -> GuidanceConfig:
    """Config that evaluates the same objectives with a negligible step."""
    return GuidanceConfig(
        a_con=1e-300 if cfg.a_con else 0.0,
        a_pene=1e-300 if cfg.a_pene else 0.0,
        max_update_norm=cfg.max_update_norm,
        sharpness=cfg.sharpness,
    )
