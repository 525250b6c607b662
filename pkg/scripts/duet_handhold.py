"""Overfit a duet-mode model on the handhold scene, then sample both dancers.

    python scripts/duet_handhold.py --epochs 500 --a-con 0.25
"""
import argparse

from duetgen.body_model import default_body_model
from duetgen.denoiser import DenoiserConfig, Predictor, init
from duetgen.diffusion import make_schedule, sample
from duetgen.evaluation import contact_metrics
from duetgen.guidance import GuidanceConfig
from duetgen.representation import decode
from duetgen.synth import ScenarioSpec, synth_duet
from duetgen.training import OptimizerConfig, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--duration", type=float, default=2.0)
    ap.add_argument("--a-con", type=float, default=0.0)
    ap.add_argument("--a-pene", type=float, default=0.0)
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    body = default_body_model()
    s = synth_duet(ScenarioSpec("handhold", seed=1, duration=args.duration), body)
    sch = make_schedule(50)
    net = init(DenoiserConfig(mode="duet"))
    res = train([s], net, sch, opt=OptimizerConfig(lr=args.lr, epochs=args.epochs, batch_size=1), body=body)
    print("final epoch recon", round(res.log[-1]["recon"], 6))
    gt = contact_metrics(s.leader.points(body), s.follower.points(body), body)
    print("ground truth", gt)
    guidance = GuidanceConfig(a_con=args.a_con, a_pene=args.a_pene)
    for seed in range(args.seeds):
        xl, xf = sample(Predictor(net), s.music, None, sch, guidance, seed=seed, mode="duet", model=body)
        print(f"seed {seed}", contact_metrics(decode(xl, body), decode(xf, body), body))


if __name__ == "__main__":
    main()
