"""Overfit one synthetic handhold duet and report held-out-noise losses.

    python scripts/overfit.py --epochs 500 --lr 2e-3
"""
import argparse
import json
import time

from duetgen.body_model import default_body_model
from duetgen.denoiser import DenoiserConfig, init
from duetgen.diffusion import make_schedule
from duetgen.experiments import held_out_losses
from duetgen.synth import ScenarioSpec, synth_duet
from duetgen.training import OptimizerConfig, encode_dataset, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", default="handhold")
    ap.add_argument("--duration", type=float, default=2.0)
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--log")
    args = ap.parse_args()

    body = default_body_model()
    s = synth_duet(ScenarioSpec(args.scenario, seed=args.seed, duration=args.duration), body)
    enc = encode_dataset([s], body)
    sch = make_schedule(args.steps)
    net = init(DenoiserConfig())
    before = held_out_losses(net, sch, enc, body)
    t0 = time.perf_counter()
    res = train([s], net, sch, opt=OptimizerConfig(lr=args.lr, epochs=args.epochs, batch_size=1),
                body=body, encoded=enc, log_path=args.log)
    after = held_out_losses(net, sch, enc, body)
    print(f"{args.epochs} steps in {time.perf_counter() - t0:.0f} s")
    for k in before:
        print(f"{k:6s} {before[k]:12.6f} -> {after[k]:12.6f}")
    print(f"recon ratio {after['recon'] / before['recon']:.4f}")
    print("last epoch", json.dumps({k: round(v, 6) for k, v in res.log[-1].items()}))


if __name__ == "__main__":
    main()
