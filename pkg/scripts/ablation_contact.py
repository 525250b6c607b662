"""Train with and without the contact loss on a contact-rich batch.

Both runs share data, initial weights and the step/noise draws; only the
contact weight differs. Reports the contact loss under fixed probe noise.

    python scripts/ablation_contact.py --epochs 150
"""
import argparse
import time

from duetgen.body_model import default_body_model
from duetgen.denoiser import DenoiserConfig, init
from duetgen.diffusion import make_schedule
from duetgen.experiments import held_out_losses
from duetgen.losses import LossWeights
from duetgen.synth import ScenarioSpec, synth_duet
from duetgen.training import OptimizerConfig, encode_dataset, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=4)
    ap.add_argument("--duration", type=float, default=2.0)
    ap.add_argument("--epochs", type=int, default=150)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--weights", type=float, nargs="+", default=[0.0, 1.0])
    args = ap.parse_args()

    body = default_body_model()
    S = [synth_duet(ScenarioSpec("handhold", seed=i, duration=args.duration), body) for i in range(args.samples)]
    enc = encode_dataset(S, body)
    sch = make_schedule(50)
    print("lambda_con  recon      con        foot       seconds")
    for lc in args.weights:
        t0 = time.perf_counter()
        net = init(DenoiserConfig())
        train([], net, sch, LossWeights(con=lc), OptimizerConfig(lr=args.lr, epochs=args.epochs, batch_size=4),
              body=body, encoded=enc)
        m = held_out_losses(net, sch, enc, body)
        print(f"{lc:<10g}  {m['recon']:.6f}  {m['con']:.6f}  {m['foot']:.6f}  {time.perf_counter() - t0:.0f}")


if __name__ == "__main__":
    main()
