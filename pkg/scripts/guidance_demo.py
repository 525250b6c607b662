"""Guidance refinement on fixed scenes, no trained model needed.

Penetration: the approach-touch scene starts with the follower's hands
inside the leader. Contact: the handhold follower is pulled off by 4 cm.

    python scripts/guidance_demo.py
"""
import argparse

import numpy as np

from duetgen.body_model import capsule_sdf, default_body_model
from duetgen.guidance import GuidanceConfig, LeaderState, masked_min_distances, refine
from duetgen.representation import PERSON_CONTACT, decode, encode
from duetgen.synth import ScenarioSpec, synth_duet


def reps(name, body):
    s = synth_duet(ScenarioSpec(name, seed=1), body)
    return encode(s.leader, s.follower, body), encode(s.follower, s.leader, body)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=10)
    ap.add_argument("--a-con", type=float, default=0.25)
    ap.add_argument("--pene-per-point", type=float, default=0.002)
    args = ap.parse_args()
    body = default_body_model()

    lead, foll = reps("approach-touch", body)
    L = LeaderState.from_rep(lead, body)
    x = foll.data.copy()
    cfg = GuidanceConfig(a_pene=len(x) * 710 * args.pene_per_point)
    print("iter  G_pene      PR")
    for i in range(args.iters + 1):
        sdf, _, _ = capsule_sdf(body, L.joints, decode(x, body))
        x_next, v = refine(x, L, cfg, body, return_values=True)
        print(f"{i:4d}  {v['G_pene']:.3e}  {(sdf < 0).mean():.5f}")
        x = x_next

    lead, foll = reps("handhold", body)
    L = LeaderState.from_rep(lead, body)
    y = foll.data.copy()
    y[:, 0] += 0.04
    lab = y[:, PERSON_CONTACT]
    print("iter  mean masked min distance (cm)")
    for i in range(args.iters + 1):
        dl, df = masked_min_distances(decode(y, body), L.points, L.labels, lab)
        print(f"{i:4d}  {100 * np.concatenate(dl + df).mean():.3f}")
        y = refine(y, L, GuidanceConfig(a_con=args.a_con), body)


if __name__ == "__main__":
    main()
