"""``duetgen`` command line.

Exit codes: 0 ok, 1 configuration error, 2 data error, 3 numerical failure.
Fixed-layout binary outputs get a ``<file>.json`` sidecar holding the run
configuration; checkpoints, CSV and JSON outputs embed it directly.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
THREADS_ENV = "DUETGEN_THREADS"


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _run_config(args) -> dict:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    return cfg


def _sidecar(path: Path, cfg: dict) -> None:
    Path(str(path) + ".json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _require(path, flag: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{flag}: file not found: {p}")
    return p


def _body(args):
    from duetgen.body_model import default_body_model, load_body_model

    return load_body_model(_require(args.body_model, "--body-model")) if args.body_model else default_body_model()


def _load_pair(directory: Path, body):
    """Leader/follower representations from a run directory (.idr preferred, else .idm)."""
    from duetgen.formats import read_motion, read_rep
    from duetgen.representation import encode

    if (directory / "leader.idr").exists() and (directory / "follower.idr").exists():
        return read_rep(directory / "leader.idr"), read_rep(directory / "follower.idr")
    lm = read_motion(_require(directory / "leader.idm", "leader motion"), "leader")
    fm = read_motion(_require(directory / "follower.idm", "follower motion"), "follower")
    return encode(lm, fm, body), encode(fm, lm, body)


# subcommands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    from duetgen.formats import write_motion, write_music
    from duetgen.synth import ScenarioSpec, synth_duet

    try:
        spec = ScenarioSpec(args.scenario, duration=args.duration, bpm=args.bpm, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(f"--duration/--bpm: {exc}") from exc
    s = synth_duet(spec, _body(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _run_config(args)
    for name, write, obj in (("leader.idm", write_motion, s.leader), ("follower.idm", write_motion, s.follower),
                             ("music.idf", write_music, s.music)):
        write(out / name, obj)
        _sidecar(out / name, cfg)
    print(f"wrote {spec.scenario} duet, T={spec.T}, to {out}")
    return 0


def cmd_encode(args) -> int:
    from duetgen.formats import write_rep

    body = _body(args)
    src = Path(args.input)
    lead, foll = _load_pair(_require(src, "--input"), body)
    out = Path(args.out or src)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _run_config(args)
    for name, rep in (("leader.idr", lead), ("follower.idr", foll)):
        write_rep(out / name, rep)
        _sidecar(out / name, cfg)
    print(f"encoded {len(lead)} frames x {lead.data.shape[1]} channels to {out}")
    return 0


def cmd_decode(args) -> int:
    from duetgen.formats import read_motion, read_rep
    from duetgen.representation import decode

    body = _body(args)
    rep = read_rep(_require(args.rep, "--rep"))
    pts = decode(rep, body)
    if args.reference:
        ref = read_motion(_require(args.reference, "--reference")).points(body)
        if ref.shape != pts.shape:
            raise DataError(f"--reference has {ref.shape[0]} frames, --rep has {pts.shape[0]}")
        err = float(np.abs(ref - pts).max())
        print(f"round-trip max error {err:.3e} m over {pts.shape[0]} frames")
    if args.out:
        np.savez(args.out, points=pts, config=json.dumps(_run_config(args)))
    return 0


def _export_csv(path: Path, pts: np.ndarray, cfg: dict) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config={json.dumps(cfg, sort_keys=True)}\n")
        fh.write("frame,joint,x,y,z\n")
        for t in range(pts.shape[0]):
            for j in range(55):
                x, y, z = pts[t, j]
                fh.write(f"{t},{j},{x:.6f},{y:.6f},{z:.6f}\n")


def cmd_export_csv(args) -> int:
    from duetgen.formats import read_rep
    from duetgen.representation import decode

    pts = decode(read_rep(_require(args.rep, "--rep")), _body(args))
    _export_csv(Path(args.out), pts, _run_config(args))
    print(f"wrote {pts.shape[0]} frames x 55 joints to {args.out}")
    return 0


def cmd_train(args) -> int:
    from duetgen.denoiser import DenoiserConfig, init
    from duetgen.diffusion import make_schedule
    from duetgen.formats import read_music
    from duetgen.losses import LossWeights
    from duetgen.training import OptimizerConfig, save_checkpoint, train

    body = _body(args)
    lead, foll, music = [], [], []
    for d in args.data:
        d = _require(d, "--data")
        l, f = _load_pair(d, body)
        lead.append(l.data)
        foll.append(f.data)
        music.append(read_music(_require(d / "music.idf", "music")).data)
    if len({x.shape for x in lead}) != 1:
        raise DataError("--data directories must share one sequence length")
    try:
        dcfg = DenoiserConfig(model_width=args.width, block_count=args.blocks, head_count=args.heads,
                              feedforward_width=args.ff, mode=args.mode, seed=args.seed)
        weights = LossWeights(con=args.lambda_con)
        opt = OptimizerConfig(lr=args.lr, weight_decay=args.weight_decay, epochs=args.epochs,
                              batch_size=args.batch_size, seed=args.seed)
        schedule = make_schedule(args.steps, args.beta_start, args.beta_end)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    net = init(dcfg)
    if args.log:
        Path(args.log).write_text("")
    res = train([], net, schedule, weights, opt, body, log_path=args.log,
                encoded=(np.stack(lead), np.stack(foll), np.stack(music)))
    save_checkpoint(args.out, net, schedule, weights, opt, {"run": _run_config(args)})
    last = res.log[-1]
    print(f"trained {opt.epochs} epochs, final recon {last['recon']:.6f}, total {last['total']:.6f}; wrote {args.out}")
    return 0


def cmd_sample(args) -> int:
    from duetgen.denoiser import Predictor
    from duetgen.diffusion import make_schedule, sample
    from duetgen.formats import read_music, read_rep, write_rep
    from duetgen.guidance import GuidanceConfig
    from duetgen.training import load_checkpoint

    body = _body(args)
    net, ckpt = load_checkpoint(_require(args.checkpoint, "--checkpoint"))
    if net.cfg.mode != args.mode:
        raise ConfigError(f"--mode {args.mode} but checkpoint was trained in {net.cfg.mode} mode")
    music = read_music(_require(args.music, "--music"))
    sc = ckpt["schedule"]
    schedule = make_schedule(sc["N"], sc["beta_start"], sc["beta_end"])
    try:
        guidance = GuidanceConfig(a_con=args.a_con, a_pene=args.a_pene, max_update_norm=args.max_update_norm,
                                  steps_active=tuple(args.steps_active) if args.steps_active else None)
        if guidance.steps_active and guidance.steps_active[1] > schedule.N:
            raise ValueError(f"--steps-active exceeds schedule length {schedule.N}")
    except ValueError as exc:
        raise ConfigError(f"guidance flags: {exc}") from exc
    leader = None
    if args.mode == "reactive":
        if not args.leader:
            raise ConfigError("--leader (an encoded .idr file) is required in reactive mode")
        leader = read_rep(_require(args.leader, "--leader"))
    trace = [] if args.trace else None
    result = sample(Predictor(net), music, leader, schedule, guidance, seed=args.seed, mode=args.mode,
                    model=body, trace=trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _run_config(args)
    streams = {"leader.idr": result[0], "follower.idr": result[1]} if args.mode == "duet" else {"follower.idr": result}
    if args.mode == "reactive":
        streams["leader.idr"] = leader
    for name, rep in streams.items():
        write_rep(out / name, rep)
        _sidecar(out / name, cfg)
    if trace is not None:
        with open(args.trace, "w") as fh:
            fh.write(json.dumps({"config": cfg}) + "\n")
            for rec in trace:
                fh.write(json.dumps(rec) + "\n")
    print(f"sampled {args.mode} T={len(streams['follower.idr'])} seed={args.seed} to {out}")
    return 0


def cmd_eval(args) -> int:
    from duetgen.evaluation import evaluate
    from duetgen.formats import read_music
    from duetgen.representation import decode

    body = _body(args)

    def load(dirs):
        pairs, music = [], []
        for d in dirs:
            d = _require(d, "run directory")
            l, f = _load_pair(d, body)
            pairs.append((decode(l, body), decode(f, body)))
            music.append(read_music(_require(d / "music.idf", "music")))
        return pairs, music

    gen, music = load(args.generated)
    ref, _ = load(args.reference)
    if len(gen) < 2 or len(ref) < 2:
        raise ConfigError("--generated and --reference each need at least 2 run directories")
    report = evaluate(gen, ref, music, body)
    print(report.to_text())
    print(report.to_kv())
    if args.out:
        Path(args.out).write_text(json.dumps({"config": _run_config(args), "metrics": report.as_dict()}, indent=2) + "\n")
    return 0


def cmd_gradcheck(args) -> int:
    from duetgen.gradcheck import run_all

    results = run_all(seed=args.seed)
    for r in results:
        print(r.summary())
    return 0 if all(r.passed for r in results) else EXIT_NUMERIC


# wiring ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--body-model", help="body-model JSON (default: shipped model)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="duetgen", description="Reactive and duet dance generation toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic duet")
    s.add_argument("--scenario", required=True, choices=["orbit", "mirror", "handhold", "approach-touch", "walk"])
    s.add_argument("--duration", type=float, default=4.0)
    s.add_argument("--bpm", type=float, default=120.0)
    s.add_argument("--out", default="run")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("encode", parents=[common], help="encode leader/follower motions of a run directory")
    s.add_argument("--input", default="run")
    s.add_argument("--out")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", parents=[common], help="decode a representation to points")
    s.add_argument("--rep", required=True)
    s.add_argument("--reference", help="motion file to compare against")
    s.add_argument("--out", help=".npz output with points")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("train", parents=[common], help="train a denoiser")
    s.add_argument("--data", nargs="+", required=True, help="run directories")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--mode", choices=["reactive", "duet"], default="reactive")
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--batch-size", type=int, default=4)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--weight-decay", type=float, default=2e-5)
    s.add_argument("--lambda-con", type=float, default=1.0)
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--blocks", type=int, default=2)
    s.add_argument("--heads", type=int, default=4)
    s.add_argument("--ff", type=int, default=128)
    s.add_argument("--steps", type=int, default=50, help="diffusion steps N")
    s.add_argument("--beta-start", type=float, default=1e-4)
    s.add_argument("--beta-end", type=float, default=0.02)
    s.add_argument("--log", help="per-epoch JSON-lines log")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", parents=[common], help="sample from a trained denoiser")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--music", required=True)
    s.add_argument("--leader", help="encoded leader (.idr), reactive mode")
    s.add_argument("--mode", choices=["reactive", "duet"], default="reactive")
    s.add_argument("--a-con", type=float, default=0.0)
    s.add_argument("--a-pene", type=float, default=0.0)
    s.add_argument("--max-update-norm", type=float, default=0.05)
    s.add_argument("--steps-active", type=int, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--trace", help="write per-step guidance values (JSON lines)")
    s.add_argument("--out", default="sample")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("eval", parents=[common], help="metrics of generated vs reference run directories")
    s.add_argument("--generated", nargs="+", required=True)
    s.add_argument("--reference", nargs="+", required=True)
    s.add_argument("--out", help="JSON report")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suites")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("export-csv", parents=[common], help="decoded joint positions as CSV")
    s.add_argument("--rep", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_csv)
    return p


def _threads():
    val = os.environ.get(THREADS_ENV)
    if val is None:
        return
    try:
        n = int(val)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {val!r}") from None
    import torch

    torch.set_num_threads(n)


def run(argv=None) -> int:
    from duetgen.body_model import BodyModelError
    from duetgen.formats import FormatError
    from duetgen.guidance import NumericalError

    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        _threads()
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, BodyModelError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
