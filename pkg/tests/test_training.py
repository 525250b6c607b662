import json

import numpy as np
import pytest
import torch

from duetgen.denoiser import DenoiserConfig, init
from duetgen.diffusion import make_schedule
from duetgen.formats import read_checkpoint
from duetgen.losses import LossWeights
from duetgen.synth import ScenarioSpec, synth_duet
from duetgen.training import OptimizerConfig, encode_dataset, load_checkpoint, train

SMALL = DenoiserConfig(model_width=16, block_count=1, head_count=2, feedforward_width=32)


@pytest.fixture(scope="module")
def tiny(model):
    s = [synth_duet(ScenarioSpec("handhold", seed=i, duration=0.5), model) for i in range(2)]
    return s, encode_dataset(s, model)


def test_default_optimizer_settings():
    opt = OptimizerConfig()
    assert opt.lr == 1e-4 and opt.weight_decay == 2e-5


def test_same_seed_bitwise_logs(tiny, model, tmp_path):
    samples, enc = tiny
    logs = []
    for i in range(2):
        net = init(SMALL)
        path = tmp_path / f"log{i}.jsonl"
        r = train(samples, net, make_schedule(10), opt=OptimizerConfig(lr=1e-3, epochs=3, batch_size=2),
                  body=model, log_path=path, encoded=enc)
        logs.append(path.read_text())
        assert len(r.log) == 3
    assert logs[0] == logs[1]
    rec = json.loads(logs[0].splitlines()[0])
    assert {"epoch", "recon", "con", "total"} <= set(rec)


def test_checkpoint_written_and_reloads(tiny, model, tmp_path):
    samples, enc = tiny
    net = init(SMALL)
    train(samples, net, make_schedule(10), opt=OptimizerConfig(epochs=1), body=model,
          checkpoint_dir=tmp_path, encoded=enc)
    cfg, tensors = read_checkpoint(tmp_path / "final.idc")
    assert cfg["denoiser"]["model_width"] == 16 and cfg["optimizer"]["lr"] == 1e-4
    again, _ = load_checkpoint(tmp_path / "final.idc")
    for k, v in net.state_dict().items():
        assert torch.equal(again.state_dict()[k], v)


def test_duet_training_runs(tiny, model):
    samples, enc = tiny
    net = init(DenoiserConfig(model_width=16, block_count=1, head_count=2, mode="duet"))
    r = train(samples, net, make_schedule(10), opt=OptimizerConfig(epochs=1), body=model, encoded=enc)
    assert np.isfinite(r.log[0]["total"])


def test_non_finite_loss_aborts(tiny, model):
    samples, enc = tiny
    lead, foll, music = (a.copy() for a in enc)
    foll[0, 0, 0] = np.inf
    with pytest.raises(FloatingPointError, match="epoch 0"):
        train(samples, init(SMALL), make_schedule(10), LossWeights(), OptimizerConfig(epochs=1),
              body=model, encoded=(lead, foll, music))


def test_empty_dataset():
    with pytest.raises(ValueError, match="empty"):
        train([], init(SMALL), make_schedule(5))
