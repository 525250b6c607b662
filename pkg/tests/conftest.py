import numpy as np
import pytest

from duetgen.body_model import default_body_model
from duetgen.representation import encode
from duetgen.synth import ScenarioSpec, synth_duet


@pytest.fixture(scope="session")
def model():
    return default_body_model()


class Scene:
    def __init__(self, sample, model):
        self.sample = sample
        self.leader = encode(sample.leader, sample.follower, model)
        self.follower = encode(sample.follower, sample.leader, model)
        self.leader_points = sample.leader.points(model)
        self.follower_points = sample.follower.points(model)


_cache = {}


def scene(name, model, seed=1, **kw):
    key = (name, seed, tuple(sorted(kw.items())))
    if key not in _cache:
        _cache[key] = Scene(synth_duet(ScenarioSpec(name, seed=seed, **kw), model), model)
    return _cache[key]


@pytest.fixture(scope="session")
def handhold(model):
    return scene("handhold", model)


@pytest.fixture(scope="session")
def approach(model):
    return scene("approach-touch", model)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def report(request):
    """Record one pass/fail line for an acceptance criterion."""

    def emit(k, passed, detail):
        line = f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(config.acceptance_lines):
            terminalreporter.write_line(line)
