import numpy as np
import pytest
import torch
from hypothesis import settings

from landmark_disrupt.extractors.architectures import ARCHITECTURES, build_network
from landmark_disrupt.extractors.core import Checkpoint, ExtractorSpec, to_tensor

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

torch.set_num_threads(1)

# filled by the acceptance module; printed once at the end of the session
CRITERIA: dict[str, tuple[bool, str]] = {}


def record_criterion(key: str, passed: bool, detail: str):
    CRITERIA[key] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA, key=lambda k: int(k.split()[0][1:])):
        ok, detail = CRITERIA[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")


def calibrated_checkpoint(arch: str, seed: int, images) -> Checkpoint:
    """Random weights with BatchNorm statistics fitted to ``images``.

    A freshly initialised network in eval mode is nearly insensitive to its
    input; calibrating the running statistics makes it respond like a
    trained one without any optimisation.
    """
    torch.manual_seed(seed)
    net = build_network(arch, 13)
    for m in net.modules():
        if isinstance(m, torch.nn.BatchNorm2d):
            m.momentum = None
    net.train()
    with torch.no_grad():
        net(to_tensor(images))
    return Checkpoint.from_network(ExtractorSpec(arch), net, {"name": arch, "seed": seed})


@pytest.fixture(scope="session")
def tiny_ckpts():
    """Untrained, BatchNorm-calibrated extractors of every architecture."""
    from landmark_disrupt.datasets import synthetic_dataset

    images = synthetic_dataset(16, seed=99).image_array()
    return {a: calibrated_checkpoint(a, i, images) for i, a in enumerate(ARCHITECTURES)}


@pytest.fixture(scope="session")
def faces():
    from landmark_disrupt.datasets import synthetic_dataset

    return synthetic_dataset(8, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
