import numpy as np
import pytest
import torch

from skeletonnet.dataset import ShapeMask, SkeletonMask
from skeletonnet.synthetic import generate_corpus
from skeletonnet.training import set_deterministic


@pytest.fixture(autouse=True, scope="session")
def _deterministic():
    set_deterministic(True)
    yield


@pytest.fixture(scope="session")
def corpus64():
    return generate_corpus(24, 64, seed=3)


@pytest.fixture(scope="session")
def corpus32():
    return generate_corpus(8, 32, seed=5)


def make_pairs(counts, size=8):
    """Fabricated pairs: ``counts`` maps class name -> number of images."""
    pairs = []
    for cls, n in counts.items():
        for i in range(n):
            pix = np.zeros((size, size), dtype=np.float32)
            pix[2:6, 2:6] = 1.0
            skel = np.zeros_like(pix)
            skel[4, 2:6] = 1.0
            pid = f"{cls}-{i:04d}"
            pairs.append((ShapeMask(pix, cls, pid), SkeletonMask(skel, cls, pid)))
    return pairs


def rand_tensor(*shape, seed=0, low=-1.0, high=1.0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(*shape, generator=g, dtype=dtype) * (high - low) + low


ACCEPTANCE = []


def record_criterion(label, passed, detail=""):
    ACCEPTANCE.append((label, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {label}" + (f"  ({detail})" if detail else ""))
