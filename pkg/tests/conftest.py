import numpy as np
import pytest

from gazecnn.dataset import samples_manifest, samples_to_arrays
from gazecnn.detectors import train_eye_cascade, train_face_cascade
from gazecnn.synth import gen_corpus, scene_stream

TRAIN_SCENES_SEED = 1000
HELDOUT_SCENES_SEED = 2000


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def train_scenes():
    return [(f, t) for f, t, _ in scene_stream(300, TRAIN_SCENES_SEED)]


@pytest.fixture(scope="session")
def cascades(train_scenes):
    """Face (LBP) and eye (Haar) cascades trained once per session."""
    return train_face_cascade(train_scenes), train_eye_cascade(train_scenes)


@pytest.fixture(scope="session")
def heldout_scenes():
    return [(f, t) for f, t, _ in scene_stream(200, HELDOUT_SCENES_SEED)]


@pytest.fixture(scope="session")
def corpus():
    """The 4,800-sample eye-pair corpus: 30 subjects x 160 samples."""
    samples = gen_corpus(30, 160, 42)
    x, y = samples_to_arrays(samples)
    return samples, x, y, samples_manifest(samples)


@pytest.fixture(scope="session")
def small_corpus():
    samples = gen_corpus(6, 30, 7)
    x, y = samples_to_arrays(samples)
    return samples, x, y, samples_manifest(samples)


_VERDICTS = []


@pytest.fixture
def criterion(request):
    """Record a one-line PASS/FAIL verdict; the lines are repeated in the terminal summary."""
    def record(num, title, ok, detail=""):
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        print(line)
        _VERDICTS.append((num, line))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
