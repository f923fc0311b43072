import numpy as np
import pytest

import milaed.misvm as misvm_module
from milaed.synth import SynthConfig, gen_audio_corpus

MISVM_RUNS = []


def check_misvm_result(bags, y, result, max_rounds):
    """Imputation invariants that must hold after every mi-SVM run."""
    y = misvm_module.bag_labels_of(bags, y)
    for label, imputed in zip(y, result.labels):
        if label == -1:
            assert (imputed == -1).all(), "negative-bag instance imputed positive"
        else:
            assert (imputed == 1).any(), "positive bag left without a positive instance"
    assert 1 <= result.rounds <= max_rounds
    assert result.status in ("converged", "cycle", "round-limit")


@pytest.fixture(autouse=True, scope="session")
def _watch_misvm():
    """Wrap mi_svm_train so every call anywhere in the suite is checked."""
    original = misvm_module.mi_svm_train

    def watched(bags, y=None, C=1.0, max_rounds=50, **kw):
        result = original(bags, y, C, max_rounds=max_rounds, **kw)
        check_misvm_result(bags, y, result, max_rounds)
        MISVM_RUNS.append((result.status, result.rounds))
        return result

    misvm_module.mi_svm_train = watched
    yield MISVM_RUNS
    misvm_module.mi_svm_train = original


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Two events, 16 short clips: enough for the CLI and plumbing tests."""
    out = tmp_path_factory.mktemp("tiny")
    cfg = SynthConfig(n_events=2, n_clips=16, positives_per_event=6, clip_duration=(3.0, 5.0),
                      event_duration=(1.0, 2.0), seed=3)
    manifest = gen_audio_corpus(cfg, out)
    return out, manifest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
