from pathlib import Path

import numpy as np
import pytest

from gazeqc import kernels, synth
from gazeqc.core import Eye, TargetStep
from gazeqc.preprocess import FixationSegment

BACKENDS = [pytest.param(kernels.pure, id="python")]
if kernels.compiled is not None:
    BACKENDS.append(pytest.param(kernels.compiled, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def make_segment(x, y, target=(0.0, 0.0), valid=None, index=0, eye=Eye.BINOCULAR, period_ms=4.0):
    """A segment whose whole period is the analysis window."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    valid = np.ones(x.size, bool) if valid is None else np.asarray(valid, bool)
    t = np.arange(x.size) * period_ms
    window = np.ones(x.size, bool)
    return FixationSegment(index=index, eye=eye, target=TargetStep(0.0, *target), t_ms=t, x=x, y=y,
                           valid=valid, window=window, kept=window & valid)


@pytest.fixture(scope="session")
def clean_recording():
    return synth.generate(synth.SynthConfig.clean(seed=3))


@pytest.fixture(scope="session")
def noisy_recording():
    return synth.generate(synth.SynthConfig(seed=11))


REPO = Path(__file__).resolve().parents[1]
BUNDLED_CONFIG = REPO / "corpus" / "synth.toml"


@pytest.fixture(scope="session")
def bundled_corpus(tmp_path_factory):
    """The bundled twelve-subject corpus expanded on disk."""
    from gazeqc.cli import main

    out = tmp_path_factory.mktemp("bundled") / "corpus"
    assert main(["synth", "--config", str(BUNDLED_CONFIG), "--out", str(out), "--quiet"]) == 0
    return out


_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record ``(ok, detail)`` for an acceptance criterion; printed in the terminal summary."""
    def record(number, ok, detail):
        _CRITERIA[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
