import numpy as np
import pytest

from patchtrad.model import ModelConfig, init_model
from patchtrad.patcher import PatchConfig


def tiny_config(m=1, w=8, patch_len=4, stride=2, d_model=8, n_heads=1, n_layers=1, dropout=0.0, **kw):
    return ModelConfig(PatchConfig(w, patch_len, stride), m, d_model=d_model, n_heads=n_heads,
                       n_layers=n_layers, ffn_mult=2, dropout_p=dropout, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture
def small_state():
    cfg = tiny_config(m=3, w=16, patch_len=4, stride=3, d_model=16, n_heads=2, n_layers=2, dropout=0.1)
    return init_model(cfg, seed=7)


# one PASS/FAIL/SKIP line per acceptance criterion, repeated in the terminal summary
_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    lines = request.config.stash[_ACCEPTANCE]

    def report(number, title, ok, detail=""):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        line = f"{status} [{number}] {title}" + (f": {detail}" if detail else "")
        lines.append((number, line))
        print(line)
        if ok is None:
            pytest.skip(detail)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
