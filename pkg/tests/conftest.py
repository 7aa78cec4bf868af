import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

torch.set_num_threads(1)

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_cfg():
    from neurodenoise.config import ModelConfig
    return ModelConfig.tiny()


@pytest.fixture
def tiny_model(tiny_cfg):
    from neurodenoise.model import SpikingFullSubNet
    torch.manual_seed(0)
    return SpikingFullSubNet(tiny_cfg)


# one verdict line per acceptance criterion, echoed after the run
ACCEPTANCE: dict = {}


@pytest.fixture
def verdict():
    def record(criterion: int, ok: bool, detail: str = ""):
        ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
        line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        ok = all(o for o, _ in ACCEPTANCE[c])
        detail = "; ".join(d for _, d in ACCEPTANCE[c] if d)
        terminalreporter.write_line(f"criterion {c:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
