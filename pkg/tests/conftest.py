import numpy as np
import pytest

from kantsc.data import make_cbf, write_ucr_dataset


@pytest.fixture(scope="session")
def tiny_root(tmp_path_factory):
    """Two small cylinder-bell-funnel datasets in UCR layout."""
    root = tmp_path_factory.mktemp("ucr")
    for name, seed in (("CBF", 0), ("CBFB", 1)):
        raw = make_cbf(n_train=12, n_test=24, length=128, seed=seed)
        raw.name = name
        write_ucr_dataset(root, raw)
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    _CRITERIA[n] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
