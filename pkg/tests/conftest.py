import numpy as np
import pytest

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(name: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE[name] = (bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda k: int(k.split()[1].rstrip(":"))):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name} {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
