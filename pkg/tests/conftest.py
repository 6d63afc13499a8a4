import contextlib

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


class _Verdict:
    def __init__(self):
        self.ok = False
        self.detail = ""


@pytest.fixture
def criterion(request):
    """``with criterion(n) as c: ...; c.ok = ...; c.detail = ...`` records one line per criterion."""
    log = request.config.stash[_ACCEPTANCE]

    @contextlib.contextmanager
    def run(num):
        v = _Verdict()
        try:
            yield v
        except Exception as e:  # recorded, then re-raised for pytest
            v.ok = False
            if not v.detail:
                v.detail = f"{type(e).__name__}: {e}".splitlines()[0]
            raise
        finally:
            log.append((num, v.ok, v.detail))
            print(f"criterion {num}: {'PASS' if v.ok else 'FAIL'}  {v.detail}")

    return run
