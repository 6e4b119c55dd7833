import pytest

from tunedwpt.analysis import steady_state
from tunedwpt.params import TABLE_I, tuned_params


@pytest.fixture
def p():
    return TABLE_I


@pytest.fixture
def p_tuned():
    return tuned_params(TABLE_I)


@pytest.fixture
def op(p):
    return steady_state(p, 0.5, 0.5)


@pytest.fixture
def verdict(request):
    """Record one acceptance line; shown immediately and in the run summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(n: int, title: str, ok: bool, detail: str):
        line = f"criterion {n} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append(line)
        print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
