from collections import OrderedDict

import pytest

# criterion number -> (title, [(part, ok, detail), ...])
ACCEPTANCE: "OrderedDict[int, tuple[str, list]]" = OrderedDict()


class Recorder:
    def __call__(self, criterion: int, title: str, part: str, ok: bool, detail: str):
        entry = ACCEPTANCE.setdefault(criterion, (title, []))
        entry[1].append((part, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} [{criterion}] {part}: {detail}")
        assert ok, f"criterion {criterion} ({part}): {detail}"


@pytest.fixture
def accept():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, parts = ACCEPTANCE[number]
        ok = all(p[1] for p in parts)
        details = "; ".join(f"{name} {'ok' if good else 'FAILED'} ({d})" for name, good, d in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number}. {title}: {details}")
