import pytest

# criterion number -> (title, passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    def record(number: int, title: str, checks: list):
        """checks: (label, value, tolerance, kind) with kind 'max' or 'min'."""
        ok = True
        parts = []
        for label, value, tol, kind in checks:
            good = value <= tol if kind == "max" else value >= tol
            ok &= bool(good)
            rel = "<=" if kind == "max" else ">="
            parts.append(f"{label}={value:.3e} {rel} {tol:.6g}")
        ACCEPTANCE[number] = (title, ok, "; ".join(parts))
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {title}: " + "; ".join(parts)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {n:2d} {title}: {detail}")
