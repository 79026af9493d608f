from collections import defaultdict

import pytest

# criterion number -> list of (label, ok, detail), filled by test_acceptance
ACCEPTANCE = defaultdict(list)

TITLES = {
    1: "AME(4,3) quantum value, classical bound and runtime",
    2: "two-party I_max table for d = 3, 5, 7",
    3: "quantum value equals the analytic bound",
    4: "sum-of-squares identity",
    5: "tilde-operator identity and non-unitarity of aX + bZ",
    6: "qubit construction",
    7: "qutrit self-testing relations",
    8: "exact, naive and heuristic bounds agree",
    9: "phase convention resolution",
}


@pytest.fixture
def record():
    def _record(criterion: int, label: str, ok: bool, detail: str = "") -> bool:
        ACCEPTANCE[criterion].append((label, bool(ok), detail))
        print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} {label} {detail}")
        return bool(ok)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(TITLES):
        rows = ACCEPTANCE.get(c)
        if not rows:
            terminalreporter.write_line(f"criterion {c}: NOT RUN  {TITLES[c]}")
            continue
        failed = [f"{label} {detail}".strip() for label, ok, detail in rows if not ok]
        status = "FAIL" if failed else "PASS"
        line = f"criterion {c}: {status}  {TITLES[c]} ({len(rows) - len(failed)}/{len(rows)} checks)"
        if failed:
            line += "; failing: " + "; ".join(failed)
        terminalreporter.write_line(line)
