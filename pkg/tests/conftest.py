import sys
from pathlib import Path

# lets test modules import the shared run definitions in desk_runs.py
sys.path.insert(0, str(Path(__file__).parent))

# criterion id -> (status, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:>2}: {status:<4} {detail}")
