"""Collects acceptance verdict lines for the end-of-run summary.

pytest captures stdout at the file-descriptor level, so tests cannot
print reliably; verdicts are stored here and flushed by a
pytest_terminal_summary hook in conftest.py after capture ends.
"""

LINES = []
TAGS = set()


def record(ok: bool, label: str, detail: str) -> None:
    """Register one criterion verdict; label starts with 'criterion N'."""
    TAGS.add(label.split("(")[0].strip())
    LINES.append(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
