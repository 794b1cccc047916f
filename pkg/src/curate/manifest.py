"""JSON Lines manifest reading and atomic writing."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from .errors import ManifestError
from .ingest import ImageRecord


def read_manifest(path: str | Path) -> list[ImageRecord]:
    """Read a JSON Lines manifest into records.

    Blank lines are skipped.  Duplicate paths and malformed lines raise
    ManifestError with the offending line number.
    """
    path = Path(path)
    records: list[ImageRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(data, dict) or "path" not in data:
                raise ManifestError(f"{path}:{lineno}: record must be an object with a 'path'")
            try:
                rec = ImageRecord.from_dict(data)
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if rec.path in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate path {rec.path!r}")
            seen.add(rec.path)
            records.append(rec)
    return records


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write text to path atomically: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_manifest(path: str | Path, records: list[ImageRecord]) -> None:
    """Write records as JSON Lines, one record per line, atomically.

    Key order is fixed by the record serializer so identical inputs produce
    byte-identical files.
    """
    lines = [json.dumps(rec.to_dict(), separators=(", ", ": ")) for rec in records]
    write_text_atomic(path, "\n".join(lines) + ("\n" if lines else ""))
