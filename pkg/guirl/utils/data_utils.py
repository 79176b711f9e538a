"""
Newline-delimited JSON files with a provenance comment line.

Every file written here starts with `# guirl <version> <what> digest=<12 hex>`;
readers skip `#` lines and blank lines.
"""

import csv
import hashlib
import itertools
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Sequence, Tuple

from guirl.errors import DataError


def config_digest(config: Any) -> str:
    """First 12 hex digits of the sha256 of the canonical JSON form."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def provenance_line(what: str, digest: str) -> str:
    from guirl import __version__

    return f"# guirl {__version__} {what} digest={digest}"


def write_jsonl(
    path: str | Path, records: Iterable[Dict[str, Any]], what: str, digest: str
) -> int:
    """Write records one per line after the provenance line; returns the record count."""
    path = Path(path)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        f.write(provenance_line(what, digest) + "\n")
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + "\n")
            count += 1
    return count


def read_jsonl(path: str | Path) -> Iterator[Tuple[int, Dict[str, Any]]]:
    """Yield (1-based line number, record) for every data line."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: malformed JSON record: {e.msg}") from e
            if not isinstance(record, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    what: str,
    digest: str,
) -> None:
    """CSV rows after the provenance line; None is written as an empty cell."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(provenance_line(what, digest) + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv_rows(path: str | Path) -> List[Dict[str, str]]:
    """Header-keyed rows of a CSV written by `write_csv` (comment line skipped)."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        body = itertools.dropwhile(lambda line: line.startswith("#") or not line.strip(), f)
        return list(csv.DictReader(body))
