import json
from pathlib import Path

from .errors import FormatError


def read_jsonl(path):
    """Yield ``(line_number, record)``; blank lines are skipped."""
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"not UTF-8 ({e.reason} at byte {e.start})", path) from e
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"invalid JSON: {e.msg}", path, lineno) from e
        if not isinstance(rec, dict):
            raise FormatError("record is not an object", path, lineno)
        yield lineno, rec


def dumps(rec):
    return json.dumps(rec, ensure_ascii=False, allow_nan=False)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec))
            fh.write("\n")


def require(rec, fields, path, lineno):
    missing = [f for f in fields if f not in rec]
    if missing:
        raise FormatError(f"missing field(s) {missing}", path, lineno)
