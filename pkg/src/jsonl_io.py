import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from src.errors import EnvironmentIOError
from src.model import PinEntry

logger = logging.getLogger(__name__)


@dataclass
class DecodeError:
    line_number: int
    message: str
    raw: str = ""


def read_entries(source, strict=False):
    """Lazily yield a PinEntry or a DecodeError for every non-blank line.

    Unknown top-level keys are kept on the entry for round-trip; with strict=True
    the line is reported as a DecodeError instead.
    """
    for line_number, raw in enumerate(source, 1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                yield DecodeError(line_number, f"invalid UTF-8: {e}")
                continue
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            yield DecodeError(line_number, f"JSON error: {e}", line[:200])
            continue
        if not isinstance(data, dict):
            yield DecodeError(line_number, "line is not a JSON object", line[:200])
            continue

        entry = PinEntry.from_dict(data)
        if strict and entry.extra:
            yield DecodeError(line_number, f"unknown keys: {sorted(entry.extra)}", line[:200])
            continue
        yield entry


def read_jsonl(path, strict=False):
    with open(path, "rb") as f:
        yield from read_entries(f, strict=strict)


def iter_valid(items):
    for item in items:
        if isinstance(item, DecodeError):
            logger.warning("Skipping line %d: %s", item.line_number, item.message)
            continue
        yield item


def dump_entry(entry):
    return json.dumps(entry.to_dict(), ensure_ascii=False)


def write_entries(entries, sink):
    """Write one JSON object per line; returns the number of lines written."""
    text_sink = isinstance(sink, io.TextIOBase)
    written = 0
    for entry in entries:
        line = dump_entry(entry) + "\n"
        try:
            sink.write(line if text_sink else line.encode("utf-8"))
        except OSError as e:
            error = EnvironmentIOError(f"write failed after {written} lines: {e}")
            error.written = written
            raise error from e
        written += 1
    return written


def write_jsonl(entries, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        return write_entries(entries, f)
