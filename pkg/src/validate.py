import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from src.model import CONTENT_IMAGE_DIR, OI_SOURCES
from src.modal import parse_modal_sequence

logger = logging.getLogger(__name__)

ERROR = "error"
WARNING = "warning"

MISSING_KEY = "MISSING_KEY"
BAD_TYPE = "BAD_TYPE"
UNKNOWN_KEY = "UNKNOWN_KEY"
EMPTY_LICENSE = "EMPTY_LICENSE"
OI_INCONSISTENT = "OI_INCONSISTENT"
BAD_OI_SOURCE = "BAD_OI_SOURCE"
IMAGE_COUNT_MISMATCH = "IMAGE_COUNT_MISMATCH"
IMAGE_ORDER_MISMATCH = "IMAGE_ORDER_MISMATCH"
MALFORMED_IMAGE_TAG = "MALFORMED_IMAGE_TAG"
BAD_DATE = "BAD_DATE"
BAD_PAGE_ID = "BAD_PAGE_ID"
DUPLICATE_ID = "DUPLICATE_ID"
DUPLICATE_PAGE = "DUPLICATE_PAGE"
MISSING_FILE = "MISSING_FILE"
DECODE_ERROR = "DECODE_ERROR"

_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


@dataclass
class Violation:
    code: str
    field: str
    message: str
    severity: str = ERROR


@dataclass
class ValidationReport:
    ordinal: int
    violations: list = field(default_factory=list)

    @property
    def errors(self):
        return [v for v in self.violations if v.severity == ERROR]

    @property
    def warnings(self):
        return [v for v in self.violations if v.severity == WARNING]

    @property
    def accepted(self):
        return not self.errors

    def add(self, code, field_path, message, severity=ERROR):
        self.violations.append(Violation(code, field_path, message, severity))


@dataclass
class ValidationOptions:
    strict: bool = False
    check_files: bool = False
    root: Path | None = None


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_str_list(value):
    return isinstance(value, list) and all(isinstance(v, str) for v in value)


def _normalize(path):
    return path[2:] if path.startswith("./") else path


def _type_checks(entry):
    meta = entry.meta
    return [
        ("id", entry.id, _is_int, "integer"),
        ("license", entry.license, lambda v: isinstance(v, str), "string"),
        ("md", entry.md, lambda v: isinstance(v, str), "string"),
        ("content_image", entry.content_image, _is_str_list, "list of strings"),
        ("overall_image", entry.overall_image, _is_str_list, "string or list of strings"),
        ("quality_signals", entry.quality_signals, lambda v: v is None or isinstance(v, dict), "object"),
        ("meta.language", meta.language, lambda v: isinstance(v, str), "string"),
        ("meta.oi_exist", meta.oi_exist, lambda v: isinstance(v, bool), "boolean"),
        ("meta.oi_source", meta.oi_source, lambda v: isinstance(v, str), "string"),
        ("meta.source_dataset", meta.source_dataset, lambda v: isinstance(v, str), "string"),
        ("meta.ori_meta", meta.ori_meta, lambda v: v is None or isinstance(v, dict), "object or null"),
        ("meta.doc_id", meta.doc_id, lambda v: _is_int(v) or isinstance(v, str), "integer or string"),
        ("meta.page_id", meta.page_id, lambda v: v is None or _is_int(v), "integer or null"),
        ("meta.date_download", meta.date_download, lambda v: isinstance(v, str), "string"),
    ]


def validate_entry(entry, options=None, ordinal=0):
    options = options or ValidationOptions()
    report = ValidationReport(ordinal=ordinal)
    missing = set(entry.missing_keys)

    for key in entry.missing_keys:
        report.add(MISSING_KEY, key, f"required key '{key}' is missing")
    for key in entry.malformed_keys:
        report.add(BAD_TYPE, key, f"'{key}' must be an object")
    if "meta" in entry.malformed_keys:
        return report

    typed = set()
    for path, value, check, expected in _type_checks(entry):
        if path in missing or (path.startswith("meta.") and "meta" in missing):
            continue
        if check(value):
            typed.add(path)
        else:
            report.add(BAD_TYPE, path, f"'{path}' must be {expected}, got {type(value).__name__}")

    if options.strict:
        for key in entry.extra:
            report.add(UNKNOWN_KEY, key, f"unknown top-level key '{key}'")
        for key in entry.meta.extra:
            report.add(UNKNOWN_KEY, f"meta.{key}", f"unknown meta key '{key}'")

    if "license" in typed and not entry.license.strip():
        report.add(EMPTY_LICENSE, "license", "license identifier is empty")

    meta = entry.meta
    if "meta.oi_source" in typed and meta.oi_source not in OI_SOURCES:
        report.add(BAD_OI_SOURCE, "meta.oi_source", f"oi_source must be one of {OI_SOURCES}, got '{meta.oi_source}'")

    if {"meta.oi_exist", "overall_image"} <= typed:
        if meta.oi_exist and not entry.overall_image:
            report.add(OI_INCONSISTENT, "overall_image", "oi_exist is true but overall_image is empty")
        elif not meta.oi_exist and entry.overall_image:
            report.add(OI_INCONSISTENT, "overall_image", "oi_exist is false but overall_image is set")

    if "meta.page_id" in typed and meta.page_id is not None and meta.page_id < 0:
        report.add(BAD_PAGE_ID, "meta.page_id", f"page_id must be >= 0, got {meta.page_id}")

    if "meta.date_download" in typed:
        valid_date = bool(_DATE.match(meta.date_download))
        if valid_date:
            try:
                datetime.strptime(meta.date_download, "%Y-%m-%d")
            except ValueError:
                valid_date = False
        if not valid_date:
            report.add(BAD_DATE, "meta.date_download", f"'{meta.date_download}' is not a YYYY-MM-DD date")

    if {"md", "content_image"} <= typed:
        _check_images(entry, report)

    if options.check_files and options.root is not None:
        root = Path(options.root)
        paths = []
        if "content_image" in typed:
            paths += entry.content_image
        if "overall_image" in typed:
            paths += entry.overall_image
        for path in paths:
            if not (root / path).is_file():
                report.add(MISSING_FILE, path, f"image file not found under {root}")

    return report


def _check_images(entry, report):
    seq = parse_modal_sequence(entry.md)
    for warning in seq.warnings:
        report.add(MALFORMED_IMAGE_TAG, "md", f"{warning.message} at byte {warning.offset}", WARNING)

    prefix = CONTENT_IMAGE_DIR + "/"
    tagged = [_normalize(ref.path) for ref in seq.image_refs() if _normalize(ref.path).startswith(prefix)]
    listed = [_normalize(path) for path in entry.content_image]
    if len(tagged) != len(listed):
        report.add(
            IMAGE_COUNT_MISMATCH, "content_image",
            f"md has {len(tagged)} content image tags but content_image lists {len(listed)}",
        )
    elif tagged != listed:
        report.add(IMAGE_ORDER_MISMATCH, "content_image", "content_image order differs from md tag order")


class DatasetValidator:
    """Validates a stream of entries, adding the cross-entry uniqueness checks."""

    def __init__(self, options=None):
        self.options = options or ValidationOptions()
        self.seen_ids = set()
        self.seen_pages = set()
        self.reports = 0
        self.codes = Counter()
        self.error_count = 0

    def validate(self, entry, ordinal=None):
        ordinal = self.reports if ordinal is None else ordinal
        report = validate_entry(entry, self.options, ordinal)

        if self.options.strict and _is_int(entry.id):
            if entry.id in self.seen_ids:
                report.add(DUPLICATE_ID, "id", f"id {entry.id} already used")
            self.seen_ids.add(entry.id)

        doc_id, page_id = entry.meta.doc_id, entry.meta.page_id
        if isinstance(doc_id, (int, str)) and (page_id is None or _is_int(page_id)):
            key = (type(doc_id).__name__, doc_id, page_id)
            if key in self.seen_pages:
                report.add(DUPLICATE_PAGE, "meta.page_id", f"(doc_id={doc_id}, page_id={page_id}) already used")
            self.seen_pages.add(key)

        return self._record(report)

    def decode_error(self, error, ordinal=None):
        ordinal = self.reports if ordinal is None else ordinal
        report = ValidationReport(ordinal=ordinal)
        report.add(DECODE_ERROR, f"line {error.line_number}", error.message)
        return self._record(report)

    def _record(self, report):
        self.reports += 1
        for violation in report.violations:
            self.codes[violation.code] += 1
        self.error_count += len(report.errors)
        return report

    def summary(self):
        return {
            "entries": self.reports,
            "errors": self.error_count,
            "codes": dict(sorted(self.codes.items())),
        }
