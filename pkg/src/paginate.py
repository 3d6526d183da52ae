"""Heuristic pagination: greedy first-fit of atomic markdown units into line budgets."""
import math
from dataclasses import dataclass, replace

from src.errors import PaginationError
from src.modal import ImageRef, parse_modal_sequence, split_blocks, extract_image_refs

DEFAULT_N_LINE = 40
DEFAULT_N_TEXT = 80
DEFAULT_N_IMAGE = 15

# Pages are contiguous slices of the input; a break's blank lines stay on the preceding page.
PAGE_JOINER = ""


def _positive_int(value):
    return isinstance(value, int) and not isinstance(value, bool) and value > 0


@dataclass(frozen=True)
class PageParams:
    n_line: int = DEFAULT_N_LINE
    n_text: int = DEFAULT_N_TEXT
    n_image: int = DEFAULT_N_IMAGE

    def __post_init__(self):
        for name in ("n_line", "n_text", "n_image"):
            if not _positive_int(getattr(self, name)):
                raise PaginationError(f"{name} must be a positive integer, got {getattr(self, name)!r}", code="INVALID_PARAMS")
        if self.n_image > self.n_line:
            raise PaginationError(f"n_image ({self.n_image}) must not exceed n_line ({self.n_line})", code="INVALID_PARAMS")


@dataclass(frozen=True)
class PageSegment:
    md: str
    estimated_lines: int
    page_index: int
    oversized: bool = False


def text_lines(text, n_text):
    lines = text.splitlines()
    while lines and not lines[0].strip():
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    return sum(max(1, math.ceil(len(line) / n_text)) for line in lines)


def estimate_lines(unit, params):
    if isinstance(unit, ImageRef):
        return params.n_image
    return text_lines(unit.content, params.n_text)


def atomic_units(md, params):
    """(markdown slice, estimated lines) for every unit that is never split across pages."""
    units = []
    for unit in parse_modal_sequence(md).units:
        if isinstance(unit, ImageRef):
            units.append((unit.raw, params.n_image))
        else:
            units.extend((block, text_lines(block, params.n_text)) for block in split_blocks(unit.content))
    return units


def f_page(input, params):
    if not isinstance(params, PageParams):
        raise PaginationError("params must be PageParams", code="INVALID_PARAMS")
    if not input:
        return [PageSegment(md="", estimated_lines=0, page_index=0)]

    pages = []
    current = []
    lines = 0

    def flush(oversized=False):
        nonlocal current, lines
        pages.append(PageSegment(md="".join(current), estimated_lines=lines, page_index=len(pages), oversized=oversized))
        current = []
        lines = 0

    for text, cost in atomic_units(input, params):
        if lines > 0 and lines + cost > params.n_line:
            flush()
        current.append(text)
        lines += cost
        if cost > params.n_line:
            flush(oversized=True)

    if current:
        if pages and lines == 0:
            # trailing whitespace after an oversized page
            last = pages.pop()
            pages.append(replace(last, md=last.md + "".join(current)))
        else:
            flush()
    return pages


def paginate_entry(entry, params, first_id=None):
    if entry.meta.page_id is not None:
        raise PaginationError(f"entry {entry.id} is already paginated (page_id={entry.meta.page_id})", code="ALREADY_PAGINATED")

    listed = set(entry.content_image)
    first_id = entry.id if first_id is None else first_id
    pages = []
    for segment in f_page(entry.md, params):
        images = [ref for ref in extract_image_refs(segment.md) if ref in listed]
        pages.append(replace(
            entry,
            id=first_id + segment.page_index,
            md=segment.md,
            content_image=images,
            overall_image=[],
            overall_image_single=False,
            quality_signals=None,
            meta=replace(entry.meta, page_id=segment.page_index, oi_exist=False, oi_source="compiling"),
            image_sources={k: v for k, v in entry.image_sources.items() if k in images},
        ))
    return pages
