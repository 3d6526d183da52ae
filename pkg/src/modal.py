"""Modal sequences: markdown bodies split into text blocks and image references."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace

logger = logging.getLogger(__name__)

SEGMENT_IMAGE = "image"
SEGMENT_PARAGRAPH = "paragraph"
SEGMENTATIONS = (SEGMENT_IMAGE, SEGMENT_PARAGRAPH)

_TAG_START = re.compile(r"<img\b|!\[", re.IGNORECASE)
# Quoted attribute values may not span lines or contain '>', so an unclosed quote fails the match.
_HTML_IMG = re.compile(
    r"""<img\b(?:[^>'"]|'[^'\n>]*'|"[^"\n>]*")*?\bsrc\s*=\s*(?:'([^'\n>]*)'|"([^"\n>]*)"|([^\s'">]+))"""
    r"""(?:[^>'"]|'[^'\n>]*'|"[^"\n>]*")*>""",
    re.IGNORECASE,
)
_MD_IMG = re.compile(r"""!\[[^\]\n]*\]\(\s*<?([^\s<>()]+)>?(?:\s+(?:"[^"\n]*"|'[^'\n]*'))?\s*\)""")

_FENCE_OPEN = re.compile(r"^ {0,3}(`{3,}|~{3,})")
_HEADING_LINE = re.compile(r"^[ \t]*#{1,6}[ \t]")

_FENCED_CODE = re.compile(r"^ {0,3}(`{3,}|~{3,})[^\n]*\n.*?^ {0,3}\1[ \t]*$", re.MULTILINE | re.DOTALL)
_INLINE_CODE = re.compile(r"`[^`\n]+`")
_HEADINGS = re.compile(r"^[ \t]*#{1,6}[ \t]", re.MULTILINE)
_BOLD = re.compile(r"\*\*(?=\S)(.+?)(?<=\S)\*\*|(?<!\w)__(?=\S)(.+?)(?<=\S)__(?!\w)")
_ITALIC = re.compile(
    r"(?<![*\x00])\*(?![\s*])(.+?)(?<![\s*])\*(?![*\x00])"
    r"|(?<![\w\x00])_(?![\s_])(.+?)(?<![\s_])_(?![\w\x00])"
)


@dataclass(frozen=True)
class TextBlock:
    content: str

    @property
    def raw(self):
        return self.content


@dataclass(frozen=True)
class ImageRef:
    path: str
    tag: str
    # whitespace-only text around the tag that does not form a text block of its own
    lead: str = ""
    trail: str = ""

    @property
    def raw(self):
        return self.lead + self.tag + self.trail

    def with_path(self, new_path):
        match = _HTML_IMG.match(self.tag)
        if match:
            group = next(i for i in (1, 2, 3) if match.group(i) is not None)
        else:
            match = _MD_IMG.match(self.tag)
            group = 1
        start, end = match.span(group)
        return replace(self, path=new_path, tag=self.tag[:start] + new_path + self.tag[end:])


@dataclass(frozen=True)
class ParseWarning:
    offset: int
    message: str


@dataclass(frozen=True)
class ModalSequence:
    units: tuple = ()
    warnings: tuple = ()

    def __iter__(self):
        return iter(self.units)

    def __len__(self):
        return len(self.units)

    def kinds(self):
        return "".join("I" if isinstance(u, ImageRef) else "T" for u in self.units)

    def text_blocks(self):
        return [u for u in self.units if isinstance(u, TextBlock)]

    def image_refs(self):
        return [u for u in self.units if isinstance(u, ImageRef)]


@dataclass(frozen=True)
class MarkupStats:
    bold_char_count: int = 0
    italic_char_count: int = 0
    title_count: int = 0


def image_tag(path):
    return f"<img src='{path}'>"


_TAG_OPENER = re.compile(r"<(?=img\b)|(?<=!)\[", re.IGNORECASE)
_ENTITIES = {"<": "&lt;", "[": "&#91;"}


def escape_image_syntax(text):
    """Turn image tag openers in plain text into entities so the text never parses as an image."""
    return _TAG_OPENER.sub(lambda m: _ENTITIES[m.group(0)], text)


def _match_image(md, pos):
    match = _HTML_IMG.match(md, pos)
    if match:
        path = next(g for g in match.groups() if g is not None)
        return match, path
    match = _MD_IMG.match(md, pos)
    if match:
        return match, match.group(1)
    return None, None


def _diagnose(md, pos):
    end = len(md)
    for stop in (md.find(">", pos), md.find("\n", pos)):
        if stop != -1:
            end = min(end, stop)
    head = md[pos:end]
    if head.count("'") % 2 or head.count('"') % 2:
        reason = "unclosed attribute quote"
    else:
        reason = "image tag without src"
    return ParseWarning(offset=len(md[:pos].encode("utf-8")), message=f"malformed image tag: {reason}")


def split_blocks(text):
    """Split text into blank-line separated blocks; fenced code stays whole.

    Each block carries the blank lines that follow it, so ''.join(result) == text.
    """
    blocks = []
    current = []
    has_content = False
    boundary = False
    fence = None

    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        if fence:
            current.append(line)
            if stripped.startswith(fence) and not stripped.strip(fence[0]):
                fence = None
                boundary = True
            continue
        if not stripped:
            current.append(line)
            if has_content:
                boundary = True
            continue

        opens_fence = _FENCE_OPEN.match(line)
        heading = _HEADING_LINE.match(line)
        if has_content and (boundary or opens_fence or heading):
            blocks.append("".join(current))
            current = []
            has_content = False
        boundary = bool(heading)
        if opens_fence:
            fence = opens_fence.group(1)
        current.append(line)
        has_content = True

    if current:
        if blocks and not has_content:
            blocks[-1] += "".join(current)
        else:
            blocks.append("".join(current))
    return blocks


def _scan(md):
    pieces = []
    warnings = []
    cursor = pos = 0
    while True:
        start = _TAG_START.search(md, pos)
        if start is None:
            break
        i = start.start()
        match, path = _match_image(md, i)
        if match is None:
            if start.group(0)[0] == "<":
                warning = _diagnose(md, i)
                logger.warning("%s at byte %d", warning.message, warning.offset)
                warnings.append(warning)
            pos = start.end()
            continue
        pieces.append(md[cursor:i])
        pieces.append(ImageRef(path=path, tag=match.group(0)))
        cursor = pos = match.end()
    pieces.append(md[cursor:])
    return pieces, warnings


def parse_modal_sequence(md, segmentation=SEGMENT_IMAGE):
    if segmentation not in SEGMENTATIONS:
        raise ValueError(f"unknown segmentation: {segmentation}")
    pieces, warnings = _scan(md)

    units = []
    lead = ""
    for piece in pieces:
        if isinstance(piece, ImageRef):
            units.append(replace(piece, lead=lead))
            lead = ""
        elif not piece:
            continue
        elif piece.isspace():
            if units and isinstance(units[-1], ImageRef):
                units[-1] = replace(units[-1], trail=units[-1].trail + piece)
            else:
                lead += piece
        elif segmentation == SEGMENT_PARAGRAPH:
            units.extend(TextBlock(block) for block in split_blocks(lead + piece))
            lead = ""
        else:
            units.append(TextBlock(lead + piece))
            lead = ""
    if lead:
        # whitespace-only document with no image to carry it
        units.append(TextBlock(lead))

    return ModalSequence(units=tuple(units), warnings=tuple(warnings))


def serialize_modal_sequence(seq):
    return "".join(unit.raw for unit in seq.units)


def extract_image_refs(md):
    return [unit.path for unit in parse_modal_sequence(md).image_refs()]


def _strip_code(md):
    md = _FENCED_CODE.sub("", md)
    return _INLINE_CODE.sub(" ", md)


def compute_markup_stats(md):
    text = _strip_code(md)

    # Pairs are matched from the end of the text, so markup appended after an
    # unclosed delimiter never pairs with it.
    bold = 0
    spans = []
    size = len(text)
    for match in _BOLD.finditer(text[::-1]):
        inner = match.group(1) if match.group(1) is not None else match.group(2)
        bold += len(inner)
        spans.append((size - match.end(), size - match.start()))

    # Mask bold delimiters so their asterisks and underscores are not read as italics.
    masked = list(text)
    for start, end in spans:
        masked[start:start + 2] = "\x00\x00"
        masked[end - 2:end] = "\x00\x00"
    masked = "".join(masked)

    italic = 0
    for match in _ITALIC.finditer(masked):
        inner = match.group(1) if match.group(1) is not None else match.group(2)
        italic += len(inner)

    return MarkupStats(
        bold_char_count=bold,
        italic_char_count=italic,
        title_count=len(_HEADINGS.findall(text)),
    )
