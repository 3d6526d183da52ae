"""Converters from the source-format families into PIN entries."""
import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from src.errors import ConversionError
from src.modal import escape_image_syntax, image_tag
from src.model import CONTENT_IMAGE_DIR, NATIVE_SOURCE, OVERALL_IMAGE_DIR, Meta, PinEntry
from src.paginate import PageParams, paginate_entry
from src.reading_order import DEFAULT_GUTTER_RATIO, reading_order

logger = logging.getLogger(__name__)

TEXT = "text"
IMAGE = "image"

DEFAULT_LICENSE = "CC-BY-4.0"
DEFAULT_PAIR_TEMPLATE = "{image}\n\n{text}"
BLOCK_SEPARATOR = "\n\n"

LAYOUT_CATEGORIES = ("text", "title", "figure", "table", "list-item", "code", "other")

# DocLayNet labels and common synonyms -> (category, heading level)
CATEGORY_ALIASES = {
    "text": ("text", 0),
    "caption": ("text", 0),
    "footnote": ("text", 0),
    "formula": ("text", 0),
    "paragraph": ("text", 0),
    "title": ("title", 1),
    "section-header": ("title", 2),
    "list-item": ("list-item", 0),
    "figure": ("figure", 0),
    "picture": ("figure", 0),
    "image": ("figure", 0),
    "table": ("table", 0),
    "code": ("code", 0),
    "page-header": ("other", 0),
    "page-footer": ("other", 0),
    "other": ("other", 0),
}


@dataclass
class ConvertOptions:
    doc_id: int | str = 0
    entry_id: int = 0
    source_dataset: str = NATIVE_SOURCE
    language: str = "en"
    license: str = DEFAULT_LICENSE
    date_download: str = field(default_factory=lambda: date.today().isoformat())
    page_params: PageParams = field(default_factory=PageParams)


def _meta(opts, ori_meta=None, page_id=None, oi_exist=False, oi_source="compiling"):
    return Meta(
        language=opts.language,
        oi_exist=oi_exist,
        oi_source=oi_source,
        source_dataset=opts.source_dataset,
        ori_meta=ori_meta,
        doc_id=opts.doc_id,
        page_id=page_id,
        date_download=opts.date_download,
    )


def _content_path(doc_id, ordinal):
    return f"{CONTENT_IMAGE_DIR}/{doc_id}-{ordinal}.png"


# ---------------------------------------------------------------- interleaved lists

@dataclass
class ListItem:
    kind: str
    text: str | None = None
    image: str | None = None


@dataclass
class InterleavedListDoc:
    items: list
    metadata: dict | None = None

    @classmethod
    def from_record(cls, record):
        """Accepts `items`, OBELICS-style `texts`/`images`, or MMC4-style `text_list`/`image_info`."""
        if "items" in record:
            items = [
                ListItem(
                    kind=item.get("kind", item.get("type")),
                    text=item.get("text"),
                    image=item.get("image", item.get("path", item.get("url"))),
                )
                for item in record["items"]
            ]
            rest = {k: v for k, v in record.items() if k != "items"}
        elif "texts" in record and "images" in record:
            items = []
            for text, image in zip(record["texts"], record["images"]):
                if image is not None:
                    items.append(ListItem(IMAGE, image=image))
                elif text is not None:
                    items.append(ListItem(TEXT, text=text))
            rest = {k: v for k, v in record.items() if k not in ("texts", "images")}
        elif "text_list" in record:
            after = {}
            for info in record.get("image_info", []):
                ref = info.get("image_name") or info.get("raw_url") or info.get("url")
                after.setdefault(info.get("matched_text_index", len(record["text_list"]) - 1), []).append(ref)
            items = []
            for index, text in enumerate(record["text_list"]):
                items.append(ListItem(TEXT, text=text))
                items.extend(ListItem(IMAGE, image=ref) for ref in after.get(index, []))
            rest = {k: v for k, v in record.items() if k not in ("text_list", "image_info")}
        else:
            raise ConversionError("record has neither items, texts/images nor text_list", code="UNKNOWN_SHAPE")
        metadata = rest.get("metadata") if set(rest) == {"metadata"} else rest
        return cls(items=items, metadata=metadata or None)


def from_interleaved_list(doc, opts):
    if not doc.items:
        raise ConversionError("interleaved document has no items", code="EMPTY_DOCUMENT")

    parts = []
    content = []
    sources = {}
    for index, item in enumerate(doc.items):
        if item.kind == IMAGE:
            if not item.image:
                logger.warning("Doc %s item %d: image without path or URL, skipped", opts.doc_id, index)
                continue
            local = _content_path(opts.doc_id, len(content))
            parts.append(image_tag(local))
            content.append(local)
            sources[local] = item.image
        elif item.kind == TEXT:
            if not item.text or not item.text.strip():
                continue
            parts.append(escape_image_syntax(item.text))
        else:
            logger.warning("Doc %s item %d: unknown kind %r, skipped", opts.doc_id, index, item.kind)

    return PinEntry(
        id=opts.entry_id,
        meta=_meta(opts, ori_meta=doc.metadata),
        license=opts.license,
        md=BLOCK_SEPARATOR.join(parts),
        content_image=content,
        image_sources=sources,
    )


# ---------------------------------------------------------------- layout annotations

@dataclass
class LayoutElement:
    bbox: tuple
    category: str
    content: str | None = None
    image_path: str | None = None


@dataclass
class LayoutAnnotatedPage:
    elements: list
    page_image_path: str | None = None
    page_id: int | None = None
    width: float | None = None
    metadata: dict | None = None

    @classmethod
    def from_record(cls, record):
        elements = [
            LayoutElement(
                bbox=tuple(e["bbox"]),
                category=e.get("category", e.get("category_name", e.get("label", "other"))),
                content=e.get("content", e.get("text")),
                image_path=e.get("image_path", e.get("image")),
            )
            for e in record.get("elements", [])
        ]
        return cls(
            elements=elements,
            page_image_path=record.get("page_image_path"),
            page_id=record.get("page_id", record.get("page_no")),
            width=record.get("width"),
            metadata=record.get("metadata"),
        )


def normalize_category(category):
    key = str(category or "other").strip().lower().replace("_", "-").replace(" ", "-")
    return CATEGORY_ALIASES.get(key, ("other", 0))


def _valid_bbox(bbox):
    if len(bbox) != 4:
        return False
    x0, y0, x1, y1 = bbox
    return 0 <= x0 < x1 and 0 <= y0 < y1


def from_layout_annotations(page, opts, gutter_ratio=DEFAULT_GUTTER_RATIO):
    if not page.elements:
        raise ConversionError("layout page has no elements", code="EMPTY_DOCUMENT")

    elements = []
    for element in page.elements:
        if _valid_bbox(element.bbox):
            elements.append(element)
        else:
            logger.warning("Doc %s: invalid bbox %s skipped", opts.doc_id, element.bbox)

    order = reading_order(
        [e.bbox for e in elements],
        page_width=page.width,
        gutter_ratio=gutter_ratio,
        tie_keys=[(e.category, e.content or "", e.image_path or "") for e in elements],
    )

    blocks = []
    content = []
    sources = {}

    def add_image(path):
        local = _content_path(opts.doc_id, len(content))
        content.append(local)
        sources[local] = path
        blocks.append(image_tag(local))

    for index in order:
        element = elements[index]
        category, level = normalize_category(element.category)
        text = (element.content or "").strip()

        if category == "figure" or (category == "table" and not text):
            if element.image_path:
                add_image(element.image_path)
            else:
                logger.warning("Doc %s: %s element without image skipped", opts.doc_id, category)
        elif not text:
            continue
        elif category == "title":
            blocks.append("#" * level + " " + escape_image_syntax(" ".join(text.split())))
        elif category == "code":
            blocks.append(f"```\n{element.content.strip(chr(10))}\n```")
        else:
            # tables with HTML or GFM content pass through; only image openers are escaped
            blocks.append(escape_image_syntax(text))

    overall = []
    if page.page_image_path:
        name = opts.doc_id if page.page_id is None else f"{opts.doc_id}-{page.page_id}"
        local = f"{OVERALL_IMAGE_DIR}/{name}.png"
        overall.append(local)
        sources[local] = page.page_image_path

    return PinEntry(
        id=opts.entry_id,
        meta=_meta(opts, ori_meta=page.metadata, page_id=page.page_id, oi_exist=bool(overall),
                   oi_source="ori" if overall else "compiling"),
        license=opts.license,
        md=BLOCK_SEPARATOR.join(blocks),
        content_image=content,
        overall_image=overall,
        image_sources=sources,
    )


# ---------------------------------------------------------------- text documents

def from_text_document(text, opts):
    if not text:
        raise ConversionError("text document is empty", code="EMPTY_DOCUMENT")
    base = PinEntry(
        id=opts.entry_id,
        meta=_meta(opts),
        license=opts.license,
        md=text,
    )
    return paginate_entry(base, opts.page_params)


# ---------------------------------------------------------------- image-text pairs

@dataclass
class ImageTextPair:
    image_path: str
    text: str

    @classmethod
    def from_record(cls, record):
        return cls(
            image_path=record.get("image_path", record.get("image", record.get("url", ""))),
            text=record.get("text", record.get("caption", "")),
        )


def from_image_text_pair(pair, template, opts):
    missing = [p for p in ("{image}", "{text}") if p not in template]
    if missing:
        raise ConversionError(f"template is missing placeholder(s) {missing}", code="MISSING_PLACEHOLDER")
    if not pair.image_path or not pair.text:
        raise ConversionError("image-text pair needs both an image and a text", code="EMPTY_PAIR")

    local = _content_path(opts.doc_id, 0)
    slots = template.count("{image}")
    md = template.replace("{image}", image_tag(local)).replace("{text}", escape_image_syntax(pair.text))
    return PinEntry(
        id=opts.entry_id,
        meta=_meta(opts),
        license=opts.license,
        md=md,
        content_image=[local] * slots,
        image_sources={local: pair.image_path},
    )


# ---------------------------------------------------------------- input adapters

def iter_json_records(path):
    """Records from a .jsonl file, a .json file (object or list), or a directory of them."""
    path = Path(path)
    if path.is_dir():
        for child in sorted(path.iterdir()):
            if child.suffix in (".json", ".jsonl"):
                yield from iter_json_records(child)
        return
    with open(path, "r", encoding="utf-8") as f:
        if path.suffix == ".jsonl":
            for line_number, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    logger.warning("%s:%d: invalid JSON skipped (%s)", path, line_number, e)
            return
        data = json.load(f)
    yield from (data if isinstance(data, list) else [data])


def iter_text_documents(path):
    """(doc key, text) pairs from a .txt file, a directory of .txt files, or JSONL with `text`."""
    path = Path(path)
    if path.is_dir():
        for child in sorted(path.glob("*.txt")):
            yield child.stem, child.read_text(encoding="utf-8")
    elif path.suffix == ".txt":
        yield path.stem, path.read_text(encoding="utf-8")
    else:
        for record in iter_json_records(path):
            yield record.get("doc_id", record.get("id")), record.get("text", "")
