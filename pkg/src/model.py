from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

CONTENT_IMAGE_DIR = "content_image"
OVERALL_IMAGE_DIR = "overall_image"

OI_SOURCES = ("ori", "compiling")
NATIVE_SOURCE = "source"

# Canonical key order, matching the example entry of the format description.
TOP_LEVEL_KEYS = ("id", "meta", "license", "quality_signals", "content_image", "md", "overall_image")
META_KEYS = ("language", "oi_exist", "oi_source", "source_dataset", "ori_meta", "doc_id", "page_id", "date_download")

REQUIRED_TOP_LEVEL_KEYS = ("id", "meta", "license", "content_image", "md")
REQUIRED_META_KEYS = ("language", "oi_exist", "oi_source", "source_dataset", "doc_id", "page_id", "date_download")


@dataclass
class QualitySignals:
    image_text_interleaving_count: int = 0
    text_block_count: int = 0
    total_token_count: int = 0
    doc_length: int = 0
    avg_tokens_per_text_block: float = 0.0
    avg_text_block_length: float = 0.0
    bold_char_count: int = 0
    italic_char_count: int = 0
    title_count: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        """Returns None unless every signal key is present."""
        if not isinstance(data, dict):
            return None
        names = [f.name for f in fields(cls)]
        if any(name not in data for name in names):
            return None
        return cls(**{name: data[name] for name in names})


SIGNAL_KEYS = tuple(f.name for f in fields(QualitySignals))


@dataclass
class Meta:
    language: str = "en"
    oi_exist: bool = False
    oi_source: str = "compiling"
    source_dataset: str = NATIVE_SOURCE
    ori_meta: dict | None = None
    doc_id: int | str = 0
    page_id: int | None = None
    date_download: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        data = {key: getattr(self, key) for key in META_KEYS}
        data.update(self.extra)
        return data


@dataclass
class PinEntry:
    id: int
    meta: Meta
    license: str
    md: str
    content_image: list = field(default_factory=list)
    overall_image: list = field(default_factory=list)
    quality_signals: dict | None = None
    # Re-emit overall_image as a bare string when it arrived that way.
    overall_image_single: bool = False
    extra: dict = field(default_factory=dict)
    missing_keys: tuple = field(default=(), compare=False, repr=False)
    malformed_keys: tuple = field(default=(), compare=False, repr=False)
    # local path -> original path or URL, filled by converters for localize_images
    image_sources: dict = field(default_factory=dict, compare=False, repr=False)

    def signals(self):
        return QualitySignals.from_dict(self.quality_signals)

    def to_dict(self):
        data = {
            "id": self.id,
            "meta": self.meta.to_dict(),
            "license": self.license,
        }
        if self.quality_signals is not None:
            data["quality_signals"] = self.quality_signals
        data["content_image"] = self.content_image
        data["md"] = self.md
        if self.overall_image_single and isinstance(self.overall_image, list) and len(self.overall_image) == 1:
            data["overall_image"] = self.overall_image[0]
        else:
            data["overall_image"] = self.overall_image
        data.update(self.extra)
        return data

    @classmethod
    def from_dict(cls, data):
        missing = [key for key in REQUIRED_TOP_LEVEL_KEYS if key not in data]
        malformed = []

        raw_meta = data.get("meta", {})
        if isinstance(raw_meta, dict):
            if "meta" in data:
                missing += [f"meta.{key}" for key in REQUIRED_META_KEYS if key not in raw_meta]
            meta = Meta(
                language=raw_meta.get("language", ""),
                oi_exist=raw_meta.get("oi_exist", False),
                oi_source=raw_meta.get("oi_source", ""),
                source_dataset=raw_meta.get("source_dataset", ""),
                ori_meta=raw_meta.get("ori_meta"),
                doc_id=raw_meta.get("doc_id"),
                page_id=raw_meta.get("page_id"),
                date_download=raw_meta.get("date_download", ""),
                extra={k: v for k, v in raw_meta.items() if k not in META_KEYS},
            )
        else:
            malformed.append("meta")
            meta = Meta(language="", oi_source="", source_dataset="", doc_id=None)

        overall = data.get("overall_image", [])
        single = isinstance(overall, str)
        if single:
            overall = [overall] if overall else []
        elif overall is None:
            overall = []

        return cls(
            id=data.get("id"),
            meta=meta,
            license=data.get("license", ""),
            md=data.get("md", ""),
            content_image=data.get("content_image", []),
            overall_image=overall,
            quality_signals=data.get("quality_signals"),
            overall_image_single=single,
            extra={k: v for k, v in data.items() if k not in TOP_LEVEL_KEYS},
            missing_keys=tuple(missing),
            malformed_keys=tuple(malformed),
        )
