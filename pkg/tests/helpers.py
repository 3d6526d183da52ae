import copy

from src.model import Meta, PinEntry

SAMPLE_MD = (
    "<img src='content_image/1997-0.png'>\n\n"
    "This is a fake sample data line, just for show.\n\n"
    "This is a fake sample data line, just for show.\n\n"
    "<img src='content_image/1997-1.png'>\n\n"
    "This is a fake sample data line, just for show."
)

SAMPLE_RECORD = {
    "id": 1919,
    "meta": {
        "language": "en",
        "oi_exist": True,
        "oi_source": "compiling",
        "source_dataset": "example_source (e.g. OBELICS)",
        "ori_meta": {"document_url": "https://www.example.com/2022/02/21/example/", "nested": {"k": [1, 2]}},
        "doc_id": 1997,
        "page_id": 0,
        "date_download": "2024-03-01",
    },
    "license": "CC-BY-4.0",
    "quality_signals": {"doc_length": 100},
    "content_image": ["content_image/1997-0.png", "content_image/1997-1.png"],
    "md": SAMPLE_MD,
    "overall_image": "overall_image/1997.png",
}


def sample_record():
    return copy.deepcopy(SAMPLE_RECORD)


def make_entry(entry_id=0, md="text", doc_id=None, page_id=None, content_image=None, overall_image=None,
               oi_exist=None, oi_source="compiling", signals=None):
    overall_image = overall_image or []
    return PinEntry(
        id=entry_id,
        meta=Meta(
            language="en",
            oi_exist=bool(overall_image) if oi_exist is None else oi_exist,
            oi_source=oi_source,
            source_dataset="source",
            doc_id=entry_id if doc_id is None else doc_id,
            page_id=page_id,
            date_download="2024-03-01",
        ),
        license="CC-BY-4.0",
        md=md,
        content_image=list(content_image or []),
        overall_image=list(overall_image),
        quality_signals=signals,
    )


def _drop_license(r):
    del r["license"]


def _drop_last_image(r):
    r["content_image"] = r["content_image"][:1]


def _reverse_images(r):
    r["content_image"] = r["content_image"][::-1]


# one broken schema rule per mutant, paired with the violation code it must raise
MUTATIONS = [
    ("MISSING_KEY", _drop_license),
    ("BAD_TYPE", lambda r: r.update(id=str(r["id"]))),
    ("UNKNOWN_KEY", lambda r: r.update(surprise=True)),
    ("EMPTY_LICENSE", lambda r: r.update(license="  ")),
    ("OI_INCONSISTENT", lambda r: r.update(overall_image=[])),
    ("BAD_OI_SOURCE", lambda r: r["meta"].update(oi_source="generated")),
    ("IMAGE_COUNT_MISMATCH", _drop_last_image),
    ("IMAGE_ORDER_MISMATCH", _reverse_images),
    ("BAD_DATE", lambda r: r["meta"].update(date_download="2024-02-30")),
    ("BAD_PAGE_ID", lambda r: r["meta"].update(page_id=-1)),
]


def mutant_records():
    records = []
    for i, (code, mutate) in enumerate(MUTATIONS):
        record = sample_record()
        record["id"] = 3000 + i
        record["meta"]["doc_id"] = 2000 + i
        mutate(record)
        records.append((code, record))
    return records
