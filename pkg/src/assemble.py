from src.errors import AssemblyError

BOD = "[BOD]"
EOD = "[EOD]"
BOP = "[BOP]"
EOP = "[EOP]"


def assemble_document_sequence(entries):
    """Serialize the pages of one document as [BOD]([BOP] md [EOP])*[EOD]."""
    if not entries:
        raise AssemblyError("no entries to assemble")

    doc_ids = {repr(e.meta.doc_id) for e in entries}
    if len(doc_ids) > 1:
        raise AssemblyError(f"entries span several documents: {sorted(doc_ids)}", code="MIXED_DOC_ID")

    if len(entries) == 1:
        pages = entries
    else:
        page_ids = [e.meta.page_id for e in entries]
        if None in page_ids:
            raise AssemblyError("page_id is null in a multi-page document", code="NULL_PAGE_ID")
        if len(set(page_ids)) != len(page_ids):
            raise AssemblyError(f"duplicate page_id in document {entries[0].meta.doc_id}", code="DUPLICATE_PAGE_ID")
        pages = sorted(entries, key=lambda e: e.meta.page_id)

    return BOD + "".join(f"{BOP}{page.md}{EOP}" for page in pages) + EOD


def group_by_document(entries):
    """Group entries by doc_id, in order of first appearance."""
    groups = {}
    for entry in entries:
        groups.setdefault(repr(entry.meta.doc_id), []).append(entry)
    return list(groups.values())
