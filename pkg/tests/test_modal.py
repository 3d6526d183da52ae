import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.modal import (
    SEGMENT_PARAGRAPH,
    ImageRef,
    TextBlock,
    compute_markup_stats,
    extract_image_refs,
    image_tag,
    parse_modal_sequence,
    serialize_modal_sequence,
    split_blocks,
)
from tests.helpers import SAMPLE_MD

TEXT_ALPHABET = "abcdefghij XYZ.,*_#\n`"
PATH_ALPHABET = "abcdef0123456789-_"

paths = st.text(PATH_ALPHABET, min_size=1, max_size=8).map(lambda s: f"content_image/{s}.png")
html_tags = paths.map(lambda p: ("I", image_tag(p), p))
md_tags = paths.map(lambda p: ("I", f"![alt]({p})", p))
texts = st.text(TEXT_ALPHABET, min_size=1, max_size=40).map(lambda s: ("T", s, None))
pieces = st.lists(st.one_of(texts, texts, html_tags, md_tags), max_size=50)


def scan_oracle(md):
    """Split on the two generated tag shapes with plain string search."""
    units = []
    pos = 0
    while True:
        starts = [i for i in (md.find("<img src='", pos), md.find("![alt](", pos)) if i != -1]
        if not starts:
            break
        start = min(starts)
        end = md.index("'>", start) + 2 if md.startswith("<img", start) else md.index(")", start) + 1
        if md[pos:start]:
            units.append(("T", md[pos:start]))
        units.append(("I", md[start:end]))
        pos = end
    if md[pos:]:
        units.append(("T", md[pos:]))
    return units


def expected_kinds(md):
    units = scan_oracle(md)
    has_image = any(kind == "I" for kind, _ in units)
    kinds = [kind for kind, text in units if kind == "I" or not has_image or text.strip()]
    return "".join(kinds)


class TestParseModalSequence:
    def test_plain_text(self):
        seq = parse_modal_sequence("hello")
        assert seq.units == (TextBlock("hello"),)

    def test_empty(self):
        assert parse_modal_sequence("").units == ()

    def test_sample_entry(self):
        seq = parse_modal_sequence(SAMPLE_MD)
        assert seq.kinds() == "ITIT"
        assert [r.path for r in seq.image_refs()] == ["content_image/1997-0.png", "content_image/1997-1.png"]

    def test_double_quoted_and_markdown_images(self):
        md = 'a <img alt="x" src="content_image/a.png" width=3> b ![cap](content_image/b.png "title") c'
        assert extract_image_refs(md) == ["content_image/a.png", "content_image/b.png"]

    def test_adjacent_images_keep_whitespace(self):
        md = "text\n\n<img src='content_image/a.png'>\n\n<img src='content_image/b.png'>\n\nmore"
        seq = parse_modal_sequence(md)
        assert seq.kinds() == "TIIT"
        assert serialize_modal_sequence(seq) == md

    def test_leading_whitespace_goes_to_image(self):
        md = "\n\n<img src='content_image/a.png'>"
        seq = parse_modal_sequence(md)
        assert seq.kinds() == "I"
        assert seq.units[0].lead == "\n\n"

    def test_whitespace_only_document(self):
        assert parse_modal_sequence(" \n ").kinds() == "T"

    def test_unclosed_quote_is_text_with_warning(self):
        md = "before <img src='content_image/a.png> after"
        seq = parse_modal_sequence(md)
        assert seq.kinds() == "T"
        assert len(seq.warnings) == 1
        assert seq.warnings[0].offset == len("before ")
        assert "unclosed" in seq.warnings[0].message

    def test_warning_offset_is_bytes(self):
        md = "é <img alt='x>"
        seq = parse_modal_sequence(md)
        assert seq.warnings[0].offset == len("é ".encode("utf-8"))

    def test_paragraph_segmentation(self):
        md = "one\n\ntwo\n\n<img src='content_image/a.png'>\n\nthree"
        seq = parse_modal_sequence(md, SEGMENT_PARAGRAPH)
        assert seq.kinds() == "TTIT"
        assert serialize_modal_sequence(seq) == md

    @settings(max_examples=200)
    @given(pieces)
    def test_round_trip(self, parts):
        md = "".join(p[1] for p in parts)
        assert serialize_modal_sequence(parse_modal_sequence(md)) == md

    @settings(max_examples=200)
    @given(pieces)
    def test_matches_scanning_oracle(self, parts):
        md = "".join(p[1] for p in parts)
        seq = parse_modal_sequence(md)
        assert seq.kinds() == expected_kinds(md)
        assert "TT" not in seq.kinds()

    @settings(max_examples=100)
    @given(pieces)
    def test_refs_in_document_order(self, parts):
        md = "".join(p[1] for p in parts)
        assert extract_image_refs(md) == [p[2] for p in parts if p[0] == "I"]


class TestImageRef:
    def test_with_path_html(self):
        ref = parse_modal_sequence("<img src='http://x/y.jpg' alt='a'>").units[0]
        moved = ref.with_path("content_image/1-0.jpg")
        assert moved.tag == "<img src='content_image/1-0.jpg' alt='a'>"
        assert moved.path == "content_image/1-0.jpg"

    def test_with_path_markdown(self):
        ref = parse_modal_sequence("![a](http://x/y.jpg)").units[0]
        assert ref.with_path("content_image/1-0.jpg").tag == "![a](content_image/1-0.jpg)"

    def test_raw_includes_whitespace(self):
        ref = ImageRef(path="p", tag="<img src='p'>", lead="\n", trail="\n\n")
        assert ref.raw == "\n<img src='p'>\n\n"


class TestSplitBlocks:
    def test_blank_lines_separate(self):
        assert split_blocks("a\nb\n\nc\n") == ["a\nb\n\n", "c\n"]

    def test_fenced_code_kept_whole(self):
        text = "para\n\n```\ncode\n\nmore code\n```\n\nafter"
        assert split_blocks(text) == ["para\n\n", "```\ncode\n\nmore code\n```\n\n", "after"]

    def test_heading_starts_block(self):
        assert split_blocks("text\n# Title\nbody") == ["text\n", "# Title\n", "body"]

    @settings(max_examples=200)
    @given(st.text("ab \n`#", max_size=120))
    def test_join_reconstructs(self, text):
        assert "".join(split_blocks(text)) == text


class TestMarkupStats:
    def test_bold(self):
        stats = compute_markup_stats("**ab** plain")
        assert (stats.bold_char_count, stats.italic_char_count, stats.title_count) == (2, 0, 0)

    def test_headings(self):
        assert compute_markup_stats("# T\n## U\ntext").title_count == 2

    def test_hash_without_space_is_not_heading(self):
        assert compute_markup_stats("#tag\n####### seven").title_count == 0

    def test_italic(self):
        stats = compute_markup_stats("an *emph* and _under_ word")
        assert stats.italic_char_count == 9
        assert stats.bold_char_count == 0

    def test_bold_and_italic_together(self):
        stats = compute_markup_stats("**bold** and *it*")
        assert stats.bold_char_count == 4
        assert stats.italic_char_count == 2

    def test_code_is_ignored(self):
        md = "```\n**not bold**\n# not heading\n```\nand `**inline**`"
        stats = compute_markup_stats(md)
        assert (stats.bold_char_count, stats.italic_char_count, stats.title_count) == (0, 0, 0)

    def test_unbalanced(self):
        stats = compute_markup_stats("**open and *half")
        assert stats.bold_char_count == 0
        assert stats.italic_char_count == 0

    def test_snake_case_is_not_italic(self):
        assert compute_markup_stats("snake_case_name").italic_char_count == 0

    def test_plain_text_zero(self):
        stats = compute_markup_stats("just words here")
        assert (stats.bold_char_count, stats.italic_char_count, stats.title_count) == (0, 0, 0)

    @pytest.mark.parametrize("text", ["a *", "a **b", "__c", "**", "x** y"])
    def test_appended_bold_ignores_unclosed_delimiters(self, text):
        before = compute_markup_stats(text).bold_char_count
        assert compute_markup_stats(text + "**x**").bold_char_count == before + 1

    @settings(max_examples=300)
    @given(st.text("ab *_\n", max_size=60))
    def test_appending_bold_adds_one(self, text):
        before = compute_markup_stats(text).bold_char_count
        assert compute_markup_stats(text + "**x**").bold_char_count == before + 1
