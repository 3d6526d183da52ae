import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import pytest
from PIL import Image

import main
from src.jsonl_io import iter_valid, read_jsonl, write_jsonl
from src.model import PinEntry
from src.paginate import PageParams, paginate_entry
from tests.helpers import MUTATIONS, sample_record, make_entry, mutant_records

MOCK_RENDERER = Path(__file__).parent.parent / "src" / "mock_renderer.py"


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("PIN_CONFIG", "PIN_JOBS", "PIN_TOKENIZER"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setattr("src.config.load_dotenv", lambda: None)


def run_json(capsys, *argv):
    code = main.run([*argv, "--json", "-q"])
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1]) if out else None


def write_records(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def entries_of(path):
    return list(iter_valid(read_jsonl(path)))


class TestUsage:
    def test_no_command(self):
        assert main.run([]) == 3

    def test_unknown_option(self):
        assert main.run(["validate", "x", "--bogus"]) == 3

    def test_invalid_choice(self):
        assert main.run(["stats", "x", "--format", "xlsx"]) == 3

    def test_missing_config_file(self, tmp_path):
        write_records(tmp_path / "d.jsonl", [sample_record()])
        assert main.run(["validate", "d.jsonl", "--config", "nope.toml"]) == 3

    def test_bad_config_value(self, tmp_path):
        (tmp_path / "pin.toml").write_text("[pagination]\nn_line = 0\n")
        write_records(tmp_path / "d.jsonl", [sample_record()])
        assert main.run(["validate", "d.jsonl"]) == 3


class TestValidate:
    def test_clean_dataset(self, tmp_path, capsys):
        write_records(tmp_path / "d.jsonl", [sample_record()])
        code, summary = run_json(capsys, "validate", "d.jsonl", "--strict")
        assert code == 0
        assert summary == {"codes": {}, "entries": 1, "errors": 0}

    def test_every_mutant_reported(self, tmp_path, capsys):
        write_records(tmp_path / "bad.jsonl", [record for _, record in mutant_records()])
        code, summary = run_json(capsys, "validate", "bad.jsonl", "--strict", "--report", "report.jsonl")
        assert code == 1
        assert summary["codes"] == {name: 1 for name, _ in MUTATIONS}
        lines = [json.loads(l) for l in (tmp_path / "report.jsonl").read_text().splitlines()]
        assert [l["ordinal"] for l in lines] == list(range(10))

    def test_decode_errors_counted(self, tmp_path, capsys):
        (tmp_path / "d.jsonl").write_text(json.dumps(sample_record()) + "\n{not json\n")
        code, summary = run_json(capsys, "validate", "d.jsonl")
        assert code == 1
        assert summary["codes"] == {"DECODE_ERROR": 1}

    def test_missing_root(self):
        assert main.run(["validate", "no/such/dir"]) == 2

    def test_check_files(self, tmp_path, capsys):
        write_records(tmp_path / "d.jsonl", [sample_record()])
        code, summary = run_json(capsys, "validate", "d.jsonl", "--check-files")
        assert code == 1
        assert summary["codes"] == {"MISSING_FILE": 3}


class TestSignals:
    def test_three_entries(self, tmp_path, capsys):
        write_jsonl([PinEntry.from_dict(sample_record()), make_entry(1, md="a b"), make_entry(2, md="")], tmp_path / "in.jsonl")
        code, summary = run_json(capsys, "signals", "in.jsonl", "out.jsonl", "--jobs", "1")
        assert code == 0
        assert summary["processed"] == 3
        signals = [e.signals() for e in entries_of(tmp_path / "out.jsonl")]
        assert [s.image_text_interleaving_count for s in signals] == [3, 0, 0]
        assert signals[1].total_token_count == 2

    def test_parallel_matches_sequential(self, tmp_path):
        write_jsonl([make_entry(i, md=f"word {i} " * i) for i in range(30)], tmp_path / "in.jsonl")
        assert main.run(["signals", "in.jsonl", "one.jsonl", "--jobs", "1", "-q"]) == 0
        assert main.run(["signals", "in.jsonl", "two.jsonl", "--jobs", "2", "-q"]) == 0
        assert (tmp_path / "one.jsonl").read_bytes() == (tmp_path / "two.jsonl").read_bytes()

    def test_parallel_keeps_few_chunks_in_flight(self, tmp_path, monkeypatch):
        in_flight = []
        consumed = []

        class CountingExecutor(ThreadPoolExecutor):
            def submit(self, fn, *args):
                future = super().submit(fn, *args)
                in_flight.append(len(in_flight) + 1 - len(consumed))
                original = future.result

                def result(timeout=None):
                    consumed.append(1)
                    return original(timeout)

                future.result = result
                return future

        monkeypatch.setattr(main, "ProcessPoolExecutor", CountingExecutor)
        monkeypatch.setattr(main, "SIGNALS_CHUNK", 2)
        write_jsonl([make_entry(i, md=f"word {i}") for i in range(40)], tmp_path / "in.jsonl")

        assert main.run(["signals", "in.jsonl", "out.jsonl", "--jobs", "2", "-q"]) == 0
        assert len(in_flight) == 20
        assert max(in_flight) <= 4
        assert [e.id for e in entries_of(tmp_path / "out.jsonl")] == list(range(40))

    def test_empty_input(self, tmp_path, capsys):
        (tmp_path / "in.jsonl").write_text("")
        code, summary = run_json(capsys, "signals", "in.jsonl", "out.jsonl", "--jobs", "1")
        assert (code, summary["processed"]) == (0, 0)
        assert (tmp_path / "out.jsonl").read_bytes() == b""

    def test_bad_tokenizer(self, tmp_path):
        (tmp_path / "in.jsonl").write_text("")
        assert main.run(["signals", "in.jsonl", "out.jsonl", "--tokenizer", "bpe", "-q"]) == 3


class TestPaginate:
    def test_matches_library(self, tmp_path):
        md = "\n\n".join(f"paragraph {i}" for i in range(12))
        entries = [make_entry(0, md=md, doc_id=1), make_entry(1, md="short", doc_id=2)]
        write_jsonl(entries, tmp_path / "in.jsonl")
        assert main.run(["paginate", "in.jsonl", "out.jsonl", "--n-line", "5", "--n-image", "5", "-q"]) == 0

        params = PageParams(n_line=5, n_image=5)
        first = paginate_entry(entries[0], params, first_id=0)
        expected = first + paginate_entry(entries[1], params, first_id=len(first))
        write_jsonl(expected, tmp_path / "expected.jsonl")
        assert (tmp_path / "out.jsonl").read_bytes() == (tmp_path / "expected.jsonl").read_bytes()

    def test_config_file_used(self, tmp_path):
        (tmp_path / "pin.toml").write_text("[pagination]\nn_line = 1\nn_image = 1\n")
        write_jsonl([make_entry(0, md="a\n\nb\n\nc")], tmp_path / "in.jsonl")
        assert main.run(["paginate", "in.jsonl", "out.jsonl", "-q"]) == 0
        assert len(entries_of(tmp_path / "out.jsonl")) == 3

    def test_dry_run_writes_nothing(self, tmp_path, capsys):
        write_jsonl([make_entry(0, md="a\n\nb")], tmp_path / "in.jsonl")
        code, summary = run_json(capsys, "paginate", "in.jsonl", "out.jsonl", "--dry-run")
        assert code == 0
        assert summary["pages"] == 1
        assert not (tmp_path / "out.jsonl").exists()

    def test_invalid_params(self, tmp_path):
        write_jsonl([make_entry(0)], tmp_path / "in.jsonl")
        assert main.run(["paginate", "in.jsonl", "out.jsonl", "--n-line", "0", "-q"]) == 3


class TestConvert:
    def test_interleaved_then_validate(self, tmp_path, capsys):
        src = tmp_path / "src"
        src.mkdir()
        Image.new("RGB", (4, 4)).save(src / "pic.png")
        records = [
            {"doc_id": 100, "items": [{"type": "text", "text": "hello"}, {"type": "image", "path": "pic.png"}]},
            {"items": [{"type": "text", "text": "no images"}]},
            {"items": []},
        ]
        write_records(src / "docs.jsonl", records)

        code, summary = run_json(capsys, "convert", "src/docs.jsonl", "out/data.jsonl", "--from", "interleaved-list",
                                 "--date-download", "2024-03-01", "--first-doc-id", "500")
        assert code == 1
        assert summary == {"documents": 2, "entries": 2, "failed": 1}

        entries = entries_of(tmp_path / "out" / "data.jsonl")
        assert [e.meta.doc_id for e in entries] == [100, 501]
        assert entries[0].content_image == ["content_image/100-0.png"]
        assert (tmp_path / "out" / "content_image" / "100-0.png").exists()

        code, summary = run_json(capsys, "validate", "out/data.jsonl", "--strict", "--check-files")
        assert (code, summary["errors"]) == (0, 0)

    def test_text_documents(self, tmp_path, capsys):
        (tmp_path / "docs").mkdir()
        (tmp_path / "docs" / "a.txt").write_text("\n\n".join(["line"] * 50))
        code, summary = run_json(capsys, "convert", "docs", "out.jsonl", "--from", "text", "--no-localize")
        assert code == 0
        entries = entries_of(tmp_path / "out.jsonl")
        assert len(entries) == 2
        assert [e.id for e in entries] == [0, 1]
        assert all(e.meta.doc_id == "a" for e in entries)

    def test_pair_template(self, tmp_path):
        write_records(tmp_path / "pairs.jsonl", [{"url": "http://example.com/c.jpg", "caption": "a cat"}])
        assert main.run(["convert", "pairs.jsonl", "out.jsonl", "--from", "pair", "--no-localize",
                         "--template", "{text}\\n{image}", "-q"]) == 0
        entry = entries_of(tmp_path / "out.jsonl")[0]
        assert entry.md == "a cat\n<img src='content_image/0-0.png'>"

    def test_missing_input(self):
        assert main.run(["convert", "nowhere.jsonl", "out.jsonl", "--from", "text", "-q"]) == 2


class TestRender:
    def test_failures_reported(self, tmp_path, capsys):
        write_jsonl([make_entry(0, md="ok"), make_entry(1, md="FAIL_RENDER"), make_entry(2, md="fine")], tmp_path / "in.jsonl")
        command = f'"{sys.executable}" "{MOCK_RENDERER}" {{input}} {{output}}'
        code, summary = run_json(capsys, "render", "in.jsonl", "out/rendered.jsonl", "--command", command,
                                 "--failures", "failures.jsonl")
        assert code == 1
        assert (summary["rendered"], summary["failed"]) == (2, 1)
        entries = entries_of(tmp_path / "out" / "rendered.jsonl")
        assert [e.meta.oi_exist for e in entries] == [True, False, True]
        assert (tmp_path / "out" / "overall_image" / "0.png").exists()
        failure = json.loads((tmp_path / "failures.jsonl").read_text())
        assert (failure["id"], failure["code"]) == (1, "NONZERO_EXIT")

    def test_no_command(self, tmp_path):
        write_jsonl([make_entry(0)], tmp_path / "in.jsonl")
        assert main.run(["render", "in.jsonl", "out.jsonl", "-q"]) == 3


class TestStats:
    def prepare(self, tmp_path):
        web = [make_entry(i, md=f"text {i}") for i in range(20)]
        arxiv = [make_entry(i, md=f"# T\n\n<img src='content_image/{i}.png'>\n\nbody", content_image=[f"content_image/{i}.png"]) for i in range(10)]
        write_jsonl(web, tmp_path / "web.jsonl")
        write_jsonl(arxiv, tmp_path / "arxiv.jsonl")
        main.run(["signals", "web.jsonl", "web_s.jsonl", "--jobs", "1", "-q"])
        main.run(["signals", "arxiv.jsonl", "arxiv_s.jsonl", "--jobs", "1", "-q"])

    @pytest.mark.parametrize("fmt", ["csv", "json", "svg-scatter"])
    def test_byte_identical_reruns(self, tmp_path, fmt):
        self.prepare(tmp_path)
        for name in ("a", "b"):
            assert main.run(["stats", "web=web_s.jsonl", "arxiv=arxiv_s.jsonl", "--format", fmt,
                             "--sample", "100", "--seed", "0", "--output", f"{name}.out", "--jobs", "1", "-q"]) == 0
        assert (tmp_path / "a.out").read_bytes() == (tmp_path / "b.out").read_bytes()

    def test_csv_rows(self, tmp_path):
        self.prepare(tmp_path)
        assert main.run(["stats", "web=web_s.jsonl", "arxiv=arxiv_s.jsonl", "--output", "s.csv", "--jobs", "1", "-q"]) == 0
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert [l.split(",")[0] for l in lines] == ["name", "web", "arxiv", "total"]

    def test_single_subset_has_no_total(self, tmp_path):
        self.prepare(tmp_path)
        assert main.run(["stats", "web_s.jsonl", "--output", "s.csv", "--jobs", "1", "-q"]) == 0
        assert [l.split(",")[0] for l in (tmp_path / "s.csv").read_text().splitlines()] == ["name", "web_s"]

    def test_stdout(self, tmp_path, capsysbinary):
        self.prepare(tmp_path)
        capsysbinary.readouterr()
        assert main.run(["stats", "web_s.jsonl", "--format", "json", "--jobs", "1", "-q"]) == 0
        data = json.loads(capsysbinary.readouterr().out)
        assert data["subsets"][0]["total_docs"] == 20

    def test_missing_subset(self):
        assert main.run(["stats", "web=nope.jsonl", "-q"]) == 2


class TestPartitionAndAssemble:
    def test_round_trip(self, tmp_path, capsys):
        pages = [make_entry(i, md=f"page {i % 3}", doc_id=i // 3, page_id=i % 3) for i in range(9)]
        write_jsonl(pages[::-1], tmp_path / "in.jsonl")

        code, summary = run_json(capsys, "partition", "in.jsonl", "parts", "--max-per-part", "4")
        assert (code, summary["parts"], summary["entries"]) == (0, 3, 9)
        manifest = json.loads((tmp_path / "parts" / "manifest.json").read_text())
        assert manifest["tokenizer"] == "whitespace"

        code, summary = run_json(capsys, "assemble", "parts", "docs.jsonl")
        assert (code, summary["documents"]) == (0, 3)
        docs = [json.loads(l) for l in (tmp_path / "docs.jsonl").read_text().splitlines()]
        assert docs[0]["text"] == "[BOD][BOP]page 0[EOP][BOP]page 1[EOP][BOP]page 2[EOP][EOD]"

    def test_assemble_failure_counted(self, tmp_path, capsys):
        write_jsonl([make_entry(0, doc_id=1, page_id=0), make_entry(1, doc_id=1, page_id=0)], tmp_path / "in.jsonl")
        code, summary = run_json(capsys, "assemble", "in.jsonl", "out.jsonl")
        assert (code, summary["failed"]) == (1, 1)
