import argparse
import json
import logging
import sys
import time
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import more_itertools
from tqdm import tqdm

sys.path.insert(0, str(Path(__file__).parent))

from src.errors import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, ConversionError, EnvironmentIOError, FetchError, PinError

logger = logging.getLogger("pin")

EXIT_CANCELLED = 130
SIGNALS_CHUNK = 1000
CONVERT_FAMILIES = ("interleaved-list", "layout", "text", "pair")
REPORT_FORMATS = ("csv", "json", "svg-scatter")


def timed(label):
    class Timer:
        def __enter__(self):
            self.start = time.time()
            print(f"\n{'=' * 65}", file=sys.stderr)
            print(f"  {label}", file=sys.stderr)
            print(f"{'=' * 65}", file=sys.stderr)
            return self
        def __exit__(self, *args):
            elapsed = time.time() - self.start
            mins, secs = divmod(elapsed, 60)
            if mins > 0:
                print(f"\n  [{label}] completed in {int(mins)}m {secs:.1f}s", file=sys.stderr)
            else:
                print(f"\n  [{label}] completed in {secs:.1f}s", file=sys.stderr)
            self.elapsed = elapsed
    return Timer()


def progress(items, args, desc, total=None):
    return tqdm(items, desc=desc, total=total, unit="entry", disable=True if args.quiet else None, file=sys.stderr)


def emit_summary(args, summary):
    if args.json:
        print(json.dumps(summary, ensure_ascii=False, sort_keys=True))
        return
    for key, value in summary.items():
        if isinstance(value, dict):
            print(f"  {key}:")
            for k, v in value.items():
                print(f"    {k:<24} {v}")
        else:
            print(f"  {key:<26} {value}")


def read_dataset(path):
    """Entries and decode errors of every JSONL file of a dataset (file, flat dir or partitioned)."""
    from src.jsonl_io import read_jsonl
    from src.partition import dataset_files

    path = Path(path)
    if not path.exists():
        raise EnvironmentIOError(f"{path} does not exist")
    for file in dataset_files(path):
        yield from read_jsonl(file)


def valid_entries(path, counter):
    from src.jsonl_io import DecodeError

    for item in read_dataset(path):
        if isinstance(item, DecodeError):
            counter["decode_errors"] += 1
            logger.warning("%s line %d: %s", path, item.line_number, item.message)
            continue
        yield item


def write_output(entries, path, args):
    from src.jsonl_io import write_jsonl

    if args.dry_run:
        return sum(1 for _ in entries)
    return write_jsonl(entries, path)


# ---------------------------------------------------------------- subcommands

def cmd_validate(args, config):
    from src.jsonl_io import DecodeError, read_jsonl
    from src.partition import dataset_files
    from src.validate import DatasetValidator, ValidationOptions

    cfg = config.override("validate", strict=args.strict, check_files=args.check_files).validate
    root = Path(args.root)
    if not root.exists():
        raise EnvironmentIOError(f"dataset root {root} does not exist")

    validator = DatasetValidator(ValidationOptions(strict=cfg.strict, check_files=cfg.check_files))
    records = []
    with timed(f"Validate {root}"):
        for file in dataset_files(root):
            validator.options = replace(validator.options, root=file.parent)
            for item in progress(read_jsonl(file), args, file.name):
                if isinstance(item, DecodeError):
                    report = validator.decode_error(item)
                else:
                    report = validator.validate(item)
                for v in report.violations:
                    records.append({"file": str(file), "ordinal": report.ordinal, "code": v.code,
                                    "field": v.field, "severity": v.severity, "message": v.message})

    if args.report and not args.dry_run:
        with open(args.report, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record, ensure_ascii=False) + "\n")

    summary = validator.summary()
    emit_summary(args, summary)
    return EXIT_OK if summary["errors"] == 0 else EXIT_DATA


def cmd_signals(args, config):
    from src.signals import attach_signals_chunk, load_tokenizer

    cfg = config.override("tokenizer", spec=args.tokenizer, segmentation=args.segmentation).tokenizer
    jobs = config.run.jobs
    load_tokenizer(cfg.spec)
    counter = Counter()

    def processed():
        chunks = more_itertools.chunked(valid_entries(args.input, counter), SIGNALS_CHUNK)
        if jobs > 1:
            # at most 2 * jobs chunks in flight; results come back in input order
            pending = deque()
            with ProcessPoolExecutor(max_workers=jobs) as executor:
                for chunk in chunks:
                    pending.append(executor.submit(attach_signals_chunk, chunk, cfg.spec, cfg.segmentation))
                    if len(pending) >= 2 * jobs:
                        yield from pending.popleft().result()
                while pending:
                    yield from pending.popleft().result()
        else:
            for chunk in chunks:
                yield from attach_signals_chunk(chunk, cfg.spec, cfg.segmentation)

    with timed(f"Signals ({cfg.spec}, jobs={jobs})"):
        count = write_output(progress(processed(), args, "signals"), args.output, args)

    emit_summary(args, {"processed": count, "decode_errors": counter["decode_errors"], "tokenizer": cfg.spec})
    return EXIT_DATA if counter["decode_errors"] else EXIT_OK


def cmd_paginate(args, config):
    from src.paginate import paginate_entry

    params = config.override("pagination", n_line=args.n_line, n_text=args.n_text, n_image=args.n_image).pagination.params()
    counter = Counter()

    def pages():
        next_id = 0
        for entry in valid_entries(args.input, counter):
            if entry.meta.page_id is not None:
                logger.warning("Entry %s already paginated, passed through", entry.id)
                counter["passed_through"] += 1
                result = [replace(entry, id=next_id)]
            else:
                result = paginate_entry(entry, params, first_id=next_id)
                counter["documents"] += 1
            next_id += len(result)
            yield from result

    with timed(f"Paginate (n_line={params.n_line}, n_text={params.n_text}, n_image={params.n_image})"):
        count = write_output(progress(pages(), args, "pages"), args.output, args)

    emit_summary(args, {"documents": counter["documents"], "pages": count,
                        "passed_through": counter["passed_through"], "decode_errors": counter["decode_errors"]})
    return EXIT_DATA if counter["decode_errors"] else EXIT_OK


def _convert_records(args, config, counter):
    from src import convert
    from src.fetch import DefaultFetcher, localize_images

    fetch_cfg = config.fetch
    params = config.pagination.params()
    source = Path(args.input)
    if not source.exists():
        raise EnvironmentIOError(f"{source} does not exist")
    fetcher = DefaultFetcher(base_dir=source if source.is_dir() else source.parent,
                             timeout=fetch_cfg.timeout, retries=fetch_cfg.retries)
    out_root = Path(args.output).parent
    template = args.template.replace("\\n", "\n") if args.template else convert.DEFAULT_PAIR_TEMPLATE

    if args.family == "text":
        records = ({"doc_id": key, "text": text} for key, text in convert.iter_text_documents(source))
    else:
        records = convert.iter_json_records(source)

    next_id = 0
    for ordinal, record in enumerate(records):
        doc_id = record.get("doc_id")
        opts = convert.ConvertOptions(
            doc_id=args.first_doc_id + ordinal if doc_id is None else doc_id,
            entry_id=next_id,
            source_dataset=args.source_dataset,
            language=args.language,
            license=args.license,
            page_params=params,
        )
        if args.date_download:
            opts.date_download = args.date_download
        try:
            if args.family == "interleaved-list":
                drafts = [convert.from_interleaved_list(convert.InterleavedListDoc.from_record(record), opts)]
            elif args.family == "layout":
                drafts = [convert.from_layout_annotations(convert.LayoutAnnotatedPage.from_record(record), opts)]
            elif args.family == "text":
                drafts = convert.from_text_document(record.get("text", ""), opts)
            else:
                drafts = [convert.from_image_text_pair(convert.ImageTextPair.from_record(record), template, opts)]
            if args.localize:
                drafts = [localize_images(d, fetcher, out_root, fetch_cfg.policy, fetch_cfg.concurrency, args.dry_run)
                          for d in drafts]
        except (ConversionError, FetchError) as e:
            counter["failed"] += 1
            logger.warning("Record %d not converted: %s", ordinal, e)
            continue
        counter["documents"] += 1
        next_id += len(drafts)
        yield from drafts


def cmd_convert(args, config):
    counter = Counter()
    with timed(f"Convert {args.family}"):
        count = write_output(progress(_convert_records(args, config, counter), args, "convert"), args.output, args)
    emit_summary(args, {"documents": counter["documents"], "entries": count, "failed": counter["failed"]})
    return EXIT_DATA if counter["failed"] else EXIT_OK


def cmd_render(args, config):
    from src.render import render_batch

    cfg = config.override("render", command=args.command, timeout=args.timeout, force=args.force or None,
                          jobs=args.jobs).render
    renderer = cfg.renderer()
    root = Path(args.root) if args.root else Path(args.output).parent
    counter = Counter()
    entries = list(valid_entries(args.input, counter))

    with timed(f"Render {len(entries)} entries (jobs={cfg.jobs})"):
        bar = progress(None, args, "render", total=len(entries))
        results = render_batch(entries, renderer, root, jobs=cfg.jobs, force=cfg.force, dry_run=args.dry_run,
                               on_done=lambda _: bar.update(1))
        bar.close()

    failures = [r.failure for r in results if r.failure]
    write_output((r.entry for r in results), args.output, args)
    if args.failures and not args.dry_run:
        with open(args.failures, "w", encoding="utf-8") as f:
            for failure in failures:
                f.write(json.dumps(failure.to_dict(), ensure_ascii=False) + "\n")

    summary = {
        "rendered": sum(1 for r in results if r.ok and not r.skipped),
        "skipped": sum(1 for r in results if r.skipped),
        "failed": len(failures),
        "failure_codes": dict(sorted(Counter(f.code for f in failures).items())),
    }
    emit_summary(args, summary)
    return EXIT_DATA if failures or counter["decode_errors"] else EXIT_OK


def _subset_args(inputs):
    subsets = []
    for spec in inputs:
        name, sep, path = spec.partition("=")
        if not sep:
            path = spec
            name = Path(spec).stem if Path(spec).is_file() else Path(spec).name
        if not Path(path).exists():
            raise EnvironmentIOError(f"{path} does not exist")
        subsets.append((name, path))
    return subsets


def cmd_stats(args, config):
    from src.partition import dataset_files
    from src.signals import load_tokenizer
    from src.stats import BinSpec, StatsReport, accumulate_files, aggregate_total, emit_report, joint_distribution

    cfg = config.override("stats", seed=args.seed, sample=args.sample, itif=args.itif,
                          weighted=args.weighted or None).stats
    tokenizer_spec = args.tokenizer or config.tokenizer.spec
    tokenizer = load_tokenizer(tokenizer_spec) if args.compute_missing else None
    bins = BinSpec(cfg.image_bins, cfg.token_bins)

    report = StatsReport(itif_variant=cfg.itif, weighted=cfg.weighted)
    skipped = Counter()
    with timed("Stats"):
        for name, path in _subset_args(args.inputs):
            files = dataset_files(path)
            acc, missing = accumulate_files(files, cfg.itif, tokenizer_spec if args.compute_missing else None,
                                            jobs=config.run.jobs)
            skipped.update(missing)
            report.subsets.append(acc.result(name))
            counter = Counter()
            report.joint[name] = joint_distribution(valid_entries(path, counter), cfg.sample, bins, cfg.seed, tokenizer)
        if len(report.subsets) > 1:
            report.total = aggregate_total(report.subsets, weighted=cfg.weighted)

    payload = emit_report(report, args.format)
    if args.output and not args.dry_run:
        Path(args.output).write_bytes(payload)
    elif not args.output:
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
        return EXIT_OK

    emit_summary(args, {"subsets": len(report.subsets), "format": args.format,
                        "missing_signals": skipped["missing_signals"], "itif": cfg.itif})
    return EXIT_OK


def cmd_partition(args, config):
    from src.partition import partition_dataset
    from src.signals import load_tokenizer

    cfg = config.override("partition", max_per_part=args.max_per_part).partition
    source = Path(args.input)
    source_root = Path(args.source_root) if args.source_root else (source if source.is_dir() else source.parent)
    counter = Counter()

    with timed(f"Partition into {args.root} (max {cfg.max_per_part} per part)"):
        manifest = partition_dataset(
            progress(valid_entries(source, counter), args, "partition"),
            cfg.max_per_part,
            args.root,
            source_root=source_root,
            jobs=config.run.jobs,
            tokenizer=load_tokenizer(config.tokenizer.spec).identity,
            dry_run=args.dry_run,
        )

    emit_summary(args, {"parts": len(manifest.parts), "entries": manifest.total_entries,
                        "decode_errors": counter["decode_errors"]})
    return EXIT_DATA if counter["decode_errors"] else EXIT_OK


def cmd_assemble(args, config):
    from src.assemble import assemble_document_sequence, group_by_document
    from src.errors import AssemblyError

    counter = Counter()
    groups = group_by_document(valid_entries(args.input, counter))

    def sequences():
        for pages in groups:
            doc_id = pages[0].meta.doc_id
            try:
                text = assemble_document_sequence(pages)
            except AssemblyError as e:
                counter["failed"] += 1
                logger.warning("Document %s not assembled: %s", doc_id, e)
                continue
            yield json.dumps({"doc_id": doc_id, "pages": len(pages), "text": text}, ensure_ascii=False) + "\n"

    with timed(f"Assemble {len(groups)} documents"):
        lines = list(sequences())
        if not args.dry_run:
            Path(args.output).parent.mkdir(parents=True, exist_ok=True)
            with open(args.output, "w", encoding="utf-8") as f:
                f.writelines(lines)

    emit_summary(args, {"documents": len(lines), "failed": counter["failed"], "decode_errors": counter["decode_errors"]})
    return EXIT_DATA if counter["failed"] or counter["decode_errors"] else EXIT_OK


# ---------------------------------------------------------------- argument parsing

class PinArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser():
    common = PinArgumentParser(add_help=False)
    common.add_argument("--config", help="path to pin.toml (default: $PIN_CONFIG or ./pin.toml)")
    common.add_argument("--jobs", type=int, help="worker processes/threads (default: logical CPU count)")
    common.add_argument("--dry-run", action="store_true", help="run without writing any file")
    common.add_argument("--json", action="store_true", help="print the run summary as JSON on stdout")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only, no progress bars")

    parser = PinArgumentParser(
        prog="main.py",
        description="Build, check and describe PIN multimodal document datasets.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, help_text, handler):
        p = sub.add_parser(name, help=help_text, parents=[common], formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(handler=handler)
        return p

    p = add("validate", "check every entry of a dataset against the schema", cmd_validate)
    p.add_argument("root", help="dataset root, partition directory or JSONL file")
    p.add_argument("--strict", action="store_true", default=None, help="also reject unknown keys and duplicate ids")
    p.add_argument("--check-files", action="store_true", default=None, help="check that referenced images exist")
    p.add_argument("--report", help="write one JSON line per violation to this file")

    p = add("signals", "compute quality signals for every entry", cmd_signals)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--tokenizer", help="'whitespace' or 'vocab:<path>'")
    p.add_argument("--segmentation", choices=("image", "paragraph"), help="text block segmentation")

    p = add("paginate", "split long documents into pages", cmd_paginate)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--n-line", type=int, help="line budget per page (default 40)")
    p.add_argument("--n-text", type=int, help="characters per visual line (default 80)")
    p.add_argument("--n-image", type=int, help="lines charged per image (default 15)")

    p = add("convert", "convert a source dataset into PIN entries", cmd_convert)
    p.add_argument("input", help="source file or directory")
    p.add_argument("output", help="output JSONL; images are stored next to it")
    p.add_argument("--from", dest="family", choices=CONVERT_FAMILIES, required=True)
    p.add_argument("--source-dataset", default="source")
    p.add_argument("--language", default="en")
    p.add_argument("--license", default="CC-BY-4.0")
    p.add_argument("--date-download", help="YYYY-MM-DD (default: today)")
    p.add_argument("--first-doc-id", type=int, default=0, help="doc_id of the first record without one")
    p.add_argument("--template", help="image-text pair template with {image} and {text}")
    p.add_argument("--no-localize", dest="localize", action="store_false", help="keep image references as they are")

    p = add("render", "render overall images with an external command", cmd_render)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--root", help="dataset root for images (default: output directory)")
    p.add_argument("--command", help="renderer command with {input} and {output} placeholders")
    p.add_argument("--timeout", type=float, help="seconds per render")
    p.add_argument("--force", action="store_true", help="re-render entries with source overall images")
    p.add_argument("--failures", help="write failure records as JSONL to this file")

    p = add("stats", "subset statistics and image/token joint distribution", cmd_stats)
    p.add_argument("inputs", nargs="+", help="subsets as PATH or NAME=PATH")
    p.add_argument("--format", choices=REPORT_FORMATS, default="csv")
    p.add_argument("--output", help="report file (default: stdout)")
    p.add_argument("--sample", type=int, help="reservoir sample size per subset")
    p.add_argument("--seed", type=int, help="sampling seed")
    p.add_argument("--itif", choices=("count", "normalized"))
    p.add_argument("--weighted", action="store_true", help="doc-weighted averages in the total row")
    p.add_argument("--tokenizer", help="tokenizer for entries without stored signals")
    p.add_argument("--compute-missing", action="store_true", help="compute signals that are not stored")

    p = add("partition", "split a dataset into partNN directories", cmd_partition)
    p.add_argument("input")
    p.add_argument("root")
    p.add_argument("--max-per-part", type=int)
    p.add_argument("--source-root", help="directory image paths are relative to (default: input directory)")

    p = add("assemble", "serialize documents as [BOD][BOP]...[EOP][EOD] sequences", cmd_assemble)
    p.add_argument("input")
    p.add_argument("output")

    return parser


def setup_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s: %(message)s", stream=sys.stderr, force=True)


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    if not getattr(args, "handler", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    setup_logging(args)

    from src.config import load_config

    try:
        config = load_config(args.config)
        if args.jobs is not None:
            config = config.override("run", jobs=args.jobs)
        return args.handler(args, config)
    except PinError as e:
        logger.error("%s", e)
        return e.exit_code
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_IO
    except KeyboardInterrupt:
        print("\n\n  Cancelled.", file=sys.stderr)
        return EXIT_CANCELLED


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
