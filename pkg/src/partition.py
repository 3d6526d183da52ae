import json
import logging
import re
import shutil
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path, PurePosixPath

import more_itertools

from src.errors import EnvironmentIOError, UsageError
from src.jsonl_io import write_jsonl
from src.modal import ImageRef, parse_modal_sequence, serialize_modal_sequence
from src.model import CONTENT_IMAGE_DIR, OVERALL_IMAGE_DIR

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
MAX_WORKERS = 4


@dataclass
class PartInfo:
    name: str
    jsonl_path: str
    content_image_dir: str
    overall_image_dir: str
    entry_count: int
    complete: bool = False


@dataclass
class PartitionManifest:
    parts: list = field(default_factory=list)
    tokenizer: str | None = None

    @property
    def total_entries(self):
        return sum(p.entry_count for p in self.parts)

    def to_dict(self):
        return {"tokenizer": self.tokenizer, "parts": [asdict(p) for p in self.parts]}

    @classmethod
    def from_dict(cls, data):
        return cls(parts=[PartInfo(**p) for p in data.get("parts", [])], tokenizer=data.get("tokenizer"))

    def save(self, root):
        path = Path(root) / MANIFEST_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
            f.write("\n")


def load_manifest(root):
    with open(Path(root) / MANIFEST_FILE, "r", encoding="utf-8") as f:
        return PartitionManifest.from_dict(json.load(f))


def part_name(index):
    return f"part{index:02d}"


def _part_key(path):
    match = re.search(r"(\d+)", path.parent.name)
    return (int(match.group(1)) if match else -1, str(path))


def dataset_files(root):
    """JSONL files of a dataset: manifest parts, partNN/ directories, or a flat layout."""
    root = Path(root)
    if root.is_file():
        return [root]
    if (root / MANIFEST_FILE).exists():
        return [root / part.jsonl_path for part in load_manifest(root).parts]
    parts = sorted(root.glob("part*/part*.jsonl"), key=_part_key)
    return parts or sorted(root.glob("*.jsonl"))


def _strip_dot(path):
    return path[2:] if path.startswith("./") else path


def _local_path(path, directory, taken):
    """Destination under directory; a name already used by another source gets a -N suffix."""
    source = _strip_dot(path)
    prefix = directory + "/"
    desired = PurePosixPath(source if source.startswith(prefix) else prefix + PurePosixPath(source).name)
    candidate, n = str(desired), 1
    while taken.get(candidate, source) != source:
        candidate = str(desired.with_name(f"{desired.stem}-{n}{desired.suffix}"))
        n += 1
    taken[candidate] = source
    return candidate


def relocate_entry(entry, taken=None):
    """Rewrite image paths to live under the part's own image directories.

    taken maps destination paths already used in the part to their source path, and
    is updated in place. Returns the rewritten entry and the (source, destination)
    relative paths to copy.
    """
    taken = {} if taken is None else taken
    mapping = {}
    for path in entry.content_image:
        mapping[path] = _local_path(path, CONTENT_IMAGE_DIR, taken)
    for path in entry.overall_image:
        if path not in mapping:
            mapping[path] = _local_path(path, OVERALL_IMAGE_DIR, taken)
    copies = [(src, dst) for src, dst in mapping.items()]

    if all(src == dst for src, dst in copies):
        return entry, copies

    seq = parse_modal_sequence(entry.md)
    units = tuple(
        u.with_path(mapping[u.path]) if isinstance(u, ImageRef) and u.path in mapping else u
        for u in seq.units
    )
    relocated = replace(
        entry,
        md=serialize_modal_sequence(replace(seq, units=units)),
        content_image=[mapping[p] for p in entry.content_image],
        overall_image=[mapping[p] for p in entry.overall_image],
    )
    return relocated, copies


def _copy_images(copies, source_root, part_dir, jobs):
    missing = 0

    def copy_one(src, dst):
        source = Path(source_root) / src
        if not source.is_file():
            return False
        target = part_dir / dst
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(source, target)
        return True

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        futures = {executor.submit(copy_one, src, dst): src for src, dst in copies}
        for future in as_completed(futures):
            if not future.result():
                missing += 1
                logger.warning("Image not found under %s: %s", source_root, futures[future])
    return missing


def partition_dataset(entries, max_per_part, root, source_root=None, jobs=MAX_WORKERS, tokenizer=None, dry_run=False):
    if max_per_part < 1:
        raise UsageError(f"max_per_part must be >= 1, got {max_per_part}")
    root = Path(root)
    manifest = PartitionManifest(tokenizer=tokenizer)

    for index, chunk in enumerate(more_itertools.chunked(entries, max_per_part)):
        name = part_name(index)
        info = PartInfo(
            name=name,
            jsonl_path=f"{name}/{name}.jsonl",
            content_image_dir=f"{name}/{CONTENT_IMAGE_DIR}",
            overall_image_dir=f"{name}/{OVERALL_IMAGE_DIR}",
            entry_count=len(chunk),
        )
        manifest.parts.append(info)
        if dry_run:
            continue

        relocated = []
        copies = []
        taken = {}
        for entry in chunk:
            entry, entry_copies = relocate_entry(entry, taken)
            relocated.append(entry)
            copies.extend(entry_copies)

        part_dir = root / name
        try:
            (part_dir / CONTENT_IMAGE_DIR).mkdir(parents=True, exist_ok=True)
            (part_dir / OVERALL_IMAGE_DIR).mkdir(parents=True, exist_ok=True)
            write_jsonl(relocated, root / info.jsonl_path)
            if source_root is not None:
                _copy_images(list(more_itertools.unique_everseen(copies)), source_root, part_dir, jobs)
        except OSError as e:
            manifest.save(root)
            raise EnvironmentIOError(f"failed writing {name}: {e}") from e
        info.complete = True
        logger.info("Wrote %s (%d entries)", name, len(chunk))

    if not dry_run:
        manifest.save(root)
    return manifest
