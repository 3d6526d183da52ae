"""Dataset and subset statistics: per-subset signal table, total row, image/token joint distribution."""
import io
import json
import logging
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from src.jsonl_io import iter_valid, read_jsonl
from src.signals import compute_signals, load_tokenizer

logger = logging.getLogger(__name__)

ITIF_COUNT = "count"
ITIF_NORMALIZED = "normalized"
ITIF_VARIANTS = (ITIF_COUNT, ITIF_NORMALIZED)

DEFAULT_SEED = 0
DEFAULT_SAMPLE = 10_000
DEFAULT_IMAGE_BINS = 20
DEFAULT_TOKEN_BINS = 20

FORMAT_CSV = "csv"
FORMAT_JSON = "json"
FORMAT_SVG = "svg-scatter"
REPORT_FORMATS = (FORMAT_CSV, FORMAT_JSON, FORMAT_SVG)

SVG_HASH_SALT = "pin-forge"


@dataclass
class SubsetStats:
    name: str
    total_docs: int = 0
    total_content_images: int = 0
    avg_images_per_doc: float = 0.0
    avg_itif: float = 0.0
    total_tokens: int = 0
    total_length: int = 0
    avg_tokens_per_text_block: float = 0.0
    avg_bold_chars: float = 0.0
    avg_italic_chars: float = 0.0
    avg_heading_count: float = 0.0


CSV_COLUMNS = tuple(f.name for f in fields(SubsetStats))
# the ITIF variant behind avg_itif, repeated on every row
CSV_HEADER = (*CSV_COLUMNS, "itif_variant")
TOTAL_FIELDS = ("total_docs", "total_content_images", "total_tokens", "total_length")
AVERAGE_FIELDS = tuple(c for c in CSV_COLUMNS[1:] if c not in TOTAL_FIELDS)


@dataclass
class SubsetAccumulator:
    """Running sums for one subset; merge() is commutative, so partial sums can be built in parallel."""
    docs: int = 0
    images: int = 0
    itif: float = 0.0
    tokens: int = 0
    length: int = 0
    tokens_per_block: float = 0.0
    bold: int = 0
    italic: int = 0
    headings: int = 0

    def add(self, images, signals, itif):
        self.docs += 1
        self.images += images
        self.itif += itif
        self.tokens += signals.total_token_count
        self.length += signals.doc_length
        self.tokens_per_block += signals.avg_tokens_per_text_block
        self.bold += signals.bold_char_count
        self.italic += signals.italic_char_count
        self.headings += signals.title_count

    def merge(self, other):
        return SubsetAccumulator(**{k: v + getattr(other, k) for k, v in asdict(self).items()})

    def result(self, name):
        n = self.docs
        if n == 0:
            return SubsetStats(name=name)
        return SubsetStats(
            name=name,
            total_docs=n,
            total_content_images=self.images,
            avg_images_per_doc=self.images / n,
            avg_itif=self.itif / n,
            total_tokens=self.tokens,
            total_length=self.length,
            avg_tokens_per_text_block=self.tokens_per_block / n,
            avg_bold_chars=self.bold / n,
            avg_italic_chars=self.italic / n,
            avg_heading_count=self.headings / n,
        )


def _entry_signals(entry, tokenizer):
    signals = entry.signals()
    if signals is None and tokenizer is not None:
        signals = compute_signals(entry, tokenizer)
    return signals


def _itif_value(entry, signals, variant):
    if variant == ITIF_COUNT:
        return signals.image_text_interleaving_count
    # normalized = changes / (units - 1); units are the text blocks plus the image references
    units = signals.text_block_count + len(entry.content_image)
    if units <= 1:
        return 0.0
    return min(1.0, signals.image_text_interleaving_count / (units - 1))


def accumulate(entries, itif=ITIF_COUNT, tokenizer=None, skipped=None):
    if itif not in ITIF_VARIANTS:
        raise ValueError(f"unknown itif variant '{itif}'")
    acc = SubsetAccumulator()
    for entry in entries:
        signals = _entry_signals(entry, tokenizer)
        if signals is None:
            if skipped is not None:
                skipped["missing_signals"] += 1
            logger.debug("Entry %s has no quality signals, not counted", entry.id)
            continue
        acc.add(len(entry.content_image), signals, _itif_value(entry, signals, itif))
    return acc


def accumulate_file(path, itif=ITIF_COUNT, tokenizer_spec=None):
    tokenizer = load_tokenizer(tokenizer_spec) if tokenizer_spec else None
    skipped = Counter()
    return accumulate(iter_valid(read_jsonl(path)), itif, tokenizer, skipped), skipped


def accumulate_files(paths, itif=ITIF_COUNT, tokenizer_spec=None, jobs=1):
    """Per-file partial sums, merged; files run in parallel processes when jobs > 1."""
    paths = [str(p) for p in paths]
    total, skipped = SubsetAccumulator(), Counter()
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            parts = list(executor.map(accumulate_file, paths, [itif] * len(paths), [tokenizer_spec] * len(paths)))
    else:
        parts = [accumulate_file(p, itif, tokenizer_spec) for p in paths]
    for acc, missing in parts:
        total = total.merge(acc)
        skipped.update(missing)
    return total, skipped


def aggregate_subset(entries, name="subset", itif=ITIF_COUNT, tokenizer=None, skipped=None):
    """Single-pass aggregation; entries without stored signals are computed with tokenizer, else skipped."""
    return accumulate(entries, itif, tokenizer, skipped).result(name)


def aggregate_total(subsets, name="total", weighted=False):
    """Totals are summed. Averages are the plain mean of subset averages, or doc-weighted with weighted=True."""
    subsets = list(subsets)
    if not subsets:
        raise ValueError("aggregate_total needs at least one subset")

    total = SubsetStats(name=name)
    for column in TOTAL_FIELDS:
        setattr(total, column, sum(getattr(s, column) for s in subsets))

    docs = total.total_docs
    for column in AVERAGE_FIELDS:
        values = [getattr(s, column) for s in subsets]
        if weighted:
            value = sum(v * s.total_docs for v, s in zip(values, subsets)) / docs if docs else 0.0
        else:
            value = sum(values) / len(values)
        setattr(total, column, value)
    return total


# ---------------------------------------------------------------- joint distribution

@dataclass(frozen=True)
class BinSpec:
    image_bins: int = DEFAULT_IMAGE_BINS
    token_bins: int = DEFAULT_TOKEN_BINS
    image_range: tuple | None = None
    token_range: tuple | None = None

    def __post_init__(self):
        if self.image_bins < 1 or self.token_bins < 1:
            raise ValueError("bin counts must be positive")
        for r in (self.image_range, self.token_range):
            if r is not None and not r[0] < r[1]:
                raise ValueError(f"invalid bin range {r}")


@dataclass
class JointDistribution:
    counts: list
    image_edges: list
    token_edges: list
    sample_size: int
    seed: int = DEFAULT_SEED

    def to_dict(self):
        return asdict(self)


def reservoir_sample(items, k, seed=DEFAULT_SEED):
    rng = random.Random(seed)
    sample = []
    for i, item in enumerate(items):
        if i < k:
            sample.append(item)
        else:
            j = rng.randint(0, i)
            if j < k:
                sample[j] = item
    return sample


def _axis_range(values, fixed):
    if fixed is not None:
        return fixed
    lo, hi = float(min(values)), float(max(values))
    return (lo, hi) if hi > lo else (lo, lo + 1.0)


def joint_distribution(entries, sample_n=DEFAULT_SAMPLE, bins=None, seed=DEFAULT_SEED, tokenizer=None):
    """Histogram of (content images, tokens) per doc over a seeded reservoir sample."""
    bins = bins or BinSpec()

    def points():
        for entry in entries:
            signals = _entry_signals(entry, tokenizer)
            if signals is not None:
                yield len(entry.content_image), signals.total_token_count

    sample = reservoir_sample(points(), sample_n, seed)
    if not sample:
        return JointDistribution(
            counts=[[0] * bins.token_bins for _ in range(bins.image_bins)],
            image_edges=np.linspace(0, 1, bins.image_bins + 1).tolist(),
            token_edges=np.linspace(0, 1, bins.token_bins + 1).tolist(),
            sample_size=0,
            seed=seed,
        )

    images = np.array([p[0] for p in sample], dtype=float)
    tokens = np.array([p[1] for p in sample], dtype=float)
    image_range = _axis_range(images, bins.image_range)
    token_range = _axis_range(tokens, bins.token_range)
    counts, image_edges, token_edges = np.histogram2d(
        np.clip(images, *image_range),
        np.clip(tokens, *token_range),
        bins=[bins.image_bins, bins.token_bins],
        range=[image_range, token_range],
    )
    return JointDistribution(
        counts=counts.astype(int).tolist(),
        image_edges=image_edges.tolist(),
        token_edges=token_edges.tolist(),
        sample_size=len(sample),
        seed=seed,
    )


# ---------------------------------------------------------------- reports

@dataclass
class StatsReport:
    subsets: list = field(default_factory=list)
    total: SubsetStats | None = None
    joint: dict = field(default_factory=dict)
    itif_variant: str = ITIF_COUNT
    weighted: bool = False

    def rows(self):
        rows = list(self.subsets)
        if self.total is not None:
            rows.append(self.total)
        return rows

    def to_dict(self):
        return {
            "itif_variant": self.itif_variant,
            "weighted_total": self.weighted,
            "subsets": [asdict(s) for s in self.subsets],
            "total": asdict(self.total) if self.total is not None else None,
            "joint_distribution": {name: j.to_dict() for name, j in self.joint.items()},
        }


def _to_csv(report):
    frame = pd.DataFrame([asdict(s) for s in report.rows()], columns=list(CSV_COLUMNS))
    frame["itif_variant"] = report.itif_variant
    return frame.to_csv(index=False, columns=list(CSV_HEADER), lineterminator="\n").encode("utf-8")


def _to_svg(report):
    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    names = sorted(report.joint)
    fig, axes = plt.subplots(1, max(1, len(names)), figsize=(5 * max(1, len(names)), 4), squeeze=False)
    if not names:
        axes[0][0].text(0.5, 0.5, "no samples", ha="center", va="center")
        axes[0][0].set_axis_off()
    for ax, name in zip(axes[0], names):
        dist = report.joint[name]
        frame = pd.DataFrame(
            dist.counts,
            index=[f"{e:.0f}" for e in dist.image_edges[:-1]],
            columns=[f"{e:.0f}" for e in dist.token_edges[:-1]],
        )
        sns.heatmap(frame, ax=ax, cmap="viridis", cbar=True)
        ax.invert_yaxis()
        ax.set_title(f"{name} (n={dist.sample_size})")
        ax.set_xlabel("tokens per doc")
        ax.set_ylabel("content images per doc")
    fig.tight_layout()

    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def emit_report(report, fmt=FORMAT_CSV):
    if fmt == FORMAT_CSV:
        return _to_csv(report)
    if fmt == FORMAT_JSON:
        return (json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n").encode("utf-8")
    if fmt == FORMAT_SVG:
        return _to_svg(report)
    raise ValueError(f"unknown report format '{fmt}' (expected one of {', '.join(REPORT_FORMATS)})")
