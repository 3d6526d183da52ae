import io
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace
from pathlib import Path
from urllib.parse import urlparse

import requests
from PIL import Image, UnidentifiedImageError
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from src.errors import FetchError
from src.modal import ImageRef, TextBlock, parse_modal_sequence, serialize_modal_sequence
from src.model import CONTENT_IMAGE_DIR, OVERALL_IMAGE_DIR

logger = logging.getLogger(__name__)

POLICY_DROP = "drop"
POLICY_KEEP_TEXT = "keep-text"
POLICY_FAIL = "fail"
FETCH_POLICIES = (POLICY_DROP, POLICY_KEEP_TEXT, POLICY_FAIL)

HTTP_TIMEOUT = 30
HTTP_RETRIES = 3
MAX_CONCURRENT_FETCHES = 8
FALLBACK_EXTENSION = "png"

_FORMAT_EXTENSIONS = {"JPEG": "jpg", "PNG": "png", "GIF": "gif", "WEBP": "webp", "BMP": "bmp", "TIFF": "tiff"}


class LocalFetcher:
    def __init__(self, base_dir="."):
        self.base_dir = Path(base_dir)

    def fetch(self, ref):
        path = Path(ref[len("file://"):] if ref.startswith("file://") else ref)
        if not path.is_absolute():
            path = self.base_dir / path
        try:
            return path.read_bytes()
        except OSError as e:
            raise FetchError(f"cannot read {path}: {e}", code="FETCH_FAILED") from e


class HttpFetcher:
    def __init__(self, timeout=HTTP_TIMEOUT, retries=HTTP_RETRIES):
        self.timeout = timeout
        self.retries = retries
        self.session = requests.Session()

    def _get(self, url):
        response = self.session.get(url, timeout=self.timeout)
        response.raise_for_status()
        return response.content

    def fetch(self, url):
        retrying = Retrying(
            stop=stop_after_attempt(self.retries),
            wait=wait_exponential(multiplier=2, min=2, max=16),
            retry=retry_if_exception_type(requests.RequestException),
            reraise=True,
        )
        try:
            return retrying(self._get, url)
        except requests.RequestException as e:
            raise FetchError(f"cannot fetch {url}: {e}", code="FETCH_FAILED") from e


class DefaultFetcher:
    """HTTP(S) URLs go to HttpFetcher, everything else to LocalFetcher."""

    def __init__(self, base_dir=".", timeout=HTTP_TIMEOUT, retries=HTTP_RETRIES):
        self.local = LocalFetcher(base_dir)
        self.http = HttpFetcher(timeout, retries)

    def fetch(self, ref):
        if urlparse(ref).scheme in ("http", "https"):
            return self.http.fetch(ref)
        return self.local.fetch(ref)


def sniff_extension(data):
    try:
        with Image.open(io.BytesIO(data)) as image:
            return _FORMAT_EXTENSIONS.get(image.format, FALLBACK_EXTENSION)
    except (UnidentifiedImageError, OSError):
        return FALLBACK_EXTENSION


def _fetch_all(fetcher, sources, concurrency):
    results = {}
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as executor:
        futures = {executor.submit(fetcher.fetch, source): key for key, source in sources.items()}
        for future in as_completed(futures):
            key = futures[future]
            try:
                results[key] = future.result()
            except Exception as e:
                results[key] = e
    return results


def localize_images(entry, fetcher, root, policy=POLICY_DROP, concurrency=MAX_CONCURRENT_FETCHES, dry_run=False):
    """Copy external images under root/content_image/ as <doc_id>-<ordinal>.<ext> and rewrite md."""
    if policy not in FETCH_POLICIES:
        raise ValueError(f"unknown fetch policy: {policy}")
    root = Path(root)
    doc_id = entry.meta.doc_id
    seq = parse_modal_sequence(entry.md)
    prefix = CONTENT_IMAGE_DIR + "/"

    sources = {}
    refs = [u for u in seq.units if isinstance(u, ImageRef)]
    for ordinal, ref in enumerate(refs):
        if ref.path in entry.image_sources:
            sources[("content", ordinal)] = entry.image_sources[ref.path]
        elif not ref.path.startswith(prefix):
            sources[("content", ordinal)] = ref.path
    for index, path in enumerate(entry.overall_image):
        if path in entry.image_sources:
            sources[("overall", index)] = entry.image_sources[path]

    if not sources:
        return entry

    fetched = _fetch_all(fetcher, sources, concurrency)

    def store(relative, data):
        if not dry_run:
            target = root / relative
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        return relative

    units = []
    ordinal = -1
    for unit in seq.units:
        if not isinstance(unit, ImageRef):
            units.append(unit)
            continue
        ordinal += 1
        key = ("content", ordinal)
        if key not in fetched:
            units.append(unit)
            continue
        result = fetched[key]
        if not isinstance(result, Exception):
            name = f"{CONTENT_IMAGE_DIR}/{doc_id}-{ordinal}.{sniff_extension(result)}"
            units.append(unit.with_path(store(name, result)))
            continue

        logger.warning("Image %s of doc %s failed: %s", sources[key], doc_id, result)
        if policy == POLICY_FAIL:
            raise FetchError(f"doc {doc_id}: image {sources[key]} could not be fetched", code="FETCH_FAILED") from result
        if policy == POLICY_KEEP_TEXT:
            units.append(TextBlock(unit.lead + sources[key] + unit.trail))
        elif unit.lead or unit.trail:
            units.append(TextBlock(unit.lead + unit.trail))

    overall = []
    for index, path in enumerate(entry.overall_image):
        result = fetched.get(("overall", index))
        if result is None:
            overall.append(path)
        elif isinstance(result, Exception):
            logger.warning("Overall image %s of doc %s failed: %s", sources[("overall", index)], doc_id, result)
            if policy == POLICY_FAIL:
                raise FetchError(f"doc {doc_id}: overall image could not be fetched", code="FETCH_FAILED") from result
        else:
            stem = Path(path).stem
            overall.append(store(f"{OVERALL_IMAGE_DIR}/{stem}.{sniff_extension(result)}", result))

    md = serialize_modal_sequence(replace(seq, units=tuple(units)))
    content = [ref.path for ref in parse_modal_sequence(md).image_refs() if ref.path.startswith(prefix)]
    meta = entry.meta
    if not overall and meta.oi_exist:
        meta = replace(meta, oi_exist=False)
    return replace(entry, md=md, content_image=content, overall_image=overall, meta=meta, image_sources={})
