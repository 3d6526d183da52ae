"""
Overall-image rendering.

Markdown becomes a deterministic GFM-styled HTML document; rasterization is handed to an
external command with {input} and {output} placeholders, e.g.

    chromium --headless --screenshot={output} {input}
"""
import html
import logging
import shlex
import shutil
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from pathlib import Path

import markdown
from PIL import Image, UnidentifiedImageError

from src.errors import ConfigError
from src.model import OVERALL_IMAGE_DIR

logger = logging.getLogger(__name__)

THEME_GFM_LIGHT = "gfm-light"
OUTPUT_PNG = "png"
DEFAULT_TIMEOUT = 60
MAX_WORKERS = 4
MIN_OUTPUT_BYTES = 8  # PNG signature length

NONZERO_EXIT = "NONZERO_EXIT"
TIMEOUT = "TIMEOUT"
MISSING_OUTPUT = "MISSING_OUTPUT"
EMPTY_OUTPUT = "EMPTY_OUTPUT"
INVALID_OUTPUT = "INVALID_OUTPUT"
EMPTY_MD = "EMPTY_MD"
LAUNCH_FAILED = "LAUNCH_FAILED"

MARKDOWN_EXTENSIONS = ["extra", "sane_lists"]

GFM_LIGHT_CSS = """
body { box-sizing: border-box; max-width: 980px; margin: 0 auto; padding: 45px;
  color: #1f2328; background-color: #ffffff;
  font-family: -apple-system, "Segoe UI", "Noto Sans", Helvetica, Arial, sans-serif;
  font-size: 16px; line-height: 1.5; word-wrap: break-word; }
h1, h2 { padding-bottom: .3em; border-bottom: 1px solid #d1d9e0; }
h1 { font-size: 2em; } h2 { font-size: 1.5em; } h3 { font-size: 1.25em; }
h1, h2, h3, h4, h5, h6 { margin-top: 24px; margin-bottom: 16px; font-weight: 600; line-height: 1.25; }
p, ul, ol, table, pre, blockquote { margin-top: 0; margin-bottom: 16px; }
a { color: #0969da; text-decoration: none; }
code, pre { font-family: ui-monospace, SFMono-Regular, Menlo, Consolas, monospace; font-size: 85%; }
code { padding: .2em .4em; background-color: #eff1f3; border-radius: 6px; }
pre { padding: 16px; overflow: auto; line-height: 1.45; background-color: #f6f8fa; border-radius: 6px; }
pre code { padding: 0; background: transparent; }
blockquote { padding: 0 1em; color: #59636e; border-left: .25em solid #d1d9e0; }
table { border-spacing: 0; border-collapse: collapse; }
table th, table td { padding: 6px 13px; border: 1px solid #d1d9e0; }
table tr:nth-child(2n) { background-color: #f6f8fa; }
img { max-width: 100%; box-sizing: content-box; }
""".strip()

THEMES = {THEME_GFM_LIGHT: GFM_LIGHT_CSS}


def markdown_to_html(md, theme=THEME_GFM_LIGHT, base_href=None):
    if theme not in THEMES:
        raise ConfigError(f"unknown theme '{theme}' (available: {', '.join(THEMES)})")
    body = markdown.markdown(md, extensions=MARKDOWN_EXTENSIONS, output_format="html")
    base = f'<base href="{html.escape(base_href, quote=True)}">\n' if base_href else ""
    return (
        "<!DOCTYPE html>\n"
        "<html>\n<head>\n"
        '<meta charset="utf-8">\n'
        f"{base}"
        f"<style>\n{THEMES[theme]}\n</style>\n"
        "</head>\n"
        '<body class="markdown-body">\n'
        f"{body}\n"
        "</body>\n</html>\n"
    )


@dataclass(frozen=True)
class RendererConfig:
    command: str
    output_format: str = OUTPUT_PNG
    timeout: float = DEFAULT_TIMEOUT
    theme: str = THEME_GFM_LIGHT

    def __post_init__(self):
        for placeholder in ("{input}", "{output}"):
            if placeholder not in self.command:
                raise ConfigError(f"renderer command is missing the {placeholder} placeholder")
        if self.output_format != OUTPUT_PNG:
            raise ConfigError(f"unsupported renderer output format '{self.output_format}'")
        if self.timeout <= 0:
            raise ConfigError(f"renderer timeout must be positive, got {self.timeout}")
        if self.theme not in THEMES:
            raise ConfigError(f"unknown theme '{self.theme}'")

    def argv(self, input_path, output_path):
        return [
            arg.replace("{input}", str(input_path)).replace("{output}", str(output_path))
            for arg in shlex.split(self.command)
        ]


@dataclass
class RenderFailure:
    entry_id: int
    doc_id: object
    page_id: object
    code: str
    message: str
    stdout: str = ""
    stderr: str = ""

    def to_dict(self):
        return {
            "id": self.entry_id,
            "doc_id": self.doc_id,
            "page_id": self.page_id,
            "code": self.code,
            "message": self.message,
            "stdout": self.stdout,
            "stderr": self.stderr,
        }


@dataclass
class RenderResult:
    entry: object
    failure: RenderFailure | None = None
    skipped: bool = False

    @property
    def ok(self):
        return self.failure is None


def overall_image_name(entry):
    doc_id = entry.meta.doc_id
    name = doc_id if entry.meta.page_id is None else f"{doc_id}-{entry.meta.page_id}"
    return f"{OVERALL_IMAGE_DIR}/{name}.png"


def _check_output(path):
    if not path.exists():
        return MISSING_OUTPUT, f"renderer did not produce {path.name}"
    size = path.stat().st_size
    if size < MIN_OUTPUT_BYTES:
        return EMPTY_OUTPUT, f"renderer output is {size} bytes"
    try:
        with Image.open(path) as image:
            image.verify()
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        return INVALID_OUTPUT, f"renderer output is not a readable image: {e}"
    return None, None


def render_overall_image(entry, cfg, root, force=False, dry_run=False):
    """Render one entry. Failures come back as records.

    On failure an entry that already has an overall image keeps it unchanged; any
    other entry is returned as-is apart from oi_exist=False.
    """
    root = Path(root)

    def fail(code, message, stdout="", stderr=""):
        logger.warning("Render of entry %s failed: %s (%s)", entry.id, code, message)
        failure = RenderFailure(entry.id, entry.meta.doc_id, entry.meta.page_id, code, message, stdout, stderr)
        if entry.meta.oi_exist and entry.overall_image:
            return RenderResult(entry, failure)
        return RenderResult(replace(entry, meta=replace(entry.meta, oi_exist=False)), failure)

    if entry.meta.oi_source == "ori" and entry.meta.oi_exist and not force:
        return RenderResult(entry, skipped=True)
    if not entry.md:
        return fail(EMPTY_MD, "entry has no markdown to render")

    target_name = overall_image_name(entry)
    if dry_run:
        logger.info("Would render entry %s to %s", entry.id, target_name)
        return RenderResult(entry, skipped=True)
    page = markdown_to_html(entry.md, cfg.theme, base_href=root.resolve().as_uri() + "/")

    with tempfile.TemporaryDirectory(prefix="pin-render-") as tmp:
        input_path = Path(tmp) / "page.html"
        output_path = Path(tmp) / f"page.{cfg.output_format}"
        input_path.write_text(page, encoding="utf-8")
        argv = cfg.argv(input_path, output_path)
        logger.debug("Rendering entry %s: %s", entry.id, argv)

        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=cfg.timeout)
        except subprocess.TimeoutExpired as e:
            return fail(TIMEOUT, f"renderer exceeded {cfg.timeout}s", _text(e.stdout), _text(e.stderr))
        except OSError as e:
            return fail(LAUNCH_FAILED, f"cannot start renderer: {e}")

        if proc.returncode != 0:
            return fail(NONZERO_EXIT, f"renderer exited with {proc.returncode}", proc.stdout, proc.stderr)
        code, message = _check_output(output_path)
        if code:
            return fail(code, message, proc.stdout, proc.stderr)

        target = root / target_name
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.move(str(output_path), target)

    meta = replace(entry.meta, oi_exist=True, oi_source="compiling")
    return RenderResult(replace(entry, meta=meta, overall_image=[target_name], overall_image_single=False))


def _text(value):
    if isinstance(value, bytes):
        return value.decode("utf-8", errors="replace")
    return value or ""


def render_batch(entries, cfg, root, jobs=MAX_WORKERS, force=False, dry_run=False, on_done=None):
    """Render entries in parallel; results come back in input order."""
    entries = list(entries)
    results = [None] * len(entries)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        futures = {
            executor.submit(render_overall_image, entry, cfg, root, force, dry_run): i
            for i, entry in enumerate(entries)
        }
        for future in as_completed(futures):
            i = futures[future]
            try:
                results[i] = future.result()
            except Exception as e:
                logger.error("Render of entry %s crashed: %s", entries[i].id, e)
                failure = RenderFailure(entries[i].id, entries[i].meta.doc_id, entries[i].meta.page_id, LAUNCH_FAILED, str(e))
                results[i] = RenderResult(entries[i], failure)
            if on_done:
                on_done(results[i])
    return results
