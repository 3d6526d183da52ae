"""
Pipeline configuration.

Values come from, highest first: CLI flags, pin.toml (path from --config or PIN_CONFIG),
environment defaults (PIN_JOBS, PIN_TOKENIZER, also read from .env), built-in defaults.
"""
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from dotenv import load_dotenv

from src.errors import ConfigError, PaginationError
from src.fetch import FETCH_POLICIES, HTTP_RETRIES, HTTP_TIMEOUT, MAX_CONCURRENT_FETCHES, POLICY_DROP
from src.modal import SEGMENT_IMAGE, SEGMENTATIONS
from src.paginate import DEFAULT_N_IMAGE, DEFAULT_N_LINE, DEFAULT_N_TEXT, PageParams
from src.render import DEFAULT_TIMEOUT, THEME_GFM_LIGHT, RendererConfig
from src.signals import DEFAULT_TOKENIZER
from src.stats import (
    DEFAULT_IMAGE_BINS,
    DEFAULT_SAMPLE,
    DEFAULT_SEED,
    DEFAULT_TOKEN_BINS,
    ITIF_COUNT,
    ITIF_VARIANTS,
)

logger = logging.getLogger(__name__)

CONFIG_FILE = "pin.toml"
ENV_CONFIG = "PIN_CONFIG"
ENV_JOBS = "PIN_JOBS"
ENV_TOKENIZER = "PIN_TOKENIZER"

DEFAULT_MAX_PER_PART = 100_000
DEFAULT_RENDER_JOBS = 4


@dataclass
class PaginationConfig:
    n_line: int = DEFAULT_N_LINE
    n_text: int = DEFAULT_N_TEXT
    n_image: int = DEFAULT_N_IMAGE

    def params(self):
        return PageParams(self.n_line, self.n_text, self.n_image)


@dataclass
class TokenizerConfig:
    spec: str = DEFAULT_TOKENIZER
    segmentation: str = SEGMENT_IMAGE


@dataclass
class RenderConfig:
    command: str = ""
    timeout: float = DEFAULT_TIMEOUT
    theme: str = THEME_GFM_LIGHT
    jobs: int = DEFAULT_RENDER_JOBS
    force: bool = False

    def renderer(self):
        if not self.command:
            raise ConfigError("no renderer command configured ([render] command or --command)")
        return RendererConfig(command=self.command, timeout=self.timeout, theme=self.theme)


@dataclass
class PartitionConfig:
    max_per_part: int = DEFAULT_MAX_PER_PART


@dataclass
class StatsConfig:
    seed: int = DEFAULT_SEED
    sample: int = DEFAULT_SAMPLE
    itif: str = ITIF_COUNT
    weighted: bool = False
    image_bins: int = DEFAULT_IMAGE_BINS
    token_bins: int = DEFAULT_TOKEN_BINS


@dataclass
class ValidateConfig:
    strict: bool = False
    check_files: bool = False


@dataclass
class FetchConfig:
    timeout: float = HTTP_TIMEOUT
    retries: int = HTTP_RETRIES
    concurrency: int = MAX_CONCURRENT_FETCHES
    policy: str = POLICY_DROP


@dataclass
class RunConfig:
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)


@dataclass
class Config:
    pagination: PaginationConfig = field(default_factory=PaginationConfig)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    validate: ValidateConfig = field(default_factory=ValidateConfig)
    fetch: FetchConfig = field(default_factory=FetchConfig)
    run: RunConfig = field(default_factory=RunConfig)
    source: str | None = None

    def override(self, section, **values):
        """Copy with CLI values applied to one section; None values are left alone."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        updated = _build_section(type(getattr(self, section)), section, values, base=getattr(self, section))
        result = replace(self, **{section: updated})
        result.check()
        return result

    def check(self):
        try:
            self.pagination.params()
        except PaginationError as e:
            raise ConfigError(f"[pagination] {e}") from e
        p, s, f, r = self.partition, self.stats, self.fetch, self.run
        if p.max_per_part < 1:
            raise ConfigError(f"[partition] max_per_part must be >= 1, got {p.max_per_part}")
        if s.sample < 1 or s.image_bins < 1 or s.token_bins < 1:
            raise ConfigError("[stats] sample, image_bins and token_bins must be >= 1")
        if s.itif not in ITIF_VARIANTS:
            raise ConfigError(f"[stats] itif must be one of {ITIF_VARIANTS}, got '{s.itif}'")
        if self.tokenizer.segmentation not in SEGMENTATIONS:
            raise ConfigError(f"[tokenizer] segmentation must be one of {SEGMENTATIONS}")
        if f.policy not in FETCH_POLICIES:
            raise ConfigError(f"[fetch] policy must be one of {FETCH_POLICIES}, got '{f.policy}'")
        if f.retries < 1 or f.concurrency < 1 or f.timeout <= 0:
            raise ConfigError("[fetch] timeout, retries and concurrency must be positive")
        if r.jobs < 1 or self.render.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.render.timeout <= 0:
            raise ConfigError("[render] timeout must be positive")
        if self.render.command:
            self.render.renderer()


SECTIONS = {f.name: f.default_factory for f in fields(Config) if f.name != "source"}


def _coerce(section, key, expected, value):
    if expected is bool:
        if isinstance(value, bool):
            return value
    elif expected is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif expected is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif isinstance(value, str):
        return value
    raise ConfigError(f"[{section}] {key}: expected {expected.__name__}, got {value!r}")


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def _field_type(f):
    return _TYPES.get(getattr(f.type, "__name__", ""), str)


def _build_section(cls, section, values, base=None):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(unknown)}")
    coerced = {k: _coerce(section, k, _field_type(known[k]), v) for k, v in values.items()}
    return replace(base, **coerced) if base is not None else cls(**coerced)


def _env_int(name, environ):
    raw = environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got '{raw}'") from None
    return value


def load_config(path=None, environ=None):
    """Load pin.toml from path, PIN_CONFIG, or the working directory; a missing default file is fine."""
    if environ is None:
        load_dotenv()
        environ = os.environ

    explicit = path or environ.get(ENV_CONFIG)
    config_path = Path(explicit) if explicit else Path(CONFIG_FILE)

    data = {}
    if config_path.exists():
        try:
            with open(config_path, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{config_path}: {e}") from e
        except OSError as e:
            raise ConfigError(f"cannot read {config_path}: {e}") from e
        logger.debug("Loaded config from %s", config_path)
    elif explicit:
        raise ConfigError(f"config file {config_path} not found")

    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"{config_path}: unknown section(s): {', '.join(unknown)}")

    sections = {}
    for name, factory in SECTIONS.items():
        base = factory()
        if name == "run" and (jobs := _env_int(ENV_JOBS, environ)) is not None:
            base = replace(base, jobs=jobs)
        if name == "tokenizer" and environ.get(ENV_TOKENIZER):
            base = replace(base, spec=environ[ENV_TOKENIZER])
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"{config_path}: [{name}] must be a table")
        sections[name] = _build_section(type(base), name, raw, base=base)

    config = Config(**sections, source=str(config_path) if config_path.exists() else None)
    config.check()
    return config
