"""Quality signals over PIN entries, with pluggable tokenizers."""
import functools
import hashlib
import logging
from dataclasses import replace
from pathlib import Path

from src.errors import ConfigError, EnvironmentIOError
from src.modal import SEGMENT_IMAGE, ImageRef, ModalSequence, compute_markup_stats, parse_modal_sequence
from src.model import QualitySignals

logger = logging.getLogger(__name__)

WHITESPACE = "whitespace"
VOCAB_PREFIX = "vocab:"
DEFAULT_TOKENIZER = WHITESPACE


class WhitespaceTokenizer:
    identity = WHITESPACE

    def tokenize(self, text):
        return text.split()

    def count(self, text):
        return len(text.split())


class VocabularyTokenizer:
    """Greedy longest-match over a one-token-per-line vocabulary, single-character fallback.

    Matching runs inside whitespace-separated words.
    """

    def __init__(self, vocab_path):
        path = Path(vocab_path)
        try:
            raw = path.read_bytes()
        except OSError as e:
            raise EnvironmentIOError(f"cannot read vocabulary {path}: {e}") from e
        try:
            lines = raw.decode("utf-8").splitlines()
        except UnicodeDecodeError as e:
            raise ConfigError(f"vocabulary {path} is not UTF-8: {e}") from e

        tokens = [line for line in lines if line]
        if not tokens:
            raise ConfigError(f"vocabulary {path} is empty")
        self.vocab = frozenset(tokens)
        self.max_len = max(len(t) for t in tokens)
        self.identity = f"{VOCAB_PREFIX}{path.name}:{hashlib.sha256(raw).hexdigest()[:12]}"

    def tokenize(self, text):
        tokens = []
        for word in text.split():
            start, n = 0, len(word)
            while start < n:
                for end in range(min(n, start + self.max_len), start + 1, -1):
                    if word[start:end] in self.vocab:
                        break
                else:
                    end = start + 1
                tokens.append(word[start:end])
                start = end
        return tokens

    def count(self, text):
        return len(self.tokenize(text))


@functools.lru_cache(maxsize=8)
def load_tokenizer(spec=DEFAULT_TOKENIZER):
    """'whitespace' or 'vocab:<path>'."""
    if spec == WHITESPACE:
        return WhitespaceTokenizer()
    if spec.startswith(VOCAB_PREFIX):
        return VocabularyTokenizer(spec[len(VOCAB_PREFIX):])
    raise ConfigError(f"unknown tokenizer spec '{spec}' (expected '{WHITESPACE}' or '{VOCAB_PREFIX}<path>')")


def tokenize(tok, text):
    return tok.tokenize(text)


def _kinds(seq):
    if isinstance(seq, ModalSequence):
        return seq.kinds()
    if isinstance(seq, str):
        return seq
    return "".join("I" if isinstance(u, ImageRef) else "T" for u in seq)


def itif_count(seq):
    """Number of adjacent modality changes; the stored image_text_interleaving_count."""
    kinds = _kinds(seq)
    return sum(1 for a, b in zip(kinds, kinds[1:]) if a != b)


def itif_normalized(seq):
    kinds = _kinds(seq)
    if len(kinds) <= 1:
        return 0.0
    return itif_count(kinds) / (len(kinds) - 1)


def text_block_count(seq):
    return _kinds(seq).count("T")


def compute_signals(entry, tok, segmentation=SEGMENT_IMAGE):
    md = entry.md
    seq = parse_modal_sequence(md, segmentation)
    blocks = seq.text_blocks()
    tbc = len(blocks)
    block_tokens = sum(tok.count(block.content) for block in blocks)
    block_chars = sum(len(block.content) for block in blocks)
    markup = compute_markup_stats(md)

    return QualitySignals(
        image_text_interleaving_count=itif_count(seq),
        text_block_count=tbc,
        total_token_count=tok.count(md),
        doc_length=len(md),
        avg_tokens_per_text_block=block_tokens / tbc if tbc else 0.0,
        avg_text_block_length=block_chars / tbc if tbc else 0.0,
        bold_char_count=markup.bold_char_count,
        italic_char_count=markup.italic_char_count,
        title_count=markup.title_count,
    )


def attach_signals(entry, tok, segmentation=SEGMENT_IMAGE):
    return replace(entry, quality_signals=compute_signals(entry, tok, segmentation).to_dict())


def signal_filter(entries, predicate, tokenizer=None, skipped=None):
    """Lazily yield entries whose signals satisfy predicate.

    Entries without stored signals are computed with tokenizer, or skipped and
    counted under skipped["missing_signals"] when no tokenizer is given.
    """
    for entry in entries:
        signals = entry.signals()
        if signals is None:
            if tokenizer is None:
                if skipped is not None:
                    skipped["missing_signals"] += 1
                logger.debug("Entry %s has no quality signals, skipped", entry.id)
                continue
            signals = compute_signals(entry, tokenizer)
        if predicate(signals):
            yield entry


def attach_signals_chunk(entries, spec=DEFAULT_TOKENIZER, segmentation=SEGMENT_IMAGE):
    """Process-pool worker; the tokenizer is rebuilt from its spec once per process."""
    tok = load_tokenizer(spec)
    return [attach_signals(entry, tok, segmentation) for entry in entries]
